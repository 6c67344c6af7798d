import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from adaptrial.errors import InvalidHR, InvalidInterim, LookMismatch
from adaptrial.groupseq import (
    GsDesign,
    SsrPlan,
    boundary_table,
    conditional_power,
    gs_boundaries,
    gs_crossing_probs,
    gs_test,
    per_arm_n,
    required_events_survival,
    ssr_blinded,
    ssr_conditional_power,
)


def equal_fraction_design(k, alpha=0.025, **kw):
    return GsDesign(k, tuple((j + 1) / k for j in range(k)), alpha, **kw)


def mvn_no_crossing(upper, fractions, drift=0.0):
    """P(no upper crossing at any look) by multivariate-normal CDF."""
    k = len(fractions)
    t = np.asarray(fractions)
    cov = np.sqrt(np.minimum.outer(t, t) / np.maximum.outer(t, t))
    mean = drift * np.sqrt(t)
    return float(multivariate_normal(mean=mean, cov=cov).cdf(np.asarray(upper)))


def test_single_look_is_fixed_design():
    bounds = gs_boundaries(equal_fraction_design(1))
    assert bounds.upper[0] == pytest.approx(1.959964, abs=1e-6)
    assert bounds.inflation_factor == 1.0


def test_flat_two_look_constant_matches_mvn_oracle():
    design = equal_fraction_design(2, shape="pocock")
    bounds = gs_boundaries(design)
    # Classical two-look flat constant.
    assert bounds.upper[0] == pytest.approx(2.1783, abs=1e-3)
    alpha_oracle = 1.0 - mvn_no_crossing(bounds.upper, design.information_fractions)
    assert alpha_oracle == pytest.approx(0.025, abs=1e-4)


def test_obf_two_look_matches_mvn_oracle_and_ordering():
    design = equal_fraction_design(2, shape="obrien_fleming")
    bounds = gs_boundaries(design)
    pocock = gs_boundaries(equal_fraction_design(2, shape="pocock"))
    assert bounds.upper[0] > bounds.upper[1]
    assert bounds.upper[1] < pocock.upper[1]
    alpha_oracle = 1.0 - mvn_no_crossing(bounds.upper, design.information_fractions)
    assert alpha_oracle == pytest.approx(0.025, abs=1e-4)


def test_three_look_recursion_matches_mvn_oracle():
    for shape in ("pocock", "obrien_fleming"):
        design = equal_fraction_design(3, shape=shape)
        bounds = gs_boundaries(design)
        alpha_oracle = 1.0 - mvn_no_crossing(bounds.upper, design.information_fractions)
        assert alpha_oracle == pytest.approx(0.025, abs=2e-4), shape


def test_crossing_probabilities_sum_to_one():
    for shape in ("pocock", "obrien_fleming", "triangular", "double_triangular"):
        futility = "binding" if shape in ("triangular", "double_triangular") else "none"
        design = equal_fraction_design(3, shape=shape, futility=futility)
        bounds = gs_boundaries(design)
        for drift in (0.0, 1.0, 3.0):
            crossing = gs_crossing_probs(bounds, design, drift)
            assert crossing.total == pytest.approx(1.0, abs=1e-9)


def test_null_upper_crossing_is_alpha():
    design = equal_fraction_design(1)
    bounds = gs_boundaries(design)
    crossing = gs_crossing_probs(bounds, design, 0.0)
    assert crossing.total_upper == pytest.approx(0.025, abs=1e-9)


def test_expected_information_decreases_with_drift():
    design = equal_fraction_design(4, shape="obrien_fleming")
    bounds = gs_boundaries(design)
    e0 = gs_crossing_probs(bounds, design, 0.0).expected_information
    e3 = gs_crossing_probs(bounds, design, 3.5).expected_information
    assert e3 < e0 <= 1.0 + 1e-12


def test_inflation_ordering_flat_above_obf():
    flat = gs_boundaries(equal_fraction_design(3, shape="pocock"))
    obf = gs_boundaries(equal_fraction_design(3, shape="obrien_fleming"))
    assert flat.inflation_factor > obf.inflation_factor > 1.0


def test_binding_futility_hits_both_error_rates():
    design = equal_fraction_design(2, shape="obrien_fleming", beta=0.1, futility="binding")
    bounds = gs_boundaries(design)
    assert all(math.isfinite(b) for b in bounds.lower)
    assert bounds.lower[-1] == pytest.approx(bounds.upper[-1])
    null = gs_crossing_probs(bounds, design, 0.0)
    assert null.total_upper == pytest.approx(0.025, abs=1e-6)
    # Power at the drift implied by the inflation factor equals 1 - beta.
    drift = math.sqrt(bounds.inflation_factor) * (norm.ppf(0.975) + norm.ppf(0.9))
    alt = gs_crossing_probs(bounds, design, drift)
    assert alt.total_upper == pytest.approx(0.9, abs=1e-3)


def test_non_binding_futility_alpha_ignores_lower():
    design = equal_fraction_design(2, shape="pocock", beta=0.1, futility="non_binding")
    bounds = gs_boundaries(design)
    crossing = gs_crossing_probs(bounds, design, 0.0)
    assert crossing.total_upper == pytest.approx(0.025, abs=1e-6)


def test_triangular_wedge_closes_at_final_look():
    design = equal_fraction_design(3, shape="triangular", futility="binding")
    bounds = gs_boundaries(design)
    assert bounds.lower[-1] == pytest.approx(bounds.upper[-1])
    assert bounds.lower[0] < bounds.lower[1] < bounds.lower[2]


def test_double_triangular_simulation_matches_recursion():
    design = equal_fraction_design(3, shape="double_triangular", futility="binding")
    bounds = gs_boundaries(design)
    t = np.asarray(design.information_fractions)
    rng = np.random.default_rng(3)
    n = 200_000
    inc_sd = np.sqrt(np.diff(np.concatenate([[0.0], t])))
    s = np.cumsum(rng.standard_normal((n, 3)) * inc_sd, axis=1)
    z = s / np.sqrt(t)
    upper_cross = np.zeros(n, bool)
    alive = np.ones(n, bool)
    for k in range(3):
        final = k == 2
        wedge = bounds.lower[k]
        hit_up = alive & (z[:, k] >= bounds.upper[k])
        upper_cross |= hit_up
        hit_dn = alive & (z[:, k] <= -bounds.upper[k])
        inner = alive & (np.abs(z[:, k]) <= wedge) if math.isfinite(wedge) else np.zeros(n, bool)
        alive &= ~(hit_up | hit_dn | inner)
        if final:
            alive[:] = False
    mc = upper_cross.mean()
    se = math.sqrt(0.025 * 0.975 / n)
    assert abs(mc - 0.025) < 3 * se


def test_gs_test_decisions():
    design = equal_fraction_design(2, shape="pocock")
    bounds = gs_boundaries(design)
    up = bounds.upper[0]
    assert gs_test(bounds, design, up + 0.01, 0.5).action == "stop_efficacy"
    assert gs_test(bounds, design, up - 0.1, 0.5).action == "continue"
    assert gs_test(bounds, design, 0.3, 1.0).action == "stop_futility"
    with pytest.raises(LookMismatch):
        gs_test(bounds, design, 1.0, 0.7)


def test_gs_test_non_binding_futility_is_advisory():
    design = equal_fraction_design(2, shape="pocock", futility="non_binding")
    bounds = gs_boundaries(design)
    rec = gs_test(bounds, design, bounds.lower[0] - 0.5, 0.5)
    assert rec.action == "continue"
    assert rec.metrics["advisory_futility"] is True


def test_double_triangular_inner_wedge_stops_for_futility():
    # Replay shape: looks every ~300 patients, statistic drifting to null
    # lands in the inner wedge at the third interim.
    design = GsDesign(4, (0.25, 0.5, 0.75, 1.0), 0.025, shape="double_triangular", futility="binding")
    bounds = gs_boundaries(design)
    w3 = bounds.lower[2]
    assert math.isfinite(w3) and w3 > 0
    rec = gs_test(bounds, design, w3 - 0.05, 0.75)
    assert rec.action == "stop_futility"
    # Direction of the conclusion: benefit not demonstrated, trial ends.
    rec2 = gs_test(bounds, design, bounds.upper[2] + 0.1, 0.75)
    assert rec2.action == "stop_efficacy"


def test_boundary_table_spends_alpha_cumulatively():
    design = equal_fraction_design(3, shape="obrien_fleming")
    bounds = gs_boundaries(design)
    rows = boundary_table(design, bounds)
    spent = [r["cumulative_alpha"] for r in rows]
    assert spent == sorted(spent)
    assert spent[-1] == pytest.approx(0.025, abs=1e-6)


# ---------------------------------------------------------------------------
# Survival event counts


def test_required_events_reproduces_reported_counts():
    assert abs(required_events_survival(0.58, 0.05, 0.80) - 113) <= 2
    assert abs(required_events_survival(0.65, 0.05, 0.80) - 175) <= 2


def test_required_events_exact_formula_values():
    assert required_events_survival(0.58, 0.05, 0.80) == 112
    assert required_events_survival(0.65, 0.05, 0.80) == 175


def test_required_events_monotone_toward_one():
    events = [required_events_survival(hr, 0.05, 0.8) for hr in (0.5, 0.6, 0.7, 0.8, 0.9)]
    assert all(b > a for a, b in zip(events, events[1:]))


def test_required_events_schoenfeld_variant():
    freedman = required_events_survival(0.58, 0.05, 0.80)
    schoenfeld = required_events_survival(0.58, 0.05, 0.80, method="schoenfeld")
    assert schoenfeld != freedman
    assert abs(schoenfeld - 106) <= 1


def test_invalid_hr_rejected():
    with pytest.raises(InvalidHR):
        required_events_survival(1.0, 0.05, 0.8)
    with pytest.raises(InvalidHR):
        required_events_survival(-0.2, 0.05, 0.8)


# ---------------------------------------------------------------------------
# Sample size re-assessment


class _Design:
    alpha = 0.025
    power = 0.8


def test_blinded_ssr_self_consistent_at_planning_sd():
    plan = SsrPlan(mode="blinded_variance", delta=0.5, min_n=2, max_n=10_000, planning_sd=1.0)
    planned = per_arm_n(1.0, 0.5, 0.025, 0.8)
    out = ssr_blinded(1.0, plan, _Design())
    assert out.new_n_per_arm == planned
    assert not out.futility_cap


def test_blinded_ssr_quadruples_when_sd_doubles():
    plan = SsrPlan(mode="blinded_variance", delta=0.5, min_n=2, max_n=10_000, planning_sd=1.0)
    base = ssr_blinded(1.0, plan, _Design()).new_n_per_arm
    quadrupled = ssr_blinded(2.0, plan, _Design()).new_n_per_arm
    assert abs(quadrupled - 4 * base) <= 3


def test_blinded_ssr_cap_flags_futility():
    plan = SsrPlan(mode="blinded_variance", delta=0.5, min_n=2, max_n=100, planning_sd=1.0)
    out = ssr_blinded(3.0, plan, _Design())
    assert out.new_n_per_arm == 100
    assert out.futility_cap


def test_ssr_total_grows_with_event_requirement():
    # Events path: 113-ish at the planning hazard ratio grows to 175-ish
    # at the revised one; the randomised total scales accordingly, taking
    # a 340-patient plan past the reported 510.
    e_plan = required_events_survival(0.58, 0.05, 0.80)
    e_new = required_events_survival(0.65, 0.05, 0.80)
    assert e_new > e_plan
    total = math.ceil(340 * e_new / 113)
    assert 510 <= total <= 540


def test_conditional_power_null_trend_is_small():
    cp = conditional_power(0.0, 0.5, 0.0, 0.025)
    assert cp < 0.05


def test_conditional_power_approaches_one_near_the_end():
    cp = conditional_power(2.5, 0.99, 2.5 / math.sqrt(0.99), 0.025)
    assert cp > 0.99


def test_conditional_power_matches_simulation_oracle():
    rng = np.random.default_rng(17)
    for _ in range(8):
        z1 = float(rng.normal(1.0, 0.8))
        t1 = float(rng.uniform(0.2, 0.8))
        theta = float(rng.normal(1.5, 0.7))
        cp = conditional_power(z1, t1, theta, 0.025)
        n = 200_000
        s1 = z1 * math.sqrt(t1)
        s2 = s1 + rng.normal(theta * (1 - t1), math.sqrt(1 - t1), n)
        mc = float((s2 / 1.0 > norm.ppf(0.975)).mean())
        se = math.sqrt(max(mc * (1 - mc), 1e-6) / n)
        assert abs(cp - mc) < max(3 * se, 2e-3), (z1, t1, theta)


def test_ssr_conditional_power_finds_smallest_n():
    plan = SsrPlan(
        mode="conditional_power", delta=0.5, min_n=2, max_n=500,
        planning_sd=1.0, target_cp=0.8, interim_fraction=0.5,
    )
    out = ssr_conditional_power(1.2, 0.5, 1.8, _Design(), plan)
    assert not out.futility_cap
    n_planned = per_arm_n(1.0, 0.5, 0.025, 0.8)
    cp_at = conditional_power(1.2, 0.5, 1.8, 0.025, out.new_n_per_arm / n_planned)
    cp_below = conditional_power(1.2, 0.5, 1.8, 0.025, (out.new_n_per_arm - 1) / n_planned)
    assert cp_at >= 0.8 > cp_below


def test_ssr_conditional_power_caps_on_negative_trend():
    plan = SsrPlan(
        mode="conditional_power", delta=0.5, min_n=2, max_n=200,
        planning_sd=1.0, target_cp=0.9, interim_fraction=0.5,
    )
    out = ssr_conditional_power(-1.0, 0.5, -1.4, _Design(), plan)
    assert out.futility_cap
    assert out.new_n_per_arm == 200


def test_interim_fraction_must_be_interior():
    plan = SsrPlan(mode="conditional_power", delta=0.5, min_n=2, max_n=100, planning_sd=1.0)
    with pytest.raises(InvalidInterim):
        ssr_conditional_power(1.0, 1.0, 1.0, _Design(), plan)
    with pytest.raises(InvalidInterim):
        conditional_power(1.0, 0.0, 1.0, 0.025)


def test_gs_test_decisions_match_crossing_probabilities():
    # Drive gs_test through simulated looks; per-look stopping
    # frequencies must match the recursion within Monte-Carlo error.
    design = equal_fraction_design(3, shape="pocock", beta=0.1, futility="binding")
    bounds = gs_boundaries(design)
    drift = 2.0
    expected = gs_crossing_probs(bounds, design, drift)
    rng = np.random.default_rng(41)
    n = 100_000
    t = np.asarray(design.information_fractions)
    inc_sd = np.sqrt(np.diff(np.concatenate([[0.0], t])))
    incs = rng.standard_normal((n, 3)) * inc_sd + drift * np.diff(np.concatenate([[0.0], t]))
    z = np.cumsum(incs, axis=1) / np.sqrt(t)
    stop_eff = np.zeros(3)
    stop_fut = np.zeros(3)
    for i in range(n):
        for k in range(3):
            rec = gs_test(bounds, design, float(z[i, k]), float(t[k]))
            if rec.action == "stop_efficacy":
                stop_eff[k] += 1
                break
            if rec.action == "stop_futility":
                stop_fut[k] += 1
                break
    for k in range(3):
        for got, want in ((stop_eff[k] / n, expected.p_upper[k]), (stop_fut[k] / n, expected.p_lower[k])):
            se = math.sqrt(max(want * (1 - want), 1e-8) / n)
            assert abs(got - want) <= 4 * se, (k, got, want)
