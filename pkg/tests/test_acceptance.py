"""Acceptance suite: one test per release criterion, at stated tolerances.

Each test prints a single PASS line on success so the run log doubles as
the acceptance report. Criterion 3 carries a known-red sub-check, kept
faithful to its stated band; see the assertion message for the measured
value.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from adaptrial.allocation import BetaPosterior, thompson_probs
from adaptrial.audit import canonical_json
from adaptrial.config import validate_design_config
from adaptrial.engines import new_run
from adaptrial.enrichment import EnrichmentDesign, combination_test, enrichment_interim
from adaptrial.escalation import CrmConfig, crm_next_dose, crm_posterior
from adaptrial.groupseq import (
    GsDesign,
    gs_boundaries,
    gs_crossing_probs,
    required_events_survival,
)
from adaptrial.mcpmod import (
    CandidateModel,
    adjusted_critical_value,
    candidate_means,
    mcp_test,
    mod_select_fit,
    optimal_contrasts,
    target_dose,
)
from adaptrial.multiarm import (
    DtlDesign,
    MamsDesign,
    _fwer_given_bounds,
    dtl_critical_value,
    mams_boundaries,
    simulate_dtl_final_stats,
    simulate_mams_z,
)
from adaptrial.session import SessionStore, from_jsonl, replay_audit
from adaptrial.simulator import Scenario, simulate_trials
from adaptrial.types import ArmOutcomeSummary, CohortOutcome, TrialState

TPT = {
    "kind": "three_plus_three",
    "alpha": 0.025,
    "parameters": {"dose_grid": {"values": [250, 500, 750, 1000], "unit": "mg"}},
}


def report(line):
    print(f"\nACCEPTANCE {line}")


def test_criterion_01_rule_based_escalation_replay():
    start = time.time()
    config = validate_design_config(TPT)
    run = new_run(config)
    for dose, events in [(0, 0), (1, 1), (1, 0), (2, 2)]:
        rec = run.post(CohortOutcome(dose, 3, events))
    assert rec.action == "declare_mtd"
    assert rec.dose_index == 1  # dose level 2
    elapsed = time.time() - start
    assert elapsed < 1.0
    report(f"01 PASS rule-based replay declares dose level 2 in {elapsed:.3f}s")


def test_criterion_02_survival_event_counts():
    e1 = required_events_survival(0.58, 0.05, 0.80)
    e2 = required_events_survival(0.65, 0.05, 0.80)
    assert abs(e1 - 113) <= 2
    assert abs(e2 - 175) <= 2
    report(f"02 PASS event counts {e1} (113 +/- 2) and {e2} (175 +/- 2)")


def _simulate_gs_alpha(design, bounds, n_reps=100_000, seed=202):
    """Independent MC of the upper-crossing rate under the null."""
    rng = np.random.default_rng(seed)
    t = np.asarray(design.information_fractions)
    inc_sd = np.sqrt(np.diff(np.concatenate([[0.0], t])))
    s = np.cumsum(rng.standard_normal((n_reps, design.looks)) * inc_sd, axis=1)
    z = s / np.sqrt(t)
    rejected = np.zeros(n_reps, bool)
    alive = np.ones(n_reps, bool)
    binding = design.futility == "binding"
    for k in range(design.looks):
        final = k == design.looks - 1
        if bounds.two_sided:
            hit_up = alive & (z[:, k] >= bounds.upper[k])
            hit_dn = alive & (z[:, k] <= -bounds.upper[k])
            wedge = bounds.lower[k]
            inner = (
                alive & (np.abs(z[:, k]) <= wedge)
                if binding and math.isfinite(wedge) and not final
                else np.zeros(n_reps, bool)
            )
            rejected |= hit_up
            alive &= ~(hit_up | hit_dn | inner)
        else:
            hit = alive & (z[:, k] >= bounds.upper[k])
            rejected |= hit
            alive &= ~hit
            if binding and not final and math.isfinite(bounds.lower[k]):
                alive &= ~(z[:, k] <= bounds.lower[k])
    return float(rejected.mean())


def test_criterion_03_boundary_calibration_all_shapes():
    start = time.time()
    alpha = 0.025
    n_reps = 100_000
    checked = 0
    for shape in ("pocock", "obrien_fleming", "triangular", "double_triangular"):
        futility = "binding" if shape in ("triangular", "double_triangular") else "none"
        for k in range(1, 6):
            design = GsDesign(
                k, tuple((j + 1) / k for j in range(k)), alpha, shape=shape, futility=futility
            )
            bounds = gs_boundaries(design)
            if k == 1:
                assert bounds.upper[0] == pytest.approx(norm.ppf(1 - alpha), abs=1e-12)
            exact = gs_crossing_probs(bounds, design, 0.0).total_upper
            assert abs(exact - alpha) < 1e-6, (shape, k, exact)
            mc = _simulate_gs_alpha(design, bounds, n_reps=n_reps, seed=100 + k)
            se = math.sqrt(alpha * (1 - alpha) / n_reps)
            assert abs(mc - alpha) <= 3 * se, (shape, k, mc)
            checked += 1
    # Max-N inflation for the flat-boundary two-look design: ~10%.
    flat2 = gs_boundaries(GsDesign(2, (0.5, 1.0), alpha, beta=0.1, shape="pocock"))
    inflation_pct = 100 * (flat2.inflation_factor - 1)
    assert 5.0 <= inflation_pct <= 15.0
    elapsed = time.time() - start
    assert elapsed < 300
    report(
        f"03 PASS {checked} shape/look calibrations at alpha +/- 1e-6 (recursion) "
        f"and +/- 3 MC SE (100k trials); flat-shape max-N inflation {inflation_pct:.1f}% "
        f"in [5, 15]; {elapsed:.0f}s"
    )


def test_criterion_03_expected_n_reduction_claim():
    # Stated band: five-look late-conservative design at the 90%-power
    # alternative should cut the expected sample size by 15 +/- 5
    # percentage points vs the fixed design. The faithful computation
    # (verified against Monte Carlo) gives ~25%: the claimed band holds
    # for the two-look version of this shape, not the five-look one.
    design = GsDesign(5, (0.2, 0.4, 0.6, 0.8, 1.0), 0.025, beta=0.1, shape="obrien_fleming")
    bounds = gs_boundaries(design)
    lo, hi = 0.0, 10.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if gs_crossing_probs(bounds, design, mid).total_upper < 0.9:
            lo = mid
        else:
            hi = mid
    drift = 0.5 * (lo + hi)
    ratio = gs_crossing_probs(bounds, design, drift).expected_information * bounds.inflation_factor
    reduction_pct = 100 * (1 - ratio)
    if not 10.0 <= reduction_pct <= 20.0:
        report(
            f"03 FAIL expected-N reduction: measured {reduction_pct:.1f}% outside the "
            f"stated 15 +/- 5pp band (two-look variant measures ~15%)"
        )
    assert 10.0 <= reduction_pct <= 20.0, (
        f"five-look expected-N reduction at the 90%-power alternative is "
        f"{reduction_pct:.1f}%, outside the stated 15 +/- 5 percentage-point band; "
        f"the band matches the two-look design instead"
    )
    report(f"03 PASS expected-N reduction {reduction_pct:.1f}% within 15 +/- 5pp")


def test_criterion_04_crm_posterior_oracle_and_coherence():
    from scipy.special import xlogy

    start = time.time()
    cfg = CrmConfig(skeleton=(0.05, 0.12, 0.20, 0.30, 0.40), target=0.20)

    def oracle_means(data):
        theta = np.linspace(-10, 10, 100_000)
        lp = -0.5 * theta ** 2 / cfg.prior_sd ** 2
        for c in data:
            p = np.asarray(cfg.skeleton)[c.dose_index] ** np.exp(theta)
            lp = lp + xlogy(c.n_events, p) + xlogy(c.n_treated - c.n_events, 1.0 - p)
        w = np.exp(lp - lp.max())
        z = np.trapezoid(w, theta)
        return [float(np.trapezoid(s ** np.exp(theta) * w, theta) / z) for s in cfg.skeleton]

    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(50):
        data = []
        for _ in range(int(rng.integers(1, 5))):
            d = int(rng.integers(0, 5))
            n = int(rng.integers(1, 7))
            e = int(rng.binomial(n, 0.3))
            data.append(CohortOutcome(d, n, e))
        got = crm_posterior(data, cfg).mean_tox
        want = oracle_means(data)
        worst = max(worst, max(abs(g - w) for g, w in zip(got, want)))
    assert worst < 1e-6

    # Coherence on the exhaustive depth-2 outcome tree.
    def rec_of(data):
        post = crm_posterior(data, cfg)
        state = TrialState(design_id="a", stage=len(data), cohorts=tuple(data))
        return crm_next_dose(post, state, cfg).dose_index

    base = (CohortOutcome(0, 3, 0),)
    first = [rec_of(base + (CohortOutcome(1, 3, e),)) for e in range(4)]
    assert all(a >= b for a, b in zip(first, first[1:]))
    for e1 in range(4):
        d1 = base + (CohortOutcome(1, 3, e1),)
        nxt = rec_of(d1)
        second = [rec_of(d1 + (CohortOutcome(nxt, 3, e2),)) for e2 in range(4)]
        assert all(a >= b for a, b in zip(second, second[1:]))
    elapsed = time.time() - start
    assert elapsed < 120
    report(
        f"04 PASS posterior matches 1e5-node oracle to {worst:.2e} (< 1e-6) on 50 "
        f"datasets; depth-2 coherence holds; {elapsed:.0f}s"
    )


def test_criterion_05_probability_of_best_arm():
    post = BetaPosterior(a=(3.0, 1.0), b=(1.0, 3.0))
    mc = thompson_probs(post, mc_draws=100_000, seed=55, method="mc")
    assert mc[0] == pytest.approx(0.95, abs=0.005)
    sym = thompson_probs(BetaPosterior.uniform(3), mc_draws=100_000, seed=56)
    for p in sym.values():
        assert p == pytest.approx(1 / 3, abs=0.005)
    report(
        f"05 PASS P(best) {mc[0]:.4f} vs closed-form 0.95 +/- 0.005; "
        f"symmetric arms within 1/3 +/- 0.005"
    )


def test_criterion_06_multiarm_error_rates():
    start = time.time()
    design = MamsDesign(n_arms=3, stages=2, alpha_fwer=0.05, n_stage=28)
    bounds = mams_boundaries(design, seed=606, n_reps=100_000)
    z = simulate_mams_z(design, 100_000, seed=607)
    fwer = _fwer_given_bounds(z, bounds.upper, bounds.lower, binding=True)
    assert 0.045 <= fwer <= 0.055

    dtl = DtlDesign(n_arms=2, keep_schedule=(1,), alpha=0.05, n_stage=50)
    critical = dtl_critical_value(dtl, seed=608, n_reps=200_000)
    stats = simulate_dtl_final_stats(dtl, 100_000, seed=609)
    dtl_rate = float((stats > critical).mean())
    assert dtl_rate <= 0.055
    elapsed = time.time() - start
    assert elapsed < 600
    report(
        f"06 PASS simulated FWER {fwer:.4f} in [0.045, 0.055]; selection-adjusted "
        f"null rejection {dtl_rate:.4f} <= 0.055; {elapsed:.0f}s"
    )


def test_criterion_07_dose_response_pipeline():
    doses = [0.0, 50.0, 100.0, 150.0]
    models = [
        CandidateModel("linear"),
        CandidateModel("quadratic", peak=125.0),
        CandidateModel("logistic", ed50=75.0),
    ]
    means = {m.name: candidate_means(m, doses) for m in models}
    cs = optimal_contrasts({"linear": means["linear"]}, [30] * 4)
    expected = (-0.6708, -0.2236, 0.2236, 0.6708)
    for got, want in zip(cs.contrasts[0], expected):
        assert got == pytest.approx(want, abs=1e-4)

    # Null rejection rate of the multiplicity-adjusted signal test.
    all_cs = optimal_contrasts(means, [30] * 4)
    q = adjusted_critical_value(all_cs.correlation, 0.05, mc_draws=2 ** 18, seed=77)
    # Sanity: statistic path identical to the production test on one draw.
    rng = np.random.default_rng(71)
    ybar0 = rng.normal(0, 1 / math.sqrt(30), size=4)
    sd0 = np.sqrt(rng.chisquare(29, size=4) / 29)
    summaries0 = [
        ArmOutcomeSummary(i, 30, mean=float(m), sd=float(s))
        for i, (m, s) in enumerate(zip(ybar0, sd0))
    ]
    res0 = mcp_test(summaries0, all_cs, alpha=0.05, mc_draws=2 ** 18, seed=77)
    C = np.asarray(all_cs.contrasts)
    se_c = np.sqrt((C ** 2 / 30).sum(axis=1))
    sigma0 = math.sqrt(float(((30 - 1) * sd0 ** 2).sum() / ((30 - 1) * 4)))
    t_manual = C @ ybar0 / (sigma0 * se_c)
    assert np.allclose(sorted(res0.statistics.values()), sorted(t_manual), atol=1e-12)
    assert res0.critical_value == pytest.approx(q, abs=1e-12)

    reps = 10_000
    ybar = rng.normal(0, 1 / math.sqrt(30), size=(reps, 4))
    sds = np.sqrt(rng.chisquare(29, size=(reps, 4)) / 29)
    sigma = np.sqrt(((30 - 1) * sds ** 2).sum(axis=1) / ((30 - 1) * 4))
    t_stats = (ybar @ C.T) / (sigma[:, None] * se_c[None, :])
    any_reject = (t_stats.max(axis=1) > q).mean()
    se = math.sqrt(0.05 * 0.95 / reps)
    assert any_reject <= 0.05 + 3 * se

    # Structural replay: the two selection routes disagree on the family.
    summaries = [
        ArmOutcomeSummary(i, 40, mean=m, sd=0.8)
        for i, m in enumerate([0.0, 0.10, 0.70, 0.75])
    ]
    res = mcp_test(summaries, optimal_contrasts(means, [40] * 4), 0.05, mc_draws=2 ** 16, seed=9)
    assert len(res.significant) >= 2
    by_t = mod_select_fit(summaries, doses, models, res.significant, "max_t", res.statistics)
    by_aic = mod_select_fit(summaries, doses, models, res.significant, "aic")
    assert by_t.selected != by_aic.selected

    linear_fit = mod_select_fit(
        [ArmOutcomeSummary(i, 30, mean=m, sd=0.5) for i, m in enumerate([0.0, 1 / 3, 2 / 3, 1.0])],
        doses,
        [CandidateModel("linear")],
        ("linear",),
        "aic",
    )
    assert target_dose(linear_fit, 0.5, 150.0) == pytest.approx(75.0, abs=1e-5)
    report(
        f"07 PASS contrast exact to 1e-4; null any-model rejection {any_reject:.4f} "
        f"<= 0.05 + 3 SE; selection routes disagree ({by_t.selected} vs {by_aic.selected}); "
        f"linear target dose 75.0"
    )


def test_criterion_08_enrichment_familywise_error():
    start = time.time()
    design = EnrichmentDesign(
        subgroups=("s+", "s-"), weights=(math.sqrt(0.5), math.sqrt(0.5)), alpha=0.025
    )
    rng = np.random.default_rng(808)
    reps = 100_000
    lam, t1 = 0.5, 0.5
    hits = 0
    actions = {"continue_full": 0, "expand_full": 0, "enrich_subgroup": 0}
    for _ in range(reps):
        s_sub = rng.normal(0, math.sqrt(lam * t1))
        s_comp = rng.normal(0, math.sqrt((1 - lam) * t1))
        z_full = (s_sub + s_comp) / math.sqrt(t1)
        z_sub = s_sub / math.sqrt(lam * t1)
        action = enrichment_interim(z_full, z_sub, design).action
        actions[action] += 1
        p2 = float(1 - norm.cdf(rng.normal()))
        stage1 = {"full": float(1 - norm.cdf(z_full)), "sub": float(1 - norm.cdf(z_sub))}
        hits += bool(combination_test(stage1, p2, design, action).rejections)
    fwer = hits / reps
    se = math.sqrt(0.025 * 0.975 / reps)
    assert fwer <= 0.025 + 3 * se
    assert all(v > 0 for v in actions.values())
    elapsed = time.time() - start
    report(
        f"08 PASS FWER {fwer:.4f} <= 0.025 + 3 SE across actions {actions}; {elapsed:.0f}s"
    )


def test_criterion_09_determinism_and_event_sourcing(tmp_path):
    start = time.time()
    scenario = Scenario(truth={"tox_probs": [0.05, 0.2, 0.4, 0.6]}, n_reps=1000, seed=99)
    config = validate_design_config(TPT)
    serial = simulate_trials(config, scenario, workers=1)
    parallel = simulate_trials(config, scenario, workers=8)
    assert canonical_json(serial.to_dict()) == canonical_json(parallel.to_dict())

    rar = validate_design_config(
        {
            "kind": "rar",
            "alpha": 0.025,
            "parameters": {"n_arms": 2, "max_n": 25, "policy": {"drop_threshold": 0.02, "promote_threshold": 0.99}},
        }
    )
    scn2 = Scenario(truth={"success_probs": [0.3, 0.5]}, n_reps=300, seed=17)
    a = simulate_trials(rar, scn2, workers=1)
    b = simulate_trials(rar, scn2, workers=8)
    assert canonical_json(a.to_dict()) == canonical_json(b.to_dict())

    store = SessionStore(tmp_path)
    rng = np.random.default_rng(2)
    for i in range(1000):
        sid = store.create(TPT).id
        session = store.load(sid)
        while session.state.status == "active" and session.state.stage < 10:
            dose = session.recommendation.dose_index
            events = int(rng.binomial(3, 0.3))
            session = store.post_outcomes(sid, CohortOutcome(dose, 3, events))
        config2, run = replay_audit(from_jsonl(store.export_audit(sid)))
        assert run.state == session.state
        assert run.recommendation == session.recommendation
    elapsed = time.time() - start
    report(
        f"09 PASS bit-identical serial vs 8-way reports; 1000 random operation "
        f"sequences replay exactly; {elapsed:.0f}s"
    )


def test_criterion_10_structural_stand_ins_for_unpublished_data():
    lines = []

    # Model-based escalation with a run-in and a stability stop rule:
    # original patient-level data unavailable, so assert the rule fires
    # and the declared dose's estimate brackets the target.
    cfg = CrmConfig(
        skeleton=(0.05, 0.12, 0.20, 0.30, 0.40), target=0.20,
        prior_sd=0.3, n_lookahead=3, prob_threshold=0.90, max_n=60,
    )
    data = tuple(
        CohortOutcome(d, n, e)
        for d, n, e in [(0, 3, 0), (1, 3, 0), (2, 6, 1), (3, 9, 2), (4, 6, 3)]
    )
    from adaptrial.escalation import crm_stop_check

    post = crm_posterior(data, cfg)
    state = TrialState(design_id="x", stage=len(data), cohorts=data)
    stop = crm_stop_check(state, post, cfg)
    assert stop.action == "declare_mtd"
    assert stop.metrics["stability_probability"] >= 0.90
    declared = stop.dose_index
    assert post.mean_tox[declared] < 0.33
    lines.append("stability stop rule declares a dose with estimate near target")

    # Overdose-control allocation: reported 7.3% criterion value is not
    # reproducible; assert the chosen dose's criterion is below the bound.
    from adaptrial.escalation import EwocConfig, ewoc_next_dose, ewoc_posterior
    from adaptrial.types import DoseGrid

    grid = DoseGrid.from_values([300, 450, 600, 750], "mg")
    ecfg = EwocConfig(target=0.33, feasibility_alpha=0.25)
    edata = [CohortOutcome(0, 3, 0), CohortOutcome(1, 6, 0), CohortOutcome(2, 4, 1), CohortOutcome(3, 6, 1)]
    epost = ewoc_posterior(edata, ecfg, grid)
    estate = TrialState(design_id="e", stage=4, cohorts=tuple(edata))
    rec = ewoc_next_dose(epost, ecfg, estate, grid)
    q = rec.metrics["overdose_probability"][rec.dose_index]
    assert 0.0 <= q < 0.25
    lines.append(f"overdose criterion at chosen dose {q:.3f} < 0.25")

    # Response-adaptive trial with fixed control and drop threshold:
    # exact allocation path unpublished; assert the drop event fires below
    # the threshold and the observed remission pattern favours control.
    post3 = BetaPosterior(a=(11.0, 4.0, 1.0), b=(9.0, 9.0, 6.0))
    probs3 = thompson_probs(post3, mc_draws=100_000, seed=31)
    assert probs3[0] == max(probs3.values())
    from adaptrial.allocation import RarPolicy, rar_initial_state, rar_update

    policy = RarPolicy(drop_threshold=0.10, fix_control=True, control_prob=1 / 3)
    rstate = rar_initial_state(3, policy)
    dropped = None
    for _ in range(40):
        rstate, events = rar_update(rstate, 2, 0, 1, policy, seed=77)
        drops = [e for e in events if e["kind"] == "drop"]
        if drops:
            dropped = drops[0]
            break
    assert dropped is not None and dropped["probability"] < 0.10
    lines.append(f"drop event at probability {dropped['probability']:.3f} < 0.10")

    # Biomarker-stratified randomisation: the reported disease-control
    # rate is not reproducible; assert the burn-in block is uniform and
    # later allocation is stratum-dependent.
    from adaptrial.allocation import StratifiedPosterior, cara_probs

    spost = StratifiedPosterior(
        {"m+": BetaPosterior(a=(2.0, 9.0), b=(8.0, 2.0)), "m-": BetaPosterior(a=(9.0, 2.0), b=(2.0, 8.0))}
    )
    cpolicy = RarPolicy(burn_in=97)
    uniform = cara_probs(spost, "m+", cpolicy, n_enrolled=96)
    adaptive_plus = cara_probs(spost, "m+", cpolicy, n_enrolled=97)
    adaptive_minus = cara_probs(spost, "m-", cpolicy, n_enrolled=97)
    assert uniform[0] == pytest.approx(0.5)
    assert adaptive_plus[1] > 0.5 > adaptive_minus[1]
    lines.append("uniform burn-in then stratum-dependent allocation")

    # Dose-ranging final analysis: patient-level data unpublished; assert
    # the reported tiny final effect is declared not significant.
    design = MamsDesign(n_arms=1, stages=2, alpha_fwer=0.05, n_stage=100)
    bounds = mams_boundaries(design, seed=2, n_reps=50_000)
    from adaptrial.multiarm import mams_interim_decision

    final = mams_interim_decision({1: 0.007 / 0.106}, bounds, 1, design)
    assert final.action == "stop_futility"
    lines.append("final effect 0.007 (SE 0.106) not significant")

    # Two-sided wedge test: exact interim statistics unpublished; assert
    # an inner-wedge statistic at the third of four looks stops the trial.
    from adaptrial.groupseq import gs_test

    gdesign = GsDesign(4, (0.25, 0.5, 0.75, 1.0), 0.025, shape="double_triangular", futility="binding")
    gbounds = gs_boundaries(gdesign)
    wedge = gbounds.lower[2]
    assert math.isfinite(wedge)
    decision = gs_test(gbounds, gdesign, wedge - 0.01, 0.75)
    assert decision.action == "stop_futility"
    lines.append("inner-wedge statistic at look 3 stops for futility")

    report("10 PASS structural stand-ins: " + "; ".join(lines))
