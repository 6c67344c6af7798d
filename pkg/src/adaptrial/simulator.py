"""Monte-Carlo operating characteristics for any design family.

Every replicate drives a fresh engine run through the same ``post`` path
the live conduct service uses, with outcomes drawn from the scenario truth
on that replicate's own counter-based stream. Aggregation sums replicate
records in fixed index order (numpy pairwise summation), so the report is
bit-identical no matter how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .config import DesignConfig
from .engines import new_run
from .errors import NotMonotone
from .groupseq import GsDesign, SsrPlan, per_arm_n
from .multiarm import MamsDesign, _fwer_given_bounds, _shape_bounds, simulate_mams_z
from .rng import rng_stream
from .types import ACTIVE, STOPPED_EFFICACY, ArmOutcomeSummary, CohortOutcome

_LOOP_GUARD = 100_000


@dataclass(frozen=True)
class Scenario:
    """Truth parameters plus replication settings for one simulation."""

    truth: dict
    n_reps: int = 1000
    seed: int = 0
    accrual: float = 1.0

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            truth=dict(d.get("truth", {})),
            n_reps=int(d.get("n_reps", 1000)),
            seed=int(d.get("seed", 0)),
            accrual=float(d.get("accrual", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"truth": self.truth, "n_reps": self.n_reps, "seed": self.seed, "accrual": self.accrual}


@dataclass
class OperatingCharacteristics:
    n_reps: int
    rejection_rate: float
    rejection_se: float
    expected_n: float
    sd_n: float
    se_n: float
    max_n: int
    selection_probabilities: dict
    selection_se: dict
    no_selection_probability: float
    allocation: dict
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_reps": self.n_reps,
            "rejection_rate": self.rejection_rate,
            "rejection_se": self.rejection_se,
            "expected_n": self.expected_n,
            "sd_n": self.sd_n,
            "se_n": self.se_n,
            "max_n": self.max_n,
            "selection_probabilities": self.selection_probabilities,
            "selection_se": self.selection_se,
            "no_selection_probability": self.no_selection_probability,
            "allocation": self.allocation,
            "extras": self.extras,
        }


# ---------------------------------------------------------------------------
# Per-family replicate runners. Each returns a flat record of scalars plus
# fixed-length arrays; records are aggregated positionally by replicate id.


def _run_escalation(config: DesignConfig, truth: dict, rng) -> dict:
    probs = truth["tox_probs"]
    run = new_run(config)
    n_doses = len(probs)
    alloc = np.zeros(n_doses)
    posts = 0
    while run.state.status == ACTIVE and posts < _LOOP_GUARD:
        rec = run.recommendation
        dose = rec.dose_index
        size = run.next_cohort_size or rec.metrics.get("cohort_size", 3)
        events = int(rng.binomial(size, probs[dose]))
        run.post(CohortOutcome(dose_index=dose, n_treated=size, n_events=events))
        alloc[dose] += size
        posts += 1
    rec = run.recommendation
    selected = rec.dose_index if rec.action == "declare_mtd" else None
    return {
        "selected": selected,
        "rejected": False,
        "n_total": float(alloc.sum()),
        "allocation": alloc,
        "n_slots": n_doses,
    }


def _gsd_stage_ns(design: GsDesign) -> list[int]:
    return [int(round(t * design.n_per_arm)) for t in design.information_fractions]


def _run_gsd(config: DesignConfig, truth: dict, rng) -> dict:
    design = GsDesign.from_config(config)
    drift = float(truth.get("drift", 0.0))
    mu = drift * math.sqrt(2.0 / design.n_per_arm)
    ns = _gsd_stage_ns(design)
    sum_c = sum_t = 0.0
    n_prev = 0
    n_at_stop = 0
    run = new_run(config)
    for n_k in ns:
        dn = n_k - n_prev
        sum_c += rng.normal(0.0, math.sqrt(dn))
        sum_t += rng.normal(mu * dn, math.sqrt(dn))
        n_prev = n_k
        run.post(
            [
                ArmOutcomeSummary(0, n_k, mean=sum_c / n_k, sd=1.0),
                ArmOutcomeSummary(1, n_k, mean=sum_t / n_k, sd=1.0),
            ]
        )
        n_at_stop = n_k
        if run.state.status != ACTIVE:
            break
    rejected = run.state.status == STOPPED_EFFICACY
    return {
        "selected": 0 if rejected else None,
        "rejected": rejected,
        "n_total": float(2 * n_at_stop),
        "allocation": np.array([float(n_at_stop), float(n_at_stop)]),
        "n_slots": 2,
    }


def _run_ssr(config: DesignConfig, truth: dict, rng) -> dict:
    plan = SsrPlan.from_parameters(config.parameters)
    sigma = float(truth.get("sd", plan.planning_sd or 1.0))
    delta_true = float(truth.get("mean_diff", 0.0))
    power = config.power if config.power else 0.8
    n_planned = per_arm_n(plan.planning_sd, plan.delta, config.alpha, power)
    n1 = max(2, int(round(plan.interim_fraction * n_planned)))
    x0 = rng.normal(0.0, sigma, n1)
    x1 = rng.normal(delta_true, sigma, n1)
    run = new_run(config)
    if plan.mode == "blinded_variance":
        lumped = np.concatenate([x0, x1])
        run.post([ArmOutcomeSummary(0, 2 * n1, mean=float(lumped.mean()), sd=float(lumped.std(ddof=1)))])
    else:
        run.post(
            [
                ArmOutcomeSummary(0, n1, mean=float(x0.mean()), sd=float(x0.std(ddof=1))),
                ArmOutcomeSummary(1, n1, mean=float(x1.mean()), sd=float(x1.std(ddof=1))),
            ]
        )
    if run.state.status != ACTIVE:
        n_total = 2.0 * n1
        return {
            "selected": None,
            "rejected": False,
            "n_total": n_total,
            "allocation": np.array([float(n1), float(n1)]),
            "n_slots": 2,
        }
    n2 = max(run.recommendation.metrics["new_n_per_arm"], n1 + 1)
    y0 = np.concatenate([x0, rng.normal(0.0, sigma, n2 - n1)])
    y1 = np.concatenate([x1, rng.normal(delta_true, sigma, n2 - n1)])
    run.post(
        [
            ArmOutcomeSummary(0, n2, mean=float(y0.mean()), sd=float(y0.std(ddof=1))),
            ArmOutcomeSummary(1, n2, mean=float(y1.mean()), sd=float(y1.std(ddof=1))),
        ]
    )
    rejected = run.state.status == STOPPED_EFFICACY
    return {
        "selected": 0 if rejected else None,
        "rejected": rejected,
        "n_total": float(2 * n2),
        "allocation": np.array([float(n2), float(n2)]),
        "n_slots": 2,
    }


def _run_multiarm(config: DesignConfig, truth: dict, rng) -> dict:
    kind = config.kind
    p = config.parameters
    K = p["n_arms"]
    n_stage = p["n_stage"]
    effects = truth.get("effects", [0.0] * K)
    run = new_run(config)
    stages = p["stages"] if kind == "mams" else len(p["keep_schedule"]) + 1
    ratio = p.get("allocation_ratio", 1.0) if kind == "mams" else 1.0
    n_ctl_stage = int(round(n_stage * ratio))
    # True per-patient means chosen so a fully-accruing arm ends at its
    # target final-stage drift.
    n_final = n_stage * stages
    mus = [e * math.sqrt((1.0 / n_final + 1.0 / (n_ctl_stage * stages)) ) for e in effects]
    sums = np.zeros(K + 1)
    ns = np.zeros(K + 1, dtype=int)
    enrolled = 0.0
    for stage in range(stages):
        active = sorted(run.state.active_arms) or list(range(1, K + 1))
        ns[0] += n_ctl_stage
        sums[0] += rng.normal(0.0, math.sqrt(n_ctl_stage))
        enrolled += n_ctl_stage
        for arm in active:
            ns[arm] += n_stage
            sums[arm] += rng.normal(mus[arm - 1] * n_stage, math.sqrt(n_stage))
            enrolled += n_stage
        summaries = [ArmOutcomeSummary(0, int(ns[0]), mean=float(sums[0] / ns[0]), sd=1.0)]
        for arm in active:
            summaries.append(
                ArmOutcomeSummary(arm, int(ns[arm]), mean=float(sums[arm] / ns[arm]), sd=1.0)
            )
        run.post(summaries)
        if run.state.status != ACTIVE:
            break
    rec = run.recommendation
    rejected = run.state.status == STOPPED_EFFICACY
    selected = rec.arm_index if rejected else None
    return {
        "selected": selected,
        "rejected": rejected,
        "n_total": enrolled,
        "allocation": ns.astype(float),
        "n_slots": K + 1,
    }


def _run_rar(config: DesignConfig, truth: dict, rng) -> dict:
    probs = truth["success_probs"]
    n_arms = config.parameters["n_arms"]
    run = new_run(config)
    counts = np.zeros(n_arms)
    successes = np.zeros(n_arms)
    while run.state.status == ACTIVE and counts.sum() < _LOOP_GUARD:
        alloc = run.recommendation.metrics["probabilities"]
        arms = sorted(alloc)
        weights = np.array([alloc[a] for a in arms])
        arm = int(rng.choice(arms, p=weights / weights.sum()))
        y = int(rng.random() < probs[arm])
        counts[arm] += 1
        successes[arm] += y
        run.post(ArmOutcomeSummary(arm, 1, successes=y))
    rec = run.recommendation
    selected = rec.arm_index if rec.action == "select" else None
    with np.errstate(invalid="ignore", divide="ignore"):
        naive = np.where(counts > 0, successes / np.maximum(counts, 1), np.nan)
    bias = np.where(counts > 0, naive - np.asarray(probs), 0.0)
    return {
        "selected": selected,
        "rejected": run.state.status == STOPPED_EFFICACY,
        "n_total": float(counts.sum()),
        "allocation": counts,
        "n_slots": n_arms,
        "bias": bias,
    }


def _run_cara(config: DesignConfig, truth: dict, rng) -> dict:
    strata = config.parameters["strata"]
    stratum_probs = truth.get("stratum_probs", {s: 1.0 / len(strata) for s in strata})
    success = truth["success_probs"]  # stratum -> per-arm probabilities
    n_arms = config.parameters["n_arms"]
    run = new_run(config)
    counts = np.zeros(n_arms)
    while run.state.status == ACTIVE and counts.sum() < _LOOP_GUARD:
        lab = strata[int(rng.choice(len(strata), p=[stratum_probs[s] for s in strata]))]
        alloc = run.recommendation.metrics["probabilities_by_stratum"][lab]
        arms = sorted(alloc)
        weights = np.array([alloc[a] for a in arms])
        arm = int(rng.choice(arms, p=weights / weights.sum()))
        y = int(rng.random() < success[lab][arm])
        counts[arm] += 1
        run.post(ArmOutcomeSummary(arm, 1, successes=y, stratum=lab))
    return {
        "selected": None,
        "rejected": False,
        "n_total": float(counts.sum()),
        "allocation": counts,
        "n_slots": n_arms,
    }


def _run_mcpmod(config: DesignConfig, truth: dict, rng) -> dict:
    doses = config.parameters["doses"]
    n = config.parameters["n_per_arm"]
    means = truth["means"]
    sigma = float(truth.get("sd", 1.0))
    summaries = []
    for i, mu in enumerate(means):
        m = float(rng.normal(mu, sigma / math.sqrt(n)))
        s2 = sigma ** 2 * float(rng.chisquare(n - 1)) / (n - 1)
        summaries.append(ArmOutcomeSummary(i, n, mean=m, sd=math.sqrt(s2)))
    run = new_run(config)
    run.post(summaries)
    rec = run.recommendation
    rejected = rec.action == "select"
    extras_target = rec.metrics.get("target_dose")
    return {
        "selected": None,
        "rejected": rejected,
        "n_total": float(n * len(doses)),
        "allocation": np.full(len(doses), float(n)),
        "n_slots": len(doses),
        "target_dose": float(extras_target) if extras_target is not None else np.nan,
    }


def _run_enrichment(config: DesignConfig, truth: dict, rng) -> dict:
    p = config.parameters
    lam = p["subgroup_info_fraction"]
    t1 = p["interim_fraction"]
    sub_label = p["subgroups"][0]
    theta_sub = float(truth.get("theta_sub", 0.0))
    theta_comp = float(truth.get("theta_comp", 0.0))
    plans = p.get("actions", {})
    s_sub = rng.normal(theta_sub * lam * t1, math.sqrt(lam * t1))
    s_comp = rng.normal(theta_comp * (1 - lam) * t1, math.sqrt((1 - lam) * t1))
    z_full1 = (s_sub + s_comp) / math.sqrt(t1)
    z_sub1 = s_sub / math.sqrt(lam * t1)
    run = new_run(config)
    run.post(
        [
            ArmOutcomeSummary(0, 1, mean=float(z_full1), sd=1.0, stratum="full"),
            ArmOutcomeSummary(1, 1, mean=float(z_sub1), sd=1.0, stratum=sub_label),
        ]
    )
    action = run.recommendation.action
    plan = plans.get(action, {}) or {}
    if action == "enrich_subgroup":
        d_info = 1.0 - t1
        z2 = rng.normal(theta_sub * math.sqrt(d_info), 1.0)
        stratum = sub_label
    else:
        expand = 1.0
        if action == "expand_full":
            base = plans.get("continue_full", {}).get("events") or 0
            more = plan.get("events") or 0
            expand = (more / base) if base else 1.5
        d_info = expand - t1
        theta_full = theta_sub * lam + theta_comp * (1 - lam)
        z2 = rng.normal(theta_full * math.sqrt(d_info), 1.0)
        stratum = "full"
    run.post([ArmOutcomeSummary(0, 1, mean=float(z2), sd=1.0, stratum=stratum)])
    rejections = run.recommendation.metrics.get("rejections", [])
    n_total = float(plan.get("patients") or 0)
    return {
        "selected": None,
        "rejected": bool(rejections),
        "n_total": n_total,
        "allocation": np.zeros(1),
        "n_slots": 1,
        "action": action,
        "reject_full": float("H_full" in rejections),
        "reject_sub": float("H_sub" in rejections),
    }


_RUNNERS = {
    "three_plus_three": _run_escalation,
    "crm": _run_escalation,
    "ewoc": _run_escalation,
    "gsd": _run_gsd,
    "ssr": _run_ssr,
    "mams": _run_multiarm,
    "dtl": _run_multiarm,
    "rar": _run_rar,
    "cara": _run_cara,
    "mcpmod": _run_mcpmod,
    "enrichment": _run_enrichment,
}


def run_replicate(config: DesignConfig, scenario: Scenario, replicate: int) -> dict:
    rng = rng_stream(scenario.seed, replicate)
    return _RUNNERS[config.kind](config, scenario.truth, rng)


def simulate_trials(
    config: DesignConfig, scenario: Scenario, workers: int = 1
) -> OperatingCharacteristics:
    """Operating characteristics from n_reps full virtual trials.

    Identical (design, scenario) inputs give bit-identical reports for any
    worker count: replicate streams depend only on (seed, replicate id)
    and aggregation runs in fixed replicate order.
    """
    n = scenario.n_reps
    if workers <= 1:
        records = [run_replicate(config, scenario, i) for i in range(n)]
    else:
        chunk = max(1, math.ceil(n / (workers * 4)))
        ranges = [range(s, min(s + chunk, n)) for s in range(0, n, chunk)]

        def work(rr):
            return [run_replicate(config, scenario, i) for i in rr]

        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(work, ranges))
        records = [rec for batch in out for rec in batch]

    n_slots = records[0]["n_slots"]
    n_totals = np.array([r["n_total"] for r in records])
    rejected = np.array([1.0 if r["rejected"] else 0.0 for r in records])
    alloc = np.vstack([r["allocation"] for r in records])
    selections = [r["selected"] for r in records]

    expected_n = float(np.sum(n_totals) / n)
    var_n = float(np.sum((n_totals - expected_n) ** 2) / n)
    sd_n = math.sqrt(max(var_n, 0.0))
    rejection = float(np.sum(rejected) / n)
    sel_probs = {}
    sel_se = {}
    for slot in range(n_slots):
        hits = np.array([1.0 if s == slot else 0.0 for s in selections])
        prob = float(np.sum(hits) / n)
        sel_probs[str(slot)] = prob
        sel_se[str(slot)] = math.sqrt(prob * (1 - prob) / n)
    no_sel = float(np.sum([1.0 for s in selections if s is None]) / n) if selections else 0.0
    allocation_means = {str(i): float(np.sum(alloc[:, i]) / n) for i in range(n_slots)}

    extras: dict = {}
    if "bias" in records[0]:
        bias = np.vstack([r["bias"] for r in records])
        extras["naive_mean_bias"] = [float(np.sum(bias[:, i]) / n) for i in range(n_slots)]
    if "action" in records[0]:
        actions = [r["action"] for r in records]
        extras["action_frequencies"] = {
            a: actions.count(a) / n for a in sorted(set(actions))
        }
        extras["reject_full_rate"] = float(np.sum([r["reject_full"] for r in records]) / n)
        extras["reject_sub_rate"] = float(np.sum([r["reject_sub"] for r in records]) / n)
    if "target_dose" in records[0]:
        doses = np.array([r["target_dose"] for r in records])
        ok = doses[~np.isnan(doses)]
        extras["mean_target_dose"] = float(np.sum(ok) / len(ok)) if len(ok) else None

    return OperatingCharacteristics(
        n_reps=n,
        rejection_rate=rejection,
        rejection_se=math.sqrt(rejection * (1 - rejection) / n),
        expected_n=expected_n,
        sd_n=sd_n,
        se_n=sd_n / math.sqrt(n),
        max_n=int(np.max(n_totals)),
        selection_probabilities=sel_probs,
        selection_se=sel_se,
        no_selection_probability=no_sel,
        allocation=allocation_means,
        extras=extras,
    )


def calibrate(
    config: DesignConfig,
    knob: str,
    target: float,
    scenario_null: Scenario,
    tolerance: float = 0.002,
    lo: float = 0.0,
    hi: float = 6.0,
) -> float:
    """Bisect a scalar design knob until the simulated error hits the target.

    Uses common random numbers across iterates, so the simulated error is
    monotone (decreasing) in the knob and bisection is safe. Raises
    ``NotMonotone`` when the range does not bracket the target.
    """
    n = scenario_null.n_reps
    rng = rng_stream(scenario_null.seed, 0)
    if config.kind == "gsd" and knob == "critical_value":
        z = rng.standard_normal(n)

        def error_of(c):
            return float((z > c).mean())

    elif config.kind == "mams" and knob == "boundary_constant":
        design = MamsDesign.from_config(config)
        z = simulate_mams_z(design, n, scenario_null.seed)
        binding = design.futility == "binding"

        def error_of(c):
            upper, lower = _shape_bounds(design, c)
            return _fwer_given_bounds(z, upper, lower, binding)

    elif config.kind == "dtl" and knob == "critical_value":
        from .multiarm import DtlDesign, simulate_dtl_final_stats

        design = DtlDesign.from_config(config)
        stats = simulate_dtl_final_stats(design, n, scenario_null.seed)

        def error_of(c):
            return float((stats > c).mean())

    else:
        raise ValueError(f"no calibration knob {knob!r} for design kind {config.kind!r}")

    f_lo, f_hi = error_of(lo), error_of(hi)
    if not (f_lo >= target >= f_hi) or target <= 0:
        raise NotMonotone(
            f"target {target} not bracketed by error range [{f_hi}, {f_lo}] over knob [{lo}, {hi}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = error_of(mid)
        if abs(f - target) <= tolerance and (hi - lo) < 5e-4:
            return mid
        if f > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
