"""Continual reassessment: one-parameter power-model dose escalation.

Model: the toxicity probability at dose i is ``skeleton_i ** exp(theta)``
with a normal prior on theta. Every accumulated cohort feeds a posterior
over theta; per-dose summaries come out of deterministic numerical
quadrature (adaptive Gauss-Hermite recentred at the posterior mode, with a
dense trapezoid fallback that also supplies tail probabilities). The next
dose targets the pre-specified toxicity level, never skipping an untried
level, and the trial stops once the recommendation is stable under every
outcome of the next few patients with high predictive probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import BudgetExceeded, NumericalFailure
from ..types import CohortOutcome, Recommendation, TrialState

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(64)
_TRAPEZOID_NODES = 10_000
_TAIL_SDS = 10.0
_CROSS_CHECK_RTOL = 1e-8

CONTINUE = "continue"
DECLARE_MTD = "declare_mtd"
ALLOCATE = "allocate"


@dataclass(frozen=True)
class CrmConfig:
    skeleton: tuple[float, ...]
    target: float
    prior_sd: float = math.sqrt(1.34)
    no_skipping: bool = True
    selection: str = "closest"  # or "highest_below"
    estimator: str = "posterior_mean"  # or "plugin"
    cohort_size: int = 3
    start_dose: int = 0
    run_in: bool = False
    n_lookahead: int = 5
    prob_threshold: float = 0.90
    max_n: int = 30
    node_cap: int = 1024

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.skeleton, self.skeleton[1:])):
            raise ValueError("skeleton not strictly increasing")
        if any(not 0 < s < 1 for s in self.skeleton):
            raise ValueError("skeleton entries must lie in (0, 1)")
        if not 0 < self.target < 1:
            raise ValueError("target must lie in (0, 1)")
        if self.prior_sd <= 0:
            raise ValueError("prior_sd must be positive")

    @classmethod
    def from_parameters(cls, p: dict) -> "CrmConfig":
        stop = p["stop_rule"]
        return cls(
            skeleton=tuple(p["skeleton"]),
            target=p["target"],
            prior_sd=p["prior_sd"],
            no_skipping=p["no_skipping"],
            selection=p["selection"],
            estimator=p["estimator"],
            cohort_size=p["cohort_size"],
            start_dose=p["start_dose"],
            run_in=p["run_in"],
            n_lookahead=stop["n_lookahead"],
            prob_threshold=stop["prob_threshold"],
            max_n=stop["max_n"],
            node_cap=stop["node_cap"],
        )


@dataclass(frozen=True)
class DosePosterior:
    mean_tox: tuple[float, ...]
    sd_tox: tuple[float, ...]
    prob_exceeds_target: tuple[float, ...]
    log_evidence: float
    theta_mean: float
    theta_mode: float


def _aggregate(data) -> list[tuple[int, int, int]]:
    totals: dict[int, list[int]] = {}
    for c in data:
        t = totals.setdefault(c.dose_index, [0, 0])
        t[0] += c.n_treated
        t[1] += c.n_events
    return [(d, n, e) for d, (n, e) in sorted(totals.items())]


def _log_posterior_terms(cfg: CrmConfig, data):
    """Returns a vectorized unnormalized log-posterior over theta."""
    totals = _aggregate(data)
    log_skeleton = np.log(np.asarray(cfg.skeleton))
    var = cfg.prior_sd ** 2

    def logpost(theta):
        theta = np.asarray(theta, dtype=float)
        u = np.exp(theta)
        out = -0.5 * theta ** 2 / var
        for d, n, e in totals:
            uL = u * log_skeleton[d]
            # log p = uL;  log(1 - p) = log(-expm1(uL))
            out = out + e * uL + (n - e) * np.log(-np.expm1(uL))
        return out

    def score(theta):
        u = math.exp(theta)
        g = -theta / var
        for d, n, e in totals:
            uL = u * log_skeleton[d]
            # p/(1-p) = exp(uL) / -expm1(uL), stable for uL near 0.
            odds = math.exp(uL) / -math.expm1(uL)
            g += uL * (e - (n - e) * odds)
        return g

    return logpost, score


def _posterior_mode(logpost, score, prior_sd: float):
    """Safeguarded Newton on the score function, bracketed by bisection."""
    lo, hi = -40.0, 40.0
    if score(lo) < 0 or score(hi) > 0:  # pragma: no cover - prior precludes this
        raise NumericalFailure("posterior score has no sign change on [-40, 40]")
    theta = 0.0
    for _ in range(100):
        g = score(theta)
        if abs(g) < 1e-12:
            break
        if g > 0:
            lo = theta
        else:
            hi = theta
        h = 1e-5 * max(1.0, abs(theta))
        curv = (score(theta + h) - score(theta - h)) / (2 * h)
        step = -g / curv if curv < 0 else None
        candidate = theta + step if step is not None else None
        if candidate is None or not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - theta) < 1e-13:
            theta = candidate
            break
        theta = candidate
    # Laplace scale from numerical curvature at the mode.
    h = 1e-4
    curv = (score(theta + h) - score(theta - h)) / (2 * h)
    scale = 1.0 / math.sqrt(-curv) if curv < 0 else prior_sd
    return theta, scale


def _dose_prob_curves(cfg: CrmConfig, theta: np.ndarray) -> np.ndarray:
    """Toxicity probability per dose (rows) at each theta (columns)."""
    u = np.exp(theta)[None, :]
    log_skeleton = np.log(np.asarray(cfg.skeleton))[:, None]
    return np.exp(u * log_skeleton)


def crm_posterior(data, cfg: CrmConfig) -> DosePosterior:
    """Per-dose posterior toxicity summaries given all accumulated cohorts.

    With empty data this returns prior summaries. Means are computed by
    64-node Gauss-Hermite quadrature recentred at the posterior mode and
    cross-checked against a 10^4-node trapezoid grid spanning the mode
    +/- 10 prior standard deviations; the grid also supplies the
    tail probabilities P(p_i > target).
    """
    for c in data:
        if not 0 <= c.dose_index < len(cfg.skeleton):
            raise ValueError(f"dose index {c.dose_index} outside skeleton")
    logpost, score = _log_posterior_terms(cfg, data)
    mode, laplace_sd = _posterior_mode(logpost, score, cfg.prior_sd)

    # Dense grid: spectrally accurate for this integrand because every
    # derivative has decayed at the truncation points.
    grid = np.linspace(mode - _TAIL_SDS * cfg.prior_sd, mode + _TAIL_SDS * cfg.prior_sd, _TRAPEZOID_NODES)
    lp = logpost(grid)
    lp_max = lp.max()
    if not np.isfinite(lp_max):
        raise NumericalFailure("posterior density is degenerate")
    w = np.exp(lp - lp_max)
    z_grid = np.trapezoid(w, grid)
    if z_grid <= 0 or not np.isfinite(z_grid):
        raise NumericalFailure("normalizing constant underflowed")
    curves = _dose_prob_curves(cfg, grid)
    mean_grid = np.trapezoid(curves * w, grid, axis=1) / z_grid
    second = np.trapezoid(curves ** 2 * w, grid, axis=1) / z_grid
    sd = np.sqrt(np.maximum(second - mean_grid ** 2, 0.0))
    theta_mean = float(np.trapezoid(grid * w, grid) / z_grid)

    # Gauss-Hermite recentred at the mode; falls back to the grid values
    # when the two disagree beyond the convergence tolerance.
    nodes = mode + math.sqrt(2.0) * laplace_sd * _GH_NODES
    log_gh = logpost(nodes) + _GH_NODES ** 2 + np.log(_GH_WEIGHTS)
    gh_shift = log_gh.max()
    gh_w = np.exp(log_gh - gh_shift)
    gh_z = gh_w.sum()
    gh_curves = _dose_prob_curves(cfg, nodes)
    mean_gh = gh_curves @ gh_w / gh_z
    rel = np.abs(mean_gh - mean_grid) / np.maximum(np.abs(mean_grid), 1e-12)
    mean_tox = mean_grid if np.any(rel > _CROSS_CHECK_RTOL) else mean_gh

    # P(p_i > target) == P(theta < log(log(target)/log(s_i))).
    cdf = np.concatenate([[0.0], np.cumsum((w[1:] + w[:-1]) * np.diff(grid) / 2.0)])
    thresholds = np.log(math.log(cfg.target) / np.log(np.asarray(cfg.skeleton)))
    prob_exceeds = np.interp(thresholds, grid, cdf) / z_grid

    log_evidence = float(np.log(z_grid) + lp_max)
    return DosePosterior(
        mean_tox=tuple(float(v) for v in mean_tox),
        sd_tox=tuple(float(v) for v in sd),
        prob_exceeds_target=tuple(float(v) for v in np.clip(prob_exceeds, 0.0, 1.0)),
        log_evidence=log_evidence,
        theta_mean=theta_mean,
        theta_mode=float(mode),
    )


def _point_estimates(post: DosePosterior, cfg: CrmConfig) -> np.ndarray:
    if cfg.estimator == "plugin":
        return np.asarray(cfg.skeleton) ** math.exp(post.theta_mean)
    return np.asarray(post.mean_tox)


def _max_tried(state: TrialState) -> int:
    return max((c.dose_index for c in state.cohorts), default=-1)


def crm_next_dose(post: DosePosterior, state: TrialState, cfg: CrmConfig) -> Recommendation:
    """Dose whose estimated toxicity best matches the target.

    ``closest`` picks argmin |estimate - target| (ties to the lower dose);
    ``highest_below`` picks the top dose with estimate <= target. With
    no-skipping on, the pick is clipped to one level above the highest
    dose tried so far.
    """
    estimates = _point_estimates(post, cfg)
    if cfg.selection == "highest_below":
        below = np.flatnonzero(estimates <= cfg.target)
        best = int(below[-1]) if below.size else 0
    else:
        # Safety-first tie-breaking: distances within rounding noise of the
        # minimum count as ties and the lower dose wins.
        dist = np.abs(estimates - cfg.target)
        best = int(np.flatnonzero(dist <= dist.min() + 1e-9)[0])
    if cfg.no_skipping:
        tried = _max_tried(state)
        cap = cfg.start_dose if tried < 0 else tried + 1
        best = min(best, cap, len(cfg.skeleton) - 1)
    return Recommendation(
        ALLOCATE,
        dose_index=best,
        metrics={
            "mean_tox": list(post.mean_tox),
            "sd_tox": list(post.sd_tox),
            "prob_exceeds_target": list(post.prob_exceeds_target),
            "target": cfg.target,
        },
    )


def crm_stop_check(state: TrialState, post: DosePosterior, cfg: CrmConfig) -> Recommendation:
    """Stop once the recommendation is predictably stable, or at max_n.

    Enumerates every event path for the next ``n_lookahead`` patients one
    at a time, re-fitting the posterior after each, and sums the posterior
    predictive probability of the paths on which the recommended dose
    never changes. At or above ``prob_threshold`` the trial stops and the
    current recommendation is declared.
    """
    if not state.cohorts:
        return Recommendation(CONTINUE, metrics={"reason": "no data"})
    current = crm_next_dose(post, state, cfg).dose_index
    n_total = sum(c.n_treated for c in state.cohorts)
    if n_total >= cfg.max_n:
        return Recommendation(DECLARE_MTD, dose_index=current, metrics={"reason": "max_n"})
    if cfg.n_lookahead <= 0 or cfg.prob_threshold >= 1.0 + 1e-12:
        return Recommendation(CONTINUE, metrics={"stability_probability": 0.0})

    budget = [0]

    def stable_probability(data: tuple[CohortOutcome, ...], fit: DosePosterior, depth: int) -> float:
        """P(patients depth+1..n_lookahead all receive the current dose)."""
        if depth == cfg.n_lookahead:
            return 1.0
        pseudo = replace(state, cohorts=data)
        if crm_next_dose(fit, pseudo, cfg).dose_index != current:
            return 0.0
        p_event = fit.mean_tox[current]
        prob = 0.0
        for n_events, weight in ((1, p_event), (0, 1.0 - p_event)):
            extended = data + (CohortOutcome(current, 1, n_events),)
            if depth + 1 == cfg.n_lookahead:
                prob += weight
            else:
                budget[0] += 1
                if budget[0] > cfg.node_cap:
                    raise BudgetExceeded(
                        f"lookahead enumeration exceeded {cfg.node_cap} nodes"
                    )
                prob += weight * stable_probability(
                    extended, crm_posterior(extended, cfg), depth + 1
                )
        return prob

    prob = stable_probability(tuple(state.cohorts), post, 0)
    if prob >= cfg.prob_threshold:
        return Recommendation(
            DECLARE_MTD, dose_index=current, metrics={"stability_probability": prob}
        )
    return Recommendation(CONTINUE, metrics={"stability_probability": prob})
