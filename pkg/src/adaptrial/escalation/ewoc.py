"""Overdose-controlled escalation on a two-parameter grid posterior.

The dose-toxicity model is logistic in dose, reparameterized by the
toxicity probability at the lowest dose (rho0) and the dose whose toxicity
equals the target (the maximum tolerated dose, gamma). Both get discrete
uniform priors on a rectangular grid; the posterior is exact Bayes over
grid cells. Allocation is deliberately asymmetric: the next dose is the
largest one whose posterior probability of exceeding the target toxicity
stays below the feasibility bound, so overdosing is controlled directly
rather than through a symmetric loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logit

from ..errors import NoSafeDose, NumericalFailure
from ..types import DoseGrid, Recommendation, TrialState

ALLOCATE = "allocate"


@dataclass(frozen=True)
class EwocConfig:
    target: float
    feasibility_alpha: float = 0.25
    alpha_increment: float = 0.0
    feasibility_cap: float = 0.5
    grid_size: tuple[int, int] = (201, 201)
    no_skipping: bool = True
    cohort_size: int = 3
    start_dose: int = 0
    max_n: int = 30

    def __post_init__(self):
        if not 0 < self.target < 1:
            raise ValueError("target must lie in (0, 1)")
        if not 0 < self.feasibility_alpha < 0.5:
            raise ValueError("feasibility_alpha must lie in (0, 0.5)")
        if self.alpha_increment < 0:
            raise ValueError("alpha_increment must be >= 0")

    @classmethod
    def from_parameters(cls, p: dict) -> "EwocConfig":
        return cls(
            target=p["target"],
            feasibility_alpha=p["feasibility_alpha"],
            alpha_increment=p["alpha_increment"],
            feasibility_cap=p["feasibility_cap"],
            grid_size=tuple(p["grid_size"]),
            no_skipping=p["no_skipping"],
            cohort_size=p["cohort_size"],
            start_dose=p["start_dose"],
            max_n=p["max_n"],
        )

    def alpha_at(self, n_cohorts: int) -> float:
        """Feasibility bound after the given number of observed cohorts."""
        return min(self.feasibility_alpha + self.alpha_increment * n_cohorts, self.feasibility_cap)


class EwocPosterior:
    """Normalized discrete posterior over (rho0, gamma) grid cells."""

    def __init__(self, rho_grid, gamma_grid, probs, dose_values, log_evidence):
        self.rho_grid = rho_grid
        self.gamma_grid = gamma_grid
        self.probs = probs  # shape (n_rho, n_gamma)
        self.dose_values = dose_values
        self.log_evidence = log_evidence
        self.gamma_marginal = probs.sum(axis=0)

    def mean_gamma(self) -> float:
        return float(self.gamma_marginal @ self.gamma_grid)

    def gamma_cdf(self, dose: float) -> float:
        return float(self.gamma_marginal[self.gamma_grid < dose].sum())

    def prob_exceeds_target(self, dose: float) -> float:
        """P(toxicity at ``dose`` exceeds the target) == P(gamma < dose)."""
        return self.gamma_cdf(dose)

    def gamma_quantile(self, q: float) -> float:
        cum = np.cumsum(self.gamma_marginal)
        idx = int(np.searchsorted(cum, q))
        return float(self.gamma_grid[min(idx, len(self.gamma_grid) - 1)])


def ewoc_posterior(data, cfg: EwocConfig, grid: DoseGrid) -> EwocPosterior:
    """Exact discrete posterior given the accumulated cohorts.

    Grid points sit at cell midpoints of rho0 in (0, target); the MTD grid
    is right-inclusive over (d_min, d_max] so the top dose is an
    attainable MTD value while the singular gamma = d_min point (infinite
    dose-response slope) stays excluded. With no data the posterior is the
    uniform prior.
    """
    n_rho, n_gamma = cfg.grid_size
    d_min, d_max = grid.values[0], grid.values[-1]
    rho_grid = cfg.target * (np.arange(n_rho) + 0.5) / n_rho
    gamma_grid = d_min + (d_max - d_min) * (np.arange(n_gamma) + 1.0) / n_gamma

    eta0 = logit(rho_grid)[:, None]  # (n_rho, 1)
    slope = (logit(cfg.target) - eta0) / (gamma_grid - d_min)[None, :]
    loglik = np.zeros((n_rho, n_gamma))
    for c in data:
        dose = grid.values[c.dose_index]
        eta = eta0 + slope * (dose - d_min)
        loglik += c.n_events * log_expit(eta) + (c.n_treated - c.n_events) * log_expit(-eta)
    shift = loglik.max()
    if not np.isfinite(shift):
        raise NumericalFailure("likelihood degenerate on the whole grid")
    w = np.exp(loglik - shift)
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise NumericalFailure("posterior normalizing constant underflowed")
    probs = w / total
    log_evidence = float(shift + math.log(total) - math.log(n_rho * n_gamma))
    return EwocPosterior(rho_grid, gamma_grid, probs, np.asarray(grid.values), log_evidence)


def ewoc_next_dose(
    posterior: EwocPosterior,
    cfg: EwocConfig,
    state: TrialState,
    grid: DoseGrid,
    alpha_override: float | None = None,
) -> Recommendation:
    """Largest dose whose overdose probability stays below the bound.

    Raises ``NoSafeDose`` when even the lowest dose violates the
    feasibility criterion, which signals a stop for safety.
    """
    alpha = cfg.alpha_at(len(state.cohorts)) if alpha_override is None else alpha_override
    overdose = [posterior.prob_exceeds_target(v) for v in grid.values]
    feasible = [i for i, q in enumerate(overdose) if q < alpha]
    if not feasible:
        raise NoSafeDose(
            f"lowest dose has overdose probability {overdose[0]:.4f} >= {alpha:.4f}",
            details={"overdose": overdose, "alpha": alpha},
        )
    best = max(feasible)
    if cfg.no_skipping:
        tried = max((c.dose_index for c in state.cohorts), default=-1)
        cap = cfg.start_dose if tried < 0 else tried + 1
        best = min(best, cap, grid.size - 1)
    return Recommendation(
        ALLOCATE,
        dose_index=best,
        metrics={
            "overdose_probability": overdose,
            "feasibility_alpha": alpha,
            "mean_mtd": posterior.mean_gamma(),
        },
    )
