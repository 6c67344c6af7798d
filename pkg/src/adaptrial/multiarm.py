"""Multi-arm designs sharing one control: MAMS and drop-the-loser.

MAMS boundaries are calibrated by simulation: the shape constant is
bisected until the simulated familywise error under the global null hits
the target, using common random numbers across iterates so the error rate
is monotone in the constant. Drop-the-loser designs retain a pre-fixed
number of arms per stage and adjust the final critical value for the
stage-1 selection, again by simulation under the global null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ArmCountMismatch, MissingStage, NoConvergence
from .rng import rng_stream
from .types import Recommendation

CONTINUE = "continue"
DROP_FUTILITY = "drop_futility"
STOP_EFFICACY_SELECT = "stop_efficacy_and_select"
STOP_FUTILITY = "stop_futility"
SELECT = "select"


@dataclass(frozen=True)
class MamsDesign:
    n_arms: int
    stages: int
    alpha_fwer: float
    allocation_ratio: float = 1.0  # control patients per experimental patient
    boundary_shape: str = "triangular"
    power_mode: str = "least_favorable"
    n_stage: int = 50
    futility: str = "binding"

    def __post_init__(self):
        if self.n_arms < 1 or self.stages < 1:
            raise ValueError("n_arms and stages must be >= 1")
        if not 0 < self.alpha_fwer < 0.5:
            raise ValueError("alpha_fwer must lie in (0, 0.5)")

    @classmethod
    def from_config(cls, config) -> "MamsDesign":
        p = config.parameters
        return cls(
            n_arms=p["n_arms"],
            stages=p["stages"],
            alpha_fwer=config.alpha,
            allocation_ratio=p["allocation_ratio"],
            boundary_shape=p["boundary_shape"],
            power_mode=p["power_mode"],
            n_stage=p["n_stage"],
            futility=p["futility"],
        )

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple((j + 1) / self.stages for j in range(self.stages))


@dataclass(frozen=True)
class MamsBounds:
    upper: tuple[float, ...]
    lower: tuple[float, ...]
    constant: float


def _shape_bounds(design: MamsDesign, c: float) -> tuple[list[float], list[float]]:
    upper, lower = [], []
    for t in design.fractions:
        rt = math.sqrt(t)
        if design.boundary_shape == "pocock":
            u = c
        elif design.boundary_shape == "obrien_fleming":
            u = c / rt
        else:
            u = c * (1 + t) / rt
        if design.futility == "none":
            l = -math.inf
        elif design.boundary_shape == "triangular":
            l = c * (3 * t - 1) / rt
        else:
            # Straight score-scale futility line from 0 to the final
            # efficacy bound, i.e. z-scale c * sqrt(t).
            l = c * rt
        upper.append(u)
        lower.append(l)
    lower[-1] = upper[-1]
    return upper, lower


def simulate_mams_z(design: MamsDesign, n_reps: int, seed: int, drifts=None) -> np.ndarray:
    """Cumulative per-arm z statistics, shape (reps, arms, stages).

    The shared control induces the usual correlation between arm
    statistics; ``drifts`` are per-arm expected z values at the final
    stage (defaults to the global null).
    """
    rng = rng_stream(seed, 0)
    K, J = design.n_arms, design.stages
    r = design.allocation_ratio
    n_exp = design.n_stage
    n_ctl = design.n_stage * r
    # Stagewise sums of centered outcomes, sd 1 per patient.
    exp_sums = rng.standard_normal((n_reps, K, J)) * math.sqrt(n_exp)
    ctl_sums = rng.standard_normal((n_reps, 1, J)) * math.sqrt(n_ctl)
    cum_exp = np.cumsum(exp_sums, axis=2)
    cum_ctl = np.cumsum(ctl_sums, axis=2)
    stages = np.arange(1, J + 1)
    mean_exp = cum_exp / (n_exp * stages)
    mean_ctl = cum_ctl / (n_ctl * stages)
    se = np.sqrt(1.0 / (n_exp * stages) + 1.0 / (n_ctl * stages))
    z = (mean_exp - mean_ctl) / se
    if drifts is not None:
        drifts = np.asarray(drifts, dtype=float).reshape(1, K, 1)
        z = z + drifts * np.sqrt(stages.reshape(1, 1, J) / J)
    return z


def _fwer_given_bounds(z: np.ndarray, upper, lower, binding: bool) -> float:
    """Fraction of replicates with any efficacy crossing before global stop."""
    n_reps, K, J = z.shape
    active = np.ones((n_reps, K), dtype=bool)
    rejected = np.zeros(n_reps, dtype=bool)
    stopped = np.zeros(n_reps, dtype=bool)
    for j in range(J):
        zj = z[:, :, j]
        live = active & ~stopped[:, None]
        eff = live & (zj >= upper[j])
        rejected |= eff.any(axis=1)
        stopped |= eff.any(axis=1)
        if binding and math.isfinite(lower[j]):
            drop = live & (zj <= lower[j])
            active &= ~drop
            stopped |= ~(active.any(axis=1))
    return float(rejected.mean())


def mams_boundaries(design: MamsDesign, seed: int = 0, n_reps: int = 100_000) -> MamsBounds:
    """Bisect the shape constant until simulated FWER hits the target.

    Common random numbers across bisection iterates keep the simulated
    error monotone in the constant, so plain bisection converges.
    """
    if design.n_arms == 1 and design.stages == 1:
        c = float(norm.ppf(1 - design.alpha_fwer))
        upper, lower = _shape_bounds(design, _constant_for_final(design, c))
        return MamsBounds(tuple(upper), tuple(lower), _constant_for_final(design, c))
    z = simulate_mams_z(design, n_reps, seed)
    binding = design.futility == "binding"

    def fwer_of(c: float) -> float:
        upper, lower = _shape_bounds(design, c)
        return _fwer_given_bounds(z, upper, lower, binding)

    lo, hi = 0.05, 8.0
    if not fwer_of(lo) >= design.alpha_fwer >= fwer_of(hi):
        raise NoConvergence("FWER target not bracketed by the constant range")
    tol = max(0.1 * math.sqrt(design.alpha_fwer / n_reps), 1e-5)
    c = 0.5 * (lo + hi)
    for _ in range(80):
        c = 0.5 * (lo + hi)
        f = fwer_of(c)
        if abs(f - design.alpha_fwer) <= tol and hi - lo < 1e-3:
            break
        if f > design.alpha_fwer:
            lo = c
        else:
            hi = c
    upper, lower = _shape_bounds(design, c)
    return MamsBounds(tuple(upper), tuple(lower), c)


def _constant_for_final(design: MamsDesign, z_final: float) -> float:
    """Shape constant whose final-stage bound equals ``z_final``."""
    if design.boundary_shape in ("pocock", "obrien_fleming"):
        return z_final
    return z_final / 2.0  # triangular final bound is 2c


def mams_interim_decision(z_stats, bounds: MamsBounds, stage: int, design: MamsDesign) -> Recommendation:
    """Apply stage bounds to the per-arm statistics of the active arms.

    ``z_stats`` maps arm index -> z. The best arm crossing the efficacy
    bound stops the trial with that arm selected; arms at or below the
    futility bound are dropped; with every arm dropped the trial stops
    for futility.
    """
    if stage >= design.stages:
        raise MissingStage(f"stage {stage} outside design with {design.stages} stages")
    if not z_stats:
        raise ArmCountMismatch("no active-arm statistics supplied")
    upper = bounds.upper[stage]
    lower = bounds.lower[stage]
    final = stage == design.stages - 1
    crossed = {a: z for a, z in z_stats.items() if z >= upper}
    if crossed:
        best = max(sorted(crossed), key=lambda a: (crossed[a], -a))
        return Recommendation(
            STOP_EFFICACY_SELECT,
            arm_index=best,
            metrics={"z": dict(z_stats), "upper": upper, "lower": lower, "stage": stage},
        )
    if final:
        return Recommendation(
            STOP_FUTILITY,
            metrics={"z": dict(z_stats), "upper": upper, "lower": lower, "stage": stage},
        )
    dropped = [a for a, z in z_stats.items() if math.isfinite(lower) and z <= lower]
    remaining = [a for a in z_stats if a not in dropped]
    if not remaining:
        return Recommendation(
            STOP_FUTILITY,
            metrics={"z": dict(z_stats), "dropped": dropped, "stage": stage},
        )
    return Recommendation(
        CONTINUE,
        metrics={"z": dict(z_stats), "dropped": dropped, "active": remaining, "stage": stage},
    )


# ---------------------------------------------------------------------------
# Drop-the-loser


@dataclass(frozen=True)
class DtlDesign:
    n_arms: int
    keep_schedule: tuple[int, ...]
    alpha: float
    n_stage: int = 50
    critical_value: float | None = None

    def __post_init__(self):
        if self.keep_schedule[-1] != 1:
            raise ValueError("keep_schedule must end at 1")
        if any(b >= a for a, b in zip(self.keep_schedule, self.keep_schedule[1:])):
            raise ValueError("keep_schedule must be strictly decreasing")

    @classmethod
    def from_config(cls, config) -> "DtlDesign":
        p = config.parameters
        return cls(
            n_arms=p["n_arms"],
            keep_schedule=tuple(p["keep_schedule"]),
            alpha=config.alpha,
            n_stage=p["n_stage"],
            critical_value=p.get("critical_value"),
        )

    @property
    def stages(self) -> int:
        return len(self.keep_schedule) + 1

    @property
    def total_n(self) -> int:
        """Deterministic total sample size across all stages and arms."""
        arms = [self.n_arms] + list(self.keep_schedule)
        return sum((k + 1) * self.n_stage for k in arms)  # +1 for control


def dtl_select(stage_stats, design: DtlDesign, stage: int = 0) -> list[int]:
    """Retain the top arms per the pre-fixed schedule; ties keep lower index."""
    keep = design.keep_schedule[stage]
    ranked = sorted(stage_stats, key=lambda a: (-stage_stats[a], a))
    return sorted(ranked[:keep])


def simulate_dtl_final_stats(design: DtlDesign, n_reps: int, seed: int) -> np.ndarray:
    """Final combined statistic of the selected arm under the global null."""
    if design.stages != 2:
        raise MissingStage("final-test calibration covers two-stage designs")
    rng = rng_stream(seed, 1)
    K = design.n_arms
    n1 = n2 = design.n_stage
    m_exp1 = rng.standard_normal((n_reps, K)) / math.sqrt(n1)
    m_ctl1 = rng.standard_normal(n_reps) / math.sqrt(n1)
    m_exp2 = rng.standard_normal((n_reps, K)) / math.sqrt(n2)
    m_ctl2 = rng.standard_normal(n_reps) / math.sqrt(n2)
    z1 = (m_exp1 - m_ctl1[:, None]) / math.sqrt(2.0 / n1)
    # Selection on stage-1 z; ties (probability zero) fall to lower index.
    sel = np.argmax(z1, axis=1)
    rows = np.arange(n_reps)
    pooled_exp = (n1 * m_exp1[rows, sel] + n2 * m_exp2[rows, sel]) / (n1 + n2)
    pooled_ctl = (n1 * m_ctl1 + n2 * m_ctl2) / (n1 + n2)
    return (pooled_exp - pooled_ctl) / math.sqrt(2.0 / (n1 + n2))


def dtl_critical_value(design: DtlDesign, seed: int = 0, n_reps: int = 200_000) -> float:
    """Selection-adjusted final critical value under the global null."""
    stats = simulate_dtl_final_stats(design, n_reps, seed)
    return float(np.quantile(stats, 1 - design.alpha))


def dtl_final_test(
    stage1: dict[int, float],
    stage2_pooled_z: float,
    design: DtlDesign,
    critical_value: float | None = None,
) -> Recommendation:
    """Selection-adjusted final comparison of the retained arm vs control.

    ``stage1`` holds the per-arm stage-1 statistics that drove selection;
    ``stage2_pooled_z`` is the combined-stages statistic for the retained
    arm. Rejects when it exceeds the calibrated critical value.
    """
    if not stage1:
        raise MissingStage("stage-1 statistics are required")
    if critical_value is None:
        critical_value = design.critical_value
    if critical_value is None:
        critical_value = dtl_critical_value(design)
    selected = dtl_select(stage1, design, stage=0)
    reject = stage2_pooled_z > critical_value
    return Recommendation(
        SELECT if reject else STOP_FUTILITY,
        arm_index=selected[0] if len(selected) == 1 else None,
        metrics={
            "stage1": dict(stage1),
            "combined_z": stage2_pooled_z,
            "critical_value": critical_value,
            "selected": selected,
            "rejected": bool(reject),
        },
    )
