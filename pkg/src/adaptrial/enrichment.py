"""Two-subgroup population enrichment with a combination test.

The interim analysis sorts the full-population evidence into conditional
power zones: favorable trends continue as planned, promising trends expand
the sample size, and an unfavorable full population with a favorable
subgroup restricts recruitment to that subgroup. Whatever the action, the
final analysis combines stagewise p-values with pre-fixed inverse-normal
weights and closed testing over {full, subgroup}, which is what keeps the
familywise error controlled despite the data-driven population change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm

from .errors import InvalidPValue
from .types import Recommendation

CONTINUE_FULL = "continue_full"
EXPAND_FULL = "expand_full"
ENRICH_SUBGROUP = "enrich_subgroup"

ACTIONS = (CONTINUE_FULL, EXPAND_FULL, ENRICH_SUBGROUP)

H_FULL = "H_full"
H_SUB = "H_sub"


@dataclass(frozen=True)
class EnrichmentDesign:
    subgroups: tuple[str, str]
    weights: tuple[float, float]  # stagewise inverse-normal weights, w1^2+w2^2=1
    alpha: float
    interim_fraction: float = 0.5
    favorable_cp: float = 0.8
    promising_cp_low: float = 0.3
    subgroup_info_fraction: float = 0.5
    intersection: str = "bonferroni"
    action_plans: dict | None = None

    def __post_init__(self):
        w1, w2 = self.weights
        if abs(w1 ** 2 + w2 ** 2 - 1.0) > 1e-9 or w1 <= 0 or w2 <= 0:
            raise ValueError("weights must be positive with w1^2 + w2^2 = 1")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")

    @classmethod
    def from_config(cls, config) -> "EnrichmentDesign":
        p = config.parameters
        return cls(
            subgroups=tuple(p["subgroups"]),
            weights=tuple(p["weights"]),
            alpha=config.alpha,
            interim_fraction=p["interim_fraction"],
            favorable_cp=p["favorable_cp"],
            promising_cp_low=p["promising_cp_low"],
            subgroup_info_fraction=p["subgroup_info_fraction"],
            intersection=p["intersection"],
            action_plans=p["actions"],
        )


def _current_trend_cp(z: float, t: float, alpha: float) -> float:
    """Conditional power under the estimated drift, z / sqrt(t)."""
    theta_hat = z / math.sqrt(t)
    z_alpha = float(norm.ppf(1 - alpha))
    num = z_alpha - z * math.sqrt(t) - theta_hat * (1.0 - t)
    return float(1 - norm.cdf(num / math.sqrt(1.0 - t)))


def enrichment_interim(z_full: float, z_sub: float, design: EnrichmentDesign) -> Recommendation:
    """Pick one of the three pre-planned actions from the interim statistics.

    Full-population conditional power in the favorable band continues as
    planned, the promising band expands the full population, and an
    unfavorable full population with a favorable subgroup enriches. With
    both populations unfavorable the trial continues as planned: the three
    pre-planned actions include no early stop.
    """
    t = design.interim_fraction
    cp_full = _current_trend_cp(z_full, t, design.alpha)
    cp_sub = _current_trend_cp(z_sub, t, design.alpha)
    if cp_full >= design.favorable_cp:
        action, zone = CONTINUE_FULL, "favorable"
    elif cp_full >= design.promising_cp_low:
        action, zone = EXPAND_FULL, "promising"
    elif cp_sub >= design.favorable_cp:
        action, zone = ENRICH_SUBGROUP, "unfavorable"
    else:
        action, zone = CONTINUE_FULL, "unfavorable"
    metrics = {"cp_full": cp_full, "cp_sub": cp_sub, "zone": zone, "z_full": z_full, "z_sub": z_sub}
    plans = design.action_plans or {}
    if action in plans:
        metrics["plan"] = plans[action]
    return Recommendation(action, metrics=metrics)


def combine_pvalues(p1: float, p2: float, w1: float, w2: float) -> float:
    """Inverse-normal combination z with pre-fixed stagewise weights."""
    for p in (p1, p2):
        if not 0.0 < p < 1.0:
            raise InvalidPValue(f"p-value {p} outside (0, 1)")
    return float(w1 * norm.ppf(1 - p1) + w2 * norm.ppf(1 - p2))


def intersection_pvalue(p_full: float, p_sub: float, method: str = "bonferroni") -> float:
    """Stage-wise p-value for the intersection hypothesis."""
    for p in (p_full, p_sub):
        if not 0.0 < p < 1.0:
            raise InvalidPValue(f"p-value {p} outside (0, 1)")
    if method == "simes":
        return min(2 * min(p_full, p_sub), max(p_full, p_sub))
    return min(1.0 - 1e-16, 2 * min(p_full, p_sub))


@dataclass(frozen=True)
class CombinationResult:
    rejections: frozenset[str]
    z_full: float
    z_sub: float
    z_intersection: float
    critical: float

    def to_metrics(self) -> dict:
        return {
            "rejections": sorted(self.rejections),
            "z_full": self.z_full,
            "z_sub": self.z_sub,
            "z_intersection": self.z_intersection,
            "critical": self.critical,
        }


def combination_test(
    stage1: dict[str, float],
    stage2_p: float,
    design: EnrichmentDesign,
    action: str,
) -> CombinationResult:
    """Closed-testing rejections after the second stage.

    ``stage1`` maps "full" and "sub" to first-stage p-values; ``stage2_p``
    is the single second-stage p-value of the population recruited under
    the chosen action (the subgroup after enrichment, the full population
    otherwise). Each hypothesis is rejected only if both its own
    combination statistic and the intersection's exceed the critical
    value.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown interim action {action!r}")
    p1_full, p1_sub = stage1["full"], stage1["sub"]
    w1, w2 = design.weights
    p1_int = intersection_pvalue(p1_full, p1_sub, design.intersection)
    z_full = combine_pvalues(p1_full, stage2_p, w1, w2)
    z_sub = combine_pvalues(p1_sub, stage2_p, w1, w2)
    z_int = combine_pvalues(p1_int, stage2_p, w1, w2)
    critical = float(norm.ppf(1 - design.alpha))
    rejections = set()
    if z_int > critical:
        if z_full > critical:
            rejections.add(H_FULL)
        if z_sub > critical:
            rejections.add(H_SUB)
    return CombinationResult(
        rejections=frozenset(rejections),
        z_full=z_full,
        z_sub=z_sub,
        z_intersection=z_int,
        critical=critical,
    )
