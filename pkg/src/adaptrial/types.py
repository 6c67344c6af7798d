"""Immutable domain values shared by every design engine.

All types here are frozen dataclasses: engines never mutate a trial state,
they return a new one. That makes every decision replayable from the audit
log and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

# Trial status values. Transitions are monotone: once a trial leaves
# ACTIVE it never returns.
ACTIVE = "active"
STOPPED_EFFICACY = "stopped_efficacy"
STOPPED_FUTILITY = "stopped_futility"
STOPPED_SAFETY = "stopped_safety"
COMPLETED = "completed"

STATUSES = (ACTIVE, STOPPED_EFFICACY, STOPPED_FUTILITY, STOPPED_SAFETY, COMPLETED)

EPOCH = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class DoseGrid:
    """Ordered dose levels under study.

    ``levels`` is a tuple of (label, value) pairs with strictly increasing
    values and unique labels; ``unit`` applies to all values.
    """

    levels: tuple[tuple[str, float], ...]
    unit: str = ""

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError("dose grid needs at least 2 levels")
        values = [v for _, v in self.levels]
        if any(v <= 0 for v in values):
            raise ValueError("dose values must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("dose values must be strictly increasing")
        labels = [lab for lab, _ in self.levels]
        if len(set(labels)) != len(labels):
            raise ValueError("dose labels must be unique")

    @property
    def size(self) -> int:
        return len(self.levels)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.levels)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.levels)

    @classmethod
    def from_values(cls, values, unit: str = "") -> "DoseGrid":
        return cls(tuple((f"dose{i + 1}", float(v)) for i, v in enumerate(values)), unit)


@dataclass(frozen=True)
class CohortOutcome:
    """Observed events for one dosed cohort (escalation designs)."""

    dose_index: int
    n_treated: int
    n_events: int
    timestamp: str = EPOCH

    def __post_init__(self):
        if self.dose_index < 0:
            raise ValueError("dose_index must be >= 0")
        if self.n_treated <= 0:
            raise ValueError("n_treated must be positive")
        if not 0 <= self.n_events <= self.n_treated:
            raise ValueError("n_events must be in [0, n_treated]")


@dataclass(frozen=True)
class ArmOutcomeSummary:
    """Aggregated outcomes for one arm (comparative designs).

    Binary endpoints fill ``successes``; continuous endpoints fill
    ``mean`` and ``sd``. ``stratum`` is only used by covariate-adjusted
    allocation.
    """

    arm_index: int
    n: int
    successes: Optional[int] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    stratum: Optional[str] = None

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.successes is not None and not 0 <= self.successes <= self.n:
            raise ValueError("successes must be in [0, n]")
        if self.sd is not None and self.sd <= 0:
            raise ValueError("sd must be positive")


@dataclass(frozen=True)
class TrialState:
    """Single source of truth for all interim decisions.

    ``cohorts`` accumulates escalation outcomes; ``arm_stages`` accumulates
    one tuple of per-arm summaries per posted stage for comparative designs.
    """

    design_id: str
    stage: int = 0
    cohorts: tuple[CohortOutcome, ...] = ()
    arm_stages: tuple[tuple[ArmOutcomeSummary, ...], ...] = ()
    status: str = ACTIVE
    active_arms: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.stage < 0:
            raise ValueError("stage must be >= 0")

    @property
    def n_enrolled(self) -> int:
        n = sum(c.n_treated for c in self.cohorts)
        n += sum(a.n for stage in self.arm_stages for a in stage)
        return n

    def with_cohort(self, outcome: CohortOutcome) -> "TrialState":
        return replace(self, stage=self.stage + 1, cohorts=self.cohorts + (outcome,))

    def with_arm_stage(self, summaries) -> "TrialState":
        return replace(
            self,
            stage=self.stage + 1,
            arm_stages=self.arm_stages + (tuple(summaries),),
        )

    def with_status(self, status: str) -> "TrialState":
        if self.status != ACTIVE and status != self.status:
            raise ValueError("status transitions are monotone; trial already stopped")
        return replace(self, status=status)

    def with_active_arms(self, arms) -> "TrialState":
        return replace(self, active_arms=frozenset(arms))


@dataclass(frozen=True)
class Recommendation:
    """A pre-planned action together with the metrics that justified it."""

    action: str
    dose_index: Optional[int] = None
    arm_index: Optional[int] = None
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "dose_index": self.dose_index,
            "arm_index": self.arm_index,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Recommendation":
        return cls(
            action=d["action"],
            dose_index=d.get("dose_index"),
            arm_index=d.get("arm_index"),
            metrics=dict(d.get("metrics", {})),
        )


def cohort_to_dict(c: CohortOutcome) -> dict:
    return {
        "dose_index": c.dose_index,
        "n_treated": c.n_treated,
        "n_events": c.n_events,
        "timestamp": c.timestamp,
    }


def cohort_from_dict(d: dict) -> CohortOutcome:
    return CohortOutcome(
        dose_index=int(d["dose_index"]),
        n_treated=int(d["n_treated"]),
        n_events=int(d["n_events"]),
        timestamp=d.get("timestamp", EPOCH),
    )


def arm_summary_to_dict(a: ArmOutcomeSummary) -> dict:
    d = {"arm_index": a.arm_index, "n": a.n}
    if a.successes is not None:
        d["successes"] = a.successes
    if a.mean is not None:
        d["mean"] = a.mean
    if a.sd is not None:
        d["sd"] = a.sd
    if a.stratum is not None:
        d["stratum"] = a.stratum
    return d


def arm_summary_from_dict(d: dict) -> ArmOutcomeSummary:
    return ArmOutcomeSummary(
        arm_index=int(d["arm_index"]),
        n=int(d["n"]),
        successes=None if d.get("successes") is None else int(d["successes"]),
        mean=None if d.get("mean") is None else float(d["mean"]),
        sd=None if d.get("sd") is None else float(d["sd"]),
        stratum=d.get("stratum"),
    )
