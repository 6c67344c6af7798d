"""Rule-based 3+3 dose escalation.

Cohorts of three are dosed at increasing levels. One event in a fresh
cohort expands the same dose to six patients; staying at or under one
event among six lets escalation proceed; two or more events at a dose mark
it as excessive and the level below becomes the recommended dose. The
decision is a pure function of the accumulated cohort outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import IncompleteCohort
from ..types import DoseGrid, Recommendation, TrialState

ESCALATE = "escalate"
EXPAND = "expand_same_dose"
DE_ESCALATE = "de_escalate"
DECLARE_MTD = "declare_mtd"
STOP_NO_MTD = "stop_no_mtd"


@dataclass(frozen=True)
class ThreePlusThreeRules:
    cohort_size: int = 3
    expand_on: frozenset[int] = frozenset({1})
    max_per_dose: int = 6
    max_tolerated_expanded: int = 1
    allow_deescalation: bool = False

    def __post_init__(self):
        if any(not 0 <= e <= self.cohort_size for e in self.expand_on):
            raise ValueError("expand_on must be a subset of 0..cohort_size")
        if self.max_tolerated_expanded >= self.max_per_dose:
            raise ValueError("max_tolerated_expanded must be below max_per_dose")

    @classmethod
    def from_parameters(cls, p: dict) -> "ThreePlusThreeRules":
        return cls(
            cohort_size=p["cohort_size"],
            expand_on=frozenset(p["expand_on"]),
            max_per_dose=p["max_per_dose"],
            max_tolerated_expanded=p["max_tolerated_expanded"],
            allow_deescalation=p["allow_deescalation"],
        )


def _dose_totals(state: TrialState, n_doses: int):
    treated = [0] * n_doses
    events = [0] * n_doses
    for c in state.cohorts:
        treated[c.dose_index] += c.n_treated
        events[c.dose_index] += c.n_events
    return treated, events


def three_plus_three_next(
    state: TrialState, rules: ThreePlusThreeRules, grid: DoseGrid
) -> Recommendation:
    """Decide the next action from the last complete cohort.

    Raises ``IncompleteCohort`` when no cohort has been observed or the
    last cohort is short of the planned cohort size.
    """
    if not state.cohorts:
        raise IncompleteCohort("no cohort observed yet")
    last = state.cohorts[-1]
    if last.n_treated != rules.cohort_size:
        raise IncompleteCohort(
            f"last cohort has {last.n_treated} patients, expected {rules.cohort_size}"
        )
    treated, events = _dose_totals(state, grid.size)
    current = last.dose_index
    metrics = {"treated": treated, "events": events, "dose_index": current}

    def excessive(d: int) -> bool:
        return events[d] > rules.max_tolerated_expanded

    if excessive(current):
        if current == 0:
            return Recommendation(STOP_NO_MTD, metrics=metrics)
        below = current - 1
        if rules.allow_deescalation and treated[below] < rules.max_per_dose:
            return Recommendation(DE_ESCALATE, dose_index=below, metrics=metrics)
        return Recommendation(DECLARE_MTD, dose_index=below, metrics=metrics)

    if events[current] in rules.expand_on and treated[current] < rules.max_per_dose:
        return Recommendation(EXPAND, dose_index=current, metrics=metrics)

    # Dose tolerated: escalate unless the ceiling or a known-excessive
    # level blocks the way, in which case the current dose is the answer.
    if current == grid.size - 1 or excessive(current + 1):
        return Recommendation(DECLARE_MTD, dose_index=current, metrics=metrics)
    return Recommendation(ESCALATE, dose_index=current + 1, metrics=metrics)
