"""Response-adaptive randomisation by probability-of-being-best.

Arms carry conjugate Beta posteriors over a binary success rate. The
allocation probability of an arm is the posterior probability that it is
the best arm, optionally flattened by a tuning exponent, with the control
arm's share fixable until the first drop. Arms whose share falls below the
drop threshold are removed; arms above the promote threshold graduate.
The covariate-adjusted variant keeps one posterior set per stratum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import betaln

from .errors import InactiveArm, UnknownStratum
from .rng import rng_stream


@dataclass(frozen=True)
class BetaPosterior:
    """Per-arm Beta(a, b) parameters."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        if len(self.a) != len(self.b) or any(x <= 0 for x in self.a + self.b):
            raise ValueError("Beta parameters must be positive and aligned")

    @classmethod
    def uniform(cls, n_arms: int, a: float = 1.0, b: float = 1.0) -> "BetaPosterior":
        return cls(tuple([a] * n_arms), tuple([b] * n_arms))

    def updated(self, arm: int, successes: int, n: int) -> "BetaPosterior":
        a = list(self.a)
        b = list(self.b)
        a[arm] += successes
        b[arm] += n - successes
        return BetaPosterior(tuple(a), tuple(b))

    @property
    def n_arms(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class RarPolicy:
    fix_control: bool = False
    control_prob: float | None = None
    drop_threshold: float = 0.10
    promote_threshold: float = 0.90
    tuning_exponent: float = 1.0  # 1 = pure probability-of-best, 0 = uniform
    update_cadence: int = 1
    burn_in: int = 0

    def __post_init__(self):
        if not 0 < self.drop_threshold < self.promote_threshold < 1:
            raise ValueError("need 0 < drop_threshold < promote_threshold < 1")

    @classmethod
    def from_parameters(cls, p: dict) -> "RarPolicy":
        return cls(
            fix_control=p["fix_control"],
            control_prob=p["control_prob"],
            drop_threshold=p["drop_threshold"],
            promote_threshold=p["promote_threshold"],
            tuning_exponent=p["tuning_exponent"],
            update_cadence=p["update_cadence"],
            burn_in=p["burn_in"],
        )


def prob_first_beats_second(a1: float, b1: float, a2: float, b2: float) -> float:
    """Exact P(X > Y) for X~Beta(a1,b1), Y~Beta(a2,b2), integer a1."""
    total = 0.0
    for i in range(int(round(a1))):
        total += math.exp(
            betaln(a2 + i, b1 + b2) - math.log(b1 + i) - betaln(1 + i, b1) - betaln(a2, b2)
        )
    return total


def thompson_probs(
    post: BetaPosterior,
    mc_draws: int = 16384,
    seed: int = 0,
    arms: tuple[int, ...] | None = None,
    method: str = "auto",
) -> dict[int, float]:
    """P(arm is best) among ``arms`` (default: all), summing to 1.

    Two arms with integer-offset parameters use the exact Beta integral;
    otherwise probabilities are Monte-Carlo estimates, deterministic for a
    given seed. Ties in a draw go to the lower arm index.
    """
    arms = tuple(range(post.n_arms)) if arms is None else tuple(sorted(arms))
    if len(arms) < 2:
        return {arms[0]: 1.0} if arms else {}
    a = np.array([post.a[i] for i in arms])
    b = np.array([post.b[i] for i in arms])
    exact_ok = len(arms) == 2 and float(a[0]).is_integer()
    if method == "exact" or (method == "auto" and exact_ok):
        if len(arms) != 2 or not float(a[0]).is_integer():
            raise ValueError("exact integration only covers 2 arms with integer a")
        p = prob_first_beats_second(a[0], b[0], a[1], b[1])
        return {arms[0]: p, arms[1]: 1.0 - p}
    rng = rng_stream(seed, 0)
    draws = rng.beta(a[None, :], b[None, :], size=(mc_draws, len(arms)))
    best = np.argmax(draws, axis=1)
    counts = np.bincount(best, minlength=len(arms)).astype(float)
    probs = counts / mc_draws
    return {arm: float(p) for arm, p in zip(arms, probs)}


def _flatten(raw: dict[int, float], kappa: float) -> dict[int, float]:
    """Raise to the tuning exponent and renormalize; kappa=0 is uniform."""
    if kappa == 1.0:
        return dict(raw)
    arms = sorted(raw)
    powered = {a: raw[a] ** kappa if raw[a] > 0 else 0.0 for a in arms}
    total = sum(powered.values())
    if total <= 0:
        return {a: 1.0 / len(arms) for a in arms}
    return {a: p / total for a, p in powered.items()}


@dataclass(frozen=True)
class RarState:
    """Posterior plus bookkeeping carried between patients."""

    posterior: BetaPosterior
    active_arms: frozenset[int]
    probabilities: dict[int, float]
    n_enrolled: int = 0
    n_since_update: int = 0
    control_fixed: bool = False
    dropped: tuple[int, ...] = ()
    promoted: tuple[int, ...] = ()


def rar_initial_state(n_arms: int, policy: RarPolicy, prior_a: float = 1.0, prior_b: float = 1.0) -> RarState:
    post = BetaPosterior.uniform(n_arms, prior_a, prior_b)
    probs = {a: 1.0 / n_arms for a in range(n_arms)}
    return RarState(
        posterior=post,
        active_arms=frozenset(range(n_arms)),
        probabilities=probs,
        control_fixed=policy.fix_control,
    )


def rar_update(
    state: RarState,
    arm: int,
    successes: int,
    n: int,
    policy: RarPolicy,
    mc_draws: int = 16384,
    seed: int = 0,
) -> tuple[RarState, list[dict]]:
    """Fold one outcome into the posterior and re-derive allocation.

    Returns the new state plus the drop/promote events triggered by the
    refreshed probabilities. Probabilities only refresh every
    ``update_cadence`` patients. Raises ``InactiveArm`` for outcomes on
    dropped arms.
    """
    if arm not in state.active_arms:
        raise InactiveArm(f"arm {arm} is not active")
    post = state.posterior.updated(arm, successes, n)
    n_enrolled = state.n_enrolled + n
    n_since = state.n_since_update + n
    if n_since < policy.update_cadence:
        new_state = replace(
            state, posterior=post, n_enrolled=n_enrolled, n_since_update=n_since
        )
        return new_state, []

    active = sorted(state.active_arms)
    control_arm = 0 if state.control_fixed and 0 in active else None
    if n_enrolled < policy.burn_in:
        probs = {a: 1.0 / len(active) for a in active}
    elif control_arm is not None:
        experimental = tuple(a for a in active if a != control_arm)
        raw = _flatten(thompson_probs(post, mc_draws, seed, arms=experimental), policy.tuning_exponent)
        p_ctl = policy.control_prob if policy.control_prob is not None else 1.0 / post.n_arms
        probs = {control_arm: p_ctl}
        probs.update({a: (1.0 - p_ctl) * raw[a] for a in experimental})
    else:
        probs = _flatten(
            thompson_probs(post, mc_draws, seed, arms=tuple(active)), policy.tuning_exponent
        )

    events = []
    new_active = set(active)
    control_fixed = state.control_fixed
    dropped = list(state.dropped)
    promoted = list(state.promoted)
    for a in active:
        if a == control_arm:
            continue
        if probs[a] < policy.drop_threshold:
            events.append({"kind": "drop", "arm": a, "probability": probs[a]})
            new_active.discard(a)
            dropped.append(a)
            control_fixed = False
        elif probs[a] > policy.promote_threshold:
            events.append({"kind": "promote", "arm": a, "probability": probs[a]})
            promoted.append(a)
    if events:
        # Re-normalize over the arms still active after drops.
        remaining = {a: probs[a] for a in sorted(new_active)}
        total = sum(remaining.values())
        probs = {a: p / total for a, p in remaining.items()} if total > 0 else {
            a: 1.0 / len(remaining) for a in remaining
        }
    new_state = RarState(
        posterior=post,
        active_arms=frozenset(new_active),
        probabilities=probs,
        n_enrolled=n_enrolled,
        n_since_update=0,
        control_fixed=control_fixed,
        dropped=tuple(dropped),
        promoted=tuple(promoted),
    )
    return new_state, events


@dataclass(frozen=True)
class StratifiedPosterior:
    """One Beta posterior set per stratum; all strata share the arm set."""

    strata: dict[str, BetaPosterior]

    def __post_init__(self):
        sizes = {p.n_arms for p in self.strata.values()}
        if len(sizes) > 1:
            raise ValueError("all strata must share the arm set")

    @classmethod
    def uniform(cls, labels, n_arms: int, a: float = 1.0, b: float = 1.0) -> "StratifiedPosterior":
        return cls({lab: BetaPosterior.uniform(n_arms, a, b) for lab in labels})

    def updated(self, stratum: str, arm: int, successes: int, n: int) -> "StratifiedPosterior":
        if stratum not in self.strata:
            raise UnknownStratum(f"unknown stratum {stratum!r}")
        out = dict(self.strata)
        out[stratum] = out[stratum].updated(arm, successes, n)
        return StratifiedPosterior(out)


def cara_probs(
    post: StratifiedPosterior,
    stratum: str,
    policy: RarPolicy,
    n_enrolled: int = 0,
    mc_draws: int = 16384,
    seed: int = 0,
    active_arms: tuple[int, ...] | None = None,
) -> dict[int, float]:
    """Allocation probabilities within the patient's stratum.

    During the burn-in block allocation is uniform regardless of data.
    """
    if stratum not in post.strata:
        raise UnknownStratum(f"unknown stratum {stratum!r}")
    sub = post.strata[stratum]
    arms = tuple(range(sub.n_arms)) if active_arms is None else tuple(sorted(active_arms))
    if n_enrolled < policy.burn_in:
        return {a: 1.0 / len(arms) for a in arms}
    raw = thompson_probs(sub, mc_draws, seed, arms=arms)
    return _flatten(raw, policy.tuning_exponent)
