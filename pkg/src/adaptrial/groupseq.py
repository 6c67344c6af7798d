"""Group-sequential boundaries, crossing probabilities, and re-assessment.

Boundary families are scaled by a single shape constant that is calibrated
by bisection until the exact type I error, computed by recursive numerical
integration of the score process over per-look Simpson grids, hits alpha. The recursion propagates the
joint sub-density of the not-yet-stopped score statistic look by look over
Simpson grids, so crossing probabilities, power, and expected information
all come from one deterministic code path.

Shapes: flat (Pocock-type) and t^(-1/2) (O'Brien-Fleming-type) z-scale
bounds, a one-sided triangular wedge whose straight score-scale boundaries
meet at the final look, and its two-sided double variant whose inner wedge
stops for lack of benefit in either direction. For the flat and OBF shapes
an optional futility boundary of the same shape is anchored to meet the
efficacy bound at the final look and calibrated against the type II error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InvalidHR, InvalidInterim, LookMismatch, NoConvergence, NumericalFailure
from .types import Recommendation

_NODES = 501
_TAIL = 8.0
_ALPHA_TOL = 1e-9
_MAX_BISECT = 200

CONTINUE = "continue"
STOP_EFFICACY = "stop_efficacy"
STOP_FUTILITY = "stop_futility"


@dataclass(frozen=True)
class GsDesign:
    looks: int
    information_fractions: tuple[float, ...]
    alpha: float
    beta: float = 0.1
    shape: str = "obrien_fleming"
    futility: str = "none"
    n_per_arm: int = 100

    def __post_init__(self):
        if self.looks < 1 or len(self.information_fractions) != self.looks:
            raise ValueError("information_fractions length must equal looks")
        t = self.information_fractions
        if any(not 0 < x <= 1 for x in t) or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("fractions must be strictly increasing in (0, 1]")
        if abs(t[-1] - 1.0) > 1e-12:
            raise ValueError("fractions must end at 1")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.alpha + self.beta >= 1:
            raise ValueError("alpha + beta must be below 1")

    @classmethod
    def from_config(cls, config) -> "GsDesign":
        p = config.parameters
        return cls(
            looks=p["looks"],
            information_fractions=tuple(p["information_fractions"]),
            alpha=config.alpha,
            beta=p["beta"],
            shape=p["shape"],
            futility=p["futility"],
            n_per_arm=p["n_per_arm"],
        )


@dataclass(frozen=True)
class BoundarySet:
    upper: tuple[float, ...]
    lower: tuple[float, ...]
    inflation_factor: float
    two_sided: bool = False

    def __post_init__(self):
        for u, l in zip(self.upper, self.lower):
            if math.isfinite(l) and u < l - 1e-9:
                raise ValueError("upper bound below lower bound")


@dataclass(frozen=True)
class GsCrossing:
    p_upper: tuple[float, ...]
    p_lower: tuple[float, ...]
    expected_information: float
    p_harm: tuple[float, ...] = ()

    @property
    def total_upper(self) -> float:
        return float(sum(self.p_upper))

    @property
    def total(self) -> float:
        return float(sum(self.p_upper) + sum(self.p_lower) + sum(self.p_harm))


def _simpson_weights(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(a, b, n)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (b - a) / (n - 1) / 3.0
    return x, w


def _regions(upper_z, lower_z, fractions, two_sided, include_lower):
    """Score-scale exit and continuation regions per look.

    Returns a list of (efficacy_regions, futility_regions, continuation)
    per look, each a list of (lo, hi) with +/-inf allowed. The final look
    forces a decision: anything short of efficacy exits as futility.
    """
    K = len(fractions)
    out = []
    for k in range(K):
        rt = math.sqrt(fractions[k])
        u = upper_z[k] * rt
        final = k == K - 1
        if two_sided:
            eff = [(u, math.inf), (-math.inf, -u)]
            w = lower_z[k] * rt if math.isfinite(lower_z[k]) else -math.inf
            if final:
                fut = [(-u, u)]
                cont = []
            elif include_lower and w > 0:
                fut = [(-w, w)]
                cont = [(w, u), (-u, -w)]
            else:
                fut = []
                cont = [(-u, u)]
        else:
            eff = [(u, math.inf)]
            low = lower_z[k] * rt if math.isfinite(lower_z[k]) else -math.inf
            if final:
                fut = [(-math.inf, u)]
                cont = []
            elif include_lower and math.isfinite(lower_z[k]):
                fut = [(-math.inf, low)]
                cont = [(low, u)]
            else:
                fut = []
                cont = [(-math.inf, u)]
        out.append((eff, fut, cont))
    return out


def _crossing(fractions, upper_z, lower_z, drift, two_sided, include_lower, nodes=_NODES):
    """Recursive integration of exit probabilities on the score scale."""
    K = len(fractions)
    regions = _regions(upper_z, lower_z, fractions, two_sided, include_lower)
    p_eff = np.zeros(K)
    p_fut = np.zeros(K)
    p_eff_up = np.zeros(K)
    src_x = None  # surviving score grid points
    src_wh = None  # Simpson weight times sub-density at those points

    for k in range(K):
        t = fractions[k]
        dt = t - (fractions[k - 1] if k else 0.0)
        mu = drift * dt
        sd = math.sqrt(dt)
        mean_k = drift * t
        sigma_k = math.sqrt(t)
        eff, fut, cont = regions[k]

        if k == 0:
            def prob(a, b):
                return norm.cdf((b - mu) / sd) - norm.cdf((a - mu) / sd)

            def density(x):
                return norm.pdf((x - mu) / sd) / sd
        else:
            if src_x is None or src_x.size == 0:
                break
            shifted = src_x + mu

            def prob(a, b, shifted=shifted, wh=src_wh, sd=sd):
                hi = norm.cdf((b - shifted) / sd) if math.isfinite(b) else 1.0
                lo = norm.cdf((a - shifted) / sd) if math.isfinite(a) else 0.0
                return float(np.dot(wh, hi - lo))

            def density(x, shifted=shifted, wh=src_wh, sd=sd):
                return (norm.pdf((x[:, None] - shifted[None, :]) / sd) / sd) @ wh

        for a, b in eff:
            p = prob(a, b)
            p_eff[k] += p
            if not (two_sided and b < 0):
                p_eff_up[k] += p
        for a, b in fut:
            p_fut[k] += prob(a, b)

        xs, whs = [], []
        for a, b in cont:
            a = max(a, mean_k - _TAIL * sigma_k)
            b = min(b, mean_k + _TAIL * sigma_k)
            if b <= a:
                continue
            x, w = _simpson_weights(a, b, nodes)
            h = density(x)
            xs.append(x)
            whs.append(w * h)
        if xs:
            src_x = np.concatenate(xs)
            src_wh = np.concatenate(whs)
        else:
            src_x = np.array([])
            src_wh = np.array([])

    if not np.all(np.isfinite(p_eff)) or not np.all(np.isfinite(p_fut)):
        raise NumericalFailure("crossing-probability grid underflowed")
    return p_eff, p_fut, p_eff_up


def _upper_shape(shape: str, c: float, t: float) -> float:
    if shape == "pocock":
        return c
    if shape == "obrien_fleming":
        return c / math.sqrt(t)
    if shape in ("triangular", "double_triangular"):
        return c * (1.0 + t) / math.sqrt(t)
    raise ValueError(f"unknown shape {shape!r}")


def _wedge_shape(c: float, t: float) -> float:
    """Score line c*(3t - 1) on the z scale; the inherent triangular lower bound."""
    return c * (3.0 * t - 1.0) / math.sqrt(t)


def _bisect(fn, lo, hi, target, tol=_ALPHA_TOL, max_iter=_MAX_BISECT, decreasing=True):
    """Monotone bisection of fn to the target value."""
    f_lo, f_hi = fn(lo), fn(hi)
    if decreasing and not (f_lo >= target >= f_hi):
        raise NoConvergence(f"target {target} not bracketed by [{f_lo}, {f_hi}]")
    if not decreasing and not (f_hi >= target >= f_lo):
        raise NoConvergence(f"target {target} not bracketed by [{f_lo}, {f_hi}]")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        x = 0.5 * (lo + hi)
        f = fn(x)
        if abs(f - target) < tol:
            return x
        high_side = f > target
        if decreasing:
            lo, hi = (x, hi) if high_side else (lo, x)
        else:
            lo, hi = (lo, x) if high_side else (x, hi)
    raise NoConvergence(f"bisection did not reach tolerance after {max_iter} steps")


def _bounds_for_constant(design: GsDesign, c: float, c2: float | None = None):
    t = design.information_fractions
    two_sided = design.shape == "double_triangular"
    upper = [_upper_shape(design.shape, c, x) for x in t]
    if design.futility == "none":
        lower = [-math.inf] * design.looks
    elif design.shape in ("triangular", "double_triangular"):
        lower = [_wedge_shape(c, x) for x in t]
        if two_sided:
            lower = [w if w > 0 else -math.inf for w in lower]
    else:
        delta = c + (c2 or 0.0)
        psi = {"pocock": lambda x: 1.0, "obrien_fleming": lambda x: 1.0 / math.sqrt(x)}[design.shape]
        lower = [delta * math.sqrt(x) - (c2 or 0.0) * psi(x) for x in t]
    lower[-1] = upper[-1]
    return upper, lower, two_sided


def _type1(design: GsDesign, upper, lower, two_sided) -> float:
    include_lower = design.futility == "binding"
    p_eff, _, p_eff_up = _crossing(
        design.information_fractions, upper, lower, 0.0, two_sided, include_lower
    )
    return float(p_eff_up.sum())


def gs_boundaries(design: GsDesign) -> BoundarySet:
    """Calibrate the shape constant so the exact type I error equals alpha.

    Binding futility bounds participate in the calibration recursion;
    non-binding bounds are reported but excluded, so the type I error is
    conservative when they are overruled. The inflation factor compares
    the information needed for the target power against a fixed design.
    """
    z_alpha = float(norm.ppf(1 - design.alpha))
    if design.looks == 1:
        return BoundarySet(
            upper=(z_alpha,),
            lower=(z_alpha,),
            inflation_factor=1.0,
            two_sided=design.shape == "double_triangular",
        )

    needs_c2 = design.futility != "none" and design.shape in ("pocock", "obrien_fleming")

    def solve_c(c2=None):
        def type1_of(c):
            upper, lower, two_sided = _bounds_for_constant(design, c, c2)
            return _type1(design, upper, lower, two_sided)

        lo = 0.05 if design.shape in ("triangular", "double_triangular") else 0.5
        return _bisect(type1_of, lo, 12.0, design.alpha)

    if needs_c2:
        def type2_of(c2):
            c = solve_c(c2)
            upper, lower, two_sided = _bounds_for_constant(design, c, c2)
            # The implied drift is where the bounds meet at the final look;
            # type II error there is the total probability of never
            # crossing the efficacy bound (futility bounds absorbing).
            p_eff, _, _ = _crossing(
                design.information_fractions, upper, lower, c + c2, two_sided, True
            )
            return 1.0 - float(p_eff.sum())

        c2 = _bisect(type2_of, 1e-6, 12.0, design.beta, tol=1e-7, decreasing=True)
        c = solve_c(c2)
        upper, lower, two_sided = _bounds_for_constant(design, c, c2)
    else:
        c = solve_c()
        upper, lower, two_sided = _bounds_for_constant(design, c, None)

    include_lower = design.futility != "none"

    def power(drift: float) -> float:
        p_eff, _, p_up = _crossing(
            design.information_fractions, upper, lower, drift, two_sided, include_lower
        )
        return float(p_up.sum())

    z_beta = float(norm.ppf(1 - design.beta))
    drift_req = _bisect(power, 0.0, 12.0, 1 - design.beta, tol=1e-8, decreasing=False)
    inflation = (drift_req / (z_alpha + z_beta)) ** 2
    return BoundarySet(
        upper=tuple(upper), lower=tuple(lower), inflation_factor=inflation, two_sided=two_sided
    )


def gs_crossing_probs(bounds: BoundarySet, design: GsDesign, drift: float) -> GsCrossing:
    """Per-look stop probabilities and expected information at a drift.

    ``drift`` is the expected final-look z statistic. Non-binding futility
    bounds are excluded from the recursion (they may be overruled), so
    upper crossing probabilities remain exact.
    """
    include_lower = design.futility == "binding"
    p_eff, p_fut, p_up = _crossing(
        design.information_fractions,
        list(bounds.upper),
        list(bounds.lower),
        drift,
        bounds.two_sided,
        include_lower,
    )
    t = np.asarray(design.information_fractions)
    expected = float(np.dot(t, p_eff + p_fut))
    return GsCrossing(
        p_upper=tuple(float(x) for x in p_up),
        p_lower=tuple(float(x) for x in p_fut),
        expected_information=expected,
        p_harm=tuple(float(x) for x in p_eff - p_up),
    )


def gs_test(bounds: BoundarySet, design: GsDesign, z: float, info_fraction: float) -> Recommendation:
    """Apply the boundaries to a freshly computed look statistic."""
    t = design.information_fractions
    matches = [k for k, x in enumerate(t) if abs(x - info_fraction) < 1e-6]
    if not matches:
        raise LookMismatch(f"information fraction {info_fraction} not a design look")
    k = matches[0]
    final = k == design.looks - 1
    upper, lower = bounds.upper[k], bounds.lower[k]
    metrics = {"look": k + 1, "z": z, "upper": upper, "lower": lower}
    if bounds.two_sided:
        if abs(z) >= upper:
            metrics["direction"] = "benefit" if z > 0 else "harm"
            return Recommendation(STOP_EFFICACY, metrics=metrics)
        crossed_futility = final or (math.isfinite(lower) and abs(z) <= lower)
    else:
        if z >= upper:
            return Recommendation(STOP_EFFICACY, metrics=metrics)
        crossed_futility = final or (math.isfinite(lower) and z <= lower)
    if crossed_futility:
        if design.futility == "non_binding" and not final:
            metrics["advisory_futility"] = True
            return Recommendation(CONTINUE, metrics=metrics)
        return Recommendation(STOP_FUTILITY, metrics=metrics)
    return Recommendation(CONTINUE, metrics=metrics)


def boundary_table(design: GsDesign, bounds: BoundarySet) -> list[dict]:
    """Per-look rows: fraction, bounds, cumulative alpha spent under the null."""
    crossing = gs_crossing_probs(bounds, design, 0.0)
    rows = []
    cum = 0.0
    for k in range(design.looks):
        cum += crossing.p_upper[k]
        rows.append(
            {
                "look": k + 1,
                "fraction": design.information_fractions[k],
                "lower": bounds.lower[k],
                "upper": bounds.upper[k],
                "cumulative_alpha": cum,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Sample size machinery: survival event counts and re-assessment.


def required_events_survival(
    hr: float, alpha_two_sided: float, power: float, method: str = "freedman"
) -> int:
    """Events needed to detect a hazard ratio with the given power.

    Default is the ((1+HR)/(1-HR))^2 event count; a log-HR based
    alternative is available with ``method="schoenfeld"``.
    """
    if hr <= 0 or hr == 1:
        raise InvalidHR(f"hazard ratio must be positive and not 1, got {hr}")
    if not 0 < alpha_two_sided < 1 or not 0 < power < 1:
        raise ValueError("alpha and power must lie in (0, 1)")
    z = float(norm.ppf(1 - alpha_two_sided / 2) + norm.ppf(power))
    if method == "freedman":
        events = ((1 + hr) / (1 - hr)) ** 2 * z ** 2
    elif method == "schoenfeld":
        events = 4.0 * z ** 2 / math.log(hr) ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    return int(math.ceil(events))


@dataclass(frozen=True)
class SsrPlan:
    mode: str  # blinded_variance | conditional_power
    delta: float
    min_n: int
    max_n: int
    planning_sd: float | None = None
    planning_hr: float | None = None
    target_cp: float = 0.8
    interim_fraction: float = 0.5

    def __post_init__(self):
        if self.delta == 0:
            raise ValueError("delta must be nonzero")
        if self.min_n > self.max_n:
            raise ValueError("min_n must be <= max_n")

    @classmethod
    def from_parameters(cls, p: dict) -> "SsrPlan":
        return cls(
            mode=p["mode"],
            delta=p["delta"],
            min_n=p["min_n"],
            max_n=p["max_n"],
            planning_sd=p.get("planning_sd"),
            planning_hr=p.get("planning_hr"),
            target_cp=p.get("target_cp", 0.8),
            interim_fraction=p["interim_fraction"],
        )


@dataclass(frozen=True)
class SsrResult:
    new_n_per_arm: int
    futility_cap: bool
    conditional_power: float | None = None


def per_arm_n(sd: float, delta: float, alpha_one_sided: float, power: float) -> int:
    """Two-arm per-group size for a normal endpoint."""
    z = float(norm.ppf(1 - alpha_one_sided) + norm.ppf(power))
    return int(math.ceil(2.0 * sd ** 2 * z ** 2 / delta ** 2))


def ssr_blinded(pooled_sd: float, plan: SsrPlan, design) -> SsrResult:
    """Re-estimated per-arm size from the blinded pooled variance.

    Uses only arm-unlabelled data. The result is clamped to the planned
    range; exceeding the maximum raises the futility-cap flag.
    """
    alpha = design.alpha
    power = design.power if getattr(design, "power", None) else 0.8
    raw = per_arm_n(pooled_sd, plan.delta, alpha, power)
    clamped = min(max(raw, plan.min_n), plan.max_n)
    return SsrResult(new_n_per_arm=clamped, futility_cap=raw > plan.max_n)


def conditional_power(
    z1: float, t1: float, theta_hat: float, alpha_one_sided: float, info_ratio: float = 1.0
) -> float:
    """Probability of final rejection given the interim z and assumed drift.

    All information is normalized to the originally planned final analysis
    (= 1); ``info_ratio`` rescales the final information, e.g. 1.2 means a
    20% larger final sample. ``theta_hat`` is the assumed drift: the
    expected z statistic at the originally planned final analysis.
    """
    if t1 >= 1 or t1 <= 0:
        raise InvalidInterim(f"interim fraction must lie in (0, 1), got {t1}")
    i2 = info_ratio
    if i2 <= t1:
        raise InvalidInterim("final information must exceed interim information")
    z_alpha = float(norm.ppf(1 - alpha_one_sided))
    num = z_alpha * math.sqrt(i2) - z1 * math.sqrt(t1) - theta_hat * (i2 - t1)
    return float(1 - norm.cdf(num / math.sqrt(i2 - t1)))


def ssr_conditional_power(z1: float, t1: float, theta_hat: float, design, plan: SsrPlan) -> SsrResult:
    """Smallest sample size achieving the target conditional power.

    Searches per-arm sizes up to the cap; if none reaches the target the
    cap is returned with the futility flag set.
    """
    if t1 >= 1:
        raise InvalidInterim(f"interim fraction must be below 1, got {t1}")
    alpha = design.alpha
    power = design.power if getattr(design, "power", None) else 0.8
    if plan.planning_sd is None:
        raise ValueError("conditional-power re-assessment needs planning_sd")
    n_planned = per_arm_n(plan.planning_sd, plan.delta, alpha, power)
    cp_planned = conditional_power(z1, t1, theta_hat, alpha, 1.0)
    n_lo = max(plan.min_n, int(math.floor(t1 * n_planned)) + 1)
    candidates = np.arange(n_lo, plan.max_n + 1)
    if candidates.size:
        ratios = candidates / n_planned
        cps = np.array(
            [conditional_power(z1, t1, theta_hat, alpha, r) for r in ratios]
        )
        ok = np.flatnonzero(cps >= plan.target_cp)
        if ok.size:
            n = int(candidates[ok[0]])
            return SsrResult(new_n_per_arm=n, futility_cap=False, conditional_power=float(cps[ok[0]]))
    return SsrResult(new_n_per_arm=plan.max_n, futility_cap=True, conditional_power=cp_planned)
