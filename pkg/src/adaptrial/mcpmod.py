"""Two-step dose-response analysis: multiplicity-adjusted signal test, then
model fitting and target-dose estimation.

Each candidate shape contributes its optimal contrast (the direction
maximizing the non-centrality under that shape). The signal test compares
the maximum contrast statistic against a critical value that accounts for
the correlation between contrasts, so the chance of a spurious
dose-response claim stays at alpha no matter how many shapes were
entertained. Detected signals are then fitted properly and the smallest
dose reaching the clinically relevant effect is read off the fitted curve,
which may land between the doses actually studied.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.special import expit
from scipy.stats import norm

from .errors import DegenerateModel, NoSignal, TargetUnreachable, VarianceUnavailable
from .rng import rng_stream

DEFAULT_MC_DRAWS = 131072


@dataclass(frozen=True)
class CandidateModel:
    family: str  # linear | quadratic | logistic | emax
    peak: float | None = None  # quadratic: dose of maximum effect
    ed50: float | None = None  # logistic / emax
    steepness: float | None = None  # logistic; default ed50 / 4

    def __post_init__(self):
        if self.family == "quadratic" and not self.peak:
            raise ValueError("quadratic model needs the dose of maximum effect")
        if self.family in ("logistic", "emax") and not self.ed50:
            raise ValueError(f"{self.family} model needs ed50")

    @property
    def name(self) -> str:
        if self.family == "linear":
            return "linear"
        if self.family == "quadratic":
            return f"quadratic(peak={self.peak:g})"
        if self.family == "logistic":
            return f"logistic(ed50={self.ed50:g})"
        return f"emax(ed50={self.ed50:g})"

    @classmethod
    def from_parameters(cls, p: dict) -> "CandidateModel":
        return cls(
            family=p["family"],
            peak=p.get("peak"),
            ed50=p.get("ed50"),
            steepness=p.get("steepness"),
        )


def candidate_means(model: CandidateModel, doses) -> np.ndarray:
    """Standardized mean response at each dose (location-scale free).

    The logistic steepness convention, when not given, is ed50 / 4: the
    curve then rises over roughly (0, 2 * ed50), a sensible default for
    mid-range ed50 guesses.
    """
    d = np.asarray(doses, dtype=float)
    if model.family == "linear":
        mu = d.copy()
    elif model.family == "quadratic":
        mu = d - d ** 2 / (2.0 * model.peak)
    elif model.family == "logistic":
        steep = model.steepness if model.steepness else model.ed50 / 4.0
        mu = expit((d - model.ed50) / steep)
    elif model.family == "emax":
        mu = d / (model.ed50 + d)
    else:
        raise ValueError(f"unknown model family {model.family!r}")
    if np.ptp(mu) < 1e-12:
        raise DegenerateModel(f"model {model.name} is constant over the dose grid")
    return mu


@dataclass(frozen=True)
class ContrastSet:
    names: tuple[str, ...]
    contrasts: tuple[tuple[float, ...], ...]  # one unit vector per model
    correlation: tuple[tuple[float, ...], ...]
    group_sizes: tuple[int, ...]


def optimal_contrasts(means_per_model: dict[str, np.ndarray], n) -> ContrastSet:
    """Contrast vectors maximizing each model's non-centrality.

    c is proportional to n * (mu - weighted mean of mu), normalized to
    unit length; the correlation matrix follows from the 1/n inner
    products of the contrasts.
    """
    n = np.asarray(n, dtype=float)
    names = tuple(means_per_model)
    rows = []
    for name in names:
        mu = np.asarray(means_per_model[name], dtype=float)
        if len(mu) != len(n) or len(mu) < 2:
            raise DegenerateModel(f"model {name}: need one mean per dose group")
        centered = mu - float(np.dot(n, mu) / n.sum())
        c = n * centered
        norm_c = float(np.linalg.norm(c))
        if norm_c < 1e-12:
            raise DegenerateModel(f"model {name}: contrast degenerate (constant means)")
        rows.append(c / norm_c)
    C = np.vstack(rows)
    inner = (C / n) @ C.T  # c' diag(1/n) c cross-products
    scale = np.sqrt(np.diag(inner))
    corr = inner / np.outer(scale, scale)
    return ContrastSet(
        names=names,
        contrasts=tuple(tuple(float(x) for x in row) for row in C),
        correlation=tuple(tuple(float(x) for x in row) for row in corr),
        group_sizes=tuple(int(x) for x in n),
    )


def pooled_sd(summaries) -> float:
    """Pooled standard deviation from per-arm (n, sd) summaries."""
    num = 0.0
    den = 0
    for s in summaries:
        if s.sd is None or s.n < 2:
            continue
        num += (s.n - 1) * s.sd ** 2
        den += s.n - 1
    if den == 0:
        raise VarianceUnavailable("no arm provides a variance estimate")
    return math.sqrt(num / den)


def adjusted_critical_value(
    correlation, alpha: float, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = 0
) -> float:
    """(1 - alpha) quantile of the max contrast statistic under no signal.

    A single candidate model needs no adjustment, so the plain normal
    quantile is returned exactly.
    """
    R = np.asarray(correlation, dtype=float)
    m = R.shape[0]
    if m == 1:
        return float(norm.ppf(1 - alpha))
    rng = rng_stream(seed, 0)
    L = np.linalg.cholesky(R + 1e-10 * np.eye(m))
    draws = rng.standard_normal((mc_draws, m)) @ L.T
    return float(np.quantile(draws.max(axis=1), 1 - alpha))


@dataclass(frozen=True)
class McpResult:
    statistics: dict[str, float]
    critical_value: float
    significant: tuple[str, ...]
    max_statistic: float
    adjusted_p: float

    @property
    def signal_detected(self) -> bool:
        return bool(self.significant)


def mcp_test(
    summaries,
    contrasts: ContrastSet,
    alpha: float,
    mc_draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
) -> McpResult:
    """Multiplicity-adjusted test for any dose-response signal.

    ``summaries`` are per-arm records ordered by dose with n, mean, sd.
    An empty significant set means the signal cannot be detected.
    """
    ybar = np.array([s.mean for s in summaries], dtype=float)
    n = np.array([s.n for s in summaries], dtype=float)
    if list(n.astype(int)) != list(contrasts.group_sizes):
        raise ValueError("summary group sizes do not match the contrast set")
    sigma = pooled_sd(summaries)
    stats = {}
    for name, c in zip(contrasts.names, contrasts.contrasts):
        c = np.asarray(c)
        se = sigma * math.sqrt(float(np.sum(c ** 2 / n)))
        stats[name] = float(np.dot(c, ybar) / se)
    q = adjusted_critical_value(contrasts.correlation, alpha, mc_draws, seed)
    max_t = max(stats.values())
    # Adjusted p by the same reference distribution.
    R = np.asarray(contrasts.correlation)
    if R.shape[0] == 1:
        adj_p = float(1 - norm.cdf(max_t))
    else:
        rng = rng_stream(seed, 0)
        L = np.linalg.cholesky(R + 1e-10 * np.eye(R.shape[0]))
        draws = rng.standard_normal((mc_draws, R.shape[0])) @ L.T
        adj_p = float((draws.max(axis=1) > max_t).mean())
    significant = tuple(name for name, t in stats.items() if t > q)
    return McpResult(
        statistics=stats,
        critical_value=q,
        significant=significant,
        max_statistic=max_t,
        adjusted_p=adj_p,
    )


# ---------------------------------------------------------------------------
# Model fitting, selection, and target dose


@dataclass(frozen=True)
class FittedModel:
    family: str
    params: tuple[float, ...]
    rss: float
    aic: float
    name: str

    def predict(self, d):
        d = np.asarray(d, dtype=float)
        p = self.params
        if self.family == "linear":
            return p[0] + p[1] * d
        if self.family == "quadratic":
            return p[0] + p[1] * d + p[2] * d ** 2
        if self.family == "logistic":
            a, b, ed50, steep = p
            return a + b * expit((d - ed50) / steep)
        a, b, ed50 = p
        return a + b * d / (ed50 + d)


@dataclass(frozen=True)
class DoseResponseFit:
    mode: str
    fits: tuple[FittedModel, ...]
    weights: tuple[float, ...]
    selected: str

    def predict(self, d):
        out = 0.0
        for w, f in zip(self.weights, self.fits):
            out = out + w * f.predict(d)
        return out


def _fit_one(model: CandidateModel, doses, ybar, n, within_ss: float, n_total: int) -> FittedModel:
    d = np.asarray(doses, dtype=float)
    w = np.asarray(n, dtype=float)
    y = np.asarray(ybar, dtype=float)
    sw = np.sqrt(w)

    if model.family == "linear":
        X = np.column_stack([np.ones_like(d), d])
        beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        params, k = tuple(beta), 2
        pred = X @ beta
    elif model.family == "quadratic":
        X = np.column_stack([np.ones_like(d), d, d ** 2])
        beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        params, k = tuple(beta), 3
        pred = X @ beta
    elif model.family == "logistic":
        steep0 = model.steepness if model.steepness else model.ed50 / 4.0

        def f(x, a, b, ed50, steep):
            return a + b * expit((x - ed50) / steep)

        p0 = [float(y[0]), float(y[-1] - y[0]) or 1.0, model.ed50, steep0]
        try:
            with warnings.catch_warnings():
                # Saturated fits (as many params as doses) have no dof for
                # a covariance estimate; only the point fit is used.
                warnings.simplefilter("ignore", OptimizeWarning)
                beta, _ = curve_fit(f, d, y, p0=p0, sigma=1.0 / sw, absolute_sigma=False, maxfev=5000)
        except RuntimeError:
            beta = np.asarray(p0)
        params, k = tuple(float(x) for x in beta), 4
        pred = f(d, *beta)
    elif model.family == "emax":
        def f(x, a, b, ed50):
            return a + b * x / (ed50 + x)

        p0 = [float(y[0]), float(y[-1] - y[0]) or 1.0, model.ed50]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                beta, _ = curve_fit(f, d, y, p0=p0, sigma=1.0 / sw, absolute_sigma=False, maxfev=5000)
        except RuntimeError:
            beta = np.asarray(p0)
        params, k = tuple(float(x) for x in beta), 3
    else:
        raise ValueError(f"unknown model family {model.family!r}")
    if model.family == "emax":
        pred = params[0] + params[1] * d / (params[2] + d)
    rss = float(np.sum(w * (y - pred) ** 2)) + within_ss
    aic = n_total * math.log(rss / n_total) + 2 * k
    return FittedModel(family=model.family, params=tuple(float(x) for x in params), rss=rss, aic=aic, name=model.name)


def mod_select_fit(summaries, doses, models, significant, mode: str, statistics=None) -> DoseResponseFit:
    """Fit the significant candidate models and select or average them.

    ``mode``: ``max_t`` keeps the model with the largest contrast
    statistic, ``aic`` minimizes the information criterion, ``average``
    blends predictions with exp(-delta AIC / 2) weights.
    """
    if not significant:
        raise NoSignal("the dose-response signal cannot be detected")
    by_name = {m.name: m for m in models}
    ybar = [s.mean for s in summaries]
    n = [s.n for s in summaries]
    within_ss = sum((s.n - 1) * s.sd ** 2 for s in summaries if s.sd is not None and s.n > 1)
    n_total = int(sum(n))
    fits = {}
    for name in significant:
        fits[name] = _fit_one(by_name[name], doses, ybar, n, within_ss, n_total)
    if mode == "max_t":
        if statistics is None:
            raise ValueError("max_t selection needs the contrast statistics")
        selected = max(significant, key=lambda nm: statistics[nm])
        chosen = (fits[selected],)
        weights = (1.0,)
    elif mode == "aic":
        selected = min(significant, key=lambda nm: fits[nm].aic)
        chosen = (fits[selected],)
        weights = (1.0,)
    elif mode == "average":
        aics = np.array([fits[nm].aic for nm in significant])
        w = np.exp(-(aics - aics.min()) / 2.0)
        w = w / w.sum()
        selected = "average"
        chosen = tuple(fits[nm] for nm in significant)
        weights = tuple(float(x) for x in w)
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    return DoseResponseFit(mode=mode, fits=chosen, weights=weights, selected=selected)


def target_dose(fit: DoseResponseFit, delta: float, dose_max: float, tol: float = 1e-6) -> float:
    """Smallest dose whose predicted effect over placebo reaches delta.

    Negative delta means the clinically relevant change is a decrease.
    The curve is scanned on a dense grid to bracket the first crossing,
    then bisected to the requested dose tolerance; the answer may lie
    between the doses actually studied.
    """
    sign = 1.0 if delta >= 0 else -1.0
    magnitude = abs(delta)
    base = float(fit.predict(0.0))

    def effect(d):
        return sign * (fit.predict(d) - base)

    grid = np.linspace(0.0, dose_max, 4097)
    values = np.asarray(effect(grid))
    if values.max() < magnitude:
        raise TargetUnreachable(
            f"maximum predicted effect {values.max():.6g} below delta {magnitude:.6g}"
        )
    idx = int(np.argmax(values >= magnitude))
    if idx == 0:
        return 0.0
    lo, hi = grid[idx - 1], grid[idx]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if effect(mid) >= magnitude:
            hi = mid
        else:
            lo = mid
    return float(hi)
