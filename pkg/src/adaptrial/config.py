"""Design configuration: the tagged union over all supported design families.

``validate_design_config`` turns raw parsed JSON into a canonical
``DesignConfig`` (defaults materialized, fields typed) or raises
``InvalidConfig`` carrying *every* violation found. The canonical form is
what gets hashed into the audit log, so validation must be idempotent:
re-validating a serialized config yields an identical object.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .audit import canonical_json
from .errors import InvalidConfig
from .types import DoseGrid

KINDS = (
    "three_plus_three",
    "crm",
    "ewoc",
    "gsd",
    "ssr",
    "mams",
    "dtl",
    "rar",
    "cara",
    "mcpmod",
    "enrichment",
)

GS_SHAPES = ("pocock", "obrien_fleming", "triangular", "double_triangular")
MAMS_SHAPES = ("pocock", "obrien_fleming", "triangular")

DEFAULT_CRM_PRIOR_SD = math.sqrt(1.34)


@dataclass(frozen=True)
class DesignConfig:
    kind: str
    parameters: dict
    alpha: float
    seed: int
    power: float | None = None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "parameters": self.parameters,
            "alpha": self.alpha,
            "seed": self.seed,
        }
        if self.power is not None:
            d["power"] = self.power
        return d

    @property
    def design_id(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:16]

    def dose_grid(self) -> DoseGrid:
        g = self.parameters["dose_grid"]
        return DoseGrid(tuple((lv["label"], lv["value"]) for lv in g["levels"]), g["unit"])


class _Check:
    """Accumulates field-level violations instead of failing fast."""

    def __init__(self):
        self.violations = []

    def fail(self, field_name, message):
        self.violations.append({"field": field_name, "message": message})

    def number(self, raw, field_name, lo=None, hi=None, open_lo=False, open_hi=False):
        try:
            x = float(raw)
        except (TypeError, ValueError):
            self.fail(field_name, f"expected a number, got {raw!r}")
            return None
        if not math.isfinite(x):
            self.fail(field_name, "must be finite")
            return None
        if lo is not None and (x < lo or (open_lo and x == lo)):
            self.fail(field_name, f"must be {'>' if open_lo else '>='} {lo}")
            return None
        if hi is not None and (x > hi or (open_hi and x == hi)):
            self.fail(field_name, f"must be {'<' if open_hi else '<='} {hi}")
            return None
        return x

    def integer(self, raw, field_name, lo=None, hi=None):
        if raw is None or isinstance(raw, bool) or (isinstance(raw, float) and raw != int(raw)):
            self.fail(field_name, f"expected an integer, got {raw!r}")
            return None
        try:
            x = int(raw)
        except (TypeError, ValueError):
            self.fail(field_name, f"expected an integer, got {raw!r}")
            return None
        if lo is not None and x < lo:
            self.fail(field_name, f"must be >= {lo}")
            return None
        if hi is not None and x > hi:
            self.fail(field_name, f"must be <= {hi}")
            return None
        return x

    def boolean(self, raw, field_name, default):
        if raw is None:
            return default
        if isinstance(raw, bool):
            return raw
        self.fail(field_name, f"expected a boolean, got {raw!r}")
        return default

    def choice(self, raw, field_name, options, default=None):
        if raw is None and default is not None:
            return default
        if raw in options:
            return raw
        self.fail(field_name, f"must be one of {list(options)}, got {raw!r}")
        return None


def _check_dose_grid(chk: _Check, raw, field_name="parameters.dose_grid"):
    if not isinstance(raw, dict):
        chk.fail(field_name, "expected an object with 'levels' or 'values'")
        return None
    unit = raw.get("unit", "")
    levels = []
    if "levels" in raw:
        for i, lv in enumerate(raw["levels"]):
            if not isinstance(lv, dict) or "value" not in lv:
                chk.fail(f"{field_name}.levels[{i}]", "expected {label, value}")
                return None
            levels.append({"label": str(lv.get("label", f"dose{i + 1}")), "value": float(lv["value"])})
    elif "values" in raw:
        for i, v in enumerate(raw["values"]):
            levels.append({"label": f"dose{i + 1}", "value": float(v)})
    else:
        chk.fail(field_name, "missing 'levels' or 'values'")
        return None
    if len(levels) < 2:
        chk.fail(field_name, "dose grid must have at least 2 levels")
        return None
    values = [lv["value"] for lv in levels]
    if any(v <= 0 for v in values):
        chk.fail(field_name, "dose values must be positive")
        return None
    if any(b <= a for a, b in zip(values, values[1:])):
        chk.fail(field_name, "dose values must be strictly increasing")
        return None
    labels = [lv["label"] for lv in levels]
    if len(set(labels)) != len(labels):
        chk.fail(field_name, "dose labels must be unique")
        return None
    return {"unit": str(unit), "levels": levels}


def _check_increasing_probs(chk: _Check, raw, field_name):
    if not isinstance(raw, (list, tuple)) or len(raw) < 2:
        chk.fail(field_name, "expected a list of at least 2 probabilities")
        return None
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError):
        chk.fail(field_name, "entries must be numbers")
        return None
    if any(not 0.0 < v < 1.0 for v in vals):
        chk.fail(field_name, "entries must lie strictly inside (0, 1)")
        return None
    if any(b <= a for a, b in zip(vals, vals[1:])):
        chk.fail(field_name, "skeleton not strictly increasing")
        return None
    return vals


def _validate_three_plus_three(chk: _Check, p: dict) -> dict:
    grid = _check_dose_grid(chk, p.get("dose_grid"))
    cohort_size = chk.integer(p.get("cohort_size", 3), "parameters.cohort_size", lo=1)
    expand_on = p.get("expand_on", [1])
    if not isinstance(expand_on, (list, tuple)) or (
        cohort_size is not None and any(not isinstance(e, int) or not 0 <= e <= cohort_size for e in expand_on)
    ):
        chk.fail("parameters.expand_on", f"must be a subset of 0..cohort_size")
        expand_on = [1]
    max_per_dose = chk.integer(p.get("max_per_dose", 6), "parameters.max_per_dose", lo=1)
    max_tol = chk.integer(p.get("max_tolerated_expanded", 1), "parameters.max_tolerated_expanded", lo=0)
    if max_per_dose is not None and max_tol is not None and max_tol >= max_per_dose:
        chk.fail("parameters.max_tolerated_expanded", "must be below max_per_dose")
    out = {
        "dose_grid": grid,
        "cohort_size": cohort_size,
        "expand_on": sorted(set(int(e) for e in expand_on)),
        "max_per_dose": max_per_dose,
        "max_tolerated_expanded": max_tol,
        "allow_deescalation": chk.boolean(p.get("allow_deescalation"), "parameters.allow_deescalation", False),
        "start_dose": chk.integer(p.get("start_dose", 0), "parameters.start_dose", lo=0),
    }
    if grid is not None and out["start_dose"] is not None and out["start_dose"] >= len(grid["levels"]):
        chk.fail("parameters.start_dose", "start_dose outside dose grid")
    return out


def _validate_crm(chk: _Check, p: dict) -> dict:
    grid = _check_dose_grid(chk, p.get("dose_grid"))
    skeleton = _check_increasing_probs(chk, p.get("skeleton"), "parameters.skeleton")
    if grid is not None and skeleton is not None and len(skeleton) != len(grid["levels"]):
        chk.fail("parameters.skeleton", "skeleton length must match dose grid size")
    target = chk.number(p.get("target"), "parameters.target", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    stop = p.get("stop_rule", {}) or {}
    if not isinstance(stop, dict):
        chk.fail("parameters.stop_rule", "expected an object")
        stop = {}
    n_lookahead = chk.integer(stop.get("n_lookahead", 5), "parameters.stop_rule.n_lookahead", lo=0)
    out = {
        "dose_grid": grid,
        "skeleton": skeleton,
        "target": target,
        "prior_sd": chk.number(p.get("prior_sd", DEFAULT_CRM_PRIOR_SD), "parameters.prior_sd", lo=0.0, open_lo=True),
        "no_skipping": chk.boolean(p.get("no_skipping"), "parameters.no_skipping", True),
        "selection": chk.choice(p.get("selection"), "parameters.selection", ("closest", "highest_below"), "closest"),
        "estimator": chk.choice(p.get("estimator"), "parameters.estimator", ("posterior_mean", "plugin"), "posterior_mean"),
        "cohort_size": chk.integer(p.get("cohort_size", 3), "parameters.cohort_size", lo=1),
        "start_dose": chk.integer(p.get("start_dose", 0), "parameters.start_dose", lo=0),
        "run_in": chk.boolean(p.get("run_in"), "parameters.run_in", False),
        "stop_rule": {
            "n_lookahead": n_lookahead,
            "prob_threshold": chk.number(stop.get("prob_threshold", 0.90), "parameters.stop_rule.prob_threshold", lo=0.0, hi=1.0, open_lo=True),
            "max_n": chk.integer(stop.get("max_n", 30), "parameters.stop_rule.max_n", lo=1),
            "node_cap": chk.integer(
                stop.get("node_cap", 4 ** (n_lookahead or 5)), "parameters.stop_rule.node_cap", lo=1
            ),
        },
    }
    if grid is not None and out["start_dose"] is not None and out["start_dose"] >= len(grid["levels"]):
        chk.fail("parameters.start_dose", "start_dose outside dose grid")
    return out


def _validate_ewoc(chk: _Check, p: dict) -> dict:
    grid = _check_dose_grid(chk, p.get("dose_grid"))
    target = chk.number(p.get("target"), "parameters.target", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    fa = chk.number(p.get("feasibility_alpha", 0.25), "parameters.feasibility_alpha", lo=0.0, hi=0.5, open_lo=True, open_hi=True)
    inc = chk.number(p.get("alpha_increment", 0.0), "parameters.alpha_increment", lo=0.0)
    gs = p.get("grid_size", [201, 201])
    if not isinstance(gs, (list, tuple)) or len(gs) != 2:
        chk.fail("parameters.grid_size", "expected [n_rho, n_gamma]")
        gs = [201, 201]
    out = {
        "dose_grid": grid,
        "target": target,
        "feasibility_alpha": fa,
        "alpha_increment": inc,
        "feasibility_cap": chk.number(p.get("feasibility_cap", 0.5), "parameters.feasibility_cap", lo=0.0, hi=0.5, open_lo=True),
        "grid_size": [
            chk.integer(gs[0], "parameters.grid_size[0]", lo=2),
            chk.integer(gs[1], "parameters.grid_size[1]", lo=2),
        ],
        "no_skipping": chk.boolean(p.get("no_skipping"), "parameters.no_skipping", True),
        "cohort_size": chk.integer(p.get("cohort_size", 3), "parameters.cohort_size", lo=1),
        "start_dose": chk.integer(p.get("start_dose", 0), "parameters.start_dose", lo=0),
        "max_n": chk.integer(p.get("max_n", 30), "parameters.max_n", lo=1),
    }
    return out


def _validate_gsd(chk: _Check, p: dict) -> dict:
    looks = chk.integer(p.get("looks"), "parameters.looks", lo=1)
    fractions = p.get("information_fractions")
    if fractions is None and looks is not None:
        fractions = [(k + 1) / looks for k in range(looks)]
    if fractions is not None:
        try:
            fractions = [float(t) for t in fractions]
        except (TypeError, ValueError):
            chk.fail("parameters.information_fractions", "entries must be numbers")
            fractions = None
    if fractions is not None:
        if looks is not None and len(fractions) != looks:
            chk.fail("parameters.information_fractions", "length must equal looks")
        if any(not 0 < t <= 1 for t in fractions):
            chk.fail("parameters.information_fractions", "entries must lie in (0, 1]")
        elif any(b <= a for a, b in zip(fractions, fractions[1:])):
            chk.fail("parameters.information_fractions", "must be strictly increasing")
        elif abs(fractions[-1] - 1.0) > 1e-12:
            chk.fail("parameters.information_fractions", "must end at 1")
    return {
        "looks": looks,
        "information_fractions": fractions,
        "beta": chk.number(p.get("beta", 0.1), "parameters.beta", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "shape": chk.choice(p.get("shape"), "parameters.shape", GS_SHAPES, "obrien_fleming"),
        "futility": chk.choice(p.get("futility"), "parameters.futility", ("none", "binding", "non_binding"), "none"),
        "n_per_arm": chk.integer(p.get("n_per_arm", 100), "parameters.n_per_arm", lo=1),
    }


def _validate_ssr(chk: _Check, p: dict) -> dict:
    mode = chk.choice(p.get("mode"), "parameters.mode", ("blinded_variance", "conditional_power"))
    out = {
        "mode": mode,
        "delta": chk.number(p.get("delta"), "parameters.delta"),
        "min_n": chk.integer(p.get("min_n"), "parameters.min_n", lo=1),
        "max_n": chk.integer(p.get("max_n"), "parameters.max_n", lo=1),
        "interim_fraction": chk.number(p.get("interim_fraction", 0.5), "parameters.interim_fraction", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
    }
    if out["delta"] == 0:
        chk.fail("parameters.delta", "delta must be nonzero")
    if out["min_n"] is not None and out["max_n"] is not None and out["min_n"] > out["max_n"]:
        chk.fail("parameters.min_n", "min_n must be <= max_n")
    if p.get("planning_sd") is not None:
        out["planning_sd"] = chk.number(p.get("planning_sd"), "parameters.planning_sd", lo=0.0, open_lo=True)
    elif p.get("planning_hr") is not None:
        out["planning_hr"] = chk.number(p.get("planning_hr"), "parameters.planning_hr", lo=0.0, open_lo=True)
    else:
        chk.fail("parameters.planning_sd", "one of planning_sd or planning_hr is required")
    if mode == "conditional_power":
        out["target_cp"] = chk.number(p.get("target_cp", 0.8), "parameters.target_cp", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    return out


def _validate_mams(chk: _Check, p: dict) -> dict:
    return {
        "n_arms": chk.integer(p.get("n_arms"), "parameters.n_arms", lo=1),
        "stages": chk.integer(p.get("stages"), "parameters.stages", lo=1),
        "allocation_ratio": chk.number(p.get("allocation_ratio", 1.0), "parameters.allocation_ratio", lo=0.0, open_lo=True),
        "boundary_shape": chk.choice(p.get("boundary_shape"), "parameters.boundary_shape", MAMS_SHAPES, "triangular"),
        "power_mode": chk.choice(p.get("power_mode"), "parameters.power_mode", ("least_favorable", "global"), "least_favorable"),
        "n_stage": chk.integer(p.get("n_stage"), "parameters.n_stage", lo=1),
        "futility": chk.choice(p.get("futility"), "parameters.futility", ("binding", "non_binding", "none"), "binding"),
    }


def _validate_dtl(chk: _Check, p: dict) -> dict:
    n_arms = chk.integer(p.get("n_arms"), "parameters.n_arms", lo=1)
    schedule = p.get("keep_schedule")
    if not isinstance(schedule, (list, tuple)) or not schedule:
        chk.fail("parameters.keep_schedule", "expected a non-empty list")
        schedule = None
    else:
        schedule = [chk.integer(k, f"parameters.keep_schedule[{i}]", lo=1) for i, k in enumerate(schedule)]
        if None not in schedule:
            if schedule[-1] != 1:
                chk.fail("parameters.keep_schedule", "must end at 1")
            if any(b >= a for a, b in zip(schedule, schedule[1:])):
                chk.fail("parameters.keep_schedule", "must be strictly decreasing")
            if n_arms is not None and schedule[0] >= n_arms and n_arms > 1:
                chk.fail("parameters.keep_schedule", "first entry must drop at least one arm")
    out = {
        "n_arms": n_arms,
        "keep_schedule": schedule,
        "n_stage": chk.integer(p.get("n_stage"), "parameters.n_stage", lo=1),
    }
    if p.get("critical_value") is not None:
        out["critical_value"] = chk.number(p.get("critical_value"), "parameters.critical_value")
    return out


def _validate_policy(chk: _Check, p: dict, n_arms) -> dict:
    pol = p.get("policy", {}) or {}
    if not isinstance(pol, dict):
        chk.fail("parameters.policy", "expected an object")
        pol = {}
    drop = chk.number(pol.get("drop_threshold", 0.10), "parameters.policy.drop_threshold", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    promote = chk.number(pol.get("promote_threshold", 0.90), "parameters.policy.promote_threshold", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    if drop is not None and promote is not None and drop >= promote:
        chk.fail("parameters.policy.drop_threshold", "must be below promote_threshold")
    fix_control = chk.boolean(pol.get("fix_control"), "parameters.policy.fix_control", False)
    control_prob = pol.get("control_prob")
    if control_prob is None and fix_control and n_arms:
        control_prob = 1.0 / n_arms
    return {
        "fix_control": fix_control,
        "control_prob": None if control_prob is None else chk.number(control_prob, "parameters.policy.control_prob", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "drop_threshold": drop,
        "promote_threshold": promote,
        "tuning_exponent": chk.number(pol.get("tuning_exponent", 1.0), "parameters.policy.tuning_exponent", lo=0.0, hi=1.0),
        "update_cadence": chk.integer(pol.get("update_cadence", 1), "parameters.policy.update_cadence", lo=1),
        "burn_in": chk.integer(pol.get("burn_in", 0), "parameters.policy.burn_in", lo=0),
    }


def _validate_rar(chk: _Check, p: dict) -> dict:
    n_arms = chk.integer(p.get("n_arms"), "parameters.n_arms", lo=2)
    return {
        "n_arms": n_arms,
        "prior_a": chk.number(p.get("prior_a", 1.0), "parameters.prior_a", lo=0.0, open_lo=True),
        "prior_b": chk.number(p.get("prior_b", 1.0), "parameters.prior_b", lo=0.0, open_lo=True),
        "policy": _validate_policy(chk, p, n_arms),
        "max_n": chk.integer(p.get("max_n", 100), "parameters.max_n", lo=1),
        "mc_draws": chk.integer(p.get("mc_draws", 16384), "parameters.mc_draws", lo=100),
    }


def _validate_cara(chk: _Check, p: dict) -> dict:
    out = _validate_rar(chk, p)
    strata = p.get("strata")
    if not isinstance(strata, (list, tuple)) or not strata or len(set(strata)) != len(strata):
        chk.fail("parameters.strata", "expected a non-empty list of unique stratum labels")
        strata = None
    else:
        strata = [str(s) for s in strata]
    out["strata"] = strata
    return out


MODEL_FAMILIES = ("linear", "quadratic", "logistic", "emax")


def _validate_mcpmod(chk: _Check, p: dict) -> dict:
    doses = p.get("doses")
    if not isinstance(doses, (list, tuple)) or len(doses) < 2:
        chk.fail("parameters.doses", "expected at least 2 doses")
        doses = None
    else:
        doses = [float(d) for d in doses]
        if any(d < 0 for d in doses) or any(b <= a for a, b in zip(doses, doses[1:])):
            chk.fail("parameters.doses", "must be non-negative and strictly increasing")
            doses = None
    models_raw = p.get("models")
    models = []
    if not isinstance(models_raw, (list, tuple)) or not models_raw:
        chk.fail("parameters.models", "expected a non-empty list of candidate models")
    else:
        for i, m in enumerate(models_raw):
            if not isinstance(m, dict):
                chk.fail(f"parameters.models[{i}]", "expected an object")
                continue
            fam = chk.choice(m.get("family"), f"parameters.models[{i}].family", MODEL_FAMILIES)
            entry = {"family": fam}
            if fam == "quadratic":
                entry["peak"] = chk.number(m.get("peak"), f"parameters.models[{i}].peak", lo=0.0, open_lo=True)
            elif fam == "logistic":
                entry["ed50"] = chk.number(m.get("ed50"), f"parameters.models[{i}].ed50", lo=0.0, open_lo=True)
                if m.get("steepness") is not None:
                    entry["steepness"] = chk.number(m.get("steepness"), f"parameters.models[{i}].steepness", lo=0.0, open_lo=True)
            elif fam == "emax":
                entry["ed50"] = chk.number(m.get("ed50"), f"parameters.models[{i}].ed50", lo=0.0, open_lo=True)
            models.append(entry)
    return {
        "doses": doses,
        "models": models,
        "delta": chk.number(p.get("delta"), "parameters.delta"),
        "selection": chk.choice(p.get("selection"), "parameters.selection", ("max_t", "aic", "average"), "max_t"),
        "n_per_arm": chk.integer(p.get("n_per_arm", 30), "parameters.n_per_arm", lo=2),
    }


def _validate_enrichment(chk: _Check, p: dict) -> dict:
    subgroups = p.get("subgroups")
    if not isinstance(subgroups, (list, tuple)) or len(subgroups) != 2:
        chk.fail("parameters.subgroups", "expected exactly 2 subgroup labels")
        subgroups = None
    else:
        subgroups = [str(s) for s in subgroups]
    weights = p.get("weights", [math.sqrt(0.5), math.sqrt(0.5)])
    if not isinstance(weights, (list, tuple)) or len(weights) != 2:
        chk.fail("parameters.weights", "expected [w1, w2]")
        weights = None
    else:
        weights = [float(w) for w in weights]
        if any(w <= 0 for w in weights) or abs(weights[0] ** 2 + weights[1] ** 2 - 1.0) > 1e-9:
            chk.fail("parameters.weights", "weights must be positive with w1^2 + w2^2 = 1")
            weights = None
    actions = p.get("actions", {}) or {}
    plans = {}
    for name in ("continue_full", "expand_full", "enrich_subgroup"):
        plan = actions.get(name, {}) or {}
        plans[name] = {
            "patients": chk.integer(plan.get("patients", 0), f"parameters.actions.{name}.patients", lo=0),
            "events": chk.integer(plan.get("events", 0), f"parameters.actions.{name}.events", lo=0),
        }
    return {
        "subgroups": subgroups,
        "weights": weights,
        "interim_fraction": chk.number(p.get("interim_fraction", 0.5), "parameters.interim_fraction", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "favorable_cp": chk.number(p.get("favorable_cp", 0.8), "parameters.favorable_cp", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "promising_cp_low": chk.number(p.get("promising_cp_low", 0.3), "parameters.promising_cp_low", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "subgroup_info_fraction": chk.number(p.get("subgroup_info_fraction", 0.5), "parameters.subgroup_info_fraction", lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "intersection": chk.choice(p.get("intersection"), "parameters.intersection", ("bonferroni", "simes"), "bonferroni"),
        "actions": plans,
    }


_VALIDATORS = {
    "three_plus_three": _validate_three_plus_three,
    "crm": _validate_crm,
    "ewoc": _validate_ewoc,
    "gsd": _validate_gsd,
    "ssr": _validate_ssr,
    "mams": _validate_mams,
    "dtl": _validate_dtl,
    "rar": _validate_rar,
    "cara": _validate_cara,
    "mcpmod": _validate_mcpmod,
    "enrichment": _validate_enrichment,
}


def validate_design_config(raw: dict) -> DesignConfig:
    """Validate raw structured data into a canonical ``DesignConfig``.

    Raises ``InvalidConfig`` listing all violations found.
    """
    chk = _Check()
    if not isinstance(raw, dict):
        raise InvalidConfig([{"field": "", "message": "expected a JSON object"}])
    kind = chk.choice(raw.get("kind"), "kind", KINDS)
    alpha = chk.number(raw.get("alpha", 0.025), "alpha", lo=0.0, open_lo=True)
    if alpha is not None and alpha >= 0.5:
        chk.fail("alpha", "alpha must be below 0.5")
        alpha = None
    power = None
    if raw.get("power") is not None:
        power = chk.number(raw.get("power"), "power", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    seed = chk.integer(raw.get("seed", 0), "seed", lo=0)
    if seed is not None and seed >= 2 ** 64:
        chk.fail("seed", "seed must fit in 64 bits")
        seed = None
    params_raw = raw.get("parameters", {})
    if not isinstance(params_raw, dict):
        chk.fail("parameters", "expected an object")
        params_raw = {}
    parameters = {}
    if kind is not None:
        parameters = _VALIDATORS[kind](chk, params_raw)
    if chk.violations:
        raise InvalidConfig(chk.violations)
    return DesignConfig(kind=kind, parameters=parameters, alpha=alpha, seed=seed, power=power)
