"""One engine run per design family, shared by simulation and live conduct.

An ``EngineRun`` owns the trial state machine: it hands out the current
recommendation, folds in posted outcomes, and transitions the status. The
Monte-Carlo harness and the conduct service both drive trials exclusively
through ``post``, so simulated operating characteristics describe exactly
the decisions a live trial would make. Runs are always reconstructible by
replaying the outcome sequence, which is what makes the audit log the
single source of truth.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from . import allocation, enrichment, groupseq, mcpmod, multiarm
from .config import DesignConfig
from .errors import LookMismatch, NoSafeDose, SessionStopped
from .escalation import (
    CrmConfig,
    EwocConfig,
    ThreePlusThreeRules,
    crm_next_dose,
    crm_posterior,
    crm_stop_check,
    ewoc_next_dose,
    ewoc_posterior,
    three_plus_three_next,
)
from .rng import stream_key
from .types import (
    ACTIVE,
    COMPLETED,
    STOPPED_EFFICACY,
    STOPPED_FUTILITY,
    STOPPED_SAFETY,
    ArmOutcomeSummary,
    CohortOutcome,
    Recommendation,
    TrialState,
)

ESCALATION_KINDS = ("three_plus_three", "crm", "ewoc")


class EngineRun:
    """Base trial run: state, current recommendation, outcome folding."""

    outcome_kind = "arms"

    def __init__(self, config: DesignConfig):
        self.config = config
        self.state = TrialState(design_id=config.design_id)
        self.recommendation = self._initial_recommendation()

    def _initial_recommendation(self) -> Recommendation:
        return Recommendation("continue")

    def post(self, outcome) -> Recommendation:
        if self.state.status != ACTIVE:
            raise SessionStopped(f"trial is {self.state.status}")
        self.recommendation = self._apply(outcome)
        return self.recommendation

    def _apply(self, outcome) -> Recommendation:  # pragma: no cover - abstract
        raise NotImplementedError

    def _stop(self, status: str):
        self.state = self.state.with_status(status)

    @property
    def next_cohort_size(self) -> int | None:
        return None


# ---------------------------------------------------------------------------
# Escalation families


class ThreePlusThreeRun(EngineRun):
    outcome_kind = "cohort"

    def __init__(self, config):
        self.rules = ThreePlusThreeRules.from_parameters(config.parameters)
        self.grid = config.dose_grid()
        super().__init__(config)

    def _initial_recommendation(self):
        return Recommendation(
            "allocate",
            dose_index=self.config.parameters["start_dose"],
            metrics={"cohort_size": self.rules.cohort_size},
        )

    @property
    def next_cohort_size(self):
        return self.rules.cohort_size

    def _apply(self, outcome: CohortOutcome) -> Recommendation:
        self.state = self.state.with_cohort(outcome)
        rec = three_plus_three_next(self.state, self.rules, self.grid)
        if rec.action == "declare_mtd":
            self._stop(COMPLETED)
        elif rec.action == "stop_no_mtd":
            self._stop(STOPPED_SAFETY)
        return rec


class CrmRun(EngineRun):
    outcome_kind = "cohort"

    def __init__(self, config):
        self.cfg = CrmConfig.from_parameters(config.parameters)
        self.grid = config.dose_grid()
        super().__init__(config)

    def _initial_recommendation(self):
        size = 1 if self.cfg.run_in else self.cfg.cohort_size
        return Recommendation(
            "allocate", dose_index=self.cfg.start_dose, metrics={"cohort_size": size}
        )

    @property
    def next_cohort_size(self):
        in_run_in = self.cfg.run_in and all(c.n_events == 0 for c in self.state.cohorts)
        return 1 if in_run_in else self.cfg.cohort_size

    def _apply(self, outcome: CohortOutcome) -> Recommendation:
        self.state = self.state.with_cohort(outcome)
        cohorts = self.state.cohorts
        n_total = sum(c.n_treated for c in cohorts)
        if self.cfg.run_in and all(c.n_events == 0 for c in cohorts):
            # Single-patient escalation until the first event hands
            # control to the model.
            if n_total >= self.cfg.max_n:
                post = crm_posterior(cohorts, self.cfg)
                rec = crm_next_dose(post, self.state, self.cfg)
                self._stop(COMPLETED)
                return Recommendation("declare_mtd", dose_index=rec.dose_index, metrics=rec.metrics)
            top = self.grid.size - 1
            nxt = min(max(c.dose_index for c in cohorts) + 1, top)
            return Recommendation("allocate", dose_index=nxt, metrics={"cohort_size": 1})
        post = crm_posterior(cohorts, self.cfg)
        stop = crm_stop_check(self.state, post, self.cfg)
        if stop.action == "declare_mtd":
            self._stop(COMPLETED)
            return stop
        rec = crm_next_dose(post, self.state, self.cfg)
        rec.metrics["cohort_size"] = self.cfg.cohort_size
        rec.metrics.update(stop.metrics)
        return rec


class EwocRun(EngineRun):
    outcome_kind = "cohort"

    def __init__(self, config):
        self.cfg = EwocConfig.from_parameters(config.parameters)
        self.grid = config.dose_grid()
        super().__init__(config)

    def _initial_recommendation(self):
        return Recommendation(
            "allocate", dose_index=self.cfg.start_dose, metrics={"cohort_size": self.cfg.cohort_size}
        )

    @property
    def next_cohort_size(self):
        return self.cfg.cohort_size

    def _apply(self, outcome: CohortOutcome) -> Recommendation:
        self.state = self.state.with_cohort(outcome)
        posterior = ewoc_posterior(self.state.cohorts, self.cfg, self.grid)
        try:
            rec = ewoc_next_dose(posterior, self.cfg, self.state, self.grid)
        except NoSafeDose as exc:
            self._stop(STOPPED_SAFETY)
            return Recommendation("stop_no_mtd", metrics={"reason": exc.message})
        n_total = sum(c.n_treated for c in self.state.cohorts)
        if n_total >= self.cfg.max_n:
            self._stop(COMPLETED)
            return Recommendation("declare_mtd", dose_index=rec.dose_index, metrics=rec.metrics)
        rec.metrics["cohort_size"] = self.cfg.cohort_size
        return rec


# ---------------------------------------------------------------------------
# Group-sequential and sample-size re-assessment


@lru_cache(maxsize=64)
def cached_gs_boundaries(design: groupseq.GsDesign) -> groupseq.BoundarySet:
    return groupseq.gs_boundaries(design)


def _two_arm_z(summaries) -> tuple[float, ArmOutcomeSummary, ArmOutcomeSummary]:
    by_arm = {s.arm_index: s for s in summaries}
    if set(by_arm) != {0, 1}:
        raise LookMismatch("expected cumulative summaries for arms 0 (control) and 1")
    ctl, trt = by_arm[0], by_arm[1]
    se = math.sqrt(ctl.sd ** 2 / ctl.n + trt.sd ** 2 / trt.n)
    return (trt.mean - ctl.mean) / se, ctl, trt


class GsdRun(EngineRun):
    def __init__(self, config):
        self.design = groupseq.GsDesign.from_config(config)
        self.bounds = cached_gs_boundaries(self.design)
        super().__init__(config)

    def _initial_recommendation(self):
        return Recommendation(
            "continue",
            metrics={
                "upper": list(self.bounds.upper),
                "lower": [b if math.isfinite(b) else None for b in self.bounds.lower],
                "fractions": list(self.design.information_fractions),
            },
        )

    def _apply(self, summaries) -> Recommendation:
        z, ctl, trt = _two_arm_z(summaries)
        raw_fraction = trt.n / self.design.n_per_arm
        # Patient counts round the planned fractions; match to the nearest
        # design look within the rounding granularity.
        fractions = self.design.information_fractions
        k = min(range(len(fractions)), key=lambda i: abs(fractions[i] - raw_fraction))
        if abs(fractions[k] - raw_fraction) > 0.5 / self.design.n_per_arm + 1e-9:
            raise LookMismatch(
                f"fraction {raw_fraction:.4f} does not match any design look"
            )
        rec = groupseq.gs_test(self.bounds, self.design, z, fractions[k])
        self.state = self.state.with_arm_stage(summaries)
        if rec.action == groupseq.STOP_EFFICACY:
            self._stop(STOPPED_EFFICACY)
        elif rec.action == groupseq.STOP_FUTILITY:
            final = k == self.design.looks - 1
            self._stop(COMPLETED if final else STOPPED_FUTILITY)
        return rec


class SsrRun(EngineRun):
    """Two-stage design with an interim sample-size re-assessment."""

    def __init__(self, config):
        self.plan = groupseq.SsrPlan.from_parameters(config.parameters)
        self.new_n: int | None = None
        super().__init__(config)

    def _apply(self, summaries) -> Recommendation:
        self.state = self.state.with_arm_stage(summaries)
        if self.state.stage == 1:
            return self._interim(summaries)
        return self._final(summaries)

    def _interim(self, summaries) -> Recommendation:
        if self.plan.mode == "blinded_variance":
            pooled = [s for s in summaries if s.sd is not None]
            if len(pooled) != 1:
                raise LookMismatch("blinded re-assessment expects one pooled summary")
            result = groupseq.ssr_blinded(pooled[0].sd, self.plan, self.config)
        else:
            z1, _, _ = _two_arm_z(summaries)
            t1 = self.plan.interim_fraction
            theta_hat = z1 / math.sqrt(t1)
            result = groupseq.ssr_conditional_power(z1, t1, theta_hat, self.config, self.plan)
        self.new_n = result.new_n_per_arm
        metrics = {
            "new_n_per_arm": result.new_n_per_arm,
            "futility_cap": result.futility_cap,
        }
        if result.conditional_power is not None:
            metrics["conditional_power"] = result.conditional_power
        if result.futility_cap:
            self._stop(STOPPED_FUTILITY)
            return Recommendation("stop_futility", metrics=metrics)
        return Recommendation("continue", metrics=metrics)

    def _final(self, summaries) -> Recommendation:
        z, _, _ = _two_arm_z(summaries)
        critical = float(norm.ppf(1 - self.config.alpha))
        reject = z > critical
        self._stop(STOPPED_EFFICACY if reject else COMPLETED)
        return Recommendation(
            "stop_efficacy" if reject else "stop_futility",
            metrics={"z": z, "critical": critical, "n_per_arm": self.new_n},
        )


# ---------------------------------------------------------------------------
# Multi-arm families


@lru_cache(maxsize=32)
def cached_mams_boundaries(design: multiarm.MamsDesign, seed: int, n_reps: int) -> multiarm.MamsBounds:
    return multiarm.mams_boundaries(design, seed=seed, n_reps=n_reps)


class MamsRun(EngineRun):
    def __init__(self, config, calibration_reps: int = 100_000):
        self.design = multiarm.MamsDesign.from_config(config)
        self.bounds = cached_mams_boundaries(self.design, config.seed, calibration_reps)
        super().__init__(config)
        self.state = self.state.with_active_arms(range(1, self.design.n_arms + 1))

    def _apply(self, summaries) -> Recommendation:
        by_arm = {s.arm_index: s for s in summaries}
        if 0 not in by_arm:
            raise LookMismatch("control summary (arm 0) is required at every stage")
        ctl = by_arm[0]
        z = {}
        for arm in sorted(self.state.active_arms):
            s = by_arm.get(arm)
            if s is None:
                raise LookMismatch(f"missing summary for active arm {arm}")
            se = math.sqrt(ctl.sd ** 2 / ctl.n + s.sd ** 2 / s.n)
            z[arm] = (s.mean - ctl.mean) / se
        stage = self.state.stage
        self.state = self.state.with_arm_stage(summaries)
        rec = multiarm.mams_interim_decision(z, self.bounds, stage, self.design)
        if rec.action == multiarm.STOP_EFFICACY_SELECT:
            self._stop(STOPPED_EFFICACY)
        elif rec.action == multiarm.STOP_FUTILITY:
            final = stage == self.design.stages - 1
            self._stop(COMPLETED if final else STOPPED_FUTILITY)
        else:
            self.state = self.state.with_active_arms(rec.metrics["active"])
        return rec


class DtlRun(EngineRun):
    def __init__(self, config, calibration_reps: int = 200_000):
        self.design = multiarm.DtlDesign.from_config(config)
        if self.design.critical_value is None:
            self.critical = _cached_dtl_critical(self.design, config.seed, calibration_reps)
        else:
            self.critical = self.design.critical_value
        self.stage1_stats: dict[int, float] = {}
        super().__init__(config)
        self.state = self.state.with_active_arms(range(1, self.design.n_arms + 1))

    def _apply(self, summaries) -> Recommendation:
        by_arm = {s.arm_index: s for s in summaries}
        if 0 not in by_arm:
            raise LookMismatch("control summary (arm 0) is required at every stage")
        ctl = by_arm[0]
        stage = self.state.stage
        self.state = self.state.with_arm_stage(summaries)
        if stage == 0:
            for arm in sorted(a for a in by_arm if a != 0):
                s = by_arm[arm]
                se = math.sqrt(ctl.sd ** 2 / ctl.n + s.sd ** 2 / s.n)
                self.stage1_stats[arm] = (s.mean - ctl.mean) / se
            retained = multiarm.dtl_select(self.stage1_stats, self.design, stage=0)
            self.state = self.state.with_active_arms(retained)
            return Recommendation(
                "continue", metrics={"retained": retained, "stage1": dict(self.stage1_stats)}
            )
        arm = sorted(self.state.active_arms)[0]
        s = by_arm.get(arm)
        if s is None:
            raise LookMismatch(f"missing cumulative summary for retained arm {arm}")
        se = math.sqrt(ctl.sd ** 2 / ctl.n + s.sd ** 2 / s.n)
        combined_z = (s.mean - ctl.mean) / se
        rec = multiarm.dtl_final_test(self.stage1_stats, combined_z, self.design, self.critical)
        self._stop(STOPPED_EFFICACY if rec.metrics["rejected"] else COMPLETED)
        return rec


@lru_cache(maxsize=32)
def _cached_dtl_critical(design: multiarm.DtlDesign, seed: int, n_reps: int) -> float:
    return multiarm.dtl_critical_value(design, seed=seed, n_reps=n_reps)


# ---------------------------------------------------------------------------
# Adaptive randomisation


class RarRun(EngineRun):
    def __init__(self, config):
        p = config.parameters
        self.policy = allocation.RarPolicy.from_parameters(p["policy"])
        self.n_arms = p["n_arms"]
        self.max_n = p["max_n"]
        self.mc_draws = p["mc_draws"]
        self.rar = allocation.rar_initial_state(self.n_arms, self.policy, p["prior_a"], p["prior_b"])
        super().__init__(config)
        self.state = self.state.with_active_arms(range(self.n_arms))

    def _initial_recommendation(self):
        probs = {a: 1.0 / self.n_arms for a in range(self.n_arms)}
        return Recommendation("allocate", metrics={"probabilities": probs})

    def _best_active(self) -> int:
        post = self.rar.posterior
        means = {a: post.a[a] / (post.a[a] + post.b[a]) for a in sorted(self.rar.active_arms)}
        return max(means, key=lambda a: (means[a], -a))

    def _apply(self, outcome: ArmOutcomeSummary) -> Recommendation:
        seed = stream_key(self.config.seed, self.rar.n_enrolled)
        self.rar, events = allocation.rar_update(
            self.rar, outcome.arm_index, outcome.successes, outcome.n,
            self.policy, self.mc_draws, seed,
        )
        self.state = self.state.with_arm_stage([outcome]).with_active_arms(self.rar.active_arms)
        metrics = {
            "probabilities": {a: p for a, p in sorted(self.rar.probabilities.items())},
            "events": events,
            "posterior_a": list(self.rar.posterior.a),
            "posterior_b": list(self.rar.posterior.b),
        }
        promoted = [e["arm"] for e in events if e["kind"] == "promote"]
        if promoted:
            self._stop(STOPPED_EFFICACY)
            return Recommendation("select", arm_index=promoted[0], metrics=metrics)
        experimental_active = [a for a in self.rar.active_arms if a != 0]
        if not experimental_active:
            self._stop(STOPPED_FUTILITY)
            return Recommendation("stop_futility", metrics=metrics)
        if self.rar.n_enrolled >= self.max_n:
            best = self._best_active()
            self._stop(COMPLETED)
            return Recommendation("select", arm_index=best, metrics=metrics)
        return Recommendation("allocate", metrics=metrics)


class CaraRun(EngineRun):
    def __init__(self, config):
        p = config.parameters
        self.policy = allocation.RarPolicy.from_parameters(p["policy"])
        self.n_arms = p["n_arms"]
        self.max_n = p["max_n"]
        self.mc_draws = p["mc_draws"]
        self.strata = tuple(p["strata"])
        self.posteriors = allocation.StratifiedPosterior.uniform(
            self.strata, self.n_arms, p["prior_a"], p["prior_b"]
        )
        self.n_enrolled = 0
        super().__init__(config)
        self.state = self.state.with_active_arms(range(self.n_arms))

    def _probs(self) -> dict[str, dict[int, float]]:
        seed = stream_key(self.config.seed, self.n_enrolled)
        return {
            lab: allocation.cara_probs(
                self.posteriors, lab, self.policy, self.n_enrolled, self.mc_draws, seed
            )
            for lab in self.strata
        }

    def _initial_recommendation(self):
        return Recommendation("allocate", metrics={"probabilities_by_stratum": self._probs()})

    def _apply(self, outcome: ArmOutcomeSummary) -> Recommendation:
        self.posteriors = self.posteriors.updated(
            outcome.stratum, outcome.arm_index, outcome.successes, outcome.n
        )
        self.n_enrolled += outcome.n
        self.state = self.state.with_arm_stage([outcome])
        metrics = {"probabilities_by_stratum": self._probs()}
        if self.n_enrolled >= self.max_n:
            self._stop(COMPLETED)
            best = {
                lab: max(
                    range(self.n_arms),
                    key=lambda a: self.posteriors.strata[lab].a[a]
                    / (self.posteriors.strata[lab].a[a] + self.posteriors.strata[lab].b[a]),
                )
                for lab in self.strata
            }
            return Recommendation("select", metrics={**metrics, "best_by_stratum": best})
        return Recommendation("allocate", metrics=metrics)


# ---------------------------------------------------------------------------
# Dose-response and enrichment


class McpmodRun(EngineRun):
    def __init__(self, config):
        p = config.parameters
        self.doses = p["doses"]
        self.models = [mcpmod.CandidateModel.from_parameters(m) for m in p["models"]]
        self.delta = p["delta"]
        self.selection = p["selection"]
        super().__init__(config)

    def _apply(self, summaries) -> Recommendation:
        summaries = sorted(summaries, key=lambda s: s.arm_index)
        if len(summaries) != len(self.doses):
            raise LookMismatch("expected one summary per dose group")
        means = {m.name: mcpmod.candidate_means(m, self.doses) for m in self.models}
        contrasts = mcpmod.optimal_contrasts(means, [s.n for s in summaries])
        result = mcpmod.mcp_test(summaries, contrasts, self.config.alpha, seed=self.config.seed)
        self.state = self.state.with_arm_stage(summaries)
        self._stop(COMPLETED)
        metrics = {
            "statistics": result.statistics,
            "critical_value": result.critical_value,
            "significant": list(result.significant),
            "adjusted_p": result.adjusted_p,
        }
        if not result.signal_detected:
            return Recommendation("stop_futility", metrics=metrics)
        fit = mcpmod.mod_select_fit(
            summaries, self.doses, self.models, result.significant, self.selection, result.statistics
        )
        metrics["selected_model"] = fit.selected
        try:
            dose = mcpmod.target_dose(fit, self.delta, self.doses[-1])
            metrics["target_dose"] = dose
        except Exception as exc:
            metrics["target_dose"] = None
            metrics["target_dose_error"] = str(exc)
        return Recommendation("select", metrics=metrics)


class EnrichmentRun(EngineRun):
    def __init__(self, config):
        self.design = enrichment.EnrichmentDesign.from_config(config)
        self.action: str | None = None
        self.stage1_p: dict[str, float] | None = None
        super().__init__(config)

    def _z_by_population(self, summaries) -> dict[str, float]:
        out = {}
        for s in summaries:
            if s.stratum is None or s.mean is None:
                raise LookMismatch("enrichment posts need stratum-labelled z statistics")
            out[s.stratum] = s.mean
        return out

    def _apply(self, summaries) -> Recommendation:
        zmap = self._z_by_population(summaries)
        self.state = self.state.with_arm_stage(summaries)
        if self.state.stage == 1:
            sub_label = self.design.subgroups[0]
            if "full" not in zmap or sub_label not in zmap:
                raise LookMismatch(f"stage 1 needs z for 'full' and {sub_label!r}")
            z_full, z_sub = zmap["full"], zmap[sub_label]
            rec = enrichment.enrichment_interim(z_full, z_sub, self.design)
            self.action = rec.action
            self.stage1_p = {
                "full": float(1 - norm.cdf(z_full)),
                "sub": float(1 - norm.cdf(z_sub)),
            }
            return rec
        expected = self.design.subgroups[0] if self.action == enrichment.ENRICH_SUBGROUP else "full"
        if expected not in zmap:
            raise LookMismatch(f"stage 2 needs z for {expected!r}")
        p2 = float(1 - norm.cdf(zmap[expected]))
        result = enrichment.combination_test(self.stage1_p, p2, self.design, self.action)
        self._stop(STOPPED_EFFICACY if result.rejections else COMPLETED)
        action = "select" if result.rejections else "stop_futility"
        return Recommendation(action, metrics={**result.to_metrics(), "interim_action": self.action})


_RUNS = {
    "three_plus_three": ThreePlusThreeRun,
    "crm": CrmRun,
    "ewoc": EwocRun,
    "gsd": GsdRun,
    "ssr": SsrRun,
    "mams": MamsRun,
    "dtl": DtlRun,
    "rar": RarRun,
    "cara": CaraRun,
    "mcpmod": McpmodRun,
    "enrichment": EnrichmentRun,
}


def new_run(config: DesignConfig) -> EngineRun:
    return _RUNS[config.kind](config)


def replay(config: DesignConfig, outcomes) -> EngineRun:
    """Rebuild a run by folding the recorded outcome sequence."""
    run = new_run(config)
    for outcome in outcomes:
        run.post(outcome)
    return run
