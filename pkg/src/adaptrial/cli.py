"""Command-line interface: design validation, simulation, boundaries, conduct."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import click

from .audit import canonical_json
from .config import validate_design_config
from .errors import AdaptrialError, InvalidConfig
from .escalation import (
    CrmConfig,
    EwocConfig,
    ThreePlusThreeRules,
    crm_next_dose,
    crm_posterior,
    ewoc_next_dose,
    ewoc_posterior,
    three_plus_three_next,
)
from .groupseq import GsDesign, boundary_table, gs_boundaries
from .session import SessionStore, default_data_dir, parse_outcome
from .simulator import Scenario, simulate_trials
from .types import CohortOutcome, TrialState


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _echo_error(exc: AdaptrialError):
    click.echo(json.dumps({"code": exc.code, "message": exc.message, "details": exc.details}, indent=2), err=True)
    sys.exit(1)


@click.group()
def main():
    """Adaptive clinical trial design, simulation, and conduct."""


@main.group()
def design():
    """Design configuration tools."""


@design.command("validate")
@click.argument("config_file", type=click.Path(exists=True))
def design_validate(config_file):
    """Validate a design config file; prints the canonical form."""
    try:
        config = validate_design_config(_load_json(config_file))
    except InvalidConfig as exc:
        _echo_error(exc)
    click.echo(canonical_json(config.to_dict()))


@design.command("report")
@click.option("--design", "design_file", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_file", type=click.Path(exists=True), default=None, help="Scenario for the simulated OC table; defaults to the global null.")
@click.option("--reps", type=int, default=10_000)
@click.option("--out", "out_file", type=click.Path(), default=None)
def design_report(design_file, scenario_file, reps, out_file):
    """Boundaries, per-stage sample sizes, and a simulated OC table."""
    try:
        config = validate_design_config(_load_json(design_file))
        report = build_design_report(config, scenario_file, reps)
    except AdaptrialError as exc:
        _echo_error(exc)
    text = canonical_json(report)
    if out_file:
        Path(out_file).write_text(text + "\n")
    else:
        click.echo(text)


def build_design_report(config, scenario_file=None, reps=10_000):
    from .engines import cached_gs_boundaries, cached_mams_boundaries, _cached_dtl_critical
    from .groupseq import GsDesign
    from .multiarm import DtlDesign, MamsDesign

    report = {"design_id": config.design_id, "kind": config.kind}
    if config.kind == "gsd":
        gs = GsDesign.from_config(config)
        bounds = cached_gs_boundaries(gs)
        report["boundaries"] = boundary_table(gs, bounds)
        report["inflation_factor"] = bounds.inflation_factor
        report["per_look_n_per_arm"] = [
            round(t * gs.n_per_arm) for t in gs.information_fractions
        ]
        null_truth = {"drift": 0.0}
    elif config.kind == "mams":
        design = MamsDesign.from_config(config)
        bounds = cached_mams_boundaries(design, config.seed, 100_000)
        report["boundaries"] = {
            "upper": list(bounds.upper),
            "lower": [b if math.isfinite(b) else None for b in bounds.lower],
            "constant": bounds.constant,
        }
        report["per_stage_n"] = {
            "experimental_per_arm": design.n_stage,
            "control": round(design.n_stage * design.allocation_ratio),
        }
        null_truth = {"effects": [0.0] * design.n_arms}
    elif config.kind == "dtl":
        design = DtlDesign.from_config(config)
        critical = design.critical_value
        if critical is None:
            critical = _cached_dtl_critical(design, config.seed, 200_000)
        report["critical_value"] = critical
        report["per_stage_n"] = design.n_stage
        report["total_n"] = design.total_n
        null_truth = {"effects": [0.0] * design.n_arms}
    else:
        raise InvalidConfig(
            [{"field": "kind", "message": "design report covers gsd, mams, and dtl"}]
        )
    if scenario_file:
        scenario = Scenario.from_dict(_load_json(scenario_file))
    else:
        scenario = Scenario(truth=null_truth, n_reps=reps, seed=config.seed)
    report["scenario"] = scenario.to_dict()
    report["oc"] = simulate_trials(config, scenario).to_dict()
    return report


@main.command()
@click.option("--design", "design_file", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_file", required=True, type=click.Path(exists=True))
@click.option("--reps", type=int, default=None, help="Override scenario n_reps.")
@click.option("--seed", type=int, default=None, help="Override scenario seed.")
@click.option("--out", "out_file", type=click.Path(), default=None, help="Write the OC report JSON here.")
@click.option("--tsv", "tsv_file", type=click.Path(), default=None, help="Optional TSV of the OC table.")
@click.option("--workers", type=int, default=1)
def simulate(design_file, scenario_file, reps, seed, out_file, tsv_file, workers):
    """Run Monte-Carlo operating characteristics for a design."""
    try:
        config = validate_design_config(_load_json(design_file))
        raw = _load_json(scenario_file)
        if reps is not None:
            raw["n_reps"] = reps
        if seed is not None:
            raw["seed"] = seed
        scenario = Scenario.from_dict(raw)
        oc = simulate_trials(config, scenario, workers=workers)
    except AdaptrialError as exc:
        _echo_error(exc)
    report = canonical_json({"design_id": config.design_id, "scenario": scenario.to_dict(), "oc": oc.to_dict()})
    if out_file:
        Path(out_file).write_text(report + "\n")
    else:
        click.echo(report)
    if tsv_file:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter="\t")
        writer.writerow(["metric", "value", "se"])
        writer.writerow(["rejection_rate", oc.rejection_rate, oc.rejection_se])
        writer.writerow(["expected_n", oc.expected_n, oc.se_n])
        writer.writerow(["sd_n", oc.sd_n, ""])
        writer.writerow(["max_n", oc.max_n, ""])
        for key, p in oc.selection_probabilities.items():
            writer.writerow([f"select_{key}", p, oc.selection_se[key]])
        for key, a in oc.allocation.items():
            writer.writerow([f"allocation_{key}", a, ""])
        Path(tsv_file).write_text(buf.getvalue())


@main.command()
@click.option("--looks", type=int, required=True)
@click.option("--alpha", type=float, default=0.025, help="One-sided type I error.")
@click.option("--beta", type=float, default=0.1)
@click.option("--shape", type=click.Choice(["pocock", "obrien_fleming", "triangular", "double_triangular"]), default="obrien_fleming")
@click.option("--futility", type=click.Choice(["none", "binding", "non_binding"]), default="none")
@click.option("--fractions", default=None, help="Comma-separated information fractions ending at 1.")
def boundaries(looks, alpha, beta, shape, futility, fractions):
    """Print the per-look boundary table as TSV."""
    if fractions:
        fr = tuple(float(x) for x in fractions.split(","))
    else:
        fr = tuple((k + 1) / looks for k in range(looks))
    try:
        gs = GsDesign(looks=looks, information_fractions=fr, alpha=alpha, beta=beta, shape=shape, futility=futility)
        bounds = gs_boundaries(gs)
    except AdaptrialError as exc:
        _echo_error(exc)
    rows = boundary_table(gs, bounds)
    click.echo("look\tfraction\tlower\tupper\tcumulative_alpha")
    for r in rows:
        lower = "-inf" if not math.isfinite(r["lower"]) else f"{r['lower']:.6f}"
        click.echo(f"{r['look']}\t{r['fraction']:.6f}\t{lower}\t{r['upper']:.6f}\t{r['cumulative_alpha']:.8f}")
    click.echo(f"# inflation_factor\t{bounds.inflation_factor:.6f}", err=False)


@main.command()
@click.option("--design", "design_file", required=True, type=click.Path(exists=True))
@click.option("--history", "history_file", required=True, type=click.Path(exists=True), help="CSV with dose_index,n_treated,n_events rows.")
def escalate(design_file, history_file):
    """One-shot escalation recommendation from a history CSV."""
    try:
        config = validate_design_config(_load_json(design_file))
        if config.kind not in ("three_plus_three", "crm", "ewoc"):
            raise InvalidConfig([{"field": "kind", "message": "escalate needs an escalation design"}])
        cohorts = []
        with open(history_file, newline="") as fh:
            for row in csv.DictReader(fh):
                cohorts.append(
                    CohortOutcome(
                        dose_index=int(row["dose_index"]),
                        n_treated=int(row["n_treated"]),
                        n_events=int(row["n_events"]),
                    )
                )
        state = TrialState(design_id=config.design_id, stage=len(cohorts), cohorts=tuple(cohorts))
        grid = config.dose_grid()
        if config.kind == "three_plus_three":
            rules = ThreePlusThreeRules.from_parameters(config.parameters)
            rec = three_plus_three_next(state, rules, grid)
        elif config.kind == "crm":
            cfg = CrmConfig.from_parameters(config.parameters)
            post = crm_posterior(cohorts, cfg)
            rec = crm_next_dose(post, state, cfg)
        else:
            cfg = EwocConfig.from_parameters(config.parameters)
            post = ewoc_posterior(cohorts, cfg, grid)
            rec = ewoc_next_dose(post, cfg, state, grid)
    except AdaptrialError as exc:
        _echo_error(exc)
    click.echo(canonical_json(rec.to_dict()))


@main.command("mcpmod")
@click.option("--design", "design_file", required=True, type=click.Path(exists=True))
@click.option("--data", "data_file", required=True, type=click.Path(exists=True), help="Per-arm summary CSV: dose,n,mean,sd.")
@click.option("--out", "out_file", type=click.Path(), default=None)
def mcpmod_analysis(design_file, data_file, out_file):
    """Dose-response analysis from a per-arm summary CSV."""
    from . import mcpmod as mm
    from .types import ArmOutcomeSummary

    try:
        config = validate_design_config(_load_json(design_file))
        if config.kind != "mcpmod":
            raise InvalidConfig([{"field": "kind", "message": "expected a dose-response design"}])
        rows = []
        with open(data_file, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((float(row["dose"]), int(row["n"]), float(row["mean"]), float(row["sd"])))
        rows.sort()
        doses = [r[0] for r in rows]
        if doses != config.parameters["doses"]:
            raise InvalidConfig(
                [{"field": "data", "message": "CSV doses must match the design's dose list"}]
            )
        summaries = [
            ArmOutcomeSummary(i, n, mean=mean, sd=sd) for i, (_, n, mean, sd) in enumerate(rows)
        ]
        models = [mm.CandidateModel.from_parameters(m) for m in config.parameters["models"]]
        means = {m.name: mm.candidate_means(m, doses) for m in models}
        contrasts = mm.optimal_contrasts(means, [s.n for s in summaries])
        result = mm.mcp_test(summaries, contrasts, config.alpha, seed=config.seed)
        report = {
            "design_id": config.design_id,
            "statistics": result.statistics,
            "critical_value": result.critical_value,
            "adjusted_p": result.adjusted_p,
            "significant_models": list(result.significant),
        }
        if result.signal_detected:
            fit = mm.mod_select_fit(
                summaries, doses, models, result.significant,
                config.parameters["selection"], result.statistics,
            )
            report["selected_model"] = fit.selected
            report["fits"] = [
                {"family": f.family, "name": f.name, "params": list(f.params), "aic": f.aic, "weight": w}
                for f, w in zip(fit.fits, fit.weights)
            ]
            try:
                report["target_dose"] = mm.target_dose(fit, config.parameters["delta"], doses[-1])
            except AdaptrialError as exc:
                report["target_dose"] = None
                report["target_dose_error"] = exc.message
        else:
            report["selected_model"] = None
            report["fits"] = []
            report["target_dose"] = None
    except AdaptrialError as exc:
        _echo_error(exc)
    text = canonical_json(report)
    if out_file:
        Path(out_file).write_text(text + "\n")
    else:
        click.echo(text)


@main.group()
@click.option("--data-dir", type=click.Path(), default=None, help="Session storage directory (or ADAPTRIAL_DATA_DIR).")
@click.pass_context
def conduct(ctx, data_dir):
    """Live trial conduct: sessions over the audit log."""
    ctx.obj = SessionStore(data_dir or default_data_dir())


@conduct.command("new")
@click.option("--design", "design_file", required=True, type=click.Path(exists=True))
@click.pass_obj
def conduct_new(store, design_file):
    try:
        session = store.create(_load_json(design_file))
    except AdaptrialError as exc:
        _echo_error(exc)
    click.echo(canonical_json(session.summary()))


@conduct.command("post")
@click.argument("session_id")
@click.option("--dose", type=int, default=None)
@click.option("--n", "n_treated", type=int, default=None)
@click.option("--events", "n_events", type=int, default=None)
@click.option("--outcome-file", type=click.Path(exists=True), default=None, help="JSON outcome body for non-escalation designs.")
@click.option("--override", is_flag=True, default=False)
@click.pass_obj
def conduct_post(store, session_id, dose, n_treated, n_events, outcome_file, override):
    try:
        session = store.load(session_id)
        if outcome_file:
            outcome = parse_outcome(session.run.outcome_kind, _load_json(outcome_file))
        else:
            if dose is None or n_treated is None or n_events is None:
                raise InvalidConfig([{"field": "outcome", "message": "need --dose/--n/--events or --outcome-file"}])
            outcome = CohortOutcome(dose_index=dose, n_treated=n_treated, n_events=n_events)
        session = store.post_outcomes(session_id, outcome, override=override)
    except AdaptrialError as exc:
        _echo_error(exc)
    click.echo(canonical_json({"status": session.state.status, "recommendation": session.recommendation.to_dict()}))


@conduct.command("recommend")
@click.argument("session_id")
@click.pass_obj
def conduct_recommend(store, session_id):
    try:
        session = store.load(session_id)
    except AdaptrialError as exc:
        _echo_error(exc)
    click.echo(canonical_json({"status": session.state.status, "recommendation": session.recommendation.to_dict()}))


@conduct.command("pathways")
@click.argument("session_id")
@click.option("--depth", type=int, default=1)
@click.pass_obj
def conduct_pathways(store, session_id, depth):
    try:
        tree = store.pathways(session_id, depth)
    except AdaptrialError as exc:
        _echo_error(exc)
    click.echo(canonical_json(tree))


@conduct.command("audit")
@click.argument("session_id")
@click.option("--out", "out_file", type=click.Path(), default=None)
@click.pass_obj
def conduct_audit(store, session_id, out_file):
    try:
        text = store.export_audit(session_id)
    except AdaptrialError as exc:
        _echo_error(exc)
    if out_file:
        Path(out_file).write_text(text)
    else:
        click.echo(text, nl=False)


@conduct.command("trace")
@click.argument("session_id")
@click.pass_obj
def conduct_trace(store, session_id):
    """Allocation trace CSV (patient_id, stratum, arm, probabilities...)."""
    try:
        session = store.load(session_id)
        text = store.export_audit(session_id)
    except AdaptrialError as exc:
        _echo_error(exc)
    writer = csv.writer(sys.stdout)
    n_arms = session.config.parameters.get("n_arms", 0)
    writer.writerow(["patient_id", "stratum", "arm", *[f"p_arm_{a}" for a in range(n_arms)]])
    patient = 0
    last_probs = {a: "" for a in range(n_arms)}
    for line in text.splitlines():
        event = json.loads(line)
        if event["kind"] == "outcomes_posted" and event["payload"]["kind"] == "arms":
            for summary in event["payload"]["outcome"]:
                patient += summary.get("n", 1)
                writer.writerow(
                    [
                        patient,
                        summary.get("stratum", ""),
                        summary.get("arm_index"),
                        *[last_probs.get(a, "") for a in range(n_arms)],
                    ]
                )
        if event["kind"] == "recommendation_issued":
            probs = event["payload"]["recommendation"].get("metrics", {}).get("probabilities")
            if probs:
                last_probs = {int(a): p for a, p in probs.items()}


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--ui-dir", type=click.Path(), default=None, help="Static dashboard assets to serve at /ui.")
def serve(host, port, data_dir, ui_dir):
    """Run the HTTP conduct service."""
    import uvicorn

    from .service import create_app

    default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(data_dir=data_dir, ui_dir=ui_dir or (default_ui if default_ui.is_dir() else None))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
