"""Live trial sessions: event-sourced state over the hash-chained audit log.

A session is nothing but its audit log. Creating a session writes a
genesis event carrying the validated design; posting outcomes appends the
outcome and the engine's response; reloading a session replays the log
through the engine, so persisted state can never drift from what the
decisions actually were. Overrides (posting an outcome that contradicts
the last recommendation) are allowed only explicitly and leave their own
audit trail.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import audit as audit_mod
from .audit import (
    OUTCOMES_POSTED,
    OVERRIDE_RECORDED,
    RECOMMENDATION_ISSUED,
    SESSION_CREATED,
    AuditEvent,
    append_event,
    from_jsonl,
    to_jsonl,
)
from .config import DesignConfig, validate_design_config
from .engines import ESCALATION_KINDS, EngineRun, new_run
from .errors import (
    CorruptLog,
    DepthCap,
    OutcomeMismatch,
    UnknownSession,
    UnsupportedDesign,
)
from .types import (
    ACTIVE,
    ArmOutcomeSummary,
    CohortOutcome,
    Recommendation,
    arm_summary_from_dict,
    arm_summary_to_dict,
    cohort_from_dict,
    cohort_to_dict,
)

PATHWAY_DEPTH_CAP = 3

DATA_DIR_ENV = "ADAPTRIAL_DATA_DIR"


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "adaptrial_data"))


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def outcome_to_payload(outcome) -> dict:
    if isinstance(outcome, CohortOutcome):
        return {"kind": "cohort", "outcome": cohort_to_dict(outcome)}
    return {"kind": "arms", "outcome": [arm_summary_to_dict(s) for s in outcome]}


def outcome_from_payload(payload: dict):
    if payload["kind"] == "cohort":
        return cohort_from_dict(payload["outcome"])
    return [arm_summary_from_dict(d) for d in payload["outcome"]]


def parse_outcome(kind: str, raw) -> CohortOutcome | list[ArmOutcomeSummary]:
    """Parse a posted outcome body for the given engine outcome kind."""
    if kind == "cohort":
        return cohort_from_dict(raw)
    if isinstance(raw, dict):
        raw = [raw]
    return [arm_summary_from_dict(d) for d in raw]


@dataclass
class Session:
    id: str
    config: DesignConfig
    run: EngineRun
    audit: list[AuditEvent]
    created: str
    updated: str

    @property
    def state(self):
        return self.run.state

    @property
    def recommendation(self) -> Recommendation:
        return self.run.recommendation

    def summary(self) -> dict:
        return {
            "id": self.id,
            "kind": self.config.kind,
            "status": self.state.status,
            "stage": self.state.stage,
            "n_enrolled": self.state.n_enrolled,
            "created": self.created,
            "updated": self.updated,
            "recommendation": self.recommendation.to_dict(),
            "active_arms": sorted(self.state.active_arms),
        }


def replay_audit(events: list[AuditEvent]) -> tuple[DesignConfig, EngineRun]:
    """Rebuild the engine run from a verified audit log."""
    if not audit_mod.verify_log(events):
        raise CorruptLog("audit chain fails verification")
    if not events or events[0].kind != SESSION_CREATED:
        raise CorruptLog("audit log must start with the session-created event")
    config = validate_design_config(events[0].payload["design"])
    run = new_run(config)
    for event in events:
        if event.kind == OUTCOMES_POSTED:
            run.post(outcome_from_payload(event.payload))
    return config, run


def _mismatch(run: EngineRun, outcome) -> dict | None:
    """Escalation outcomes must match the recommended dose unless overridden."""
    rec = run.recommendation
    if not isinstance(outcome, CohortOutcome) or rec.dose_index is None:
        return None
    if rec.action in ("allocate", "escalate", "expand_same_dose", "de_escalate"):
        if outcome.dose_index != rec.dose_index:
            return {"expected_dose": rec.dose_index, "posted_dose": outcome.dose_index}
    return None


class SessionStore:
    """Filesystem-backed session registry: one JSONL audit file per session."""

    def __init__(self, data_dir: Path | str | None = None, clock=None):
        self.data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock or _utc_now

    @property
    def index_path(self) -> Path:
        return self.data_dir / "index.json"

    def _load_index(self) -> dict:
        if self.index_path.exists():
            return json.loads(self.index_path.read_text())
        return {}

    def _save_index(self, index: dict):
        self.index_path.write_text(json.dumps(index, indent=2, sort_keys=True))

    def _audit_path(self, session_id: str) -> Path:
        index = self._load_index()
        if session_id not in index:
            raise UnknownSession(f"unknown session {session_id!r}")
        return self.data_dir / index[session_id]

    def _persist(self, session: Session):
        index = self._load_index()
        filename = f"{session.id}.jsonl"
        index[session.id] = filename
        (self.data_dir / filename).write_text(to_jsonl(session.audit))
        self._save_index(index)

    def list_sessions(self) -> list[dict]:
        return [self.load(sid).summary() for sid in sorted(self._load_index())]

    def create(self, raw_config: dict) -> Session:
        config = validate_design_config(raw_config)
        run = new_run(config)
        now = self.clock()
        sid = str(uuid.uuid4())
        log = append_event([], SESSION_CREATED, {"design": config.to_dict(), "session_id": sid}, now)
        log = append_event(
            log,
            RECOMMENDATION_ISSUED,
            {"recommendation": run.recommendation.to_dict(), "status": run.state.status, "stage": 0},
            now,
        )
        session = Session(id=sid, config=config, run=run, audit=log, created=now, updated=now)
        self._persist(session)
        return session

    def load(self, session_id: str) -> Session:
        path = self._audit_path(session_id)
        events = from_jsonl(path.read_text())
        config, run = replay_audit(events)
        created = events[0].time
        return Session(
            id=session_id,
            config=config,
            run=run,
            audit=list(events),
            created=created,
            updated=events[-1].time,
        )

    def post_outcomes(self, session_id: str, outcome, override: bool = False) -> Session:
        """Fold an outcome into the session; every step lands in the audit log."""
        session = self.load(session_id)
        run = session.run
        if run.state.status != ACTIVE:
            # post() raises SessionStopped; call it for the uniform error.
            run.post(outcome)
        mismatch = _mismatch(run, outcome)
        now = self.clock()
        log = session.audit
        if mismatch is not None:
            if not override:
                raise OutcomeMismatch(
                    f"outcome dose {mismatch['posted_dose']} does not match "
                    f"recommended dose {mismatch['expected_dose']}",
                    details=mismatch,
                )
            log = append_event(log, OVERRIDE_RECORDED, mismatch, now)
        payload = outcome_to_payload(outcome)
        payload["override"] = bool(override and mismatch is not None)
        log = append_event(log, OUTCOMES_POSTED, payload, now)
        rec = run.post(outcome)
        log = append_event(
            log,
            RECOMMENDATION_ISSUED,
            {
                "recommendation": rec.to_dict(),
                "status": run.state.status,
                "stage": run.state.stage,
            },
            now,
        )
        session.audit = log
        session.updated = now
        self._persist(session)
        return session

    def pathways(self, session_id: str, depth: int) -> dict:
        """Exhaustive tree of hypothetical next-cohort outcomes.

        Every node's recommendation comes from replaying the hypothetical
        outcome through the same engine code path as a real post.
        """
        session = self.load(session_id)
        if session.config.kind not in ESCALATION_KINDS:
            raise UnsupportedDesign(
                f"dose transition pathways need an escalation design, got {session.config.kind}"
            )
        if depth < 0 or depth > PATHWAY_DEPTH_CAP:
            raise DepthCap(f"depth must lie in 0..{PATHWAY_DEPTH_CAP}")

        outcomes = [
            outcome_from_payload(e.payload) for e in session.audit if e.kind == OUTCOMES_POSTED
        ]

        def node(extra: list, remaining: int) -> dict:
            from .engines import replay

            run = replay(session.config, outcomes + extra)
            entry = {
                "recommendation": run.recommendation.to_dict(),
                "status": run.state.status,
                "children": [],
            }
            if extra:
                entry["outcome"] = outcome_to_payload(extra[-1])
            if remaining <= 0 or run.state.status != ACTIVE:
                return entry
            dose = run.recommendation.dose_index
            size = run.next_cohort_size or 3
            for n_events in range(size + 1):
                hypo = CohortOutcome(dose_index=dose, n_treated=size, n_events=n_events)
                entry["children"].append(node(extra + [hypo], remaining - 1))
            return entry

        return node([], depth)

    def export_audit(self, session_id: str) -> str:
        path = self._audit_path(session_id)
        return path.read_text()
