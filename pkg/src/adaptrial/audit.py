"""Append-only, hash-chained audit log.

Every decision-relevant event in a trial session is chained with SHA-256
over a canonical JSON serialization, so any later mutation, reordering, or
truncation of the record is detectable. Canonical form is UTF-8 JSON with
lexicographically sorted keys and no insignificant whitespace, which makes
the digests reproducible across languages.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import CorruptLog
from .types import EPOCH

GENESIS_HASH = "0" * 64

SESSION_CREATED = "session_created"
OUTCOMES_POSTED = "outcomes_posted"
RECOMMENDATION_ISSUED = "recommendation_issued"
OVERRIDE_RECORDED = "override_recorded"

EVENT_KINDS = (SESSION_CREATED, OUTCOMES_POSTED, RECOMMENDATION_ISSUED, OVERRIDE_RECORDED)


def canonical_json(obj) -> str:
    """Serialize ``obj`` to the canonical JSON form used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class AuditEvent:
    sequence: int
    time: str
    kind: str
    payload: dict
    prev_hash: str
    hash: str

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "time": self.time,
            "kind": self.kind,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuditEvent":
        return cls(
            sequence=int(d["sequence"]),
            time=d["time"],
            kind=d["kind"],
            payload=d["payload"],
            prev_hash=d["prev_hash"],
            hash=d["hash"],
        )


def _digest(prev_hash: str, sequence: int, time: str, kind: str, payload: dict) -> str:
    body = canonical_json({"kind": kind, "payload": payload, "sequence": sequence, "time": time})
    h = hashlib.sha256()
    h.update(prev_hash.encode("utf-8"))
    h.update(body.encode("utf-8"))
    return h.hexdigest()


def append_event(
    log: list[AuditEvent] | tuple[AuditEvent, ...],
    kind: str,
    payload: dict,
    time: str = EPOCH,
) -> list[AuditEvent]:
    """Return a new log with one event appended; the input log is not modified.

    Raises ``CorruptLog`` if the existing chain does not verify.
    """
    log = list(log)
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {kind!r}")
    if not verify_log(log):
        raise CorruptLog("existing audit chain fails verification")
    prev_hash = log[-1].hash if log else GENESIS_HASH
    sequence = len(log)
    event = AuditEvent(
        sequence=sequence,
        time=time,
        kind=kind,
        payload=payload,
        prev_hash=prev_hash,
        hash=_digest(prev_hash, sequence, time, kind, payload),
    )
    return log + [event]


def verify_log(log: Iterable[AuditEvent]) -> bool:
    """True iff sequences are contiguous from 0 and every hash re-computes."""
    prev_hash = GENESIS_HASH
    for i, event in enumerate(log):
        if event.sequence != i:
            return False
        if event.prev_hash != prev_hash:
            return False
        if event.hash != _digest(prev_hash, event.sequence, event.time, event.kind, event.payload):
            return False
        prev_hash = event.hash
    return True


def to_jsonl(log: Iterable[AuditEvent]) -> str:
    return "".join(canonical_json(e.to_dict()) + "\n" for e in log)


def from_jsonl(text: str, strict: bool = True) -> list[AuditEvent]:
    """Parse a JSONL audit log. With ``strict`` the chain must verify."""
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            events.append(AuditEvent.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CorruptLog(f"unparseable audit line: {exc}") from exc
    if strict and not verify_log(events):
        raise CorruptLog("audit chain fails verification")
    return events
