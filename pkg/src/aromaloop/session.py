"""Refinement-loop sessions: state machine, per-turn diffs, JSONL logging.

Sessions are event-sourced: every lifecycle change appends one JSONL
record, and replaying the log reconstructs the in-memory sessions exactly.
Turn 0 is the zero-shot generation; each refinement conditions on the full
(feedback, changes) history accumulated so far.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from . import gateway
from .composition import RatioVector
from .gateway import CompositionResult, UserInput
from .palette import Palette

ACTIVE = "active"
SATISFIED = "satisfied"
ABANDONED = "abandoned"


class SessionError(Exception):
    pass


class UnknownSessionError(SessionError):
    pass


class SessionStateError(SessionError):
    """Operation not allowed in the session's current status."""


class SessionConflictError(SessionError):
    """A concurrent refinement is already running for this session."""


@dataclass(frozen=True)
class RefinementTurn:
    index: int
    ratios: RatioVector
    justification: str
    latency_ms: int
    repaired: bool
    modalities: frozenset
    feedback: Optional[str] = None
    changes_made: Optional[str] = None


@dataclass
class Session:
    id: str
    original_input: UserInput
    turns: List[RefinementTurn] = field(default_factory=list)
    status: str = ACTIVE

    @property
    def latest(self) -> RefinementTurn:
        return self.turns[-1]

    @property
    def refinement_turns(self) -> int:
        return len(self.turns) - 1

    def history(self):
        """(feedback, changes) pairs for all refinement turns so far."""
        return [(t.feedback, t.changes_made) for t in self.turns[1:]]


@dataclass(frozen=True)
class DiffEntry:
    name: str
    old: float
    new: float
    delta: float
    kind: str  # increased | decreased | zeroed | introduced


def turn_diff(a: RatioVector, b: RatioVector) -> List[DiffEntry]:
    """Changed ratios between consecutive turns; deltas sum to exactly 0."""
    entries = []
    for name in a.hundredths:
        old = a.hundredths[name]
        new = b.hundredths.get(name, 0)
        if old == new:
            continue
        if old == 0:
            kind = "introduced"
        elif new == 0:
            kind = "zeroed"
        elif new > old:
            kind = "increased"
        else:
            kind = "decreased"
        entries.append(
            DiffEntry(name, old / 100, new / 100, (new - old) / 100, kind)
        )
    entries.sort(key=lambda e: e.name)
    return entries


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


class SessionStore:
    """Owns sessions, serializes per-session writes, and appends the log.

    One writer per session: a refinement that arrives while another is in
    flight for the same session gets a SessionConflictError. Distinct
    sessions proceed in parallel.
    """

    def __init__(self, palette: Palette, provider, log_path=None):
        self.palette = palette
        self.provider = provider
        self.log_path = Path(log_path) if log_path else None
        self._sessions: Dict[str, Session] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._log_lock = threading.Lock()
        if self.log_path and self.log_path.exists():
            for session in replay_log(self.log_path).values():
                self._sessions[session.id] = session
                self._locks[session.id] = threading.Lock()

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"unknown session: {session_id}")

    def sessions(self):
        return list(self._sessions.values())

    def _append_log(self, record: dict):
        if not self.log_path:
            return
        line = json.dumps(record, ensure_ascii=False)
        with self._log_lock:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def _turn_record(self, session: Session, turn: RefinementTurn) -> dict:
        return {
            "session_id": session.id,
            "event": "turn",
            "turn_index": turn.index,
            "ratios": turn.ratios.as_decimal_strings(),
            "feedback": turn.feedback,
            "changes_made": turn.changes_made,
            "justification": turn.justification,
            "latency_ms": turn.latency_ms,
            "repaired": turn.repaired,
            "modalities": sorted(turn.modalities),
            "timestamp": _timestamp(),
        }

    def start_session(self, user_input: UserInput) -> Session:
        """Run zero-shot generation and persist turn 0.

        Gateway failures propagate and no session is created.
        """
        result = gateway.generate(self.provider, self.palette, user_input)
        session = Session(id=uuid.uuid4().hex[:12], original_input=user_input)
        session.turns.append(self._make_turn(0, result, user_input.modalities))
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self._append_log({
            "session_id": session.id,
            "event": "created",
            "input": {
                "text": user_input.text,
                "image_description": user_input.image_description,
                "transcript": user_input.transcript,
            },
            "timestamp": _timestamp(),
        })
        self._append_log(self._turn_record(session, session.turns[0]))
        return session

    def refine_session(self, session_id: str, feedback: str) -> Session:
        """Append one feedback-conditioned revision turn."""
        if not feedback:
            raise ValueError("feedback must be non-empty")
        session = self.get(session_id)
        lock = self._locks[session_id]
        if not lock.acquire(blocking=False):
            raise SessionConflictError(
                f"a refinement is already in flight for session {session_id}"
            )
        try:
            if session.status != ACTIVE:
                raise SessionStateError(
                    f"cannot refine a session with status {session.status!r}"
                )
            result = gateway.refine(
                self.provider,
                self.palette,
                session.original_input,
                session.latest.ratios,
                session.history(),
                feedback,
            )
            turn = self._make_turn(
                len(session.turns), result, frozenset({"text"}), feedback=feedback
            )
            session.turns.append(turn)
            self._append_log(self._turn_record(session, turn))
            return session
        finally:
            lock.release()

    def mark_satisfied(self, session_id: str) -> Session:
        return self._terminate(session_id, SATISFIED)

    def abandon(self, session_id: str) -> Session:
        return self._terminate(session_id, ABANDONED)

    def _terminate(self, session_id: str, status: str) -> Session:
        session = self.get(session_id)
        with self._locks[session_id]:
            if session.status != ACTIVE:
                raise SessionStateError(
                    f"cannot mark {status}: session is already {session.status}"
                )
            if not session.turns:
                raise SessionStateError("session has no turns")
            session.status = status
            self._append_log({
                "session_id": session.id,
                "event": status,
                "refinement_turns": session.refinement_turns,
                "timestamp": _timestamp(),
            })
            return session

    @staticmethod
    def _make_turn(index, result: CompositionResult, modalities, feedback=None):
        return RefinementTurn(
            index=index,
            ratios=result.ratios,
            justification=result.justification,
            latency_ms=result.latency_ms,
            repaired=result.repaired,
            modalities=frozenset(modalities),
            feedback=feedback,
            changes_made=result.changes_made,
        )


def replay_log(path) -> Dict[str, Session]:
    """Rebuild sessions from a JSONL event log."""
    sessions: Dict[str, Session] = {}
    path = Path(path)
    if not path.exists():
        return sessions
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SessionError(f"bad log line {lineno}: {exc}") from exc
            event = record.get("event")
            sid = record.get("session_id")
            if event == "created":
                raw = record["input"]
                sessions[sid] = Session(
                    id=sid,
                    original_input=UserInput(
                        text=raw.get("text"),
                        image_description=raw.get("image_description"),
                        transcript=raw.get("transcript"),
                    ),
                )
            elif event == "turn":
                session = sessions.get(sid)
                if session is None:
                    raise SessionError(f"bad log line {lineno}: turn before created")
                hundredths = {
                    name: round(float(v) * 100)
                    for name, v in record["ratios"].items()
                }
                session.turns.append(RefinementTurn(
                    index=record["turn_index"],
                    ratios=RatioVector(hundredths=hundredths),
                    justification=record["justification"],
                    latency_ms=record["latency_ms"],
                    repaired=record["repaired"],
                    modalities=frozenset(record["modalities"]),
                    feedback=record.get("feedback"),
                    changes_made=record.get("changes_made"),
                ))
            elif event in (SATISFIED, ABANDONED):
                session = sessions.get(sid)
                if session is not None:
                    session.status = event
    return sessions
