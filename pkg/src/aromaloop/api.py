"""HTTP surface tying gateway, session, composition, and device together.

The API is a thin adapter: every rule it exposes lives in the underlying
modules, and the CLI exercises the same flows directly.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import asdict
from typing import Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import device as device_mod
from .composition import active_odorants, to_schedule
from .gateway import (
    GatewayError,
    ProviderError,
    UnrepairableOutputError,
    UserInput,
)
from .palette import Palette
from .session import (
    RefinementTurn,
    Session,
    SessionConflictError,
    SessionStateError,
    SessionStore,
    UnknownSessionError,
    turn_diff,
)


class CreateSessionBody(BaseModel):
    text: Optional[str] = None
    image_base64: Optional[str] = None
    audio_base64: Optional[str] = None


class RefineBody(BaseModel):
    feedback: str


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"code": code, "message": message}
    )


def _turn_payload(turn: RefinementTurn) -> dict:
    return {
        "index": turn.index,
        "ratios": turn.ratios.as_decimal_strings(),
        "justification": turn.justification,
        "changes_made": turn.changes_made,
        "feedback": turn.feedback,
        "latency_ms": turn.latency_ms,
        "repaired": turn.repaired,
        "modalities": sorted(turn.modalities),
    }


def _session_payload(session: Session) -> dict:
    return {
        "session_id": session.id,
        "status": session.status,
        "original_input": {
            "text": session.original_input.text,
            "image_description": session.original_input.image_description,
            "transcript": session.original_input.transcript,
        },
        "turns": [_turn_payload(t) for t in session.turns],
    }


def create_app(
    store: SessionStore,
    device_address: Optional[Tuple[str, int]] = None,
) -> FastAPI:
    app = FastAPI(title="aroma composition service")
    palette: Palette = store.palette

    @app.exception_handler(UnknownSessionError)
    async def _unknown(request: Request, exc):
        return _error(404, "unknown_session", str(exc))

    @app.exception_handler(SessionStateError)
    async def _state(request: Request, exc):
        return _error(409, "invalid_state", str(exc))

    @app.exception_handler(SessionConflictError)
    async def _conflict(request: Request, exc):
        return _error(409, "conflict", str(exc))

    @app.exception_handler(UnrepairableOutputError)
    async def _unrepairable(request: Request, exc):
        return _error(422, "unrepairable_output", str(exc))

    @app.exception_handler(ProviderError)
    async def _provider(request: Request, exc):
        return _error(502, "provider_failure", str(exc))

    @app.exception_handler(ValueError)
    async def _value(request: Request, exc):
        return _error(400, "validation", str(exc))

    @app.get("/palette")
    def get_palette():
        return {
            "cycle_seconds": palette.cycle_seconds,
            "odorants": [
                {
                    "name": o.name,
                    "volatility": o.volatility,
                    "note": o.note,
                    "categories": sorted(o.categories),
                    "location": o.channel,
                }
                for o in palette.by_channel()
            ],
        }

    def _decode(field: str, value: str) -> bytes:
        try:
            return base64.b64decode(value, validate=True)
        except (binascii.Error, ValueError):
            raise ValueError(f"{field} is not valid base64")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        image_description = None
        transcript = None
        if body.image_base64:
            image_description = store.provider.describe_image(
                _decode("image_base64", body.image_base64)
            )
        if body.audio_base64:
            transcript = store.provider.transcribe(
                _decode("audio_base64", body.audio_base64)
            )
        user_input = UserInput(
            text=body.text or None,
            image_description=image_description,
            transcript=transcript,
        )
        session = store.start_session(user_input)
        return {
            "session_id": session.id,
            "turn": _turn_payload(session.latest),
            "active_count_ok": len(active_odorants(session.latest.ratios, palette)) in range(3, 7),
        }

    @app.post("/sessions/{session_id}/refine")
    def refine(session_id: str, body: RefineBody):
        before = store.get(session_id).latest.ratios
        session = store.refine_session(session_id, body.feedback)
        diff = turn_diff(before, session.latest.ratios)
        return {
            "turn": _turn_payload(session.latest),
            "diff": [asdict(entry) for entry in diff],
        }

    @app.post("/sessions/{session_id}/play")
    def play(session_id: str):
        session = store.get(session_id)
        if device_address is None:
            return _error(502, "device_unreachable", "no device address configured")
        schedule = to_schedule(session.latest.ratios, palette)
        try:
            report = device_mod.play_schedule(device_address, schedule)
        except device_mod.DeviceBusyError as exc:
            return _error(409, "device_busy", str(exc))
        except device_mod.DeviceError as exc:
            return _error(502, "device_unreachable", str(exc))
        return {
            "completed": report.completed,
            "aborted_at_step": report.aborted_at_step,
            "total_ms": report.total_ms,
            "steps": [asdict(s) for s in report.steps],
        }

    @app.post("/sessions/{session_id}/satisfied")
    def satisfied(session_id: str):
        session = store.mark_satisfied(session_id)
        return {
            "session_id": session.id,
            "status": session.status,
            "refinement_turns": session.refinement_turns,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_payload(store.get(session_id))

    return app
