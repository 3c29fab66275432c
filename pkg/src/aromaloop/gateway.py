"""Prompt construction, provider calls, and structured-output parsing.

The system prompts are fixed templates (golden-file locked in the test
suite) with the palette JSON fragment substituted in. Provider responses
must be a single JSON object; parsing tolerates surrounding whitespace and
one fenced code block, and malformed ratio payloads are routed through the
composition repair path with a bounded retry policy.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence, Tuple

from .composition import CompositionError, RatioVector, repair_ratios, _to_fraction
from .palette import Palette, palette_prompt_fragment

MAX_RETRIES = 2  # corrective re-prompts after the first failed attempt

TEXT_LABEL = "TEXT DESCRIPTION:"
IMAGE_LABEL = "IMAGE DESCRIPTION:"
SPEECH_LABEL = "SPEECH TRANSCRIPT:"


class GatewayError(Exception):
    pass


class ProviderError(GatewayError):
    """Transport-level provider failure."""


class ParseError(GatewayError):
    """A provider response violated the output contract.

    `code` is machine-readable and doubles as the retry hint; `repairable`
    marks failures the gateway can fix locally (e.g. missing keys filled
    with zero) once retries are exhausted.
    """

    def __init__(self, code: str, message: str, repairable: bool = False):
        super().__init__(message)
        self.code = code
        self.repairable = repairable


class UnrepairableOutputError(GatewayError):
    def __init__(self, last_error: ParseError, attempts: int):
        super().__init__(
            f"provider output unrepairable after {attempts} attempts: "
            f"[{last_error.code}] {last_error}"
        )
        self.last_error = last_error
        self.attempts = attempts


@dataclass(frozen=True)
class UserInput:
    text: Optional[str] = None
    image_description: Optional[str] = None
    transcript: Optional[str] = None

    def __post_init__(self):
        if not (self.text or self.image_description or self.transcript):
            raise ValueError("user input must have at least one non-empty field")

    @property
    def modalities(self) -> frozenset:
        present = []
        if self.text:
            present.append("text")
        if self.image_description:
            present.append("image")
        if self.transcript:
            present.append("speech")
        return frozenset(present)


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str


@dataclass
class CompositionResult:
    ratios: RatioVector
    justification: str
    changes_made: Optional[str] = None
    repaired: bool = False
    latency_ms: int = 0
    attempts: int = 1


def _template(name: str) -> str:
    return resources.files("aromaloop.data").joinpath(name).read_text("utf-8")


def render_zero_shot_system(palette: Palette) -> str:
    return _template("prompt_zero_shot.txt").replace(
        "{{ scents_json }}", palette_prompt_fragment(palette)
    )


def render_revision_system(palette: Palette) -> str:
    return _template("prompt_revision.txt").replace(
        "{{ scents_json }}", palette_prompt_fragment(palette)
    )


def _input_sections(user_input: UserInput) -> str:
    sections = []
    if user_input.text:
        sections.append(f"{TEXT_LABEL}\n{user_input.text}")
    if user_input.image_description:
        sections.append(f"{IMAGE_LABEL}\n{user_input.image_description}")
    if user_input.transcript:
        sections.append(f"{SPEECH_LABEL}\n{user_input.transcript}")
    return "\n\n".join(sections)


def build_generation_prompt(palette: Palette, user_input: UserInput) -> PromptBundle:
    return PromptBundle(
        system=render_zero_shot_system(palette),
        user=_input_sections(user_input),
    )


def format_ratios(r: RatioVector, palette: Palette) -> str:
    """All 12 ratios as a JSON object with exactly two decimals each."""
    parts = [f'"{name}": {r.hundredths[name] / 100:.2f}' for name in palette.names]
    return "{" + ", ".join(parts) + "}"


def _original_request_line(user_input: UserInput) -> str:
    parts = []
    if user_input.text:
        parts.append(user_input.text)
    if user_input.image_description:
        parts.append(f"[image] {user_input.image_description}")
    if user_input.transcript:
        parts.append(f"[speech] {user_input.transcript}")
    return " | ".join(parts)


def build_revision_prompt(
    palette: Palette,
    original: UserInput,
    current: RatioVector,
    history: Sequence[Tuple[str, Optional[str]]],
    latest_feedback: str,
) -> PromptBundle:
    """Revision prompt with the four fixed user-message sections in order."""
    if not latest_feedback:
        raise ValueError("feedback must be non-empty")
    if history:
        lines = []
        for i, (feedback, changes) in enumerate(history, start=1):
            entry = f"{i}. feedback: {feedback}"
            if changes:
                entry += f" | changes: {changes}"
            lines.append(entry)
        history_block = "\n".join(lines)
    else:
        history_block = "(empty)"
    user = (
        f"ORIGINAL REQUEST: {_original_request_line(original)}\n"
        f"CURRENT RATIOS: {format_ratios(current, palette)}\n"
        f"PRIOR FEEDBACK HISTORY:\n{history_block}\n"
        f">>> LATEST FEEDBACK <<<: {latest_feedback}"
    )
    return PromptBundle(system=render_revision_system(palette), user=user)


_FENCE_RE = re.compile(r"\A```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*\Z", re.DOTALL)


def strip_fence(raw: str) -> str:
    stripped = raw.strip()
    match = _FENCE_RE.match(stripped)
    return match.group(1).strip() if match else stripped


def parse_response(
    raw: str, palette: Palette, fill_missing: bool = False
) -> CompositionResult:
    """Validate a raw provider response against the output contract.

    All 12 odorant keys are required (unless fill_missing is set, the local
    repair path). Ratios go through repair_ratios; `repaired` is set when
    the repaired vector differs from what the provider wrote.
    """
    try:
        doc = json.loads(strip_fence(raw))
    except json.JSONDecodeError as exc:
        raise ParseError("unparseable", f"response is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ParseError("unparseable", "response is not a JSON object")
    ratios_raw = doc.get("scent_ratios")
    if not isinstance(ratios_raw, dict):
        raise ParseError("missing_field", "response lacks a 'scent_ratios' object")
    justification = doc.get("justification")
    if not isinstance(justification, str):
        raise ParseError("missing_field", "response lacks a 'justification' string")

    for key in ratios_raw:
        if key not in palette:
            raise ParseError("unknown_odorant", f"unknown odorant: {key!r}")
    if not fill_missing:
        for name in palette.names:
            if name not in ratios_raw:
                raise ParseError(
                    "missing_odorant", f"missing odorant: {name}", repairable=True
                )
    if not ratios_raw:
        raise ParseError("degenerate", "scent_ratios is empty")
    try:
        ratios = repair_ratios(ratios_raw, palette)
    except CompositionError as exc:
        code = "degenerate" if "degenerate" in str(exc) else "bad_ratios"
        raise ParseError(code, str(exc))

    repaired = False
    for name in palette.names:
        written = ratios_raw.get(name, 0)
        try:
            exact = _to_fraction(written)
        except CompositionError as exc:
            raise ParseError("bad_ratios", str(exc))
        if exact * 100 != ratios.hundredths[name]:
            repaired = True
            break

    changes = doc.get("changes_made")
    if changes is not None and not isinstance(changes, str):
        changes = str(changes)
    return CompositionResult(
        ratios=ratios,
        justification=justification,
        changes_made=changes,
        repaired=repaired,
    )


def serialize_result(result: CompositionResult, palette: Palette) -> str:
    """Render a result back into the provider output schema (round-trips
    through parse_response)."""
    doc = {
        "scent_ratios": {
            name: result.ratios.hundredths[name] / 100 for name in palette.names
        },
        "justification": result.justification,
    }
    if result.changes_made is not None:
        doc["changes_made"] = result.changes_made
    return json.dumps(doc, indent=2)


def _call_with_retries(provider, bundle: PromptBundle, palette: Palette) -> CompositionResult:
    started = time.perf_counter()
    user = bundle.user
    last_raw = None
    last_error = None
    attempts = 0
    for attempt in range(1 + MAX_RETRIES):
        attempts = attempt + 1
        raw = provider.complete(bundle.system, user)
        last_raw = raw
        try:
            result = parse_response(raw, palette)
            result.latency_ms = int((time.perf_counter() - started) * 1000)
            result.attempts = attempts
            return result
        except ParseError as exc:
            last_error = exc
            user = (
                f"{bundle.user}\n\n"
                f"Your previous response was invalid ({exc.code}: {exc}). "
                "Return a single corrected JSON object."
            )
    if last_error.repairable:
        result = parse_response(last_raw, palette, fill_missing=True)
        result.repaired = True
        result.latency_ms = int((time.perf_counter() - started) * 1000)
        result.attempts = attempts
        return result
    raise UnrepairableOutputError(last_error, attempts)


def generate(provider, palette: Palette, user_input: UserInput) -> CompositionResult:
    """Zero-shot composition from a user description."""
    return _call_with_retries(provider, build_generation_prompt(palette, user_input), palette)


def refine(
    provider,
    palette: Palette,
    original: UserInput,
    current: RatioVector,
    history: Sequence[Tuple[str, Optional[str]]],
    latest_feedback: str,
) -> CompositionResult:
    """One feedback-conditioned revision of the current composition."""
    bundle = build_revision_prompt(palette, original, current, history, latest_feedback)
    return _call_with_retries(provider, bundle, palette)
