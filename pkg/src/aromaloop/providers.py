"""Chat-completion provider implementations.

`MockProvider` is a deterministic rule-based stand-in (keyword recipes for
generation, scripted category shifts for revision) so the whole pipeline
runs without network or credentials. `HttpProvider` speaks a generic
chat-completions HTTP shape configured through environment variables.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Dict, List, Optional

from .gateway import ProviderError


class Provider(ABC):
    """Pluggable model backend; implementations must be safe to call
    concurrently or serialize internally."""

    @abstractmethod
    def complete(self, system: str, user: str) -> str:
        ...

    @abstractmethod
    def describe_image(self, image: bytes) -> str:
        ...

    @abstractmethod
    def transcribe(self, audio: bytes) -> str:
        ...


# Canned zero-shot recipes, keyed by keyword. Each is 3-6 active odorants
# summing to 100 hundredths.
_RECIPES = {
    "pizza": {"Onion": 30, "Cumin": 20, "Isovaleric Acid": 20, "Thyme": 30},
    "salad": {"Sage": 30, "Red Clover": 25, "Thyme": 20, "Cypress": 15, "Eucalyptus": 10},
    "chai": {"Cinnamon": 35, "Sichuan Oil": 25, "Ylang Ylang": 25, "Strawberry": 15},
    "latte": {"Cinnamon": 35, "Sichuan Oil": 25, "Ylang Ylang": 25, "Strawberry": 15},
    "strawberry": {"Strawberry": 60, "Ylang Ylang": 25, "Red Clover": 15},
    "burger": {"Isovaleric Acid": 35, "Onion": 30, "Cumin": 20, "Thyme": 15},
}
_DEFAULT_RECIPE = {"Strawberry": 30, "Onion": 25, "Sage": 25, "Cinnamon": 20}

_CATEGORY_WORDS = {
    "sweet": "sweet",
    "sugary": "sweet",
    "savory": "savory",
    "umami": "savory",
    "sour": "sour",
    "acidic": "sour",
    "smoky": "burnt_smoked",
    "smoked": "burnt_smoked",
    "burnt": "burnt_smoked",
    "fresh": "fresh",
    "grassy": "fresh",
    "green": "fresh",
    "minty": "fresh",
}

_CATEGORY_MEMBERS = {
    "sweet": ["Ylang Ylang", "Cinnamon", "Strawberry"],
    "savory": ["Cumin", "Sichuan Oil", "Sage", "Thyme", "Onion", "Isovaleric Acid"],
    "sour": ["Red Clover", "Strawberry", "Onion", "Isovaleric Acid"],
    "burnt_smoked": ["Cumin", "Sichuan Oil", "Cinnamon"],
    "fresh": ["Ylang Ylang", "Eucalyptus", "Red Clover", "Sage", "Cypress", "Thyme"],
}

_ALL_NAMES = [
    "Cumin", "Ylang Ylang", "Sichuan Oil", "Cinnamon", "Eucalyptus",
    "Red Clover", "Sage", "Cypress", "Thyme", "Strawberry", "Onion",
    "Isovaleric Acid",
]


def _share(amount: int, weights: Dict[str, int]) -> Dict[str, int]:
    """Split `amount` units across names proportionally to integer weights,
    via largest remainder (stable order tie-break)."""
    names = [n for n in weights if weights[n] > 0] or list(weights)
    if not names:
        return {}
    total_w = sum(weights[n] for n in names)
    if total_w:
        exact = {n: Fraction(amount) * weights[n] / total_w for n in names}
    else:
        exact = {n: Fraction(amount, len(names)) for n in names}
    out = {n: int(exact[n]) for n in names}
    leftover = amount - sum(out.values())
    for n in sorted(names, key=lambda n: (-(exact[n] - out[n]), _ALL_NAMES.index(n))):
        if leftover <= 0:
            break
        out[n] += 1
        leftover -= 1
    return out


def _full_vector(partial: Dict[str, int]) -> Dict[str, float]:
    return {name: partial.get(name, 0) / 100 for name in _ALL_NAMES}


class MockProvider(Provider):
    """Deterministic keyword-driven provider used by tests and the CLI."""

    def complete(self, system: str, user: str) -> str:
        if system.startswith("You are AromaAI in REVISION mode"):
            return self._revise(user)
        return self._generate(user)

    def describe_image(self, image: bytes) -> str:
        # Decodable payloads are echoed so tests can steer the keyword
        # matching through the image path.
        try:
            hint = image.decode("utf-8")
            if hint.isprintable() and len(hint) <= 200:
                return f"an image showing {hint}"
        except UnicodeDecodeError:
            pass
        digest = hashlib.sha256(image).hexdigest()[:8]
        return f"a photo of food (image digest {digest})"

    def transcribe(self, audio: bytes) -> str:
        try:
            hint = audio.decode("utf-8")
            if hint.isprintable() and len(hint) <= 200:
                return hint
        except UnicodeDecodeError:
            pass
        digest = hashlib.sha256(audio).hexdigest()[:8]
        return f"(unintelligible audio {digest})"

    def _generate(self, user: str) -> str:
        lowered = user.lower()
        recipe = _DEFAULT_RECIPE
        matched = "general food blend"
        for keyword, candidate in _RECIPES.items():
            if keyword in lowered:
                recipe = candidate
                matched = keyword
                break
        doc = {
            "scent_ratios": _full_vector(recipe),
            "justification": (
                f"Matched beat '{matched}'; allocated "
                f"{len(recipe)} active odorants with high-volatility leads."
            ),
        }
        return json.dumps(doc)

    def _revise(self, user: str) -> str:
        current = self._parse_current(user)
        feedback = self._parse_feedback(user)
        revised, changes = self._apply_feedback(dict(current), feedback)
        doc = {
            "scent_ratios": _full_vector(revised),
            "justification": f"Addressed feedback: {feedback}",
            "changes_made": changes,
        }
        return json.dumps(doc)

    @staticmethod
    def _parse_current(user: str) -> Dict[str, int]:
        match = re.search(r"^CURRENT RATIOS: (.*)$", user, re.MULTILINE)
        ratios = json.loads(match.group(1)) if match else {}
        return {name: round(float(v) * 100) for name, v in ratios.items()}

    @staticmethod
    def _parse_feedback(user: str) -> str:
        match = re.search(r">>> LATEST FEEDBACK <<<: (.*)", user, re.DOTALL)
        return match.group(1).strip() if match else ""

    @staticmethod
    def _targets(feedback: str, current: Dict[str, int]) -> List[str]:
        lowered = feedback.lower()
        named = [n for n in _ALL_NAMES if n.lower() in lowered]
        if named:
            return named
        categories = {cat for word, cat in _CATEGORY_WORDS.items() if word in lowered}
        members = []
        for cat in sorted(categories):
            members.extend(n for n in _CATEGORY_MEMBERS[cat] if n not in members)
        return members

    def _apply_feedback(self, current, feedback):
        lowered = feedback.lower()
        targets = self._targets(feedback, current)
        if not targets:
            return current, "no ratios changed; feedback not recognized"

        zero_out = any(w in lowered for w in ("remove", "no more", "zero", "without"))
        decrease = zero_out or any(
            w in lowered for w in ("less", "too", "reduce", "weaker", "dial back", "lighter")
        )
        others = {n: current.get(n, 0) for n in _ALL_NAMES if n not in targets}

        if decrease:
            active_targets = [n for n in targets if current.get(n, 0) > 0]
            if not active_targets:
                return current, "no ratios changed; targets already at 0.00"
            freed = 0
            for n in active_targets:
                cut = current[n] if zero_out else current[n] - current[n] // 2
                current[n] -= cut
                freed += cut
            grants = _share(freed, others)
            for n, extra in grants.items():
                current[n] = current.get(n, 0) + extra
            verb = "zeroed" if zero_out else "decreased"
            return current, (
                f"{verb} {', '.join(active_targets)}; "
                f"increased {', '.join(n for n, e in grants.items() if e)}"
            )

        # Increase: shift up to 20 hundredths from non-target actives.
        supply = {n: h for n, h in others.items() if h > 0}
        shift = min(20, sum(supply.values()) - len(supply))  # keep donors nonzero
        if shift <= 0:
            return current, "no ratios changed; nothing available to shift"
        takes = _share(shift, supply)
        shifted = 0
        for n, t in list(takes.items()):
            t = min(t, current[n] - 1)
            takes[n] = t
            current[n] -= t
            shifted += t
        active_targets = [n for n in targets if current.get(n, 0) > 0] or targets[:1]
        weights = {n: max(current.get(n, 0), 1) for n in active_targets}
        grants = _share(shifted, weights)
        for n, extra in grants.items():
            current[n] = current.get(n, 0) + extra
        return current, (
            f"increased {', '.join(n for n, e in grants.items() if e)}; "
            f"decreased {', '.join(n for n, t in takes.items() if t)}"
        )


class ScriptedProvider(Provider):
    """Replays a fixed sequence of raw responses; repeats the last one."""

    def __init__(self, responses: List[str]):
        if not responses:
            raise ValueError("scripted provider needs at least one response")
        self._responses = list(responses)
        self.calls = 0

    def complete(self, system: str, user: str) -> str:
        index = min(self.calls, len(self._responses) - 1)
        self.calls += 1
        return self._responses[index]

    def describe_image(self, image: bytes) -> str:
        return "a scripted image description"

    def transcribe(self, audio: bytes) -> str:
        return "a scripted transcript"


class HttpProvider(Provider):
    """Generic chat-completions backend.

    Configuration (environment variables, overridable via kwargs):
      AROMA_LLM_ENDPOINT  completions URL
      AROMA_LLM_MODEL     model identifier
      AROMA_LLM_API_KEY   bearer token
      AROMA_LLM_TIMEOUT   request timeout in seconds (default 60)
      AROMA_LLM_DEBUG_LOG optional path mirroring request/response pairs
    """

    def __init__(self, endpoint=None, model=None, api_key=None,
                 timeout=None, debug_log=None):
        self.endpoint = endpoint or os.environ.get("AROMA_LLM_ENDPOINT")
        self.model = model or os.environ.get("AROMA_LLM_MODEL")
        self.api_key = api_key or os.environ.get("AROMA_LLM_API_KEY")
        self.timeout = float(timeout or os.environ.get("AROMA_LLM_TIMEOUT", "60"))
        self.debug_log = debug_log or os.environ.get("AROMA_LLM_DEBUG_LOG")
        if not self.endpoint or not self.model:
            raise ProviderError(
                "HttpProvider requires AROMA_LLM_ENDPOINT and AROMA_LLM_MODEL"
            )

    def _post(self, payload: dict) -> dict:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"provider request failed: {exc}") from exc
        body = response.json()
        if self.debug_log:
            with open(self.debug_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"request": payload, "response": body}) + "\n")
        return body

    def complete(self, system: str, user: str) -> str:
        body = self._post({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected provider response shape: {exc}") from exc

    def describe_image(self, image: bytes) -> str:
        import base64

        body = self._post({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text",
                     "text": "Describe the food in this image and its likely smell."},
                    {"type": "image_url",
                     "image_url": {"url": "data:image/jpeg;base64,"
                                          + base64.b64encode(image).decode()}},
                ],
            }],
        })
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected provider response shape: {exc}") from exc

    def transcribe(self, audio: bytes) -> str:
        raise ProviderError("transcription endpoint not configured for HttpProvider")


def make_provider(name: str) -> Provider:
    if name == "mock":
        return MockProvider()
    if name == "http":
        return HttpProvider()
    raise ValueError(f"unknown provider: {name!r}")
