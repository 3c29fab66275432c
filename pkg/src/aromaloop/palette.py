"""The 12-odorant palette: loading, validation, and prompt serialization.

The palette is the ground truth every other module works against: odorant
names are exact keys in ratio vectors, channel indices drive the dispenser,
and the canonical JSON fragment is substituted into the LLM prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Union

PALETTE_SIZE = 12
CATEGORY_NAMES = frozenset({"sweet", "savory", "sour", "burnt_smoked", "fresh"})


class PaletteError(ValueError):
    """A palette document failed validation."""


@dataclass(frozen=True)
class Odorant:
    name: str
    volatility: int
    note: str
    categories: frozenset
    channel: int

    def __post_init__(self):
        if not self.name:
            raise PaletteError("odorant name must be non-empty")
        if not 1 <= self.volatility <= 10:
            raise PaletteError(
                f"volatility out of range for {self.name!r}: {self.volatility}"
            )
        if not 0 <= self.channel < PALETTE_SIZE:
            raise PaletteError(
                f"channel out of range for {self.name!r}: {self.channel}"
            )
        unknown = set(self.categories) - CATEGORY_NAMES
        if unknown:
            raise PaletteError(
                f"unknown categories for {self.name!r}: {sorted(unknown)}"
            )


@dataclass(frozen=True)
class Palette:
    odorants: tuple
    cycle_seconds: int = 60

    def __post_init__(self):
        if len(self.odorants) != PALETTE_SIZE:
            raise PaletteError(
                f"palette must contain exactly {PALETTE_SIZE} odorants, "
                f"got {len(self.odorants)}"
            )
        names = [o.name for o in self.odorants]
        if len(set(names)) != PALETTE_SIZE:
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise PaletteError(f"duplicate name: {dupes[0]}")
        channels = sorted(o.channel for o in self.odorants)
        if channels != list(range(PALETTE_SIZE)):
            seen = set()
            for o in self.odorants:
                if o.channel in seen:
                    raise PaletteError(f"duplicate channel: {o.channel}")
                seen.add(o.channel)
            raise PaletteError("channels must cover 0..11")
        if self.cycle_seconds <= 0:
            raise PaletteError("cycle_seconds must be positive")

    @property
    def names(self):
        """Odorant names in canonical (channel-ascending) order."""
        return tuple(o.name for o in self.by_channel())

    @property
    def total_ms(self):
        return self.cycle_seconds * 1000

    def by_channel(self):
        return sorted(self.odorants, key=lambda o: o.channel)

    def __contains__(self, name):
        return any(o.name == name for o in self.odorants)


def odorant_by_name(palette: Palette, name: str) -> Odorant:
    """Exact, case-sensitive lookup; raises PaletteError on unknown names."""
    for o in palette.odorants:
        if o.name == name:
            return o
    raise PaletteError(f"unknown odorant: {name!r}")


def load_palette(source: Union[bytes, str, IO]) -> Palette:
    """Parse and validate a palette document.

    Accepts bytes, a string, or a readable file object holding a JSON
    document with a top-level ``odorants`` array. The ``categories`` key is
    optional per entry (the prompt fragment omits it).
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise PaletteError(f"malformed palette document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("odorants"), list):
        raise PaletteError("palette document must have an 'odorants' array")
    odorants = []
    for entry in doc["odorants"]:
        if not isinstance(entry, dict):
            raise PaletteError("each odorant entry must be an object")
        try:
            odorants.append(
                Odorant(
                    name=entry["name"],
                    volatility=entry["volatility"],
                    note=entry["note"],
                    categories=frozenset(entry.get("categories", ())),
                    channel=entry["location"],
                )
            )
        except KeyError as exc:
            raise PaletteError(f"odorant entry missing key: {exc}") from exc
    cycle = doc.get("cycle_seconds", 60)
    return Palette(odorants=tuple(odorants), cycle_seconds=cycle)


def default_palette() -> Palette:
    """The bundled 12-odorant palette."""
    data = resources.files("aromaloop.data").joinpath("palette.json").read_bytes()
    return load_palette(data)


def palette_prompt_fragment(palette: Palette) -> str:
    """Canonical JSON fragment substituted into the prompt templates.

    Odorants are emitted in channel-ascending order with a stable key order
    (name, volatility, note, location), so equal palettes always produce
    byte-identical fragments. The fragment itself parses back through
    load_palette.
    """
    entries = [
        {
            "name": o.name,
            "volatility": o.volatility,
            "note": o.note,
            "location": o.channel,
        }
        for o in palette.by_channel()
    ]
    return json.dumps({"odorants": entries}, indent=2)
