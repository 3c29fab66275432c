"""Ratio vectors and their conversion to timed dispense schedules.

Ratios are stored as integer hundredths so the sum-to-1.00 / two-decimal
contract is exact rather than floating-point-approximate. Rounding of raw
model outputs uses largest-remainder (Hamilton) apportionment over 100
units, which minimizes L1 deviation from the renormalized exact vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Mapping

from .palette import Palette, odorant_by_name


class CompositionError(ValueError):
    """A ratio mapping cannot be turned into a valid composition."""


def _to_fraction(value) -> Fraction:
    """Exact decimal interpretation of a numeric input.

    Floats go through repr() so the shortest decimal the caller wrote
    (e.g. 0.33) is honored exactly instead of its binary approximation.
    """
    if isinstance(value, bool) or not isinstance(value, (Real, str)):
        raise CompositionError(f"ratio value is not a number: {value!r}")
    if isinstance(value, float):
        value = repr(value)
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise CompositionError(f"ratio value is not a number: {value!r}") from exc


@dataclass(frozen=True)
class RatioVector:
    """Convex combination over the palette, in exact integer hundredths."""

    hundredths: Mapping[str, int]

    def __post_init__(self):
        for name, value in self.hundredths.items():
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise CompositionError(
                    f"hundredths must be non-negative integers, got {name}={value!r}"
                )
        total = sum(self.hundredths.values())
        if total != 100:
            raise CompositionError(f"ratios must sum to exactly 1.00, got {total}/100")
        object.__setattr__(self, "hundredths", dict(self.hundredths))

    def ratio(self, name: str) -> float:
        return self.hundredths[name] / 100

    def as_decimal_strings(self) -> dict:
        """name -> "0.33"-style two-decimal strings for all keys."""
        return {name: f"{h / 100:.2f}" for name, h in self.hundredths.items()}

    def as_floats(self) -> dict:
        return {name: h / 100 for name, h in self.hundredths.items()}

    def __eq__(self, other):
        if not isinstance(other, RatioVector):
            return NotImplemented
        return self.hundredths == other.hundredths


def repair_ratios(raw: Mapping, palette: Palette) -> RatioVector:
    """Coerce a raw name->number mapping into a valid RatioVector.

    Unknown keys are rejected; missing palette keys are filled with zero;
    negatives are clamped to zero; the result is renormalized and rounded
    to hundredths via largest-remainder apportionment (remainder ties break
    toward the lower channel index). Idempotent on already-valid vectors.
    """
    if not raw:
        raise CompositionError("empty ratio mapping")
    for key in raw:
        if key not in palette:
            raise CompositionError(f"unknown odorant: {key!r}")

    clamped = {}
    for name in palette.names:
        value = _to_fraction(raw[name]) if name in raw else Fraction(0)
        clamped[name] = max(value, Fraction(0))
    total = sum(clamped.values())
    if total == 0:
        raise CompositionError("degenerate composition: all ratios are zero or negative")

    exact = {name: value * 100 / total for name, value in clamped.items()}
    hundredths = {name: int(value) for name, value in exact.items()}  # floor
    leftover = 100 - sum(hundredths.values())
    by_remainder = sorted(
        palette.names,
        key=lambda n: (-(exact[n] - hundredths[n]), odorant_by_name(palette, n).channel),
    )
    for name in by_remainder[:leftover]:
        hundredths[name] += 1
    return RatioVector(hundredths=hundredths)


def active_odorants(r: RatioVector, palette: Palette) -> list:
    """(name, ratio) pairs with ratio > 0, largest first, channel tie-break.

    Callers treat counts outside 3..6 as a warning-level constraint
    violation, not an error.
    """
    active = [(name, h) for name, h in r.hundredths.items() if h > 0]
    active.sort(key=lambda item: (-item[1], odorant_by_name(palette, item[0]).channel))
    return [(name, h / 100) for name, h in active]


ACTIVE_MIN, ACTIVE_MAX = 3, 6


def active_count_ok(r: RatioVector) -> bool:
    n = sum(1 for h in r.hundredths.values() if h > 0)
    return ACTIVE_MIN <= n <= ACTIVE_MAX


@dataclass(frozen=True)
class DispenseStep:
    channel: int
    odorant_name: str
    duration_ms: int


@dataclass(frozen=True)
class DispenseSchedule:
    steps: tuple
    total_ms: int


def to_schedule(r: RatioVector, palette: Palette) -> DispenseSchedule:
    """Timed, volatility-descending schedule whose durations sum exactly.

    duration_ms = round(ratio * cycle); any rounding drift is absorbed by
    the final step so the total is exact. Zero-ratio odorants are omitted.
    """
    total_ms = palette.total_ms
    active = [
        odorant_by_name(palette, name)
        for name, h in r.hundredths.items()
        if h > 0
    ]
    active.sort(key=lambda o: (-o.volatility, o.channel))
    if not active:
        raise CompositionError("degenerate composition: no active odorants")

    steps = []
    for i, odorant in enumerate(active):
        ideal = Fraction(r.hundredths[odorant.name], 100) * total_ms
        if i == len(active) - 1:
            duration = total_ms - sum(s.duration_ms for s in steps)
        else:
            duration = round(ideal)
        steps.append(DispenseStep(odorant.channel, odorant.name, duration))
    return DispenseSchedule(steps=tuple(steps), total_ms=total_ms)
