"""Closed-loop aroma composition: palette, ratio vectors, LLM gateway,
refinement sessions, dispenser simulation, and study statistics."""

from .composition import (
    DispenseSchedule,
    DispenseStep,
    RatioVector,
    active_odorants,
    repair_ratios,
    to_schedule,
)
from .gateway import CompositionResult, PromptBundle, UserInput, generate, refine
from .palette import (
    Odorant,
    Palette,
    default_palette,
    load_palette,
    odorant_by_name,
    palette_prompt_fragment,
)
from .providers import HttpProvider, MockProvider, Provider, ScriptedProvider
from .session import Session, SessionStore, replay_log, turn_diff

__all__ = [
    "CompositionResult",
    "DispenseSchedule",
    "DispenseStep",
    "HttpProvider",
    "MockProvider",
    "Odorant",
    "Palette",
    "PromptBundle",
    "Provider",
    "RatioVector",
    "ScriptedProvider",
    "Session",
    "SessionStore",
    "UserInput",
    "active_odorants",
    "default_palette",
    "generate",
    "load_palette",
    "odorant_by_name",
    "palette_prompt_fragment",
    "refine",
    "repair_ratios",
    "replay_log",
    "to_schedule",
    "turn_diff",
]
