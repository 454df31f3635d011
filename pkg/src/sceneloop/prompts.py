"""Single-sentence generation prompts from scene captions and instrumentation.

The prompt grammar is frozen: instrument names (the last one tagged with a
"section" marker), the scene phrase, up to three mood adjectives, the locked
session genre, a role-specific modifier, and — for non-initial sections — a
rotating variation tag plus a continuity tag. Phrase tables ship as a
versioned key/value config asset so wording changes never touch code.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

INSTRUMENTS = ("keys", "guitar", "bass", "percussion")
ROLES = ("intro", "verse", "chorus", "bridge", "outro")

MAX_INSTRUMENTS = 3
MAX_MOODS = 3


class InstrumentCapViolation(ValueError):
    """Instrument selection outside the 1..3 range (or unknown names)."""


@dataclass(frozen=True)
class InstrumentSelection:
    """Ordered pick of 1 to 3 distinct instruments."""

    instruments: tuple[str, ...]

    def __post_init__(self):
        if not (1 <= len(self.instruments) <= MAX_INSTRUMENTS):
            raise InstrumentCapViolation(
                f"select 1 to {MAX_INSTRUMENTS} instruments, got {len(self.instruments)}"
            )
        if len(set(self.instruments)) != len(self.instruments):
            raise InstrumentCapViolation("duplicate instruments")
        unknown = [i for i in self.instruments if i not in INSTRUMENTS]
        if unknown:
            raise InstrumentCapViolation(f"unknown instruments: {unknown}")

    @staticmethod
    def parse(text: str) -> "InstrumentSelection":
        names = tuple(part.strip() for part in text.split(",") if part.strip())
        return InstrumentSelection(names)


@dataclass(frozen=True)
class SessionLock:
    """Genre and tempo locked at the first section; authoritative afterwards."""

    genre: str
    bpm: float


@dataclass(frozen=True)
class PromptRecord:
    text: str
    parts: tuple[tuple[str, str], ...]  # (label, phrase) in order
    section_index: int

    def __post_init__(self):
        joined = ", ".join(phrase for _, phrase in self.parts)
        if joined != self.text:
            raise ValueError("text must equal the joined parts")


def _load_phrase_table() -> dict[str, str]:
    raw = resources.files("sceneloop").joinpath("data/prompt_phrases.cfg").read_text()
    table = {}
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        table[key.strip()] = value.strip()
    return table


_PHRASES = _load_phrase_table()

_VARIATION_TAGS = tuple(
    _PHRASES[f"variation.{i}"] for i in range(int(_PHRASES["variation.count"]))
)


def section_modifier(role: str) -> str:
    """Role-specific energy/texture phrase from the frozen table."""
    if role not in ROLES:
        raise ValueError(f"unknown section role {role!r}")
    return _PHRASES[f"modifier.{role}"]


def variation_tag(k: int) -> str:
    """Deterministic rotation of development tags for non-initial sections."""
    if k < 1:
        raise ValueError("variation tags apply from the second section on")
    return _VARIATION_TAGS[(k - 1) % len(_VARIATION_TAGS)]


def _scene_phrase(caption) -> str:
    # contextual description over literal object lists; at most the top
    # object stands in when there is no description at all
    if caption.description:
        return caption.description
    return caption.objects[0]


def build_prompt(caption, sel: InstrumentSelection, k: int, locked: SessionLock | None = None) -> PromptRecord:
    """Compose the generation prompt for section ``k``.

    ``locked`` must carry the session genre for every section after the
    first; the first section locks from its own caption.
    """
    if k > 0 and locked is None:
        raise ValueError("locked session genre/bpm required for k > 0")
    genre = locked.genre if locked is not None else caption.genre

    parts: list[tuple[str, str]] = []
    for name in sel.instruments[:-1]:
        parts.append(("instrument", name))
    parts.append(("role", f"{sel.instruments[-1]} {_PHRASES['role_marker']}"))
    parts.append(("scene", _scene_phrase(caption)))
    for mood in caption.mood[:MAX_MOODS]:
        parts.append(("mood", mood))
    parts.append(("genre", genre))
    parts.append(("modifier", section_modifier(caption.section_role)))
    if k > 0:
        parts.append(("variation", variation_tag(k)))
        parts.append(("continuity", _PHRASES["continuity"]))

    text = ", ".join(phrase for _, phrase in parts)
    return PromptRecord(text=text, parts=tuple(parts), section_index=k)
