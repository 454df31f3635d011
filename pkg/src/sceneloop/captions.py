"""Scene captions from captured frames via a pluggable vision backend.

The mock backend is the testable path: it maps the SHA-256 of the image
bytes through a committed fixture table (documented JSON: hash -> caption
fields) and falls back to a neutral verse/ambient/100-BPM caption for
unknown images. Live calls go through a provider HTTP adapter.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from importlib import resources

import requests

from .prompts import ROLES

logger = logging.getLogger(__name__)

BPM_MIN = 40.0
BPM_MAX = 240.0

DEFAULT_CAPTION = {
    "description": "an everyday scene",
    "objects": [],
    "mood": ["ambient"],
    "section_role": "verse",
    "genre": "ambient",
    "bpm": 100,
}


class BackendUnavailable(RuntimeError):
    """The configured backend could not serve the request."""


class MalformedCaption(ValueError):
    """Backend output could not be parsed into a caption."""


@dataclass(frozen=True)
class SceneCaption:
    description: str
    objects: tuple[str, ...]
    mood: tuple[str, ...]
    section_role: str
    genre: str
    bpm: float | None

    def __post_init__(self):
        if not self.objects and not self.description:
            raise ValueError("caption needs a description or at least one object")
        if self.section_role not in ROLES:
            raise ValueError(f"unknown section role {self.section_role!r}")
        if self.bpm is not None and not (BPM_MIN <= self.bpm <= BPM_MAX):
            raise ValueError(f"bpm {self.bpm} outside [{BPM_MIN}, {BPM_MAX}]")

    def as_dict(self) -> dict:
        return {
            "description": self.description,
            "objects": list(self.objects),
            "mood": list(self.mood),
            "section_role": self.section_role,
            "genre": self.genre,
            "bpm": self.bpm,
        }


@dataclass(frozen=True)
class CaptureFrame:
    image_bytes: bytes
    width: int
    height: int
    captured_at: float

    def __post_init__(self):
        if self.image_bytes[:2] != b"\xff\xd8":
            raise ValueError("frame is not a JPEG (bad magic)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.image_bytes).hexdigest()


def clamp_bpm(value: float) -> float:
    clamped = min(max(value, BPM_MIN), BPM_MAX)
    if clamped != value:
        logger.warning("caption bpm %s clamped to %s", value, clamped)
    return clamped


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")


def _as_str_tuple(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return tuple(str(item) for item in value)


def parse_caption_json(text: str) -> SceneCaption:
    """Tolerant parse of raw backend output into a validated caption.

    Code fences are stripped, unknown fields ignored, bpm strings coerced,
    and a missing or unrecognized section role defaults to verse.
    """
    cleaned = _FENCE_RE.sub("", text.strip())
    try:
        data = json.loads(cleaned)
    except json.JSONDecodeError as exc:
        raise MalformedCaption(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedCaption("caption JSON must be an object")

    role = data.get("section_role")
    if role not in ROLES:
        role = "verse"

    bpm = data.get("bpm")
    if bpm is not None:
        try:
            bpm = clamp_bpm(float(bpm))
        except (TypeError, ValueError):
            bpm = None

    description = str(data.get("description") or "")
    objects = _as_str_tuple(data.get("objects"))
    if not description and not objects:
        raise MalformedCaption("caption carries neither description nor objects")
    return SceneCaption(
        description=description,
        objects=objects,
        mood=_as_str_tuple(data.get("mood")),
        section_role=role,
        genre=str(data.get("genre") or ""),
        bpm=bpm,
    )


def default_instruction() -> str:
    return resources.files("sceneloop").joinpath("data/caption_instruction.txt").read_text()


STRICT_SUFFIX = "\nReturn strictly valid JSON with no code fences or commentary."


class MockCaptionBackend:
    """Deterministic captions keyed on the frame's byte hash."""

    def __init__(self, fixtures: dict | None = None):
        if fixtures is None:
            raw = resources.files("sceneloop").joinpath("data/caption_fixtures.json").read_text()
            fixtures = json.loads(raw)
        self.table = fixtures.get("fixtures", {})
        self.default = fixtures.get("default", DEFAULT_CAPTION)

    def caption_for_hash(self, frame_hash: str) -> dict:
        return self.table.get(frame_hash, self.default)

    def request_caption(
        self, frame: CaptureFrame | None, frame_hash: str, instruction: str
    ) -> str:
        return json.dumps(self.caption_for_hash(frame_hash))


class HttpCaptionBackend:
    """Provider HTTP adapter: JSON request with a base64 image payload."""

    def __init__(self, url: str, api_key: str = "", timeout: float = 10.0):
        self.url = url
        self.api_key = api_key
        self.timeout = timeout

    def request_caption(
        self, frame: CaptureFrame | None, frame_hash: str, instruction: str
    ) -> str:
        if frame is None:
            raise BackendUnavailable("live caption backend needs the image payload")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "instruction": instruction,
            "image_base64": base64.b64encode(frame.image_bytes).decode("ascii"),
        }
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise BackendUnavailable(f"caption backend failed: {exc}") from exc
        return resp.text


def caption(
    frame: CaptureFrame | None,
    backend,
    frame_hash: str | None = None,
    instruction: str | None = None,
) -> SceneCaption:
    """Caption a frame, retrying once with a stricter instruction on bad output."""
    if frame is None and frame_hash is None:
        raise ValueError("need a frame or a frame hash")
    frame_hash = frame_hash if frame_hash is not None else frame.sha256
    instruction = instruction if instruction is not None else default_instruction()
    raw = backend.request_caption(frame, frame_hash, instruction)
    try:
        return parse_caption_json(raw)
    except MalformedCaption:
        logger.warning("malformed caption, retrying with strict instruction")
        raw = backend.request_caption(frame, frame_hash, instruction + STRICT_SUFFIX)
        return parse_caption_json(raw)
