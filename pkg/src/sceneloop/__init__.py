"""Vision-steered loop composition engine.

Turns structured scene captions into music-generation prompts, schedules
fixed-length generated sections into a continuous bar-aligned loop with
tempo-adaptive crossfades, and manages asynchronous mix/master jobs with
bar-boundary hot-swaps.
"""

from .audio import AudioBuffer, PowerMeasure, decode_wav, encode_wav, rms_power
from .captions import CaptureFrame, MockCaptionBackend, SceneCaption, parse_caption_json
from .config import EngineConfig, load_config
from .crossfade import (
    CrossfadePlan,
    EnvelopeFamily,
    SpliceContext,
    SpliceCost,
    envelope_gains,
    select_envelope,
    splice,
    transient_cost,
)
from .generation import GenerationRequest, GenerationResult, generate, mock_synthesize
from .mixing import MixJob, StemMetadata, submit_master, submit_preview_mix
from .prompts import InstrumentSelection, PromptRecord, build_prompt
from .scheduler import (
    HotSwapRequest,
    LoopTimeline,
    ScheduledSection,
    SessionClock,
    crossfade_window,
    fit_bars,
    quantize_to_bar,
    schedule_next,
)
from .session import Session, SessionEvent

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "PowerMeasure",
    "decode_wav",
    "encode_wav",
    "rms_power",
    "CaptureFrame",
    "MockCaptionBackend",
    "SceneCaption",
    "parse_caption_json",
    "EngineConfig",
    "load_config",
    "CrossfadePlan",
    "EnvelopeFamily",
    "SpliceContext",
    "SpliceCost",
    "envelope_gains",
    "select_envelope",
    "splice",
    "transient_cost",
    "GenerationRequest",
    "GenerationResult",
    "generate",
    "mock_synthesize",
    "MixJob",
    "StemMetadata",
    "submit_master",
    "submit_preview_mix",
    "InstrumentSelection",
    "PromptRecord",
    "build_prompt",
    "HotSwapRequest",
    "LoopTimeline",
    "ScheduledSection",
    "SessionClock",
    "crossfade_window",
    "fit_bars",
    "quantize_to_bar",
    "schedule_next",
    "Session",
    "SessionEvent",
]
