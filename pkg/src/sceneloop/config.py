"""Engine configuration: backend modes, mock latencies, costs, and policy knobs.

Values load from defaults, then an optional JSON config file, then
``SCENELOOP_*`` environment variable overrides (highest precedence).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field


@dataclass
class EngineConfig:
    # backend selection: "mock" or "live"
    caption_backend: str = "mock"
    generation_backend: str = "mock"
    mix_backend: str = "mock"

    # live backend endpoints / credentials (unused in mock mode)
    caption_api_url: str = ""
    caption_api_key: str = ""
    generation_api_url: str = ""
    generation_api_key: str = ""
    mix_api_url: str = ""
    mix_api_key: str = ""
    webhook_path: str = "/webhooks/mix"

    # mock latencies, seconds (defaults mirror the measured service averages)
    caption_latency: float = 1.2
    generation_latency: float = 3.8
    mix_preview_latency: float = 5.2
    master_latency: float = 8.6

    # request handling
    caption_timeout: float = 10.0
    generation_timeout: float = 30.0

    # per-call accounting, dollars
    caption_cost: float = 0.002
    generation_cost: float = 0.14
    mix_stem_cost: float = 0.05
    master_cost: float = 0.15

    # splice policy knobs
    transient_weight: float = 1.0  # lambda in the splice cost
    transient_tau: float = 0.05
    transient_guard: int = 256

    # forces the power-law family when a caption mood hits one of these
    # keywords; empty tuple means the cost-based selection always runs
    force_power_law_moods: tuple[str, ...] = ()

    # scheduler
    look_ahead: float = 0.25

    # session
    auto_mix: bool = False

    # mix job polling backoff, seconds
    poll_backoff_base: float = 1.0
    poll_backoff_cap: float = 16.0

    def zero_latency(self) -> "EngineConfig":
        """Copy with all mock latencies set to zero (deterministic fast runs)."""
        return dataclasses.replace(
            self,
            caption_latency=0.0,
            generation_latency=0.0,
            mix_preview_latency=0.0,
            master_latency=0.0,
        )


_ENV_PREFIX = "SCENELOOP_"


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def load_config(path: str | None = None, env: dict | None = None) -> EngineConfig:
    """Build an EngineConfig from defaults + optional JSON file + env overrides."""
    cfg = EngineConfig()
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - {f.name for f in dataclasses.fields(cfg)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            if isinstance(getattr(cfg, key), tuple) and isinstance(value, list):
                value = tuple(value)
            setattr(cfg, key, value)
    env = os.environ if env is None else env
    for f in dataclasses.fields(cfg):
        raw = env.get(_ENV_PREFIX + f.name.upper())
        if raw is not None:
            setattr(cfg, f.name, _coerce(getattr(cfg, f.name), raw))
    return cfg
