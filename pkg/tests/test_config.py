import json

import pytest

from sceneloop.config import EngineConfig, load_config


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(env={})
        assert cfg.caption_latency == 1.2
        assert cfg.generation_latency == 3.8
        assert cfg.mix_preview_latency == 5.2
        assert cfg.master_latency == 8.6
        assert cfg.caption_cost == 0.002
        assert cfg.generation_cost == 0.14
        assert cfg.look_ahead == 0.25
        assert cfg.transient_weight == 1.0
        assert cfg.transient_tau == 0.05
        assert cfg.transient_guard == 256
        assert cfg.auto_mix is False

    def test_file_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"look_ahead": 0.5, "force_power_law_moods": ["calm"]}))
        cfg = load_config(str(path), env={})
        assert cfg.look_ahead == 0.5
        assert cfg.force_power_law_moods == ("calm",)

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"look_ahead": 0.5}))
        cfg = load_config(
            str(path),
            env={
                "SCENELOOP_LOOK_AHEAD": "0.75",
                "SCENELOOP_AUTO_MIX": "true",
                "SCENELOOP_TRANSIENT_GUARD": "512",
                "SCENELOOP_FORCE_POWER_LAW_MOODS": "calm, sparse",
                "SCENELOOP_CAPTION_BACKEND": "live",
            },
        )
        assert cfg.look_ahead == 0.75
        assert cfg.auto_mix is True
        assert cfg.transient_guard == 512
        assert cfg.force_power_law_moods == ("calm", "sparse")
        assert cfg.caption_backend == "live"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"lookahead_typo": 1}))
        with pytest.raises(ValueError):
            load_config(str(path), env={})

    def test_zero_latency_copy(self):
        cfg = EngineConfig()
        zero = cfg.zero_latency()
        assert zero.caption_latency == 0.0
        assert zero.generation_latency == 0.0
        assert zero.mix_preview_latency == 0.0
        assert zero.master_latency == 0.0
        assert cfg.caption_latency == 1.2  # original untouched
