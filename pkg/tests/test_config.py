import json

import pytest

from magma.config import ABLATIONS, EngineConfig, coerce
from magma.errors import ConfigError
from magma.model import EdgeType, Intent


class TestLayers:
    def test_defaults(self):
        cfg = EngineConfig.load(env={})
        assert cfg == EngineConfig()
        assert (cfg.rrf_k, cfg.w_keyword, cfg.gamma) == (60, 3.0, 0.85)

    def test_file_env_override_order(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"hops": 3, "gamma": 0.5, "beam_width": 4}))
        cfg = EngineConfig.load(path, env={"MAGMA_GAMMA": "0.7", "MAGMA_HOPS": "4"},
                                overrides={"hops": 1})
        assert (cfg.beam_width, cfg.gamma, cfg.hops) == (4, 0.7, 1)

    def test_unknown_file_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"gama": 1}')
        with pytest.raises(ConfigError, match="gama"):
            EngineConfig.load(path, env={})

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            EngineConfig.load(tmp_path / "missing.json", env={})

    @pytest.mark.parametrize("name, raw, value", [
        ("mock", "off", False), ("hops", "3", 3), ("gamma", "0.5", 0.5),
        ("store_path", "x", "x"), ("providers", '{"judge": {}}', {"judge": {}})])
    def test_coerce(self, name, raw, value):
        assert coerce(name, raw) == value

    @pytest.mark.parametrize("name, raw", [("mock", "maybe"), ("hops", "two"),
                                           ("gamma", "x"), ("providers", "[]"), ("nope", "1")])
    def test_coerce_rejects(self, name, raw):
        with pytest.raises(ConfigError):
            coerce(name, raw)


class TestValidation:
    @pytest.mark.parametrize("field, value", [("gamma", 1.5), ("theta_sim", -0.1), ("rrf_k", 0),
                                              ("beam_width", 0), ("token_budget", 0)])
    def test_bad_values(self, field, value):
        with pytest.raises(ConfigError):
            EngineConfig(**{field: value})

    def test_hash_stable_and_sensitive(self):
        assert EngineConfig().config_hash() == EngineConfig().config_hash()
        assert EngineConfig(gamma=0.8).config_hash() != EngineConfig().config_hash()
        assert len(EngineConfig().config_hash()) == 16


class TestDerived:
    def test_anchor_weights(self):
        ac = EngineConfig(w_keyword=2.0).anchor_config()
        assert ac.list_weights == {"vector": 1.0, "keyword": 2.0, "time": 1.0}

    @pytest.mark.parametrize("ablation", [a for a in ABLATIONS if a.startswith("no-") and a != "no-adaptive"])
    def test_ablation_drops_type(self, ablation):
        policy = EngineConfig().traversal_policy(ablation)
        assert EdgeType[ablation[3:].upper()] not in policy.edge_types

    def test_no_adaptive_uniform(self):
        policy = EngineConfig().traversal_policy("no-adaptive")
        rows = {tuple(sorted(policy.weights[i].items(), key=lambda kv: kv[0].value)) for i in Intent}
        assert len(rows) == 1
        assert len(set(policy.weights[Intent.WHY].values())) == 1

    def test_unknown_ablation(self):
        with pytest.raises(ConfigError):
            EngineConfig().traversal_policy("no-fun")
