"""Engine configuration: one flat record, layered defaults < file < env < flags."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .consolidate import ConsolidationConfig
from .errors import ConfigError
from .model import EdgeType, Intent
from .providers import ROLES, ProviderConfig
from .retrieval.anchors import AnchorConfig
from .retrieval.traverse import DEFAULT_WEIGHTS, TraversalPolicy, uniform_weights

ENV_PREFIX = "MAGMA_"

ABLATIONS = ("none", "no-causal", "no-temporal", "no-entity", "no-semantic", "no-adaptive")
_ABLATED_EDGE = {"no-causal": EdgeType.CAUSAL, "no-temporal": EdgeType.TEMPORAL,
                 "no-entity": EdgeType.ENTITY, "no-semantic": EdgeType.SEMANTIC}


def _default_weights() -> dict[str, dict[str, float]]:
    return {i.value: {t.value: w for t, w in row.items()} for i, row in DEFAULT_WEIGHTS.items()}


@dataclass
class EngineConfig:
    store_path: str = "magma_store"
    dim: int = 384
    # consolidation
    theta_sim: float = 0.20
    delta_causal: float = 0.5
    hops: int = 2
    semantic_top_m: int = 5
    max_retries: int = 2
    # anchors
    rrf_k: float = 60.0
    vector_top_k: int = 20
    keyword_top_k: int = 20
    anchor_top_k: int = 8
    w_vector: float = 1.0
    w_keyword: float = 3.0
    w_time: float = 1.0
    # traversal
    lambda1: float = 1.0
    lambda2: float = 0.5
    gamma: float = 0.85
    beam_width: int = 8
    max_depth: int = 5
    budget: int = 200
    drop_threshold: float = 0.15
    intent_weights: dict[str, dict[str, float]] = field(default_factory=_default_weights)
    # linearization and session
    token_budget: int = 4000
    loop_writeback: bool = False
    clamp_out_of_order: bool = False
    segment_policy: str = "per-turn"
    # providers
    mock: bool = True
    mock_rules: str = ""
    providers: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, msg: str) -> None:
            if not ok:
                raise ConfigError(msg)

        need(self.dim >= 1, "dim must be >= 1")
        for name in ("theta_sim", "delta_causal", "drop_threshold"):
            need(0.0 <= getattr(self, name) <= 1.0, f"{name} must lie in [0, 1]")
        need(self.hops >= 1, "hops must be >= 1")
        need(self.rrf_k > 0, "rrf_k must be positive")
        for name in ("vector_top_k", "keyword_top_k", "anchor_top_k", "beam_width"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1")
        need(self.budget >= self.beam_width, "budget must be >= beam_width")
        need(0.0 < self.gamma <= 1.0, "gamma must lie in (0, 1]")
        need(self.max_depth >= 0, "max_depth must be >= 0")
        need(self.token_budget >= 1, "token_budget must be >= 1")
        need(self.segment_policy in ("per-turn", "split-paragraphs"), "unknown segment_policy")
        for intent in Intent:
            row = self.intent_weights.get(intent.value)
            need(row is not None and all(t.value in row for t in EdgeType),
                 f"intent_weights incomplete for {intent.value}")
        for role in self.providers:
            need(role in ROLES, f"unknown provider role {role!r}")

    # -- derived configs ----------------------------------------------------

    def anchor_config(self) -> AnchorConfig:
        return AnchorConfig(self.rrf_k, self.vector_top_k, self.keyword_top_k, self.anchor_top_k,
                            {"vector": self.w_vector, "keyword": self.w_keyword,
                             "time": self.w_time})

    def traversal_policy(self, ablation: str = "none") -> TraversalPolicy:
        if ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {ablation!r}; choose from {', '.join(ABLATIONS)}")
        if ablation == "no-adaptive":
            weights = uniform_weights(1.0)
        else:
            weights = {Intent(i): {EdgeType(t): float(w) for t, w in row.items()}
                       for i, row in self.intent_weights.items()}
        types = frozenset(EdgeType)
        if ablation in _ABLATED_EDGE:
            types = types - {_ABLATED_EDGE[ablation]}
        return TraversalPolicy(self.lambda1, self.lambda2, weights, self.gamma, self.beam_width,
                               self.max_depth, self.budget, self.drop_threshold, types)

    def consolidation_config(self) -> ConsolidationConfig:
        return ConsolidationConfig(self.theta_sim, self.delta_causal, self.hops,
                                   self.semantic_top_m, self.max_retries)

    def provider_config(self, role: str) -> ProviderConfig:
        return ProviderConfig.from_dict(role, self.providers.get(role, {}))

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def load(cls, path: str | Path | None = None, env: Mapping[str, str] | None = None,
             overrides: Mapping[str, Any] | None = None) -> "EngineConfig":
        """Layer built-in defaults, a JSON config file, environment and overrides."""
        values: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
            values.update(cls._checked(data, f"config file {path}"))
        env = os.environ if env is None else env
        names = cls.field_names()
        for name in names:
            key = ENV_PREFIX + name.upper()
            if key in env:
                values[name] = coerce(name, env[key])
        if overrides:
            values.update(cls._checked(overrides, "overrides"))
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def _checked(cls, data: Mapping[str, Any], source: str) -> dict[str, Any]:
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"unknown keys in {source}: {', '.join(sorted(unknown))}")
        return dict(data)


def coerce(name: str, raw: str) -> Any:
    """Interpret a string value (env var or ``--set``) by the field's default type."""
    default = getattr(EngineConfig(), name, None) if name in EngineConfig.field_names() else None
    if name not in EngineConfig.field_names():
        raise ConfigError(f"unknown config key {name!r}")
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name} expects a number, got {raw!r}") from None
    if isinstance(default, dict):
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            raise ConfigError(f"{name} expects a JSON object") from None
        if not isinstance(value, dict):
            raise ConfigError(f"{name} expects a JSON object")
        return value
    return raw
