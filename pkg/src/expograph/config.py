"""Experiment configuration: nested YAML, strictly validated, defaults filled."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .losses import LossConfig
from .topology import ER_MODES, KINDS


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ExperimentSection:
    name: str = "expograph"
    seed: int = 0


@dataclass
class TopologySection:
    kind: str = "one_peer_exponential"
    n: int = 8
    k: int = 1
    seed: int = 0
    er_mode: str = "per_step"
    position_seed: int = 0


@dataclass
class RuntimeSection:
    horizon: typing.Optional[int] = None  # default ceil(log2 n) + 1
    aggregator: str = "union"
    message_dim: int = 8


@dataclass
class LossesSection:
    alpha: float = 0.1
    tau: float = 0.07
    m_negatives: int = 20
    gamma: float = 0.99


@dataclass
class TrainingSection:
    episodes: int = 20000
    lr: float = 0.05
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal: int = 10000
    target_interval: int = 200
    eval_episodes: int = 100
    checkpoints: int = 10
    buckets: int = 8
    features: str = "fraction"
    shared: bool = True
    runs: int = 1


@dataclass
class DisseminationSection:
    n: int = 256
    budgets: typing.Optional[typing.List[int]] = None  # default [ceil(log2 n), 1]
    families: typing.List[str] = field(default_factory=lambda: ["distance", "er", "exponential"])
    seeds: int = 20
    sources: typing.Optional[int] = None  # None: every agent
    max_t: typing.Optional[int] = None
    frames: bool = False


@dataclass
class GossipSection:
    steps: typing.Optional[int] = None  # default ceil(log2 n)
    seeds: int = 5


@dataclass
class EvaluateSection:
    policy: str = "scripted"
    policy_path: typing.Optional[str] = None
    episodes: int = 500


@dataclass
class TransferSection:
    to_n: typing.List[int] = field(default_factory=lambda: [32, 64])
    policies: typing.List[str] = field(default_factory=lambda: ["scripted", "tabular"])
    episodes: int = 200


@dataclass
class OutputSection:
    directory: str = "out"
    formats: typing.List[str] = field(default_factory=lambda: ["csv", "dot", "adjlist", "jsonl"])


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    topology: TopologySection = field(default_factory=TopologySection)
    runtime: RuntimeSection = field(default_factory=RuntimeSection)
    losses: LossesSection = field(default_factory=LossesSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    dissemination: DisseminationSection = field(default_factory=DisseminationSection)
    gossip: GossipSection = field(default_factory=GossipSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    transfer: TransferSection = field(default_factory=TransferSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def loss_config(self) -> LossConfig:
        return LossConfig(**dataclasses.asdict(self.losses))


def _coerce(value: Any, tp, key: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], key)
    if origin in (list, typing.List):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {type(value).__name__}")
        (inner,) = typing.get_args(tp)
        return [_coerce(v, inner, f"{key}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    raise ConfigError(key, f"unsupported field type {tp}")


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}", "unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        tp = hints[f.name]
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name], key + ".")
        else:
            kwargs[f.name] = _coerce(data[f.name], tp, key)
    return cls(**kwargs)


def _check(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    t = cfg.topology
    _check(t.kind in KINDS, "topology.kind", f"must be one of {list(KINDS)}")
    _check(t.n >= 1, "topology.n", "must be >= 1")
    _check(0 <= t.k <= t.n - 1, "topology.k", f"must satisfy 0 <= k <= n-1 (n={t.n})")
    _check(t.er_mode in ER_MODES, "topology.er_mode", f"must be one of {list(ER_MODES)}")
    r = cfg.runtime
    _check(r.horizon is None or r.horizon >= 1, "runtime.horizon", "must be >= 1")
    _check(r.aggregator in ("union", "recurrent", "attention"), "runtime.aggregator", "must be union, recurrent or attention")
    _check(r.message_dim >= 1, "runtime.message_dim", "must be >= 1")
    lo = cfg.losses
    _check(lo.alpha >= 0, "losses.alpha", "must be >= 0")
    _check(lo.tau > 0, "losses.tau", "must be > 0")
    _check(lo.m_negatives >= 1, "losses.m_negatives", "must be >= 1")
    _check(0 < lo.gamma <= 1, "losses.gamma", "must lie in (0, 1]")
    tr = cfg.training
    _check(tr.episodes >= 0, "training.episodes", "must be >= 0")
    _check(tr.lr >= 0, "training.lr", "must be >= 0")
    for key in ("eps_start", "eps_end"):
        _check(0 <= getattr(tr, key) <= 1, f"training.{key}", "must lie in [0, 1]")
    _check(tr.eps_anneal >= 0, "training.eps_anneal", "must be >= 0")
    _check(tr.target_interval >= 1, "training.target_interval", "must be >= 1")
    _check(tr.eval_episodes >= 1, "training.eval_episodes", "must be >= 1")
    _check(tr.checkpoints >= 1, "training.checkpoints", "must be >= 1")
    _check(tr.buckets >= 2, "training.buckets", "must be >= 2")
    _check(tr.features in ("fraction", "count"), "training.features", "must be fraction or count")
    _check(tr.runs >= 1, "training.runs", "must be >= 1")
    d = cfg.dissemination
    _check(d.n >= 2, "dissemination.n", "must be >= 2")
    for i, k in enumerate(d.budgets or []):
        _check(1 <= k <= d.n - 1, f"dissemination.budgets[{i}]", f"must lie in [1, {d.n - 1}]")
    for i, fam in enumerate(d.families):
        _check(fam in ("distance", "er", "exponential", "ring"), f"dissemination.families[{i}]", "unknown family")
    _check(d.seeds >= 1, "dissemination.seeds", "must be >= 1")
    _check(d.sources is None or d.sources >= 1, "dissemination.sources", "must be >= 1")
    _check(d.max_t is None or d.max_t >= 0, "dissemination.max_t", "must be >= 0")
    g = cfg.gossip
    _check(g.steps is None or g.steps >= 0, "gossip.steps", "must be >= 0")
    _check(g.seeds >= 1, "gossip.seeds", "must be >= 1")
    e = cfg.evaluate
    _check(e.policy in ("scripted", "tabular", "own_bit", "random"), "evaluate.policy", "unknown policy")
    _check(e.policy != "tabular" or e.policy_path is not None, "evaluate.policy_path", "required for tabular policy")
    _check(e.episodes >= 1, "evaluate.episodes", "must be >= 1")
    x = cfg.transfer
    for i, m in enumerate(x.to_n):
        _check(m >= 1, f"transfer.to_n[{i}]", "must be >= 1")
    for i, p in enumerate(x.policies):
        _check(p in ("scripted", "tabular"), f"transfer.policies[{i}]", "must be scripted or tabular")
    _check(x.episodes >= 1, "transfer.episodes", "must be >= 1")
    for i, fmt in enumerate(cfg.output.formats):
        _check(fmt in ("csv", "dot", "adjlist", "jsonl"), f"output.formats[{i}]", "unknown format")
    return cfg


def _set_path(data: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot set a key below a scalar")
    node[parts[-1]] = value


def parse_overrides(pairs) -> list[tuple[str, Any]]:
    out = []
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(pair, "override must look like key=value")
        out.append((key.strip(), yaml.safe_load(raw)))
    return out


def parse_config(source: str | Path | dict | None = None, overrides=()) -> ExperimentConfig:
    """Load a YAML file (or a mapping), apply ``key=value`` overrides, validate.

    ``None`` or an empty file yields all defaults.
    """
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        data = yaml.safe_load(Path(source).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config document must be a mapping")
    for key, value in overrides:
        _set_path(data, key, value)
    return validate(_build(ExperimentConfig, data, ""))


def derive_seed(base: int, module: str, index: int = 0) -> int:
    """Stable 63-bit seed from ``(base, module, index)``."""
    digest = hashlib.sha256(f"{base}:{module}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
