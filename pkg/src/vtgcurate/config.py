"""Run configuration: one declarative file, overridable field by field."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml


@dataclass(frozen=True)
class OracleSpec:
    backend: str = "simulator"  # "simulator" | "remote"
    # simulator
    world_path: Optional[str] = None
    center_noise_scale: float = 20.0
    width_noise_scale: float = 0.5
    default_skill: float = 0.5
    miss_rate: float = 0.0
    hallucination_rate: float = 0.0
    br_noise_scale: float = 0.0
    garble_rate: float = 0.0
    # remote
    base_url: Optional[str] = None
    model: Optional[str] = None
    token_env: str = "VTGCURATE_API_TOKEN"
    temperature: float = 1.0
    timeout_s: float = 120.0
    # shared
    max_workers: int = 4
    max_retries: int = 3
    backoff_s: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    tau: float = 0.0
    beta: float = 0.3
    m0: float = 0.5
    w: float = 0.5
    k: int = 8
    T: int = 200
    target_size: Optional[int] = None
    batch_size: int = 32
    learning_rate: float = 0.5
    fps: float = 2.0
    max_frames: int = 384
    histogram_edges: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0, 2.0, float("inf"))
    metric_thresholds: tuple[float, ...] = (0.3, 0.5, 0.7)
    pas_labels_path: Optional[str] = None
    boundary_template: str = "boundary_reflection_v1"
    grounding_template: str = "grounding_v1"
    seeds: dict[str, int] = field(default_factory=lambda: {"oracle": 0, "curate": 0, "schedule": 0, "simulate": 0})
    oracle: OracleSpec = field(default_factory=OracleSpec)

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 <= self.m0 <= 1.0:
            raise ValueError("m0 must lie in [0, 1]")
        if not 0.0 < self.w <= 1.0:
            raise ValueError("w must lie in (0, 1]")
        if self.k < 1 or self.T < 1 or self.batch_size < 1:
            raise ValueError("k, T and batch_size must be positive")

    def seed(self, stage: str) -> int:
        return int(self.seeds.get(stage, 0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram_edges"] = [_enc_float(x) for x in self.histogram_edges]
        d["metric_thresholds"] = list(self.metric_thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        oracle = OracleSpec(**d.pop("oracle", {}) or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "histogram_edges" in d:
            d["histogram_edges"] = tuple(_dec_float(x) for x in d["histogram_edges"])
        if "metric_thresholds" in d:
            d["metric_thresholds"] = tuple(float(x) for x in d["metric_thresholds"])
        if "seeds" in d:
            d["seeds"] = {**cls().seeds, **{k: int(v) for k, v in d["seeds"].items()}}
        return cls(oracle=oracle, **d)

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Apply ``{"tau": 0.1, "oracle.backend": "remote", "seeds.curate": 3}`` style overrides."""
        d = self.to_dict()
        for key, value in overrides.items():
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                if p not in node or not isinstance(node[p], dict):
                    raise ValueError(f"unknown config key {key!r}")
                node = node[p]
            if leaf not in node and not (parents and parents[0] == "seeds"):
                raise ValueError(f"unknown config key {key!r}")
            node[leaf] = value
        return RunConfig.from_dict(d)


def _enc_float(x: float):
    return "inf" if x == float("inf") else x


def _dec_float(x) -> float:
    return float("inf") if x in ("inf", "Infinity", ".inf") else float(x)


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
        cfg = RunConfig.from_dict(data)
        world = cfg.oracle.world_path
        if world and not Path(world).is_absolute():
            # relative paths in a config file resolve against the file's directory
            cfg = replace(cfg, oracle=replace(cfg.oracle, world_path=str((Path(path).parent / world).resolve())))
        labels = cfg.pas_labels_path
        if labels and not Path(labels).is_absolute():
            cfg = replace(cfg, pas_labels_path=str((Path(path).parent / labels).resolve()))
    return cfg.with_overrides(overrides) if overrides else cfg


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)
