"""Deterministic seeded stand-in for a pretrained video grounder.

Grounding predictions interpolate between the ground truth (skill 1) and a
uniformly placed interval (skill 0)::

    center = gt_center + N(0, (1 - skill) * center_noise_scale)
    width  = gt_width * exp(N(0, (1 - skill) * width_noise_scale))

Boundary-reflection answers report how much planted (unannotated) event
footage is visible in the clip, optionally corrupted by misses,
hallucinations and multiplicative noise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .._rng import substream
from ..intervals import IntervalSet, TimeInterval
from .types import OracleError, OracleMode, OracleRequest


@dataclass(frozen=True)
class SimulatedGrounderConfig:
    skill: float = 0.5
    center_noise_scale: float = 20.0
    width_noise_scale: float = 0.5
    seed: int = 0
    miss_rate: float = 0.0
    hallucination_rate: float = 0.0
    hallucination_scale: float = 0.5
    br_noise_scale: float = 0.0
    garble_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.skill <= 1.0:
            raise ValueError(f"skill must lie in [0, 1], got {self.skill}")
        for name in ("miss_rate", "hallucination_rate", "garble_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class SimTruth:
    """Hidden facts about one synthetic sample that only the simulator sees."""

    gt: IntervalSet
    planted: IntervalSet = field(default_factory=IntervalSet)
    skill: Optional[float] = None

    def to_record(self) -> dict:
        return {"gt": self.gt.to_list(), "planted": self.planted.to_list(), "skill": self.skill}

    @classmethod
    def from_record(cls, rec: Mapping) -> "SimTruth":
        return cls(IntervalSet(rec["gt"]), IntervalSet(rec.get("planted", [])), rec.get("skill"))


def simulate_prediction(
    target: TimeInterval,
    bounds: TimeInterval,
    skill: float,
    center_noise_scale: float,
    width_noise_scale: float,
    rng: np.random.Generator,
) -> TimeInterval:
    """Draw one grounding prediction for ``target`` inside ``bounds``."""
    span = bounds.duration
    if skill >= 1.0:
        lo, hi = max(target.start, bounds.start), min(target.end, bounds.end)
        if lo > hi:
            edge = bounds.start if target.end < bounds.start else bounds.end
            return TimeInterval(edge, edge)
        return TimeInterval(lo, hi)
    if skill <= 0.0:
        width = min(span, target.duration * math.exp(rng.normal(0.0, width_noise_scale)))
        start = bounds.start + rng.uniform(0.0, span - width)
        return TimeInterval(start, start + width)
    noise = 1.0 - skill
    center = (target.start + target.end) / 2 + rng.normal(0.0, noise * center_noise_scale)
    width = target.duration * math.exp(rng.normal(0.0, noise * width_noise_scale))
    center = min(max(center, bounds.start), bounds.end)
    half = min(width, span) / 2
    return TimeInterval(max(bounds.start, center - half), min(bounds.end, center + half))


class SimulatedGrounder:
    """Backend that answers requests from a table of :class:`SimTruth`."""

    simulated_latency_ms = 0.0

    def __init__(self, config: SimulatedGrounderConfig, world: Mapping[str, SimTruth]) -> None:
        self.config = config
        self.world = dict(world)
        digest = hashlib.sha256(
            json.dumps(
                [asdict(config), sorted((k, v.to_record()) for k, v in self.world.items())],
                sort_keys=True,
            ).encode()
        ).hexdigest()[:12]
        self.backend_id = f"sim-{digest}"

    @classmethod
    def from_samples(cls, samples, config: SimulatedGrounderConfig | None = None) -> "SimulatedGrounder":
        return cls(config or SimulatedGrounderConfig(), {s.id: SimTruth(s.gt) for s in samples})

    def skill_for(self, sample_id: str) -> float:
        truth = self.world[sample_id]
        return self.config.skill if truth.skill is None else truth.skill

    def generate(self, request: OracleRequest) -> list[str]:
        truth = self.world.get(request.sample_id)
        if truth is None:
            raise OracleError(f"simulator has no ground truth for sample {request.sample_id!r}")
        cfg = self.config
        bounds = request.clip.subclips.hull()
        clip_key = json.dumps(request.clip.subclips.to_list())
        texts = []
        for i in range(request.n_outputs):
            # one substream per output index so a longer request extends a shorter one
            rng = substream(cfg.seed, request.sample_id, request.mode.value, clip_key, i)
            if cfg.garble_rate and rng.uniform() < cfg.garble_rate:
                texts.append("I am not able to tell from this video.")
                continue
            if request.mode is OracleMode.BOUNDARY_REFLECTION:
                texts.append(self._reflect(truth, request.clip.subclips, rng))
            else:
                pred = simulate_prediction(
                    truth.gt.hull(), bounds, self.skill_for(request.sample_id),
                    cfg.center_noise_scale, cfg.width_noise_scale, rng,
                )
                texts.append(f"<think>simulated</think><answer>{pred.start:.3f} to {pred.end:.3f}</answer>")
        return texts

    def _reflect(self, truth: SimTruth, visible: IntervalSet, rng: np.random.Generator) -> str:
        cfg = self.config
        extra = truth.planted.intersection_measure(visible)
        u_miss, u_hall, u_scale = rng.uniform(size=3)
        if extra > 0 and u_miss < cfg.miss_rate:
            extra = 0.0
        elif extra == 0 and u_hall < cfg.hallucination_rate:
            extra = cfg.hallucination_scale * truth.gt.total_duration() * (0.2 + 0.8 * u_scale)
        if extra > 0 and cfg.br_noise_scale > 0:
            extra *= math.exp(rng.normal(0.0, cfg.br_noise_scale))
        return f"relevant duration: {extra:.3f} seconds"
