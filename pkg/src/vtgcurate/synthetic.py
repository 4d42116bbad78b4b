"""Planted synthetic corpora for desk-scale checks.

Each sample gets a ground-truth annotation, optionally a planted second
occurrence of the same event outside the annotation (a partially annotated
sample), and a grounder skill level. Only the simulator sees the planted facts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Sample, read_jsonl, write_jsonl
from .intervals import IntervalSet, TimeInterval, VideoTimeline, complement
from .oracle import SimTruth

DEFAULT_SKILLS = (0.0, 0.2, 0.6, 0.95)
# skews the mix towards weak skills so that roughly 30% of samples land in the
# hard (zero + low) groups, as in real grounding corpora
CORPUS_SKILL_WEIGHTS = (0.35, 0.25, 0.2, 0.2)
DATASETS = ("charades_syn", "anet_syn", "qvhl_syn", "didemo_syn")
_ACTORS = ("a person", "the man", "a woman", "the child", "someone")
_ACTIONS = (
    "opens the door", "pours a drink", "picks up a phone", "sits on the sofa", "washes the dishes",
    "takes off a jacket", "turns on the light", "reads a book", "throws the ball", "closes the laptop",
)


@dataclass(frozen=True)
class SyntheticCorpus:
    samples: list[Sample]
    world: dict[str, SimTruth]
    pas_labels: dict[str, bool]

    def manifest_records(self) -> list[dict]:
        return [s.to_record() for s in self.samples]

    def write(self, manifest_path: str | Path, world_path: str | Path) -> None:
        write_jsonl(manifest_path, self.manifest_records())
        write_jsonl(
            world_path,
            [{"id": sid, **t.to_record(), "is_pas": self.pas_labels[sid]} for sid, t in sorted(self.world.items())],
        )


def load_world(path: str | Path) -> tuple[dict[str, SimTruth], dict[str, bool]]:
    world, labels = {}, {}
    for rec in read_jsonl(path):
        world[rec["id"]] = SimTruth.from_record(rec)
        labels[rec["id"]] = bool(rec.get("is_pas", False))
    return world, labels


def _r(x: float) -> float:
    # millisecond timestamps, like real annotation files
    return round(x, 3)


def make_corpus(
    n: int,
    seed: int = 0,
    pas_rate: float = 0.4,
    skills: Sequence[float] = DEFAULT_SKILLS,
    skill_weights: Sequence[float] | None = None,
    duration_range: tuple[float, float] = (30.0, 180.0),
    gt_fraction_range: tuple[float, float] = (0.02, 0.3),
    multi_segment_rate: float = 0.1,
) -> SyntheticCorpus:
    """Generate ``n`` samples with ``pas_rate`` planted partial annotations.

    GT length is log-uniform as a fraction of video length, so the corpus mixes
    short moments in long videos with long moments in short ones.
    """
    rng = np.random.default_rng(seed)
    weights = None if skill_weights is None else np.asarray(skill_weights, float) / np.sum(skill_weights)
    samples, world, labels = [], {}, {}
    width = len(str(n - 1))
    for i in range(n):
        sid = f"syn{i:0{width}d}"
        duration = _r(rng.uniform(*duration_range))
        timeline = VideoTimeline(duration)
        frac = math.exp(rng.uniform(math.log(gt_fraction_range[0]), math.log(gt_fraction_range[1])))
        gw = max(0.5, frac * duration)
        start = _r(rng.uniform(0.0, duration - gw))
        segments = [TimeInterval(start, min(duration, _r(start + gw)))]
        if rng.uniform() < multi_segment_rate:
            gap = rng.uniform(1.0, 5.0)
            w2 = gw * rng.uniform(0.3, 1.0)
            s2 = start + gw + gap
            if s2 + w2 < duration:
                segments.append(TimeInterval(_r(s2), _r(s2 + w2)))
        gt = IntervalSet(segments)

        planted = IntervalSet()
        is_pas = bool(rng.uniform() < pas_rate)
        if is_pas:
            extra_len = gt.total_duration() * rng.uniform(0.3, 1.0)
            room = [iv for iv in complement(gt, timeline) if iv.duration >= extra_len + 0.5]
            if room:
                host = room[int(rng.integers(len(room)))]
                s = _r(rng.uniform(host.start + 0.25, host.end - extra_len - 0.25))
                planted = IntervalSet([TimeInterval(s, _r(s + extra_len))])
            else:
                is_pas = False

        skill = float(rng.choice(np.asarray(skills, float), p=weights))
        query = f"{_ACTORS[int(rng.integers(len(_ACTORS)))]} {_ACTIONS[int(rng.integers(len(_ACTIONS)))]}"
        tag = DATASETS[int(rng.integers(len(DATASETS)))]
        sample = Sample(sid, f"synthetic://{sid}.mp4", timeline, query, gt, tag)
        samples.append(sample)
        world[sid] = SimTruth(gt, planted, skill)
        labels[sid] = is_pas
    return SyntheticCorpus(samples, world, labels)
