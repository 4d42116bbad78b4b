"""Step-indexed masking curriculum for hard-to-ground samples.

Hard samples see a shortened window of the video that always contains the
ground truth. The fraction of outside footage that is cut away decays
linearly from ``m0`` to zero over the first ``w * T`` steps; easy samples
always see the full video.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import substream
from .data import Sample
from .difficulty import DifficultyRecord, Partition
from .intervals import IntervalSet, TimeInterval, complement
from .validation import check_is_fitted, check_samples, check_threshold

# window starts are snapped to this grid so that shifting GT into window
# coordinates and back is exact in floating point
START_GRID = 2.0**-10


@dataclass(frozen=True)
class ScheduleConfig:
    m0: float = 0.5
    w: float = 0.5
    T: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        check_threshold(self.m0, "m0")
        if not 0.0 < self.w <= 1.0:
            raise ValueError(f"warmup ratio w must lie in (0, 1], got {self.w}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")

    @property
    def warmup_steps(self) -> float:
        return self.w * self.T


def mask_ratio(t: float, cfg: ScheduleConfig) -> float:
    """Linear decay ``m0 * (1 - t / (w T))`` on ``[0, w T]``, zero afterwards."""
    if t < 0 or t > cfg.T:
        raise ValueError(f"step {t} outside [0, {cfg.T}]")
    warm = cfg.warmup_steps
    if t <= warm:
        return cfg.m0 * (1.0 - t / warm)
    return 0.0


def maskable(sample: Sample) -> IntervalSet:
    """Footage outside the GT hull; gaps between GT segments are never masked."""
    return complement(IntervalSet([sample.gt.hull()]), sample.timeline)


def window_length(sample: Sample, m: float) -> float:
    return sample.duration - m * maskable(sample).total_duration()


def feasible_starts(sample: Sample, m: float) -> tuple[float, float]:
    """Closed range of window starts that keep the whole GT hull inside."""
    L = window_length(sample, m)
    hull = sample.gt.hull()
    return max(0.0, hull.end - L), min(hull.start, sample.duration - L)


def select_window(sample: Sample, m: float, rng: np.random.Generator) -> tuple[TimeInterval, str]:
    """Draw the unmasked window for ``sample`` at mask ratio ``m``.

    Returns ``(window, note)``; ``note`` is non-empty when masking was a no-op.
    """
    check_threshold(m, "mask ratio")
    if m == 0.0:
        return sample.timeline.full, ""
    outside = maskable(sample).total_duration()
    if outside <= 0.0:
        return sample.timeline.full, "ground truth spans the whole video; nothing to mask"
    L = sample.duration - m * outside
    lo, hi = feasible_starts(sample, m)
    hull = sample.gt.hull()
    g_lo, g_hi = math.ceil(lo / START_GRID), math.floor(hi / START_GRID)
    if g_lo <= g_hi:
        start = START_GRID * int(rng.integers(g_lo, g_hi + 1))
    else:
        rng.integers(0, 1)  # keep the stream position independent of the branch
        start = hull.start if lo <= hull.start <= hi else lo
    # absorb last-ulp rounding so containment holds exactly; when L rounds
    # below the hull length the feasible range is empty and lo > hull.start
    start = max(0.0, min(start, hull.start))
    end = min(max(start + L, hull.end), sample.duration)
    return TimeInterval(start, end), ""


@dataclass(frozen=True)
class CurriculumItem:
    sample_id: str
    step: int
    mask_ratio_used: float
    window: TimeInterval
    remapped_gt: IntervalSet
    is_hard: bool
    note: str = ""

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "step": self.step,
            "mask_ratio_used": self.mask_ratio_used,
            "window": self.window.to_list(),
            "remapped_gt": self.remapped_gt.to_list(),
            "is_hard": self.is_hard,
            "note": self.note,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "CurriculumItem":
        return cls(
            sample_id=rec["sample_id"],
            step=int(rec["step"]),
            mask_ratio_used=float(rec["mask_ratio_used"]),
            window=TimeInterval(*rec["window"]),
            remapped_gt=IntervalSet(rec["remapped_gt"]),
            is_hard=bool(rec["is_hard"]),
            note=rec.get("note", ""),
        )


def make_item(sample: Sample, step: int, is_hard: bool, cfg: ScheduleConfig, enabled: bool = True) -> CurriculumItem:
    m = mask_ratio(step, cfg) if (is_hard and enabled) else 0.0
    rng = substream(cfg.seed, "window", sample.id, step)
    window, note = select_window(sample, m, rng)
    return CurriculumItem(sample.id, step, m, window, sample.gt.shift(-window.start), is_hard, note)


DifficultyLike = Union[Partition, Mapping[str, bool], Iterable[DifficultyRecord]]


def hard_lookup(difficulty: DifficultyLike) -> dict[str, bool]:
    if isinstance(difficulty, Partition):
        out = {sid: True for sid in difficulty.hard}
        out.update({sid: False for sid in difficulty.easy})
        return out
    if isinstance(difficulty, Mapping):
        return {k: bool(v) for k, v in difficulty.items()}
    return {r.sample_id: r.is_hard for r in difficulty}


def emit_curriculum(
    samples: Sequence[Sample] | Mapping[str, Sample],
    difficulty: DifficultyLike,
    cfg: ScheduleConfig,
    steps: Iterable[tuple[int, Sequence[str]]],
) -> Iterator[CurriculumItem]:
    """Yield one item per (step, sample id) in ``steps``; windows are seeded per (seed, id, step)."""
    by_id = samples if isinstance(samples, Mapping) else {s.id: s for s in samples}
    hard = hard_lookup(difficulty)
    for t, batch in steps:
        for sid in batch:
            if sid not in by_id:
                raise KeyError(f"unknown sample id {sid!r} at step {t}")
            if sid not in hard:
                raise KeyError(f"sample {sid!r} has no difficulty record")
            yield make_item(by_id[sid], int(t), hard[sid], cfg)


def uniform_batches(sample_ids: Sequence[str], T: int, batch_size: int, seed: int) -> Iterator[tuple[int, list[str]]]:
    """Batches drawn uniformly with replacement across steps, without replacement within a step."""
    ids = sorted(sample_ids)
    size = min(batch_size, len(ids))
    for t in range(T):
        rng = substream(seed, "batch", t)
        yield t, [ids[i] for i in rng.choice(len(ids), size=size, replace=False)]


class CurriculumScheduler(BaseEstimator):
    """Estimator form of the masking curriculum.

    ``fit(samples, is_hard)`` records the difficulty split; ``transform(ids, step=t)``
    returns the :class:`CurriculumItem` for each id at step ``t``.
    """

    def __init__(self, m0: float = 0.5, w: float = 0.5, total_steps: int = 1000, seed: int = 0):
        self.m0 = m0
        self.w = w
        self.total_steps = total_steps
        self.seed = seed

    def fit(self, X, y):
        samples = check_samples(X)
        flags = list(y)
        if len(flags) != len(samples):
            raise ValueError("y must hold one hard flag per sample")
        self.config_ = ScheduleConfig(self.m0, self.w, self.total_steps, self.seed)
        self.samples_ = {s.id: s for s in samples}
        self.is_hard_ = {s.id: bool(f) for s, f in zip(samples, flags)}
        return self

    def mask_ratio(self, t: float) -> float:
        check_is_fitted(self, "config_")
        return mask_ratio(t, self.config_)

    def transform(self, ids: Sequence[str], step: int = 0) -> list[CurriculumItem]:
        check_is_fitted(self, "config_")
        return list(emit_curriculum(self.samples_, self.is_hard_, self.config_, [(step, ids)]))
