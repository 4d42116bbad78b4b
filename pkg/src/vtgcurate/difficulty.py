"""Zero-shot difficulty estimation.

Each sample is grounded ``k`` times by the oracle; the best IoU against the
ground truth (``iou_max_zs``) is the difficulty score. Samples with
``iou_max_zs <= beta`` are hard.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .data import Sample
from .intervals import IntervalSet, TimeInterval, iou
from .oracle import ClipSpec, GrounderOracle, OracleMode, OracleRequest, OracleResponse, SamplingHint, build_grounding_prompt
from .oracle.prompts import GROUNDING_TEMPLATE
from .validation import check_is_fitted, check_positive_int, check_samples, check_threshold

logger = logging.getLogger(__name__)

GROUPS = ("zero", "low", "mid", "high")
GROUP_EDGES = (0.3, 0.7)


def difficulty_group(iou_max: float) -> str:
    if iou_max <= 0.0:
        return "zero"
    if iou_max <= GROUP_EDGES[0]:
        return "low"
    if iou_max <= GROUP_EDGES[1]:
        return "mid"
    return "high"


@dataclass(frozen=True)
class DifficultyRecord:
    sample_id: str
    predictions: tuple[Optional[TimeInterval], ...]
    ious: tuple[float, ...]
    iou_max_zs: float
    is_hard: bool
    group: str
    usable: bool = True
    backend_id: str = ""
    dataset_tag: str = ""

    @property
    def k(self) -> int:
        return len(self.predictions)

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "predictions": [None if p is None else p.to_list() for p in self.predictions],
            "ious": list(self.ious),
            "iou_max_zs": self.iou_max_zs,
            "is_hard": self.is_hard,
            "group": self.group,
            "usable": self.usable,
            "backend_id": self.backend_id,
            "dataset_tag": self.dataset_tag,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "DifficultyRecord":
        return cls(
            sample_id=rec["sample_id"],
            predictions=tuple(None if p is None else TimeInterval(*p) for p in rec["predictions"]),
            ious=tuple(rec["ious"]),
            iou_max_zs=rec["iou_max_zs"],
            is_hard=rec["is_hard"],
            group=rec["group"],
            usable=rec.get("usable", True),
            backend_id=rec.get("backend_id", ""),
            dataset_tag=rec.get("dataset_tag", ""),
        )


def grounding_request(
    sample: Sample, k: int, hint: SamplingHint | None = None, template_id: str = GROUNDING_TEMPLATE
) -> OracleRequest:
    clip = ClipSpec(sample.video_uri, sample.timeline.as_set(), sample.timeline, hint or SamplingHint())
    prompt = build_grounding_prompt(sample, template_id=template_id)
    return OracleRequest(sample.id, clip, prompt, OracleMode.GROUNDING, k)


def score_predictions(
    sample: Sample,
    predictions: Sequence[Optional[TimeInterval]],
    beta: float,
    backend_id: str = "",
) -> DifficultyRecord:
    preds = tuple(predictions)
    ious = tuple(0.0 if p is None else iou(IntervalSet([p]), sample.gt) for p in preds)
    usable = any(p is not None for p in preds)
    best = max(ious) if ious else 0.0
    if not usable:
        logger.warning("sample %s: every zero-shot prediction failed to parse; treating as hard", sample.id)
    return DifficultyRecord(
        sample_id=sample.id,
        predictions=preds,
        ious=ious,
        iou_max_zs=best,
        is_hard=(best <= beta) or not usable,
        group=difficulty_group(best),
        usable=usable,
        backend_id=backend_id,
        dataset_tag=sample.dataset_tag,
    )


def _record_from_response(sample: Sample, response: OracleResponse, beta: float) -> DifficultyRecord:
    preds = [p if isinstance(p, TimeInterval) else None for p in response.parsed]
    return score_predictions(sample, preds, beta, response.backend_id)


def estimate(sample: Sample, oracle: GrounderOracle, k: int = 8, beta: float = 0.3) -> DifficultyRecord:
    return _record_from_response(sample, oracle.query(grounding_request(sample, k)), beta)


def hard_ids(records: Iterable[DifficultyRecord], beta: float) -> set[str]:
    return {r.sample_id for r in records if r.iou_max_zs <= beta or not r.usable}


@dataclass(frozen=True)
class Partition:
    hard: list[str]
    easy: list[str]
    group_proportions: dict[str, float] = field(default_factory=dict)
    group_counts: dict[str, int] = field(default_factory=dict)


def partition(records: Sequence[DifficultyRecord]) -> Partition:
    if not records:
        raise ValueError("partition needs at least one record")
    hard = sorted(r.sample_id for r in records if r.is_hard)
    easy = sorted(r.sample_id for r in records if not r.is_hard)
    counts = {g: 0 for g in GROUPS}
    for r in records:
        counts[r.group] += 1
    n = len(records)
    return Partition(hard, easy, {g: c / n for g, c in counts.items()}, counts)


class DifficultyEstimator(BaseEstimator):
    """Top-k zero-shot grounding difficulty as an estimator.

    ``fit`` stores ``records_``; ``transform`` returns ``iou_max_zs`` as an
    ``(n, 1)`` array; ``predict`` returns the hard flag.
    """

    def __init__(self, oracle: GrounderOracle | None = None, k: int = 8, beta: float = 0.3, fps: float = 2.0, max_frames: int = 384):
        self.oracle = oracle
        self.k = k
        self.beta = beta
        self.fps = fps
        self.max_frames = max_frames

    def _estimate_all(self, samples: list[Sample]) -> list[DifficultyRecord]:
        if self.oracle is None:
            raise ValueError("DifficultyEstimator needs an oracle")
        hint = SamplingHint(self.fps, self.max_frames)
        responses = self.oracle.query_many(grounding_request(s, self.k, hint) for s in samples)
        return [_record_from_response(s, r, self.beta) for s, r in zip(samples, responses)]

    def fit(self, X, y=None):
        check_positive_int(self.k, "k")
        check_threshold(self.beta, "beta")
        samples = check_samples(X)
        self.records_ = self._estimate_all(samples)
        self.record_index_ = {r.sample_id: r for r in self.records_}
        return self

    def _records_for(self, samples: list[Sample]) -> list[DifficultyRecord]:
        check_is_fitted(self, "records_")
        missing = [s for s in samples if s.id not in self.record_index_]
        extra = {r.sample_id: r for r in self._estimate_all(missing)} if missing else {}
        return [self.record_index_.get(s.id) or extra[s.id] for s in samples]

    def transform(self, X) -> np.ndarray:
        recs = self._records_for(check_samples(X))
        return np.array([[r.iou_max_zs] for r in recs], dtype=float)

    def predict(self, X) -> np.ndarray:
        return np.array([r.is_hard for r in self._records_for(check_samples(X))], dtype=bool)

    def partition(self) -> Partition:
        check_is_fitted(self, "records_")
        return partition(self.records_)
