"""Closed time intervals and canonical interval sets on a video timeline.

All times are real-valued seconds. An :class:`IntervalSet` is always kept in
canonical form: sorted by start, pairwise disjoint, touching members merged and
zero-length members dropped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union


class IntervalError(ValueError):
    """Raised for malformed intervals or intervals that fall off the timeline."""


class DegenerateInputWarning(UserWarning):
    """Emitted when a metric is evaluated on inputs where it is undefined."""


@dataclass(frozen=True, order=True)
class TimeInterval:
    start: float
    end: float

    def __post_init__(self) -> None:
        if not self.start <= self.end:
            raise IntervalError(f"interval start {self.start} > end {self.end}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def contains(self, other: "TimeInterval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def shift(self, offset: float) -> "TimeInterval":
        return TimeInterval(self.start + offset, self.end + offset)

    def to_list(self) -> list[float]:
        return [self.start, self.end]


IntervalLike = Union[TimeInterval, Sequence[float]]


def _as_interval(item: IntervalLike) -> TimeInterval:
    if isinstance(item, TimeInterval):
        return item
    if len(item) != 2:
        raise IntervalError(f"expected a [start, end] pair, got {item!r}")
    return TimeInterval(float(item[0]), float(item[1]))


def _merge(intervals: Iterable[TimeInterval]) -> tuple[TimeInterval, ...]:
    ordered = sorted(iv for iv in intervals if iv.end > iv.start)
    merged: list[list[float]] = []
    for iv in ordered:
        # touching members merge: a zero-measure gap is annotation noise
        if merged and iv.start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], iv.end)
        else:
            merged.append([iv.start, iv.end])
    return tuple(TimeInterval(s, e) for s, e in merged)


class IntervalSet:
    """Immutable canonical set of disjoint closed intervals."""

    __slots__ = ("_intervals",)

    def __init__(self, intervals: Iterable[IntervalLike] = ()) -> None:
        self._intervals = _merge(_as_interval(iv) for iv in intervals)

    @classmethod
    def _from_canonical(cls, intervals: Iterable[TimeInterval]) -> "IntervalSet":
        obj = cls.__new__(cls)
        obj._intervals = tuple(intervals)
        return obj

    @property
    def intervals(self) -> tuple[TimeInterval, ...]:
        return self._intervals

    def __iter__(self) -> Iterator[TimeInterval]:
        return iter(self._intervals)

    def __len__(self) -> int:
        return len(self._intervals)

    def __bool__(self) -> bool:
        return bool(self._intervals)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._intervals == other._intervals

    def __hash__(self) -> int:
        return hash(self._intervals)

    def __repr__(self) -> str:
        body = ", ".join(f"[{iv.start:g}, {iv.end:g}]" for iv in self._intervals)
        return f"IntervalSet({{{body}}})"

    def total_duration(self) -> float:
        return sum(iv.duration for iv in self._intervals)

    @property
    def start(self) -> float:
        if not self._intervals:
            raise IntervalError("empty interval set has no start")
        return self._intervals[0].start

    @property
    def end(self) -> float:
        if not self._intervals:
            raise IntervalError("empty interval set has no end")
        return self._intervals[-1].end

    def hull(self) -> TimeInterval:
        return TimeInterval(self.start, self.end)

    def shift(self, offset: float) -> "IntervalSet":
        return IntervalSet._from_canonical(iv.shift(offset) for iv in self._intervals)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self._intervals + other._intervals)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out: list[TimeInterval] = []
        a, b = self._intervals, other._intervals
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i].start, b[j].start)
            hi = min(a[i].end, b[j].end)
            if hi > lo:
                out.append(TimeInterval(lo, hi))
            if a[i].end < b[j].end:
                i += 1
            else:
                j += 1
        return IntervalSet._from_canonical(out)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        out: list[TimeInterval] = []
        for iv in self._intervals:
            cursor = iv.start
            for cut in other._intervals:
                if cut.end <= cursor:
                    continue
                if cut.start >= iv.end:
                    break
                if cut.start > cursor:
                    out.append(TimeInterval(cursor, cut.start))
                cursor = max(cursor, cut.end)
            if cursor < iv.end:
                out.append(TimeInterval(cursor, iv.end))
        return IntervalSet._from_canonical(out)

    def intersection_measure(self, other: "IntervalSet") -> float:
        return self.intersection(other).total_duration()

    def issubset(self, other: "IntervalSet") -> bool:
        return all(any(o.contains(iv) for o in other._intervals) for iv in self._intervals)

    def to_list(self) -> list[list[float]]:
        return [iv.to_list() for iv in self._intervals]


@dataclass(frozen=True)
class VideoTimeline:
    duration: float

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise IntervalError(f"timeline duration must be positive, got {self.duration}")

    @property
    def full(self) -> TimeInterval:
        return TimeInterval(0.0, self.duration)

    def as_set(self) -> IntervalSet:
        return IntervalSet([self.full])


def normalize(
    intervals: Iterable[IntervalLike],
    timeline: VideoTimeline,
    sample_id: str | None = None,
) -> IntervalSet:
    """Clip ``intervals`` to ``[0, timeline.duration]`` and return the canonical set.

    An interval lying entirely outside the timeline (including one that only
    touches it at an endpoint) is rejected rather than silently dropped.
    """
    where = f" in sample {sample_id!r}" if sample_id is not None else ""
    clipped: list[TimeInterval] = []
    for item in intervals:
        try:
            iv = _as_interval(item)
        except IntervalError as exc:
            raise IntervalError(f"{exc}{where}") from None
        if iv.end <= 0.0 or iv.start >= timeline.duration:
            raise IntervalError(
                f"interval [{iv.start:g}, {iv.end:g}] lies outside [0, {timeline.duration:g}]{where}"
            )
        clipped.append(TimeInterval(max(iv.start, 0.0), min(iv.end, timeline.duration)))
    return IntervalSet(clipped)


def complement(interval_set: IntervalSet, timeline: VideoTimeline) -> IntervalSet:
    """Footage of ``timeline`` not covered by ``interval_set``."""
    return timeline.as_set().difference(interval_set)


def iou(a: IntervalSet, b: IntervalSet) -> float:
    """Measure of ``a & b`` over measure of ``a | b``.

    Two empty (or zero-measure) sets give 0.0 and a :class:`DegenerateInputWarning`.
    """
    inter = a.intersection_measure(b)
    union = a.total_duration() + b.total_duration() - inter
    if union <= 0.0:
        warnings.warn("iou of two empty interval sets is undefined; returning 0", DegenerateInputWarning, stacklevel=2)
        return 0.0
    return min(1.0, max(0.0, inter / union))


def iop(pred: IntervalSet, gt: IntervalSet) -> float:
    """Fraction of the prediction covered by ground truth."""
    denom = pred.total_duration()
    if denom <= 0.0:
        raise IntervalError("iop is undefined for an empty prediction")
    return min(1.0, pred.intersection_measure(gt) / denom)


def interval_iou(a: TimeInterval, b: TimeInterval) -> float:
    """Closed-form IoU of two single intervals."""
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.duration + b.duration - inter
    if union <= 0.0:
        warnings.warn("iou of two zero-length intervals is undefined; returning 0", DegenerateInputWarning, stacklevel=2)
        return 0.0
    return inter / union
