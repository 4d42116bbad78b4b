"""Training samples and line-delimited record IO."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .intervals import IntervalError, IntervalSet, VideoTimeline, complement, normalize


@dataclass(frozen=True)
class Sample:
    """One (query, video, GT segments) grounding record."""

    id: str
    video_uri: str
    timeline: VideoTimeline
    query: str
    gt: IntervalSet
    dataset_tag: str = ""

    def __post_init__(self) -> None:
        if not self.gt or self.gt.total_duration() <= 0:
            raise IntervalError(f"sample {self.id!r} has empty ground truth")
        if self.gt.start < 0 or self.gt.end > self.timeline.duration:
            raise IntervalError(f"sample {self.id!r} ground truth exceeds the timeline")

    @property
    def duration(self) -> float:
        return self.timeline.duration

    @property
    def unannotated(self) -> IntervalSet:
        return complement(self.gt, self.timeline)

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Sample":
        timeline = VideoTimeline(float(rec["duration_s"]))
        sid = str(rec["id"])
        return cls(
            id=sid,
            video_uri=str(rec.get("video_uri", "")),
            timeline=timeline,
            query=str(rec["query"]),
            gt=normalize(rec["gt_segments"], timeline, sample_id=sid),
            dataset_tag=str(rec.get("dataset_tag", "")),
        )

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "video_uri": self.video_uri,
            "duration_s": self.timeline.duration,
            "query": self.query,
            "gt_segments": self.gt.to_list(),
            "dataset_tag": self.dataset_tag,
        }


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def dumps_record(rec: Mapping[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> int:
    n = 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")
            n += 1
    return n


def load_samples(path: str | Path) -> list[Sample]:
    return [Sample.from_record(rec) for rec in read_jsonl(path)]
