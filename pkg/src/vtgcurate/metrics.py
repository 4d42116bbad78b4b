"""Grounding metrics: R@IoU, mIoU, IoP and grounded-QA accuracy variants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)


class MetricRecord(NamedTuple):
    iou: float
    iop: Optional[float] = None
    correct: Optional[bool] = None


@dataclass(frozen=True)
class MetricReport:
    recall_at: dict[float, float]
    miou: float
    n_samples: int
    miop: Optional[float] = None
    acc: Optional[float] = None
    acc_at_iou: dict[float, float] = field(default_factory=dict)
    acc_at_iop: dict[float, float] = field(default_factory=dict)

    def as_rows(self) -> list[dict[str, object]]:
        rows: list[dict[str, object]] = [
            {"metric": "n_samples", "threshold": "", "value": self.n_samples},
            {"metric": "mIoU", "threshold": "", "value": self.miou},
        ]
        rows += [{"metric": "R@IoU", "threshold": t, "value": v} for t, v in self.recall_at.items()]
        if self.miop is not None:
            rows.append({"metric": "mIoP", "threshold": "", "value": self.miop})
        if self.acc is not None:
            rows.append({"metric": "Acc", "threshold": "", "value": self.acc})
        rows += [{"metric": "Acc@IoU", "threshold": t, "value": v} for t, v in self.acc_at_iou.items()]
        rows += [{"metric": "Acc@IoP", "threshold": t, "value": v} for t, v in self.acc_at_iop.items()]
        return rows


def aggregate_metrics(
    records: Iterable[MetricRecord | Sequence],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> MetricReport:
    """Aggregate per-sample (iou, iop, correct) records into a :class:`MetricReport`.

    IoP and accuracy columns are reported only when every record carries them.
    """
    recs = [r if isinstance(r, MetricRecord) else MetricRecord(*r) for r in records]
    if not recs:
        raise ValueError("aggregate_metrics needs at least one record")
    thresholds = sorted(float(t) for t in thresholds)
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"threshold {t} outside (0, 1]")

    ious = np.array([r.iou for r in recs], dtype=float)
    recall_at = {t: float(np.mean(ious >= t)) for t in thresholds}

    miop = acc = None
    acc_at_iou: dict[float, float] = {}
    acc_at_iop: dict[float, float] = {}
    if all(r.iop is not None for r in recs):
        iops = np.array([r.iop for r in recs], dtype=float)
        miop = float(iops.mean())
    if all(r.correct is not None for r in recs):
        correct = np.array([bool(r.correct) for r in recs])
        acc = float(correct.mean())
        acc_at_iou = {t: float(np.mean(correct & (ious >= t))) for t in thresholds}
        if miop is not None:
            acc_at_iop = {t: float(np.mean(correct & (iops >= t))) for t in thresholds}

    return MetricReport(
        recall_at=recall_at,
        miou=float(ious.mean()),
        n_samples=len(recs),
        miop=miop,
        acc=acc,
        acc_at_iou=acc_at_iou,
        acc_at_iop=acc_at_iop,
    )
