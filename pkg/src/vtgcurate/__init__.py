"""Curation and curriculum scheduling for video temporal grounding RL."""

from .curriculum import CurriculumItem, CurriculumScheduler, ScheduleConfig, emit_curriculum, mask_ratio, select_window
from .data import Sample
from .difficulty import DifficultyEstimator, DifficultyRecord, estimate, partition
from .intervals import IntervalSet, TimeInterval, VideoTimeline, complement, iop, iou, normalize
from .metrics import MetricReport, aggregate_metrics
from .reflection import (
    BoundaryReflectionAgent,
    ReflectionRecord,
    br_norm_histogram,
    evaluate_pas_f1,
    filter_records,
    reflect,
)
from .rewards import RolloutGroup, group_advantages, group_stats, parse_output, reward

__version__ = "0.1.0"

__all__ = [
    "BoundaryReflectionAgent",
    "CurriculumItem",
    "CurriculumScheduler",
    "DifficultyEstimator",
    "DifficultyRecord",
    "IntervalSet",
    "MetricReport",
    "ReflectionRecord",
    "RolloutGroup",
    "Sample",
    "ScheduleConfig",
    "TimeInterval",
    "VideoTimeline",
    "aggregate_metrics",
    "br_norm_histogram",
    "complement",
    "emit_curriculum",
    "estimate",
    "evaluate_pas_f1",
    "filter_records",
    "group_advantages",
    "group_stats",
    "iop",
    "iou",
    "mask_ratio",
    "normalize",
    "parse_output",
    "partition",
    "reflect",
    "reward",
    "select_window",
]
