"""Format + IoU rewards and group-relative advantages for k rollouts per sample."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .intervals import IntervalSet, TimeInterval, iou

ADVANTAGE_EPS = 1e-8

_NUM = r"(\d+(?:\.\d+)?)"
_STRICT = re.compile(
    r"^\s*<think>(?P<think>.*?)</think>\s*<answer>\s*" + _NUM + r"\s*(?:s|sec|seconds)?\s*(?:to|-)\s*" + _NUM
    + r"\s*(?:s|sec|seconds)?\s*</answer>\s*$",
    re.DOTALL,
)
_TAGS = ("<think>", "</think>", "<answer>", "</answer>")


@dataclass(frozen=True)
class RolloutOutput:
    raw_text: str
    parsed_interval: Optional[TimeInterval]
    format_ok: bool

    def __post_init__(self) -> None:
        if self.format_ok and self.parsed_interval is None:
            raise ValueError("a well-formatted output must carry an interval")


def parse_output(raw_text: str) -> RolloutOutput:
    """Strict answer grammar: one ``<think>`` block, then one ``<answer>start to end</answer>``."""
    if any(raw_text.count(tag) != 1 for tag in _TAGS):
        return RolloutOutput(raw_text, None, False)
    m = _STRICT.match(raw_text)
    if m is None:
        return RolloutOutput(raw_text, None, False)
    start, end = float(m.group(2)), float(m.group(3))
    if start > end:
        return RolloutOutput(raw_text, None, False)
    return RolloutOutput(raw_text, TimeInterval(start, end), True)


def format_answer(pred: TimeInterval, thought: str = "") -> str:
    return f"<think>{thought}</think><answer>{pred.start:.3f} to {pred.end:.3f}</answer>"


def iou_reward(output: RolloutOutput, gt: IntervalSet, window: TimeInterval | None = None) -> float:
    if not output.format_ok:
        return 0.0
    pred = output.parsed_interval
    if window is not None:
        # predictions are in window coordinates; anything past the visible clip is cut
        lo, hi = max(pred.start, 0.0), min(pred.end, window.duration)
        if hi <= lo:
            return 0.0
        pred = TimeInterval(lo, hi)
    return iou(IntervalSet([pred]), gt)


def reward(output: RolloutOutput, gt: IntervalSet, window: TimeInterval | None = None) -> float:
    """``R_format + R_IoU`` in ``[0, 2]``; a malformed answer scores 0."""
    if not output.format_ok:
        return 0.0
    return 1.0 + iou_reward(output, gt, window)


def group_advantages(rewards: Sequence[float], eps: float = ADVANTAGE_EPS) -> np.ndarray:
    """Group-normalised advantages ``(r - mean) / std`` with population std.

    Groups whose std does not exceed ``eps`` are collapsed and get exact zeros.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("group_advantages needs at least two rewards")
    centered = r - r.mean()
    std = float(np.sqrt(np.mean(centered**2)))
    if std <= eps:
        return np.zeros_like(r)
    return centered / std


@dataclass(frozen=True)
class RolloutGroup:
    sample_id: str
    step: int
    outputs: tuple[RolloutOutput, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    iou_rewards: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if not len(self.outputs) == len(self.rewards) == len(self.advantages):
            raise ValueError("outputs, rewards and advantages must have equal length")


def score_group(
    sample_id: str,
    step: int,
    raw_texts: Iterable[str],
    gt: IntervalSet,
    window: TimeInterval | None = None,
) -> RolloutGroup:
    outputs = tuple(parse_output(t) for t in raw_texts)
    ious = tuple(iou_reward(o, gt, window) for o in outputs)
    rewards = tuple((1.0 + v) if o.format_ok else 0.0 for o, v in zip(outputs, ious))
    adv = tuple(float(a) for a in group_advantages(rewards))
    return RolloutGroup(sample_id, step, outputs, rewards, adv, ious)


@dataclass(frozen=True)
class GroupStats:
    mean_reward: float
    top1_iou_reward: float
    advantage_std: float
    collapsed: bool


def group_stats(group: RolloutGroup) -> GroupStats:
    ious = group.iou_rewards or tuple(max(0.0, r - 1.0) for r in group.rewards)
    adv = np.asarray(group.advantages, dtype=float)
    adv_std = float(np.sqrt(np.mean((adv - adv.mean()) ** 2)))
    return GroupStats(
        mean_reward=float(np.mean(group.rewards)),
        top1_iou_reward=float(max(ious)),
        advantage_std=adv_std,
        collapsed=adv_std == 0.0,
    )


def score_transcripts(records: Iterable[Mapping], gt_of: Mapping[str, IntervalSet]) -> list[RolloutGroup]:
    """Score rollout transcripts ``{"sample_id", "step", "texts", "window"?}``.

    ``window`` (original coordinates) marks a masked clip; GT is then shifted
    into window coordinates before scoring.
    """
    groups = []
    for rec in records:
        sid = str(rec["sample_id"])
        if sid not in gt_of:
            raise KeyError(f"transcript for unknown sample {sid!r}")
        gt = gt_of[sid]
        window = None
        if rec.get("window") is not None:
            window = TimeInterval(*rec["window"])
            gt = gt.shift(-window.start)
        groups.append(score_group(sid, int(rec["step"]), rec["texts"], gt, window))
    return groups


GROUP_FIELDS = ("sample_id", "step", "k", "mean_reward", "top1_iou_reward", "advantage_std", "collapsed", "rewards", "advantages")
STEP_FIELDS = ("step", "n_groups", "mean_reward", "mean_top1_iou_reward", "mean_advantage_std", "collapse_rate")


def group_rows(groups: Sequence[RolloutGroup]) -> list[dict]:
    rows = []
    for g in groups:
        s = group_stats(g)
        rows.append({
            "sample_id": g.sample_id,
            "step": g.step,
            "k": len(g.outputs),
            "mean_reward": s.mean_reward,
            "top1_iou_reward": s.top1_iou_reward,
            "advantage_std": s.advantage_std,
            "collapsed": s.collapsed,
            "rewards": " ".join(repr(r) for r in g.rewards),
            "advantages": " ".join(repr(a) for a in g.advantages),
        })
    return rows


def step_aggregates(groups: Sequence[RolloutGroup]) -> list[dict]:
    """Per-step means of the group statistics, ordered by step."""
    by_step: dict[int, list[GroupStats]] = {}
    for g in groups:
        by_step.setdefault(g.step, []).append(group_stats(g))
    rows = []
    for step in sorted(by_step):
        stats = by_step[step]
        rows.append({
            "step": step,
            "n_groups": len(stats),
            "mean_reward": float(np.mean([s.mean_reward for s in stats])),
            "mean_top1_iou_reward": float(np.mean([s.top1_iou_reward for s in stats])),
            "mean_advantage_std": float(np.mean([s.advantage_std for s in stats])),
            "collapse_rate": float(np.mean([s.collapsed for s in stats])),
        })
    return rows
