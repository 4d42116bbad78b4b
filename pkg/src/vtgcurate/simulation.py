"""Closed-loop GRPO simulation with a trainable interval policy.

The policy keeps, per sample, a Gaussian belief over the moment center
(``center_bias``), a log-normal belief over its width (``log_width_bias``) and a
shared sharpness ``concentration``::

    center ~ TruncNormal(center_bias, center_scale / concentration) on the visible window
    width  = exp(N(log_width_bias, width_scale / concentration))

Masking shrinks the visible window, so a diffuse policy hits the ground truth
more often and its rollout groups stop collapsing. Updates are natural-gradient
score-function steps weighted by group-relative advantages.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from ._rng import substream
from .curriculum import CurriculumItem, ScheduleConfig, make_item, uniform_batches
from .data import Sample
from .difficulty import GROUPS, DifficultyRecord
from .intervals import IntervalSet, TimeInterval
from .rewards import format_answer, group_stats, score_group

BUCKETS = GROUPS + ("hard", "easy", "all")
TRACE_FIELDS = (
    "step", "bucket", "n_groups", "mean_top1_iou_reward", "mean_reward",
    "mean_reward_std", "mean_advantage_std", "collapse_rate", "mean_mask_ratio",
)


class SimulationDiverged(RuntimeError):
    pass


def truncated_normal(mu: float, sd: float, lo: float, hi: float, u: np.ndarray) -> np.ndarray:
    """Map uniforms ``u`` through the inverse CDF of N(mu, sd) truncated to [lo, hi].

    Inverse-CDF sampling keeps draws coupled across windows: the same ``u``
    lands at corresponding quantiles whatever the truncation.
    """
    a, b = (lo - mu) / sd, (hi - mu) / sd
    flip = a > 0
    if flip:
        # work in the lower tail, where ndtr keeps its precision
        a, b = -b, -a
    pa, pb = ndtr(a), ndtr(b)
    if pb - pa > 1e-300:
        z = ndtri(pa + u * (pb - pa))
    else:
        # both bounds deep in the tail: exponential approximation near the closer bound
        z = b + np.log(np.maximum(u, 1e-300)) / max(abs(b), 1.0)
    z = np.clip(z, a, b)
    if flip:
        z = -z
    return np.clip(mu + sd * z, lo, hi)


@dataclass(frozen=True)
class PolicyConfig:
    learning_rate: float = 0.5
    center_scale: float = 20.0
    width_scale: float = 0.5
    min_center_sd: float = 0.05
    max_log_conc_step: float = 0.5
    k: int = 8
    batch_size: int = 32
    format_error_rate: float = 0.0
    seed: int = 0


class SyntheticPolicy:
    """Per-sample interval distributions trained by REINFORCE with GRPO advantages."""

    def __init__(
        self,
        sample_ids: Sequence[str],
        center_bias: Sequence[float],
        log_width_bias: Sequence[float],
        concentration: Sequence[float],
        config: PolicyConfig = PolicyConfig(),
    ) -> None:
        self.config = config
        self.index = {sid: i for i, sid in enumerate(sample_ids)}
        self.center = np.asarray(center_bias, dtype=float).copy()
        self.log_width = np.asarray(log_width_bias, dtype=float).copy()
        self.log_conc = np.log(np.asarray(concentration, dtype=float))

    @classmethod
    def from_zero_shot(
        cls,
        samples: Sequence[Sample],
        records: Mapping[str, DifficultyRecord],
        config: PolicyConfig = PolicyConfig(),
    ) -> "SyntheticPolicy":
        """Start each sample's distribution at the moments of its zero-shot predictions."""
        centers, widths, concs = [], [], []
        for s in samples:
            preds = [p for p in records[s.id].predictions if p is not None]
            if preds:
                mids = np.array([(p.start + p.end) / 2 for p in preds])
                lw = np.log(np.maximum([p.duration for p in preds], 1e-3))
                sd = max(float(mids.std()), config.min_center_sd)
                centers.append(float(mids.mean()))
                widths.append(float(lw.mean()))
            else:
                sd = s.duration / math.sqrt(12.0)
                centers.append(s.duration / 2)
                widths.append(math.log(s.duration / 10))
            concs.append(config.center_scale / sd)
        return cls([s.id for s in samples], centers, widths, concs, config)

    def concentration(self, sample_id: str) -> float:
        return float(math.exp(self.log_conc[self.index[sample_id]]))

    def params(self, sample_id: str) -> tuple[float, float, float]:
        i = self.index[sample_id]
        return float(self.center[i]), float(self.log_width[i]), float(math.exp(self.log_conc[i]))

    def sample(self, sample_id: str, window: TimeInterval, rng: np.random.Generator):
        """Return ``(texts, center_draws, log_width_draws)`` for k rollouts inside ``window``."""
        cfg = self.config
        mu, lw, conc = self.params(sample_id)
        sd_c, sd_w = cfg.center_scale / conc, cfg.width_scale / conc
        u = rng.uniform(size=cfg.k)
        if sd_c > 0 and math.isfinite(sd_c):
            centers = truncated_normal(mu, sd_c, window.start, window.end, u)
        else:
            centers = np.full(cfg.k, min(max(mu, window.start), window.end))
        log_widths = lw + sd_w * rng.standard_normal(cfg.k)
        bad_format = rng.uniform(size=cfg.k) < cfg.format_error_rate
        texts = []
        for c, w, bad in zip(centers, np.exp(log_widths), bad_format):
            half = min(w, window.duration) / 2
            lo = max(window.start, c - half) - window.start
            hi = min(window.end, c + half) - window.start
            pred = TimeInterval(lo, hi)
            texts.append(f"{pred.start:.3f} - {pred.end:.3f}" if bad else format_answer(pred))
        return texts, centers, log_widths

    def update(self, sample_id: str, advantages: np.ndarray, centers: np.ndarray, log_widths: np.ndarray) -> None:
        adv = np.asarray(advantages, dtype=float)
        if not np.any(adv):
            return
        cfg = self.config
        i = self.index[sample_id]
        mu, lw, conc = self.params(sample_id)
        sd_c, sd_w = cfg.center_scale / conc, cfg.width_scale / conc
        lr = cfg.learning_rate
        z_c = (centers - mu) / sd_c
        z_w = (log_widths - lw) / sd_w
        # natural-gradient steps; the truncation normaliser is constant within a
        # group and cancels against zero-mean advantages
        self.center[i] += lr * float(np.mean(adv * (centers - mu)))
        self.log_width[i] += lr * float(np.mean(adv * (log_widths - lw)))
        step = -lr * float(np.mean(adv * ((z_c**2 - 1) + (z_w**2 - 1)))) / 4
        self.log_conc[i] += float(np.clip(step, -cfg.max_log_conc_step, cfg.max_log_conc_step))

    def check_finite(self, step: int) -> None:
        for name, arr in (("center_bias", self.center), ("log_width_bias", self.log_width), ("concentration", self.log_conc)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                sid = next(s for s, j in self.index.items() if j == bad[0])
                raise SimulationDiverged(f"{name} became non-finite for sample {sid!r} at step {step}")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    bucket: str
    n_groups: int
    mean_top1_iou_reward: float
    mean_reward: float
    mean_reward_std: float
    mean_advantage_std: float
    collapse_rate: float
    mean_mask_ratio: float


@dataclass
class RunTrace:
    records: list[TraceRecord]
    config: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [asdict(r) for r in self.records]

    def series(self, bucket: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.records if r.bucket == bucket], dtype=float)

    def config_json(self) -> str:
        return json.dumps(self.config, sort_keys=True, indent=2)


def check_item(item: CurriculumItem, sample: Sample) -> None:
    """Scheduler invariants, re-checked on every window the simulation uses."""
    if not sample.gt.issubset(IntervalSet([item.window])):
        raise AssertionError(f"window {item.window} does not contain GT of {sample.id}")
    if item.remapped_gt.shift(item.window.start) != sample.gt:
        raise AssertionError(f"remapped GT of {sample.id} does not round-trip")
    if not item.is_hard and item.mask_ratio_used != 0.0:
        raise AssertionError(f"easy sample {sample.id} was masked")


def _summarise(step: int, bucket: str, entries: list[tuple]) -> TraceRecord:
    if not entries:
        nan = float("nan")
        return TraceRecord(step, bucket, 0, nan, nan, nan, nan, nan, nan)
    arr = np.array(entries, dtype=float)
    top1, mean_r, r_std, a_std, collapsed, m = arr.mean(axis=0)
    return TraceRecord(step, bucket, len(entries), float(top1), float(mean_r), float(r_std), float(a_std), float(collapsed), float(m))


def run(
    samples: Sequence[Sample],
    records: Iterable[DifficultyRecord],
    schedule: Optional[ScheduleConfig],
    policy_cfg: PolicyConfig = PolicyConfig(),
    steps: int = 200,
    beta: float = 0.3,
) -> RunTrace:
    """Train the synthetic policy for ``steps`` steps; ``schedule=None`` disables masking."""
    if not samples:
        raise ValueError("simulation corpus is empty")
    rec_by_id = {r.sample_id: r for r in records}
    missing = [s.id for s in samples if s.id not in rec_by_id]
    if missing:
        raise KeyError(f"samples without difficulty records: {missing[:5]}")
    by_id = {s.id: s for s in samples}
    group_of = {sid: r.group for sid, r in rec_by_id.items()}
    hard_of = {sid: (r.iou_max_zs <= beta or not r.usable) for sid, r in rec_by_id.items()}
    policy = SyntheticPolicy.from_zero_shot(samples, rec_by_id, policy_cfg)
    sched = schedule or ScheduleConfig(T=steps, seed=policy_cfg.seed)
    if sched.T != steps:
        raise ValueError(f"schedule T={sched.T} does not match steps={steps}")

    trace: list[TraceRecord] = []
    for t, batch in uniform_batches(list(by_id), steps, policy_cfg.batch_size, policy_cfg.seed):
        per_bucket: dict[str, list[tuple]] = {b: [] for b in BUCKETS}
        for sid in batch:
            sample = by_id[sid]
            item = make_item(sample, t, hard_of[sid], sched, enabled=schedule is not None)
            check_item(item, sample)
            rng = substream(policy_cfg.seed, "rollout", t, sid)
            texts, centers, log_widths = policy.sample(sid, item.window, rng)
            group = score_group(sid, t, texts, item.remapped_gt, item.window)
            stats = group_stats(group)
            policy.update(sid, np.asarray(group.advantages), centers, log_widths)
            entry = (
                stats.top1_iou_reward, stats.mean_reward, float(np.std(group.rewards)),
                stats.advantage_std, float(stats.collapsed), item.mask_ratio_used,
            )
            for b in (group_of[sid], "hard" if hard_of[sid] else "easy", "all"):
                per_bucket[b].append(entry)
        policy.check_finite(t)
        trace.extend(_summarise(t, b, per_bucket[b]) for b in BUCKETS)

    config = {
        "steps": steps,
        "beta": beta,
        "n_samples": len(samples),
        "schedule": None if schedule is None else asdict(schedule),
        "policy": asdict(policy_cfg),
        "warmup_steps": sched.warmup_steps,
    }
    return RunTrace(trace, config)


def stratified_curves(trace: RunTrace) -> dict[str, dict[str, np.ndarray]]:
    """Per difficulty group: step, top-1 IoU reward and advantage-std series.

    Groups that never appear in the trace map to empty series.
    """
    out = {}
    for g in GROUPS:
        recs = [r for r in trace.records if r.bucket == g and r.n_groups > 0]
        out[g] = {
            "step": np.array([r.step for r in recs], dtype=int),
            "top1_iou_reward": np.array([r.mean_top1_iou_reward for r in recs]),
            "advantage_std": np.array([r.mean_advantage_std for r in recs]),
            "collapse_rate": np.array([r.collapse_rate for r in recs]),
        }
    return out
