"""Resumable, stage-by-stage curation runs inside one run directory.

Layout of a run directory::

    config.json                  snapshot of the effective configuration
    cache/oracle.jsonl           every oracle response, keyed by request
    ingest/samples.jsonl         accepted samples (canonical GT)
    ingest/validation_report.json
    reflect/records.jsonl        one reflection record per sample
    estimate/records.jsonl       one difficulty record per sample
    curate/curated_ids.jsonl     the curated subset
    schedule/curriculum.jsonl    one window per (step, sample) of the plan
    simulate/trace_*.csv         masked and unmasked training traces
    eval/metrics.csv             zero-shot grounding metrics
    report/                      tables assembled from all of the above
    logs/run.log                 the only file that carries timestamps

Every stage directory holds a ``stage.json`` with a fingerprint of everything
the stage depends on. A stage whose fingerprint still matches is skipped, so
reruns are free; a stage whose inputs changed is recomputed, and oracle calls
already in the response cache are not reissued.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .config import RunConfig, dump_config
from .curriculum import ScheduleConfig, emit_curriculum, uniform_batches
from .data import Sample, dumps_record, read_jsonl
from .difficulty import DifficultyRecord, grounding_request, partition, score_predictions
from .intervals import IntervalError, IntervalSet, TimeInterval, VideoTimeline, iop, iou, normalize
from .metrics import MetricRecord, aggregate_metrics
from .oracle import (
    GrounderOracle,
    ParseFailure,
    RemoteGrounder,
    ResponseCache,
    SamplingHint,
    SimTruth,
    SimulatedGrounder,
    SimulatedGrounderConfig,
)
from .oracle.parsing import parse_interval
from .oracle.prompts import load_template
from .reflection import (
    CurationError,
    ReflectionRecord,
    boundary_request,
    br_norm_histogram,
    evaluate_pas_f1,
    filter_records,
    make_record,
)
from .rewards import GROUP_FIELDS, STEP_FIELDS, group_rows, score_transcripts, step_aggregates
from .simulation import TRACE_FIELDS, PolicyConfig, RunTrace, TraceRecord, run as run_simulation, stratified_curves

logger = logging.getLogger("vtgcurate")

REPORT_SCHEMA_VERSION = 1
STAGES = ("ingest", "reflect", "estimate", "curate", "schedule", "simulate", "eval", "report")
PREREQUISITES = {
    "ingest": (),
    "reflect": ("ingest",),
    "estimate": ("ingest",),
    "curate": ("reflect",),
    "schedule": ("curate", "estimate"),
    "simulate": ("curate", "estimate"),
    "eval": ("estimate",),
    "report": ("ingest",),
}
MANIFEST_FIELDS = ("id", "duration_s", "query", "gt_segments")


class PipelineError(RuntimeError):
    pass


class ValidationFailure(PipelineError):
    """Input data or configuration cannot be used."""


class MissingPrerequisite(PipelineError):
    """A stage was asked to run before the stage it depends on."""

    def __init__(self, stage: str, needed: str, reason: str = "has not been run") -> None:
        self.stage, self.needed = stage, needed
        super().__init__(f"stage {stage!r} needs stage {needed!r}, which {reason}; run `vtgcurate {needed}` first")


# ---------------------------------------------------------------------------
# deterministic file output


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _fingerprint(obj: Any) -> str:
    return _sha256_bytes(json.dumps(obj, sort_keys=True, default=str).encode())[:16]


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _jsonl_text(records: Iterable[Mapping]) -> str:
    return "".join(dumps_record(r) + "\n" for r in records)


def _fmt_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _csv_text(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _json_text(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# ingest


@dataclass
class IngestReport:
    total: int = 0
    accepted: list[Sample] = field(default_factory=list)
    rejects: list[dict] = field(default_factory=list)
    warnings: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": len(self.accepted),
            "rejected": len(self.rejects),
            "rejects": self.rejects,
            "warnings": self.warnings,
        }


def _check_record(rec: Any, seen: set[str]) -> tuple[Sample, list[str]]:
    """Validate one manifest record; raises ValueError with a reason on rejection."""
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    missing = [f for f in MANIFEST_FIELDS if f not in rec]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    sid = str(rec["id"])
    if not sid:
        raise ValueError("empty id")
    if sid in seen:
        raise ValueError(f"duplicate id {sid!r}")
    try:
        duration = float(rec["duration_s"])
    except (TypeError, ValueError):
        raise ValueError(f"duration_s is not a number: {rec['duration_s']!r}") from None
    if not math.isfinite(duration) or duration <= 0:
        raise ValueError(f"duration_s must be positive and finite, got {rec['duration_s']!r}")
    query = rec["query"]
    if not isinstance(query, str) or not query.strip():
        raise ValueError("empty query")
    segs = rec["gt_segments"]
    if not isinstance(segs, list) or not segs:
        raise ValueError("gt_segments must be a non-empty list of [start, end] pairs")
    warnings = []
    for seg in segs:
        if not isinstance(seg, (list, tuple)) or len(seg) != 2:
            raise ValueError(f"malformed segment {seg!r}")
        try:
            s, e = float(seg[0]), float(seg[1])
        except (TypeError, ValueError):
            raise ValueError(f"malformed segment {seg!r}") from None
        if not (math.isfinite(s) and math.isfinite(e)):
            raise ValueError(f"non-finite segment {seg!r}")
        if s > e:
            raise ValueError(f"segment start exceeds end: {seg!r}")
        if (s < 0 or e > duration) and e > 0 and s < duration:
            warnings.append(f"segment [{s:g}, {e:g}] clipped to [{max(s, 0.0):g}, {min(e, duration):g}]")
    timeline = VideoTimeline(duration)
    try:
        gt = normalize([(float(a), float(b)) for a, b in segs], timeline, sample_id=sid)
        sample = Sample(sid, str(rec.get("video_uri", "")), timeline, query.strip(), gt, str(rec.get("dataset_tag", "")))
    except IntervalError as exc:
        raise ValueError(str(exc)) from None
    return sample, warnings


def ingest(path: str | Path) -> IngestReport:
    """Validate a manifest record by record; bad records are rejected, not fatal."""
    report = IngestReport()
    seen: set[str] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationFailure(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            report.total += 1
            rid = None
            try:
                rec = json.loads(line)
                if isinstance(rec, dict) and "id" in rec:
                    rid = str(rec["id"])
                sample, warns = _check_record(rec, seen)
            except (json.JSONDecodeError, ValueError) as exc:
                reason = f"invalid JSON: {exc.msg}" if isinstance(exc, json.JSONDecodeError) else str(exc)
                report.rejects.append({"line": lineno, "id": rid, "reason": reason})
                logger.warning("manifest line %d rejected: %s", lineno, reason)
                continue
            seen.add(sample.id)
            report.accepted.append(sample)
            for w in warns:
                report.warnings.append({"line": lineno, "id": sample.id, "warning": w})
                logger.warning("sample %s: %s", sample.id, w)
    return report


# ---------------------------------------------------------------------------
# oracle construction


def _load_world(path: str) -> tuple[dict[str, SimTruth], dict[str, bool]]:
    world, labels = {}, {}
    for rec in read_jsonl(path):
        world[str(rec["id"])] = SimTruth.from_record(rec)
        if "is_pas" in rec:
            labels[str(rec["id"])] = bool(rec["is_pas"])
    return world, labels


def build_backend(cfg: RunConfig, samples: Sequence[Sample]):
    spec = cfg.oracle
    if spec.backend == "simulator":
        sim_cfg = SimulatedGrounderConfig(
            skill=spec.default_skill,
            center_noise_scale=spec.center_noise_scale,
            width_noise_scale=spec.width_noise_scale,
            seed=cfg.seed("oracle"),
            miss_rate=spec.miss_rate,
            hallucination_rate=spec.hallucination_rate,
            br_noise_scale=spec.br_noise_scale,
            garble_rate=spec.garble_rate,
        )
        world = {s.id: SimTruth(s.gt) for s in samples}
        if spec.world_path:
            known, _ = _load_world(spec.world_path)
            world.update({sid: t for sid, t in known.items() if sid in world})
        return SimulatedGrounder(sim_cfg, world)
    if spec.backend == "remote":
        if not spec.base_url or not spec.model:
            raise ValidationFailure("remote oracle needs oracle.base_url and oracle.model")
        return RemoteGrounder(
            spec.base_url, spec.model, token_env=spec.token_env, timeout=spec.timeout_s, temperature=spec.temperature
        )
    raise ValidationFailure(f"unknown oracle backend {spec.backend!r}")


# ---------------------------------------------------------------------------
# the pipeline


class Pipeline:
    """Run stages of one curation run against ``run_dir``."""

    def __init__(self, run_dir: str | Path, config: RunConfig | None = None) -> None:
        self.run_dir = Path(run_dir)
        self.config = config or RunConfig()
        self._samples: Optional[list[Sample]] = None
        self._backend = None
        self._oracle: Optional[GrounderOracle] = None
        self._log_handler: Optional[logging.Handler] = None
        self._current = "ingest"

    # -- plumbing ---------------------------------------------------------

    def path(self, *parts: str) -> Path:
        return self.run_dir.joinpath(*parts)

    def _attach_log(self) -> None:
        if self._log_handler is not None:
            return
        log_path = self.path("logs", "run.log")
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(log_path, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handler.setLevel(logging.INFO)
        logger.addHandler(handler)
        if logger.level == logging.NOTSET or logger.level > logging.INFO:
            logger.setLevel(logging.INFO)
        self._log_handler = handler

    def close(self) -> None:
        if self._log_handler is not None:
            logger.removeHandler(self._log_handler)
            self._log_handler.close()
            self._log_handler = None
        close = getattr(self._backend, "close", None)
        if close is not None:
            close()

    def __enter__(self) -> "Pipeline":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def stage_info(self, stage: str) -> Optional[dict]:
        p = self.path(stage, "stage.json")
        if not p.exists():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def _outputs_intact(self, info: dict) -> bool:
        for name, digest in info.get("outputs", {}).items():
            p = self.path(info["stage"], name)
            if not p.exists() or _sha256_bytes(p.read_bytes()) != digest:
                return False
        return True

    def _require(self, stage: str) -> dict[str, str]:
        """Fingerprints of prerequisites, which must exist and match the current config."""
        fps = {}
        for dep in PREREQUISITES[stage]:
            info = self.stage_info(dep)
            if info is None:
                raise MissingPrerequisite(stage, dep)
            if dep != "ingest":
                expected = self.fingerprint(dep)
                if info["fingerprint"] != expected:
                    raise MissingPrerequisite(stage, dep, "is stale for the current configuration")
            fps[dep] = info["fingerprint"]
        return fps

    def _finish(self, stage: str, fingerprint: str, outputs: Mapping[str, str], params: Mapping) -> dict:
        """Write outputs, then ``stage.json`` last so an interrupted stage is never marked done."""
        digests = {}
        for name, text in sorted(outputs.items()):
            _atomic_write(self.path(stage, name), text)
            digests[name] = _sha256_bytes(text.encode("utf-8"))
        info = {"stage": stage, "fingerprint": fingerprint, "params": params, "outputs": digests}
        _atomic_write(self.path(stage, "stage.json"), _json_text(info))
        logger.info("stage %s finished (%s)", stage, fingerprint)
        return info

    def _snapshot_config(self) -> None:
        _atomic_write(self.path("config.json"), dump_config(self.config) + "\n")

    def samples(self) -> list[Sample]:
        if self._samples is None:
            p = self.path("ingest", "samples.jsonl")
            if not p.exists():
                raise MissingPrerequisite(self._current, "ingest")
            self._samples = [Sample.from_record(r) for r in read_jsonl(p)]
        return self._samples

    def backend(self):
        if self._backend is None:
            self._backend = build_backend(self.config, self.samples())
        return self._backend

    def oracle(self) -> GrounderOracle:
        if self._oracle is None:
            spec = self.config.oracle
            self._oracle = GrounderOracle(
                self.backend(),
                ResponseCache(self.path("cache", "oracle.jsonl")),
                max_retries=spec.max_retries,
                backoff_s=spec.backoff_s,
                max_workers=spec.max_workers,
            )
        return self._oracle

    # -- fingerprints -----------------------------------------------------

    def _params(self, stage: str) -> dict:
        c = self.config
        if stage == "reflect":
            return {
                "backend_id": self.backend().backend_id,
                "template": [c.boundary_template, load_template(c.boundary_template)[1]],
                "tau": c.tau,
                "fps": c.fps,
                "max_frames": c.max_frames,
            }
        if stage == "estimate":
            return {
                "backend_id": self.backend().backend_id,
                "template": [c.grounding_template, load_template(c.grounding_template)[1]],
                "k": c.k,
                "beta": c.beta,
                "fps": c.fps,
                "max_frames": c.max_frames,
            }
        if stage == "curate":
            return {"target_size": c.target_size, "seed": c.seed("curate")}
        if stage == "schedule":
            return {"m0": c.m0, "w": c.w, "T": c.T, "batch_size": c.batch_size, "seed": c.seed("schedule")}
        if stage == "simulate":
            return {
                "m0": c.m0, "w": c.w, "T": c.T, "beta": c.beta, "batch_size": c.batch_size,
                "learning_rate": c.learning_rate, "k": c.k, "seed": c.seed("simulate"),
            }
        if stage == "eval":
            return {"thresholds": list(c.metric_thresholds)}
        raise KeyError(stage)

    def fingerprint(self, stage: str, upstream: Mapping[str, str] | None = None) -> str:
        if upstream is None:
            upstream = {}
            for dep in PREREQUISITES[stage]:
                info = self.stage_info(dep)
                if info is None:
                    raise MissingPrerequisite(stage, dep)
                upstream[dep] = info["fingerprint"] if dep == "ingest" else self.fingerprint(dep)
        return _fingerprint({"stage": stage, "params": self._params(stage), "upstream": dict(upstream)})

    def _skip(self, stage: str, fingerprint: str) -> Optional[dict]:
        info = self.stage_info(stage)
        if info and info["fingerprint"] == fingerprint and self._outputs_intact(info):
            logger.info("stage %s is up to date (%s); skipping", stage, fingerprint)
            return {**info, "skipped": True}
        return None

    # -- stages -----------------------------------------------------------

    def run_stage(self, stage: str, **kwargs) -> dict:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
        self._current = stage
        self._attach_log()
        self._snapshot_config()
        return getattr(self, f"stage_{stage}")(**kwargs)

    def run_all(self, manifest: str | Path, stages: Sequence[str] = STAGES) -> dict[str, dict]:
        out = {}
        for stage in stages:
            out[stage] = self.run_stage(stage, manifest=manifest) if stage == "ingest" else self.run_stage(stage)
        return out

    def stage_ingest(self, manifest: str | Path) -> dict:
        data = Path(manifest).read_bytes() if Path(manifest).exists() else None
        if data is None:
            raise ValidationFailure(f"manifest {manifest} does not exist")
        fp = _fingerprint({"stage": "ingest", "manifest_sha256": _sha256_bytes(data)})
        done = self._skip("ingest", fp)
        if done:
            return done
        report = ingest(manifest)
        if not report.accepted:
            _atomic_write(self.path("ingest", "validation_report.json"), _json_text(report.to_dict()))
            raise ValidationFailure(f"manifest {manifest}: no valid records ({len(report.rejects)} rejected)")
        self._samples = report.accepted
        self._backend = self._oracle = None
        return {
            **self._finish(
                "ingest",
                fp,
                {
                    "samples.jsonl": _jsonl_text(s.to_record() for s in report.accepted),
                    "validation_report.json": _json_text(report.to_dict()),
                },
                {"manifest_sha256": _sha256_bytes(data)},
            ),
            "report": report.to_dict(),
        }

    def stage_reflect(self) -> dict:
        up = self._require("reflect")
        fp = self.fingerprint("reflect", up)
        done = self._skip("reflect", fp)
        if done:
            return done
        c, samples, oracle = self.config, self.samples(), self.oracle()
        hint = SamplingHint(c.fps, c.max_frames)
        requests = [boundary_request(s, hint, template_id=c.boundary_template) for s in samples]
        calls_before = oracle.transport_calls
        responses = iter(oracle.query_many([r for r in requests if r is not None]))
        records = [
            make_record(s, None if req is None else next(responses), c.tau, oracle.backend_id)
            for s, req in zip(samples, requests)
        ]
        logger.info("reflect: %d transport calls", oracle.transport_calls - calls_before)
        return self._finish("reflect", fp, {"records.jsonl": _jsonl_text(r.to_record() for r in records)}, self._params("reflect"))

    def stage_estimate(self) -> dict:
        up = self._require("estimate")
        fp = self.fingerprint("estimate", up)
        done = self._skip("estimate", fp)
        if done:
            return done
        c, samples, oracle = self.config, self.samples(), self.oracle()
        hint = SamplingHint(c.fps, c.max_frames)
        responses = oracle.query_many(grounding_request(s, c.k, hint, template_id=c.grounding_template) for s in samples)
        records = []
        for s, resp in zip(samples, responses):
            preds = [p if isinstance(p, TimeInterval) else None for p in resp.parsed]
            records.append(score_predictions(s, preds, c.beta, resp.backend_id))
        part = partition(records)
        summary = {
            "n": len(records),
            "hard": len(part.hard),
            "easy": len(part.easy),
            "group_counts": part.group_counts,
            "group_proportions": part.group_proportions,
        }
        return self._finish(
            "estimate",
            fp,
            {"records.jsonl": _jsonl_text(r.to_record() for r in records), "partition.json": _json_text(summary)},
            self._params("estimate"),
        )

    def reflection_records(self) -> list[ReflectionRecord]:
        return [ReflectionRecord.from_record(r) for r in read_jsonl(self.path("reflect", "records.jsonl"))]

    def difficulty_records(self) -> list[DifficultyRecord]:
        return [DifficultyRecord.from_record(r) for r in read_jsonl(self.path("estimate", "records.jsonl"))]

    def curated_ids(self) -> list[str]:
        return [r["id"] for r in read_jsonl(self.path("curate", "curated_ids.jsonl"))]

    def stage_curate(self) -> dict:
        up = self._require("curate")
        c = self.config
        if c.target_size is None:
            raise ValidationFailure("curate needs target_size (set it in the config or with --set target_size=N)")
        fp = self.fingerprint("curate", up)
        done = self._skip("curate", fp)
        if done:
            return done
        records = self.reflection_records()
        try:
            ids = filter_records(records, c.target_size, rng_seed=c.seed("curate"))
        except CurationError as exc:
            raise ValidationFailure(str(exc)) from exc
        n_pas = sum(r.is_pas for r in records)
        n_fail = sum(not r.usable for r in records)
        summary = {
            "n_records": len(records),
            "n_pas": n_pas,
            "n_parse_failures": n_fail,
            "clean_pool": len(records) - n_pas - n_fail,
            "target_size": c.target_size,
        }
        return self._finish(
            "curate",
            fp,
            {"curated_ids.jsonl": _jsonl_text({"id": i} for i in ids), "summary.json": _json_text(summary)},
            self._params("curate"),
        )

    def _curated_samples(self) -> list[Sample]:
        by_id = {s.id: s for s in self.samples()}
        return [by_id[i] for i in self.curated_ids()]

    def _schedule_config(self, seed: int) -> ScheduleConfig:
        c = self.config
        return ScheduleConfig(m0=c.m0, w=c.w, T=c.T, seed=seed)

    def stage_schedule(self) -> dict:
        up = self._require("schedule")
        fp = self.fingerprint("schedule", up)
        done = self._skip("schedule", fp)
        if done:
            return done
        c = self.config
        samples = self._curated_samples()
        records = {r.sample_id: r for r in self.difficulty_records()}
        hard = {s.id: records[s.id].is_hard for s in samples}
        cfg = self._schedule_config(c.seed("schedule"))
        steps = uniform_batches([s.id for s in samples], c.T, c.batch_size, c.seed("schedule"))
        items = emit_curriculum(samples, hard, cfg, steps)
        return self._finish("schedule", fp, {"curriculum.jsonl": _jsonl_text(i.to_record() for i in items)}, self._params("schedule"))

    def stage_simulate(self) -> dict:
        up = self._require("simulate")
        fp = self.fingerprint("simulate", up)
        done = self._skip("simulate", fp)
        if done:
            return done
        c = self.config
        samples = self._curated_samples()
        records = self.difficulty_records()
        seed = c.seed("simulate")
        pcfg = PolicyConfig(learning_rate=c.learning_rate, k=c.k, batch_size=c.batch_size, seed=seed)
        outputs = {}
        for arm, sched in (("masked", self._schedule_config(seed)), ("unmasked", None)):
            trace = run_simulation(samples, records, sched, pcfg, steps=c.T, beta=c.beta)
            outputs[f"trace_{arm}.csv"] = _csv_text(trace.rows(), TRACE_FIELDS)
            outputs[f"config_{arm}.json"] = _json_text(trace.config)
        return self._finish("simulate", fp, outputs, self._params("simulate"))

    def stage_eval(self, predictions: str | Path | None = None, rollouts: str | Path | None = None) -> dict:
        up = self._require("eval")
        extra = {}
        for name, p in (("predictions", predictions), ("rollouts", rollouts)):
            if p is not None:
                if not Path(p).exists():
                    raise ValidationFailure(f"{name} file {p} does not exist")
                extra[f"{name}_sha256"] = _sha256_bytes(Path(p).read_bytes())
        fp = _fingerprint({"base": self.fingerprint("eval", up), **extra})
        done = self._skip("eval", fp)
        if done:
            return done
        c = self.config
        by_id = {s.id: s for s in self.samples()}
        zs = []
        for r in self.difficulty_records():
            top1 = r.predictions[0] if r.predictions else None
            zs.append(_metric_record(top1, by_id[r.sample_id].gt))
        rows = [{"source": "zero_shot_top1", **row} for row in aggregate_metrics(zs, c.metric_thresholds).as_rows()]
        if predictions is not None:
            recs = _prediction_records(predictions, by_id)
            rows += [{"source": "predictions", **row} for row in aggregate_metrics(recs, c.metric_thresholds).as_rows()]
        outputs = {"metrics.csv": _csv_text(rows, ("source", "metric", "threshold", "value"))}
        if rollouts is not None:
            try:
                groups = score_transcripts(read_jsonl(rollouts), {sid: s.gt for sid, s in by_id.items()})
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationFailure(f"rollout transcripts {rollouts}: {exc}") from exc
            outputs["rollout_groups.csv"] = _csv_text(group_rows(groups), GROUP_FIELDS)
            outputs["rollout_steps.csv"] = _csv_text(step_aggregates(groups), STEP_FIELDS)
        return self._finish("eval", fp, outputs, {**self._params("eval"), **extra})

    def stage_report(self) -> dict:
        self._require("report")
        outputs, sections = build_report(self)
        fp = _fingerprint({k: _sha256_bytes(v.encode()) for k, v in outputs.items()})
        return {**self._finish("report", fp, outputs, {"schema_version": REPORT_SCHEMA_VERSION}), "sections": sections}


def _metric_record(pred: Optional[TimeInterval], gt: IntervalSet, correct: Optional[bool] = None) -> MetricRecord:
    if pred is None or pred.duration <= 0:
        return MetricRecord(0.0, 0.0, correct)
    p = IntervalSet([pred])
    return MetricRecord(iou(p, gt), iop(p, gt), correct)


def _prediction_records(path: str | Path, by_id: Mapping[str, Sample]) -> list[MetricRecord]:
    """Predictions file: ``{"id", "pred": [s, e]}`` or ``{"id", "raw": text}``, optional ``correct``."""
    recs = []
    for rec in read_jsonl(path):
        sample = by_id.get(str(rec.get("id")))
        if sample is None:
            raise ValidationFailure(f"prediction for unknown sample {rec.get('id')!r}")
        if "pred" in rec and rec["pred"] is not None:
            pred = parse_interval(f"<answer>{rec['pred'][0]} to {rec['pred'][1]}</answer>", sample.timeline.full)
        else:
            pred = parse_interval(str(rec.get("raw", "")), sample.timeline.full)
        recs.append(_metric_record(None if isinstance(pred, ParseFailure) else pred, sample.gt, rec.get("correct")))
    if not recs:
        raise ValidationFailure(f"predictions file {path} is empty")
    return recs


# ---------------------------------------------------------------------------
# report


def load_pas_labels(cfg: RunConfig) -> dict[str, bool]:
    if cfg.pas_labels_path:
        return {str(r["id"]): bool(r["is_pas"]) for r in read_jsonl(cfg.pas_labels_path)}
    if cfg.oracle.backend == "simulator" and cfg.oracle.world_path:
        return _load_world(cfg.oracle.world_path)[1]
    return {}


def random_flags(ids: Sequence[str], n_flag: int, seed: int) -> dict[str, bool]:
    """Flag ``n_flag`` of ``ids`` uniformly at random (a rate-matched baseline)."""
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(len(ids), size=n_flag, replace=False).tolist()) if n_flag else set()
    return {sid: i in chosen for i, sid in enumerate(ids)}


def build_report(pipe: Pipeline) -> tuple[dict[str, str], dict[str, str]]:
    """Assemble report files; returns ``(outputs, section -> status)``."""
    c = pipe.config
    outputs: dict[str, str] = {}
    sections: dict[str, str] = {}
    summary: dict[str, Any] = {"schema_version": REPORT_SCHEMA_VERSION, "n_samples": len(pipe.samples())}

    reflect_ok = pipe.stage_info("reflect") is not None
    if reflect_ok:
        records = pipe.reflection_records()
        hist = br_norm_histogram(records, c.histogram_edges)
        outputs["br_norm_histogram.csv"] = _csv_text(hist.rows(), ("dataset", "bin", "count"))
        outputs["pas_fraction.csv"] = _csv_text(hist.fraction_rows(), ("dataset", "pas_fraction"))
        sections["br_norm_histogram"] = "ok"
        summary["n_pas"] = sum(r.is_pas for r in records)
        summary["n_parse_failures"] = sum(not r.usable for r in records)
        labels = {k: v for k, v in load_pas_labels(c).items() if k in {r.sample_id for r in records}}
        if labels and any(labels.values()):
            usable = [r for r in records if r.sample_id in labels]
            bra = evaluate_pas_f1(usable, labels)
            ids = sorted(labels)
            n_flag = sum(r.is_pas for r in usable)
            rnd_flags = random_flags(ids, n_flag, c.seed("curate"))
            rnd_records = [replace(r, is_pas=rnd_flags[r.sample_id]) for r in usable]
            rnd = evaluate_pas_f1(rnd_records, labels)
            rows = [{"method": name, **s.__dict__} for name, s in (("boundary_reflection", bra), ("random_rate_matched", rnd))]
            outputs["pas_f1.csv"] = _csv_text(rows, ("method", "precision", "recall", "f1", "tp", "fp", "fn", "tn"))
            sections["pas_f1"] = "ok"
            summary["pas_f1"] = {"boundary_reflection": bra.f1, "random_rate_matched": rnd.f1}
        else:
            sections["pas_f1"] = "absent: no PAS labels (set pas_labels_path)"
    else:
        sections["br_norm_histogram"] = sections["pas_f1"] = "absent: reflect has not been run"

    if pipe.stage_info("estimate") is not None:
        drecs = pipe.difficulty_records()
        part = partition(drecs)
        rows = [{"group": g, "count": part.group_counts[g], "proportion": part.group_proportions[g]} for g in part.group_counts]
        outputs["difficulty_groups.csv"] = _csv_text(rows, ("group", "count", "proportion"))
        sections["difficulty_groups"] = "ok"
        summary["hard_fraction"] = len(part.hard) / len(drecs)
    else:
        sections["difficulty_groups"] = "absent: estimate has not been run"

    if pipe.stage_info("curate") is not None:
        summary["curated"] = len(pipe.curated_ids())

    sim = pipe.stage_info("simulate")
    if sim is not None:
        for arm in ("masked", "unmasked"):
            trace = _read_trace(pipe.path("simulate", f"trace_{arm}.csv"))
            curves = stratified_curves(trace)
            rows = []
            for g, series in curves.items():
                for i in range(len(series["step"])):
                    rows.append({
                        "group": g,
                        "step": int(series["step"][i]),
                        "top1_iou_reward": float(series["top1_iou_reward"][i]),
                        "advantage_std": float(series["advantage_std"][i]),
                        "collapse_rate": float(series["collapse_rate"][i]),
                    })
            outputs[f"curves_{arm}.csv"] = _csv_text(rows, ("group", "step", "top1_iou_reward", "advantage_std", "collapse_rate"))
            empty = [g for g, series in curves.items() if len(series["step"]) == 0]
            if empty:
                summary.setdefault("notes", []).append(f"curves_{arm}: no samples in group(s) {', '.join(empty)}")
        sections["curves"] = "ok"
    else:
        sections["curves"] = "absent: simulate has not been run"

    if pipe.stage_info("eval") is not None:
        outputs["metrics.csv"] = pipe.path("eval", "metrics.csv").read_text(encoding="utf-8")
        sections["metrics"] = "ok"
    else:
        sections["metrics"] = "absent: eval has not been run"

    summary["sections"] = sections
    outputs["summary.json"] = _json_text(summary)
    return outputs, sections


def _read_trace(path: Path) -> RunTrace:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(TraceRecord(
                step=int(row["step"]), bucket=row["bucket"], n_groups=int(row["n_groups"]),
                **{k: float(row[k]) for k in TRACE_FIELDS[3:]},
            ))
    return RunTrace(records)

