from __future__ import annotations

import json
from pathlib import Path

import pytest

from vtgcurate import pipeline as pl
from vtgcurate.config import RunConfig, load_config
from vtgcurate.intervals import TimeInterval
from vtgcurate.pipeline import MissingPrerequisite, Pipeline, ValidationFailure, ingest
from vtgcurate.rewards import format_answer

from .conftest import GOLDEN

GOOD = [
    {"id": "a", "duration_s": 60, "query": "a man waves", "gt_segments": [[10, 20]]},
    {"id": "b", "duration_s": 90.5, "query": "a dog runs", "gt_segments": [[0, 5], [40, 45]], "dataset_tag": "x"},
    {"id": "c", "duration_s": 30, "query": "the door opens", "gt_segments": [[29, 30]]},
]
BAD_LINES = [
    json.dumps({"id": "d", "duration_s": 60, "query": "q", "gt_segments": [[30, 20]]}),
    json.dumps({"id": "e", "duration_s": 60, "query": "q", "gt_segments": [[50, 70]]}),
    json.dumps({"id": "a", "duration_s": 60, "query": "q", "gt_segments": [[1, 2]]}),
    json.dumps({"id": "f", "duration_s": 60, "query": "  ", "gt_segments": [[1, 2]]}),
    json.dumps({"id": "g", "duration_s": 0, "query": "q", "gt_segments": [[0, 0]]}),
    json.dumps({"id": "h", "duration_s": 60, "query": "q", "gt_segments": []}),
    json.dumps({"id": "i", "duration_s": 60, "query": "q", "gt_segments": [[70, 80]]}),
    json.dumps({"id": "j", "duration_s": 60, "query": "q"}),
    "{not json",
]


def write_manifest(path: Path, lines) -> Path:
    path.write_text("\n".join(json.dumps(r) if isinstance(r, dict) else r for r in lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def cfg(bundled_corpus):
    return load_config(bundled_corpus / "config.yaml", {"T": 20})


# -- ingest -----------------------------------------------------------------


def test_ingest_accepts_good_records(tmp_path):
    rep = ingest(write_manifest(tmp_path / "m.jsonl", GOOD))
    assert [s.id for s in rep.accepted] == ["a", "b", "c"]
    assert rep.accepted[1].gt.total_duration() == 10.0 and rep.accepted[1].dataset_tag == "x"
    assert rep.rejects == [] and rep.warnings == []


def test_ingest_report_matches_snapshot(tmp_path):
    rep = ingest(write_manifest(tmp_path / "m.jsonl", GOOD + BAD_LINES))
    assert len(rep.accepted) + len(rep.rejects) == rep.total == 12
    assert [s.id for s in rep.accepted] == ["a", "b", "c", "e"]
    e = rep.accepted[-1]
    assert e.gt.intervals == (TimeInterval(50, 60),)
    got = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    assert got == (GOLDEN / "validation_report.json").read_text(encoding="utf-8")


def test_ingest_unreadable_manifest(tmp_path):
    with pytest.raises(ValidationFailure):
        ingest(tmp_path / "missing.jsonl")


def test_stage_ingest_with_no_valid_records(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", BAD_LINES[:1])
    with Pipeline(tmp_path / "run") as pipe, pytest.raises(ValidationFailure, match="no valid records"):
        pipe.run_stage("ingest", manifest=m)
    assert (tmp_path / "run" / "ingest" / "validation_report.json").exists()
    assert not (tmp_path / "run" / "ingest" / "stage.json").exists()


# -- resumability -----------------------------------------------------------


def test_resume_skips_with_zero_oracle_calls(tmp_path, cfg, bundled_corpus):
    run = tmp_path / "run"
    with Pipeline(run, cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect", "estimate"))
        assert pipe.oracle().transport_calls > 0
    with Pipeline(run, cfg) as pipe:
        out = pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect", "estimate"))
        assert all(info.get("skipped") for info in out.values())
        assert pipe._oracle is None or pipe.oracle().transport_calls == 0


def test_tau_change_reruns_reflect_from_cache(tmp_path, cfg, bundled_corpus):
    run = tmp_path / "run"
    with Pipeline(run, cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect", "estimate", "curate"))
    before = (run / "reflect" / "records.jsonl").read_text()
    with Pipeline(run, cfg.with_overrides({"tau": 0.5})) as pipe:
        out = pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect", "estimate"))
        assert out["ingest"].get("skipped") and out["estimate"].get("skipped")
        assert not out["reflect"].get("skipped")
        assert pipe.oracle().transport_calls == 0
        with pytest.raises(MissingPrerequisite, match="'curate', which is stale"):
            pipe.run_stage("schedule")
    assert (run / "reflect" / "records.jsonl").read_text() != before


def test_template_change_invalidates_reflect(tmp_path, cfg, bundled_corpus, monkeypatch):
    run = tmp_path / "run"
    with Pipeline(run, cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect"))
    real = pl.load_template
    monkeypatch.setattr(pl, "load_template", lambda tid: (real(tid)[0], "edited"))
    with Pipeline(run, cfg) as pipe:
        assert not pipe.run_stage("reflect").get("skipped")


def test_backend_change_invalidates_estimate(tmp_path, cfg, bundled_corpus):
    run = tmp_path / "run"
    with Pipeline(run, cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "estimate"))
    with Pipeline(run, cfg.with_overrides({"seeds.oracle": 1})) as pipe:
        assert not pipe.run_stage("estimate").get("skipped")
        assert pipe.oracle().transport_calls > 0


def test_tampered_output_is_recomputed(tmp_path, cfg, bundled_corpus):
    run = tmp_path / "run"
    with Pipeline(run, cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect"))
    good = (run / "reflect" / "records.jsonl").read_text()
    (run / "reflect" / "records.jsonl").write_text("torn")
    with Pipeline(run, cfg) as pipe:
        assert not pipe.run_stage("reflect").get("skipped")
    assert (run / "reflect" / "records.jsonl").read_text() == good


# -- errors -----------------------------------------------------------------


def test_missing_prerequisite_names_stage(tmp_path, cfg):
    with Pipeline(tmp_path / "run", cfg) as pipe:
        with pytest.raises(MissingPrerequisite) as exc:
            pipe.run_stage("reflect")
    assert exc.value.stage == "reflect" and exc.value.needed == "ingest"
    assert "ingest" in str(exc.value)


def test_curate_shortfall_and_missing_target(tmp_path, cfg, bundled_corpus):
    with Pipeline(tmp_path / "run", cfg.with_overrides({"target_size": 10_000})) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect"))
        with pytest.raises(ValidationFailure, match="shortfall"):
            pipe.run_stage("curate")
    with Pipeline(tmp_path / "run", cfg.with_overrides({"target_size": None})) as pipe:
        with pytest.raises(ValidationFailure, match="target_size"):
            pipe.run_stage("curate")


def test_remote_backend_requires_endpoint(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", GOOD)
    cfg = RunConfig().with_overrides({"oracle.backend": "remote"})
    with Pipeline(tmp_path / "run", cfg) as pipe:
        pipe.run_stage("ingest", manifest=m)
        with pytest.raises(ValidationFailure, match="base_url"):
            pipe.run_stage("reflect")


# -- report and eval --------------------------------------------------------


def test_partial_report_after_reflect_only(tmp_path, cfg, bundled_corpus):
    with Pipeline(tmp_path / "run", cfg) as pipe:
        pipe.run_all(bundled_corpus / "manifest.jsonl", ("ingest", "reflect"))
        out = pipe.run_stage("report")
    assert out["sections"]["br_norm_histogram"] == "ok" and out["sections"]["pas_f1"] == "ok"
    for sec in ("difficulty_groups", "curves", "metrics"):
        assert out["sections"][sec].startswith("absent")
    summary = json.loads((tmp_path / "run" / "report" / "summary.json").read_text())
    assert summary["schema_version"] == 1 and "hard_fraction" not in summary
    assert not (tmp_path / "run" / "report" / "curves_masked.csv").exists()


def test_full_run_is_byte_identical(tmp_path, cfg, bundled_corpus):
    trees = []
    for name in ("r1", "r2"):
        with Pipeline(tmp_path / name, cfg) as pipe:
            pipe.run_all(bundled_corpus / "manifest.jsonl")
        root = tmp_path / name
        trees.append({str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and "logs" not in p.parts})
    assert trees[0] == trees[1]
    assert "report/curves_masked.csv" in trees[0] and "simulate/trace_unmasked.csv" in trees[0]
    assert (tmp_path / "r1" / "logs" / "run.log").exists()


def test_eval_with_predictions_and_rollouts(tmp_path, cfg):
    m = write_manifest(tmp_path / "m.jsonl", GOOD)
    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        "\n".join([
            json.dumps({"id": "a", "pred": [10, 20], "correct": True}),
            json.dumps({"id": "b", "raw": "<think></think><answer>0 to 5</answer>"}),
            json.dumps({"id": "c", "raw": "no answer"}),
        ]) + "\n"
    )
    rolls = tmp_path / "rollouts.jsonl"
    rolls.write_text(json.dumps({"sample_id": "a", "step": 0, "texts": [format_answer(TimeInterval(10, 20)), "bad"]}) + "\n")
    cfg = cfg.with_overrides({"oracle.world_path": None, "k": 2})
    with Pipeline(tmp_path / "run", cfg) as pipe:
        pipe.run_all(m, ("ingest", "estimate"))
        pipe.run_stage("eval", predictions=preds, rollouts=rolls)
        again = pipe.run_stage("eval", predictions=preds, rollouts=rolls)
    assert again.get("skipped")
    metrics = (tmp_path / "run" / "eval" / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "source,metric,threshold,value"
    row = next(line for line in metrics if line.startswith("predictions,mIoU"))
    # IoUs 1, 0.5 and 0 average to 0.5
    assert row.endswith(",0.5")
    steps = (tmp_path / "run" / "eval" / "rollout_steps.csv").read_text().splitlines()
    assert len(steps) == 2


def test_eval_rejects_unknown_prediction_ids(tmp_path, cfg):
    m = write_manifest(tmp_path / "m.jsonl", GOOD)
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"id": "zz", "pred": [1, 2]}) + "\n")
    with Pipeline(tmp_path / "run", cfg.with_overrides({"oracle.world_path": None})) as pipe:
        pipe.run_all(m, ("ingest", "estimate"))
        with pytest.raises(ValidationFailure, match="unknown sample"):
            pipe.run_stage("eval", predictions=preds)
