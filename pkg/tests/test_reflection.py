from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vtgcurate.intervals import IntervalSet
from vtgcurate.oracle import GrounderOracle, OracleResponse, SimTruth, SimulatedGrounder, SimulatedGrounderConfig
from vtgcurate.reflection import (
    STATUS_PARSE_FAILURE,
    BoundaryReflectionAgent,
    CurationError,
    ReflectionRecord,
    br_norm_histogram,
    evaluate_pas_f1,
    filter_records,
    make_record,
    reflect,
    retained_pool,
)
from vtgcurate.synthetic import make_corpus

from .conftest import make_sample


def rec(sid, br_norm, tag="", status="ok", tau=0.0):
    br = None if br_norm is None else br_norm * 10.0
    return ReflectionRecord(sid, br, br_norm, 10.0, br_norm is not None and br_norm > tau, "b", status, tag)


class FixedReply:
    backend_id = "fixed"

    def __init__(self, text):
        self.text = text

    def generate(self, request):
        return [self.text]


def test_br_norm_arithmetic():
    s = make_sample(gt=((10, 18),))
    r = reflect(s, GrounderOracle(FixedReply("relevant duration: 4.0 seconds")))
    assert r.br == 4.0 and r.br_norm == 0.5 and r.is_pas
    assert r.annotated_duration == 8.0


def test_zero_br_is_clean_at_tau_zero(sample):
    r = reflect(sample, GrounderOracle(FixedReply("relevant duration: 0 seconds")), tau=0.0)
    assert r.br_norm == 0.0 and not r.is_pas


def test_planted_duplicate_event():
    s = make_sample(duration=90, gt=((20, 30),))
    world = {s.id: SimTruth(s.gt, IntervalSet([(60, 65)]))}
    r = reflect(s, GrounderOracle(SimulatedGrounder(SimulatedGrounderConfig(), world)))
    assert r.br == pytest.approx(5.0) and r.br_norm == pytest.approx(0.5) and r.is_pas


def test_fully_annotated_sample_needs_no_query():
    s = make_sample(gt=((0, 60),))
    backend = FixedReply("should not be asked")
    oracle = GrounderOracle(backend)
    r = reflect(s, oracle)
    assert (r.br, r.br_norm, r.is_pas) == (0.0, 0.0, False)
    assert oracle.transport_calls == 0


def test_parse_failure_excluded(sample):
    r = reflect(sample, GrounderOracle(FixedReply("no idea"), parse_retries=0))
    assert r.status == STATUS_PARSE_FAILURE and r.br is None and not r.usable
    assert retained_pool([r]) == []


def test_multi_segment_gt_uses_total_duration():
    s = make_sample(gt=((5, 10), (40, 45)))
    r = reflect(s, GrounderOracle(FixedReply("relevant duration: 5 seconds")))
    assert r.annotated_duration == 10.0 and r.br_norm == 0.5


@given(st.floats(0.1, 50), st.floats(0.5, 20), st.floats(0.5, 20))
def test_br_norm_strictly_decreasing_in_gt_length(br, g1, g2):
    if g1 == g2:
        return
    short, long = sorted((g1, g2))
    resp = OracleResponse(("",), (br,), 0.0, "b", ("scalar",))
    a = make_record(make_sample(gt=((0, short),)), resp, 0.0, "b")
    b = make_record(make_sample(gt=((0, long),)), resp, 0.0, "b")
    assert a.br_norm > b.br_norm


# -- filter -----------------------------------------------------------------


def corpus(n_pas=40, n=100):
    return [rec(f"r{i:03d}", 0.5 if i < n_pas else 0.0) for i in range(n)]


def test_filter_counts_and_purity():
    records = corpus()
    ids = filter_records(records, 50, rng_seed=3)
    assert len(ids) == 50 and len(set(ids)) == 50
    clean = {r.sample_id for r in records if not r.is_pas}
    assert set(ids) <= clean


def test_filter_zero_target():
    assert filter_records(corpus(), 0) == []


def test_filter_deterministic_and_seed_sensitive():
    records = corpus()
    assert filter_records(records, 30, 7) == filter_records(records, 30, 7)
    assert filter_records(records, 30, 7) != filter_records(records, 30, 8)


def test_filter_shortfall_error():
    with pytest.raises(CurationError, match="shortfall 1"):
        filter_records(corpus(), 61)


def test_filter_is_uniform_over_clean_pool():
    records = corpus(n_pas=40, n=100)
    counts = {}
    for seed in range(400):
        for sid in filter_records(records, 10, seed):
            counts[sid] = counts.get(sid, 0) + 1
    freq = np.array([counts.get(r.sample_id, 0) for r in records if not r.is_pas]) / 400
    assert np.allclose(freq, 10 / 60, atol=0.06)


@given(st.lists(st.floats(0, 20), min_size=1, max_size=40), st.floats(0, 10), st.floats(0, 10))
def test_retained_pool_monotone_in_tau(values, t1, t2):
    records = [rec(f"r{i}", v) for i, v in enumerate(values)]
    lo, hi = sorted((t1, t2))
    assert set(retained_pool(records, lo)) <= set(retained_pool(records, hi))


# -- F1 ---------------------------------------------------------------------


def test_f1_perfect():
    records = [rec("a", 1.0), rec("b", 0.0)]
    assert evaluate_pas_f1(records, {"a": True, "b": False}).f1 == 1.0


def test_f1_all_negative_predictions():
    records = [rec("a", 0.0), rec("b", 0.0)]
    s = evaluate_pas_f1(records, {"a": True, "b": False})
    assert s.precision is None and s.recall == 0.0 and s.f1 == 0.0


def test_f1_hand_enumerated_confusion_table():
    # 10 samples: tp=6, fp=2, fn=2, tn=0
    flags = [True] * 6 + [True] * 2 + [False] * 2
    labels = [True] * 6 + [False] * 2 + [True] * 2
    records = [rec(f"x{i}", 1.0 if f else 0.0) for i, f in enumerate(flags)]
    s = evaluate_pas_f1(records, {f"x{i}": v for i, v in enumerate(labels)})
    assert (s.tp, s.fp, s.fn, s.tn) == (6, 2, 2, 0)
    assert s.precision == 0.75 and s.recall == 0.75 and s.f1 == 0.75


def test_f1_without_positive_labels_raises():
    with pytest.raises(ValueError, match="undefined"):
        evaluate_pas_f1([rec("a", 0.0)], {"a": False})


def test_f1_unknown_label_id_raises():
    with pytest.raises(KeyError):
        evaluate_pas_f1([rec("a", 0.0)], {"zz": True})


# -- histogram --------------------------------------------------------------


def test_histogram_all_zero_spike():
    h = br_norm_histogram([rec("a", 0.0), rec("b", 0.0)], [0, 1, float("inf")])
    assert h.counts["ALL"] == (2, 0, 0)
    assert h.pas_fraction["ALL"] == 0.0


def test_histogram_binning():
    h = br_norm_histogram([rec("a", 0.0), rec("b", 0.5), rec("c", 1.5)], [0, 1, float("inf")])
    assert h.bin_labels == ("0", "(0, 1]", "(1, inf]")
    assert h.counts["ALL"] == (1, 1, 1)


def test_histogram_overflow_and_per_dataset():
    records = [rec("a", 0.0, "x"), rec("b", 3.0, "x"), rec("c", 0.2, "y"), rec("d", None, "y", STATUS_PARSE_FAILURE)]
    h = br_norm_histogram(records, [0, 1, 2])
    assert h.bin_labels[-1] == "> 2"
    assert h.counts["x"] == (1, 0, 0, 1) and h.counts["y"] == (0, 1, 0, 0)
    assert h.pas_fraction == {"ALL": pytest.approx(2 / 3), "x": 0.5, "y": 1.0}


@pytest.mark.parametrize("edges", [[], [1], [0, 0], [2, 1]])
def test_histogram_bad_edges(edges):
    with pytest.raises(ValueError):
        br_norm_histogram([rec("a", 0.0)], edges)


def test_histogram_planted_rate():
    c = make_corpus(400, seed=5, pas_rate=0.4)
    agent = BoundaryReflectionAgent(GrounderOracle(SimulatedGrounder(SimulatedGrounderConfig(), c.world)))
    agent.fit(c.samples)
    planted = np.mean(list(c.pas_labels.values()))
    frac = br_norm_histogram(agent.records_, [0, 1, float("inf")]).pas_fraction["ALL"]
    assert frac == pytest.approx(planted, abs=1e-12)
    assert abs(planted - 0.4) < 0.08


# -- estimator --------------------------------------------------------------


def test_agent_estimator_api():
    c = make_corpus(30, seed=1)
    oracle = GrounderOracle(SimulatedGrounder(SimulatedGrounderConfig(), c.world))
    agent = BoundaryReflectionAgent(oracle, tau=0.0).fit(c.samples)
    flags = agent.predict(c.samples)
    assert flags.dtype == bool and len(flags) == 30
    kept = agent.transform(c.samples)
    assert {s.id for s in kept} == {s.id for s, f in zip(c.samples, flags) if not f}
    labels = [c.pas_labels[s.id] for s in c.samples]
    assert agent.score(c.samples, labels) == 1.0
