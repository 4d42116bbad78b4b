from __future__ import annotations

import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtgcurate.intervals import (
    DegenerateInputWarning,
    IntervalError,
    IntervalSet,
    TimeInterval,
    VideoTimeline,
    complement,
    interval_iou,
    iop,
    iou,
    normalize,
)

from .oracles import counting_iou


def S(*pairs):
    return IntervalSet(pairs)


# -- examples ---------------------------------------------------------------


def test_normalize_merges_overlap():
    assert normalize([(2, 5), (4, 8)], VideoTimeline(10)) == S((2, 8))


def test_normalize_identity():
    assert normalize([(0, 3)], VideoTimeline(10)) == S((0, 3))


def test_normalize_clips_to_timeline():
    assert normalize([(-1, 3), (9, 15)], VideoTimeline(10)) == S((0, 3), (9, 10))


def test_normalize_merges_touching_and_drops_zero_length():
    assert normalize([(2, 5), (5, 8), (9, 9)], VideoTimeline(10)) == S((2, 8))


def test_normalize_rejects_interval_outside_timeline_naming_sample():
    with pytest.raises(IntervalError, match="clip42"):
        normalize([(12, 15)], VideoTimeline(10), sample_id="clip42")


def test_time_interval_rejects_reversed():
    with pytest.raises(IntervalError):
        TimeInterval(5, 3)


@pytest.mark.parametrize(
    "gt, expected",
    [(((20, 30),), [[0, 20], [30, 60]]), ((), [[0, 60]]), (((0, 60),), [])],
)
def test_complement_examples(gt, expected):
    assert complement(IntervalSet(gt), VideoTimeline(60)).to_list() == expected


def test_iou_examples():
    assert iou(S((0, 10)), S((0, 10))) == 1.0
    assert iou(S((0, 10)), S((5, 15))) == pytest.approx(5 / 15)


def test_iou_multi_segment_against_counting_oracle():
    a, b = [(0, 4), (10, 14)], [(2, 12)]
    assert iou(IntervalSet(a), IntervalSet(b)) == pytest.approx(4 / 14)
    assert counting_iou(a, b, 20.0) == pytest.approx(4 / 14, abs=2e-3)


def test_iou_two_empty_sets_is_zero_with_warning():
    with pytest.warns(DegenerateInputWarning):
        assert iou(IntervalSet(), IntervalSet()) == 0.0


def test_iou_one_empty_set_is_zero_without_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert iou(S((0, 1)), IntervalSet()) == 0.0


def test_iop_examples():
    assert iop(S((0, 5)), S((0, 10))) == 1.0
    assert iop(S((0, 10)), S((0, 5))) == 0.5
    assert iop(S((0, 1)), S((2, 3))) == 0.0


def test_iop_empty_prediction_raises():
    with pytest.raises(IntervalError):
        iop(IntervalSet(), S((0, 1)))


def test_interval_iou_matches_set_iou():
    assert interval_iou(TimeInterval(0, 10), TimeInterval(5, 15)) == iou(S((0, 10)), S((5, 15)))


def test_set_algebra():
    a, b = S((0, 4), (10, 14)), S((2, 12))
    assert a.intersection(b) == S((2, 4), (10, 12))
    assert a.union(b) == S((0, 14))
    assert a.difference(b) == S((0, 2), (12, 14))
    assert a.hull() == TimeInterval(0, 14)
    assert S((2, 3)).issubset(b) and not a.issubset(b)


# -- properties -------------------------------------------------------------

DURATION = 50.0
coords = st.floats(min_value=-5.0, max_value=55.0, allow_nan=False)
raw_intervals = st.lists(st.tuples(coords, coords).map(lambda p: (min(p), max(p))), max_size=6)


def canon(raw):
    tl = VideoTimeline(DURATION)
    kept = [(s, e) for s, e in raw if e > 0 and s < DURATION]
    return normalize(kept, tl)


@given(raw_intervals)
def test_normalize_idempotent(raw):
    s = canon(raw)
    assert normalize(list(s), VideoTimeline(DURATION)) == s


@given(raw_intervals)
def test_canonical_form(raw):
    ivs = canon(raw).intervals
    assert all(iv.duration > 0 for iv in ivs)
    assert all(a.end < b.start for a, b in zip(ivs, ivs[1:]))


@given(raw_intervals)
def test_complement_involution_and_measure(raw):
    tl = VideoTimeline(DURATION)
    s = canon(raw)
    c = complement(s, tl)
    assert complement(c, tl) == s
    assert s.total_duration() + c.total_duration() == pytest.approx(DURATION, rel=1e-9)
    assert s.intersection_measure(c) == 0.0


@given(raw_intervals, raw_intervals)
def test_iou_symmetric_and_bounded(ra, rb):
    a, b = canon(ra), canon(rb)
    if not a and not b:
        return
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)


@given(raw_intervals)
def test_iou_one_iff_identical(raw):
    a = canon(raw)
    if a:
        assert iou(a, a) == 1.0
        shrunk = IntervalSet([TimeInterval(iv.start, iv.start + iv.duration / 2) for iv in a])
        assert iou(a, shrunk) < 1.0


@settings(max_examples=300)
@given(raw_intervals, raw_intervals)
def test_iou_matches_counting_oracle(ra, rb):
    a, b = canon(ra), canon(rb)
    if not a and not b:
        return
    # at 1 ms resolution each boundary can miscount half a cell
    if a.union(b).total_duration() < 0.5:
        return
    assert iou(a, b) == pytest.approx(counting_iou(a.to_list(), b.to_list(), DURATION), abs=2e-3)


def test_interval_set_is_hashable_and_immutable():
    a = S((0, 1))
    assert {a: 1}[S((0, 1))] == 1
    with pytest.raises(AttributeError):
        a.foo = 1  # type: ignore[attr-defined]


def test_shift_round_trip_is_exact_on_grid():
    a = S((20.125, 30.5))
    assert a.shift(-(2.0**-10) * 7).shift(2.0**-10 * 7) == a
