"""Boundary reflection: find samples whose query also happens outside the annotation.

The annotated segments are cut out, the grounder is asked how much query-relevant
footage remains, and that duration is normalised by the annotated duration::

    br_norm = br / |gt|

Samples with ``br_norm > tau`` are flagged as partially annotated (PAS) and
removed before the curated subset is drawn.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .data import Sample
from .intervals import complement
from .oracle import (
    ClipSpec,
    GrounderOracle,
    OracleMode,
    OracleRequest,
    OracleResponse,
    ParseFailure,
    SamplingHint,
    build_boundary_prompt,
)
from .oracle.prompts import BOUNDARY_TEMPLATE
from .validation import check_is_fitted, check_samples, check_threshold

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_PARSE_FAILURE = "parse_failure"


class CurationError(ValueError):
    """The clean pool cannot satisfy the requested curation."""


@dataclass(frozen=True)
class ReflectionRecord:
    sample_id: str
    br: Optional[float]
    br_norm: Optional[float]
    annotated_duration: float
    is_pas: bool
    backend_id: str
    status: str = STATUS_OK
    dataset_tag: str = ""
    answer_form: str = ""
    note: str = ""

    @property
    def usable(self) -> bool:
        return self.status == STATUS_OK

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: Mapping) -> "ReflectionRecord":
        return cls(**rec)


def boundary_request(sample: Sample, hint: SamplingHint | None = None, template_id: str = BOUNDARY_TEMPLATE) -> Optional[OracleRequest]:
    """Request showing only the unannotated footage, or None if there is none."""
    subclips = complement(sample.gt, sample.timeline)
    if not subclips:
        return None
    clip = ClipSpec(sample.video_uri, subclips, sample.timeline, hint or SamplingHint())
    prompt = build_boundary_prompt(sample, sample.gt, subclips, template_id=template_id)
    return OracleRequest(sample.id, clip, prompt, OracleMode.BOUNDARY_REFLECTION, 1)


def make_record(sample: Sample, response: OracleResponse | None, tau: float, backend_id: str) -> ReflectionRecord:
    annotated = sample.gt.total_duration()
    common = dict(sample_id=sample.id, annotated_duration=annotated, backend_id=backend_id, dataset_tag=sample.dataset_tag)
    if response is None:
        logger.info("sample %s is fully annotated; nothing to reflect on", sample.id)
        return ReflectionRecord(br=0.0, br_norm=0.0, is_pas=False, note="fully annotated", **common)
    value = response.parsed[0]
    if isinstance(value, ParseFailure):
        logger.warning("sample %s excluded from curation: %s", sample.id, value.reason)
        return ReflectionRecord(
            br=None, br_norm=None, is_pas=False, status=STATUS_PARSE_FAILURE,
            answer_form="failure", note=value.reason, **common,
        )
    br = float(value)
    br_norm = br / annotated
    return ReflectionRecord(
        br=br, br_norm=br_norm, is_pas=br_norm > tau,
        answer_form=response.answer_forms[0] if response.answer_forms else "", **common,
    )


def reflect(sample: Sample, oracle: GrounderOracle, tau: float = 0.0, hint: SamplingHint | None = None) -> ReflectionRecord:
    request = boundary_request(sample, hint)
    response = None if request is None else oracle.query(request)
    return make_record(sample, response, tau, oracle.backend_id)


def retained_pool(records: Iterable[ReflectionRecord], tau: float | None = None) -> list[str]:
    """Ids of usable, non-PAS records; ``tau`` re-thresholds stored ``br_norm``."""
    out = []
    for r in records:
        if not r.usable:
            continue
        flagged = r.is_pas if tau is None else r.br_norm > tau
        if not flagged:
            out.append(r.sample_id)
    return out


def filter_records(
    records: Sequence[ReflectionRecord],
    target_size: int,
    rng_seed: int = 0,
    tau: float | None = None,
) -> list[str]:
    """Draw ``target_size`` ids uniformly without replacement from the clean pool."""
    if target_size < 0:
        raise ValueError("target_size must be non-negative")
    pool = sorted(retained_pool(records, tau))
    if target_size > len(pool):
        raise CurationError(
            f"clean pool holds {len(pool)} samples but {target_size} were requested "
            f"(shortfall {target_size - len(pool)})"
        )
    rng = np.random.default_rng(rng_seed)
    picked = rng.choice(len(pool), size=target_size, replace=False)
    return sorted(pool[i] for i in picked)


@dataclass(frozen=True)
class PasScores:
    precision: Optional[float]
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def evaluate_pas_f1(records: Iterable[ReflectionRecord], labels: Mapping[str, bool]) -> PasScores:
    """Binary P/R/F1 of the PAS flag against manual labels.

    ``precision`` is None when nothing was flagged. A label set without any
    positives raises, because recall would be undefined.
    """
    by_id = {r.sample_id: r for r in records}
    missing = [sid for sid in labels if sid not in by_id]
    if missing:
        raise KeyError(f"labels reference samples without a record: {missing[:5]}")
    if not any(labels.values()):
        raise ValueError("label set has no positive (PAS) samples; recall is undefined")
    tp = fp = fn = tn = 0
    for sid, truth in labels.items():
        pred = by_id[sid].is_pas
        if pred and truth:
            tp += 1
        elif pred:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn)
    f1 = 2 * tp / (2 * tp + fp + fn)
    return PasScores(precision, recall, f1, tp, fp, fn, tn)


@dataclass(frozen=True)
class HistogramTable:
    bin_labels: tuple[str, ...]
    counts: dict[str, tuple[int, ...]]
    pas_fraction: dict[str, float]

    def rows(self) -> list[dict]:
        out = []
        for tag in self.counts:
            for label, count in zip(self.bin_labels, self.counts[tag]):
                out.append({"dataset": tag, "bin": label, "count": count})
        return out

    def fraction_rows(self) -> list[dict]:
        return [{"dataset": tag, "pas_fraction": frac} for tag, frac in self.pas_fraction.items()]


def _edge(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


def br_norm_histogram(records: Iterable[ReflectionRecord], bin_edges: Sequence[float]) -> HistogramTable:
    """Per-dataset ``br_norm`` histogram with a dedicated exactly-zero bin.

    Bins are ``{0}``, then ``(e0, e1], (e1, e2], ...``; values above a finite last
    edge land in an overflow bin. The ``ALL`` row pools every dataset.
    """
    edges = [float(e) for e in bin_edges]
    if len(edges) < 2:
        raise ValueError("bin specification needs at least two edges")
    if any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] < 0:
        raise ValueError("bin edges must be non-negative and strictly increasing")
    recs = [r for r in records if r.usable]
    if not recs:
        raise ValueError("no usable reflection records to histogram")
    labels = ["0"] + [f"({_edge(a)}, {_edge(b)}]" for a, b in zip(edges, edges[1:])]
    overflow = not math.isinf(edges[-1])
    if overflow:
        labels.append(f"> {_edge(edges[-1])}")

    def bin_of(v: float) -> int:
        if v == 0.0:
            return 0
        idx = int(np.searchsorted(edges, v, side="left"))
        # v <= edges[0] but nonzero only happens when edges[0] > 0
        return max(idx, 1)

    groups: dict[str, list[float]] = {"ALL": []}
    for r in sorted(recs, key=lambda r: r.dataset_tag):
        groups.setdefault(r.dataset_tag or "unknown", []).append(r.br_norm)
        groups["ALL"].append(r.br_norm)
    counts, fractions = {}, {}
    for tag, values in groups.items():
        c = [0] * len(labels)
        for v in values:
            c[min(bin_of(v), len(labels) - 1)] += 1
        counts[tag] = tuple(c)
        fractions[tag] = float(np.mean([v > 0 for v in values]))
    return HistogramTable(tuple(labels), counts, fractions)


class BoundaryReflectionAgent(BaseEstimator):
    """Estimator wrapper around :func:`reflect`.

    ``fit`` queries the oracle for every sample and stores ``records_``;
    ``predict`` returns the PAS flag; ``transform`` drops PAS and unparseable samples.
    """

    def __init__(self, oracle: GrounderOracle | None = None, tau: float = 0.0, fps: float = 2.0, max_frames: int = 384):
        self.oracle = oracle
        self.tau = tau
        self.fps = fps
        self.max_frames = max_frames

    def _reflect_all(self, samples: list[Sample]) -> list[ReflectionRecord]:
        if self.oracle is None:
            raise ValueError("BoundaryReflectionAgent needs an oracle")
        hint = SamplingHint(self.fps, self.max_frames)
        requests = [boundary_request(s, hint) for s in samples]
        live = [r for r in requests if r is not None]
        responses = iter(self.oracle.query_many(live))
        return [
            make_record(s, None if req is None else next(responses), self.tau, self.oracle.backend_id)
            for s, req in zip(samples, requests)
        ]

    def fit(self, X, y=None):
        check_threshold(self.tau, "tau", upper=None)
        samples = check_samples(X)
        self.records_ = self._reflect_all(samples)
        self.record_index_ = {r.sample_id: r for r in self.records_}
        return self

    def _records_for(self, samples: list[Sample]) -> list[ReflectionRecord]:
        check_is_fitted(self, "records_")
        missing = [s for s in samples if s.id not in self.record_index_]
        extra = {r.sample_id: r for r in self._reflect_all(missing)} if missing else {}
        return [self.record_index_.get(s.id) or extra[s.id] for s in samples]

    def predict(self, X) -> np.ndarray:
        return np.array([r.is_pas for r in self._records_for(check_samples(X))], dtype=bool)

    def transform(self, X) -> list[Sample]:
        samples = check_samples(X)
        records = self._records_for(samples)
        return [s for s, r in zip(samples, records) if r.usable and not r.is_pas]

    def score(self, X, y) -> float:
        samples = check_samples(X)
        labels = {s.id: bool(v) for s, v in zip(samples, y)}
        return evaluate_pas_f1(self._records_for(samples), labels).f1
