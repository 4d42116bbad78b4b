"""Input validation helpers for the estimator classes."""

from __future__ import annotations

import numbers
from typing import Any, Iterable, Mapping

from sklearn.utils.validation import check_is_fitted as _sk_check_is_fitted

from .data import Sample


def check_samples(X: Iterable[Any]) -> list[Sample]:
    """Accept Samples or manifest-style dicts; return a list of Samples with unique ids."""
    if isinstance(X, (Sample, Mapping, str)):
        raise TypeError("expected an iterable of samples, got a single item")
    out = [x if isinstance(x, Sample) else Sample.from_record(x) for x in X]
    seen: set[str] = set()
    for s in out:
        if s.id in seen:
            raise ValueError(f"duplicate sample id {s.id!r}")
        seen.add(s.id)
    return out


def check_threshold(value: Any, name: str, lower: float = 0.0, upper: float | None = 1.0) -> float:
    if not isinstance(value, numbers.Real) or value != value:
        raise TypeError(f"{name} must be a real number, got {value!r}")
    if value < lower or (upper is not None and value > upper):
        hi = "inf" if upper is None else upper
        raise ValueError(f"{name}={value} outside [{lower}, {hi}]")
    return float(value)


def check_positive_int(value: Any, name: str) -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_is_fitted(estimator: Any, attribute: str) -> None:
    _sk_check_is_fitted(estimator, attribute)
