"""Lenient parsers for free-form grounder answers.

Boundary-reflection answers may be a scalar duration or a list of segments; the
form that matched is returned alongside the value so callers can log it.
"""

from __future__ import annotations

import re

from ..intervals import TimeInterval
from .types import ParseFailure

_NUM = r"(\d+(?:\.\d+)?)"
_DURATION = re.compile(r"duration\s*(?:is|of|:|=)?\s*(?:about|approximately|~)?\s*" + _NUM, re.IGNORECASE)
_PAIR = re.compile(_NUM + r"\s*(?:s|sec|seconds)?\s*(?:-|\u2013|to|,)\s*" + _NUM)
_ANSWER = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)
_ANY_NUM = re.compile(_NUM)
_NONE = re.compile(r"\b(none|no relevant|not present|does not (?:occur|appear|happen))\b", re.IGNORECASE)


def parse_duration(text: str) -> tuple[float | ParseFailure, str]:
    """Return ``(seconds, form)`` where form is ``scalar``, ``segments`` or ``failure``."""
    m = _DURATION.search(text)
    if m:
        return float(m.group(1)), "scalar"
    pairs = _PAIR.findall(text)
    if pairs:
        total = 0.0
        for a, b in pairs:
            start, end = float(a), float(b)
            if start > end:
                return ParseFailure(f"segment {start:g} > {end:g}"), "failure"
            total += end - start
        return total, "segments"
    nums = _ANY_NUM.findall(text)
    if len(nums) == 1:
        return float(nums[0]), "scalar"
    if not nums and _NONE.search(text):
        return 0.0, "scalar"
    return ParseFailure("no duration found"), "failure"


def parse_interval(text: str, bounds: TimeInterval | None = None) -> TimeInterval | ParseFailure:
    """Extract one ``start to end`` prediction, clipped to ``bounds`` when given."""
    m = _ANSWER.search(text)
    body = m.group(1) if m else text
    pair = _PAIR.search(body)
    if pair is None:
        return ParseFailure("no start/end pair found")
    start, end = float(pair.group(1)), float(pair.group(2))
    if start > end:
        return ParseFailure(f"start {start:g} > end {end:g}")
    if bounds is not None:
        if end <= bounds.start or start >= bounds.end:
            return ParseFailure("prediction lies outside the clip")
        start, end = max(start, bounds.start), min(end, bounds.end)
    return TimeInterval(start, end)
