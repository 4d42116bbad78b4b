"""Prompt construction from versioned template assets."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources
from string import Template

from ..data import Sample
from ..intervals import IntervalSet, complement
from .types import Prompt

BOUNDARY_TEMPLATE = "boundary_reflection_v1"
GROUNDING_TEMPLATE = "grounding_v1"


class PromptError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_template(template_id: str) -> tuple[Template, str]:
    text = resources.files("vtgcurate.oracle").joinpath("templates", f"{template_id}.txt").read_text(encoding="utf-8")
    return Template(text), hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(x: float) -> str:
    return f"{x:.1f}"


def _ranges(s: IntervalSet) -> str:
    return ", ".join(f"[{_fmt(iv.start)}s, {_fmt(iv.end)}s]" for iv in s)


def render(template_id: str, slots: dict[str, str]) -> Prompt:
    template, digest = load_template(template_id)
    text = template.substitute(slots)
    return Prompt(template_id, digest, tuple(sorted(slots.items())), text)


def build_boundary_prompt(
    sample: Sample,
    removed: IntervalSet,
    subclips: IntervalSet,
    template_id: str = BOUNDARY_TEMPLATE,
) -> Prompt:
    """Fill the boundary-reflection template with timestamp metadata for ``sample``."""
    if not sample.query or not sample.query.strip():
        raise PromptError(f"sample {sample.id!r} has no query")
    if not removed:
        raise PromptError(f"sample {sample.id!r}: nothing was removed, boundary reflection is inapplicable")
    if subclips != complement(removed, sample.timeline):
        raise PromptError(f"sample {sample.id!r}: subclips are not the complement of the removed segments")
    subclip_lines = "\n".join(
        f"  subclip {i + 1}: {_fmt(iv.start)}s to {_fmt(iv.end)}s" for i, iv in enumerate(subclips)
    )
    return render(
        template_id,
        {
            "duration": _fmt(sample.duration),
            "removed": _ranges(removed),
            "n_subclips": str(len(subclips)),
            "subclips": subclip_lines,
            "query": sample.query.strip(),
        },
    )


def build_grounding_prompt(sample: Sample, duration: float | None = None, template_id: str = GROUNDING_TEMPLATE) -> Prompt:
    if not sample.query or not sample.query.strip():
        raise PromptError(f"sample {sample.id!r} has no query")
    return render(
        template_id,
        {"duration": _fmt(sample.duration if duration is None else duration), "query": sample.query.strip()},
    )
