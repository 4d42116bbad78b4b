"""Request/response types shared by every grounder backend."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from ..intervals import IntervalError, IntervalSet, TimeInterval, VideoTimeline

DEFAULT_FPS = 2.0
DEFAULT_MAX_FRAMES = 384


class OracleMode(str, Enum):
    BOUNDARY_REFLECTION = "boundary_reflection"
    GROUNDING = "grounding"


class OracleError(RuntimeError):
    """Base class for oracle failures."""


class TransportError(OracleError):
    """A backend call failed in transit; safe to retry."""


@dataclass(frozen=True)
class ParseFailure:
    """Marker for a backend answer that could not be parsed."""

    reason: str

    def to_json(self) -> dict:
        return {"parse_failure": self.reason}


Parsed = Union[float, TimeInterval, ParseFailure]


@dataclass(frozen=True)
class SamplingHint:
    fps: float = DEFAULT_FPS
    max_frames: int = DEFAULT_MAX_FRAMES


@dataclass(frozen=True)
class ClipSpec:
    """The footage a backend is allowed to look at, in original-video seconds."""

    video_uri: str
    subclips: IntervalSet
    timeline: VideoTimeline
    sampling_hint: SamplingHint = field(default_factory=SamplingHint)

    def __post_init__(self) -> None:
        if not self.subclips:
            raise IntervalError("clip must contain at least one subclip")
        if self.subclips.start < 0 or self.subclips.end > self.timeline.duration:
            raise IntervalError("subclips exceed the video timeline")

    def to_json(self) -> dict:
        return {
            "video_uri": self.video_uri,
            "duration": self.timeline.duration,
            "subclips": self.subclips.to_list(),
            "fps": self.sampling_hint.fps,
            "max_frames": self.sampling_hint.max_frames,
        }


@dataclass(frozen=True)
class Prompt:
    template_id: str
    template_hash: str
    slots: tuple[tuple[str, str], ...]
    text: str

    @property
    def hash(self) -> str:
        payload = json.dumps([self.template_id, self.template_hash, self.text])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class OracleRequest:
    sample_id: str
    clip: ClipSpec
    prompt: Prompt
    mode: OracleMode
    n_outputs: int = 1

    def __post_init__(self) -> None:
        if self.n_outputs < 1:
            raise ValueError("n_outputs must be >= 1")
        if self.mode is OracleMode.BOUNDARY_REFLECTION and self.n_outputs != 1:
            raise ValueError("boundary reflection requests take exactly one output")

    def cache_key(self, backend_id: str) -> str:
        payload = json.dumps(
            [self.sample_id, self.mode.value, backend_id, self.prompt.hash, self.n_outputs, self.clip.to_json()],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class OracleResponse:
    raw_texts: tuple[str, ...]
    parsed: tuple[Parsed, ...]
    latency_ms: float
    backend_id: str
    answer_forms: tuple[str, ...] = ()
    cached: bool = field(default=False, compare=False)

    @property
    def ok(self) -> list[bool]:
        return [not isinstance(p, ParseFailure) for p in self.parsed]
