"""Pluggable grounder oracle: a seeded simulator and a chat-completions HTTP backend."""

from .cache import ResponseCache
from .client import GrounderOracle
from .prompts import PromptError, build_boundary_prompt, build_grounding_prompt
from .remote import RemoteGrounder
from .simulator import SimTruth, SimulatedGrounder, SimulatedGrounderConfig, simulate_prediction
from .types import (
    ClipSpec,
    OracleError,
    OracleMode,
    OracleRequest,
    OracleResponse,
    ParseFailure,
    Prompt,
    SamplingHint,
    TransportError,
)

__all__ = [
    "ClipSpec",
    "GrounderOracle",
    "OracleError",
    "OracleMode",
    "OracleRequest",
    "OracleResponse",
    "ParseFailure",
    "Prompt",
    "PromptError",
    "RemoteGrounder",
    "ResponseCache",
    "SamplingHint",
    "SimTruth",
    "SimulatedGrounder",
    "SimulatedGrounderConfig",
    "TransportError",
    "build_boundary_prompt",
    "build_grounding_prompt",
    "simulate_prediction",
]
