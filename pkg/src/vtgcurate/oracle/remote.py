"""Chat-completions style HTTP backend.

The clip travels as a video URI plus subclip timestamps; frame extraction is
the server's job.
"""

from __future__ import annotations

import hashlib
import os
from typing import Optional

import httpx

from .types import OracleError, OracleMode, OracleRequest, TransportError

DEFAULT_TOKEN_ENV = "VTGCURATE_API_TOKEN"


class RemoteGrounder:
    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 120.0,
        temperature: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        headers = {}
        token = os.environ.get(token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        digest = hashlib.sha256(f"{self.base_url}|{model}|{temperature}".encode()).hexdigest()[:12]
        self.backend_id = f"remote-{digest}"

    def close(self) -> None:
        self._client.close()

    def payload(self, request: OracleRequest) -> dict:
        clip = request.clip
        video = {
            "type": "video",
            "video": clip.video_uri,
            "subclips": clip.subclips.to_list(),
            "fps": clip.sampling_hint.fps,
            "max_frames": clip.sampling_hint.max_frames,
        }
        greedy = request.mode is OracleMode.BOUNDARY_REFLECTION
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": [video, {"type": "text", "text": request.prompt.text}]}],
            "n": request.n_outputs,
            # top-k grounding needs diverse samples; reflection is a single greedy answer
            "temperature": 0.0 if greedy else self.temperature,
        }

    def generate(self, request: OracleRequest) -> list[str]:
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=self.payload(request))
        except httpx.TransportError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"server returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise OracleError(f"request rejected with HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            choices = resp.json()["choices"]
            texts = [c["message"]["content"] or "" for c in choices]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed response body: {exc}") from exc
        return texts
