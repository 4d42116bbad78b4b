"""Append-only response cache keyed by request hash."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from ..intervals import TimeInterval
from .types import OracleResponse, ParseFailure, Parsed


def _encode_parsed(p: Parsed):
    if isinstance(p, ParseFailure):
        return p.to_json()
    if isinstance(p, TimeInterval):
        return p.to_list()
    return p


def _decode_parsed(v) -> Parsed:
    if isinstance(v, dict):
        return ParseFailure(v["parse_failure"])
    if isinstance(v, list):
        return TimeInterval(float(v[0]), float(v[1]))
    return float(v)


def response_to_json(resp: OracleResponse) -> dict:
    return {
        "raw_texts": list(resp.raw_texts),
        "parsed": [_encode_parsed(p) for p in resp.parsed],
        "latency_ms": resp.latency_ms,
        "backend_id": resp.backend_id,
        "answer_forms": list(resp.answer_forms),
    }


def response_from_json(d: dict, cached: bool = True) -> OracleResponse:
    return OracleResponse(
        raw_texts=tuple(d["raw_texts"]),
        parsed=tuple(_decode_parsed(v) for v in d["parsed"]),
        latency_ms=float(d["latency_ms"]),
        backend_id=d["backend_id"],
        answer_forms=tuple(d.get("answer_forms", ())),
        cached=cached,
    )


class ResponseCache:
    """In-memory map mirrored to an optional JSONL file.

    Records are only ever appended; on load the last record for a key wins.
    Safe for concurrent readers and writers within one process.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # a torn final line from an interrupted run
                        continue
                    self._entries[rec["key"]] = rec["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> Optional[OracleResponse]:
        with self._lock:
            d = self._entries.get(key)
        return None if d is None else response_from_json(d)

    def put(self, key: str, resp: OracleResponse) -> None:
        d = response_to_json(resp)
        with self._lock:
            self._entries[key] = d
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "response": d}, sort_keys=True) + "\n")
