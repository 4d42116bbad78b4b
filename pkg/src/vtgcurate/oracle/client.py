"""Caching, retrying, parsing front-end shared by all backends."""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Protocol

from .cache import ResponseCache
from .parsing import parse_duration, parse_interval
from .types import OracleMode, OracleRequest, OracleResponse, ParseFailure, TransportError

logger = logging.getLogger(__name__)


class Backend(Protocol):
    backend_id: str

    def generate(self, request: OracleRequest) -> list[str]: ...


class GrounderOracle:
    """Front-end that turns raw backend text into parsed durations or intervals.

    Parameters
    ----------
    backend : object with ``backend_id`` and ``generate(request) -> list[str]``
    cache : ResponseCache, optional
        Responses are keyed by (sample id, mode, backend id, prompt hash).
    max_retries : int
        Extra attempts after a :class:`TransportError`.
    parse_retries : int
        Extra attempts when every output of a call fails to parse.
    max_workers : int
        In-flight limit for :meth:`query_many`.
    """

    def __init__(
        self,
        backend: Backend,
        cache: Optional[ResponseCache] = None,
        *,
        max_retries: int = 3,
        parse_retries: int = 1,
        backoff_s: float = 0.5,
        max_workers: int = 4,
    ) -> None:
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.max_retries = max_retries
        self.parse_retries = parse_retries
        self.backoff_s = backoff_s
        self.max_workers = max_workers
        self._calls_lock = threading.Lock()
        self.transport_calls = 0

    def __deepcopy__(self, memo) -> "GrounderOracle":
        # a handle on a shared service and cache; sklearn.clone should share it
        return self

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def _call(self, request: OracleRequest) -> list[str]:
        for attempt in range(self.max_retries + 1):
            with self._calls_lock:
                self.transport_calls += 1
            try:
                texts = self.backend.generate(request)
            except TransportError as exc:
                if attempt == self.max_retries:
                    raise
                logger.warning("transport failure for %s (attempt %d): %s", request.sample_id, attempt + 1, exc)
                if self.backoff_s:
                    time.sleep(self.backoff_s * 2**attempt)
                continue
            if len(texts) != request.n_outputs:
                raise TransportError(
                    f"backend returned {len(texts)} outputs for {request.sample_id!r}, expected {request.n_outputs}"
                )
            return texts
        raise AssertionError("unreachable")

    def _parse(self, request: OracleRequest, texts: list[str]) -> tuple[tuple, tuple[str, ...]]:
        parsed, forms = [], []
        if request.mode is OracleMode.BOUNDARY_REFLECTION:
            for t in texts:
                value, form = parse_duration(t)
                parsed.append(value)
                forms.append(form)
        else:
            bounds = request.clip.subclips.hull()
            for t in texts:
                value = parse_interval(t, bounds)
                parsed.append(value)
                forms.append("failure" if isinstance(value, ParseFailure) else "interval")
        return tuple(parsed), tuple(forms)

    def _fetch(self, request: OracleRequest) -> OracleResponse:
        t0 = time.perf_counter()
        for attempt in range(self.parse_retries + 1):
            texts = self._call(request)
            parsed, forms = self._parse(request, texts)
            if any(not isinstance(p, ParseFailure) for p in parsed):
                break
            logger.warning("all %d outputs unparseable for %s (attempt %d)", len(texts), request.sample_id, attempt + 1)
        elapsed = (time.perf_counter() - t0) * 1000.0
        logger.info("oracle %s %s: %.1f ms", request.mode.value, request.sample_id, elapsed)
        # backends that model their own latency (the simulator) report it, which
        # keeps cache files byte-identical across reruns
        latency = getattr(self.backend, "simulated_latency_ms", None)
        return OracleResponse(
            raw_texts=tuple(texts),
            parsed=parsed,
            latency_ms=elapsed if latency is None else float(latency),
            backend_id=self.backend_id,
            answer_forms=forms,
        )

    def query(self, request: OracleRequest) -> OracleResponse:
        key = request.cache_key(self.backend_id)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        resp = self._fetch(request)
        self.cache.put(key, resp)
        return resp

    def query_many(self, requests: Iterable[OracleRequest]) -> list[OracleResponse]:
        """Run ``requests`` through a bounded pool; output order follows input order.

        New responses are written to the cache in input order, whatever order
        the calls complete in.
        """
        requests = list(requests)
        keys = [r.cache_key(self.backend_id) for r in requests]
        out: list[Optional[OracleResponse]] = [self.cache.get(k) for k in keys]
        todo = [i for i, resp in enumerate(out) if resp is None]
        # duplicate requests in one batch are fetched once
        first: dict[str, int] = {}
        for i in todo:
            first.setdefault(keys[i], i)
        unique = list(first.values())
        if self.max_workers <= 1 or len(unique) <= 1:
            fetched = [self._fetch(requests[i]) for i in unique]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                fetched = list(pool.map(self._fetch, [requests[i] for i in unique]))
        by_key = {}
        for i, resp in zip(unique, fetched):
            self.cache.put(keys[i], resp)
            by_key[keys[i]] = resp
        for i in todo:
            out[i] = by_key[keys[i]]
        return out  # type: ignore[return-value]
