"""Client for ORES-compatible article-quality scoring services, with a disk cache.

The cache holds the raw JSON response per revision and is consulted before
any network access, so a populated cache makes labeling fully offline.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import DEFAULT_CLASSES, QualityDistribution
from .errors import DataError, OresError

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://ores.wikimedia.org"
ENDPOINT_ENV = "EDITGAUGE_ORES_ENDPOINT"
DEFAULT_MODEL = "articlequality"

# (url, timeout) -> (status, body)
Transport = Callable[[str, float], "tuple[int, bytes]"]


def urllib_transport(url: str, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, headers={"User-Agent": "editgauge/0.1"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as err:
        return err.code, err.read()


def offline_transport(url: str, timeout: float) -> tuple[int, bytes]:
    raise ConnectionError(f"network access disabled (wanted {url})")


def parse_response(payload: dict, wiki: str, rev_id: int, model: str,
                   class_names: Sequence[str]) -> QualityDistribution:
    try:
        entry = payload[wiki]["scores"][str(rev_id)][model]
    except (KeyError, TypeError):
        raise OresError("response lacks a score for this revision", rev_id) from None
    if "error" in entry:
        raise OresError(f"service error: {entry['error']}", rev_id)
    try:
        probs = entry["score"]["probability"]
    except (KeyError, TypeError):
        raise OresError("response lacks a probability table", rev_id) from None
    try:
        return QualityDistribution.from_mapping(probs, class_names)
    except DataError as err:
        raise OresError(str(err), rev_id) from None


class OresClient:
    """Fetch quality distributions for revisions of one wiki.

    ``transport`` performs the HTTP GET; swap it for testing or to forbid
    network access. ``parallelism`` bounds concurrent requests in
    ``fetch_many``.
    """

    def __init__(self, wiki="enwiki", endpoint=None, model=DEFAULT_MODEL, cache_dir=None,
                 class_names=DEFAULT_CLASSES, transport: Transport | None = None,
                 retries=3, backoff=0.5, timeout=30.0, parallelism=4):
        self.wiki = wiki
        self.endpoint = (endpoint or os.environ.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT).rstrip("/")
        self.model = model
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.class_names = tuple(class_names)
        self.transport = transport or urllib_transport
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.parallelism = parallelism
        self.network_calls = 0
        self._lock = threading.Lock()

    def url(self, rev_id: int) -> str:
        return f"{self.endpoint}/v3/scores/{self.wiki}/{rev_id}/{self.model}"

    def cache_path(self, rev_id: int) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / self.wiki / self.model / f"{rev_id}.json"

    def _read_cache(self, rev_id):
        path = self.cache_path(rev_id)
        if path is None or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_cache(self, rev_id, body: bytes):
        path = self.cache_path(rev_id)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{rev_id}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(body)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _download(self, rev_id: int) -> bytes:
        url = self.url(rev_id)
        last = None
        for attempt in range(1, self.retries + 1):
            with self._lock:
                self.network_calls += 1
            try:
                status, body = self.transport(url, self.timeout)
            except (OSError, ConnectionError) as err:
                last = str(err)
            else:
                if status == 200:
                    return body
                last = f"HTTP {status}"
                if status < 500 and status != 429:
                    raise OresError(f"request failed with {last}", rev_id)
            if attempt < self.retries and self.backoff:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise OresError(f"giving up after {self.retries} attempts: {last}", rev_id, retryable=True)

    def fetch(self, rev_id: int) -> QualityDistribution:
        payload = self._read_cache(rev_id)
        if payload is None:
            body = self._download(rev_id)
            try:
                payload = json.loads(body)
            except ValueError:
                raise OresError("response is not JSON", rev_id) from None
            dist = parse_response(payload, self.wiki, rev_id, self.model, self.class_names)
            self._write_cache(rev_id, body)
            return dist
        return parse_response(payload, self.wiki, rev_id, self.model, self.class_names)

    def fetch_many(self, rev_ids: Iterable[int]) -> dict[int, QualityDistribution]:
        rev_ids = list(dict.fromkeys(rev_ids))
        if self.parallelism <= 1:
            return {r: self.fetch(r) for r in rev_ids}
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return dict(zip(rev_ids, pool.map(self.fetch, rev_ids)))


def fetch_quality(rev_id: int, wiki: str = "enwiki", endpoint: str | None = None, cache_dir=None,
                  **kwargs) -> QualityDistribution:
    return OresClient(wiki, endpoint, cache_dir=cache_dir, **kwargs).fetch(rev_id)


def make_response(wiki: str, rev_id: int, probs: dict, model: str = DEFAULT_MODEL) -> dict:
    """An ORES v3 response body with the given probability table."""
    prediction = max(probs, key=probs.get)
    return {wiki: {"models": {model: {"version": "0.0.0"}},
                   "scores": {str(rev_id): {model: {"score": {"prediction": prediction, "probability": probs}}}}}}
