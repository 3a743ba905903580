"""Geocoding behind a small contract: resolve text to coordinates or None.

Three implementations: an offline fixture table (tests, demos, air-gapped
deployments), an OpenCage-style HTTP client, and a persistent-cache
wrapper.  A location that cannot be resolved stays absent — coordinates
are never fabricated and sentinel values are never stored.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

logger = logging.getLogger(__name__)

Coordinates = tuple[float, float]


class GeocodeUnavailable(RuntimeError):
    """Transient backend failure (network, quota) — distinct from a
    definitive miss, which is just None."""


@runtime_checkable
class Geocoder(Protocol):
    def resolve(self, location: str) -> Optional[Coordinates]: ...


def normalize_location(text: str) -> str:
    return " ".join(text.split()).casefold()


class FixtureGeocoder:
    """Offline table of normalized location → (lat, lon); never touches
    the network.  Unknown locations are definitive misses."""

    def __init__(self, path: str | Path):
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        self._table: dict[str, Coordinates] = {
            normalize_location(k): (float(v[0]), float(v[1])) for k, v in raw.items()
        }

    def resolve(self, location: str) -> Optional[Coordinates]:
        return self._table.get(normalize_location(location))


class OpenCageGeocoder:
    """Forward geocoding via the OpenCage-compatible HTTP API.

    The key comes from the environment (default OPENCAGE_API_KEY).
    Transient failures raise GeocodeUnavailable after retries so callers
    can decide between warn-and-continue and abort.
    """

    def __init__(self, endpoint: str = "https://api.opencagedata.com/geocode/v1/json",
                 api_key_env: str = "OPENCAGE_API_KEY",
                 timeout: float = 15.0, retries: int = 2):
        import httpx

        self._endpoint = endpoint
        self._key = os.environ.get(api_key_env, "")
        self._retries = retries
        self._client = httpx.Client(timeout=timeout)

    def resolve(self, location: str) -> Optional[Coordinates]:
        params = {"q": location, "key": self._key, "limit": 1, "no_annotations": 1}
        last: Optional[Exception] = None
        for attempt in range(self._retries + 1):
            try:
                resp = self._client.get(self._endpoint, params=params)
                resp.raise_for_status()
                results = resp.json().get("results", [])
                if not results:
                    return None
                geometry = results[0]["geometry"]
                return float(geometry["lat"]), float(geometry["lng"])
            except Exception as exc:
                last = exc
                if attempt < self._retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise GeocodeUnavailable(f"geocoding failed after {self._retries + 1} attempts: {last}")


class CachedGeocoder:
    """Persists definitive results (hits and misses) keyed by normalized
    location; a cache hit never reaches the inner client."""

    def __init__(self, inner: Geocoder, cache_path: str | Path):
        self.inner = inner
        self.path = Path(cache_path)
        self._lock = threading.Lock()
        self._cache: dict[str, Optional[list[float]]] = {}
        if self.path.exists():
            self._cache = json.loads(self.path.read_text(encoding="utf-8"))

    def resolve(self, location: str) -> Optional[Coordinates]:
        key = normalize_location(location)
        if key in self._cache:
            hit = self._cache[key]
            return None if hit is None else (hit[0], hit[1])
        result = self.inner.resolve(location)  # GeocodeUnavailable propagates uncached
        with self._lock:
            self._cache[key] = None if result is None else [result[0], result[1]]
            self.path.write_text(json.dumps(self._cache, indent=0, sort_keys=True),
                                 encoding="utf-8")
        return result


def geocode(location_raw: str, client: Geocoder) -> Optional[Coordinates]:
    """Resolve a raw location string; empty input and transient backend
    failure both come back absent (the latter with a warning)."""
    if not location_raw or not location_raw.strip():
        return None
    try:
        return client.resolve(location_raw)
    except GeocodeUnavailable as exc:
        logger.warning("geocoding unavailable for %r: %s", location_raw, exc)
        return None
