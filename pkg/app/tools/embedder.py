"""Text embedders for semantic filtering.

``HashEmbedder`` is a deterministic hashed bag-of-words used at desk scale.
``RemoteEmbedder`` posts ``{"text": ...}`` to an encoder service and expects
``{"embedding": [...]}`` back (see ``app/server/main.py``).
"""

import hashlib
import logging
import threading
from typing import Dict, Optional

import numpy as np
import requests

from app.core import Expression
from app.errors import ConfigurationError, EmbeddingProtocolError, EmbeddingTransportError

logger = logging.getLogger(__name__)


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


def embed_hash(expression: Expression, dimension: int = 256) -> np.ndarray:
    """L2-normalized bucket counts of the expression's tokens."""
    if dimension < 1:
        raise ConfigurationError("embedding dimension must be positive")
    vec = np.zeros(dimension, dtype=np.float64)
    for token in expression.tokens:
        vec[_bucket(token, dimension)] += 1.0
    return vec / np.linalg.norm(vec)


class HashEmbedder:
    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def __call__(self, expression: Expression) -> np.ndarray:
        return embed_hash(expression, self.dimension)


class RemoteEmbedder:
    """Client for an external sentence encoder, with a per-run cache.

    Reads are lock-free; writes are serialized. Two threads may fetch the
    same text concurrently, the later write wins with an identical value.
    """

    def __init__(self, endpoint: str, timeout: float = 5.0, session: Optional[requests.Session] = None):
        if not endpoint:
            raise ConfigurationError("remote embedder requires an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()
        self.dimension: Optional[int] = None
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def __call__(self, expression: Expression) -> np.ndarray:
        return self.embed(expression)

    def embed(self, expression: Expression) -> np.ndarray:
        cached = self._cache.get(expression.raw)
        if cached is not None:
            return cached
        vec = self._fetch(expression.raw)
        with self._lock:
            if self.dimension is None:
                self.dimension = vec.shape[0]
            elif vec.shape[0] != self.dimension:
                raise EmbeddingProtocolError(
                    f"{self.endpoint} returned dimension {vec.shape[0]}, expected {self.dimension}"
                )
            self._cache[expression.raw] = vec
        return vec

    def _fetch(self, text: str) -> np.ndarray:
        try:
            response = self.session.post(self.endpoint, json={"text": text}, timeout=self.timeout)
            response.raise_for_status()
            data = response.json()
        except requests.exceptions.Timeout as e:
            raise EmbeddingTransportError(self.endpoint, f"request timed out after {self.timeout}s") from e
        except requests.exceptions.ConnectionError as e:
            raise EmbeddingTransportError(self.endpoint, "connection failed") from e
        except requests.exceptions.HTTPError as e:
            raise EmbeddingTransportError(self.endpoint, f"HTTP error {e}") from e
        except ValueError as e:
            raise EmbeddingTransportError(self.endpoint, "response is not JSON") from e
        except requests.exceptions.RequestException as e:
            raise EmbeddingTransportError(self.endpoint, f"request failed: {e}") from e

        values = data.get("embedding") if isinstance(data, dict) else None
        if not isinstance(values, list) or not values:
            raise EmbeddingTransportError(self.endpoint, "response lacks a non-empty 'embedding' list")
        try:
            vec = np.asarray(values, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise EmbeddingTransportError(self.endpoint, "embedding holds non-numeric values") from e
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise EmbeddingTransportError(self.endpoint, "embedding must be a flat list of finite reals")
        return vec


def build_embedder(kind: str, dimension: int = 256, endpoint: Optional[str] = None, timeout_ms: int = 5000):
    if kind == "hash":
        return HashEmbedder(dimension)
    if kind == "remote":
        logger.info("Using remote embedder at %s", endpoint)
        return RemoteEmbedder(endpoint, timeout=timeout_ms / 1000.0)
    raise ConfigurationError(f"unknown embedder kind: {kind}")
