"""Embedding providers.

The HTTP provider speaks a small wire protocol: POST /embed with
``{"texts": [...], "granularity": "sentence" | "token"}`` and receive
``{"dim": D, "vectors": [...]}`` where vectors come back in request
order, one vector per text for sentence granularity and one list of
token vectors per text for token granularity.  The server owns unit
normalization; the client re-checks it and rejects replies that are off
by more than 1e-6.
"""

from __future__ import annotations

import numpy as np
import requests

from .errors import ProviderUnavailable

_NORM_TOL = 1e-6


class ServiceEmbeddingProvider:
    """Client for a remote embedding endpoint.

    Replies are cached per instance, which also pins determinism for
    the instance lifetime.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._sentence_cache: dict[str, np.ndarray] = {}
        self._token_cache: dict[str, np.ndarray] = {}

    def _post(self, texts: list[str], granularity: str) -> list:
        try:
            resp = self._session.post(
                f"{self.base_url}/embed",
                json={"texts": texts, "granularity": granularity},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise ProviderUnavailable(f"embed request failed: {e}") from e
        if resp.status_code != 200:
            raise ProviderUnavailable(
                f"embed endpoint returned status {resp.status_code}"
            )
        try:
            body = resp.json()
            vectors = body["vectors"]
        except (ValueError, KeyError) as e:
            raise ProviderUnavailable(f"malformed embed reply: {e}") from e
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderUnavailable("embed reply does not match request length")
        return vectors

    @staticmethod
    def _check_norms(arr: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(arr, axis=-1)
        if np.any(np.abs(norms - 1.0) > _NORM_TOL):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ProviderUnavailable(f"server vectors not unit-norm (off by {worst:.2e})")
        return arr

    def sentence_vector(self, text: str) -> np.ndarray:
        cached = self._sentence_cache.get(text)
        if cached is not None:
            return cached
        vec = np.asarray(self._post([text], "sentence")[0], dtype=float)
        if vec.ndim != 1:
            raise ProviderUnavailable("sentence granularity must return one vector per text")
        self._check_norms(vec)
        self._sentence_cache[text] = vec
        return vec

    def token_vectors(self, text: str) -> np.ndarray:
        cached = self._token_cache.get(text)
        if cached is not None:
            return cached
        rows = self._post([text], "token")[0]
        arr = np.asarray(rows, dtype=float)
        if arr.size and arr.ndim != 2:
            raise ProviderUnavailable("token granularity must return a vector list per text")
        if arr.size:
            self._check_norms(arr)
        self._token_cache[text] = arr
        return arr
