"""Text and box similarity measures.

All scalar measures return values in [0, 1] and are symmetric in their
two text (or box) arguments.  Two families of text measures exist: a
dependency-free lexical family used by default, and an embedding family
parameterized by a vector provider.  Either family can serve as the
short-text and long-text sides of a :class:`SimilarityBackend`.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import EmptyText
from .records import BoundingBox

# Texts whose longer side exceeds this many tokens take the long-text route.
LONG_TEXT_TOKENS = 25

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; punctuation and underscores separate."""
    return _TOKEN_RE.findall(text.lower())


def lexical_similarity(a: str, b: str) -> float:
    """Cosine over token-count vectors.

    Both sides token-free gives 1.0, exactly one side token-free gives
    0.0.
    """
    ta, tb = tokenize(a), tokenize(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    ca, cb = Counter(ta), Counter(tb)
    dot = sum(ca[t] * cb[t] for t in ca.keys() & cb.keys())
    # single sqrt over the integer product keeps identical texts at 1.0
    denom = math.sqrt(
        sum(v * v for v in ca.values()) * sum(v * v for v in cb.values())
    )
    return min(1.0, dot / denom)


class EmbeddingProvider(Protocol):
    """Source of unit-norm text vectors.

    ``sentence_vector`` returns shape (dim,); ``token_vectors`` returns
    shape (n_tokens, dim) with one row per token of the input.  Rows are
    unit-norm to within 1e-6.  Implementations must be deterministic for
    the lifetime of the instance.
    """

    def sentence_vector(self, text: str) -> np.ndarray: ...

    def token_vectors(self, text: str) -> np.ndarray: ...


def embedding_similarity(a: str, b: str, provider: EmbeddingProvider) -> float:
    """Cosine of whole-text vectors, clamped to [0, 1]."""
    va = np.asarray(provider.sentence_vector(a), dtype=float)
    vb = np.asarray(provider.sentence_vector(b), dtype=float)
    # single sqrt over the product of squared norms keeps identical
    # vectors at exactly 1.0
    denom_sq = float(np.dot(va, va)) * float(np.dot(vb, vb))
    if denom_sq == 0.0:
        return 0.0
    return float(np.clip(np.dot(va, vb) / math.sqrt(denom_sq), 0.0, 1.0))


def greedy_match_f1(a: str, b: str, provider: EmbeddingProvider) -> float:
    """Greedy token-alignment F1 between two texts.

    Each token on one side is matched to its most similar token on the
    other; precision and recall are the means of those best matches and
    are combined harmonically.  Token cosines are clamped to [0, 1]
    before matching.  Raises :class:`EmptyText` when either side has no
    tokens.
    """
    va = np.asarray(provider.token_vectors(a), dtype=float)
    vb = np.asarray(provider.token_vectors(b), dtype=float)
    if va.size == 0 or vb.size == 0:
        raise EmptyText("greedy matching needs at least one token per side")
    if a == b:
        # the ideal alignment; skips ulp-level cosine noise
        return 1.0
    sims = np.clip(va @ vb.T, 0.0, 1.0)
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lexical_greedy_f1(a: str, b: str) -> float:
    # identical-token matching; equals greedy F1 under one-hot vectors
    ta, tb = tokenize(a), tokenize(b)
    if not ta or not tb:
        raise EmptyText("greedy matching needs at least one token per side")
    sa, sb = set(ta), set(tb)
    precision = sum(1 for t in ta if t in sb) / len(ta)
    recall = sum(1 for t in tb if t in sa) / len(tb)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes.

    When both boxes are degenerate (zero area), returns 1.0 if they are
    identical and 0.0 otherwise.
    """
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return inter / union


def normalize_answer(s: str) -> str:
    s = " ".join(s.split()).lower()
    if s.endswith("."):
        s = s[:-1]
    return s.strip()


def exact_match(a: str, b: str) -> float:
    """1.0 when the two answers agree after light normalization.

    Normalization trims, collapses whitespace, lowercases, and drops one
    trailing period.
    """
    return 1.0 if normalize_answer(a) == normalize_answer(b) else 0.0


@dataclass(frozen=True)
class SimilarityBackend:
    """A named pair of short-text and long-text measures.

    ``short`` compares texts directly.  ``long`` routes short inputs
    (neither side above ``long_token_threshold`` tokens) through the
    short measure and longer ones through the token-matching measure.
    Both treat genuinely empty strings specially: two empty sides agree
    perfectly, one empty side scores zero.
    """

    name: str
    short_fn: Callable[[str, str], float] = field(repr=False)
    long_fn: Callable[[str, str], float] = field(repr=False)
    long_token_threshold: int = LONG_TEXT_TOKENS

    def _empty_guard(self, a: str, b: str) -> float | None:
        ea, eb = not a.strip(), not b.strip()
        if ea and eb:
            return 1.0
        if ea or eb:
            return 0.0
        return None

    def short(self, a: str, b: str) -> float:
        guard = self._empty_guard(a, b)
        if guard is not None:
            return guard
        return self.short_fn(a, b)

    def long(self, a: str, b: str) -> float:
        guard = self._empty_guard(a, b)
        if guard is not None:
            return guard
        na, nb = len(tokenize(a)), len(tokenize(b))
        # punctuation-only strings have no tokens; the short measure
        # handles them without raising
        if na == 0 or nb == 0 or max(na, nb) <= self.long_token_threshold:
            return self.short_fn(a, b)
        return self.long_fn(a, b)


def lexical_backend() -> SimilarityBackend:
    """Dependency-free backend: count-vector cosine plus token-set F1."""
    return SimilarityBackend("lexical", lexical_similarity, _lexical_greedy_f1)


def provider_backend(provider: EmbeddingProvider, name: str | None = None) -> SimilarityBackend:
    """Backend backed by an embedding provider."""
    label = name if name is not None else f"provider:{type(provider).__name__}"
    return SimilarityBackend(
        label,
        lambda a, b: embedding_similarity(a, b, provider),
        lambda a, b: greedy_match_f1(a, b, provider),
    )
