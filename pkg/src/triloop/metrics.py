"""Corpus diagnostics: lexical diversity and category balance."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, EmptyCorpus, NoNgrams
from .records import QaType, Triplet
from .similarity import tokenize


def ttr(texts: Sequence[str]) -> float:
    """Type-token ratio over the concatenated corpus.

    :raises EmptyCorpus: when no text yields a token.
    """
    tokens = [tok for text in texts for tok in tokenize(text)]
    if not tokens:
        raise EmptyCorpus("no tokens in corpus")
    return len(set(tokens)) / len(tokens)


def distinct_n(texts: Sequence[str], n: int = 2) -> float:
    """Fraction of distinct n-grams, computed within each text.

    N-grams never cross text boundaries.  :raises NoNgrams: when no
    text reaches ``n`` tokens.
    """
    if n < 1:
        raise ConfigError(f"n must be positive, got {n}")
    total = 0
    unique: set[tuple[str, ...]] = set()
    for text in texts:
        toks = tokenize(text)
        for i in range(len(toks) - n + 1):
            unique.add(tuple(toks[i : i + n]))
            total += 1
    if total == 0:
        raise NoNgrams(f"no text has {n} or more tokens")
    return len(unique) / total


def type_distribution(triplets: Sequence[Triplet]) -> dict[QaType, float]:
    """Fraction of records per category; fractions sum to 1."""
    if not triplets:
        raise EmptyCorpus("no records")
    counts = Counter(t.qa_type for t in triplets)
    return {qt: counts[qt] / len(triplets) for qt in QaType if counts[qt]}


@dataclass(frozen=True)
class DiversityReport:
    ttr: float
    distinct_2: float
    token_count: int
    type_histogram: dict[QaType, int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "ttr": self.ttr,
                "distinct_2": self.distinct_2,
                "token_count": self.token_count,
                "type_histogram": {qt.value: c for qt, c in self.type_histogram.items()},
            }
        )


def _select_texts(triplets: Sequence[Triplet], field: str) -> list[str]:
    if field == "question":
        return [t.question for t in triplets]
    if field == "answer":
        return [t.answer for t in triplets]
    if field == "both":
        out = []
        for t in triplets:
            out.append(t.question)
            out.append(t.answer)
        return out
    raise ConfigError(f"field must be question, answer, or both; got {field!r}")


def diversity_report(triplets: Sequence[Triplet], field: str = "both") -> DiversityReport:
    """Build the full report over the chosen text field(s)."""
    texts = _select_texts(triplets, field)
    tokens = sum(len(tokenize(t)) for t in texts)
    histogram = Counter(t.qa_type for t in triplets)
    return DiversityReport(
        ttr=ttr(texts),
        distinct_2=distinct_n(texts, 2),
        token_count=tokens,
        type_histogram={qt: histogram[qt] for qt in QaType if histogram[qt]},
    )
