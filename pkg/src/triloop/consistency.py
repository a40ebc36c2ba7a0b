"""Consistency scoring: reconstruction prompts, per-category component
similarities, the combined score, and top-fraction filtering.

A record's score measures how well a model can rebuild each element of
the triplet from the other two.  Which similarity measures feed the
score depends on the record category: short questions and answers use
the short-text measure, long answers the long-text measure, coordinate
sides intersection-over-union, and multiple-choice answers exact match.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from sklearn.base import BaseEstimator

from .errors import (
    ConfigError,
    InvalidBox,
    MalformedRecord,
    NoBox,
    NoComponents,
    RecordError,
)
from .records import QaType, Triplet, parse_bbox, strip_template, triplet_from_dict, triplet_to_dict
from .resources import pick_deterministic, question_prompts
from .similarity import SimilarityBackend, exact_match, iou, lexical_backend

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42

# Canonical category order for sorted output.
_TYPE_ORDER = {t: i for i, t in enumerate(QaType)}


@dataclass(frozen=True)
class Reconstruction:
    """A model's attempt to rebuild a record from partial information.

    ``q_prime`` answers "what was the question, given the answer";
    ``a_prime`` answers the original question.  Either may be the empty
    string when the model returned nothing, which scores 0 against a
    non-empty original.
    """

    triplet_id: str
    q_prime: str
    a_prime: str


@dataclass(frozen=True)
class ScoredTriplet:
    triplet: Triplet
    reconstruction: Reconstruction
    sim_q: float | None
    sim_a: float | None
    score: float

    def __post_init__(self) -> None:
        if self.sim_q is not None and self.sim_a is not None:
            expected = math.sqrt(self.sim_q * self.sim_a)
            if abs(self.score - expected) > 1e-12:
                raise ConfigError(
                    f"score {self.score!r} does not combine its components"
                )


def reconstruction_prompts(t: Triplet, seed: int = DEFAULT_SEED) -> tuple[str, str]:
    """Prompts used to rebuild the answer and the question.

    Returns ``(prompt_for_a_prime, prompt_for_q_prime)``.  The answer is
    re-asked with the original question verbatim; the question is asked
    for with a deterministically chosen question-from-answer template
    followed by the original answer.
    """
    tpl = pick_deterministic(question_prompts(), "ia2q", t.id, seed)
    return t.question, f"{tpl} Answer: {t.answer}"


def _iou_component(original_text: str, recon_text: str, record_id: str) -> float:
    # the original side is guaranteed to carry a box by the record invariant
    orig_box = parse_bbox(original_text)
    try:
        recon_box = parse_bbox(recon_text)
    except (NoBox, InvalidBox) as e:
        logger.warning("record %s: reconstruction box unusable (%s); scoring 0", record_id, e)
        return 0.0
    return iou(orig_box, recon_box)


def component_similarities(
    t: Triplet, r: Reconstruction, backend: SimilarityBackend
) -> tuple[float | None, float | None]:
    """Per-category (sim_q, sim_a); an absent component is None.

    Every text is stripped of fixed-format instruction spans before
    comparison.  Multiple-choice questions are never compared, and
    caption records compare answers only.
    """
    q, q2 = strip_template(t.question), strip_template(r.q_prime)
    a, a2 = strip_template(t.answer), strip_template(r.a_prime)
    if t.qa_type is QaType.VQA:
        return backend.short(q, q2), backend.short(a, a2)
    if t.qa_type is QaType.VISUAL_CHAT:
        return backend.short(q, q2), backend.long(a, a2)
    if t.qa_type is QaType.CAPTION:
        return None, backend.long(a, a2)
    if t.qa_type is QaType.CHOICE:
        return None, exact_match(a, a2)
    # region: boxes meet iou, descriptions meet the short measure
    if t.box_on_question:
        return _iou_component(q, q2, t.id), backend.short(a, a2)
    return backend.short(q, q2), _iou_component(a, a2, t.id)


def consistency_score(sim_q: float | None, sim_a: float | None) -> float:
    """Geometric mean of the available components.

    With one component absent the score is the other component alone.
    Raises :class:`NoComponents` when both are absent.
    """
    if sim_q is None and sim_a is None:
        raise NoComponents("need at least one component similarity")
    if sim_q is None:
        return float(sim_a)
    if sim_a is None:
        return float(sim_q)
    return math.sqrt(sim_q * sim_a)


def score_pair(t: Triplet, r: Reconstruction, backend: SimilarityBackend) -> ScoredTriplet:
    """Score one record against its reconstruction."""
    sim_q, sim_a = component_similarities(t, r, backend)
    return ScoredTriplet(t, r, sim_q, sim_a, consistency_score(sim_q, sim_a))


def score_records(
    pairs: Sequence[tuple[Triplet, Reconstruction]],
    backend: SimilarityBackend | None = None,
    workers: int = 1,
) -> list[ScoredTriplet]:
    """Score records in input order.

    Scoring is pure per record; ``workers`` > 1 fans the work out to a
    thread pool without changing the result.
    """
    backend = backend if backend is not None else lexical_backend()
    if workers <= 1:
        return [score_pair(t, r, backend) for t, r in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pr: score_pair(pr[0], pr[1], backend), pairs))


def canonical_order(scored: Sequence[ScoredTriplet]) -> list[ScoredTriplet]:
    """Sort by category, then descending score, then input position."""
    return [
        st
        for _, st in sorted(
            enumerate(scored),
            key=lambda pair: (_TYPE_ORDER[pair[1].triplet.qa_type], -pair[1].score, pair[0]),
        )
    ]


def _cut_size(fraction: float, n: int) -> int:
    # tolerance keeps float dust out of the ceiling, e.g. 0.2*15
    return max(1, math.ceil(fraction * n - 1e-9))


def filter_top(
    scored: Sequence[ScoredTriplet],
    fraction: float,
    per_type: bool = True,
) -> tuple[list[ScoredTriplet], list[ScoredTriplet]]:
    """Partition into (retained, excluded) by descending score.

    With ``per_type`` the cut keeps the top ceil(fraction * pool size)
    of each category separately, otherwise one global cut is made.
    Ties break toward the earlier input position.  Both output lists
    are canonically ordered.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction!r}")
    pools: dict[object, list[tuple[int, ScoredTriplet]]] = {}
    for pos, st in enumerate(scored):
        key = st.triplet.qa_type if per_type else None
        pools.setdefault(key, []).append((pos, st))
    keep: set[int] = set()
    for members in pools.values():
        ranked = sorted(members, key=lambda m: (-m[1].score, m[0]))
        for pos, _ in ranked[: _cut_size(fraction, len(members))]:
            keep.add(pos)
    retained = [st for pos, st in enumerate(scored) if pos in keep]
    excluded = [st for pos, st in enumerate(scored) if pos not in keep]
    return canonical_order(retained), canonical_order(excluded)


class ConsistencyScorer(BaseEstimator):
    """Estimator-style front end over scoring and filtering.

    Parameters mirror the functional layer: ``backend`` is "lexical" or
    any :class:`SimilarityBackend`; ``fraction``/``per_type`` control
    the cut applied by :meth:`filter`.
    """

    def __init__(
        self,
        backend: str | SimilarityBackend = "lexical",
        fraction: float = 0.2,
        per_type: bool = True,
        workers: int = 1,
    ):
        self.backend = backend
        self.fraction = fraction
        self.per_type = per_type
        self.workers = workers

    def _resolve_backend(self) -> SimilarityBackend:
        if isinstance(self.backend, SimilarityBackend):
            return self.backend
        if self.backend == "lexical":
            return lexical_backend()
        raise ConfigError(f"unknown backend {self.backend!r}")

    def fit(self, X=None, y=None) -> "ConsistencyScorer":
        """No state to learn; present for pipeline compatibility."""
        return self

    def transform(self, X: Sequence[tuple[Triplet, Reconstruction]]) -> list[ScoredTriplet]:
        return score_records(X, self._resolve_backend(), workers=self.workers)

    def filter(
        self, X: Sequence[tuple[Triplet, Reconstruction]]
    ) -> tuple[list[ScoredTriplet], list[ScoredTriplet]]:
        return filter_top(self.transform(X), self.fraction, self.per_type)


def scored_to_dict(st: ScoredTriplet) -> dict:
    out = triplet_to_dict(st.triplet)
    out.update(
        {
            "q_prime": st.reconstruction.q_prime,
            "a_prime": st.reconstruction.a_prime,
            "sim_q": st.sim_q,
            "sim_a": st.sim_a,
            "score": st.score,
        }
    )
    return out


def scored_from_dict(obj: dict) -> ScoredTriplet:
    t = triplet_from_dict(obj)
    for key in ("q_prime", "a_prime", "score"):
        if key not in obj:
            raise MalformedRecord(f"missing key {key!r}")
    for key in ("q_prime", "a_prime"):
        if not isinstance(obj[key], str):
            raise MalformedRecord(f"field {key!r} must be a string")
    for key in ("sim_q", "sim_a", "score"):
        v = obj.get(key)
        if v is not None and not isinstance(v, (int, float)):
            raise MalformedRecord(f"field {key!r} must be a number or null")
    if obj["score"] is None:
        raise MalformedRecord("field 'score' must be a number")
    r = Reconstruction(t.id, obj["q_prime"], obj["a_prime"])
    return ScoredTriplet(t, r, obj.get("sim_q"), obj.get("sim_a"), float(obj["score"]))


def write_scored(records: Iterable[ScoredTriplet], stream: IO[str]) -> int:
    n = 0
    for st in records:
        stream.write(json.dumps(scored_to_dict(st), ensure_ascii=False) + "\n")
        n += 1
    return n


def read_pairs(stream: Iterable[str]) -> list[tuple[Triplet, Reconstruction]]:
    """Parse reconstruction-annotated records for scoring.

    Expects triplet fields plus q_prime and a_prime; any sim or score
    fields already present are ignored.
    """
    out: list[tuple[Triplet, Reconstruction]] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON: {e.msg}", line_no) from e
        try:
            t = triplet_from_dict(obj)
            for key in ("q_prime", "a_prime"):
                if not isinstance(obj.get(key), str):
                    raise MalformedRecord(f"field {key!r} must be a string")
        except MalformedRecord as e:
            raise MalformedRecord(e.reason, line_no) from e
        except RecordError as e:
            raise MalformedRecord(str(e), line_no) from e
        out.append((t, Reconstruction(t.id, obj["q_prime"], obj["a_prime"])))
    return out


def read_scored(stream: Iterable[str]) -> list[ScoredTriplet]:
    out: list[ScoredTriplet] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON: {e.msg}", line_no) from e
        try:
            out.append(scored_from_dict(obj))
        except MalformedRecord as e:
            raise MalformedRecord(e.reason, line_no) from e
        except (RecordError, ConfigError) as e:
            raise MalformedRecord(str(e), line_no) from e
    return out
