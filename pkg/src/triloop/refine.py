"""The data-level refinement loop.

One round generates a candidate pair for every unlabeled image, asks
the model to reconstruct each candidate from partial information,
scores reconstruction agreement, keeps the top fraction per category,
and merges the survivors into the seed dataset.  Multi-round iteration
walks disjoint slices of the unlabeled manifest; retraining between
rounds happens outside this package, behind the model interface.
"""

from __future__ import annotations

import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .consistency import (
    Reconstruction,
    ScoredTriplet,
    canonical_order,
    filter_top,
    reconstruction_prompts,
    score_records,
)
from .errors import (
    ConfigError,
    DuplicateId,
    MalformedRecord,
    ModelError,
    RecordError,
    SeedDatasetError,
)
from .models import ModelInterface, infer_qa_type
from .records import QaType, Triplet, iter_manifest, read_triplets, strip_template
from .similarity import SimilarityBackend

logger = logging.getLogger(__name__)

DEFAULT_IN_FLIGHT = 8


@dataclass(frozen=True)
class LoopConfig:
    """Static parameters of a refinement run."""

    seed_dataset: str | Path
    unlabeled_manifest: str | Path
    rounds: int = 1
    filter_fraction: float = 0.2
    per_type: bool = True
    seed: int = 42
    workers: int = DEFAULT_IN_FLIGHT
    exact: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if not 0.0 < self.filter_fraction <= 1.0:
            raise ConfigError("filter_fraction must be in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass(frozen=True)
class RoundReport:
    """Counts and score summary for one round.

    ``generation_failures`` counts images that produced no valid
    candidate; ``reconstruction_failures`` counts candidates dropped
    because both reconstruction calls failed.  Candidates with a single
    failed side stay in the pool and score 0 on that side.
    """

    round_index: int
    generated: int
    scored: int
    retained: int
    retained_by_type: dict[str, int]
    score_min: float | None
    score_median: float | None
    score_max: float | None
    generation_failures: int
    reconstruction_failures: int

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "generated": self.generated,
            "scored": self.scored,
            "retained": self.retained,
            "retained_by_type": dict(self.retained_by_type),
            "score_min": self.score_min,
            "score_median": self.score_median,
            "score_max": self.score_max,
            "generation_failures": self.generation_failures,
            "reconstruction_failures": self.reconstruction_failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _map_bounded(fn, items: Sequence, workers: int) -> list:
    # results come back in input order regardless of completion order
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def generate_synthetic(
    model: ModelInterface,
    image_refs: Sequence[str],
    *,
    seed: int = 42,
    id_prefix: str = "synth",
    id_offset: int = 0,
    workers: int = DEFAULT_IN_FLIGHT,
) -> tuple[list[Triplet], int]:
    """Propose one candidate record per image.

    Images whose generation fails, or whose proposal does not form a
    valid record, are skipped; the second return value counts them.
    Ids encode the manifest position, so reruns and worker counts do
    not change them.
    """

    def one(item: tuple[int, str]) -> Triplet | None:
        pos, ref = item
        try:
            gen = model.generate_qa(ref)
        except ModelError as e:
            logger.warning("image %s: generation failed (%s)", ref, e)
            return None
        qa_type = gen.qa_type
        if qa_type is None:
            qa_type = infer_qa_type(gen.question, gen.answer)
            logger.info("image %s: no declared category, inferred %s", ref, qa_type.value)
        try:
            return Triplet(
                id=f"{id_prefix}-{id_offset + pos:06d}",
                image_ref=ref,
                qa_type=qa_type,
                question=gen.question,
                answer=gen.answer,
            )
        except RecordError as e:
            logger.warning("image %s: proposal rejected (%s)", ref, e)
            return None

    results = _map_bounded(one, list(enumerate(image_refs)), workers)
    triplets = [t for t in results if t is not None]
    return triplets, len(results) - len(triplets)


def reconstruct(
    model: ModelInterface,
    triplets: Sequence[Triplet],
    seed: int = 42,
    *,
    workers: int = DEFAULT_IN_FLIGHT,
) -> list[Reconstruction | None]:
    """Rebuild each record's question and answer through the model.

    A failed side becomes the empty string, which downstream scoring
    treats as total disagreement with a non-empty original.  An entry
    is None only when both sides failed.
    """

    def one(t: Triplet) -> Reconstruction | None:
        prompt_a, prompt_q = reconstruction_prompts(t, seed)
        a_prime: str | None
        q_prime: str | None
        try:
            a_prime = model.answer(t.image_ref, prompt_a)
        except ModelError as e:
            logger.warning("record %s: answer reconstruction failed (%s)", t.id, e)
            a_prime = None
        try:
            q_prime = model.question(t.image_ref, prompt_q)
        except ModelError as e:
            logger.warning("record %s: question reconstruction failed (%s)", t.id, e)
            q_prime = None
        if a_prime is None and q_prime is None:
            return None
        return Reconstruction(t.id, q_prime or "", a_prime or "")

    return _map_bounded(one, list(triplets), workers)


def _exact_partition(
    scored: Sequence[ScoredTriplet],
) -> tuple[list[ScoredTriplet], list[ScoredTriplet]]:
    # pseudo-code variant: keep only literal agreement on both sides
    retained, excluded = [], []
    for st in scored:
        q_ok = strip_template(st.triplet.question) == strip_template(st.reconstruction.q_prime)
        a_ok = strip_template(st.triplet.answer) == strip_template(st.reconstruction.a_prime)
        (retained if q_ok and a_ok else excluded).append(st)
    return canonical_order(retained), canonical_order(excluded)


def _manifest_slice(refs: list[str], rounds: int, round_index: int) -> tuple[list[str], int]:
    if not 0 <= round_index < rounds:
        raise ConfigError(f"round_index {round_index} outside 0..{rounds - 1}")
    n = len(refs)
    start = round_index * n // rounds
    stop = (round_index + 1) * n // rounds
    return refs[start:stop], start


def _load_seed(path: str | Path) -> list[Triplet]:
    try:
        with open(path, encoding="utf-8") as fh:
            return read_triplets(fh)
    except (OSError, MalformedRecord, DuplicateId) as e:
        raise SeedDatasetError(f"cannot load seed dataset {path}: {e}") from e


def run_round(
    model: ModelInterface,
    config: LoopConfig,
    round_index: int = 0,
    backend: SimilarityBackend | None = None,
) -> tuple[list[ScoredTriplet], list[Triplet], RoundReport]:
    """One generate, reconstruct, score, filter, merge cycle.

    Returns the retained scored records, the merged dataset (seed plus
    survivors), and the round report.  The round consumes its slice of
    the unlabeled manifest.
    """
    seed_data = _load_seed(config.seed_dataset)
    try:
        with open(config.unlabeled_manifest, encoding="utf-8") as fh:
            all_refs = list(iter_manifest(fh))
    except OSError as e:
        raise SeedDatasetError(f"cannot load manifest {config.unlabeled_manifest}: {e}") from e
    refs, offset = _manifest_slice(all_refs, config.rounds, round_index)

    triplets, gen_failures = generate_synthetic(
        model, refs, seed=config.seed, id_offset=offset, workers=config.workers
    )
    recons = reconstruct(model, triplets, config.seed, workers=config.workers)
    pairs = [(t, r) for t, r in zip(triplets, recons) if r is not None]
    dropped = len(triplets) - len(pairs)

    scored = score_records(pairs, backend, workers=config.workers)
    if config.exact:
        filtered, _ = _exact_partition(scored)
    else:
        filtered, _ = filter_top(scored, config.filter_fraction, config.per_type)

    seen = {t.id for t in seed_data}
    merged = list(seed_data)
    for st in filtered:
        if st.triplet.id in seen:
            raise DuplicateId(f"id {st.triplet.id!r} already present in seed dataset")
        seen.add(st.triplet.id)
        merged.append(st.triplet)

    by_type = {qt.value: 0 for qt in QaType}
    for st in filtered:
        by_type[st.triplet.qa_type.value] += 1
    scores = [st.score for st in scored]
    report = RoundReport(
        round_index=round_index,
        generated=len(triplets),
        scored=len(scored),
        retained=len(filtered),
        retained_by_type={k: v for k, v in by_type.items() if v},
        score_min=min(scores) if scores else None,
        score_median=statistics.median(scores) if scores else None,
        score_max=max(scores) if scores else None,
        generation_failures=gen_failures,
        reconstruction_failures=dropped,
    )
    return filtered, merged, report


def iterate(
    model_factory: Callable[[int], ModelInterface],
    config: LoopConfig,
    backend: SimilarityBackend | None = None,
    on_round: Callable[[int, list[ScoredTriplet], list[Triplet], RoundReport], None] | None = None,
) -> list[RoundReport]:
    """Run every round, asking the factory for each round's model.

    Retraining between rounds is external: callers emit the merged
    dataset from round k (via ``on_round``), retrain out of band, and
    serve the new model behind the interface the factory returns for
    round k+1.
    """
    reports: list[RoundReport] = []
    for k in range(config.rounds):
        filtered, merged, report = run_round(model_factory(k), config, k, backend)
        reports.append(report)
        if on_round is not None:
            on_round(k, filtered, merged, report)
    return reports
