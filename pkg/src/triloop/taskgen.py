"""Multi-task corpus construction.

Each seed record becomes one of three training tasks: predict the
question-answer pair from the image alone, predict the answer from
image and question, or predict the question from image and answer.
Task kinds are assigned by exact-count partition under configurable
ratios, then shuffled deterministically.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidRatios, MalformedRecord, UnparseableOutput
from .records import Triplet
from .resources import pair_prompts, pick_deterministic, question_prompts, system_prompt

Q_MARKER = "Instruction:"
A_MARKER = "Answer:"


class TaskKind(enum.Enum):
    """Training task variants; values are the wire tags."""

    I2QA = "i2qa"
    IQ2A = "iq2a"
    IA2Q = "ia2q"


_KIND_BY_TAG = {k.value: k for k in TaskKind}


@dataclass(frozen=True)
class MaskRatios:
    """Fractions of the corpus assigned to each task kind.

    ``p_both`` masks question and answer (I2QA), ``p_q`` masks the
    question only (IA2Q), ``p_a`` masks the answer only (IQ2A).
    """

    p_both: float
    p_q: float
    p_a: float

    def __post_init__(self) -> None:
        for p in (self.p_both, self.p_q, self.p_a):
            if p < 0:
                raise InvalidRatios(f"ratio {p!r} is negative")
        total = self.p_both + self.p_q + self.p_a
        if abs(total - 1.0) > 1e-9:
            raise InvalidRatios(f"ratios sum to {total!r}, expected 1")

    @classmethod
    def default(cls) -> "MaskRatios":
        return cls(0.5, 0.2, 0.3)


@dataclass(frozen=True)
class TaskRecord:
    id: str
    image_ref: str
    task_kind: TaskKind
    system_prompt: str
    user_prompt: str
    target: str


def _floor_count(p: float, n: int) -> int:
    # tolerance keeps float dust out of the floor, e.g. 0.3*10
    return math.floor(p * n + 1e-9)


def assign_masks(n: int, ratios: MaskRatios, seed: int) -> list[TaskKind]:
    """Assign a task kind to each of ``n`` positions.

    Counts are exact: floor(p_both*n) I2QA, floor(p_q*n) IA2Q, and the
    remainder IQ2A, permuted by a seeded shuffle.  The same arguments
    always give the same assignment.
    """
    if n < 0:
        raise InvalidRatios(f"n must be non-negative, got {n}")
    c_both = _floor_count(ratios.p_both, n)
    c_q = _floor_count(ratios.p_q, n)
    kinds = [TaskKind.I2QA] * c_both + [TaskKind.IA2Q] * c_q
    kinds += [TaskKind.IQ2A] * (n - len(kinds))
    rng = np.random.default_rng(seed)
    return [kinds[i] for i in rng.permutation(n)]


def render_record(t: Triplet, kind: TaskKind, seed: int) -> TaskRecord:
    """Render one seed record as a task record.

    IQ2A passes the original pair through untouched.  I2QA asks for the
    pair with a deterministically chosen prompt and targets the marker
    format "Instruction: {Q} Answer: {A}".  IA2Q asks for the question
    given the answer and targets "Instruction: {Q}".
    """
    if kind is TaskKind.IQ2A:
        user, target = t.question, t.answer
    elif kind is TaskKind.I2QA:
        user = pick_deterministic(pair_prompts(), "i2qa", t.id, seed)
        target = f"{Q_MARKER} {t.question} {A_MARKER} {t.answer}"
    else:
        tpl = pick_deterministic(question_prompts(), "ia2q", t.id, seed)
        user = f"{tpl} {A_MARKER} {t.answer}"
        target = f"{Q_MARKER} {t.question}"
    return TaskRecord(t.id, t.image_ref, kind, system_prompt(), user, target)


def build_tasks(triplets: Sequence[Triplet], ratios: MaskRatios, seed: int) -> list[TaskRecord]:
    """Render a whole corpus; output order follows input order."""
    kinds = assign_masks(len(triplets), ratios, seed)
    return [render_record(t, k, seed) for t, k in zip(triplets, kinds)]


def parse_marked_output(text: str) -> tuple[str | None, str | None]:
    """Split marker-formatted model output into (question, answer).

    Either part may be None when its marker is absent or its span is
    blank.  Raises :class:`UnparseableOutput` when no marker yields any
    content.
    """
    qi = text.find(Q_MARKER)
    ai = text.find(A_MARKER)
    if qi == -1 and ai == -1:
        raise UnparseableOutput("output carries no field markers")
    question: str | None = None
    answer: str | None = None
    if qi != -1:
        end = ai if ai > qi else len(text)
        question = text[qi + len(Q_MARKER) : end].strip() or None
    if ai != -1:
        end = qi if qi > ai else len(text)
        answer = text[ai + len(A_MARKER) : end].strip() or None
    if question is None and answer is None:
        raise UnparseableOutput("field markers present but empty")
    return question, answer


def invert_record(rec: TaskRecord) -> tuple[str | None, str | None]:
    """Recover (question, answer) from a task record's target."""
    if rec.task_kind is TaskKind.IQ2A:
        return rec.user_prompt, rec.target
    return parse_marked_output(rec.target)


class MultiTaskTransformer(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper over corpus construction.

    ``ratios`` may be a :class:`MaskRatios` or a plain (p_both, p_q,
    p_a) triple.
    """

    def __init__(self, ratios: MaskRatios | tuple[float, float, float] | None = None, seed: int = 42):
        self.ratios = ratios
        self.seed = seed

    def _resolve_ratios(self) -> MaskRatios:
        if self.ratios is None:
            return MaskRatios.default()
        if isinstance(self.ratios, MaskRatios):
            return self.ratios
        return MaskRatios(*self.ratios)

    def fit(self, X=None, y=None) -> "MultiTaskTransformer":
        """No state to learn; present for pipeline compatibility."""
        return self

    def transform(self, X: Sequence[Triplet]) -> list[TaskRecord]:
        return build_tasks(X, self._resolve_ratios(), self.seed)


def task_to_dict(rec: TaskRecord) -> dict:
    return {
        "id": rec.id,
        "image": rec.image_ref,
        "task": rec.task_kind.value,
        "system": rec.system_prompt,
        "prompt": rec.user_prompt,
        "target": rec.target,
    }


def write_tasks(records: Iterable[TaskRecord], stream: IO[str]) -> int:
    n = 0
    for rec in records:
        stream.write(json.dumps(task_to_dict(rec), ensure_ascii=False) + "\n")
        n += 1
    return n


def read_tasks(stream: Iterable[str]) -> list[TaskRecord]:
    out: list[TaskRecord] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON: {e.msg}", line_no) from e
        missing = [k for k in ("id", "image", "task", "system", "prompt", "target") if k not in obj]
        if missing:
            raise MalformedRecord(f"missing keys: {', '.join(missing)}", line_no)
        if obj["task"] not in _KIND_BY_TAG:
            raise MalformedRecord(f"unknown task tag {obj['task']!r}", line_no)
        out.append(
            TaskRecord(
                id=obj["id"],
                image_ref=obj["image"],
                task_kind=_KIND_BY_TAG[obj["task"]],
                system_prompt=obj["system"],
                user_prompt=obj["prompt"],
                target=obj["target"],
            )
        )
    return out
