"""Core data model: typed question-answer records and their JSONL form.

A dataset is a stream of image-question-answer triplets, one JSON object
per line.  Five task categories are recognized; region records must carry
a coordinate box on exactly one side.  Reading and writing round-trip
byte-identically on the field values, which downstream determinism
checks rely on.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import DuplicateId, InvalidBox, MalformedRecord, NoBox, RecordError
from .resources import fixed_instructions


class QaType(enum.Enum):
    """Task category of a record; values are the wire tags."""

    VQA = "vqa"
    VISUAL_CHAT = "visual_chat"
    REGION = "region"
    CAPTION = "caption"
    CHOICE = "choice"


_TYPE_BY_TAG = {t.value: t for t in QaType}

# Decimal quadruple in square brackets, e.g. [0.82, 0.83, 0.97, 0.98].
# Negative values are captured here so they fail range validation rather
# than being reported as "no box found".
_BOX_RE = re.compile(
    r"\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)"
    r"\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\]"
)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized image coordinates.

    Corners are (x1, y1) top-left and (x2, y2) bottom-right with
    0 <= x1 <= x2 <= 1 and 0 <= y1 <= y2 <= 1.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not 0.0 <= v <= 1.0:
                raise InvalidBox(f"coordinate {v!r} outside [0, 1]")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise InvalidBox("corners out of order")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_text(self) -> str:
        # repr() keeps the shortest round-tripping decimal form
        return "[{}, {}, {}, {}]".format(
            repr(self.x1), repr(self.y1), repr(self.x2), repr(self.y2)
        )


def parse_bbox(text: str) -> BoundingBox:
    """Extract the single coordinate quadruple embedded in ``text``.

    Surrounding prose is ignored.  Raises :class:`NoBox` when zero or
    several quadruples are present, :class:`InvalidBox` when the one
    found violates the range or corner ordering.
    """
    matches = _BOX_RE.findall(text)
    if len(matches) != 1:
        raise NoBox(f"expected exactly one coordinate quadruple, found {len(matches)}")
    x1, y1, x2, y2 = (float(g) for g in matches[0])
    return BoundingBox(x1, y1, x2, y2)


def _has_box(text: str) -> bool:
    try:
        parse_bbox(text)
    except (NoBox, InvalidBox):
        return False
    return True


@dataclass(frozen=True)
class Triplet:
    """One image-question-answer record."""

    id: str
    image_ref: str
    qa_type: QaType
    question: str
    answer: str

    def __post_init__(self) -> None:
        if not self.id:
            raise RecordError("id must be non-empty")
        if not self.image_ref:
            raise RecordError("image reference must be non-empty")
        if not isinstance(self.qa_type, QaType):
            raise RecordError(f"unknown type {self.qa_type!r}")
        if not self.question.strip():
            raise RecordError("question must be non-empty")
        if not self.answer.strip():
            raise RecordError("answer must be non-empty")
        if self.qa_type is QaType.REGION:
            sides = _has_box(self.question) + _has_box(self.answer)
            if sides != 1:
                raise RecordError(
                    f"region record needs a box on exactly one side, found {sides}"
                )

    @property
    def box_on_question(self) -> bool:
        """True when the coordinate side of a region record is the question."""
        if self.qa_type is not QaType.REGION:
            raise RecordError("only region records carry a box")
        return _has_box(self.question)


# Longest spans first, so a span that extends another is removed whole.
_SPANS_BY_LENGTH = sorted(fixed_instructions(), key=len, reverse=True)


def strip_template(text: str) -> str:
    """Remove every fixed-format instruction span from ``text``.

    Each removed span is replaced by a single space so that the
    surrounding words never fuse into new ones; the result is trimmed.
    Applying the function twice gives the same output as applying it
    once.
    """
    out = text
    while True:
        hit = False
        for span in _SPANS_BY_LENGTH:
            if span in out:
                out = out.replace(span, " ")
                hit = True
        if not hit:
            return out.strip()


def triplet_from_dict(obj: dict) -> Triplet:
    """Build a :class:`Triplet` from a decoded JSON object."""
    if not isinstance(obj, dict):
        raise MalformedRecord(f"expected an object, got {type(obj).__name__}")
    missing = [k for k in ("id", "image", "type", "question", "answer") if k not in obj]
    if missing:
        raise MalformedRecord(f"missing keys: {', '.join(missing)}")
    tag = obj["type"]
    if tag not in _TYPE_BY_TAG:
        raise MalformedRecord(f"unknown type tag {tag!r}")
    for key in ("id", "image", "question", "answer"):
        if not isinstance(obj[key], str):
            raise MalformedRecord(f"field {key!r} must be a string")
    return Triplet(
        id=obj["id"],
        image_ref=obj["image"],
        qa_type=_TYPE_BY_TAG[tag],
        question=obj["question"],
        answer=obj["answer"],
    )


def triplet_to_dict(t: Triplet) -> dict:
    return {
        "id": t.id,
        "image": t.image_ref,
        "type": t.qa_type.value,
        "question": t.question,
        "answer": t.answer,
    }


def read_triplets(stream: Iterable[str]) -> list[Triplet]:
    """Parse a JSONL stream into triplets.

    Blank lines are skipped.  Parse and validation failures raise
    :class:`MalformedRecord` carrying the 1-based line number; repeated
    ids raise :class:`DuplicateId`.
    """
    out: list[Triplet] = []
    seen: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON: {e.msg}", line_no) from e
        try:
            t = triplet_from_dict(obj)
        except MalformedRecord as e:
            raise MalformedRecord(e.reason, line_no) from e
        except RecordError as e:
            raise MalformedRecord(str(e), line_no) from e
        if t.id in seen:
            raise DuplicateId(f"id {t.id!r} appears more than once (line {line_no})")
        seen.add(t.id)
        out.append(t)
    return out


def write_triplets(records: Iterable[Triplet], stream: IO[str]) -> int:
    """Write triplets as JSONL, one object per line; returns the count."""
    n = 0
    seen: set[str] = set()
    for t in records:
        if t.id in seen:
            raise DuplicateId(f"id {t.id!r} appears more than once")
        seen.add(t.id)
        stream.write(json.dumps(triplet_to_dict(t), ensure_ascii=False) + "\n")
        n += 1
    return n


def iter_manifest(stream: Iterable[str]) -> Iterator[str]:
    """Yield image references from a manifest, one per non-blank line."""
    for line in stream:
        ref = line.strip()
        if ref:
            yield ref
