"""Model backends for generation and reconstruction.

A model exposes three capabilities: propose a question-answer pair for
an image, answer a question about an image, and recover the question
behind an answer.  Failures surface as :class:`ModelError`, never as
silent empties.  Two implementations ship: a deterministic table-backed
mock for tests and offline runs, and an HTTP client for a remote
endpoint.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from typing import Iterable, Protocol

import requests

from .errors import MalformedRecord, ModelError, UnparseableOutput
from .records import QaType, strip_template
from .resources import pair_prompts, pick_deterministic
from .similarity import LONG_TEXT_TOKENS, normalize_answer, tokenize
from .taskgen import parse_marked_output

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.25


@dataclass(frozen=True)
class GeneratedQa:
    """A model-proposed pair, optionally with a declared category."""

    question: str
    answer: str
    qa_type: QaType | None = None


class ModelInterface(Protocol):
    """Pluggable generator contract used by the refinement loop."""

    def generate_qa(self, image_ref: str) -> GeneratedQa: ...

    def answer(self, image_ref: str, prompt: str) -> str: ...

    def question(self, image_ref: str, prompt: str) -> str: ...


_CHOICE_ANSWERS = {"yes", "no", "true", "false"}


def infer_qa_type(question: str, answer: str) -> QaType:
    """Best-effort category for a generated pair.

    Used only when the model does not declare a category itself; the
    caller is expected to flag the inference.
    """
    from .records import _has_box  # local import avoids a cycle at module load

    if _has_box(question) != _has_box(answer):
        return QaType.REGION
    norm = normalize_answer(answer)
    if re.fullmatch(r"[a-e]", norm) or norm in _CHOICE_ANSWERS:
        return QaType.CHOICE
    if not strip_template(question):
        # nothing but a fixed instruction, e.g. a caption request
        return QaType.CAPTION
    if len(tokenize(answer)) > LONG_TEXT_TOKENS:
        return QaType.VISUAL_CHAT
    return QaType.VQA


class TableModel:
    """Deterministic mock backed by a per-image table.

    Each row maps an image reference to its pair, an optional declared
    type tag, and optional ``q_prime`` / ``a_prime`` overrides returned
    by the reconstruction capabilities.  Without overrides the mock
    echoes the stored pair, which makes it a perfect reconstructor.
    """

    def __init__(self, rows: dict[str, dict]):
        self._rows = dict(rows)

    @classmethod
    def from_jsonl(cls, stream: Iterable[str]) -> "TableModel":
        rows: dict[str, dict] = {}
        for line_no, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"invalid JSON: {e.msg}", line_no) from e
            if "image" not in obj:
                raise MalformedRecord("missing key 'image'", line_no)
            rows[obj["image"]] = obj
        return cls(rows)

    def _row(self, image_ref: str) -> dict:
        row = self._rows.get(image_ref)
        if row is None:
            raise ModelError(f"no table entry for image {image_ref!r}")
        if row.get("fail"):
            raise ModelError(f"table entry for {image_ref!r} is marked failing")
        return row

    def generate_qa(self, image_ref: str) -> GeneratedQa:
        row = self._row(image_ref)
        try:
            question, answer = row["question"], row["answer"]
        except KeyError as e:
            raise ModelError(f"table entry for {image_ref!r} lacks {e}") from e
        tag = row.get("type")
        qa_type = None
        if tag is not None:
            try:
                qa_type = QaType(tag)
            except ValueError as e:
                raise ModelError(f"table entry for {image_ref!r} has bad type {tag!r}") from e
        return GeneratedQa(question, answer, qa_type)

    def answer(self, image_ref: str, prompt: str) -> str:
        row = self._row(image_ref)
        return row.get("a_prime", row.get("answer", ""))

    def question(self, image_ref: str, prompt: str) -> str:
        row = self._row(image_ref)
        return row.get("q_prime", row.get("question", ""))


class HttpModel:
    """Client for a remote model endpoint.

    Speaks POST /generate, /answer, /question with body
    ``{"image": ref, "prompt": text}`` and expects ``{"text": ...}``.
    Transient failures are retried with exponential backoff before a
    :class:`ModelError` is raised.
    """

    def __init__(
        self,
        base_url: str,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        timeout: float = 60.0,
        seed: int = 42,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.seed = seed
        self._session = session or requests.Session()

    def _post(self, path: str, image_ref: str, prompt: str) -> str:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    f"{self.base_url}{path}",
                    json={"image": image_ref, "prompt": prompt},
                    timeout=self.timeout,
                )
                if resp.status_code != 200:
                    raise ModelError(f"{path} returned status {resp.status_code}")
                body = resp.json()
                text = body["text"]
                if not isinstance(text, str):
                    raise ModelError(f"{path} reply field 'text' is not a string")
                return text
            except (requests.RequestException, ValueError, KeyError, ModelError) as e:
                last = e
        raise ModelError(f"{path} failed after {self.retries + 1} attempts: {last}")

    def generate_qa(self, image_ref: str) -> GeneratedQa:
        prompt = pick_deterministic(pair_prompts(), "i2qa", image_ref, self.seed)
        text = self._post("/generate", image_ref, prompt)
        try:
            question, answer = parse_marked_output(text)
        except UnparseableOutput as e:
            raise ModelError(f"unusable generation for {image_ref!r}: {e}") from e
        if question is None or answer is None:
            raise ModelError(f"generation for {image_ref!r} is missing a field")
        return GeneratedQa(question, answer, None)

    def answer(self, image_ref: str, prompt: str) -> str:
        return self._post("/answer", image_ref, prompt)

    def question(self, image_ref: str, prompt: str) -> str:
        return self._post("/question", image_ref, prompt)
