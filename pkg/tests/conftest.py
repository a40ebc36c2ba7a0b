"""Shared fixtures: a deterministic mixed corpus and tiny HTTP stubs."""

from __future__ import annotations

import hashlib
import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from triloop.consistency import Reconstruction
from triloop.records import BoundingBox, QaType, Triplet

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

NOUNS = [
    "lamp", "bicycle", "kettle", "statue", "window", "ladder", "pigeon",
    "awning", "barrel", "mailbox", "scooter", "bench", "fountain", "crate",
]
COLORS = ["red", "blue", "green", "amber", "violet", "grey", "teal"]
ADJS = ["rusty", "narrow", "tilted", "painted", "broken", "shaded", "wet"]
FILLER = [
    "the", "a", "near", "beside", "under", "with", "its", "while", "and",
    "slightly", "toward", "old", "quiet", "café", "naïve", "corner", "street",
    "light", "morning", "shadow", "wall", "edge", "line", "stone", "metal",
]

SHORT_WORD = "Answer the question using a single word or phrase."
CHOICE_LETTER = "Answer with the option's letter from the given choices directly."
GROUND_BOX = (
    "Please provide the bounding box coordinate of the region this sentence describes:"
)
DESCRIBE_REGION = "Please provide a short description for this region:"
CAPTION_PLAIN = "Provide a one-sentence caption for the provided image."


def box_text(x1: float, y1: float, x2: float, y2: float) -> str:
    return BoundingBox(x1, y1, x2, y2).to_text()


def make_triplet(
    id: str = "t-1",
    image_ref: str = "img-1.jpg",
    qa_type: QaType = QaType.VQA,
    question: str = "What color is the lamp?",
    answer: str = "red",
) -> Triplet:
    return Triplet(id=id, image_ref=image_ref, qa_type=qa_type,
                   question=question, answer=answer)


def _words(rng: np.random.Generator, pool: list[str], k: int) -> str:
    return " ".join(pool[i] for i in rng.integers(0, len(pool), size=k))


def _long_sentence(rng: np.random.Generator, k: int) -> str:
    body = _words(rng, FILLER, k - 4)
    return f"The {_words(rng, ADJS, 1)} {_words(rng, NOUNS, 1)} sits {body} there."


def _rand_box(rng: np.random.Generator) -> tuple[float, float, float, float]:
    x1 = round(float(rng.uniform(0.0, 0.55)), 2)
    y1 = round(float(rng.uniform(0.0, 0.55)), 2)
    w = round(float(rng.uniform(0.1, 0.4)), 2)
    h = round(float(rng.uniform(0.1, 0.4)), 2)
    return x1, y1, min(1.0, round(x1 + w, 2)), min(1.0, round(y1 + h, 2))


def _shift_box(box: tuple, delta: float) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = box
    dx = min(delta, 1.0 - x2)
    dy = min(delta, 1.0 - y2)
    return round(x1 + dx, 3), round(y1 + dy, 3), round(x2 + dx, 3), round(y2 + dy, 3)


def _base_pair(rng: np.random.Generator, kind: QaType, i: int) -> tuple[str, str]:
    if kind is QaType.VQA:
        q = f"What color is the {NOUNS[i % len(NOUNS)]}? {SHORT_WORD}"
        return q, COLORS[int(rng.integers(0, len(COLORS)))]
    if kind is QaType.VISUAL_CHAT:
        q = f"Describe what is happening around the {NOUNS[i % len(NOUNS)]}."
        return q, _long_sentence(rng, int(rng.integers(28, 40)))
    if kind is QaType.REGION:
        box = _rand_box(rng)
        phrase = f"the {ADJS[i % len(ADJS)]} {NOUNS[i % len(NOUNS)]}"
        if i % 2 == 0:
            return f"{GROUND_BOX} {phrase}", box_text(*box)
        return f"{DESCRIBE_REGION} {box_text(*box)}", phrase
    if kind is QaType.CAPTION:
        k = int(rng.integers(27, 34)) if i % 10 == 0 else int(rng.integers(8, 14))
        return CAPTION_PLAIN, _long_sentence(rng, k)
    q = (
        f"Which object is {ADJS[i % len(ADJS)]}? A. {NOUNS[0]} B. {NOUNS[1]} "
        f"C. {NOUNS[2]} D. {NOUNS[3]} {CHOICE_LETTER}"
    )
    return q, "ABCD"[int(rng.integers(0, 4))]


def _perturb_text(rng: np.random.Generator, text: str, strength: int) -> str:
    toks = text.split()
    if not toks:
        return _words(rng, FILLER, 3)
    for _ in range(min(strength, len(toks))):
        toks[int(rng.integers(0, len(toks)))] = FILLER[int(rng.integers(0, len(FILLER)))]
    return " ".join(toks)


def _perturb_box_side(rng: np.random.Generator, text: str, delta: float) -> str:
    from triloop.records import parse_bbox

    box = parse_bbox(text)
    shifted = _shift_box((box.x1, box.y1, box.x2, box.y2), delta)
    return box_text(*shifted)


def build_fixture_corpus(
    n: int = 200, seed: int = 1234
) -> list[tuple[Triplet, Reconstruction]]:
    """Mixed-category corpus with reconstructions of graded faithfulness.

    Roughly a third of the reconstructions are exact copies so score ties
    at 1.0 (and at 0.0 from the garbage tail) are guaranteed to straddle
    the retention cut.
    """
    rng = np.random.default_rng(seed)
    kinds = list(QaType)
    out: list[tuple[Triplet, Reconstruction]] = []
    for i in range(n):
        kind = kinds[i % len(kinds)]
        q, a = _base_pair(rng, kind, i)
        t = Triplet(id=f"fx-{i:04d}", image_ref=f"img-{i:04d}.jpg",
                    qa_type=kind, question=q, answer=a)
        roll = float(rng.random())
        has_box_answer = kind is QaType.REGION and not t.box_on_question
        if roll < 0.35:
            q2, a2 = q, a
        elif roll < 0.55:
            q2 = q if kind is QaType.REGION and t.box_on_question else _perturb_text(rng, q, 1)
            if has_box_answer:
                a2 = _perturb_box_side(rng, a, 0.02)
            elif kind is QaType.CHOICE:
                a2 = a.lower() + "."
            else:
                a2 = _perturb_text(rng, a, 1)
            if kind is QaType.REGION and t.box_on_question:
                q2 = _perturb_box_side(rng, q, 0.02)
        elif roll < 0.75:
            q2 = _perturb_text(rng, q, 4)
            if has_box_answer:
                a2 = _perturb_box_side(rng, a, 0.3)
            elif kind is QaType.CHOICE:
                a2 = "ABCD"[int(rng.integers(0, 4))]
            else:
                a2 = _perturb_text(rng, a, 5)
            if kind is QaType.REGION and t.box_on_question:
                q2 = _perturb_box_side(rng, q, 0.3)
        elif roll < 0.85:
            q2, a2 = q, _words(rng, FILLER, 6)
        elif roll < 0.93:
            if kind in (QaType.CAPTION, QaType.CHOICE):
                q2, a2 = q, ""
            else:
                q2, a2 = "", a
        else:
            q2, a2 = "??? %%%", "[0.1, 0.2, 0.3] not a box [9]"
        out.append((t, Reconstruction(t.id, q2, a2)))
    return out


@pytest.fixture(scope="session")
def fixture_corpus() -> list[tuple[Triplet, Reconstruction]]:
    return build_fixture_corpus()


# --- deterministic embedding provider -----------------------------------

EMBED_DIM = 16


def hashed_token_vector(token: str, dim: int = EMBED_DIM) -> np.ndarray:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    vec = np.zeros(dim)
    vec[int.from_bytes(h[:4], "big") % dim] = 1.0
    return vec


def hashed_sentence_vector(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    from triloop.similarity import tokenize

    toks = tokenize(text)
    if not toks:
        vec = np.zeros(dim)
        vec[0] = 1.0
        return vec
    total = np.zeros(dim)
    for tok in toks:
        total += hashed_token_vector(tok, dim)
    return total / np.linalg.norm(total)


class HashProvider:
    """In-process stand-in for the embedding service."""

    def sentence_vector(self, text: str) -> np.ndarray:
        return hashed_sentence_vector(text)

    def token_vectors(self, text: str) -> np.ndarray:
        from triloop.similarity import tokenize

        toks = tokenize(text)
        return np.array([hashed_token_vector(t) for t in toks]).reshape(len(toks), EMBED_DIM)


# --- HTTP stubs ----------------------------------------------------------


class StubServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


@contextmanager
def http_stub(handler_cls):
    server = StubServer(("127.0.0.1", 0), handler_cls)
    server.request_log = []
    server.fail_next = 0
    server.bad_norm = False
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()


class EmbedHandler(BaseHTTPRequestHandler):
    """Implements the embedding wire contract over hashed vectors."""

    def log_message(self, *args):
        pass

    def _reply(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != "/embed":
            self._reply(404, {"error": "no such route"})
            return
        raw = self.rfile.read(int(self.headers.get("Content-Length", "0")))
        req = json.loads(raw)
        self.server.request_log.append(req)
        if self.server.fail_next > 0:
            self.server.fail_next -= 1
            self._reply(500, {"error": "transient"})
            return
        texts = req["texts"]
        scale = 2.0 if self.server.bad_norm else 1.0
        if req.get("granularity", "sentence") == "token":
            from triloop.similarity import tokenize

            vectors = [
                [(hashed_token_vector(t) * scale).tolist() for t in tokenize(text)]
                for text in texts
            ]
        else:
            vectors = [(hashed_sentence_vector(t) * scale).tolist() for t in texts]
        self._reply(200, {"dim": EMBED_DIM, "vectors": vectors})
