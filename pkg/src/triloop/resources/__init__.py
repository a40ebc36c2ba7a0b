"""Access to the packaged prompt templates.

The template file is versioned data, not code: regenerating a dataset
with the same package version must produce the same prompts byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from importlib.resources import files
from typing import Sequence


@lru_cache(maxsize=1)
def _load() -> dict:
    raw = files("triloop.resources").joinpath("templates.json").read_text("utf-8")
    return json.loads(raw)


def system_prompt() -> str:
    """Fixed system prompt shared by all generated tasks."""
    return _load()["system_prompt"]


def pair_prompts() -> list[str]:
    """Prompt variants asking for a full question-answer pair."""
    return list(_load()["pair_prompts"])


def question_prompts() -> list[str]:
    """Prompt variants asking for the question given the answer."""
    return list(_load()["question_prompts"])


def fixed_instructions() -> list[str]:
    """Fixed-format instruction spans appended by dataset converters."""
    return list(_load()["fixed_instructions"])


def pick_deterministic(options: Sequence[str], *key_parts: object) -> str:
    """Choose one of ``options`` as a pure function of the key parts.

    Uses a stable hash, so the choice survives interpreter restarts and
    does not depend on PYTHONHASHSEED.
    """
    if not options:
        raise ValueError("no options to choose from")
    key = ":".join(str(p) for p in key_parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return options[int.from_bytes(digest, "big") % len(options)]
