"""Closed toy vocabulary and prompt-to-condition-id encoding.

The denoisers condition on a mean-pooled embedding of the prompt tokens.
The vocabulary is a small closed set (nouns, adjectives, style and position
words used by the rule grammar); anything else maps to the OOV id 0.
"""

from __future__ import annotations

import re

OOV = 0

_WORDS = [
    # nouns
    "cat", "dog", "tree", "house", "circle", "square", "girl", "boy",
    "window", "bookshelf", "sky", "mountain", "flower", "bird", "car",
    "fish", "moon", "sun", "star", "cloud", "lake", "robot", "castle",
    # style / texture words
    "blob", "blobs", "stripe", "stripes", "striped", "soft", "smooth",
    "vertical", "horizontal", "banded", "anime", "cartoon", "manga",
    "photo", "realistic", "photorealistic", "realism",
    # colors and simple adjectives
    "red", "blue", "green", "yellow", "black", "white", "big", "small",
    "bright", "dark", "fluffy", "playful",
    # positions
    "left", "right", "top", "bottom", "center",
]

VOCAB: dict[str, int] = {w: i + 1 for i, w in enumerate(_WORDS)}
VOCAB_SIZE = len(_WORDS) + 1  # plus OOV

_TOKEN_RE = re.compile(r"[a-z]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def encode(text: str) -> tuple[int, ...]:
    """Map a prompt to condition ids; unknown words become OOV."""
    return tuple(VOCAB.get(tok, OOV) for tok in tokenize(text))
