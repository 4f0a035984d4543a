"""Text normalization, tokenization, and stable hashed features.

Every piece of the pipeline that touches free text goes through these
helpers so that normalization is applied exactly one way everywhere.
Hashing is keyed on a fixed digest, not the process-salted builtin
``hash``, so feature vectors are reproducible across runs.
"""

from __future__ import annotations

import hashlib
import re
import string

import numpy as np

_WS_RE = re.compile(r"\s+")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_surface(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return _WS_RE.sub(" ", text.strip().lower())


def normalize_name(text: str) -> str:
    """Surface normalization plus punctuation removal.

    This is the canonical form used for merging and duplicate detection,
    so "Tele-metry" and "telemetry" normalize identically.
    """
    stripped = normalize_surface(text).translate(_PUNCT_TABLE)
    return _WS_RE.sub(" ", stripped).strip()


def tokenize(text: str) -> list[str]:
    """Split into normalized word tokens; empty input yields an empty list."""
    return [t for t in normalize_name(text).split(" ") if t]


def stable_bucket(key: str, buckets: int) -> int:
    """Map a string to a bucket index, stable across processes."""
    digest = hashlib.blake2s(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


def char_trigrams(token: str) -> list[str]:
    padded = f"#{token}#"
    if len(padded) < 3:
        return [padded]
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def hashed_text_features(text: str, dim: int) -> np.ndarray:
    """Hashed bag of word tokens and character trigrams, L2-normalized.

    Repeating the same token scales all its counts together, so the
    normalized vector depends only on relative token frequencies.
    An input with no tokens maps to the zero vector.
    """
    if dim <= 0:
        raise ValueError(f"feature dimension must be positive, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokenize(text):
        vec[stable_bucket("w:" + tok, dim)] += 1.0
        for tri in char_trigrams(tok):
            vec[stable_bucket("c:" + tri, dim)] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec
