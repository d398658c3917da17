"""Shared text primitives for the caption metrics.

Tokenization is deliberately simple (lowercase, punctuation stripped to
spaces, whitespace split) and is the single tokenizer used by every metric
here, so absolute scores are comparable across metrics but not bit-equal
to any legacy toolkit.
"""

from __future__ import annotations

import string
from collections import Counter
from typing import Iterable

_PUNCT = string.punctuation + "‘’“”…–—"
_PUNCT_TABLE = str.maketrans({ch: " " for ch in _PUNCT})


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation to spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def ngram_counts(tokens: Iterable[str], n: int) -> Counter:
    """Counts of order-n ngrams (as tuples) in a token sequence."""
    tokens = list(tokens)
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
