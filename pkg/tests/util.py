"""Shared test data generators."""

from __future__ import annotations

import random

#: 30-word vocabulary with inflection pairs so the stemmed matching stage
#: of meteor_lite actually fires
VOCAB = [
    "a", "the", "plane", "planes", "parked", "parking", "park", "ships",
    "ship", "road", "roads", "green", "tree", "trees", "field", "fields",
    "near", "on", "in", "large", "small", "runway", "runways", "building",
    "buildings", "white", "cars", "car", "driving", "drive",
]


def random_sentence(rng: random.Random, max_len: int = 9) -> str:
    words = [rng.choice(VOCAB) for _ in range(rng.randint(1, max_len))]
    if rng.random() < 0.3:
        words[0] = words[0].capitalize()
    text = " ".join(words)
    if rng.random() < 0.3:
        text += rng.choice([".", ",", "!"])
    return text


def random_caption_corpus(
    rng: random.Random,
    min_items: int = 2,
    max_items: int = 10,
    max_refs: int = 4,
) -> list[tuple[str, list[str]]]:
    corpus = []
    for _ in range(rng.randint(min_items, max_items)):
        candidate = random_sentence(rng)
        references = [random_sentence(rng) for _ in range(rng.randint(1, max_refs))]
        # bias some items toward real overlap so precisions are not all zero
        if rng.random() < 0.5:
            references[0] = candidate if rng.random() < 0.3 else candidate + " " + rng.choice(VOCAB)
        corpus.append((candidate, references))
    return corpus
