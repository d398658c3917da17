"""Caption metrics: corpus BLEU, ROUGE-L, meteor_lite, and CIDEr-D.

All four operate on a corpus of ``(candidate, references)`` string pairs
and share :func:`skyeye_forge.metrics.text.tokenize`. Scores are fractions
in their natural ranges (CIDEr-D per item in [0, 10]); table renderers
apply the x100 presentation scaling.

Formula contracts implemented here (and mirrored by the brute-force test
oracles):

* BLEU-n: corpus-level clipped modified n-gram precision p_k for k <= n,
  geometric mean ``exp(sum (1/n) log p_k)`` times the brevity penalty
  ``min(1, exp(1 - r/c))`` with r the closest-reference length (ties go to
  the shorter ref). Any p_k = 0 gives score 0; there is no smoothing.
* ROUGE-L: per item, the maximum over references of the LCS-based F-score
  with beta = 1.2; corpus score is the item mean.
* meteor_lite: two matching stages (exact, then Porter-stemmed) aligning
  each candidate token to the leftmost free reference token; with m
  matches in ch contiguous chunks, score = F_mean * (1 - 0.5*(ch/m)^3)
  where F_mean = P*R / (0.9*P + 0.1*R). Per item max over references,
  corpus mean. No synonym stage, hence the _lite suffix.
* CIDEr-D: n = 1..4, tf-idf vectors with idf = log(N) - log(max(1, df))
  over the evaluated corpus's references, ref-clipped cosine similarity,
  Gaussian length penalty exp(-(|c|-|r|)^2 / (2*6^2)), x10 scaling, mean
  over references then over n, corpus mean over items.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from ..errors import ValidationError
from .stemming import porter_stem
from .text import ngram_counts, tokenize

Corpus = Sequence[tuple[str, Sequence[str]]]

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4
ROUGE_BETA = 1.2


def _check_corpus(corpus: Corpus) -> None:
    if not corpus:
        raise ValidationError("metric corpus is empty")
    for candidate, references in corpus:
        if not references:
            raise ValidationError("corpus item has no references")


def _closest_ref_len(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu(corpus: Corpus, n: int) -> float:
    """Corpus-level BLEU-n without smoothing."""
    _check_corpus(corpus)
    if n < 1:
        raise ValidationError(f"BLEU order must be >= 1, got {n}")
    clipped = [0] * n
    guess = [0] * n
    cand_total = 0
    ref_total = 0
    for candidate, references in corpus:
        cand_tokens = tokenize(candidate)
        ref_tokens = [tokenize(r) for r in references]
        cand_total += len(cand_tokens)
        ref_total += _closest_ref_len(len(cand_tokens), [len(r) for r in ref_tokens])
        for k in range(1, n + 1):
            cand_counts = ngram_counts(cand_tokens, k)
            max_ref: Counter = Counter()
            for rt in ref_tokens:
                for ngram, count in ngram_counts(rt, k).items():
                    if count > max_ref[ngram]:
                        max_ref[ngram] = count
            clipped[k - 1] += sum(min(c, max_ref[g]) for g, c in cand_counts.items())
            guess[k - 1] += sum(cand_counts.values())
    if cand_total == 0:
        return 0.0
    log_sum = 0.0
    for k in range(n):
        if guess[k] == 0 or clipped[k] == 0:
            return 0.0
        log_sum += math.log(clipped[k] / guess[k]) / n
    brevity = min(1.0, math.exp(1.0 - ref_total / cand_total))
    return brevity * math.exp(log_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        row = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[len(b)]


def _rouge_pair(cand: Sequence[str], ref: Sequence[str]) -> float:
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    beta_sq = ROUGE_BETA * ROUGE_BETA
    return ((1 + beta_sq) * precision * recall) / (recall + beta_sq * precision)


def rouge_l(corpus: Corpus) -> float:
    """Mean over items of the best-reference LCS F-score (beta = 1.2)."""
    _check_corpus(corpus)
    total = 0.0
    for candidate, references in corpus:
        cand_tokens = tokenize(candidate)
        total += max(_rouge_pair(cand_tokens, tokenize(r)) for r in references)
    return total / len(corpus)


def _align_stage(
    cand_keys: Sequence[str],
    ref_keys: Sequence[str],
    cand_free: list[bool],
    ref_free: list[bool],
) -> list[tuple[int, int]]:
    """Leftmost-greedy matching of equal keys among still-free positions."""
    pairs = []
    for i, key in enumerate(cand_keys):
        if not cand_free[i]:
            continue
        for j, ref_key in enumerate(ref_keys):
            if ref_free[j] and ref_key == key:
                pairs.append((i, j))
                cand_free[i] = False
                ref_free[j] = False
                break
    return pairs


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _meteor_pair(cand: Sequence[str], ref: Sequence[str]) -> float:
    if not cand or not ref:
        return 0.0
    cand_free = [True] * len(cand)
    ref_free = [True] * len(ref)
    pairs = _align_stage(cand, ref, cand_free, ref_free)
    cand_stems = [porter_stem(t) for t in cand]
    ref_stems = [porter_stem(t) for t in ref]
    pairs += _align_stage(cand_stems, ref_stems, cand_free, ref_free)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (_count_chunks(pairs) / matches) ** METEOR_BETA
    return f_mean * (1.0 - penalty)


def meteor_lite(corpus: Corpus) -> float:
    """METEOR restricted to exact + stemmed matching stages."""
    _check_corpus(corpus)
    total = 0.0
    for candidate, references in corpus:
        cand_tokens = tokenize(candidate)
        total += max(_meteor_pair(cand_tokens, tokenize(r)) for r in references)
    return total / len(corpus)


def _tfidf_vectors(
    tokens: Sequence[str], doc_freq: Counter, log_num_items: float
) -> tuple[list[dict], list[float]]:
    vectors: list[dict] = []
    norms: list[float] = []
    for k in range(1, CIDER_MAX_N + 1):
        vec = {}
        norm_sq = 0.0
        for ngram, count in ngram_counts(tokens, k).items():
            weight = count * (log_num_items - math.log(max(1.0, doc_freq[ngram])))
            vec[ngram] = weight
            norm_sq += weight * weight
        vectors.append(vec)
        norms.append(math.sqrt(norm_sq))
    return vectors, norms


def cider(corpus: Corpus) -> float:
    """CIDEr-D with corpus-level IDF; needs >= 2 items for a defined IDF."""
    _check_corpus(corpus)
    if len(corpus) < 2:
        raise ValidationError("IDF degenerate: CIDEr needs a corpus of at least 2 items")
    tokenized = [
        (tokenize(candidate), [tokenize(r) for r in references])
        for candidate, references in corpus
    ]
    doc_freq: Counter = Counter()
    for _, refs in tokenized:
        seen = set()
        for ref in refs:
            for k in range(1, CIDER_MAX_N + 1):
                seen.update(ngram_counts(ref, k))
        doc_freq.update(seen)
    log_num_items = math.log(len(tokenized))

    total = 0.0
    for cand_tokens, refs in tokenized:
        cand_vecs, cand_norms = _tfidf_vectors(cand_tokens, doc_freq, log_num_items)
        sims = [0.0] * CIDER_MAX_N
        for ref_tokens in refs:
            ref_vecs, ref_norms = _tfidf_vectors(ref_tokens, doc_freq, log_num_items)
            delta = len(cand_tokens) - len(ref_tokens)
            gauss = math.exp(-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA))
            for k in range(CIDER_MAX_N):
                if cand_norms[k] == 0.0 or ref_norms[k] == 0.0:
                    continue
                dot = 0.0
                for ngram, weight in cand_vecs[k].items():
                    ref_weight = ref_vecs[k].get(ngram, 0.0)
                    dot += min(weight, ref_weight) * ref_weight
                sims[k] += gauss * dot / (cand_norms[k] * ref_norms[k])
        item_score = 10.0 * sum(s / len(refs) for s in sims) / CIDER_MAX_N
        total += item_score
    return total / len(tokenized)


def length_ratio(corpus: Corpus) -> float:
    """Total candidate tokens over total closest-reference tokens.

    Reported alongside CIDEr because length mismatch is the usual cause of
    implausibly low CIDEr on otherwise good generations.
    """
    _check_corpus(corpus)
    cand_total = 0
    ref_total = 0
    for candidate, references in corpus:
        cand_len = len(tokenize(candidate))
        cand_total += cand_len
        ref_total += _closest_ref_len(cand_len, [len(tokenize(r)) for r in references])
    return cand_total / ref_total if ref_total else 0.0
