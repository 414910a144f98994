"""Reference-based text metrics for the held-out prediction study.

All metrics share one tokenization: lowercase, split on runs of
non-alphanumeric characters. The word-overlap metric is LCS-based with a
symmetric F1; the alignment metric matches exact unigrams only (no stems
or synonyms), with the chunk penalty computed over the minimum-fragment
monotone alignment of maximum size.
"""
from __future__ import annotations

import re
from typing import Optional, Sequence, Union

from .backends import EmbeddingBackend, EmbeddingRequest

Tokens = Union[str, Sequence[str]]

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _as_tokens(value: Tokens) -> list[str]:
    if isinstance(value, str):
        return tokenize(value)
    return [t.lower() for t in value]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic dynamic-programming longest common subsequence length."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS precision/recall with symmetric F1; 0.0 when either side is empty."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _best_alignment(cand: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """(matches, chunks) of the monotone exact-unigram alignment that first
    maximizes matches, then minimizes the number of contiguous chunks.

    DP over matching position pairs: best[(i, j)] holds (size, chunks) of
    the optimal alignment ending with cand[i] matched to ref[j].
    """
    pairs = [
        (i, j)
        for i, x in enumerate(cand)
        for j, y in enumerate(ref)
        if x == y
    ]
    if not pairs:
        return 0, 0
    pairs.sort()
    best: dict[tuple[int, int], tuple[int, int]] = {}
    overall = (0, 0)
    for i, j in pairs:
        value = (1, 1)
        for (pi, pj), (size, chunks) in best.items():
            if pi < i and pj < j:
                contiguous = pi == i - 1 and pj == j - 1
                cost = (size + 1, chunks + (0 if contiguous else 1))
                if cost[0] > value[0] or (cost[0] == value[0] and cost[1] < value[1]):
                    value = cost
        best[(i, j)] = value
        if value[0] > overall[0] or (value[0] == overall[0] and value[1] < overall[1]):
            overall = value
    return overall


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """Exact-match unigram alignment score with a fragmentation penalty.

    Fmean weights recall 9:1 over precision; penalty = 0.5 * (chunks/m)^3.
    """
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    matches, chunks = _best_alignment(cand, ref)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return fmean * (1 - penalty)


def _cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = sum(x * x for x in a) ** 0.5
    nb = sum(y * y for y in b) ** 0.5
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def bert_score(
    candidate: Tokens,
    reference: Tokens,
    embedder: Optional[EmbeddingBackend],
) -> Optional[float]:
    """Greedy-cosine token matching F1; None when no embedder is configured.

    None propagates to reports as the literal string "unavailable", never
    as a zero that would silently drag down averages.
    """
    if embedder is None:
        return None
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    cand_vecs = embedder.embed(EmbeddingRequest(" ".join(cand)))
    ref_vecs = embedder.embed(EmbeddingRequest(" ".join(ref)))
    precision = sum(max(_cosine(c, r) for r in ref_vecs) for c in cand_vecs) / len(cand_vecs)
    recall = sum(max(_cosine(r, c) for c in cand_vecs) for r in ref_vecs) / len(ref_vecs)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
