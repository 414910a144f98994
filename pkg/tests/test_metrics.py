import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialoguecraft.backends import ScriptedEmbeddingBackend
from dialoguecraft.metrics import bert_score, lcs_length, meteor, rouge_l, tokenize

VOCAB = ["the", "cat", "dog", "sat", "on", "a", "mat", "ran"]


# -- independent oracles -----------------------------------------------------

def lcs_oracle(a, b):
    """Plain recursive LCS, memoized; independent of the DP implementation."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def rouge_oracle(cand, ref):
    if not cand or not ref:
        return 0.0
    lcs = lcs_oracle(tuple(cand), tuple(ref))
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


def alignment_oracle(cand, ref):
    """Exhaustive search over monotone exact-match alignments:
    max matches first, then min chunks."""
    best = [0, 0]

    def rec(ci, rj_min, last, size, chunks):
        if size > best[0] or (size == best[0] and (best[0] == 0 or chunks < best[1])):
            best[0], best[1] = size, chunks
        if ci == len(cand):
            return
        rec(ci + 1, rj_min, last, size, chunks)  # skip this candidate token
        for rj in range(rj_min, len(ref)):
            if cand[ci] == ref[rj]:
                contiguous = last == (ci - 1, rj - 1)
                rec(ci + 1, rj + 1, (ci, rj), size + 1, chunks + (0 if contiguous else 1))

    rec(0, 0, None, 0, 0)
    return best[0], best[1]


def meteor_oracle(cand, ref):
    if not cand or not ref:
        return 0.0
    m, chunks = alignment_oracle(cand, ref)
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    return fmean * (1 - 0.5 * (chunks / m) ** 3)


# -- word-overlap metric -----------------------------------------------------

class TestRougeL:
    def test_identical_sequences(self):
        assert rouge_l("the cat sat", "the cat sat") == 1.0

    def test_the_cat_vs_the_dog(self):
        assert rouge_l("the cat", "the dog") == 0.5

    def test_disjoint_sequences(self):
        assert rouge_l("aa bb", "cc dd") == 0.0

    def test_empty_is_zero(self):
        assert rouge_l("", "anything") == 0.0
        assert rouge_l("anything", "") == 0.0

    def test_tokenization_lowercase_nonalnum(self):
        assert tokenize("The CAT, sat!") == ["the", "cat", "sat"]
        assert rouge_l("The CAT!", "the cat") == 1.0

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.sampled_from(VOCAB), max_size=8),
        st.lists(st.sampled_from(VOCAB), max_size=8),
    )
    def test_symmetry(self, a, b):
        assert rouge_l(a, b) == pytest.approx(rouge_l(b, a), abs=1e-12)

    def test_against_oracle_200_random_instances(self):
        rng = random.Random(20260824)
        for _ in range(200):
            cand = [rng.choice(VOCAB) for _ in range(rng.randint(0, 8))]
            ref = [rng.choice(VOCAB) for _ in range(rng.randint(0, 8))]
            assert rouge_l(cand, ref) == pytest.approx(rouge_oracle(cand, ref), abs=1e-9)


# -- alignment metric --------------------------------------------------------

class TestMeteor:
    @pytest.mark.parametrize("m", [1, 2, 4, 8])
    def test_identical_sequence_formula(self, m):
        tokens = VOCAB[:m] if m <= len(VOCAB) else [f"w{i}" for i in range(m)]
        assert meteor(tokens, tokens) == 1 - 0.5 / m**3

    def test_identical_four_tokens_value(self):
        assert meteor("a b c d", "a b c d") == 0.9921875

    def test_single_token_penalty(self):
        assert meteor("hello", "hello") == 0.5

    def test_zero_matches(self):
        assert meteor("aa bb", "cc dd") == 0.0

    def test_against_oracle_200_random_instances(self):
        rng = random.Random(20260824)
        for _ in range(200):
            cand = [rng.choice(VOCAB) for _ in range(rng.randint(0, 8))]
            ref = [rng.choice(VOCAB) for _ in range(rng.randint(0, 8))]
            assert meteor(cand, ref) == pytest.approx(meteor_oracle(cand, ref), abs=1e-9)


class TestLcs:
    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.sampled_from(VOCAB), max_size=8),
        st.lists(st.sampled_from(VOCAB), max_size=8),
    )
    def test_matches_recursive_oracle(self, a, b):
        assert lcs_length(a, b) == lcs_oracle(tuple(a), tuple(b))


# -- embedding metric --------------------------------------------------------

class TestBertScore:
    def test_identical_tokens_score_one(self):
        embedder = ScriptedEmbeddingBackend(dim=8)
        assert bert_score("the cat sat", "the cat sat", embedder) == pytest.approx(1.0)

    def test_orthogonal_embeddings_score_zero(self):
        embedder = ScriptedEmbeddingBackend(
            dim=2, vectors={"aa": [1.0, 0.0], "bb": [0.0, 1.0]}
        )
        assert bert_score("aa", "bb", embedder) == pytest.approx(0.0)

    def test_unconfigured_backend_is_unavailable(self):
        assert bert_score("a", "b", None) is None
