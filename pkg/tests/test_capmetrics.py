import math
from collections import Counter

import numpy as np
import pytest

from rsvla.capmetrics import (Caption, RankedRetrieval, RefSet, TripleSet,
                              bleu, build_idf, cider, meteor, ngram_counts,
                              recall_at_k, rouge_l, spice_f1, tokenize)


def naive_ngram_counts(tokens, n):
    """Independent oracle: explicit sliding window with list slicing."""
    out = Counter()
    for i in range(len(tokens)):
        window = tokens[i:i + n]
        if len(window) == n:
            out[tuple(window)] += 1
    return out


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("The CAT, sat!") == ["the", "cat", "sat"]

    def test_empty_and_pure_punct(self):
        assert tokenize("") == []
        assert tokenize("... !!! ,") == []

    def test_interior_punctuation_kept(self):
        assert tokenize("it's a co-op") == ["it's", "a", "co-op"]


class TestNgramCounts:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(20)
        vocab = ["a", "b", "c", "d"]
        for _ in range(200):
            length = int(rng.integers(0, 12))
            toks = [vocab[i] for i in rng.integers(0, 4, size=length)]
            for n in range(1, 5):
                assert ngram_counts(toks, n) == naive_ngram_counts(toks, n)

    def test_short_sequence_empty(self):
        assert ngram_counts(["a"], 2) == Counter()


class TestBleu:
    def test_self_match_is_one(self):
        c = Caption.from_text("a scene with two planes on the tarmac")
        for n in range(1, 5):
            assert bleu(c, RefSet((c,)), n) == pytest.approx(1.0, abs=1e-9)

    def test_worked_example_brevity_penalty(self):
        cand = Caption.from_tokens(["the", "cat", "sat"])
        refs = RefSet.from_texts(["the cat sat on the mat"])
        assert bleu(cand, refs, 1) == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_clipping(self):
        # "the" appears 7 times in the candidate but at most twice in the ref
        cand = Caption.from_tokens(["the"] * 7)
        refs = RefSet.from_texts(["the cat the mat"])
        score = bleu(cand, refs, 1)
        assert score == pytest.approx(2 / 7)

    def test_zero_precision_zeroes_score(self):
        cand = Caption.from_tokens(["x", "y"])
        refs = RefSet.from_texts(["a b c"])
        assert bleu(cand, refs, 2) == 0.0

    def test_missing_order_zeroes_without_smoothing(self):
        # unigram matches but no bigram does
        cand = Caption.from_tokens(["cat", "the"])
        refs = RefSet.from_texts(["the cat"])
        assert bleu(cand, refs, 1) > 0.0
        assert bleu(cand, refs, 2) == 0.0

    def test_closest_reference_tie_prefers_shorter(self):
        cand = Caption.from_tokens(["a", "b", "c"])
        refs = RefSet.from_texts(["a b", "a b c d"])
        # both refs are 1 away from length 3; r=2, so c > r gives BP=1
        assert bleu(cand, refs, 1) == pytest.approx(1.0)

    def test_no_penalty_when_candidate_longer(self):
        cand = Caption.from_tokens(["a", "b", "c", "d"])
        refs = RefSet.from_texts(["a b"])
        assert bleu(cand, refs, 1) == pytest.approx(0.5)

    def test_range(self):
        rng = np.random.default_rng(21)
        vocab = ["a", "b", "c", "d", "e"]
        for _ in range(200):
            cand = Caption.from_tokens(
                [vocab[i] for i in rng.integers(0, 5, size=rng.integers(1, 9))])
            refs = RefSet.from_texts([
                " ".join(vocab[i] for i in rng.integers(0, 5,
                                                        size=rng.integers(1, 9)))
                for _ in range(int(rng.integers(1, 4)))])
            for n in (1, 4):
                assert 0.0 <= bleu(cand, refs, n) <= 1.0 + 1e-12

    def test_empty_candidate_rejected(self):
        with pytest.raises(ValueError):
            bleu(Caption.from_text(""), RefSet.from_texts(["a"]), 1)


class TestMeteor:
    def test_self_match(self):
        c = Caption.from_text("river winds through farmland")
        # perfect order gives one chunk; Pen = 0.5 (1/m)^3
        m = len(c)
        expected = 1.0 * (1.0 - 0.5 * (1.0 / m) ** 3)
        assert meteor(c, c) == pytest.approx(expected)

    def test_no_match_is_zero(self):
        assert meteor(Caption.from_text("x y"), Caption.from_text("a b")) == 0.0

    def test_hand_computed(self):
        cand = Caption.from_tokens(["the", "cat"])
        ref = Caption.from_tokens(["cat", "the", "dog"])
        # matches 2, P=1, R=2/3, F=10PR/(R+9P); two chunks
        p, r = 1.0, 2.0 / 3.0
        f_mean = 10 * p * r / (r + 9 * p)
        pen = 0.5 * (2 / 2) ** 3
        assert meteor(cand, ref) == pytest.approx(f_mean * (1 - pen))

    def test_fragmentation_lowers_score(self):
        ref = Caption.from_tokens(["a", "b", "c", "d"])
        ordered = Caption.from_tokens(["a", "b", "c", "d"])
        scrambled = Caption.from_tokens(["b", "a", "d", "c"])
        assert meteor(scrambled, ref) < meteor(ordered, ref)

    def test_range(self):
        rng = np.random.default_rng(22)
        vocab = ["a", "b", "c"]
        for _ in range(200):
            cand = Caption.from_tokens(
                [vocab[i] for i in rng.integers(0, 3, size=rng.integers(1, 7))])
            ref = Caption.from_tokens(
                [vocab[i] for i in rng.integers(0, 3, size=rng.integers(1, 7))])
            assert 0.0 <= meteor(cand, ref) <= 1.0


class TestRougeL:
    def test_self_match(self):
        c = Caption.from_text("boats docked at the marina")
        assert rouge_l(c, c) == pytest.approx(1.0, abs=1e-9)

    def test_worked_example(self):
        cand = Caption.from_tokens(["a", "b", "c"])
        ref = Caption.from_tokens(["a", "c"])
        assert rouge_l(cand, ref) == pytest.approx(0.8, abs=1e-6)

    def test_subsequence_not_substring(self):
        cand = Caption.from_tokens(["a", "x", "b", "y", "c"])
        ref = Caption.from_tokens(["a", "b", "c"])
        # LCS is 3 even though tokens are not contiguous
        assert rouge_l(cand, ref) == pytest.approx(2 * (3 / 5) * 1.0 / (1.0 + 3 / 5))

    def test_disjoint_zero(self):
        assert rouge_l(Caption.from_text("x y"), Caption.from_text("a b")) == 0.0

    def test_lcs_against_brute_force(self):
        import itertools
        rng = np.random.default_rng(23)
        vocab = ["a", "b", "c"]
        for _ in range(50):
            x = [vocab[i] for i in rng.integers(0, 3, size=6)]
            y = [vocab[i] for i in rng.integers(0, 3, size=5)]
            best = 0
            for k in range(len(y), 0, -1):
                for sub in itertools.combinations(range(len(y)), k):
                    seq = [y[i] for i in sub]
                    it = iter(x)
                    if all(tok in it for tok in seq):
                        best = k
                        break
                if best:
                    break
            got = rouge_l(Caption.from_tokens(x), Caption.from_tokens(y))
            p = best / len(x) if best else 0.0
            r = best / len(y) if best else 0.0
            expected = 0.0 if best == 0 else 2 * p * r / (p + r)
            assert got == pytest.approx(expected)


def brute_force_cider(candidate, refs, corpus, n_max=4):
    """Independent oracle: dense TF-IDF vectors over the full gram space."""
    per_n = []
    for n in range(1, n_max + 1):
        grams = set()
        grams.update(ngram_counts(candidate.tokens, n))
        for refset in corpus:
            for ref in refset.references:
                grams.update(ngram_counts(ref.tokens, n))
        grams = sorted(grams)
        df = {g: 0 for g in grams}
        for refset in corpus:
            seen = set()
            for ref in refset.references:
                seen.update(ngram_counts(ref.tokens, n))
            for g in seen:
                df[g] += 1
        idf = {g: max(0.0, math.log(len(corpus) / (1 + df[g]))) for g in grams}

        def dense(tokens):
            counts = ngram_counts(tokens, n)
            total = sum(counts.values())
            return np.array([(counts.get(g, 0) / total) * idf[g] if total
                             else 0.0 for g in grams])

        gc = dense(candidate.tokens)
        sims = []
        for ref in refs.references:
            gr = dense(ref.tokens)
            na, nb = np.linalg.norm(gc), np.linalg.norm(gr)
            sims.append(0.0 if na == 0 or nb == 0
                        else float(gc @ gr) / (na * nb))
        per_n.append(sum(sims) / len(sims))
    return sum(per_n) / n_max


class TestCider:
    FIXTURE = [
        ["two planes parked on the tarmac", "aircraft on a gray runway"],
        ["a river winds through green farmland", "farmland split by a river"],
        ["boats docked at a small marina", "several boats tied to a dock"],
    ]

    def test_matches_brute_force_oracle(self):
        corpus = [RefSet.from_texts(t) for t in self.FIXTURE]
        candidates = ["two planes on the tarmac",
                      "a river through farmland",
                      "boats at the dock"]
        for cand_text, refs in zip(candidates, corpus):
            cand = Caption.from_text(cand_text)
            got = cider(cand, refs, corpus)
            want = brute_force_cider(cand, refs, corpus)
            assert got == pytest.approx(want, abs=1e-9)

    def test_common_grams_earn_zero_idf(self):
        # a unigram present in every image has idf log(3/4) < 0, floored to 0
        corpus = [RefSet.from_texts([f"the item {i}"]) for i in range(3)]
        idf = build_idf(corpus, 1)
        assert idf[("the",)] == 0.0
        assert idf[("item",)] == 0.0

    def test_range_and_no_scaling(self):
        corpus = [RefSet.from_texts(t) for t in self.FIXTURE]
        cand = Caption.from_text("two planes parked on the tarmac")
        score = cider(cand, corpus[0], corpus)
        assert 0.0 <= score <= 1.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            cider(Caption.from_text("a"), RefSet.from_texts(["a"]), [])


class TestSpice:
    def test_worked_example(self):
        cand = TripleSet.of(("cat", "on", "mat"))
        ref = TripleSet.of(("cat", "on", "mat"), ("mat", "is", "red"))
        assert spice_f1(cand, ref) == pytest.approx(2 / 3, abs=1e-6)

    def test_self_match(self):
        t = TripleSet.of(("a", "b", "c"), ("d", "e", "f"))
        assert spice_f1(t, t) == pytest.approx(1.0, abs=1e-9)

    def test_case_insensitive(self):
        a = TripleSet.of(("Cat", "On", "Mat"))
        b = TripleSet.of(("cat", "on", "mat"))
        assert spice_f1(a, b) == pytest.approx(1.0)

    def test_disjoint_and_empty(self):
        a = TripleSet.of(("a", "b", "c"))
        b = TripleSet.of(("x", "y", "z"))
        assert spice_f1(a, b) == 0.0
        assert spice_f1(TripleSet.of(), a) == 0.0


class TestRecallAtK:
    def test_worked_example(self):
        ranks = [RankedRetrieval(r) for r in (1, 3, 20)]
        assert recall_at_k(ranks, 1) == pytest.approx(1 / 3, abs=1e-6)
        assert recall_at_k(ranks, 5) == pytest.approx(2 / 3, abs=1e-6)
        assert recall_at_k(ranks, 10) == pytest.approx(2 / 3, abs=1e-6)

    def test_monotone_in_k(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            ranks = [RankedRetrieval(int(r))
                     for r in rng.integers(1, 50, size=rng.integers(1, 20))]
            prev = 0.0
            for k in range(1, 51):
                cur = recall_at_k(ranks, k)
                assert cur >= prev
                prev = cur
            assert prev == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            recall_at_k([], 1)
        with pytest.raises(ValueError):
            RankedRetrieval(0)
