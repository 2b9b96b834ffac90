"""Caption and retrieval evaluation metrics.

Sentence-level BLEU-N with brevity penalty, exact-match METEOR, ROUGE-L,
TF-IDF CIDEr, SPICE-style F1 over externally supplied triple sets, and
recall@k. All scores live in [0, 1]; CIDEr carries no x10 scaling (callers
that want comparability with published numbers multiply themselves).
"""
from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Sequence, Tuple

__all__ = [
    "Caption", "RefSet", "TripleSet", "RankedRetrieval",
    "tokenize", "ngram_counts", "bleu", "meteor", "rouge_l", "cider",
    "spice_f1", "recall_at_k",
]

_STRIP = string.punctuation


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip edge ASCII punctuation, drop empties."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP)
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class Caption:
    raw: str
    tokens: Tuple[str, ...]

    @classmethod
    def from_text(cls, text: str) -> "Caption":
        return cls(text, tuple(tokenize(text)))

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Caption":
        return cls(" ".join(tokens), tuple(tokens))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class RefSet:
    references: Tuple[Caption, ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError("reference set is empty")
        if any(len(r) == 0 for r in self.references):
            raise ValueError("empty reference caption")
        object.__setattr__(self, "references", tuple(self.references))

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "RefSet":
        return cls(tuple(Caption.from_text(t) for t in texts))


@dataclass(frozen=True)
class TripleSet:
    triples: FrozenSet[Tuple[str, str, str]]

    @classmethod
    def of(cls, *triples: Tuple[str, str, str]) -> "TripleSet":
        return cls(frozenset((s.lower(), r.lower(), o.lower())
                             for s, r, o in triples))


@dataclass(frozen=True)
class RankedRetrieval:
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Caption, refs: RefSet, n_max: int = 4,
         weights: Sequence[float] | None = None) -> float:
    """Sentence BLEU with clipped precisions and closest-reference BP.

    Any zero p_n zeroes the score (no smoothing). Reference-length ties
    break toward the shorter reference.
    """
    if not 1 <= n_max <= 4:
        raise ValueError("n_max must lie in 1..4")
    c_len = len(candidate)
    if c_len == 0:
        raise ValueError("empty candidate")
    if weights is None:
        weights = [1.0 / n_max] * n_max
    elif len(weights) != n_max:
        raise ValueError("need one weight per n-gram order")

    log_sum = 0.0
    for n, w_n in zip(range(1, n_max + 1), weights):
        cand = ngram_counts(candidate.tokens, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref in refs.references:
            for gram, cnt in ngram_counts(ref.tokens, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped = sum(min(cnt, max_ref[gram]) for gram, cnt in cand.items())
        if clipped == 0:
            return 0.0
        log_sum += w_n * math.log(clipped / total)

    # r = length of the reference closest to c, ties toward the shorter
    r_len = min((abs(len(r) - c_len), len(r)) for r in refs.references)[1]
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_sum)


def _greedy_matches(cand: Sequence[str], ref: Sequence[str]) -> List[Tuple[int, int]]:
    """One-to-one exact matches, candidate order, first unmatched ref token."""
    used = [False] * len(ref)
    pairs = []
    for i, tok in enumerate(cand):
        for j, rtok in enumerate(ref):
            if not used[j] and rtok == tok:
                used[j] = True
                pairs.append((i, j))
                break
    return pairs


def _chunk_count(pairs: List[Tuple[int, int]]) -> int:
    """Maximal runs contiguous in both the candidate and the reference."""
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(candidate: Caption, ref: Caption) -> float:
    """Exact-token METEOR: F_mean = 10PR/(R+9P), Pen = 0.5 (chunks/matches)^3."""
    if len(candidate) == 0 or len(ref) == 0:
        raise ValueError("empty caption")
    pairs = _greedy_matches(candidate.tokens, ref.tokens)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(ref)
    f_mean = 10.0 * p * r / (r + 9.0 * p)
    pen = 0.5 * (_chunk_count(pairs) / m) ** 3
    return f_mean * (1.0 - pen)


def _lcs_length(x: Sequence[str], y: Sequence[str]) -> int:
    prev = [0] * (len(y) + 1)
    for xi in x:
        cur = [0]
        for j, yj in enumerate(y, start=1):
            cur.append(prev[j - 1] + 1 if xi == yj else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Caption, ref: Caption, beta: float = 1.0) -> float:
    if len(candidate) == 0 or len(ref) == 0:
        raise ValueError("empty caption")
    lcs = _lcs_length(candidate.tokens, ref.tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(ref)
    b2 = beta * beta
    return (1.0 + b2) * p * r / (r + b2 * p)


def _tfidf_vector(tokens: Sequence[str], n: int, idf: Dict[tuple, float],
                  unseen_idf: float) -> Dict[tuple, float]:
    counts = ngram_counts(tokens, n)
    total = sum(counts.values())
    if total == 0:
        return {}
    # grams absent from the corpus have df = 0, so idf = log(N / 1)
    return {g: (cnt / total) * idf.get(g, unseen_idf)
            for g, cnt in counts.items()}


def _cosine_sparse(a: Dict[tuple, float], b: Dict[tuple, float]) -> float:
    na = math.sqrt(sum(x * x for x in a.values()))
    nb = math.sqrt(sum(x * x for x in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0  # 0/0 defined as 0
    dot = sum(x * b[g] for g, x in a.items() if g in b)
    return dot / (na * nb)


def build_idf(corpus: Sequence[RefSet], n: int) -> Dict[tuple, float]:
    """IDF = log(|corpus| / (1 + df)), floored at 0; df counts images."""
    df: Counter = Counter()
    for refset in corpus:
        grams = set()
        for ref in refset.references:
            grams.update(ngram_counts(ref.tokens, n).keys())
        for g in grams:
            df[g] += 1
    n_images = len(corpus)
    return {g: max(0.0, math.log(n_images / (1 + d))) for g, d in df.items()}


def cider(candidate: Caption, refs: RefSet, corpus: Sequence[RefSet],
          n_max: int = 4) -> float:
    """Mean over n of the mean TF-IDF cosine against each reference."""
    if not corpus:
        raise ValueError("empty corpus")
    if len(candidate) == 0:
        raise ValueError("empty candidate")
    per_n = []
    unseen = max(0.0, math.log(len(corpus)))
    for n in range(1, n_max + 1):
        idf = build_idf(corpus, n)
        g_c = _tfidf_vector(candidate.tokens, n, idf, unseen)
        sims = [_cosine_sparse(g_c, _tfidf_vector(r.tokens, n, idf, unseen))
                for r in refs.references]
        per_n.append(sum(sims) / len(sims))
    return sum(per_n) / n_max


def spice_f1(cand: TripleSet, ref: TripleSet) -> float:
    if not cand.triples or not ref.triples:
        return 0.0
    inter = len(cand.triples & ref.triples)
    if inter == 0:
        return 0.0
    p = inter / len(cand.triples)
    r = inter / len(ref.triples)
    return 2.0 * p * r / (p + r)


def recall_at_k(rankings: Sequence[RankedRetrieval], k: int) -> float:
    if not rankings:
        raise ValueError("empty ranking list")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for r in rankings if r.rank <= k)
    return hits / len(rankings)
