"""Text-overlap metrics, all scored 0..100.

token_f1, BLEU-2/3, and ROUGE-L work on lowercased whitespace tokens.  The
sentence mover's score treats a text as a bag of sentences weighted by token
count and solves the exact optimal-transport problem between the two bags,
with cosine distance between sentence embeddings as the ground cost.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from typing import Protocol, Sequence

import numpy as np
import requests
from scipy.optimize import linprog


class EmbedderUnavailable(Exception):
    """The sentence embedder cannot produce vectors."""


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def token_f1(pred: str, ref: str) -> float:
    """Multiset token overlap F1. Empty vs empty is 100, empty vs not is 0."""
    pred_tokens, ref_tokens = _tokens(pred), _tokens(ref)
    if not pred_tokens and not ref_tokens:
        return 100.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(ref_tokens)
    return 100.0 * 2 * precision * recall / (precision + recall)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(pred: str, ref: str, n: int = 2) -> float:
    """BLEU with 1..n modified precisions and brevity penalty.

    Orders above 1 get add-one smoothing when their match count is zero;
    propositions are short enough that unsmoothed higher orders would
    collapse to 0 almost everywhere.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pred_tokens, ref_tokens = _tokens(pred), _tokens(ref)
    if not pred_tokens and not ref_tokens:
        return 100.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    log_sum = 0.0
    for order in range(1, n + 1):
        pred_counts = _ngram_counts(pred_tokens, order)
        total = sum(pred_counts.values())
        matched = sum((pred_counts & _ngram_counts(ref_tokens, order)).values())
        if order > 1 and matched == 0:
            precision = (matched + 1) / (total + 1)
        elif total == 0 or matched == 0:
            return 0.0
        else:
            precision = matched / total
        log_sum += math.log(precision)
    geo_mean = math.exp(log_sum / n)
    c, r = len(pred_tokens), len(ref_tokens)
    brevity = 1.0 if c > r else math.exp(1 - r / c)
    return 100.0 * brevity * geo_mean


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            row.append(prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1]))
        prev = row
    return prev[-1]


def rouge_l(pred: str, ref: str) -> float:
    """LCS-based F-measure with equal precision/recall weight."""
    pred_tokens, ref_tokens = _tokens(pred), _tokens(ref)
    if not pred_tokens and not ref_tokens:
        return 100.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 100.0 * 2 * precision * recall / (precision + recall)


class Embedder(Protocol):
    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        """Row per sentence; rows need not be normalized."""
        ...


class HashedBagEmbedder:
    """Deterministic test embedder: tokens hash into a fixed-size bag vector.

    Reordering tokens inside a sentence never changes its vector; sentences
    with disjoint token sets get (near-)orthogonal vectors.
    """

    def __init__(self, dim: int = 512):
        self.dim = dim

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.dim))
        for row, sentence in enumerate(sentences):
            for token in _tokens(sentence):
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                out[row, int.from_bytes(digest[:8], "big") % self.dim] += 1.0
        return out


class RemoteEmbedder:
    """Embeddings endpoint speaking the industry POST /embeddings schema."""

    def __init__(self, base_url: str, model_name: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self.timeout = timeout

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model_name, "input": list(sentences)},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
            return np.array([row["embedding"] for row in data], dtype=float)
        except Exception as exc:
            raise EmbedderUnavailable(str(exc)) from exc


def _sentences(text: str) -> list[str]:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    return lines or [text.strip()]


def _emd(weights_a: np.ndarray, weights_b: np.ndarray, cost: np.ndarray) -> float:
    """Exact earth mover's distance via the transport LP."""
    n, m = cost.shape
    c = cost.reshape(-1)
    a_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        a_eq.append(row)
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1.0
        a_eq.append(row)
    b_eq = np.concatenate([weights_a, weights_b])
    result = linprog(c, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method="highs")
    if not result.success:
        raise RuntimeError(f"transport problem failed: {result.message}")
    return float(result.fun)


def sms(pred: str, ref: str, embedder: Embedder | None = None) -> float:
    """Sentence mover's similarity, 0..100.

    Sentences are the newline-separated parts of each text, weighted by token
    count; the transport cost between two sentences is the cosine distance of
    their embeddings, and the score is 100 * (1 - EMD), clamped at 0.
    """
    if pred.strip() == ref.strip():
        return 100.0
    embedder = embedder or HashedBagEmbedder()
    pred_sents, ref_sents = _sentences(pred), _sentences(ref)
    if pred_sents == ref_sents:
        return 100.0
    vectors = embedder.embed(list(pred_sents) + list(ref_sents))
    if vectors.shape[0] != len(pred_sents) + len(ref_sents):
        raise EmbedderUnavailable("embedder returned the wrong number of rows")
    norms = np.linalg.norm(vectors, axis=1)
    norms[norms == 0] = 1.0
    unit = vectors / norms[:, None]
    pred_vecs, ref_vecs = unit[: len(pred_sents)], unit[len(pred_sents) :]
    cost = 1.0 - pred_vecs @ ref_vecs.T
    cost = np.clip(cost, 0.0, None)

    def weights(sentences: list[str]) -> np.ndarray:
        counts = np.array([max(1, len(_tokens(s))) for s in sentences], dtype=float)
        return counts / counts.sum()

    distance = _emd(weights(pred_sents), weights(ref_sents), cost)
    return 100.0 * max(0.0, 1.0 - distance)
