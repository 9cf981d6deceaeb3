from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainworld.metrics import (
    EmbedderUnavailable,
    HashedBagEmbedder,
    RemoteEmbedder,
    bleu_n,
    rouge_l,
    sms,
    token_f1,
)

ALL_METRICS = (
    token_f1,
    lambda p, r: bleu_n(p, r, 2),
    lambda p, r: bleu_n(p, r, 3),
    rouge_l,
    lambda p, r: sms(p, r, HashedBagEmbedder()),
)


class TestIdentityAndDisjoint:
    @pytest.mark.parametrize("metric", ALL_METRICS)
    def test_identical_scores_100(self, metric):
        text = "the pot of water is boiling on the stove"
        assert metric(text, text) == 100.0

    @pytest.mark.parametrize("metric", ALL_METRICS)
    def test_disjoint_scores_0(self, metric):
        assert metric("alpha beta gamma", "delta epsilon zeta") == 0.0


class TestTokenF1:
    def test_hand_computed_fixture(self):
        score = token_f1("add the chopped onions", "add chopped onions")
        assert score == pytest.approx(85.71, abs=0.01)

    def test_empty_cases(self):
        assert token_f1("", "") == 100.0
        assert token_f1("", "water") == 0.0
        assert token_f1("water", "") == 0.0

    def test_multiset_semantics(self):
        # repeated token only counts as often as it appears in both
        assert token_f1("hot hot hot", "hot") == pytest.approx(50.0)

    @given(
        st.lists(st.sampled_from("abcde"), max_size=8),
        st.lists(st.sampled_from("abcde"), max_size=8),
    )
    def test_equals_bruteforce_multiset_overlap(self, pred_tokens, ref_tokens):
        pred, ref = " ".join(pred_tokens), " ".join(ref_tokens)
        score = token_f1(pred, ref)
        if not pred_tokens and not ref_tokens:
            assert score == 100.0
            return
        if not pred_tokens or not ref_tokens:
            assert score == 0.0
            return
        overlap = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
        if overlap == 0:
            assert score == 0.0
        else:
            precision, recall = overlap / len(pred_tokens), overlap / len(ref_tokens)
            assert score == pytest.approx(100 * 2 * precision * recall / (precision + recall))


class TestBleu:
    def test_short_pred_against_itself_smooths_to_100(self):
        assert bleu_n("boil water", "boil water", 3) == 100.0

    def test_no_shared_unigrams_is_zero(self):
        assert bleu_n("alpha beta", "gamma delta", 2) == 0.0

    def test_partial_overlap_between_bounds(self):
        score = bleu_n("the cat sat on the mat", "the cat lay on the mat", 2)
        assert 0.0 < score < 100.0

    def test_brevity_penalty_applies(self):
        longer = bleu_n("the cat sat on the mat", "the cat sat on the mat today", 2)
        assert longer < 100.0

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            bleu_n("a", "a", 0)


class TestRougeL:
    def test_hand_computed_fixture(self):
        assert rouge_l("a c", "a b c") == pytest.approx(80.0, abs=0.01)

    def test_subsequence_not_substring(self):
        # "a ... c" is an LCS even with b interposed on one side
        assert rouge_l("a x c", "a y c") == pytest.approx(100 * 2 * (2 / 3) * (2 / 3) / (4 / 3))


class TestSms:
    def test_reordered_tokens_single_sentence(self):
        embedder = HashedBagEmbedder()
        assert sms("boiling is water the", "the water is boiling", embedder) == 100.0

    def test_orthogonal_sentences_near_zero(self):
        embedder = HashedBagEmbedder()
        pred, ref = "alpha beta gamma", "delta epsilon zeta"
        vectors = embedder.embed([pred, ref])
        assert float(vectors[0] @ vectors[1]) == 0.0  # fixture really is orthogonal
        assert sms(pred, ref, embedder) == pytest.approx(0.0, abs=1e-9)

    def test_multisentence_partial_transport(self):
        embedder = HashedBagEmbedder()
        pred = "the water is boiling\nthe pot is red"
        ref = "the water is boiling\nthe lid is shut"
        score = sms(pred, ref, embedder)
        assert 0.0 < score < 100.0

    def test_weighted_by_sentence_length(self):
        embedder = HashedBagEmbedder()
        # the mismatched sentence is shorter than the matched one, so the
        # score stays above the 50% midpoint
        pred = "the big pot of water is boiling hard\nwrong"
        ref = "the big pot of water is boiling hard\nright"
        assert sms(pred, ref, embedder) > 50.0

    def test_remote_embedder_unavailable(self):
        embedder = RemoteEmbedder("http://127.0.0.1:1", "embed-model", timeout=0.2)
        with pytest.raises(EmbedderUnavailable):
            sms("a b", "c d", embedder)

    def test_hashed_embedder_deterministic(self):
        first = HashedBagEmbedder().embed(["the pot is hot"])
        second = HashedBagEmbedder().embed(["the pot is hot"])
        assert np.array_equal(first, second)


texts = st.lists(st.sampled_from("abcdefg"), min_size=0, max_size=6).map(" ".join)


@settings(max_examples=60)
@given(texts, texts)
def test_all_metrics_bounded(pred, ref):
    embedder = HashedBagEmbedder()
    for metric in (
        token_f1,
        lambda p, r: bleu_n(p, r, 2),
        lambda p, r: bleu_n(p, r, 3),
        rouge_l,
        lambda p, r: sms(p, r, embedder),
    ):
        score = metric(pred, ref)
        assert 0.0 <= score <= 100.0
    assert token_f1(pred, pred) == 100.0
    assert rouge_l(pred, pred) == 100.0
    assert bleu_n(pred, pred, 3) == 100.0
    assert sms(pred, pred, embedder) == 100.0
