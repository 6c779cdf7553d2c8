import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tdnnkit as tk
from tdnnkit.errors import DataError, ShapeError
from tdnnkit.scoring import (
    aggregate_scores,
    format_eval_report,
    frame_accuracy,
    greedy_decode,
    levenshtein,
    score_utterance,
)

from oracles import recursive_edit_distance

seq = st.lists(st.integers(0, 4), min_size=0, max_size=10).map(tuple)


def one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class TestFrameAccuracy:
    def test_one_hot_correct(self):
        labels = np.array([0, 2, 1, 2])
        assert frame_accuracy(one_hot(labels, 3), labels) == 1.0

    def test_never_matching(self):
        labels = np.array([0, 0, 0])
        post = one_hot(np.array([1, 2, 1]), 3)
        assert frame_accuracy(post, labels) == 0.0

    def test_random_posteriors_near_chance(self):
        rng = np.random.default_rng(0)
        k, n = 10, 10_000
        post = rng.random((n, k))
        labels = rng.integers(0, k, size=n)
        acc = frame_accuracy(post, labels)
        sigma = np.sqrt(0.1 * 0.9 / n)
        assert abs(acc - 1 / k) < 3 * sigma

    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            frame_accuracy(np.ones((3, 2)), np.zeros(2, dtype=int))


class TestGreedyDecode:
    def test_collapse_example(self):
        post = one_hot(np.array([1, 1, 2, 2, 2, 1]), 3)
        assert greedy_decode(post).tolist() == [1, 2, 1]

    def test_single_class(self):
        post = one_hot(np.array([4, 4, 4, 4]), 5)
        assert greedy_decode(post).tolist() == [4]

    def test_oracle_posteriors_reproduce_transcripts(self, tmp_path):
        cfg = tk.CorpusConfig(num_utterances=15, seed=14, noise_sigma=0.0)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        for e in manifest.entries:
            utt = tk.load_utterance(manifest, e)
            decoded = greedy_decode(one_hot(utt.labels, cfg.num_phones))
            assert np.array_equal(decoded, utt.transcript)


class TestLevenshtein:
    def test_identical(self):
        assert levenshtein((1, 2, 3), (1, 2, 3)) == (0, 0, 0, 0)

    def test_single_substitution(self):
        a, b, c, x = "a", "b", "c", "x"
        result = levenshtein((a, b, c), (a, x, c))
        assert result == (1, 1, 0, 0)
        assert recursive_edit_distance((a, b, c), (a, x, c)) == 1

    def test_empty_ref_all_insertions(self):
        assert levenshtein((), (5, 6, 7)) == (3, 0, 0, 3)

    def test_empty_hyp_all_deletions(self):
        assert levenshtein((5, 6), ()) == (2, 0, 2, 0)

    def test_tie_breaking_prefers_substitution(self):
        # swapped symbols admit (S,S) or (D,...,I) alignments at cost 2
        assert levenshtein((0, 1), (1, 0)) == (2, 2, 0, 0)

    def test_exhaustive_small_against_recursion(self):
        seqs = []
        for length in range(0, 5):
            seqs.extend(itertools.product(range(3), repeat=length))
        for a in seqs:
            for b in seqs:
                d, s, dl, i = levenshtein(a, b)
                assert d == recursive_edit_distance(a, b)
                assert d == s + dl + i

    def test_random_pairs_against_recursion(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            a = tuple(rng.integers(0, 5, size=rng.integers(0, 11)).tolist())
            b = tuple(rng.integers(0, 5, size=rng.integers(0, 11)).tolist())
            d = levenshtein(a, b)[0]
            assert d == recursive_edit_distance(a, b)

    @given(seq, seq)
    @settings(max_examples=120, deadline=None)
    def test_symmetry(self, a, b):
        assert levenshtein(a, b)[0] == levenshtein(b, a)[0]

    @given(seq, seq, seq)
    @settings(max_examples=120, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c)[0] <= levenshtein(a, b)[0] + levenshtein(b, c)[0]

    @given(seq)
    @settings(max_examples=60, deadline=None)
    def test_identity_of_indiscernibles(self, a):
        assert levenshtein(a, a)[0] == 0

    @given(seq, seq)
    @settings(max_examples=120, deadline=None)
    def test_breakdown_sums_to_distance(self, a, b):
        d, s, dl, i = levenshtein(a, b)
        assert d == s + dl + i
        assert (d == 0) == (a == b)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.integers(0, 5, size=rng.integers(0, 9))
            b = rng.integers(0, 5, size=rng.integers(0, 9))
            perm = rng.permutation(5)
            assert (
                levenshtein(tuple(a), tuple(b))[0]
                == levenshtein(tuple(perm[a]), tuple(perm[b]))[0]
            )


class TestAggregation:
    def test_pooled_not_averaged(self):
        # a clean 5-symbol utterance plus a fully wrong 2-symbol one: pooled
        # CER is (0 + 2) / (5 + 2), not the mean of 0.0 and 1.0
        u1 = score_utterance("a", one_hot(np.repeat(np.arange(5), 2), 5), np.repeat(np.arange(5), 2))
        labels2 = np.array([0, 1])
        post2 = one_hot(np.array([2, 3]), 5)
        u2 = score_utterance("b", post2, labels2)
        report = aggregate_scores([u1, u2])
        assert u1.cer == 0.0
        assert u2.cer == 1.0
        assert report.cer == pytest.approx(2 / 7)
        assert report.cer != pytest.approx(0.5)
        assert report.ref_length == 7

    def test_cer_can_exceed_one(self):
        labels = np.array([0])
        post = one_hot(np.array([1, 2, 3]), 4)
        u = score_utterance("x", post, labels)
        assert u.cer > 1.0

    def test_perfect_oracle_model_scores_zero_cer(self, tmp_path):
        cfg = tk.CorpusConfig(num_utterances=10, seed=15, noise_sigma=0.0)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        scores = []
        for e in manifest.entries:
            utt = tk.load_utterance(manifest, e)
            scores.append(score_utterance(e.utt_id, one_hot(utt.labels, cfg.num_phones), utt.labels))
        report = aggregate_scores(scores)
        assert report.cer == 0.0
        assert report.frame_accuracy == 1.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            aggregate_scores([])

    def test_report_format(self):
        labels = np.array([0, 1, 1])
        u = score_utterance("u1", one_hot(labels, 3), labels)
        text = format_eval_report(aggregate_scores([u]))
        lines = text.strip().split("\n")
        assert lines[0].split("\t") == ["utt_id", "ref_len", "S", "D", "I", "cer", "frame_acc"]
        assert lines[-1].startswith("TOTAL\t")
