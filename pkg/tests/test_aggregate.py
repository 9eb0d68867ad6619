"""Poem-level aggregation strategies and the threshold sweep."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verseid.aggregate import (
    ABSTAIN,
    aggregate_poem,
    majority_vote,
    predictions_csv,
    sweep_csv,
    sweep_thresholds,
    thresholded_vote,
    weighted_vote,
)


class TestMajority:
    def test_plain_majority(self):
        assert majority_vote([1, 1, 2]) == 1

    def test_tie_breaks_on_summed_confidence(self):
        # 0 and 1 both appear twice; label 1 holds more probability mass.
        assert majority_vote([0, 1, 0, 1], [0.5, 0.9, 0.5, 0.8]) == 1

    def test_double_tie_breaks_on_smallest_id(self):
        assert majority_vote([2, 5], [0.7, 0.7]) == 2

    def test_tie_without_probs_uses_smallest_id(self):
        assert majority_vote([3, 1]) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one verse"):
            majority_vote([])


class TestWeighted:
    def test_summed_distribution_wins(self):
        # Majority would pick 1 (verse argmaxes 0 and 1 tie at one each,
        # then the .9 verse wins); summing gives [1.3, 0.7] so weighted
        # picks 0 with mean confidence 0.65.
        probs = np.array([[0.9, 0.1], [0.4, 0.6]])
        label, conf = weighted_vote(probs)
        assert label == 0
        assert conf == pytest.approx(0.65)

    def test_sum_confidence_mode(self):
        probs = np.array([[0.9, 0.1], [0.4, 0.6]])
        label, conf = weighted_vote(probs, confidence="sum")
        assert label == 0
        assert conf == pytest.approx(1.3)

    def test_single_verse_matches_argmax(self):
        probs = np.array([[0.2, 0.5, 0.3]])
        label, conf = weighted_vote(probs)
        assert label == 1
        assert conf == pytest.approx(0.5)

    def test_tied_sum_picks_smallest_id(self):
        label, _ = weighted_vote(np.array([[0.5, 0.5]]))
        assert label == 0

    def test_bad_confidence_mode(self):
        with pytest.raises(ValueError, match="confidence"):
            weighted_vote(np.array([[1.0]]), confidence="median")

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError, match="matrix"):
            weighted_vote(np.zeros((0, 3)))

    @settings(max_examples=50, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=8),
        c=st.integers(min_value=2, max_value=5),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_mean_confidence_bounded(self, n, c, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(c), size=n)
        label, conf = weighted_vote(probs)
        assert 0 <= label < c
        assert 1 / c - 1e-9 <= conf <= 1 + 1e-9


class TestThresholded:
    def test_abstains_below_tau(self):
        probs = np.array([[0.9, 0.1], [0.4, 0.6]])  # mean confidence 0.65
        assert thresholded_vote(probs, tau=0.7) == (None, pytest.approx(0.65))

    def test_keeps_label_at_or_above_tau(self):
        probs = np.array([[0.9, 0.1], [0.4, 0.6]])
        assert thresholded_vote(probs, tau=0.65) == (0, pytest.approx(0.65))

    def test_tau_zero_never_abstains(self):
        probs = np.array([[0.5, 0.5]])
        label, conf = thresholded_vote(probs, tau=0.0)
        assert label == 0
        assert (label, conf) == weighted_vote(probs)


class TestAggregatePoem:
    probs = np.array([[0.9, 0.1], [0.4, 0.6]])

    def test_majority_strategy(self):
        pred = aggregate_poem("p1", self.probs, "majority")
        # Verse argmaxes are [0, 1]: a tie, broken by max-prob mass (0.9 > 0.6).
        assert pred.predicted_poet == 0
        assert pred.verse_labels == [0, 1]
        assert pred.confidence == pytest.approx(0.9)
        assert not pred.abstained

    def test_weighted_strategy(self):
        pred = aggregate_poem("p1", self.probs, "weighted")
        assert (pred.predicted_poet, pred.confidence) == (0, pytest.approx(0.65))

    def test_thresholded_strategy_abstains(self):
        pred = aggregate_poem("p1", self.probs, "thresholded", tau=0.7)
        assert pred.predicted_poet is None
        assert pred.abstained

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            aggregate_poem("p1", self.probs, "plurality")

    def test_strategies_agree_on_unanimous_poem(self):
        probs = np.array([[0.8, 0.2], [0.7, 0.3], [0.9, 0.1]])
        labels = {
            aggregate_poem("p", probs, s).predicted_poet
            for s in ("majority", "weighted")
        }
        assert labels == {0}


def poem_set():
    """Three poems with mean confidences 0.65, 0.80, 0.55 and one mistake."""
    return (
        [
            np.array([[0.9, 0.1], [0.4, 0.6]]),  # pred 0, conf 0.65, truth 0
            np.array([[0.8, 0.2], [0.8, 0.2]]),  # pred 0, conf 0.80, truth 1 (wrong)
            np.array([[0.55, 0.45]]),            # pred 0, conf 0.55, truth 0
        ],
        np.array([0, 1, 0]),
    )


class TestSweep:
    def test_rows_match_hand_computation(self):
        poems, truth = poem_set()
        rows = sweep_thresholds(poems, truth, [0.0, 0.6, 0.7, 0.9])
        assert [(r.covered, r.coverage) for r in rows] == [
            (3, 1.0),
            (2, pytest.approx(2 / 3)),
            (1, pytest.approx(1 / 3)),
            (0, 0.0),
        ]
        assert rows[0].accuracy == pytest.approx(2 / 3)
        assert rows[1].accuracy == pytest.approx(0.5)
        assert rows[2].accuracy == pytest.approx(0.0)  # only the wrong poem survives
        assert rows[3].accuracy is None

    def test_coverage_never_increases(self):
        poems, truth = poem_set()
        rows = sweep_thresholds(poems, truth, [i / 20 for i in range(21)])
        covs = [r.coverage for r in rows]
        assert all(a >= b for a, b in zip(covs, covs[1:]))

    def test_unsorted_taus_rejected(self):
        poems, truth = poem_set()
        with pytest.raises(ValueError, match="sorted ascending"):
            sweep_thresholds(poems, truth, [0.5, 0.2])

    def test_tau_zero_matches_weighted_vote(self):
        poems, truth = poem_set()
        row = sweep_thresholds(poems, truth, [0.0])[0]
        preds = [weighted_vote(p)[0] for p in poems]
        acc = sum(int(p == t) for p, t in zip(preds, truth)) / len(truth)
        assert row.accuracy == pytest.approx(acc)
        assert row.coverage == 1.0

    def test_csv_rendering_with_na(self):
        poems, truth = poem_set()
        text = sweep_csv(sweep_thresholds(poems, truth, [0.0, 0.9]))
        lines = text.splitlines()
        assert lines[0] == "threshold,accuracy,coverage,covered,total"
        assert lines[1].startswith("0,0.666667,1.000000,3,3")
        assert lines[2] == "0.9,NA,0.000000,0,3"


class TestPredictionsCsv:
    def test_numeric_and_named_labels(self):
        preds = [
            aggregate_poem("p1", np.array([[0.9, 0.1]]), "weighted"),
            aggregate_poem("p2", np.array([[0.5, 0.5]]), "thresholded", tau=0.9),
        ]
        numeric = predictions_csv(preds).splitlines()
        assert numeric[0] == "poem_id,strategy,label,confidence,abstained"
        assert numeric[1] == "p1,weighted,0,0.900000,false"
        assert numeric[2] == f"p2,thresholded,{ABSTAIN},0.500000,true"
        named = predictions_csv(preds, poet_names=["hafez", "saadi"]).splitlines()
        assert named[1].startswith("p1,weighted,hafez,")
        # Abstentions keep the sentinel even when names are supplied.
        assert named[2].split(",")[2] == ABSTAIN
