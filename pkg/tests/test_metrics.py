import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score

from ferretnet.metrics import accuracy, average_precision
from oracles import average_precision_enumeration


def test_accuracy_examples():
    assert accuracy([0.9, 0.2, 0.6], [1, 0, 0]) == pytest.approx(2 / 3)
    assert accuracy([0.1, 0.2, 0.6], [1, 1, 0]) == pytest.approx(0.0)
    assert accuracy([0.5], [1]) == 1.0
    assert accuracy([0.3, 0.7], [1, 1], threshold=0.25) == 1.0


def test_ap_reference_example():
    assert average_precision([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(0.8333333, abs=1e-6)


def test_ap_perfect_and_worst_rankings():
    assert average_precision([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0
    assert average_precision([0.0, 0.1, 0.8, 0.9], [1, 0, 0, 0]) == pytest.approx(0.25)


def test_ties_keep_input_order():
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0
    assert average_precision([0.5, 0.5], [0, 1]) == 0.5


def test_metric_errors():
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0.1, 0.2], [1])
    with pytest.raises(ValueError):
        accuracy([0.1], [2])
    with pytest.raises(ValueError):
        average_precision([np.nan, 0.1], [1, 0])


def test_ap_matches_enumeration_oracle_on_random_batches():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        labels = rng.integers(0, 2, n)
        labels[rng.integers(0, n)] = 1
        # coarse scores make ties common
        scores = rng.integers(0, 6, n) / 5 if rng.random() < 0.5 else rng.random(n)
        assert average_precision(scores, labels) == pytest.approx(
            average_precision_enumeration(list(scores), list(labels)), abs=1e-12)


def test_ap_agrees_with_sklearn_without_ties():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[0] = 1
        scores = rng.permutation(n) / n
        assert average_precision(scores, labels) == pytest.approx(average_precision_score(labels, scores), abs=1e-12)


@st.composite
def scored_batches(draw):
    n = draw(st.integers(1, 30))
    # distinct grid values keep every transform below strictly monotone in floats
    scores = [k / 1000 for k in draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n, unique=True))]
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if not any(labels):
        labels[0] = 1
    return np.array(scores), np.array(labels)


@settings(max_examples=100, deadline=None)
@given(batch=scored_batches(), data=st.data())
def test_ap_is_permutation_invariant(batch, data):
    scores, labels = batch
    perm = np.array(data.draw(st.permutations(range(len(scores)))))
    assert average_precision(scores[perm], labels[perm]) == pytest.approx(average_precision(scores, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(batch=scored_batches())
def test_ap_is_invariant_to_monotone_transforms(batch):
    scores, labels = batch
    base = average_precision(scores, labels)
    for f in (lambda s: 3 * s - 1, lambda s: np.exp(2 * s), lambda s: s ** 3):
        assert average_precision(f(scores), labels) == pytest.approx(base, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(batch=scored_batches())
def test_metric_ranges(batch):
    scores, labels = batch
    assert 0 < average_precision(scores, labels) <= 1
    assert 0 <= accuracy(scores, labels) <= 1
