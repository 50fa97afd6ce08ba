from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakdetect.metrics import Metrics, compute_metrics, format_report


def test_all_correct():
    m = compute_metrics([0, 1, 1, 0], [0, 1, 1, 0])
    assert (m.accuracy, m.precision, m.recall, m.specificity, m.f1) == (1, 1, 1, 1, 1)


def test_recall_shape():
    m = Metrics(tp=14, fp=0, tn=300, fn=3)
    assert m.recall == pytest.approx(0.8235, abs=1e-4)
    assert m.precision == 1 and m.specificity == 1


def test_all_negative_is_na():
    m = compute_metrics([0] * 5, [0] * 5)
    assert m.recall is None and m.precision is None and m.f1 is None
    assert m.specificity == 1 and m.accuracy == 1
    assert "recall: N/A" in format_report("x", m)


def test_no_negatives():
    m = compute_metrics([1, 1], [1, 0])
    assert m.specificity is None and m.recall == 0.5 and m.precision == 1


def test_zero_precision_and_recall():
    m = Metrics(tp=0, fp=3, tn=2, fn=4)
    assert m.precision == 0 and m.recall == 0 and m.f1 is None


def test_errors():
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0])
    with pytest.raises(ValueError):
        compute_metrics([], [])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
def test_counts_from_vectors(pairs):
    t, p = zip(*pairs)
    m = compute_metrics(t, p)
    assert m.total == len(pairs)
    assert m.tp == sum(1 for a, b in pairs if a == 1 and b == 1)
    assert m.fn == sum(1 for a, b in pairs if a == 1 and b == 0)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_definitions(tp, fp, tn, fn):
    m = Metrics(tp, fp, tn, fn)

    def exact(num, den):
        return None if den == 0 else float(Fraction(num, den))

    assert m.accuracy == exact(tp + tn, tp + fp + tn + fn)
    assert m.precision == exact(tp, tp + fp)
    assert m.recall == exact(tp, tp + fn)
    assert m.specificity == exact(tn, tn + fp)
    if m.f1 is not None:
        assert m.f1 == pytest.approx(float(Fraction(2 * tp, 2 * tp + fp + fn)), rel=1e-15)


def test_report_format():
    text = format_report("Leak_noprocess", Metrics(3, 0, 10, 1))
    lines = text.splitlines()
    assert lines[0] == "dataset: Leak_noprocess"
    assert "tp: 3" in lines and "precision: 1.0000" in lines and "recall: 0.7500" in lines
