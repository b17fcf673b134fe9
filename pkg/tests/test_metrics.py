"""Confusion-count metrics checked against exact rational arithmetic."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from malsift.metrics import compute_metrics


def rational_metrics(tp: int, fp: int, fn: int, tn: int) -> dict[str, Fraction | None]:
    """Independent recomputation of every rate with exact fractions."""
    total = tp + fp + fn + tn
    accuracy = Fraction(100 * (tp + tn), total)
    precision = Fraction(100 * tp, tp + fp) if tp + fp else None
    recall = Fraction(100 * tp, tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    fpr = Fraction(100 * fp, fp + tn) if fp + tn else None
    fnr = Fraction(100 * fn, fn + tp) if fn + tp else None
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "fpr": fpr,
        "fnr": fnr,
    }


def test_matches_rational_oracle_on_random_grids():
    rng = random.Random(42)
    for _ in range(500):
        tp, fp, fn, tn = (rng.randint(0, 40) for _ in range(4))
        if tp + fp + fn + tn == 0:
            continue
        got = compute_metrics(tp=tp, fp=fp, fn=fn, tn=tn)
        want = rational_metrics(tp, fp, fn, tn)
        for key, expected in want.items():
            actual = getattr(got, key)
            if expected is None:
                assert actual is None, (key, tp, fp, fn, tn)
            else:
                assert actual == pytest.approx(float(expected), abs=1e-9), (key, tp, fp, fn, tn)


def test_precision_undefined_without_positive_predictions():
    m = compute_metrics(tp=0, fp=0, fn=3, tn=7)
    assert m.precision is None
    assert m.recall == 0.0
    assert m.f1 is None


def test_recall_undefined_without_actual_positives():
    m = compute_metrics(tp=0, fp=2, fn=0, tn=8)
    assert m.recall is None
    assert m.precision == 0.0
    assert m.f1 is None


def test_f1_undefined_when_precision_plus_recall_is_zero():
    m = compute_metrics(tp=0, fp=5, fn=5, tn=10)
    assert m.precision == 0.0
    assert m.recall == 0.0
    assert m.f1 is None


def test_perfect_split_renders_round_percentages():
    m = compute_metrics(tp=10, fp=0, fn=0, tn=10)
    assert m.accuracy == 100.0
    assert m.precision == 100.0
    assert m.recall == 100.0
    assert m.f1 == 100.0
    assert m.fpr == 0.0
    assert m.fnr == 0.0


def test_rendered_percentages_and_na():
    m = compute_metrics(tp=0, fp=0, fn=3, tn=7)
    shown = m.rendered()
    assert shown["accuracy"] == "70.00"
    assert shown["precision"] == "n/a"
    assert shown["f1"] == "n/a"
    assert shown["recall"] == "0.00"


def test_rejects_negative_counts():
    with pytest.raises(ValueError):
        compute_metrics(tp=-1, fp=0, fn=0, tn=5)


def test_rejects_all_zero_counts():
    with pytest.raises(ValueError):
        compute_metrics(tp=0, fp=0, fn=0, tn=0)
