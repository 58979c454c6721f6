import numpy as np
import pytest

from boxfinder.metrics import RunReport, auc, auc_normalized, best_curve, precision_tau
from boxfinder.objective import empty_loss

from conftest import trace_from


def test_precision_identical_and_far():
    X = np.random.default_rng(0).normal(size=(20, 3))
    assert precision_tau(X, X, 0.2) == 1.0
    assert precision_tau(X + 100, X, 0.2) == 0.0
    assert precision_tau(np.zeros((0, 3)), X) == 0.0


def test_precision_half_matched():
    X = np.array([[0, 0, 0], [5, 0, 0.0]])
    Y = np.array([[0.1, 0, 0]])
    # X side 1/2, Y side 1/1
    assert precision_tau(X, Y, 0.2) == 0.5 * 0.5 + 0.5 * 1.0


def test_precision_boundary_inclusive():
    assert precision_tau([[0, 0, 0]], [[0.25, 0, 0]], 0.25) == 1.0


def test_precision_validation():
    with pytest.raises(ValueError):
        precision_tau([[0, 0, 0]], np.zeros((0, 3)))
    with pytest.raises(ValueError):
        precision_tau([[0, 0, 0]], [[0, 0, 0]], 0)


def test_best_curve_and_auc():
    t = trace_from([4.0, 2.0, 2.0])
    assert best_curve(t, 5, fill=9.0).tolist() == [4.0, 2.0, 2.0, 2.0, 2.0]
    assert auc(t, 5, fill=9.0) == pytest.approx(12.0 / 5)
    assert auc(t, 2, fill=9.0) == 3.0


def test_auc_default_fill_is_empty_loss():
    t = trace_from([])
    assert auc(t, 3) == pytest.approx(empty_loss())


def test_auc_normalized():
    assert auc_normalized({"a": 1.0, "b": 3.0, "c": 2.0}) == {"a": 0.0, "b": 1.0, "c": 0.5}
    assert auc_normalized([2.0, 2.0]) == [0.0, 0.0]


def test_report_json():
    r = RunReport("mbf", 0.2, 0.9, 0.3, 0.0, 4, 100, 1)
    assert r.to_json()["method"] == "mbf" and r.to_json()["budget"] == 100
