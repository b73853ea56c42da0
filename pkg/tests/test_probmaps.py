import math
import numpy as np
import pytest

from cpgloss import (LabelMap, LogitMap, TypedMap, MapType, CeVariant, one_hot, softmax, ce_loss,
                     numerical_gradient, relative_error, DataError, ShapeError, ArgumentError)


def test_one_hot_with_ignore():
    labels = LabelMap.create(np.array([[0, 2], [255, 1]]), 3)
    gt = one_hot(labels)
    assert gt.map_type == MapType.GroundTruth
    assert gt.shape == (3, 2, 2) and gt.dtype == np.float32
    assert gt[:, 0, 0].tolist() == [1, 0, 0]
    assert gt[:, 0, 1].tolist() == [0, 0, 1]
    assert gt[:, 1, 0].tolist() == [0, 0, 0]
    assert gt[:, 1, 1].tolist() == [0, 1, 0]


def test_label_validation():
    with pytest.raises(DataError):
        LabelMap.create(np.array([[0, 3]]), 3)
    with pytest.raises(DataError):
        LabelMap.create(np.array([[0.5, 1.0]]), 3)
    with pytest.raises(ShapeError):
        LabelMap.create(np.zeros((1, 2, 2), dtype=np.int32), 3)
    with pytest.raises(ArgumentError):
        LabelMap.create(np.zeros((2, 2), dtype=np.int32), 0)


def test_softmax_sums_to_one(rs):
    p = softmax(LogitMap.create(rs.normal(size=(4, 3, 5)) * 30))
    assert p.map_type == MapType.Predicted
    assert np.allclose(p.sum(axis=0), 1.0, atol=1e-6)
    assert np.all(p >= 0)


def test_softmax_keeps_precision(rs):
    z = rs.normal(size=(2, 2, 2))
    assert softmax(TypedMap(z, MapType.Logits)).dtype == np.float64
    assert softmax(TypedMap(z, MapType.Logits, dtype=np.float32)).dtype == np.float32


def test_non_finite_logits():
    z = np.zeros((2, 2, 2))
    z[1, 0, 0] = np.nan
    with pytest.raises(DataError):
        LogitMap.create(z)
    with pytest.raises(DataError):
        softmax(z)


@pytest.mark.parametrize("variant", ["softmax", "bce"])
def test_uniform_logits_give_log2(variant):
    labels = LabelMap.create(np.array([[0, 1], [1, 0]]), 2)
    loss, grad = ce_loss(LogitMap.create(np.zeros((2, 2, 2))), one_hot(labels, np.float64), variant)
    assert math.isclose(loss, math.log(2.0), rel_tol=1e-12)
    assert grad.map_type == MapType.Logits


@pytest.mark.parametrize("variant", list(CeVariant))
def test_ce_gradient_matches_finite_differences(rs, variant):
    lab = rs.randint(0, 3, size=(4, 5))
    lab[0, 0] = 255
    labels = LabelMap.create(lab, 3)
    gt = one_hot(labels, np.float64)
    z = rs.normal(size=(3, 4, 5))
    _, grad = ce_loss(TypedMap(z, MapType.Logits), gt, variant)
    numeric = numerical_gradient(lambda x: ce_loss(TypedMap(x, MapType.Logits), gt, variant)[0], z)
    assert relative_error(grad, numeric) < 1e-4
    assert np.all(grad[:, 0, 0] == 0)


def test_all_ignored_gives_zero():
    labels = LabelMap.create(np.full((2, 2), 255), 2)
    loss, grad = ce_loss(LogitMap.create(np.ones((2, 2, 2))), one_hot(labels))
    assert loss == 0.0
    assert not np.any(grad)


def test_bce_is_finite_for_large_logits():
    labels = LabelMap.create(np.array([[0, 1]]), 2)
    z = np.array([[[800.0, -800.0]], [[-800.0, 800.0]]])
    loss, grad = ce_loss(LogitMap.create(z), one_hot(labels, np.float64), CeVariant.bce_logits)
    assert math.isfinite(loss) and loss < 1e-12
    assert np.all(np.isfinite(grad))


def test_variant_parsing():
    assert CeVariant.parse("softmax") == CeVariant.softmax_ce
    assert CeVariant.parse("CE") == CeVariant.softmax_ce
    assert CeVariant.parse("bce") == CeVariant.bce_logits
    assert CeVariant.parse("bce_logits") == CeVariant.bce_logits
    with pytest.raises(ArgumentError):
        CeVariant.parse("focal")


def test_shape_mismatch():
    labels = LabelMap.create(np.zeros((2, 2), dtype=np.int32), 2)
    with pytest.raises(ShapeError):
        ce_loss(LogitMap.create(np.zeros((3, 2, 2))), one_hot(labels))


def test_softmax_hand_values():
    p = softmax(LogitMap.create(np.array([[[0.0]], [[math.log(3.0)]]])))
    assert p[:, 0, 0].tolist() == pytest.approx([0.25, 0.75], abs=1e-12)


def test_softmax_ignores_a_common_shift(rs):
    z = rs.normal(size=(3, 4, 4))
    assert np.allclose(softmax(LogitMap.create(z + 100.0)), softmax(LogitMap.create(z)), atol=1e-12)


@pytest.mark.parametrize("margin", [20.0, 35.0])
def test_confident_correct_prediction_has_tiny_loss(margin):
    labels = LabelMap.create(np.array([[0, 1], [2, 1]]), 3)
    z = margin * np.asarray(one_hot(labels, np.float64))
    loss, _ = ce_loss(LogitMap.create(z), one_hot(labels, np.float64), CeVariant.softmax_ce)
    assert 0.0 <= loss < 1e-8
