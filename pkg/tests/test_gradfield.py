import os
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpgloss import (generate_kernel, one_hot, correlate, correlate_transpose, correlate_plane,
                     correlate_plane_adjoint, extract_boundary, magnitude_direction, magnitude_pgms,
                     MaskCollapse, MapType, ShapeError, ArgumentError, box_kernel)
from conftest import step_labels


def test_step_scene_x_gradient(step4):
    field = correlate(one_hot(step4), generate_kernel(3))
    assert field.map_type == MapType.Gradient
    assert field.shape == (2, 2, 4, 4)
    for row in range(4):
        assert field[1, 0, row].tolist() == [0, 2, 2, 0]
        assert field[0, 0, row].tolist() == [0, -2, -2, 0]
    assert not np.any(field[:, 1])


def test_step_scene_boundary_counts(step4):
    field = correlate(one_hot(step4), generate_kernel(3))
    mask = extract_boundary(field)
    assert mask.n_plus == 16
    assert mask.per_class_counts.tolist() == [8, 8]
    assert not np.any(mask.mask[:, 1])
    both = extract_boundary(field, MaskCollapse.per_pixel)
    assert both.n_plus == 32
    assert np.array_equal(both.support(), mask.support())


def test_band_widths_grow_with_kernel_size():
    labels = step_labels(8, 16, edge=8)
    gt = one_hot(labels)
    supports = {}
    for size, width in ((3, 2), (5, 4), (7, 6)):
        support = extract_boundary(correlate(gt, generate_kernel(size))).support()[1]
        cols = np.flatnonzero(support.any(axis=0))
        assert len(cols) == width
        assert cols.tolist() == list(range(8 - width // 2, 8 + width // 2))
        assert np.all(support[:, cols])
        supports[size] = support
    assert np.all(supports[5][supports[3]])
    assert np.all(supports[7][supports[5]])


@given(seed=st.integers(0, 2 ** 31 - 1), c=st.integers(1, 3), h=st.integers(3, 8), w=st.integers(3, 8),
       size=st.sampled_from([3, 5, 7]))
def test_correlate_transpose_is_adjoint(seed, c, h, w, size):
    rs = np.random.RandomState(seed)
    k = generate_kernel(size)
    u = rs.normal(size=(c, h, w))
    v = rs.normal(size=(c, 2, h, w))
    lhs = float(np.sum(np.asarray(correlate(u, k)) * v))
    rhs = float(np.sum(u * correlate_transpose(v, k)))
    assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs), abs(rhs))


def test_plane_adjoint_on_border_dominated_image(rs):
    k = box_kernel(3)
    x = rs.normal(size=(3, 3))
    g = rs.normal(size=(3, 3))
    assert np.isclose(np.sum(correlate_plane(x, k) * g), np.sum(x * correlate_plane_adjoint(g, k)))


def test_linearity_and_constant_maps(rs):
    k = generate_kernel(5)
    a = rs.uniform(size=(2, 6, 7))
    b = rs.uniform(size=(2, 6, 7))
    assert np.allclose(correlate(a + 2 * b, k), np.asarray(correlate(a, k)) + 2 * np.asarray(correlate(b, k)))
    assert np.allclose(correlate(np.full((1, 6, 7), 0.3), k), 0.0, atol=1e-6)


def test_threads_do_not_change_results(rs):
    k = generate_kernel(7)
    p = rs.uniform(size=(5, 9, 11)).astype(np.float32)
    v = rs.normal(size=(5, 2, 9, 11)).astype(np.float32)
    assert np.array_equal(correlate(p, k, threads=1), correlate(p, k, threads=4))
    assert np.array_equal(correlate_transpose(v, k, threads=1), correlate_transpose(v, k, threads=4))


def test_kernel_larger_than_image():
    with pytest.raises(ShapeError):
        correlate(np.zeros((1, 3, 3)), generate_kernel(9))
    correlate(np.zeros((1, 3, 3)), generate_kernel(7))


@pytest.mark.parametrize("size", [3, 5, 7])
def test_transpose_on_single_pixel_is_zero(size):
    out = correlate_transpose(np.ones((1, 2, 1, 1)), generate_kernel(size))
    assert out.shape == (1, 1, 1)
    assert abs(out[0, 0, 0]) <= 1e-6


def test_transposed_input_swaps_directions(rs):
    k = generate_kernel(5)
    p = rs.uniform(size=(2, 6, 9))
    field = np.asarray(correlate(p, k))
    flipped = np.asarray(correlate(p.transpose(0, 2, 1), k))
    assert np.allclose(flipped[:, 0], field[:, 1].transpose(0, 2, 1))
    assert np.allclose(flipped[:, 1], field[:, 0].transpose(0, 2, 1))


def test_wrong_ranks():
    with pytest.raises(ShapeError):
        correlate(np.zeros((3, 3)), generate_kernel(3))
    with pytest.raises(ShapeError):
        correlate_transpose(np.zeros((1, 3, 3, 3)), generate_kernel(3))
    with pytest.raises(ShapeError):
        extract_boundary(np.zeros((1, 3, 3)))


def test_magnitude_direction(step4):
    field = correlate(one_hot(step4), generate_kernel(3))
    mag, theta = magnitude_direction(field)
    assert mag[1, 0].tolist() == [0, 2, 2, 0]
    pi = np.float32(np.pi)
    assert np.all(theta > -pi) and np.all(theta <= pi)
    assert theta[1, 0, 1] == 0.0
    assert np.isclose(theta[0, 0, 1], np.pi)


def test_collapse_parsing():
    assert MaskCollapse.parse("per-pixel") == MaskCollapse.per_pixel
    with pytest.raises(ArgumentError):
        MaskCollapse.parse("diagonal")


def test_magnitude_pgms(tmp_path, step4):
    field = correlate(one_hot(step4), generate_kernel(3))
    paths = magnitude_pgms(field, str(tmp_path / "mag"))
    assert [os.path.basename(p) for p in paths] == ["magnitude_c00.pgm", "magnitude_c01.pgm"]
    with open(paths[1], "rb") as f:
        data = f.read()
    assert data[-4:] == bytes([0, 255, 255, 0])
