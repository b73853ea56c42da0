import numpy as np
import pytest

from cpgloss import generate_kernel, kernel_row_sums, sobel_reference, box_kernel, ArgumentError


def test_size_3_is_half_sobel():
    k = generate_kernel(3)
    assert np.array_equal(k.kx, 0.5 * sobel_reference())
    assert np.array_equal(k.kx, np.array([[-0.5, 0, 0.5], [-1, 0, 1], [-0.5, 0, 0.5]], dtype=np.float32))


def test_size_5_values():
    kx = generate_kernel(5).kx
    assert kx[0, 0] == -0.25
    assert kx[2, 3] == 1.0
    assert kx[2, 4] == 0.5
    assert kx[1, 3] == 0.5
    assert np.all(kx[:, 2] == 0)


@pytest.mark.parametrize("size", [3, 5, 7])
def test_structure(size):
    k = generate_kernel(size)
    m = k.half_width
    assert k.kx.shape == (size, size)
    assert np.all(k.kx[:, m] == 0)
    assert np.array_equal(k.kx[:, ::-1], -k.kx)
    assert np.array_equal(k.ky, k.kx.T)
    assert np.abs(k.kx).max() == 1.0
    assert k.kx[m, m + 1] == 1.0 and k.kx[m, m - 1] == -1.0
    assert np.all(kernel_row_sums(k) == 0)


@pytest.mark.parametrize("size", [0, 1, 2, 4, -3, 3.5, "3"])
def test_invalid_sizes(size):
    with pytest.raises(ArgumentError):
        generate_kernel(size)


def test_kernel_is_cached_and_read_only():
    k = generate_kernel(5)
    assert generate_kernel(5) is k
    with pytest.raises(ValueError):
        k.kx[0, 0] = 3.0
    kx, ky = k.pair(np.float64)
    assert kx.dtype == np.float64 and np.array_equal(ky, kx.T)


def test_box_kernel():
    assert box_kernel(0).tolist() == [[1.0]]
    b = box_kernel(2, dtype=np.float32)
    assert b.shape == (5, 5) and b.dtype == np.float32
    assert np.isclose(b.sum(), 1.0)
    with pytest.raises(ArgumentError):
        box_kernel(-1)
