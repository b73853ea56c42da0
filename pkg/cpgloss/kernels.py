import numpy as np

from .maptype import ArgumentError

__all__ = ["GradKernel", "generate_kernel", "kernel_row_sums", "box_kernel", "sobel_reference",
           "validate_kernel_size"]


def validate_kernel_size(size):
    """
    :param size: candidate kernel size M.
    :return: M as int, raises ArgumentError unless M is an odd integer >= 3.
    """
    try:
        m = int(size)
    except (TypeError, ValueError):
        raise ArgumentError("kernel size must be an integer, got {!r}".format(size))
    if m != size or m < 3 or m % 2 == 0:
        raise ArgumentError("kernel size must be an odd integer >= 3, got {!r}".format(size))
    return m


class GradKernel(object):
    '''
    Matched pair of M x M differentiation kernels, kx for the horizontal direction and
    ky = kx.T for the vertical one.
    '''
    def __init__(self, kx):
        kx = np.asarray(kx, dtype=np.float32)
        if kx.ndim != 2 or kx.shape[0] != kx.shape[1]:
            raise ArgumentError("kernel must be square, got shape {}".format(kx.shape))
        self.size = validate_kernel_size(kx.shape[0])
        self.__kx = kx
        self.__kx.flags.writeable = False
        self.__ky = np.ascontiguousarray(kx.T)
        self.__ky.flags.writeable = False

    @property
    def kx(self):
        return self.__kx

    @property
    def ky(self):
        return self.__ky

    @property
    def half_width(self):
        return (self.size - 1) // 2

    def pair(self, dtype=np.float32):
        """
        :return: (kx, ky) cast to dtype, in the fixed direction order (x, y).
        """
        return self.kx.astype(dtype), self.ky.astype(dtype)

    def __repr__(self):
        return "GradKernel(size={})".format(self.size)


_kernel_cache = {}


def generate_kernel(size):
    """
    Build the differentiation kernel pair of odd size M.

        kx(i, j) = 0                                   if j == m
                 = (j - m) / ((i - m)^2 + (j - m)^2)   otherwise,   m = (M - 1) / 2

    For M = 3 this is the Sobel x-operator scaled by 0.5; for every M the largest
    magnitude is 1.0, at (m, m +- 1).

    :param size: odd integer M >= 3.
    :return: GradKernel
    """
    m_size = validate_kernel_size(size)
    if m_size in _kernel_cache:
        return _kernel_cache[m_size]

    m = (m_size - 1) // 2
    i, j = np.meshgrid(np.arange(m_size) - m, np.arange(m_size) - m, indexing="ij")
    denom = i * i + j * j
    kx = np.zeros((m_size, m_size), dtype=np.float64)
    nz = j != 0
    kx[nz] = j[nz] / denom[nz]
    kernel = GradKernel(kx)
    _kernel_cache[m_size] = kernel
    return kernel


def kernel_row_sums(k):
    """
    :param k: GradKernel
    :return: per-row sums of kx as float32; all zero because each row is antisymmetric.
    """
    kx = k.kx.astype(np.float64)
    m = k.half_width
    # Pair each tap with its mirror so the cancellation is exact.
    sums = kx[:, m + 1:].sum(axis=1) + kx[:, :m][:, ::-1].sum(axis=1)
    return sums.astype(np.float32)


def sobel_reference():
    """
    :return: the unscaled 3 x 3 Sobel x-operator.
    """
    return np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]], dtype=np.float32)


def box_kernel(radius, dtype=np.float64):
    """
    :param radius: R >= 0.
    :return: normalized (2R+1) x (2R+1) box filter.
    """
    if radius < 0 or int(radius) != radius:
        raise ArgumentError("blur radius must be a non-negative integer, got {!r}".format(radius))
    side = 2 * int(radius) + 1
    return np.full((side, side), 1.0 / (side * side), dtype=dtype)
