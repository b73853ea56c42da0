import os
from enum import IntEnum
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from scipy import signal

from .maptype import TypedMap, MapType, GradField, ShapeError, ArgumentError, float_dtype_of
from .tensorio import export_pgm
from .logger_utils import setuplogs

log = setuplogs(level='INFO')

__all__ = ["EPS_BOUNDARY", "MaskCollapse", "BoundaryMask", "correlate_plane", "correlate_plane_adjoint",
           "correlate", "correlate_transpose", "magnitude_direction", "extract_boundary", "magnitude_pgms"]

EPS_BOUNDARY = 1e-6


class MaskCollapse(IntEnum):
    per_direction = 1  # mask kept separately for the x and y planes
    per_pixel = 2  # a pixel is masked in both planes if either plane is non-zero

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).strip().lower().replace("-", "_")]
        except KeyError:
            raise ArgumentError("unknown mask collapse mode {!r}".format(name))


def _check_kernel_fits(kernel_size, spatial_shape):
    h, w = spatial_shape
    if kernel_size > 2 * min(h, w) + 1:
        raise ShapeError("kernel size {} is larger than 2*min(H, W)+1 for an image of shape {}".format(
            kernel_size, (h, w)))


def correlate_plane(x, k):
    """
    2-D correlation with replicate (clamp-to-edge) padding:

        out(i, j) = sum_{r,c} k(r, c) * x(clamp(i + r - m), clamp(j + c - m))

    :param x: [H, W] array.
    :param k: odd-sized square kernel.
    :return: [H, W] array in x's dtype.
    """
    m = (k.shape[0] - 1) // 2
    padded = np.pad(x, m, mode="edge")
    return signal.correlate2d(padded, k.astype(x.dtype), mode="valid")


def correlate_plane_adjoint(g, k):
    """
    Exact adjoint of correlate_plane: scatter through the kernel onto the padded frame,
    then fold every padded border cell back onto the edge pixel it was copied from.
    :param g: [H, W] upstream array.
    :param k: kernel used in the forward pass.
    :return: [H, W] array in g's dtype.
    """
    h, w = g.shape
    m = (k.shape[0] - 1) // 2
    full = signal.convolve2d(g, k.astype(g.dtype), mode="full")
    rows = full[m:m + h].copy()
    rows[0] += full[:m].sum(axis=0)
    rows[-1] += full[m + h:].sum(axis=0)
    out = rows[:, m:m + w].copy()
    out[:, 0] += rows[:, :m].sum(axis=1)
    out[:, -1] += rows[:, m + w:].sum(axis=1)
    return out


def _map_channels(fn, num_channels, threads):
    if threads is None or threads <= 1 or num_channels <= 1:
        return [fn(c) for c in range(num_channels)]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        # results come back in channel order whatever the scheduling
        return list(pool.map(fn, range(num_channels)))


def correlate(prob_map, kernel, threads=1):
    """
    Per-channel probability gradients (x then y) by correlation with kernel.kx / kernel.ky.
    :param prob_map: ProbMap or [C, H, W] array.
    :param kernel: GradKernel
    :param threads: channel-level worker threads; the result does not depend on it.
    :return: GradField [C, 2, H, W]
    """
    p = np.asarray(prob_map)
    if p.ndim != 3:
        raise ShapeError("correlate needs a [C, H, W] map, got shape {}".format(tuple(p.shape)))
    _check_kernel_fits(kernel.size, p.shape[1:])
    dtype = float_dtype_of(p)
    p = p.astype(dtype, copy=False)
    kx, ky = kernel.pair(dtype)

    def one_channel(c):
        return np.stack([correlate_plane(p[c], kx), correlate_plane(p[c], ky)])

    planes = _map_channels(one_channel, p.shape[0], threads)
    out = np.stack(planes) if planes else np.zeros((0, 2) + p.shape[1:], dtype=dtype)
    return TypedMap(out, MapType.Gradient, dtype=dtype)


def correlate_transpose(upstream, kernel, threads=1):
    """
    Adjoint of correlate: <correlate(u, k), v> == <u, correlate_transpose(v, k)>.
    :param upstream: [C, 2, H, W] array.
    :param kernel: GradKernel used in the forward pass.
    :param threads: channel-level worker threads.
    :return: [C, H, W] plain ndarray.
    """
    v = np.asarray(upstream)
    if v.ndim != 4 or v.shape[1] != 2:
        raise ShapeError("correlate_transpose needs a [C, 2, H, W] field, got shape {}".format(tuple(v.shape)))
    # no size check: the border fold is exact for any m, even m >= H
    dtype = float_dtype_of(v)
    v = v.astype(dtype, copy=False)
    kx, ky = kernel.pair(dtype)

    def one_channel(c):
        return correlate_plane_adjoint(v[c, 0], kx) + correlate_plane_adjoint(v[c, 1], ky)

    planes = _map_channels(one_channel, v.shape[0], threads)
    return np.stack(planes).astype(dtype) if planes else np.zeros((0,) + v.shape[2:], dtype=dtype)


def magnitude_direction(field):
    """
    :param field: GradField [C, 2, H, W]
    :return: (mag, theta), each [C, H, W]; theta in (-pi, pi] with atan2(0, 0) = 0.
    """
    f = np.asarray(field)
    if f.ndim != 4 or f.shape[1] != 2:
        raise ShapeError("expected a [C, 2, H, W] field, got shape {}".format(tuple(f.shape)))
    gx, gy = f[:, 0], f[:, 1]
    mag = np.hypot(gx, gy)
    # +0.0 turns -0.0 into +0.0 so atan2 never returns -pi
    theta = np.arctan2(gy + 0.0, gx)
    return mag.astype(f.dtype), theta.astype(f.dtype)


class BoundaryMask(object):
    '''
    0/1 mask over a [C, 2, H, W] gradient field together with its element counts:
    n_plus over the whole mask, per_class_counts summed over both directions of each channel.
    '''
    def __init__(self, mask, collapse=MaskCollapse.per_direction):
        m = np.asarray(mask)
        if m.ndim != 4 or m.shape[1] != 2:
            raise ShapeError("boundary mask must be [C, 2, H, W], got shape {}".format(tuple(m.shape)))
        self.__mask = TypedMap(m != 0, MapType.Mask, dtype=np.float32)
        self.collapse = MaskCollapse.parse(collapse)
        self.__per_class = np.count_nonzero(m, axis=(1, 2, 3)).astype(np.int64)
        self.__n_plus = int(self.__per_class.sum())

    @property
    def mask(self):
        return self.__mask

    @property
    def n_plus(self):
        return self.__n_plus

    @property
    def per_class_counts(self):
        return self.__per_class.copy()

    @property
    def shape(self):
        return self.__mask.shape

    def as_bool(self):
        return np.asarray(self.__mask) != 0

    def support(self):
        """
        :return: [C, H, W] boolean, True where either direction is masked.
        """
        return self.as_bool().any(axis=1)


def extract_boundary(gt_field, collapse=MaskCollapse.per_direction, eps=EPS_BOUNDARY):
    """
    Boundary mask from a ground-truth gradient field: 1 where |Grad^GT| > eps.
    :param gt_field: GradField computed from a ground-truth ProbMap.
    :param collapse: MaskCollapse; per_pixel marks both direction planes of a pixel when either is set.
    :param eps: threshold standing in for the exact zero test.
    :return: BoundaryMask
    """
    g = np.asarray(gt_field)
    if g.ndim != 4 or g.shape[1] != 2:
        raise ShapeError("expected a [C, 2, H, W] field, got shape {}".format(tuple(g.shape)))
    collapse = MaskCollapse.parse(collapse)
    mask = np.abs(g) > eps
    if collapse == MaskCollapse.per_pixel:
        mask = np.repeat(mask.any(axis=1, keepdims=True), 2, axis=1)
    bm = BoundaryMask(mask, collapse)
    log.debug(f"boundary mask: n_plus={bm.n_plus} per_class={bm.per_class_counts.tolist()}")
    return bm


def magnitude_pgms(field, directory, prefix="magnitude"):
    """
    Write one grayscale PGM per channel of the field's magnitude, scaled to [0, max magnitude].
    :return: list of written paths.
    """
    mag, _ = magnitude_direction(field)
    hi = float(np.max(mag)) if mag.size else 0.0
    if hi <= 0.0:
        hi = 1.0
    os.makedirs(directory, exist_ok=True)
    paths = []
    for c in range(mag.shape[0]):
        path = os.path.join(directory, "{}_c{:02d}.pgm".format(prefix, c))
        with open(path, "wb") as f:
            export_pgm(mag[c], 0.0, hi, f)
        paths.append(path)
    log.info(f"wrote {len(paths)} magnitude images to {directory}")
    return paths
