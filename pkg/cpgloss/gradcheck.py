"""
Finite-difference oracle for the analytic gradients.
"""
import numpy as np

from .maptype import TypedMap, MapType
from .cpg import combined_loss

__all__ = ["numerical_gradient", "relative_error", "check_combined_gradient"]


def numerical_gradient(fn, x, step=1e-3):
    """
    Central differences of a scalar function, evaluated in float64.
    :param fn: callable taking an array shaped like x and returning a float.
    :param x: point of evaluation.
    :param step: perturbation size h; each entry costs two calls of fn.
    :return: float64 array shaped like x, (fn(x + h e_i) - fn(x - h e_i)) / 2h.
    """
    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        f_plus = float(fn(x0))
        flat[i] = keep - step
        f_minus = float(fn(x0))
        flat[i] = keep
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric):
    """
    :return: max |a - n| / max(max |n|, 1e-12)
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n)) / max(float(np.max(np.abs(n))) if n.size else 0.0, 1e-12))


def check_combined_gradient(logits, labels, cfg, step=1e-3):
    """
    :param logits: [C, H, W] array, promoted to float64.
    :param labels: LabelMap
    :param cfg: CpgConfig
    :return: relative error of combined_loss's grad_logits against central differences.
    """
    z = TypedMap(np.asarray(logits, dtype=np.float64), MapType.Logits, dtype=np.float64)
    analytic = combined_loss(z, labels, cfg).grad_logits

    def fn(x):
        return combined_loss(TypedMap(x, MapType.Logits, dtype=np.float64), labels, cfg).combined

    return relative_error(analytic, numerical_gradient(fn, z, step=step))
