from enum import IntEnum
import numpy as np
from scipy import special

from .maptype import (TypedMap, MapType, LabelMap, ShapeError, DataError, ArgumentError,
                      require_same_shape, float_dtype_of)

__all__ = ["CeVariant", "one_hot", "softmax", "ce_loss"]


class CeVariant(IntEnum):
    softmax_ce = 1  # CrossEntropyLoss over the channel axis
    bce_logits = 2  # BCEWithLogitsLoss, independent per channel

    @classmethod
    def parse(cls, name):
        aliases = {"softmax": cls.softmax_ce, "ce": cls.softmax_ce, "bce": cls.bce_logits}
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls[key]
        except KeyError:
            raise ArgumentError("unknown CE variant {!r}".format(name))


def one_hot(labels, dtype=np.float32):
    """
    Encode a label map as a C-channel ground-truth probability map.
    Ignored pixels are all-zero across channels.
    :param labels: LabelMap
    :param dtype: float dtype of the result.
    :return: ProbMap of kind GroundTruth, shape [C, H, W]
    """
    if not isinstance(labels, LabelMap) or labels.num_classes is None:
        raise ArgumentError("one_hot needs a LabelMap created with LabelMap.create()")
    labels.validate()
    lab = np.asarray(labels)
    valid = labels.valid_mask()
    c = labels.num_classes
    gt = (np.arange(c).reshape(c, 1, 1) == lab[np.newaxis]) & valid[np.newaxis]
    return TypedMap(gt.astype(dtype), MapType.GroundTruth, dtype=dtype)


def _check_logits(logits):
    z = np.asarray(logits)
    if z.ndim != 3:
        raise ShapeError("logits must have shape [C, H, W], got {}".format(tuple(z.shape)))
    if not np.all(np.isfinite(z)):
        raise DataError("logits contain non-finite values")
    return z


def softmax(logits):
    """
    Per-pixel softmax over the channel axis (max-subtracted).
    :param logits: LogitMap or [C, H, W] array.
    :return: ProbMap of kind Predicted with the logits' float precision.
    """
    z = _check_logits(logits)
    dtype = float_dtype_of(z)
    p = special.softmax(z.astype(np.float64), axis=0)
    return TypedMap(p.astype(dtype), MapType.Predicted, dtype=dtype)


def ce_loss(logits, gt, variant=CeVariant.softmax_ce):
    """
    Pixel-wise cross-entropy and its exact gradient with respect to the logits.

    softmax_ce: mean over non-ignored pixels of -sum_c y log p.
    bce_logits: mean over non-ignored pixels and all channels of
                -[y log s(z) + (1 - y) log(1 - s(z))], s the logistic function.

    A pixel is ignored when its ground-truth vector is all zero.

    :param logits: LogitMap [C, H, W]
    :param gt: ProbMap of kind GroundTruth [C, H, W]
    :param variant: CeVariant
    :return: (loss, grad) where grad is a LogitMap with the logits' precision.
    """
    z = _check_logits(logits)
    y = np.asarray(gt)
    require_same_shape(z, y, "logits", "ground truth")
    if getattr(gt, "map_type", MapType.GroundTruth) != MapType.GroundTruth:
        raise ArgumentError("ce_loss needs a ground-truth map, got {}".format(gt.map_type.name))
    variant = CeVariant.parse(variant)
    dtype = float_dtype_of(z)

    z64 = z.astype(np.float64)
    y64 = y.astype(np.float64)
    valid = y64.sum(axis=0) > 0
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        return 0.0, TypedMap(np.zeros_like(z64), MapType.Logits, dtype=dtype)

    if variant == CeVariant.softmax_ce:
        logp = special.log_softmax(z64, axis=0)
        per_pixel = -(y64 * logp).sum(axis=0)
        loss = per_pixel[valid].sum() / n_valid
        grad = (np.exp(logp) - y64) * valid / n_valid
    else:
        # log(1 + exp(-|z|)) keeps both log terms finite for any z
        per_elem = np.maximum(z64, 0.0) - z64 * y64 + np.log1p(np.exp(-np.abs(z64)))
        denom = n_valid * z64.shape[0]
        loss = (per_elem * valid).sum() / denom
        grad = (special.expit(z64) - y64) * valid / denom

    return float(loss), TypedMap(grad, MapType.Logits, dtype=dtype)
