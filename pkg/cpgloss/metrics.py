''' segmentation metrics: confusion matrix / mIoU, probability transects, boundary sharpness '''
from enum import IntEnum
import numpy as np
import pandas as pd

from .maptype import LabelMap, ArgumentError, ShapeError, require_same_shape

__all__ = ["ConfusionMatrix", "Axis", "Transect", "argmax_labels", "miou", "transect", "boundary_sharpness"]


class ConfusionMatrix(object):
    '''
    C x C counts, rows = ground truth class, columns = predicted class. Ignored pixels are skipped.
    '''
    def __init__(self, n_class):
        self.n_class = int(n_class)
        self.matrix = np.zeros((self.n_class, self.n_class), dtype=np.int64)

    def generate_confusion_matrix(self, preds, labels, valid):
        '''generate confusion matrix from prediction and labels'''
        index = valid & (labels >= 0) & (labels < self.n_class)
        mask = self.n_class * labels[index].astype(np.int64) + preds[index].astype(np.int64)
        count = np.bincount(mask, minlength=self.n_class ** 2)
        return count.reshape(self.n_class, self.n_class)

    def add_batch(self, pred_labels, gt_labels):
        ''' update confusion matrix with one label map pair '''
        require_same_shape(pred_labels, gt_labels, "prediction labels", "ground-truth labels")
        valid = gt_labels.valid_mask() if isinstance(gt_labels, LabelMap) else np.ones(np.shape(gt_labels), bool)
        self.matrix += self.generate_confusion_matrix(np.asarray(pred_labels), np.asarray(gt_labels), valid)
        return self

    def merge(self, other):
        ''' component-wise add of another shard's counts '''
        if other.n_class != self.n_class:
            raise ShapeError("cannot merge {}-class and {}-class confusion matrices".format(
                self.n_class, other.n_class))
        merged = ConfusionMatrix(self.n_class)
        merged.matrix = self.matrix + other.matrix
        return merged

    @property
    def total(self):
        return int(self.matrix.sum())

    def pixel_accuracy(self):
        total = self.total
        return float(np.diag(self.matrix).sum() / total) if total else 0.0

    def iou(self):
        '''
        :return: (per-class IoU with NaN for classes absent from both inputs, mean over present classes)
        '''
        inter = np.diag(self.matrix).astype(np.float64)
        union = self.matrix.sum(axis=1) + self.matrix.sum(axis=0) - np.diag(self.matrix)
        per_class = np.full(self.n_class, np.nan)
        present = union > 0
        per_class[present] = inter[present] / union[present]
        mean = float(per_class[present].mean()) if np.any(present) else 0.0
        return per_class, mean


def argmax_labels(pred, ignore_index=255):
    """
    :param pred: ProbMap [C, H, W]
    :return: LabelMap of per-pixel argmax; ties go to the lowest class index.
    """
    p = np.asarray(pred)
    if p.ndim != 3:
        raise ShapeError("expected a [C, H, W] probability map, got shape {}".format(tuple(p.shape)))
    return LabelMap.create(np.argmax(p, axis=0), p.shape[0], ignore_index=ignore_index)


def miou(pred_labels, gt_labels):
    """
    :param pred_labels: LabelMap of predictions.
    :param gt_labels: LabelMap of ground truth; its ignore_index pixels are excluded.
    :return: (per_class IoU as float32 array, mean IoU)
    """
    require_same_shape(pred_labels, gt_labels, "prediction labels", "ground-truth labels")
    c_pred = getattr(pred_labels, "num_classes", None)
    c_gt = getattr(gt_labels, "num_classes", None)
    if c_pred is not None and c_gt is not None and c_pred != c_gt:
        raise ShapeError("prediction has {} classes, ground truth has {}".format(c_pred, c_gt))
    cm = ConfusionMatrix(c_gt if c_gt is not None else c_pred).add_batch(pred_labels, gt_labels)
    per_class, mean = cm.iou()
    return per_class.astype(np.float32), mean


class Axis(IntEnum):
    row = 1
    column = 2

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).strip().lower()]
        except KeyError:
            raise ArgumentError("unknown transect axis {!r}".format(name))


class Transect(object):
    def __init__(self, axis, index, cls, probability, gt):
        self.axis = Axis.parse(axis)
        self.index = int(index)
        self.cls = int(cls)
        self.probability = np.asarray(probability, dtype=np.float32)
        self.gt = np.asarray(gt, dtype=np.float32)

    def __len__(self):
        return len(self.probability)

    def to_frame(self):
        return pd.DataFrame({"pixel_index": np.arange(len(self), dtype=np.int64),
                             "probability": self.probability,
                             "gt": self.gt})

    def transitions(self):
        """
        :return: pixel indices i where the GT trace changes between i - 1 and i.
        """
        return (np.flatnonzero(np.diff(self.gt) != 0) + 1).tolist()


def transect(pred, gt, cls, axis, index):
    """
    Probability and GT traces of class cls along one row or column.
    :param pred: ProbMap of kind Predicted.
    :param gt: ProbMap of kind GroundTruth.
    :param cls: class index.
    :param axis: Axis or 'row' / 'column'.
    :param index: row or column number.
    :return: Transect
    """
    p = np.asarray(pred)
    g = np.asarray(gt)
    require_same_shape(p, g, "prediction", "ground truth")
    axis = Axis.parse(axis)
    c, h, w = p.shape
    if not 0 <= cls < c:
        raise ArgumentError("class {} is outside [0, {})".format(cls, c))
    limit = h if axis == Axis.row else w
    if not 0 <= index < limit:
        raise ArgumentError("{} index {} is outside [0, {})".format(axis.name, index, limit))
    if axis == Axis.row:
        return Transect(axis, index, cls, p[cls, index, :], g[cls, index, :])
    return Transect(axis, index, cls, p[cls, :, index], g[cls, :, index])


def boundary_sharpness(pred, gt_labels):
    """
    Mean |p_c(a) - p_c(b)| over 4-adjacent pixel pairs (a, b) with different GT labels, where c
    is the GT class of a. Each pair is counted once from each endpoint. Pairs touching an
    ignored pixel are skipped.
    :param pred: ProbMap [C, H, W]
    :param gt_labels: LabelMap [H, W]
    :return: value in [0, 1], 0 when no such pair exists.
    """
    p = np.asarray(pred, dtype=np.float64)
    lab = np.asarray(gt_labels)
    if p.ndim != 3 or p.shape[1:] != lab.shape:
        raise ShapeError("prediction shape {} does not match labels shape {}".format(
            tuple(p.shape), tuple(lab.shape)))
    valid = gt_labels.valid_mask() if isinstance(gt_labels, LabelMap) else np.ones(lab.shape, bool)
    c = p.shape[0]
    safe = np.where(valid, lab, 0).clip(0, c - 1)

    total = 0.0
    count = 0
    for a_sl, b_sl in (((slice(None), slice(0, -1)), (slice(None), slice(1, None))),
                       ((slice(0, -1), slice(None)), (slice(1, None), slice(None)))):
        la, lb = safe[a_sl], safe[b_sl]
        sel = valid[a_sl] & valid[b_sl] & (lab[a_sl] != lab[b_sl])
        if not np.any(sel):
            continue
        rr, cc = np.nonzero(sel)
        pa = p[:, a_sl[0], a_sl[1]][:, rr, cc]
        pb = p[:, b_sl[0], b_sl[1]][:, rr, cc]
        ca, cb = la[rr, cc], lb[rr, cc]
        cols = np.arange(len(rr))
        total += np.abs(pa[ca, cols] - pb[ca, cols]).sum()
        total += np.abs(pb[cb, cols] - pa[cb, cols]).sum()
        count += 2 * len(rr)
    return float(total / count) if count else 0.0
