from enum import IntEnum
import math
import numpy as np

from .maptype import (TypedMap, MapType, LabelMap, ShapeError, ArgumentError, DataError, require_same_shape,
                      float_dtype_of)
from .kernels import generate_kernel, validate_kernel_size
from .probmaps import CeVariant, one_hot, softmax, ce_loss
from .gradfield import MaskCollapse, correlate, correlate_transpose, extract_boundary
from .logger_utils import setuplogs

log = setuplogs(level='INFO')

__all__ = ["Normalization", "CpgConfig", "LossReport", "GtTarget", "prepare_target", "cpg_forward",
           "cpg_backward", "combined_loss"]


class Normalization(IntEnum):
    global_ = 1  # sum of squared residuals over all classes divided by N+
    per_category = 2  # mean over classes with N_c+ > 0 of (sum over class c) / N_c+

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        if key in ("global", "global_"):
            return cls.global_
        if key == "per_category":
            return cls.per_category
        raise ArgumentError("unknown normalization {!r}".format(name))

    @property
    def label(self):
        return "global" if self == Normalization.global_ else self.name


class CpgConfig(object):
    def __init__(self, kernel_size=3, alpha=1.0, ce_variant=CeVariant.softmax_ce,
                 mask_collapse=MaskCollapse.per_direction, normalization=Normalization.global_, threads=1):
        """
        :param kernel_size: odd M >= 3 of the differentiation kernel.
        :param alpha: weight of the CPG term in the combined objective, finite and >= 0.
        :param ce_variant: CeVariant used for the pixel-wise term.
        :param mask_collapse: MaskCollapse, how boundary elements are counted.
        :param normalization: Normalization of the squared residual sum.
        :param threads: channel-level worker threads (results do not depend on it).
        """
        self.kernel_size = validate_kernel_size(kernel_size)
        alpha = float(alpha)
        if not math.isfinite(alpha) or alpha < 0.0:
            raise ArgumentError("alpha must be finite and >= 0, got {}".format(alpha))
        self.alpha = alpha
        self.ce_variant = CeVariant.parse(ce_variant)
        self.mask_collapse = MaskCollapse.parse(mask_collapse)
        self.normalization = Normalization.parse(normalization)
        if int(threads) < 1:
            raise ArgumentError("threads must be >= 1, got {}".format(threads))
        self.threads = int(threads)

    @property
    def kernel(self):
        return generate_kernel(self.kernel_size)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return CpgConfig.from_dict(d)

    def to_dict(self):
        return {"kernel_size": self.kernel_size, "alpha": self.alpha, "ce_variant": self.ce_variant.name,
                "mask_collapse": self.mask_collapse.name, "normalization": self.normalization.label,
                "threads": self.threads}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def __repr__(self):
        return "CpgConfig({})".format(", ".join("{}={}".format(k, v) for k, v in self.to_dict().items()))


class LossReport(object):
    '''
    Scalar loss components of one evaluation plus the gradient of the combined loss
    with respect to the logits.
    '''
    def __init__(self, ce, cpg, alpha, grad_logits, n_plus, per_class_boundary_counts):
        self.ce = float(ce)
        self.cpg = float(cpg)
        self.alpha = float(alpha)
        self.combined = self.ce + self.alpha * self.cpg
        self.grad_logits = grad_logits
        self.n_plus = int(n_plus)
        self.per_class_boundary_counts = [int(n) for n in per_class_boundary_counts]

    def summary(self):
        return {"ce": self.ce, "cpg": self.cpg, "combined": self.combined, "n_plus": self.n_plus}

    def to_dict(self):
        d = self.summary()
        d["alpha"] = self.alpha
        d["per_class_boundary_counts"] = list(self.per_class_boundary_counts)
        return d


class GtTarget(object):
    '''
    Ground-truth side of the CPG loss computed once: the one-hot map, its gradient field
    and the boundary mask. None of it takes part in back-propagation.
    When built by prepare_target it also keeps a copy of the label map and its ignore index,
    so a target reused against other labels is caught.
    '''
    def __init__(self, gt, gt_field, mask, kernel_size, labels=None):
        self.gt = gt
        self.gt_field = gt_field
        self.mask = mask
        self.kernel_size = kernel_size
        self.labels = None if labels is None else np.array(labels, dtype=np.int32)
        self.ignore_index = getattr(labels, "ignore_index", None)

    @classmethod
    def from_ground_truth(cls, gt, cfg, dtype=None, labels=None):
        if getattr(gt, "map_type", MapType.GroundTruth) != MapType.GroundTruth:
            raise ArgumentError("expected a ground-truth map, got {}".format(gt.map_type.name))
        dtype = dtype or float_dtype_of(gt)
        gt = TypedMap(np.asarray(gt), MapType.GroundTruth, dtype=dtype)
        gt_field = correlate(gt, cfg.kernel, threads=cfg.threads)
        mask = extract_boundary(gt_field, cfg.mask_collapse)
        return cls(gt, gt_field, mask, cfg.kernel_size, labels=labels)

    def check_labels(self, labels):
        """
        Raise DataError unless this target was prepared from labels.
        Targets built straight from a ground-truth map are compared through their one-hot maps.
        """
        if self.labels is None:
            same = np.array_equal(np.asarray(self.gt), np.asarray(one_hot(labels, dtype=self.gt.dtype)))
        else:
            same = (self.ignore_index == labels.ignore_index and self.labels.shape == tuple(labels.shape)
                    and np.array_equal(self.labels, np.asarray(labels)))
        if not same:
            raise DataError("ground-truth target does not match the label map it is used with")


def prepare_target(labels, cfg, dtype=np.float32):
    """
    Precompute the ground-truth map, its gradient field and boundary mask for a label map.
    :param labels: LabelMap
    :param cfg: CpgConfig
    :param dtype: float dtype the predictions will use.
    :return: GtTarget
    """
    return GtTarget.from_ground_truth(one_hot(labels, dtype=dtype), cfg, dtype=dtype, labels=labels)


def _target_for(gt, cfg, dtype, target):
    if target is not None:
        if target.kernel_size != cfg.kernel_size:
            raise ArgumentError("target was prepared for kernel size {}, config uses {}".format(
                target.kernel_size, cfg.kernel_size))
        if target.mask.collapse != cfg.mask_collapse:
            raise ArgumentError("target was prepared with mask collapse {}, config uses {}".format(
                target.mask.collapse.name, cfg.mask_collapse.name))
        return target
    return GtTarget.from_ground_truth(gt, cfg, dtype=dtype)


def _residual_weights(mask, normalization):
    """
    :return: per-channel factor w_c such that loss = sum_c w_c * sum(residual_c^2).
    """
    counts = mask.per_class_counts.astype(np.float64)
    if mask.n_plus == 0:
        return np.zeros_like(counts)
    if normalization == Normalization.global_:
        return np.full_like(counts, 1.0 / mask.n_plus)
    present = counts > 0
    w = np.zeros_like(counts)
    w[present] = 1.0 / (counts[present] * np.count_nonzero(present))
    return w


def cpg_forward(gt, pred, cfg, target=None):
    """
    CPG loss value: masked squared error between ground-truth and predicted probability gradients.

        residual = mask * (Grad^GT - Grad^pred)
        loss     = sum(residual^2) / N+        (0 when N+ = 0)

    :param gt: ProbMap of kind GroundTruth [C, H, W]
    :param pred: ProbMap of kind Predicted [C, H, W]
    :param cfg: CpgConfig
    :param target: optional GtTarget precomputed for gt with the same config.
    :return: (loss, mask, residual) where mask is a BoundaryMask and residual a GradField.
    """
    require_same_shape(pred, gt if target is None else target.gt, "prediction", "ground truth")
    dtype = float_dtype_of(pred)
    target = _target_for(gt, cfg, dtype, target)
    pred_field = correlate(pred, cfg.kernel, threads=cfg.threads)

    m = target.mask.as_bool()
    diff = np.asarray(target.gt_field, dtype=np.float64) - np.asarray(pred_field, dtype=np.float64)
    residual = np.where(m, diff, 0.0)

    weights = _residual_weights(target.mask, cfg.normalization)
    per_class = (residual * residual).reshape(residual.shape[0], -1).sum(axis=1)
    loss = float((weights * per_class).sum())
    return loss, target.mask, TypedMap(residual, MapType.Gradient, dtype=dtype)


def cpg_backward(mask, residual, pred, logits, cfg):
    """
    Gradient of the CPG loss with respect to the logits. The ground-truth branch and the
    mask are constants.

        dL/dGrad^pred = -2 w_c * mask * residual
        dL/dp         = correlate_transpose(dL/dGrad^pred)
        dL/dz         = p * (dL/dp - sum_c p * dL/dp)          (softmax Jacobian, transposed)

    :param mask: BoundaryMask from cpg_forward.
    :param residual: GradField from cpg_forward.
    :param pred: ProbMap of kind Predicted, softmax of logits.
    :param logits: LogitMap the prediction was computed from.
    :param cfg: CpgConfig
    :return: LogitMap
    """
    p = np.asarray(pred)
    require_same_shape(p, logits, "prediction", "logits")
    require_same_shape(residual, mask.mask, "residual", "mask")
    if residual.shape[0] != p.shape[0] or tuple(residual.shape[2:]) != tuple(p.shape[1:]):
        raise ShapeError("residual shape {} does not match prediction shape {}".format(
            tuple(residual.shape), tuple(p.shape)))
    dtype = float_dtype_of(logits)
    if mask.n_plus == 0:
        return TypedMap(np.zeros(p.shape), MapType.Logits, dtype=dtype)

    weights = _residual_weights(mask, cfg.normalization)
    upstream = (-2.0 * weights).reshape(-1, 1, 1, 1) * mask.as_bool() * np.asarray(residual, dtype=np.float64)
    dp = correlate_transpose(upstream, cfg.kernel, threads=cfg.threads)
    p64 = p.astype(np.float64)
    dz = p64 * (dp - (p64 * dp).sum(axis=0, keepdims=True))
    return TypedMap(dz, MapType.Logits, dtype=dtype)


def _check_logits_against_labels(logits, labels):
    z_shape = tuple(np.shape(logits))
    if len(z_shape) != 3 or z_shape[0] != labels.num_classes or z_shape[1:] != tuple(labels.shape):
        raise ShapeError("logits shape {} does not match labels shape {} with {} classes".format(
            z_shape, tuple(labels.shape), labels.num_classes))


def combined_loss(logits, labels, cfg, target=None):
    """
    L = L_CE + alpha * L_CPG, with the gradient of L with respect to the logits.
    :param logits: LogitMap [C, H, W]
    :param labels: LabelMap [H, W]
    :param cfg: CpgConfig
    :param target: optional GtTarget prepared from labels with cfg; DataError if it was prepared
                   from other labels.
    :return: LossReport
    """
    if not isinstance(labels, LabelMap):
        raise ArgumentError("combined_loss needs a LabelMap")
    _check_logits_against_labels(logits, labels)
    dtype = float_dtype_of(logits)
    if target is None:
        target = prepare_target(labels, cfg, dtype=dtype)
    else:
        target.check_labels(labels)
    gt = target.gt

    ce, grad_ce = ce_loss(logits, gt, cfg.ce_variant)
    pred = softmax(logits)
    cpg, mask, residual = cpg_forward(gt, pred, cfg, target=target)

    grad = np.asarray(grad_ce, dtype=np.float64)
    if cfg.alpha != 0.0:
        grad_cpg = cpg_backward(mask, residual, pred, logits, cfg)
        grad = grad + cfg.alpha * np.asarray(grad_cpg, dtype=np.float64)

    report = LossReport(ce, cpg, cfg.alpha, TypedMap(grad, MapType.Logits, dtype=dtype),
                        mask.n_plus, mask.per_class_counts)
    log.debug(f"ce={report.ce:.6g} cpg={report.cpg:.6g} combined={report.combined:.6g} n_plus={report.n_plus}")
    return report
