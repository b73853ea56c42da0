"""
Synthetic label scenes and a toy trainer that fits a blurred free logit field with CE or CE + CPG.

The trainer optimizes theta of shape [C, H, W] by full-batch gradient descent on
combined_loss(blur(theta)). The box blur stands in for the smoothness of a convolutional
predictor: without it every pixel is fitted independently and CE alone is already perfect.
"""
import math
from enum import IntEnum
import numpy as np

from .maptype import LabelMap, TypedMap, MapType, ArgumentError, TrainingError
from .kernels import box_kernel
from .gradfield import correlate_plane, correlate_plane_adjoint
from .cpg import CpgConfig, prepare_target, combined_loss
from .probmaps import softmax
from .metrics import argmax_labels, miou, boundary_sharpness
from .helpers import read_json, write_json
from .logger_utils import setuplogs

log = setuplogs(level='INFO')

__all__ = ["ShapeKind", "Primitive", "Rect", "Disk", "Bar", "SceneSpec", "generate_scene", "builtin_scene",
           "random_scene_spec", "load_scene_spec", "TrainerConfig", "blur", "blur_adjoint", "lr_at",
           "train_toy", "evaluate_run", "sweep", "BUILTIN_SCENES"]


class ShapeKind(IntEnum):
    rect = 1
    disk = 2
    bar = 3


class Primitive(object):
    kind = None
    fields = ()

    def __init__(self, cls, **geometry):
        self.cls = int(cls)
        for name in self.fields:
            if name not in geometry:
                raise ArgumentError("{} primitive is missing '{}'".format(self.kind.name, name))
        extra = set(geometry) - set(self.fields)
        if extra:
            raise ArgumentError("{} primitive has unknown fields {}".format(self.kind.name, sorted(extra)))
        self.geometry = geometry

    @classmethod
    def _get_all_subclasses(cls):
        for subclass in cls.__subclasses__():
            yield subclass
            for subclass in subclass._get_all_subclasses():
                yield subclass

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            kind = ShapeKind[str(d.pop("kind")).lower()]
        except KeyError:
            raise ArgumentError("unknown or missing primitive kind in {}".format(d))
        if "class" not in d:
            raise ArgumentError("primitive {} has no 'class'".format(kind.name))
        label = d.pop("class")
        for subclass in Primitive._get_all_subclasses():
            if subclass.kind == kind:
                return subclass(label, **d)
        raise ArgumentError("no primitive registered for kind {}".format(kind.name))

    def to_dict(self):
        d = {"kind": self.kind.name, "class": self.cls}
        d.update(self.geometry)
        return d

    def pixels(self, height, width):
        """
        :return: boolean [height, width] coverage; raises ArgumentError if the primitive leaves the canvas.
        """
        raise NotImplementedError('Subclass must implment "pixels()"')

    def _out_of_bounds(self, height, width):
        return ArgumentError("{} primitive {} does not fit a {}x{} canvas".format(
            self.kind.name, self.geometry, height, width))


class Rect(Primitive):
    kind = ShapeKind.rect
    fields = ("top", "left", "height", "width")

    def pixels(self, height, width):
        g = self.geometry
        top, left, h, w = int(g["top"]), int(g["left"]), int(g["height"]), int(g["width"])
        if h < 1 or w < 1 or top < 0 or left < 0 or top + h > height or left + w > width:
            raise self._out_of_bounds(height, width)
        cover = np.zeros((height, width), dtype=bool)
        cover[top:top + h, left:left + w] = True
        return cover


class Disk(Primitive):
    kind = ShapeKind.disk
    fields = ("cy", "cx", "radius")

    def pixels(self, height, width):
        g = self.geometry
        cy, cx, r = float(g["cy"]), float(g["cx"]), float(g["radius"])
        if r <= 0 or cy - r < 0 or cx - r < 0 or cy + r > height - 1 or cx + r > width - 1:
            raise self._out_of_bounds(height, width)
        yy, xx = np.mgrid[0:height, 0:width]
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


class Bar(Primitive):
    kind = ShapeKind.bar
    fields = ("orientation", "position", "start", "length", "thickness")

    def pixels(self, height, width):
        g = self.geometry
        orientation = str(g["orientation"]).lower()
        pos, start, length, thick = int(g["position"]), int(g["start"]), int(g["length"]), int(g["thickness"])
        if orientation not in ("vertical", "horizontal"):
            raise ArgumentError("bar orientation must be 'vertical' or 'horizontal', got {!r}".format(orientation))
        if not 1 <= thick <= 3:
            raise ArgumentError("bar thickness must be 1-3 pixels, got {}".format(thick))
        along, across = (height, width) if orientation == "vertical" else (width, height)
        if length < 1 or start < 0 or pos < 0 or start + length > along or pos + thick > across:
            raise self._out_of_bounds(height, width)
        cover = np.zeros((height, width), dtype=bool)
        if orientation == "vertical":
            cover[start:start + length, pos:pos + thick] = True
        else:
            cover[pos:pos + thick, start:start + length] = True
        return cover


class SceneSpec(object):
    def __init__(self, height, width, background=0, num_classes=2, shapes=(), seed=0):
        """
        :param height: canvas rows.
        :param width: canvas columns.
        :param background: class of uncovered pixels.
        :param num_classes: number of categories C.
        :param shapes: Primitive instances or their dicts; later ones overwrite earlier ones.
        :param seed: recorded with the scene; used by random_scene_spec.
        """
        self.height = int(height)
        self.width = int(width)
        if self.height < 1 or self.width < 1:
            raise ArgumentError("scene must be at least 1x1, got {}x{}".format(height, width))
        self.num_classes = int(num_classes)
        self.background = int(background)
        self.shapes = [s if isinstance(s, Primitive) else Primitive.from_dict(s) for s in shapes]
        self.seed = int(seed)
        for label in [self.background] + [s.cls for s in self.shapes]:
            if not 0 <= label < self.num_classes:
                raise ArgumentError("class {} is outside [0, {})".format(label, self.num_classes))

    def to_dict(self):
        return {"height": self.height, "width": self.width, "background": self.background,
                "num_classes": self.num_classes, "seed": self.seed,
                "shapes": [s.to_dict() for s in self.shapes]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["height"], d["width"], background=d.get("background", 0),
                   num_classes=d.get("num_classes", 2), shapes=d.get("shapes", ()), seed=d.get("seed", 0))

    def save(self, path):
        write_json(self.to_dict(), path)


def generate_scene(spec, ignore_index=255):
    """
    Rasterize a scene.
    :param spec: SceneSpec
    :return: LabelMap [height, width] with spec.num_classes classes.
    """
    labels = np.full((spec.height, spec.width), spec.background, dtype=np.int32)
    for shape in spec.shapes:
        labels[shape.pixels(spec.height, spec.width)] = shape.cls
    return LabelMap.create(labels, spec.num_classes, ignore_index=ignore_index)


def _poles_spec(seed=0):
    # 16 one-pixel vertical bars, one every 8 columns
    bars = [Bar(1, orientation="vertical", position=4 + 8 * k, start=16, length=96, thickness=1)
            for k in range(16)]
    return SceneSpec(128, 128, background=0, num_classes=2, shapes=bars, seed=seed)


def _step_spec(seed=0):
    return SceneSpec(64, 64, background=0, num_classes=2,
                     shapes=[Rect(1, top=0, left=32, height=64, width=32)], seed=seed)


def random_scene_spec(height=64, width=64, num_classes=3, num_shapes=8, seed=0):
    """
    Seeded mixture of rectangles, disks and thin bars.
    :return: SceneSpec
    """
    rs = np.random.RandomState(seed)
    shapes = []
    for _ in range(num_shapes):
        label = int(rs.randint(1, num_classes)) if num_classes > 1 else 0
        kind = rs.randint(0, 3)
        if kind == 0:
            h, w = int(rs.randint(2, max(3, height // 2))), int(rs.randint(2, max(3, width // 2)))
            shapes.append(Rect(label, top=int(rs.randint(0, height - h + 1)), left=int(rs.randint(0, width - w + 1)),
                               height=h, width=w))
        elif kind == 1:
            r = int(rs.randint(1, max(2, min(height, width) // 6)))
            shapes.append(Disk(label, cy=int(rs.randint(r, height - r)), cx=int(rs.randint(r, width - r)), radius=r))
        else:
            vertical = bool(rs.randint(0, 2))
            along, across = (height, width) if vertical else (width, height)
            thick = int(rs.randint(1, 4))
            length = int(rs.randint(1, along + 1))
            shapes.append(Bar(label, orientation="vertical" if vertical else "horizontal",
                              position=int(rs.randint(0, across - thick + 1)),
                              start=int(rs.randint(0, along - length + 1)), length=length, thickness=thick))
    return SceneSpec(height, width, background=0, num_classes=num_classes, shapes=shapes, seed=seed)


BUILTIN_SCENES = {
    "poles": _poles_spec,
    "step": _step_spec,
    "random": lambda seed=0: random_scene_spec(seed=seed),
}


def builtin_scene(name, seed=0):
    """
    :param name: 'poles', 'step' or 'random'.
    :return: SceneSpec
    """
    if name not in BUILTIN_SCENES:
        raise ArgumentError("unknown builtin scene {!r}, choose from {}".format(name, sorted(BUILTIN_SCENES)))
    return BUILTIN_SCENES[name](seed=seed)


def load_scene_spec(source, seed=0):
    """
    :param source: 'builtin:<name>' or a path to a scene JSON file.
    :return: SceneSpec
    """
    if source.startswith("builtin:"):
        return builtin_scene(source[len("builtin:"):], seed=seed)
    return SceneSpec.from_dict(read_json(source))


class TrainerConfig(object):
    def __init__(self, steps=2000, lr=0.3, lr_power=2.0, blur_radius=2, cpg=None, seed=0, log_every=200):
        """
        :param steps: number of full-batch gradient steps, >= 1.
        :param lr: per-pixel learning rate, > 0. Each step moves theta by lr * H * W times the gradient of the mean loss.
        :param lr_power: exponent of the polynomial decay lr * (1 - t / steps) ** lr_power.
        :param blur_radius: box-blur radius applied to theta, 0 disables the blur.
        :param cpg: CpgConfig of the objective; alpha = 0 trains with CE alone.
        :param seed: recorded for reproducibility; theta always starts at zero.
        :param log_every: steps between info log lines.
        """
        if int(steps) < 1:
            raise ArgumentError("steps must be >= 1, got {}".format(steps))
        if not float(lr) > 0.0 or not math.isfinite(float(lr)):
            raise ArgumentError("lr must be finite and > 0, got {}".format(lr))
        if int(blur_radius) < 0:
            raise ArgumentError("blur radius must be >= 0, got {}".format(blur_radius))
        self.steps = int(steps)
        self.lr = float(lr)
        self.lr_power = float(lr_power)
        self.blur_radius = int(blur_radius)
        self.cpg = cpg if cpg is not None else CpgConfig()
        self.seed = int(seed)
        self.log_every = max(1, int(log_every))

    def replace(self, **changes):
        d = dict(steps=self.steps, lr=self.lr, lr_power=self.lr_power, blur_radius=self.blur_radius,
                 cpg=self.cpg, seed=self.seed, log_every=self.log_every)
        d.update(changes)
        return TrainerConfig(**d)

    def to_dict(self):
        return {"steps": self.steps, "lr": self.lr, "lr_power": self.lr_power, "blur_radius": self.blur_radius,
                "seed": self.seed, "cpg": self.cpg.to_dict()}


def blur(theta, radius):
    """
    Per-channel normalized box filter with replicate padding; radius 0 is the identity.
    """
    t = np.asarray(theta)
    if radius == 0:
        return t.copy()
    k = box_kernel(radius, dtype=t.dtype)
    return np.stack([correlate_plane(t[c], k) for c in range(t.shape[0])])


def blur_adjoint(grad, radius):
    g = np.asarray(grad)
    if radius == 0:
        return g.copy()
    k = box_kernel(radius, dtype=g.dtype)
    return np.stack([correlate_plane_adjoint(g[c], k) for c in range(g.shape[0])])


def lr_at(cfg, step):
    """
    :return: polynomially decayed learning rate of step t in [0, steps).
    """
    return cfg.lr * (1.0 - step / float(cfg.steps)) ** cfg.lr_power


def train_toy(labels, cfg, dtype=np.float32):
    """
    Fit logits = blur(theta) to a label map by full-batch gradient descent on the combined loss.
    The gradient of the mean loss is scaled by the pixel count, so lr acts per pixel.
    :param labels: LabelMap
    :param cfg: TrainerConfig
    :return: (final LogitMap, history) where history holds one summary dict per step.
    """
    c = labels.num_classes
    h, w = labels.shape
    scale = float(h * w)
    theta = np.zeros((c, h, w), dtype=dtype)
    target = prepare_target(labels, cfg.cpg, dtype=dtype)
    log.info(f"train_toy: {c}x{h}x{w}, steps={cfg.steps} lr={cfg.lr} blur={cfg.blur_radius} "
             f"alpha={cfg.cpg.alpha} M={cfg.cpg.kernel_size} n_plus={target.mask.n_plus}")

    history = []
    for step in range(cfg.steps):
        logits = TypedMap(blur(theta, cfg.blur_radius), MapType.Logits, dtype=dtype)
        report = combined_loss(logits, labels, cfg.cpg, target=target)
        if not math.isfinite(report.combined):
            raise TrainingError("loss became non-finite at step {}".format(step), step=step)
        lr = lr_at(cfg, step)
        entry = {"step": step, "lr": lr}
        entry.update(report.summary())
        history.append(entry)
        log.debugv(f"step {step}: {entry}")
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.info(f"step {step:5d} lr={lr:.4g} ce={report.ce:.6g} cpg={report.cpg:.6g} "
                     f"combined={report.combined:.6g}")

        grad_theta = blur_adjoint(np.asarray(report.grad_logits), cfg.blur_radius)
        theta = (theta - (lr * scale) * grad_theta).astype(dtype)
        if not np.all(np.isfinite(theta)):
            raise TrainingError("parameters became non-finite at step {}".format(step), step=step)

    final = TypedMap(blur(theta, cfg.blur_radius), MapType.Logits, dtype=dtype)
    return final, history


def evaluate_run(logits, labels, cfg=None):
    """
    :return: dict with mIoU, per-class IoU, boundary sharpness and, when cfg is given, the final losses.
    """
    pred = softmax(logits)
    per_class, mean = miou(argmax_labels(pred, ignore_index=labels.ignore_index), labels)
    result = {"miou": mean, "per_class": per_class.tolist(), "sharpness": boundary_sharpness(pred, labels)}
    if cfg is not None:
        result.update(combined_loss(logits, labels, cfg.cpg).summary())
    return result


def sweep(labels, base, alphas, kernel_sizes):
    """
    Train once per (kernel size, alpha) pair.
    :param labels: LabelMap
    :param base: TrainerConfig supplying every other setting.
    :param alphas: CPG weights to try.
    :param kernel_sizes: odd kernel sizes to try.
    :return: list of result dicts in (kernel size, alpha) order.
    """
    rows = []
    for m in kernel_sizes:
        for alpha in alphas:
            cfg = base.replace(cpg=base.cpg.replace(kernel_size=m, alpha=alpha))
            logits, _ = train_toy(labels, cfg)
            row = {"kernel_size": m, "alpha": float(alpha)}
            row.update(evaluate_run(logits, labels, cfg))
            rows.append(row)
            log.info(f"sweep M={m} alpha={alpha}: miou={row['miou']:.4f} sharpness={row['sharpness']:.4f}")
    return rows
