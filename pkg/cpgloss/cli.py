"""
Command-line entry point.

    cpgloss kernel --size 3
    cpgloss prob --labels l.cpgt --classes 19 --out gt.cpgt
    cpgloss grad --labels l.cpgt --classes 19 --kernel 5 --pgm-magnitude out/
    cpgloss boundary --labels l.cpgt --classes 19 --kernel 5
    cpgloss loss --labels l.cpgt --logits z.cpgt --classes 19 --kernel 3 --alpha 1 --json
    cpgloss eval --pred p.cpgt --labels l.cpgt --json
    cpgloss transect --pred p.cpgt --labels l.cpgt --class 1 --row 78
    cpgloss train-toy --scene builtin:poles --steps 2000 --alpha 1 --kernel 3 --blur 2 --out-dir run/
    cpgloss sweep --scene builtin:poles --alphas 0,1,2 --kernels 3,5,7 --out sweep.csv

Exit status: 0 success, 2 usage error, 1 data / shape / I/O error.
"""
import os
import sys
import logging
import argparse
import numpy as np
import pandas as pd

from . import __version__
from .maptype import CpgError, ArgumentError, LabelMap, LogitMap, TypedMap, MapType
from .tensorio import load_tensor, tensor_write, save_tensor, export_pgm
from .kernels import generate_kernel, validate_kernel_size
from .probmaps import CeVariant, one_hot, softmax
from .gradfield import MaskCollapse, correlate, extract_boundary, magnitude_direction, magnitude_pgms
from .cpg import CpgConfig, GtTarget, combined_loss, prepare_target
from .metrics import ConfusionMatrix, argmax_labels, miou, transect, boundary_sharpness
from .synthlab import (TrainerConfig, load_scene_spec, generate_scene, train_toy, evaluate_run, sweep)
from .helpers import open_sink, dumps_json, write_json, serialise_object, deserialise_object
from .logger_utils import setuplogs, set_level

log = setuplogs(level='INFO')

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


class UsageError(Exception): pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError("{}: error: {}".format(self.prog, message))


def _kernel_size(text):
    try:
        return validate_kernel_size(int(text))
    except (ValueError, ArgumentError):
        raise argparse.ArgumentTypeError("kernel size must be an odd integer >= 3, got {!r}".format(text))


def _non_negative_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number, got {!r}".format(text))
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError("expected a finite number >= 0, got {!r}".format(text))
    return v


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(t) for t in text.split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise argparse.ArgumentTypeError(str(e))
    return parse


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a single JSON document")
    common.add_argument("--threads", type=int, default=1, help="channel-level worker threads")
    common.add_argument("--seed", type=int, default=0, help="seed for generated scenes")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging on stderr")
    return common


def _label_flags(p, required_classes=True):
    p.add_argument("--labels", required=True, help="[H, W] i32 label tensor (.cpgt)")
    p.add_argument("--classes", type=int, required=required_classes, help="number of classes C")
    p.add_argument("--ignore-index", type=int, default=255)


def _loss_flags(p):
    p.add_argument("--kernel", type=_kernel_size, default=3, help="odd kernel size M")
    p.add_argument("--collapse", choices=[m.name for m in MaskCollapse], default=MaskCollapse.per_direction.name)
    p.add_argument("--normalization", choices=["global", "per_category"], default="global")


def build_parser():
    common = _common_flags()
    parser = _Parser(prog="cpgloss", description="Convolution-based probability gradient loss tools")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("kernel", parents=[common], help="print the differentiation kernel")
    p.add_argument("--size", type=_kernel_size, required=True)
    p.add_argument("--out", help="also write kx as .cpgt")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("prob", parents=[common], help="one-hot GT map or softmax map")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--labels", help="[H, W] i32 label tensor")
    src.add_argument("--logits", help="[C, H, W] f32 logit tensor")
    p.add_argument("--classes", type=int)
    p.add_argument("--ignore-index", type=int, default=255)
    p.add_argument("--out", help="output .cpgt (default: stdout)")
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("grad", parents=[common], help="ground-truth probability gradient field")
    _label_flags(p)
    _loss_flags(p)
    p.add_argument("--out", help="[C, 2, H, W] field .cpgt")
    p.add_argument("--pgm-magnitude", help="directory for per-class magnitude PGMs")
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("boundary", parents=[common], help="boundary mask and counts")
    _label_flags(p)
    _loss_flags(p)
    p.add_argument("--out", help="[C, 2, H, W] mask .cpgt")
    p.add_argument("--save-target", help="pickle the precomputed ground-truth target")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("loss", parents=[common], help="CE, CPG and combined loss")
    _label_flags(p)
    _loss_flags(p)
    p.add_argument("--logits", required=True)
    p.add_argument("--alpha", type=_non_negative_float, default=1.0)
    p.add_argument("--ce", choices=["softmax", "bce"], default="softmax")
    p.add_argument("--target", help="ground-truth target pickled by 'boundary --save-target' (unpickled, "
                                     "so only load files you trust; must match --labels)")
    p.add_argument("--grad-out", help="write dL/dlogits as .cpgt")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", parents=[common], help="mIoU and boundary sharpness")
    p.add_argument("--pred", required=True, help="[C, H, W] probability tensor")
    _label_flags(p, required_classes=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transect", parents=[common], help="probability trace along a row or column (CSV)")
    p.add_argument("--pred", required=True)
    _label_flags(p, required_classes=False)
    p.add_argument("--class", dest="cls", type=int, required=True)
    line = p.add_mutually_exclusive_group(required=True)
    line.add_argument("--row", type=int)
    line.add_argument("--column", type=int)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_transect)

    for name, func in (("train-toy", cmd_train_toy), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--scene", default="builtin:poles", help="builtin:poles|builtin:step|builtin:random|spec.json")
        p.add_argument("--steps", type=int, default=2000)
        p.add_argument("--lr", type=float, default=0.3,
                       help="per-pixel learning rate: the step is lr * H * W times the mean-loss gradient")
        p.add_argument("--lr-power", type=float, default=2.0)
        p.add_argument("--blur", type=int, default=2)
        p.add_argument("--ce", choices=["softmax", "bce"], default="softmax")
        p.add_argument("--collapse", choices=[m.name for m in MaskCollapse], default=MaskCollapse.per_direction.name)
        p.add_argument("--normalization", choices=["global", "per_category"], default="global")
        if name == "train-toy":
            p.add_argument("--alpha", type=_non_negative_float, default=1.0)
            p.add_argument("--kernel", type=_kernel_size, default=3)
            p.add_argument("--out-dir", required=True)
        else:
            p.add_argument("--alphas", type=_csv_list(_non_negative_float), default=[0.0, 1.0])
            p.add_argument("--kernels", type=_csv_list(_kernel_size), default=[3, 5, 7])
            p.add_argument("--out", help="CSV path (default: stdout)")
        p.set_defaults(func=func)

    return parser


# ---------------------------------------------------------------------------------------
# I/O helpers

def _read_labels(path, num_classes, ignore_index):
    raw = load_tensor(path)
    if num_classes is None:
        valid = raw[raw != ignore_index]
        num_classes = int(valid.max()) + 1 if valid.size else 1
    return LabelMap.create(raw, num_classes, ignore_index=ignore_index)


def _read_logits(path):
    return LogitMap.create(load_tensor(path))


def _cpg_config(args, alpha=0.0, kernel=None, ce="softmax"):
    return CpgConfig(kernel_size=kernel if kernel is not None else args.kernel, alpha=alpha,
                     ce_variant=CeVariant.parse(ce), mask_collapse=args.collapse,
                     normalization=args.normalization, threads=args.threads)


def _emit(args, payload, text_lines):
    if args.json:
        sys.stdout.write(dumps_json(payload) + "\n")
    else:
        sys.stdout.write("\n".join(text_lines) + "\n")
    sys.stdout.flush()


def _fmt(v):
    return "{:.9g}".format(v)


# ---------------------------------------------------------------------------------------
# subcommands

def cmd_kernel(args):
    k = generate_kernel(args.size)
    if args.out:
        save_tensor(k.kx, args.out)
    rows = [" ".join(_fmt(float(v)) for v in row) for row in k.kx]
    _emit(args, {"size": k.size, "kx": k.kx, "ky": k.ky}, rows)
    return EXIT_OK


def cmd_prob(args):
    if args.labels:
        if args.classes is None:
            raise UsageError("prob --labels requires --classes")
        out = one_hot(_read_labels(args.labels, args.classes, args.ignore_index))
    else:
        out = softmax(_read_logits(args.logits))
    with open_sink(args.out) as f:
        tensor_write(out, f)
    if args.out:
        _emit(args, {"kind": out.map_type.name, "shape": list(out.shape), "out": args.out},
              ["{} map {} -> {}".format(out.map_type.name, tuple(out.shape), args.out)])
    return EXIT_OK


def cmd_grad(args):
    labels = _read_labels(args.labels, args.classes, args.ignore_index)
    cfg = _cpg_config(args)
    field = correlate(one_hot(labels), cfg.kernel, threads=cfg.threads)
    mask = extract_boundary(field, cfg.mask_collapse)
    if args.out:
        save_tensor(field, args.out)
    if args.pgm_magnitude:
        magnitude_pgms(field, args.pgm_magnitude)
    mag, _ = magnitude_direction(field)
    max_mag = [float(mag[c].max()) for c in range(mag.shape[0])]
    _emit(args, {"shape": list(field.shape), "kernel": cfg.kernel_size, "n_plus": mask.n_plus,
                 "max_magnitude": max_mag},
          ["shape: {}".format(tuple(field.shape)), "n_plus: {}".format(mask.n_plus),
           "max_magnitude: {}".format(" ".join(_fmt(v) for v in max_mag))])
    return EXIT_OK


def cmd_boundary(args):
    labels = _read_labels(args.labels, args.classes, args.ignore_index)
    cfg = _cpg_config(args)
    target = prepare_target(labels, cfg)
    if args.out:
        save_tensor(target.mask.mask.astype(np.int32), args.out)
    if args.save_target:
        serialise_object(target, args.save_target)
    counts = target.mask.per_class_counts.tolist()
    _emit(args, {"n_plus": target.mask.n_plus, "per_class": counts, "kernel": cfg.kernel_size,
                 "collapse": cfg.mask_collapse.name},
          ["n_plus: {}".format(target.mask.n_plus), "per_class: {}".format(" ".join(str(n) for n in counts))])
    return EXIT_OK


def cmd_loss(args):
    labels = _read_labels(args.labels, args.classes, args.ignore_index)
    logits = _read_logits(args.logits)
    cfg = _cpg_config(args, alpha=args.alpha, ce=args.ce)
    target = None
    if args.target:
        target = deserialise_object(args.target)
        if not isinstance(target, GtTarget):
            raise CpgError("{} does not hold a ground-truth target".format(args.target))
    report = combined_loss(logits, labels, cfg, target=target)
    if args.grad_out:
        save_tensor(report.grad_logits, args.grad_out)
    d = report.to_dict()
    d["kernel"] = cfg.kernel_size
    d["ce_variant"] = cfg.ce_variant.name
    _emit(args, d, ["ce: " + _fmt(report.ce), "cpg: " + _fmt(report.cpg),
                    "combined: " + _fmt(report.combined), "n_plus: {}".format(report.n_plus)])
    return EXIT_OK


def cmd_eval(args):
    pred = TypedMap(load_tensor(args.pred), MapType.Predicted)
    labels = _read_labels(args.labels, args.classes if args.classes else pred.shape[0], args.ignore_index)
    pred_labels = argmax_labels(pred, labels.ignore_index)
    per_class, mean = miou(pred_labels, labels)
    accuracy = ConfusionMatrix(labels.num_classes).add_batch(pred_labels, labels).pixel_accuracy()
    sharp = boundary_sharpness(pred, labels)
    _emit(args, {"miou": mean, "per_class": per_class, "pixel_accuracy": accuracy, "sharpness": sharp},
          ["miou: " + _fmt(mean), "per_class: " + " ".join(_fmt(v) for v in per_class),
           "pixel_accuracy: " + _fmt(accuracy), "sharpness: " + _fmt(sharp)])
    return EXIT_OK


def cmd_transect(args):
    pred = TypedMap(load_tensor(args.pred), MapType.Predicted)
    labels = _read_labels(args.labels, args.classes if args.classes else pred.shape[0], args.ignore_index)
    axis, index = ("row", args.row) if args.row is not None else ("column", args.column)
    t = transect(pred, one_hot(labels), args.cls, axis, index)
    with open_sink(args.out, "w") as f:
        t.to_frame().to_csv(f, index=False, lineterminator="\n")
    return EXIT_OK


def _trainer_config(args, alpha, kernel):
    return TrainerConfig(steps=args.steps, lr=args.lr, lr_power=args.lr_power, blur_radius=args.blur,
                         cpg=_cpg_config(args, alpha=alpha, kernel=kernel, ce=args.ce), seed=args.seed)


def cmd_train_toy(args):
    spec = load_scene_spec(args.scene, seed=args.seed)
    labels = generate_scene(spec)
    cfg = _trainer_config(args, args.alpha, args.kernel)
    logits, history = train_toy(labels, cfg)

    os.makedirs(args.out_dir, exist_ok=True)
    pd.DataFrame(history, columns=["step", "lr", "ce", "cpg", "combined", "n_plus"]).to_csv(
        os.path.join(args.out_dir, "history.csv"), index=False, lineterminator="\n")
    save_tensor(logits, os.path.join(args.out_dir, "logits.cpgt"))
    save_tensor(np.asarray(labels), os.path.join(args.out_dir, "labels.cpgt"))
    pred = softmax(logits)
    for c in range(pred.shape[0]):
        with open(os.path.join(args.out_dir, "prob_c{:02d}.pgm".format(c)), "wb") as f:
            export_pgm(pred[c], 0.0, 1.0, f)
    spec.save(os.path.join(args.out_dir, "scene.json"))

    metrics = evaluate_run(logits, labels, cfg)
    metrics["config"] = cfg.to_dict()
    metrics["config"]["cpg"].pop("threads")  # output must not depend on --threads
    write_json(metrics, os.path.join(args.out_dir, "metrics.json"))
    _emit(args, metrics, ["miou: " + _fmt(metrics["miou"]), "sharpness: " + _fmt(metrics["sharpness"]),
                          "ce: " + _fmt(metrics["ce"]), "cpg: " + _fmt(metrics["cpg"])])
    return EXIT_OK


def cmd_sweep(args):
    labels = generate_scene(load_scene_spec(args.scene, seed=args.seed))
    rows = sweep(labels, _trainer_config(args, 0.0, 3), args.alphas, args.kernels)
    frame = pd.DataFrame(rows, columns=["kernel_size", "alpha", "miou", "sharpness", "ce", "cpg", "combined", "n_plus"])
    with open_sink(args.out, "w") as f:
        frame.to_csv(f, index=False, lineterminator="\n")
    return EXIT_OK


# ---------------------------------------------------------------------------------------

def dispatch(argv):
    """
    Parse argv and run one subcommand.
    :param argv: argument list without the program name.
    :return: process exit status.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e) + "\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help / --version
        return e.code if isinstance(e.code, int) else EXIT_OK

    if args.verbose:
        set_level(logging.DEBUG)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ArgumentError) as e:
        log.error(str(e))
        return EXIT_USAGE
    except (CpgError, OSError) as e:
        log.error(str(e))
        return EXIT_DATA


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
