import time
import numpy as np
import pytest

from cpgloss import CpgConfig, TrainingError, ArgumentError, LabelMap, one_hot, softmax, cpg_forward
from cpgloss.synthlab import (SceneSpec, Primitive, Rect, Disk, Bar, generate_scene, builtin_scene,
                              random_scene_spec, load_scene_spec, TrainerConfig, blur, blur_adjoint, lr_at,
                              train_toy, evaluate_run, sweep)


def test_poles_scene():
    labels = generate_scene(builtin_scene("poles"))
    lab = np.asarray(labels)
    assert lab.shape == (128, 128) and labels.num_classes == 2
    assert int(lab.sum()) == 16 * 96
    cols = np.flatnonzero(lab.any(axis=0))
    assert cols.tolist() == [4 + 8 * k for k in range(16)]
    assert np.flatnonzero(lab[:, 4]).tolist() == list(range(16, 112))


def test_step_scene():
    lab = np.asarray(generate_scene(load_scene_spec("builtin:step")))
    assert lab.shape == (64, 64)
    assert not np.any(lab[:, :32]) and np.all(lab[:, 32:] == 1)


def test_random_scene_is_seeded():
    a = np.asarray(generate_scene(builtin_scene("random", seed=3)))
    b = np.asarray(generate_scene(builtin_scene("random", seed=3)))
    assert np.array_equal(a, b)
    assert a.max() < 3


def test_scene_json_round_trip(tmp_path):
    spec = SceneSpec(12, 10, background=0, num_classes=3, seed=5,
                     shapes=[Rect(1, top=1, left=2, height=4, width=5), Disk(2, cy=7, cx=5, radius=2),
                             Bar(1, orientation="horizontal", position=10, start=0, length=10, thickness=2)])
    path = str(tmp_path / "scene.json")
    spec.save(path)
    loaded = load_scene_spec(path)
    assert loaded.to_dict() == spec.to_dict()
    assert np.array_equal(generate_scene(loaded), generate_scene(spec))


def test_later_shapes_overwrite_earlier_ones():
    spec = SceneSpec(4, 4, num_classes=3, shapes=[{"kind": "rect", "class": 1, "top": 0, "left": 0, "height": 4,
                                                   "width": 4},
                                                  {"kind": "rect", "class": 2, "top": 1, "left": 1, "height": 2,
                                                   "width": 2}])
    lab = np.asarray(generate_scene(spec))
    assert lab[0, 0] == 1 and lab[1, 1] == 2 and lab[2, 2] == 2


@pytest.mark.parametrize("shape", [
    Rect(1, top=3, left=0, height=4, width=2),
    Disk(1, cy=1, cx=4, radius=2),
    Bar(1, orientation="vertical", position=7, start=0, length=2, thickness=2),
    Bar(1, orientation="vertical", position=0, start=0, length=2, thickness=4),
    Bar(1, orientation="diagonal", position=0, start=0, length=2, thickness=1),
])
def test_bad_primitives(shape):
    with pytest.raises(ArgumentError):
        generate_scene(SceneSpec(6, 8, shapes=[shape]))


def test_bad_scene_definitions():
    with pytest.raises(ArgumentError):
        Primitive.from_dict({"kind": "triangle", "class": 1})
    with pytest.raises(ArgumentError):
        Primitive.from_dict({"kind": "rect", "class": 1, "top": 0})
    with pytest.raises(ArgumentError):
        SceneSpec(4, 4, num_classes=2, shapes=[Rect(2, top=0, left=0, height=1, width=1)])
    with pytest.raises(ArgumentError):
        builtin_scene("zebra")


def test_blur_adjoint(rs):
    theta = rs.normal(size=(2, 7, 9))
    g = rs.normal(size=(2, 7, 9))
    for radius in (0, 1, 3):
        assert np.isclose(np.sum(blur(theta, radius) * g), np.sum(theta * blur_adjoint(g, radius)))
    assert np.array_equal(blur(theta, 0), theta)
    assert np.allclose(blur(np.full((1, 5, 5), 2.0), 2), 2.0)


def test_polynomial_decay():
    cfg = TrainerConfig(steps=10, lr=0.4, lr_power=2.0)
    assert lr_at(cfg, 0) == 0.4
    assert lr_at(cfg, 5) == pytest.approx(0.1)
    lrs = [lr_at(cfg, t) for t in range(10)]
    assert all(a > b for a, b in zip(lrs, lrs[1:])) and lrs[-1] > 0


def test_trainer_config_validation():
    with pytest.raises(ArgumentError):
        TrainerConfig(steps=0)
    with pytest.raises(ArgumentError):
        TrainerConfig(lr=0.0)
    with pytest.raises(ArgumentError):
        TrainerConfig(blur_radius=-1)
    cfg = TrainerConfig(steps=5).replace(lr=0.1)
    assert cfg.steps == 5 and cfg.lr == 0.1


def test_unblurred_ce_fits_every_pixel():
    labels = generate_scene(random_scene_spec(16, 16, num_classes=3, seed=11))
    cfg = TrainerConfig(steps=500, lr=0.5, blur_radius=0, cpg=CpgConfig(alpha=0.0))
    logits, history = train_toy(labels, cfg)
    assert len(history) == 500
    assert set(history[0]) == {"step", "lr", "ce", "cpg", "combined", "n_plus"}
    assert history[-1]["ce"] < 0.05
    assert all(np.isfinite(h["combined"]) for h in history)
    metrics = evaluate_run(logits, labels)
    assert metrics["miou"] == 1.0


def test_training_is_stable_on_default_scene_settings():
    labels = generate_scene(builtin_scene("step"))
    cfg = TrainerConfig(steps=30, lr=0.5, blur_radius=2, cpg=CpgConfig(alpha=1.0))
    _, history = train_toy(labels, cfg)
    assert len(history) == 30
    assert all(np.isfinite(h["combined"]) for h in history)
    assert history[-1]["combined"] < history[0]["combined"]


def test_training_is_deterministic():
    labels = generate_scene(builtin_scene("step"))
    cfg = TrainerConfig(steps=15, lr=0.3, blur_radius=1, cpg=CpgConfig(kernel_size=5, alpha=1.0))
    logits_a, history_a = train_toy(labels, cfg)
    logits_b, history_b = train_toy(labels, cfg)
    assert history_a == history_b
    assert np.asarray(logits_a).tobytes() == np.asarray(logits_b).tobytes()


def test_divergence_raises_training_error():
    labels = generate_scene(builtin_scene("step"))
    with pytest.raises(TrainingError) as err:
        train_toy(labels, TrainerConfig(steps=3, lr=1e308, blur_radius=0))
    assert err.value.step == 0


def test_sweep_order_and_fields():
    labels = LabelMap.create(np.repeat(np.array([[0] * 6 + [1] * 6]), 8, axis=0), 2)
    rows = sweep(labels, TrainerConfig(steps=3, blur_radius=1), [0.0, 1.0], [3, 5])
    assert [(r["kernel_size"], r["alpha"]) for r in rows] == [(3, 0.0), (3, 1.0), (5, 0.0), (5, 1.0)]
    for r in rows:
        assert {"miou", "sharpness", "ce", "cpg", "combined", "n_plus"} <= set(r)
    assert rows[0]["n_plus"] < rows[2]["n_plus"]


@pytest.mark.slow
@pytest.mark.parametrize("lr", [0.1, 0.3, 0.5])
def test_cpg_sharpens_poles(lr):
    labels = generate_scene(builtin_scene("poles"))
    base = TrainerConfig(steps=2000, lr=lr, blur_radius=2, cpg=CpgConfig(kernel_size=3, alpha=0.0))
    ce_only = evaluate_run(train_toy(labels, base)[0], labels)
    with_cpg = evaluate_run(train_toy(labels, base.replace(cpg=base.cpg.replace(alpha=1.0)))[0], labels)
    assert with_cpg["sharpness"] >= ce_only["sharpness"] + 0.05
    assert with_cpg["miou"] >= ce_only["miou"]


@pytest.mark.slow
def test_without_blur_cpg_adds_no_sharpness():
    labels = generate_scene(builtin_scene("poles"))
    base = TrainerConfig(steps=300, lr=0.3, blur_radius=0, cpg=CpgConfig(kernel_size=3, alpha=0.0))
    ce_only = evaluate_run(train_toy(labels, base)[0], labels)
    with_cpg = evaluate_run(train_toy(labels, base.replace(cpg=base.cpg.replace(alpha=1.0)))[0], labels)
    # well under the margin the blurred runs must clear
    assert abs(with_cpg["sharpness"] - ce_only["sharpness"]) < 0.05


@pytest.mark.slow
def test_cost_grows_with_kernel_size():
    rs = np.random.RandomState(0)
    labels = LabelMap.create(rs.randint(0, 19, size=(512, 512)), 19)
    pred = softmax(rs.normal(size=(19, 512, 512)).astype(np.float32))
    gt = one_hot(labels)
    medians = []
    for size in (3, 5, 7):
        cfg = CpgConfig(kernel_size=size)
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            cpg_forward(gt, pred, cfg)
            times.append(time.perf_counter() - t0)
        medians.append(float(np.median(times)))
    assert medians[0] < medians[1] < medians[2]
