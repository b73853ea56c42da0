import os
import numpy as np
import pytest
from hypothesis import settings, HealthCheck

from cpgloss import LabelMap, TypedMap, MapType

settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def step_labels(height=4, width=4, edge=None, num_classes=2):
    """ class 0 left of the edge column, class 1 from it onwards """
    edge = width // 2 if edge is None else edge
    lab = np.zeros((height, width), dtype=np.int32)
    lab[:, edge:] = 1
    return LabelMap.create(lab, num_classes)


def random_instance(rs, num_classes, height, width, ignore_fraction=0.0, dtype=np.float64):
    """ random labels (optionally with ignored pixels) and normal logits """
    lab = rs.randint(0, num_classes, size=(height, width)).astype(np.int32)
    if ignore_fraction:
        lab[rs.uniform(size=lab.shape) < ignore_fraction] = 255
    labels = LabelMap.create(lab, num_classes)
    logits = TypedMap(rs.normal(size=(num_classes, height, width)), MapType.Logits, dtype=dtype)
    return labels, logits


@pytest.fixture
def step4():
    return step_labels()


@pytest.fixture
def rs():
    return np.random.RandomState(1234)
