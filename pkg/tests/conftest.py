import numpy as np
import pytest

from sizebiased import (
    AugmentedModel,
    BugRecord,
    DetectionHistory,
    ParameterDraw,
    PhasePlan,
    Priors,
)


def make_model(records, inputs, M):
    plan = PhasePlan(inputs_per_phase=tuple(inputs))
    history = DetectionHistory(records=tuple(records), plan=plan)
    return AugmentedModel(M=M, history=history)


def make_draw(model, rate, psi, sizes, included=None, size_means=None):
    m = model.M
    if included is None:
        included = np.ones(m, dtype=bool)
    if size_means is None:
        size_means = np.ones(m, dtype=float)
    return ParameterDraw(
        detect_rate=rate,
        inclusion_prob=psi,
        included=np.asarray(included, dtype=bool),
        sizes=np.asarray(sizes, dtype=np.int64),
        size_means=np.asarray(size_means, dtype=float),
    )


@pytest.fixture
def tiny_model():
    """One bug detected in phase 1 (count 1 of 3 inputs) plus one augmented row."""
    return make_model([BugRecord("b1", 1, 1)], inputs=(3,), M=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
