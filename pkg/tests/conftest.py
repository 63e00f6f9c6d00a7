import numpy as np
import pytest

from rctcbir.features import FeatureVector, LabeledIndex
from rctcbir.ingest import generate_synthetic_dataset
from rctcbir.transform import RctPlusConfig


def ggd_samples(alpha, beta, n, seed):
    """Independent GGD sampler: x = s * alpha * G**(1/beta), G ~ Gamma(1/beta, 1)."""
    rng = np.random.default_rng(seed)
    g = rng.gamma(1.0 / beta, 1.0, size=n)
    s = rng.choice([-1.0, 1.0], size=n)
    return s * alpha * g ** (1.0 / beta)


TINY = RctPlusConfig(1, (2,), 1.0, True)  # 3 subbands -> 6 values


def make_index(rows, method="E", config=TINY):
    """Index from (id, label, values) rows."""
    layout = config.layout()
    return LabeledIndex(method, config, [(i, lab, FeatureVector(method, layout, np.asarray(v, float)))
                                         for i, lab, v in rows])


def fv(values, method="E", config=TINY):
    return FeatureVector(method, config.layout(), np.asarray(values, float))


@pytest.fixture(scope="session")
def synthetic_8x16():
    return generate_synthetic_dataset(8, 16, 128, seed=7)


@pytest.fixture(scope="session")
def synthetic_ggd1_index(synthetic_8x16):
    from rctcbir.features import build_index
    return build_index(synthetic_8x16, "GGD1")


# acceptance lines are collected here and repeated in the terminal summary,
# since pytest captures stdout of passing tests
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
