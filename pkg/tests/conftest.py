import numpy as np
import pytest

from bikeobs import datagen


@pytest.fixture(scope="session")
def small_train():
    return datagen.generate_training_set(datagen.TrainingSetConfig(n_trajectories=4, duration=8.0))


@pytest.fixture(scope="session")
def val_split():
    return datagen.generate_validation_set()


@pytest.fixture(scope="session")
def test_split():
    return datagen.generate_test_sets()


@pytest.fixture(scope="session")
def small_test():
    cfg = datagen.TestSetConfig(n_trajectories=3, total_points=900, alpha_levels=(0.0, 1.0, 6.0))
    return datagen.generate_test_sets(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# (criterion, passed, detail) lines recorded by test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
