import numpy as np
import pytest

from unbiaspuf.experiment import ExperimentConfig
from unbiaspuf.popmodel import PopulationConfig, desk_profile, generate_population, measure

DESK_SEED = 2024


@pytest.fixture(scope="session")
def desk_config():
    return desk_profile(seed=DESK_SEED)


@pytest.fixture(scope="session")
def desk_population(desk_config):
    return generate_population(desk_config)


@pytest.fixture(scope="session")
def desk_tensor(desk_population):
    return measure(desk_population)


@pytest.fixture
def small_config():
    return PopulationConfig(num_chips=4, num_challenges=6, num_repeats=5, seed=7)


@pytest.fixture
def small_experiment(tmp_path):
    pop = PopulationConfig(num_chips=5, num_challenges=12, num_repeats=4, seed=11)
    return ExperimentConfig(population=pop, output_dir=str(tmp_path / "out"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
