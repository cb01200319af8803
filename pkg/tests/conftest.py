import numpy as np
import pytest

from demandgraph.config import PipelineConfig
from demandgraph.fixtures import make_fixture
from demandgraph.pipeline import preprocess, run_qa


@pytest.fixture(scope="session")
def raw_fixture():
    return make_fixture()


@pytest.fixture(scope="session")
def default_config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def qa_result(default_config):
    return run_qa(default_config)


@pytest.fixture(scope="session")
def windowed(default_config, qa_result):
    return preprocess(default_config, qa_result)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one summary line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
