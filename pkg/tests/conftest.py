import sys

import pytest

from dartsprime.data import DatasetSpec, generate_dataset
from dartsprime.fimt import SchedulerConfig
from dartsprime.search import SearchConfig
from dartsprime.search_space import SearchSpaceConfig


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(DatasetSpec(size=220, test_size=100, seed=7))


def tiny_search_config(**kw) -> SearchConfig:
    """Small search that runs in well under a second."""
    kw.setdefault("space", SearchSpaceConfig(num_states=2, width=3))
    kw.setdefault("scheduler", SchedulerConfig())
    kw.setdefault("epochs", 2)
    kw.setdefault("batch_size", 16)
    return SearchConfig(**kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in mod.CRITERIA.items():
        verdict, detail = mod.RESULTS.get(n, ("NOT RUN", ""))
        terminalreporter.write_line(f"[{verdict}] {n:2d}. {name}: {detail}")
