import numpy as np
import pytest

from vecsearch.dataset import compute_groundtruth
from vecsearch.graph import knn_graph_build
from vecsearch.synthetic import base_and_queries

# siftsmall-scale stand-in: 10k base vectors, 16-dim, 256 overlapping clusters
SMALL_SEED = 0
SMALL_N = 10_000
SMALL_DIM = 16


@pytest.fixture(scope="session")
def small_instance():
    base, queries = base_and_queries(SMALL_N, 100, SMALL_DIM, seed=SMALL_SEED)
    truth = compute_groundtruth(base, queries, 10)
    return base, queries, truth


@pytest.fixture(scope="session")
def small_graph(small_instance):
    return knn_graph_build(small_instance[0], 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -----------------------------------------------------

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.fixture
def measure(request):
    """Collects the measured values an acceptance test reports next to its verdict."""
    notes: list[str] = []
    request.node._measured = notes
    return notes.append


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    verdict = "PASS" if call.excinfo is None else "FAIL"
    _CRITERIA.append((marker.args[0], verdict, "; ".join(getattr(item, "_measured", []))))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, verdict, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"{verdict}  {label}" + (f"  [{detail}]" if detail else ""))
