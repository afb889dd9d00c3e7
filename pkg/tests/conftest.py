import warnings
from pathlib import Path

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

DATA = Path(__file__).parent / "data"
MNIST_IMAGES = DATA / "mnist-sample-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist-sample-labels-idx1-ubyte.gz"


@pytest.fixture(scope="session")
def mnist():
    from sparse_dbm.data import binarize, load_idx
    return binarize(load_idx(MNIST_IMAGES, MNIST_LABELS))


def two_spin(J=1.0, h=(0.0, 0.0), **kw):
    from sparse_dbm.graph import SparseGraph
    from sparse_dbm.model import Model
    return Model.create(SparseGraph.from_edges(2, [(0, 1)]), [J], list(h), **kw)


def random_model(n, seed, p=0.5, max_degree=6, jmax=2.0, hmax=1.0):
    from sparse_dbm.graph import random_sparse_graph
    from sparse_dbm.model import Model
    rng = np.random.default_rng(seed)
    g = random_sparse_graph(n, max_degree, p, rng)
    return Model.create(g, rng.uniform(-jmax, jmax, g.edge_count), rng.uniform(-hmax, hmax, n))


# --------------------------------------------------------------------------- acceptance reporting

_CRITERIA: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


@pytest.fixture
def report():
    """``report(k, ok, detail)`` prints and records one line for criterion ``k``."""
    def _report(k, ok, detail):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA[k] = line
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
