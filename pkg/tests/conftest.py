import numpy as np
import pytest

from xcg.cellgraph.graph import CellGraph
from xcg.gnn.models import ClassificationConfig, ClassificationModel, RegressionConfig, RegressionModel
from xcg.gnn.sparse import SparseMatrix


def random_adjacency(n: int, rng, p_edge: float = 0.35) -> SparseMatrix:
    upper = np.triu(rng.random((n, n)) < p_edge, 1)
    dense = (upper | upper.T).astype(float)
    return SparseMatrix.from_dense(dense)


def make_graph(n: int, n_phenotypes: int, rng, p_edge: float = 0.35, graph_id: str = "g",
               side: float = 0.2) -> CellGraph:
    """Random cell graph with arbitrary (not KNN) symmetric adjacency."""
    return CellGraph(graph_id=graph_id, cell_ids=np.arange(n), xy=rng.uniform(0, side, size=(n, 2)),
                     phenotypes=rng.integers(0, n_phenotypes, size=n), n_phenotypes=n_phenotypes,
                     adjacency=random_adjacency(n, rng, p_edge), k=0)


def classifier(n_features: int, hidden: int, seed: int, zero_bias: bool = True,
               n_layers: int = 3) -> ClassificationModel:
    model = ClassificationModel.init(ClassificationConfig(n_features, hidden=hidden, n_layers=n_layers), seed)
    rng = np.random.default_rng(seed + 1000)
    for name, v in model.params.items():
        if name.endswith(("b1", "b2")) or name == "out.b":
            v[...] = 0.0 if zero_bias else rng.normal(0, 0.1, v.shape)
    return model


def regressor(n_features: int, hidden: int, seed: int, **kw) -> RegressionModel:
    model = RegressionModel.init(RegressionConfig(n_features, hidden=hidden, embed_dim=hidden, **kw), seed)
    rng = np.random.default_rng(seed + 2000)
    for name, v in model.params.items():
        if name.endswith(("b1", "b2", ".b")):
            v[...] = rng.normal(0, 0.1, v.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Record and print one PASS/FAIL line, then assert."""
    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
