"""Runtime comparison of the naive walk enumeration against the sparse engines."""

from __future__ import annotations

import logging
import time
from typing import Sequence

import numpy as np
import pandas as pd

from .cellgraph.graph import build_knn_graph
from .cellgraph.synth import synth_generate
from .gnn.models import ClassificationConfig, ClassificationModel
from .gridattr import GridSpec, grid_attribution
from .lrp import LrpConfig, forward_cache, naive_node_relevance, subgraph_relevance

log = logging.getLogger(__name__)

METHODS = ("naive", "masked", "grid")
COLUMNS = ["method", "n_nodes", "mean_s", "std_s", "reps", "status"]


def _time(fn, reps: int) -> np.ndarray:
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return np.array(out)


def run_benchmark(node_counts: Sequence[int], repetitions: int = 3, naive_cap: int = 64,
                  n_phenotypes: int = 17, hidden: int = 64, k: int = 3, seed: int = 0,
                  grid: GridSpec = GridSpec(), methods: Sequence[str] = METHODS) -> pd.DataFrame:
    """Mean and std wall-clock time per (method, n) on synthetic unit-disk graphs.

    Each timed call includes its own forward pass. The naive method is
    skipped (status ``capped``) above ``naive_cap`` nodes.
    """
    model = ClassificationModel.init(ClassificationConfig(n_phenotypes, hidden=hidden), seed=seed)
    config = LrpConfig()
    rows = []
    for n in node_counts:
        graph = build_knn_graph(synth_generate(int(n), n_phenotypes, seed + int(n)), k, n_phenotypes,
                                graph_id=f"synth{n}")
        calls = {
            "naive": lambda: naive_node_relevance(model, graph, config),
            "masked": lambda: subgraph_relevance(model, graph, range(graph.n_nodes), config,
                                                 forward_cache(model, graph)),
            "grid": lambda: grid_attribution(model, graph, grid, config),
        }
        for method in methods:
            if method == "naive" and n > naive_cap:
                rows.append((method, int(n), float("nan"), float("nan"), 0, "capped"))
                continue
            times = _time(calls[method], repetitions)
            log.info("%s n=%d: %.4fs", method, n, times.mean())
            rows.append((method, int(n), float(times.mean()), float(times.std()), repetitions, "ok"))
    return pd.DataFrame(rows, columns=COLUMNS)
