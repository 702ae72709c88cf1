"""Cell graphs and patient bags."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from ..gnn.sparse import SparseMatrix
from .labels import StageGroup, SurvivalClass

log = logging.getLogger(__name__)

SURVIVAL_CUTOFF_MONTHS = 36.0

CELL_COLUMNS = ("patient_id", "graph_id", "cell_id", "x_mm", "y_mm", "phenotype_id")
PATIENT_COLUMNS = ("patient_id", "os_months", "event", "stage_group")


class SchemaError(ValueError):
    """Input table is missing columns or carries invalid values."""


@dataclass(frozen=True)
class Cell:
    cell_id: int
    x_mm: float
    y_mm: float
    phenotype_id: int


@dataclass
class CellGraph:
    """A tissue sample as a graph; node ``i`` is the ``i``-th smallest cell id."""

    graph_id: str
    cell_ids: np.ndarray
    xy: np.ndarray
    phenotypes: np.ndarray
    n_phenotypes: int
    adjacency: SparseMatrix
    k: int = 3

    @property
    def n_nodes(self) -> int:
        return len(self.cell_ids)

    @property
    def features(self) -> np.ndarray:
        X = np.zeros((self.n_nodes, self.n_phenotypes))
        X[np.arange(self.n_nodes), self.phenotypes] = 1.0
        return X

    @property
    def cells(self) -> list[Cell]:
        return [Cell(int(c), float(x), float(y), int(p))
                for c, (x, y), p in zip(self.cell_ids, self.xy, self.phenotypes)]

    def edges(self) -> set[tuple[int, int]]:
        """Undirected edge set as ``(i, j)`` node-index pairs with ``i < j``."""
        coo = self.adjacency.to_scipy().tocoo()
        return {(int(i), int(j)) for i, j in zip(coo.row, coo.col) if i < j}


@dataclass
class PatientBag:
    patient_id: str
    graph_ids: list[str]
    os_months: float
    event: bool
    stage_group: StageGroup
    survival_class: SurvivalClass = field(init=False)

    def __post_init__(self):
        if not self.graph_ids:
            raise ValueError(f"patient {self.patient_id} has no graphs")
        if not (self.os_months >= 0):
            raise ValueError(f"patient {self.patient_id}: os_months must be nonnegative")
        self.stage_group = StageGroup(self.stage_group)
        self.event = bool(self.event)
        self.survival_class = survival_class(self.os_months, self.event)


def survival_class(os_months: float, event: bool) -> SurvivalClass:
    if os_months > SURVIVAL_CUTOFF_MONTHS:
        return SurvivalClass.LONG
    return SurvivalClass.SHORT if event else SurvivalClass.EXCLUDED


def _knn_indices(xy: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Directed k nearest neighbours per node; ties go to the lower node index."""
    n = len(xy)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = xy[start:stop, 0:1] - xy[None, :, 0]
        dy = xy[start:stop, 1:2] - xy[None, :, 1]
        d = dx * dx + dy * dy
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps lower indices first among equal distances
        order = np.argsort(d, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def build_knn_graph(cells: Sequence[Cell], k: int = 3, n_phenotypes: int | None = None,
                    graph_id: str = "g0") -> CellGraph:
    """Symmetrized k-nearest-neighbour cell graph."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if len(cells) < k + 1:
        raise ValueError(f"insufficient nodes: need at least {k + 1} cells, got {len(cells)}")
    cells = sorted(cells, key=lambda c: c.cell_id)
    ids = np.array([c.cell_id for c in cells], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError(f"graph {graph_id}: duplicate cell ids")
    xy = np.array([[c.x_mm, c.y_mm] for c in cells], dtype=np.float64)
    if not np.all(np.isfinite(xy)):
        raise ValueError(f"graph {graph_id}: non-finite coordinates")
    ph = np.array([c.phenotype_id for c in cells], dtype=np.int64)
    if n_phenotypes is None:
        n_phenotypes = int(ph.max()) + 1
    if ph.min() < 0 or ph.max() >= n_phenotypes:
        raise ValueError(f"graph {graph_id}: phenotype id outside [0, {n_phenotypes})")

    n = len(cells)
    nbrs = _knn_indices(xy, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    both = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    directed_sym = SparseMatrix.from_coo(both[0], both[1], np.ones(2 * n * k), (n, n)).to_scipy()
    directed_sym.data[:] = 1.0
    adjacency = SparseMatrix(directed_sym.indptr, directed_sym.indices, directed_sym.data, (n, n))
    return CellGraph(graph_id=str(graph_id), cell_ids=ids, xy=xy, phenotypes=ph,
                     n_phenotypes=int(n_phenotypes), adjacency=adjacency, k=k)


def directed_knn_edges(graph: CellGraph) -> np.ndarray:
    """The pre-symmetrization edge list ``(i, nbr)`` of ``graph``."""
    nbrs = _knn_indices(graph.xy, graph.k)
    return np.stack([np.repeat(np.arange(graph.n_nodes), graph.k), nbrs.ravel()], axis=1)


def _require(df: pd.DataFrame, columns: Sequence[str], table: str) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{table}: missing column(s) {', '.join(missing)}")


def build_graphs(cell_table: pd.DataFrame, k: int = 3,
                 n_phenotypes: int | None = None) -> dict[str, CellGraph]:
    """One KNN graph per ``graph_id`` in the cell table."""
    _require(cell_table, CELL_COLUMNS, "cells")
    if n_phenotypes is None:
        n_phenotypes = int(cell_table["phenotype_id"].max()) + 1
    graphs = {}
    for gid, df in cell_table.groupby("graph_id", sort=True):
        cells = [Cell(int(c), float(x), float(y), int(p)) for c, x, y, p in
                 zip(df["cell_id"], df["x_mm"], df["y_mm"], df["phenotype_id"])]
        graphs[str(gid)] = build_knn_graph(cells, k, n_phenotypes, graph_id=str(gid))
    return graphs


def assemble_bags(cell_table: pd.DataFrame, patient_table: pd.DataFrame) -> list[PatientBag]:
    """Join graphs to patient survival metadata, one bag per patient.

    Patients in the excluded class are kept; only classification drops them.
    """
    _require(cell_table, ("patient_id", "graph_id"), "cells")
    _require(patient_table, PATIENT_COLUMNS, "patients")
    pt = patient_table.copy()
    pt["patient_id"] = pt["patient_id"].astype(str)
    if pt["patient_id"].duplicated().any():
        dup = pt.loc[pt["patient_id"].duplicated(), "patient_id"].iloc[0]
        raise SchemaError(f"patients: duplicate patient_id {dup}")
    bad_stage = ~pt["stage_group"].isin([s.value for s in StageGroup])
    if bad_stage.any():
        raise SchemaError(f"patients: invalid stage_group at row {int(np.flatnonzero(bad_stage)[0]) + 2}")
    bad_event = ~pt["event"].isin([0, 1, True, False])
    if bad_event.any():
        raise SchemaError(f"patients: event must be 0 or 1 (row {int(np.flatnonzero(bad_event)[0]) + 2})")

    pairs = cell_table[["graph_id", "patient_id"]].astype(str).drop_duplicates()
    multi = pairs["graph_id"].duplicated(keep=False)
    if multi.any():
        raise SchemaError(f"graph_id {pairs.loc[multi, 'graph_id'].iloc[0]} joins to more than one patient")
    known = set(pt["patient_id"])
    orphans = pairs.loc[~pairs["patient_id"].isin(known), "graph_id"]
    if len(orphans):
        raise SchemaError(f"orphan graph_id {orphans.iloc[0]}: no matching patient row")

    graphs_of = pairs.groupby("patient_id")["graph_id"].apply(sorted).to_dict()
    bags = []
    for row in pt.itertuples(index=False):
        gids = graphs_of.get(row.patient_id)
        if not gids:
            log.warning("patient %s has no cells; skipped", row.patient_id)
            continue
        bags.append(PatientBag(patient_id=row.patient_id, graph_ids=list(gids),
                               os_months=float(row.os_months), event=bool(int(row.event)),
                               stage_group=StageGroup(row.stage_group)))
    return bags
