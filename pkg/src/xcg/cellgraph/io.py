"""CSV ingestion and the versioned dataset cache."""

from __future__ import annotations

import hashlib
import logging
import os
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .labels import SurvivalClass
from .graph import (CELL_COLUMNS, PATIENT_COLUMNS, CellGraph, PatientBag, SchemaError,
                    assemble_bags, build_graphs)

log = logging.getLogger(__name__)

CACHE_VERSION = 1


@dataclass
class Dataset:
    graphs: dict[str, CellGraph]
    bags: list[PatientBag]
    phenotype_names: dict[int, str]
    n_phenotypes: int
    k: int
    content_hash: str

    def bag(self, patient_id: str) -> PatientBag:
        for b in self.bags:
            if b.patient_id == patient_id:
                return b
        raise KeyError(patient_id)

    def graphs_of(self, bag: PatientBag) -> list[CellGraph]:
        return [self.graphs[g] for g in bag.graph_ids]

    def report(self) -> dict:
        degrees = np.concatenate([g.adjacency.row_degrees() for g in self.graphs.values()])
        return {
            "n_patients": len(self.bags),
            "n_graphs": len(self.graphs),
            "n_cells": int(sum(g.n_nodes for g in self.graphs.values())),
            "n_excluded": sum(b.survival_class is SurvivalClass.EXCLUDED for b in self.bags),
            "n_short": sum(b.survival_class is SurvivalClass.SHORT for b in self.bags),
            "n_long": sum(b.survival_class is SurvivalClass.LONG for b in self.bags),
            "n_events": sum(b.event for b in self.bags),
            "degree_min": int(degrees.min()),
            "degree_mean": float(degrees.mean()),
            "degree_max": int(degrees.max()),
            "k": self.k,
        }


def _read_csv(path: Path, columns, table: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
    return df


def _check_numeric(df: pd.DataFrame, column: str, name: str) -> None:
    values = pd.to_numeric(df[column], errors="coerce")
    bad = values.isna() | ~np.isfinite(values.astype(float))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2  # header is line 1
        raise SchemaError(f"{name}: invalid value in column {column} at row {row}")


def read_tables(data_dir: str | os.PathLike):
    data_dir = Path(data_dir)
    cells = _read_csv(data_dir / "cells.csv", CELL_COLUMNS, "cells")
    for col in ("cell_id", "x_mm", "y_mm", "phenotype_id"):
        _check_numeric(cells, col, "cells.csv")
    patients = _read_csv(data_dir / "patients.csv", PATIENT_COLUMNS, "patients")
    for col in ("os_months", "event"):
        _check_numeric(patients, col, "patients.csv")
    cells["patient_id"] = cells["patient_id"].astype(str)
    cells["graph_id"] = cells["graph_id"].astype(str)
    patients["patient_id"] = patients["patient_id"].astype(str)
    ph_path = data_dir / "phenotypes.csv"
    phenotypes = _read_csv(ph_path, ("phenotype_id", "name"), "phenotypes") if ph_path.exists() else None
    return cells, patients, phenotypes


def write_tables(data_dir: str | os.PathLike, cells: pd.DataFrame, patients: pd.DataFrame,
                 phenotypes: pd.DataFrame | None = None) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    cells.to_csv(data_dir / "cells.csv", index=False, float_format="%.17g")
    patients.to_csv(data_dir / "patients.csv", index=False)
    if phenotypes is not None:
        phenotypes.to_csv(data_dir / "phenotypes.csv", index=False)


def input_hashes(data_dir: str | os.PathLike) -> dict[str, str]:
    data_dir = Path(data_dir)
    out = {}
    for name in ("cells.csv", "patients.csv", "phenotypes.csv"):
        p = data_dir / name
        if p.exists():
            out[name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def cache_dir() -> Path:
    return Path(os.environ.get("XCG_CACHE_DIR", Path.home() / ".cache" / "xcg"))


def load_dataset(data_dir: str | os.PathLike, k: int = 3, use_cache: bool = True) -> tuple[Dataset, bool]:
    """Build (or reuse from cache) graphs and bags for a data directory.

    Returns the dataset and whether the cache was hit.
    """
    hashes = input_hashes(data_dir)
    key = hashlib.sha256(repr((CACHE_VERSION, k, sorted(hashes.items()))).encode()).hexdigest()
    path = cache_dir() / f"dataset-v{CACHE_VERSION}-{key[:24]}.pkl"
    if use_cache and path.exists():
        with open(path, "rb") as fh:
            ds = pickle.load(fh)
        if isinstance(ds, Dataset) and ds.content_hash == key:
            return ds, True
        log.warning("stale cache entry %s ignored", path)

    cells, patients, phenotypes = read_tables(data_dir)
    if phenotypes is not None:
        n_ph = int(max(phenotypes["phenotype_id"].max(), cells["phenotype_id"].max())) + 1
        names = {int(i): str(n) for i, n in zip(phenotypes["phenotype_id"], phenotypes["name"])}
    else:
        n_ph = int(cells["phenotype_id"].max()) + 1
        names = {}
    names = {p: names.get(p, f"phenotype_{p}") for p in range(n_ph)}
    bags = assemble_bags(cells, patients)
    graphs = build_graphs(cells, k=k, n_phenotypes=n_ph)
    ds = Dataset(graphs=graphs, bags=bags, phenotype_names=names, n_phenotypes=n_ph, k=k,
                 content_hash=key)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(ds, fh, protocol=pickle.HIGHEST_PROTOCOL)
        tmp.replace(path)
    return ds, False
