"""Synthetic cell data for benchmarks and planted-signal test cohorts."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .graph import Cell


def synth_generate(n_nodes: int, n_phenotypes: int, seed: int) -> list[Cell]:
    """Cells uniform on the unit disk with uniform phenotypes."""
    if n_nodes < 4:
        raise ValueError("n_nodes must be at least 4")
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.random(n_nodes))
    theta = 2.0 * np.pi * rng.random(n_nodes)
    x, y = r * np.cos(theta), r * np.sin(theta)
    ph = rng.integers(0, n_phenotypes, size=n_nodes)
    return [Cell(i, float(x[i]), float(y[i]), int(ph[i])) for i in range(n_nodes)]


def synth_planted_cohort(n_patients: int, signal_phenotype: int, seed: int, *,
                         n_phenotypes: int = 6, cells_per_graph: int = 100,
                         graphs_per_patient: int = 1, side_mm: float = 0.2,
                         background_signal_rate: float = 0.03,
                         long_event_rate: float = 0.3) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Cohort whose short survivors carry a spatial cluster of ``signal_phenotype``.

    Each patient draws a latent risk ``u``; short survivors have ``u`` in
    (0.5, 1], long survivors in [0, 0.5). The cluster radius grows with ``u``
    and overall survival falls with it, so risk is recoverable both between
    and within groups. Long survivors carry the signal phenotype only at the
    background rate.
    """
    if n_patients % 2:
        raise ValueError("n_patients must be even")
    if not 0 <= signal_phenotype < n_phenotypes:
        raise ValueError("signal_phenotype outside phenotype range")
    rng = np.random.default_rng(seed)
    is_short = rng.permutation(np.repeat([True, False], n_patients // 2))

    others = [p for p in range(n_phenotypes) if p != signal_phenotype]
    base_p = np.full(n_phenotypes, (1.0 - background_signal_rate) / len(others))
    base_p[signal_phenotype] = background_signal_rate

    cell_rows, patient_rows = [], []
    for i in range(n_patients):
        pid = f"P{i:04d}"
        if is_short[i]:
            u = 0.5 + 0.5 * rng.uniform(0.02, 1.0)
            os_months = 36.0 - (u - 0.5) / 0.5 * 33.0
            event = 1
        else:
            u = 0.5 * rng.uniform(0.0, 0.98)
            os_months = 37.0 + (0.5 - u) / 0.5 * 83.0
            event = int(rng.random() < long_event_rate)
        stage = "late" if rng.random() < 0.5 else "early"
        patient_rows.append((pid, round(os_months, 3), event, stage))

        for g in range(graphs_per_patient):
            gid = f"{pid}_g{g}"
            xy = rng.uniform(0.0, side_mm, size=(cells_per_graph, 2))
            ph = rng.choice(n_phenotypes, size=cells_per_graph, p=base_p)
            if is_short[i]:
                center = rng.uniform(0.3 * side_mm, 0.7 * side_mm, size=2)
                radius = side_mm * (0.2 + 0.2 * (u - 0.5) / 0.5)
                inside = np.sum((xy - center) ** 2, axis=1) <= radius ** 2
                ph[inside] = signal_phenotype
            for c in range(cells_per_graph):
                cell_rows.append((pid, gid, c, float(xy[c, 0]), float(xy[c, 1]), int(ph[c])))

    cells = pd.DataFrame(cell_rows, columns=["patient_id", "graph_id", "cell_id", "x_mm", "y_mm",
                                             "phenotype_id"])
    patients = pd.DataFrame(patient_rows, columns=["patient_id", "os_months", "event", "stage_group"])
    return cells, patients


def phenotype_names(n_phenotypes: int, signal_phenotype: int | None = None) -> pd.DataFrame:
    names = [f"phenotype_{p}" for p in range(n_phenotypes)]
    if signal_phenotype is not None:
        names[signal_phenotype] = "signal"
    return pd.DataFrame({"phenotype_id": range(n_phenotypes), "name": names})
