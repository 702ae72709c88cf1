"""Phenotype-level relevance summaries and permutation tests across cases."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .cellgraph.labels import SurvivalClass

GROUPS = ("short", "long")


@dataclass
class PhenotypeRelevanceSummary:
    phenotype_id: int
    name: str
    short_values: list[float] = field(default_factory=list)
    long_values: list[float] = field(default_factory=list)
    observed: float = float("nan")
    p_value: float = 1.0

    def median(self, group: str) -> float:
        vals = self.short_values if group == "short" else self.long_values
        return float(np.median(vals)) if vals else float("nan")


def case_phenotype_median(relevance, phenotypes, phenotype_id: int) -> float | None:
    """Median relevance over one case's cells of a phenotype; ``None`` if absent."""
    relevance = np.asarray(relevance, dtype=np.float64)
    sel = relevance[np.asarray(phenotypes) == phenotype_id]
    if sel.size == 0:
        return None
    return float(np.median(sel))


def _stat(a: np.ndarray, b: np.ndarray) -> float:
    return abs(float(np.median(a)) - float(np.median(b)))


def permutation_test(group_a, group_b, n_iter: int = 1000, seed: int = 0) -> float:
    """Two-sided test on the absolute difference of group medians.

    ``p = (#{permuted >= observed} + 1) / (n_iter + 1)``, so ``p`` is never 0.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("permutation test needs two nonempty groups")
    observed = _stat(a, b)
    pooled = np.concatenate([a, b])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_iter):
        perm = rng.permutation(pooled)
        # tolerance absorbs rounding when a permutation reproduces the observed split
        if _stat(perm[:a.size], perm[a.size:]) >= observed - 1e-12 * max(1.0, observed):
            hits += 1
    return (hits + 1) / (n_iter + 1)


def stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def case_medians(relevance_table: pd.DataFrame, bags, n_phenotypes: int) -> dict[str, dict[int, float]]:
    """Per patient, per phenotype median over all cells of the patient's graphs."""
    graph_to_patient = {g: b.patient_id for b in bags for g in b.graph_ids}
    df = relevance_table.assign(patient_id=relevance_table["graph_id"].astype(str).map(graph_to_patient))
    out: dict[str, dict[int, float]] = {}
    for pid, sub in df.groupby("patient_id", sort=True):
        vals = sub["relevance"].to_numpy()
        ph = sub["phenotype_id"].to_numpy()
        out[str(pid)] = {p: m for p in range(n_phenotypes)
                         if (m := case_phenotype_median(vals, ph, p)) is not None}
    return out


def cohort_summary(relevance_table: pd.DataFrame, bags, phenotypes: Mapping[int, str],
                   n_iter: int = 1000, seed: int = 0, sort_group: str = "short") -> list[PhenotypeRelevanceSummary]:
    """Per-phenotype case medians for short and long survivors with a permutation p-value.

    Sorted by the ``sort_group`` median, descending; ties by phenotype id.
    Excluded patients and phenotypes missing from a case are skipped.
    """
    medians = case_medians(relevance_table, bags, len(phenotypes))
    group_of = {b.patient_id: b.survival_class.value for b in bags
                if b.survival_class is not SurvivalClass.EXCLUDED}
    summaries = []
    for pid_ph, name in sorted(phenotypes.items()):
        s = PhenotypeRelevanceSummary(int(pid_ph), str(name))
        for patient in sorted(medians):
            grp = group_of.get(patient)
            if grp is None or pid_ph not in medians[patient]:
                continue
            (s.short_values if grp == "short" else s.long_values).append(medians[patient][pid_ph])
        if s.short_values and s.long_values:
            s.observed = _stat(np.array(s.short_values), np.array(s.long_values))
            s.p_value = permutation_test(s.short_values, s.long_values, n_iter, seed=seed + int(pid_ph))
        summaries.append(s)
    return sort_summaries(summaries, sort_group)


def sort_summaries(summaries: Sequence[PhenotypeRelevanceSummary], group: str) -> list[PhenotypeRelevanceSummary]:
    def key(s):
        m = s.median(group)
        return (np.isnan(m), -m if not np.isnan(m) else 0.0, s.phenotype_id)
    return sorted(summaries, key=key)


STATS_COLUMNS = ["phenotype_id", "name", "group", "median_relevance", "p_value", "stars"]


def stats_table(summaries: Sequence[PhenotypeRelevanceSummary]) -> pd.DataFrame:
    """One row per (group, phenotype), each group ordered by its own median."""
    rows = []
    for group in GROUPS:
        for s in sort_summaries(summaries, group):
            m = s.median(group)
            if np.isnan(m):
                continue
            rows.append((s.phenotype_id, s.name, group, m, s.p_value, stars(s.p_value)))
    return pd.DataFrame(rows, columns=STATS_COLUMNS)


def write_stats(summaries, path) -> pd.DataFrame:
    df = stats_table(summaries)
    with open(path, "w") as fh:
        fh.write(",".join(STATS_COLUMNS) + "\n")
        for r in df.itertuples(index=False):
            fh.write(f"{r.phenotype_id},{r.name},{r.group},{float(r.median_relevance)!r},"
                     f"{float(r.p_value)!r},{r.stars}\n")
    return df
