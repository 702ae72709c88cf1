"""Stratified nested cross-validation plans."""

from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from ..cellgraph.labels import SurvivalClass

log = logging.getLogger(__name__)

TASKS = ("regression", "classification")


@dataclass
class Fold:
    index: int
    train: list[str]
    test: list[str]
    inner_train: list[str]
    inner_val: list[str]


@dataclass
class FoldPlan:
    task: str
    seed: int
    n_outer: int
    labels: dict[str, str]
    folds: list[Fold] = field(default_factory=list)

    def fold_of(self, patient_id: str) -> int:
        for f in self.folds:
            if patient_id in f.test:
                return f.index
        raise KeyError(patient_id)

    def to_dict(self) -> dict:
        return {"task": self.task, "seed": self.seed, "n_outer": self.n_outer,
                "labels": self.labels,
                "folds": [{"index": f.index, "train": f.train, "test": f.test,
                           "inner_train": f.inner_train, "inner_val": f.inner_val}
                          for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(d["task"], d["seed"], d["n_outer"], d["labels"],
                   [Fold(**f) for f in d["folds"]])


def stratum(bag, task: str) -> str:
    if task == "classification":
        return bag.survival_class.value
    return f"event={int(bag.event)}|stage={bag.stage_group.value}"


def merge_rare(labels: list[str], min_count: int) -> list[str]:
    """Fold strata with fewer than ``min_count`` members into the largest one."""
    counts = Counter(labels)
    rare = {k for k, c in counts.items() if c < min_count}
    if not rare:
        return labels
    common = sorted((k for k in counts if k not in rare), key=lambda k: (-counts[k], k))
    target = common[0] if common else "merged"
    warnings.warn(f"strata {sorted(rare)} smaller than {min_count}; merged into {target!r}",
                  stacklevel=2)
    merged = [target if lab in rare else lab for lab in labels]
    if Counter(merged)[target] < min_count:
        return ["all"] * len(labels)
    return merged


def make_folds(bags, task: str, seed: int, n_outer: int = 5, inner_val_fraction: float = 0.2) -> FoldPlan:
    """Stratified outer folds with one stratified inner train/validation split each.

    Regression stratifies on (event, stage group); classification on survival
    class and drops excluded patients.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    eligible = [b for b in bags
                if task == "regression" or b.survival_class is not SurvivalClass.EXCLUDED]
    if len(eligible) < 2 * n_outer:
        raise ValueError(f"need at least {2 * n_outer} eligible patients, got {len(eligible)}")
    ids = np.array([b.patient_id for b in eligible])
    raw = [stratum(b, task) for b in eligible]
    strat = np.array(merge_rare(raw, n_outer))

    plan = FoldPlan(task=task, seed=seed, n_outer=n_outer, labels=dict(zip(ids.tolist(), raw)))
    skf = StratifiedKFold(n_splits=n_outer, shuffle=True, random_state=seed)
    for i, (tr, te) in enumerate(skf.split(ids, strat)):
        inner_labels = np.array(merge_rare(strat[tr].tolist(), 2))
        itr, iva = train_test_split(ids[tr], test_size=inner_val_fraction, random_state=seed + i,
                                    stratify=inner_labels)
        plan.folds.append(Fold(index=i, train=sorted(ids[tr].tolist()), test=sorted(ids[te].tolist()),
                               inner_train=sorted(itr.tolist()), inner_val=sorted(iva.tolist())))
    return plan
