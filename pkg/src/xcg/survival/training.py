"""Nested cross-validated training and seed ensembles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from ..cellgraph.labels import SurvivalClass
from ..gnn.models import (CLASS_LONG, CLASS_SHORT, ClassificationConfig, ClassificationModel,
                          RegressionConfig, RegressionModel, backward, forward_classification,
                          forward_regression)
from ..gnn.optim import AdamState, TrainConfig, adamw_step, cosine_lr
from .cv import FoldPlan
from .metrics import (UninformativeBatchError, auroc, concordance_index, cox_loss, cross_entropy,
                      softmax_probs)

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class Sample:
    patient_id: str
    graphs: list
    stage: object
    time: float
    event: bool
    label: int  # CLASS_SHORT / CLASS_LONG, -1 when excluded


def prepare_samples(bags, graphs: dict) -> dict[str, Sample]:
    out = {}
    for b in bags:
        label = {SurvivalClass.SHORT: CLASS_SHORT, SurvivalClass.LONG: CLASS_LONG}.get(b.survival_class, -1)
        out[b.patient_id] = Sample(b.patient_id, [graphs[g] for g in b.graph_ids], b.stage_group,
                                   b.os_months, b.event, label)
    return out


def new_model(task: str, n_features: int, model_kwargs: dict | None, seed: int):
    kw = dict(model_kwargs or {})
    if task == "regression":
        return RegressionModel.init(RegressionConfig(n_features=n_features, **kw), seed=seed)
    kw.pop("fuse_stage", None)
    for key in ("embed_dim", "n_blocks", "pool_ratio"):
        kw.pop(key, None)
    return ClassificationModel.init(ClassificationConfig(n_features=n_features, **kw), seed=seed)


def fit(model, task: str, samples: Sequence[Sample], config: TrainConfig, lr: float,
        rng: np.random.Generator):
    """Train ``model`` in place with AdamW and a cosine schedule; returns per-epoch losses."""
    if config.epochs == 0 or not samples:
        return []
    batch = config.batch_size if task == "regression" else 1
    n_batches = -(-len(samples) // batch)
    total = config.epochs * n_batches
    state = AdamState.zeros_like(model.params)
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_loss, counted = 0.0, 0
        for start in range(0, len(samples), batch):
            members = [samples[i] for i in order[start:start + batch]]
            lr_t = cosine_lr(lr, step, total)
            step += 1
            loss, grads = _batch_gradients(model, task, members)
            if loss is None:
                continue
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            adamw_step(model.params, grads, state, config, lr_t)
            model.touch()
            epoch_loss += loss
            counted += 1
        history.append(epoch_loss / max(counted, 1))
    return history


def _batch_gradients(model, task: str, members: Sequence[Sample]):
    if task == "regression":
        outs = [forward_regression(model, s.graphs, s.stage, with_cache=True) for s in members]
        risks = np.array([r for r, _ in outs])
        try:
            loss, dr = cox_loss(risks, [s.time for s in members], [s.event for s in members],
                                return_grad=True)
        except UninformativeBatchError:
            log.debug("skipping batch without events")
            return None, None
        grads = model.zero_grads()
        for (_, cache), d in zip(outs, dr):
            for k, g in backward(model, d, cache).items():
                grads[k] += g
        return loss, grads
    grads = model.zero_grads()
    total = 0.0
    for s in members:
        z, cache = forward_classification(model, s.graphs, with_cache=True)
        loss, dz = cross_entropy(z, s.label)
        for k, g in backward(model, dz / len(members), cache).items():
            grads[k] += g
        total += loss / len(members)
    return total, grads


def predict_scores(model, task: str, samples: Sequence[Sample]) -> np.ndarray:
    """Risk (regression) or probability of short survival (classification)."""
    if task == "regression":
        return np.array([forward_regression(model, s.graphs, s.stage) for s in samples])
    return np.array([softmax_probs(forward_classification(model, s.graphs))[CLASS_SHORT]
                     for s in samples])


def evaluate(task: str, scores, samples: Sequence[Sample]) -> float:
    if task == "regression":
        return concordance_index(scores, [s.time for s in samples], [s.event for s in samples])
    return auroc(scores, [s.label == CLASS_SHORT for s in samples])


def _selection_score(model, task: str, samples: Sequence[Sample]) -> float:
    """Higher is better."""
    if task == "regression":
        risks = predict_scores(model, task, samples)
        try:
            return -cox_loss(risks, [s.time for s in samples], [s.event for s in samples])
        except UninformativeBatchError:
            return 0.0
    scores = predict_scores(model, task, samples)
    labels = [s.label == CLASS_SHORT for s in samples]
    if len(set(labels)) == 2:
        return auroc(scores, labels)
    return -float(np.mean([cross_entropy(forward_classification(model, s.graphs), s.label)[0]
                           for s in samples]))


@dataclass
class FoldResult:
    fold: int
    seed: int
    best_lr: float
    inner_scores: dict[float, float]
    model: object
    test_ids: list[str]
    test_scores: np.ndarray
    metric: float
    history: list[float] = field(default_factory=list)


def train_fold(samples: dict[str, Sample], task: str, config: TrainConfig, plan: FoldPlan,
               fold: int, seed: int, model_kwargs: dict | None = None,
               n_features: int | None = None) -> FoldResult:
    """Select the learning rate on the inner split, refit on the outer train set, score the test set."""
    f = plan.folds[fold]
    if n_features is None:
        n_features = next(iter(samples.values())).graphs[0].n_phenotypes
    pick = lambda ids: [samples[i] for i in ids]  # noqa: E731
    inner_scores = {}
    grid = config.lr_grid
    if len(grid) > 1:
        for j, lr in enumerate(grid):
            model = new_model(task, n_features, model_kwargs, seed)
            fit(model, task, pick(f.inner_train), config, lr, np.random.default_rng([seed, fold, j, 1]))
            inner_scores[lr] = _selection_score(model, task, pick(f.inner_val))
        best = max(grid, key=lambda lr: (inner_scores[lr], -grid.index(lr)))
    else:
        best = grid[0]
    model = new_model(task, n_features, model_kwargs, seed)
    history = fit(model, task, pick(f.train), config, best, np.random.default_rng([seed, fold, 0, 2]))
    test = pick(f.test)
    scores = predict_scores(model, task, test)
    metric = evaluate(task, scores, test)
    log.info("seed %d fold %d lr %g -> %s %.4f", seed, fold, best,
             "C-index" if task == "regression" else "AUROC", metric)
    return FoldResult(fold, seed, best, inner_scores, model, list(f.test), scores, metric, history)


def train(samples: dict[str, Sample], task: str, config: TrainConfig, plan: FoldPlan, seed: int,
          model_kwargs: dict | None = None, n_jobs: int = 1) -> list[FoldResult]:
    """All outer folds for a single seed."""
    return train_ensemble(samples, task, config, plan, [seed], model_kwargs, n_jobs)[seed]


def train_ensemble(samples: dict[str, Sample], task: str, config: TrainConfig, plan: FoldPlan,
                   seeds: Sequence[int], model_kwargs: dict | None = None,
                   n_jobs: int = 1) -> dict[int, list[FoldResult]]:
    """Independent members per seed and outer fold; jobs are order-independent."""
    jobs = [(s, f.index) for s in seeds for f in plan.folds]
    if n_jobs == 1:
        results = [train_fold(samples, task, config, plan, f, s, model_kwargs) for s, f in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(train_fold)(samples, task, config, plan, f, s, model_kwargs) for s, f in jobs)
    out: dict[int, list[FoldResult]] = {s: [] for s in seeds}
    for r in results:
        out[r.seed].append(r)
    for s in out:
        out[s].sort(key=lambda r: r.fold)
    return out


def ensemble_predict(models: Sequence, graphs, stage_group) -> float:
    """Arithmetic mean of member risks."""
    if not models:
        raise ValueError("ensemble has no members")
    return float(np.mean([forward_regression(m, graphs, stage_group) for m in models]))
