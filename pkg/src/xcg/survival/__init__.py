"""Survival losses, metrics, cross-validation and training drivers."""

from .cv import Fold, FoldPlan, make_folds
from .metrics import (UninformativeBatchError, auroc, concordance_index, cox_loss, cross_entropy,
                      softmax_probs, stage_baseline_risk)
from .training import (FoldResult, Sample, TrainingDivergedError, ensemble_predict, evaluate, fit,
                       new_model, predict_scores, prepare_samples, train, train_ensemble, train_fold)
