"""Sparse algebra, GIN architectures, gradients and the optimizer."""

from .layers import GinLayer, attn_mil_forward, gin_forward, topk_pool
from .models import (CLASS_LONG, CLASS_SHORT, ClassificationConfig, ClassificationModel,
                     RegressionConfig, RegressionModel, StaleCacheError, attn_mil_pool, backward,
                     forward_classification, forward_regression, fuse_stage, graph_embed,
                     graph_logits)
from .optim import AdamState, TrainConfig, adamw_step, cosine_lr
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .sparse import SparseMatrix, spmm
