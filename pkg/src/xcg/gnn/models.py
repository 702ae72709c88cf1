"""The survival regression and classification architectures.

Parameters live in a flat ``name -> ndarray`` dict so the optimizer,
serializer and gradient checks can treat both models uniformly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..cellgraph.labels import StageGroup
from . import layers as L

if TYPE_CHECKING:
    from ..cellgraph.graph import CellGraph

STAGE_INDEX = {StageGroup.EARLY: 0, StageGroup.LATE: 1}
CLASS_SHORT, CLASS_LONG = 0, 1


class StaleCacheError(RuntimeError):
    """A forward cache was produced by different parameter values."""


@dataclass
class RegressionConfig:
    n_features: int
    hidden: int = 64
    embed_dim: int = 64
    n_blocks: int = 3
    pool_ratio: float = 0.5
    eps_gin: float = 0.0
    fuse_stage: bool = True


@dataclass
class ClassificationConfig:
    n_features: int
    hidden: int = 64
    n_layers: int = 3
    eps_gin: float = 0.0


def _he(rng, fan_in, fan_out):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


class _Model:
    kind = ""

    def __init__(self, config, params: dict[str, np.ndarray]):
        self.config = config
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.version = 0

    def touch(self) -> None:
        """Mark parameters as modified, invalidating outstanding caches."""
        self.version += 1

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self):
        return type(self)(type(self.config)(**asdict(self.config)),
                          {k: v.copy() for k, v in self.params.items()})

    def _gin(self, prefix: str) -> L.GinLayer:
        p = self.params
        return L.GinLayer(p[f"{prefix}.w1"], p[f"{prefix}.b1"], p[f"{prefix}.w2"], p[f"{prefix}.b2"],
                          self.config.eps_gin)

    def _check(self, cache: dict) -> None:
        if cache.get("model") is not self or cache.get("version") != self.version:
            raise StaleCacheError("cache does not match the current model parameters")


class RegressionModel(_Model):
    """GIN/top-k blocks, stage fusion, attention MIL and a risk head."""

    kind = "RegressionModel"

    @classmethod
    def init(cls, config: RegressionConfig, seed: int = 0) -> "RegressionModel":
        rng = np.random.default_rng(seed)
        h, d = config.hidden, config.embed_dim
        p = {}
        for b in range(config.n_blocks):
            fan_in = config.n_features if b == 0 else h
            p[f"block{b}.gin.w1"] = _he(rng, fan_in, h)
            p[f"block{b}.gin.b1"] = np.zeros(h)
            p[f"block{b}.gin.w2"] = _he(rng, h, h)
            p[f"block{b}.gin.b2"] = np.zeros(h)
            p[f"block{b}.pool.p"] = rng.normal(0.0, 1.0, size=h)
        p["proj.w"] = _glorot(rng, 2 * h, d)
        p["proj.b"] = np.zeros(d)
        p["stage.emb"] = rng.normal(0.0, 0.1, size=(2, d))
        p["mil.V"] = _glorot(rng, d, d)
        p["mil.w"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=d)
        p["head.w1"] = _he(rng, d, d)
        p["head.b1"] = np.zeros(d)
        p["head.w2"] = _glorot(rng, d, 1)
        p["head.b2"] = np.zeros(1)
        return cls(config, p)


class ClassificationModel(_Model):
    """Pooling-free GIN stack with sum readout and two logits (short, long)."""

    kind = "ClassificationModel"

    @classmethod
    def init(cls, config: ClassificationConfig, seed: int = 0) -> "ClassificationModel":
        rng = np.random.default_rng(seed)
        h = config.hidden
        p = {}
        for layer in range(config.n_layers):
            fan_in = config.n_features if layer == 0 else h
            p[f"gin{layer}.w1"] = _he(rng, fan_in, h)
            p[f"gin{layer}.b1"] = np.zeros(h)
            p[f"gin{layer}.w2"] = _he(rng, h, h)
            p[f"gin{layer}.b2"] = np.zeros(h)
        p["out.w"] = _glorot(rng, h, 2) / np.sqrt(h)
        p["out.b"] = np.zeros(2)
        return cls(config, p)

    def gin_layers(self) -> list[L.GinLayer]:
        return [self._gin(f"gin{i}") for i in range(self.config.n_layers)]


# -- regression ---------------------------------------------------------------

def graph_embed(model: RegressionModel, graph: "CellGraph"):
    """Per-graph embedding: alternating GIN and top-k blocks, summed readouts, projection."""
    cfg = model.config
    X, A = graph.features, graph.adjacency
    readout = np.zeros(2 * cfg.hidden)
    blocks = []
    for b in range(cfg.n_blocks):
        gin = model._gin(f"block{b}.gin")
        H, gcache = L.gin_forward(gin, A, X)
        p = model.params[f"block{b}.pool.p"]
        X, A_next, _, pcache = L.topk_pool(p, cfg.pool_ratio, H, A)
        r, rcache = L.mean_max_readout(X)
        readout = readout + r
        blocks.append({"A": A, "gin": gcache, "pool": pcache, "readout": rcache})
        A = A_next
    h = readout @ model.params["proj.w"] + model.params["proj.b"]
    return h, {"blocks": blocks, "readout": readout}


def _graph_embed_backward(model: RegressionModel, cache: dict, dh: np.ndarray, grads: dict) -> None:
    grads["proj.w"] += np.outer(cache["readout"], dh)
    grads["proj.b"] += dh
    dread = model.params["proj.w"] @ dh
    dX_next = None
    for b in reversed(range(model.config.n_blocks)):
        blk = cache["blocks"][b]
        dXk = L.mean_max_backward(blk["readout"], dread)
        if dX_next is not None:
            dXk = dXk + dX_next
        p = model.params[f"block{b}.pool.p"]
        dH, dp = L.topk_backward(p, blk["pool"], dXk)
        grads[f"block{b}.pool.p"] += dp
        dX, g = L.gin_backward(model._gin(f"block{b}.gin"), blk["A"], blk["gin"], dH)
        for name, val in g.items():
            grads[f"block{b}.gin.{name}"] += val
        dX_next = dX


def fuse_stage(h: np.ndarray, stage_group, model: RegressionModel) -> np.ndarray:
    if not model.config.fuse_stage:
        return h
    return h + model.params["stage.emb"][STAGE_INDEX[StageGroup(stage_group)]]


def attn_mil_pool(model: RegressionModel, H: np.ndarray):
    h, a, _ = L.attn_mil_forward(model.params["mil.V"], model.params["mil.w"], np.atleast_2d(H))
    return h, a


def forward_regression(model: RegressionModel, graphs: Sequence["CellGraph"], stage_group,
                       with_cache: bool = False):
    """Scalar risk for one patient's bag of graphs."""
    if not graphs:
        raise ValueError("bag has no graphs")
    p = model.params
    embeds, gcaches = [], []
    for g in graphs:
        h, c = graph_embed(model, g)
        embeds.append(fuse_stage(h, stage_group, model))
        gcaches.append(c)
    H = np.stack(embeds)
    hx, a, mcache = L.attn_mil_forward(p["mil.V"], p["mil.w"], H)
    z1 = hx @ p["head.w1"] + p["head.b1"]
    a1 = L.relu(z1)
    risk = float(a1 @ p["head.w2"][:, 0] + p["head.b2"][0])
    if not with_cache:
        return risk
    cache = {"kind": "regression", "model": model, "version": model.version,
             "graphs": gcaches, "stage": StageGroup(stage_group), "mil": mcache,
             "hx": hx, "z1": z1, "a1": a1, "attention": a}
    return risk, cache


def _backward_regression(model: RegressionModel, drisk: float, cache: dict) -> dict:
    p = model.params
    grads = model.zero_grads()
    grads["head.w2"][:, 0] += cache["a1"] * drisk
    grads["head.b2"][0] += drisk
    dz1 = p["head.w2"][:, 0] * drisk * (cache["z1"] > 0)
    grads["head.w1"] += np.outer(cache["hx"], dz1)
    grads["head.b1"] += dz1
    dhx = p["head.w1"] @ dz1
    dH, dV, dw = L.attn_mil_backward(p["mil.V"], p["mil.w"], cache["mil"], dhx)
    grads["mil.V"] += dV
    grads["mil.w"] += dw
    if model.config.fuse_stage:
        grads["stage.emb"][STAGE_INDEX[cache["stage"]]] += dH.sum(axis=0)
    for k, gc in enumerate(cache["graphs"]):
        _graph_embed_backward(model, gc, dH[k], grads)
    return grads


# -- classification -----------------------------------------------------------

def graph_logits(model: ClassificationModel, graph: "CellGraph"):
    """Logits of a single graph with its per-layer activation cache."""
    X = graph.features
    layer_caches = []
    for gin in model.gin_layers():
        X, c = L.gin_forward(gin, graph.adjacency, X)
        layer_caches.append(c)
    g = X.sum(axis=0)
    z = g @ model.params["out.w"] + model.params["out.b"]
    return z, {"kind": "graph_logits", "model": model, "version": model.version,
               "layers": layer_caches, "readout": g, "adjacency": graph.adjacency, "logits": z}


def forward_classification(model: ClassificationModel, graphs: Sequence["CellGraph"],
                           with_cache: bool = False):
    """Patient logits ``(z_short, z_long)``: the mean of per-graph logits."""
    if not graphs:
        raise ValueError("bag has no graphs")
    per_graph = [graph_logits(model, g) for g in graphs]
    z = np.mean([zg for zg, _ in per_graph], axis=0)
    if not with_cache:
        return z
    return z, {"kind": "classification", "model": model, "version": model.version,
               "graphs": [c for _, c in per_graph]}


def _backward_graph_logits(model: ClassificationModel, dz: np.ndarray, cache: dict, grads: dict) -> None:
    grads["out.w"] += np.outer(cache["readout"], dz)
    grads["out.b"] += dz
    dX = np.tile(model.params["out.w"] @ dz, (cache["layers"][-1]["H"].shape[0], 1))
    for i in reversed(range(model.config.n_layers)):
        dX, g = L.gin_backward(model._gin(f"gin{i}"), cache["adjacency"], cache["layers"][i], dX)
        for name, val in g.items():
            grads[f"gin{i}.{name}"] += val


def backward(model, upstream, cache: dict) -> dict[str, np.ndarray]:
    """Parameter gradients given the loss gradient w.r.t. the model output."""
    model._check(cache)
    if cache["kind"] == "regression":
        return _backward_regression(model, float(np.asarray(upstream).reshape(())), cache)
    grads = model.zero_grads()
    dz = np.asarray(upstream, dtype=np.float64)
    if cache["kind"] == "classification":
        for gc in cache["graphs"]:
            _backward_graph_logits(model, dz / len(cache["graphs"]), gc, grads)
    elif cache["kind"] == "graph_logits":
        _backward_graph_logits(model, dz, cache, grads)
    else:
        raise ValueError(f"unknown cache kind {cache['kind']!r}")
    return grads
