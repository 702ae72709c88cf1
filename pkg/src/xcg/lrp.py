"""Layer-wise relevance propagation for the pooling-free GIN classifier.

Relevance starts at one target logit of a single graph and is pushed back
through the readout, each GIN MLP (LRP-gamma) and each aggregation step
(proportional per feature dimension). All passes reuse the activations of
one unmasked forward pass.

Sign convention: relevances are reported for the explained class. Positive
values are evidence the model uses *for* that class, negative values evidence
against it, so a heatmap must be read together with the class it explains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .cellgraph.graph import CellGraph
from .gnn.models import CLASS_LONG, CLASS_SHORT, ClassificationModel, graph_logits
from .gnn.sparse import SparseMatrix, spmm

TARGETS = {"short": CLASS_SHORT, "long": CLASS_LONG}


class LrpError(ValueError):
    pass


@dataclass(frozen=True)
class LrpConfig:
    gamma: float = 0.1
    epsilon_stab: float = 1e-9
    target_class: str | int = "predicted"

    def __post_init__(self):
        for name in ("gamma", "epsilon_stab"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.target_class not in ("predicted", "short", "long", CLASS_SHORT, CLASS_LONG):
            raise ValueError(f"unknown target class {self.target_class!r}")


def _stabilize(z: np.ndarray, eps: float) -> np.ndarray:
    # sign(0) counts as +1 so dead units never divide by zero
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # a zero denominator means every contributor is zero, so nothing flows
    return np.divide(num, den, out=np.zeros(np.broadcast_shapes(num.shape, den.shape)), where=den != 0)


def _rho(W: np.ndarray, gamma: float) -> np.ndarray:
    return W + gamma * np.maximum(W, 0.0)


def lrp_linear(activations_in, weights, relevance_out, config: LrpConfig) -> np.ndarray:
    """LRP-gamma through ``a @ W``; the bias receives no relevance."""
    a = np.asarray(activations_in, dtype=np.float64)
    W = np.asarray(weights, dtype=np.float64)
    R = np.asarray(relevance_out, dtype=np.float64)
    if a.shape[-1] != W.shape[0] or R.shape[-1] != W.shape[1]:
        raise ValueError(f"shape mismatch: a {a.shape}, W {W.shape}, R {R.shape}")
    Wr = _rho(W, config.gamma)
    s = _safe_div(R, _stabilize(a @ Wr, config.epsilon_stab))
    return a * (s @ Wr.T)


def _aggregate_relevance(adjacency, eps_gin: float, X: np.ndarray, M: np.ndarray,
                         R_M: np.ndarray, config: LrpConfig) -> np.ndarray:
    """Split each aggregated unit's relevance among its self and neighbour contributors."""
    s = _safe_div(R_M, _stabilize(M, config.epsilon_stab))
    if isinstance(adjacency, SparseMatrix):
        spread = (1.0 + eps_gin) * s + spmm(adjacency.T, s)
    else:
        spread = (1.0 + eps_gin) * s + adjacency.T @ s
    return X * spread


def _require_classifier(model) -> None:
    if not isinstance(model, ClassificationModel):
        raise LrpError("LRP supports the no-pooling classifier only")


def forward_cache(model, graph: CellGraph) -> dict:
    _require_classifier(model)
    return graph_logits(model, graph)[1]


def resolve_target(cache: dict, config: LrpConfig) -> int:
    t = config.target_class
    if t == "predicted":
        z = cache["logits"]
        return CLASS_LONG if z[CLASS_LONG] > z[CLASS_SHORT] else CLASS_SHORT
    return TARGETS.get(t, t)


def readout_relevance(model: ClassificationModel, cache: dict, target: int, config: LrpConfig,
                      rows: np.ndarray | None = None) -> np.ndarray:
    """Relevance of last-layer node features for the target logit.

    The readout sum and output map act as one linear map of the node
    features, so the gamma rule's denominator spans the whole graph even when
    only ``rows`` are returned.
    """
    H = cache["layers"][-1]["H"]
    w = _rho(model.params["out.w"][:, target], config.gamma)
    z = float(cache["readout"] @ w)
    logit = float(cache["logits"][target])
    den = float(_stabilize(np.array(z), config.epsilon_stab))
    scale = logit / den if den != 0 else 0.0
    Hs = H if rows is None else H[rows]
    return Hs * w[None, :] * scale


def _mlp_relevance(layer_cache: dict, w1, w2, R_H: np.ndarray, config: LrpConfig,
                   rows: np.ndarray | None = None) -> np.ndarray:
    A1 = layer_cache["A1"] if rows is None else layer_cache["A1"][rows]
    M = layer_cache["M"] if rows is None else layer_cache["M"][rows]
    R_A1 = lrp_linear(A1, w2, R_H, config)
    return lrp_linear(M, w1, R_A1, config)


def _backward(model: ClassificationModel, cache: dict, config: LrpConfig, target: int,
              adjacency, masks: Sequence[np.ndarray] | None = None, dense: bool = False) -> np.ndarray:
    """Full-graph relevance pass returning input-feature relevance (n x P).

    ``masks[l]`` (boolean, length n) zeroes relevance outside the mask on the
    layer-``l`` node representation; index ``L`` is the last layer.
    """
    n_layers = model.config.n_layers
    adj = adjacency.to_dense() if dense else adjacency
    R = readout_relevance(model, cache, target, config)
    if masks is not None:
        R = R * masks[n_layers][:, None]
    for i, gin in reversed(list(enumerate(model.gin_layers()))):
        lc = cache["layers"][i]
        R_M = _mlp_relevance(lc, gin.w1, gin.w2, R, config)
        R = _aggregate_relevance(adj, gin.eps, lc["X"], lc["M"], R_M, config)
        if masks is not None:
            R = R * masks[i][:, None]
    return R


def node_relevance(model, graph: CellGraph, config: LrpConfig = LrpConfig(), cache: dict | None = None,
                   dense: bool = False) -> np.ndarray:
    """Per-cell relevance for the target logit of ``graph``."""
    _require_classifier(model)
    cache = cache if cache is not None else forward_cache(model, graph)
    model._check(cache)
    target = resolve_target(cache, config)
    return _backward(model, cache, config, target, graph.adjacency, dense=dense).sum(axis=1)


# -- walk-based oracle ----------------------------------------------------------

def _neighbours(adjacency: SparseMatrix) -> list[np.ndarray]:
    ip, ix = adjacency.indptr, adjacency.indices
    return [np.concatenate([[v], ix[ip[v]:ip[v + 1]]]) for v in range(adjacency.n_rows)]


def enumerate_walks(adjacency: SparseMatrix, n_layers: int,
                    within: Iterable[int] | None = None) -> Iterator[tuple[int, ...]]:
    """All node sequences of length ``n_layers + 1`` moving along edges or staying put."""
    allowed = None if within is None else set(int(v) for v in within)
    nbrs = _neighbours(adjacency)
    starts = range(adjacency.n_rows) if allowed is None else sorted(allowed)

    def extend(walk):
        if len(walk) == n_layers + 1:
            yield tuple(walk)
            return
        for u in nbrs[walk[-1]]:
            u = int(u)
            if allowed is None or u in allowed:
                yield from extend(walk + [u])

    for v in starts:
        yield from extend([int(v)])


def walk_relevance_oracle(model, graph: CellGraph, walk: Sequence[int], config: LrpConfig = LrpConfig(),
                          cache: dict | None = None) -> float:
    """Relevance of one walk ``(v_0, ..., v_L)``, ``v_0`` at the input and ``v_L`` at the readout."""
    _require_classifier(model)
    n_layers = model.config.n_layers
    walk = [int(v) for v in walk]
    if len(walk) != n_layers + 1:
        raise LrpError(f"walk must visit {n_layers + 1} nodes")
    n = graph.n_nodes
    if any(v < 0 or v >= n for v in walk):
        raise LrpError("walk leaves the graph")
    dense = graph.adjacency.to_dense()
    for a, b in zip(walk, walk[1:]):
        if a != b and dense[a, b] == 0:
            raise LrpError(f"invalid walk: nodes {a} and {b} are not adjacent")
    cache = cache if cache is not None else forward_cache(model, graph)
    masks = []
    for v in walk:
        m = np.zeros(n, dtype=bool)
        m[v] = True
        masks.append(m)
    target = resolve_target(cache, config)
    return float(_backward(model, cache, config, target, graph.adjacency, masks=masks).sum())


def naive_node_relevance(model, graph: CellGraph, config: LrpConfig = LrpConfig(),
                         cache: dict | None = None) -> np.ndarray:
    """Per-cell relevance by exhaustive walk enumeration (exponential in depth)."""
    cache = cache if cache is not None else forward_cache(model, graph)
    out = np.zeros(graph.n_nodes)
    for walk in enumerate_walks(graph.adjacency, model.config.n_layers):
        out[walk[0]] += walk_relevance_oracle(model, graph, walk, config, cache)
    return out


def naive_subgraph_relevance(model, graph: CellGraph, nodes: Iterable[int], config: LrpConfig = LrpConfig(),
                             cache: dict | None = None) -> float:
    cache = cache if cache is not None else forward_cache(model, graph)
    return float(sum(walk_relevance_oracle(model, graph, w, config, cache)
                     for w in enumerate_walks(graph.adjacency, model.config.n_layers, within=nodes)))


# -- masked-adjacency subgraph relevance ----------------------------------------

def subgraph_relevance(model, graph: CellGraph, nodes: Iterable[int], config: LrpConfig = LrpConfig(),
                       cache: dict | None = None) -> float:
    """Total relevance of all walks confined to ``nodes``.

    Only the rows of ``nodes`` and the induced sparse adjacency are touched,
    so the cost is linear in depth and quadratic at worst in ``|nodes|``.
    """
    _require_classifier(model)
    S = np.unique(np.fromiter((int(v) for v in nodes), dtype=np.int64))
    if len(S) == 0:
        return 0.0
    cache = cache if cache is not None else forward_cache(model, graph)
    model._check(cache)
    target = resolve_target(cache, config)
    A_S = graph.adjacency.submatrix(S)
    R = readout_relevance(model, cache, target, config, rows=S)
    for i, gin in reversed(list(enumerate(model.gin_layers()))):
        lc = cache["layers"][i]
        R_M = _mlp_relevance(lc, gin.w1, gin.w2, R, config, rows=S)
        R = _aggregate_relevance(A_S, gin.eps, lc["X"][S], lc["M"][S], R_M, config)
    return math.fsum(R.sum(axis=1))


def tile_relevances(model, graph: CellGraph, labels: np.ndarray, config: LrpConfig = LrpConfig(),
                    cache: dict | None = None) -> np.ndarray:
    """Subgraph relevance of every group in a node partition in one pass.

    ``labels`` assigns each node a group id in ``[0, G)``. Masking the
    adjacency to within-group edges makes it block diagonal, so one backward
    pass yields each group's relevance as the sum over its members.
    Group sums are exactly rounded, so a single group reproduces
    ``subgraph_relevance`` of the full graph bit for bit.
    """
    _require_classifier(model)
    labels = np.asarray(labels, dtype=np.int64)
    cache = cache if cache is not None else forward_cache(model, graph)
    model._check(cache)
    target = resolve_target(cache, config)
    blocks = graph.adjacency.mask_blocks(labels)
    per_node = _backward(model, cache, config, target, blocks).sum(axis=1)
    n_groups = int(labels.max()) + 1 if len(labels) else 0
    order = np.argsort(labels, kind="stable")
    cuts = np.cumsum(np.bincount(labels, minlength=n_groups))[:-1]
    return np.array([math.fsum(seg) for seg in np.split(per_node[order], cuts)])
