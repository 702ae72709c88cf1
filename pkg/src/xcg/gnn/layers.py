"""Layer primitives with cached forward passes and reverse-mode gradients.

Every ``*_forward`` returns its output plus a cache dict; the matching
``*_backward`` consumes that cache and an upstream gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, spmm


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class GinLayer:
    """GIN update ``relu(relu(((1 + eps) X + A X) W1 + b1) W2 + b2)``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    eps: float = 0.0

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def aggregate(adjacency: SparseMatrix, X: np.ndarray, eps: float) -> np.ndarray:
    return (1.0 + eps) * X + spmm(adjacency, X)


def gin_forward(layer: GinLayer, adjacency: SparseMatrix, X: np.ndarray):
    if X.shape[1] != layer.in_dim:
        raise ValueError(f"GIN expects {layer.in_dim} input features, got {X.shape[1]}")
    if adjacency.n_rows != X.shape[0]:
        raise ValueError("adjacency and feature rows disagree")
    M = aggregate(adjacency, X, layer.eps)
    Z1 = M @ layer.w1 + layer.b1
    A1 = relu(Z1)
    Z2 = A1 @ layer.w2 + layer.b2
    H = relu(Z2)
    return H, {"X": X, "M": M, "Z1": Z1, "A1": A1, "Z2": Z2, "H": H}


def gin_backward(layer: GinLayer, adjacency: SparseMatrix, cache: dict, dH: np.ndarray):
    dZ2 = dH * (cache["Z2"] > 0)
    grads = {"w2": cache["A1"].T @ dZ2, "b2": dZ2.sum(axis=0)}
    dZ1 = (dZ2 @ layer.w2.T) * (cache["Z1"] > 0)
    grads["w1"] = cache["M"].T @ dZ1
    grads["b1"] = dZ1.sum(axis=0)
    dM = dZ1 @ layer.w1.T
    dX = (1.0 + layer.eps) * dM + spmm(adjacency.T, dM)
    return dX, grads


def topk_count(n: int, ratio: float) -> int:
    # round guards against 0.3 * 10 == 3.0000000000000004
    return max(1, math.ceil(round(ratio * n, 9)))


def topk_pool(p: np.ndarray, ratio: float, X: np.ndarray, adjacency: SparseMatrix):
    """Keep the ``ceil(ratio * n)`` highest-scoring nodes, gated by ``tanh(score)``.

    Returns ``(X_kept, adjacency_kept, kept_indices, cache)``; kept indices are
    in ascending node order and score ties go to the lower index.
    """
    n = X.shape[0]
    if n < 1:
        raise ValueError("top-k pooling needs at least one node")
    norm = float(np.linalg.norm(p))
    # a zero projection scores every node 0: the first k nodes survive with gate 0
    y = X @ p / norm if norm > 0 else np.zeros(n)
    k = topk_count(n, ratio)
    order = np.argsort(-y, kind="stable")
    kept = np.sort(order[:k])
    gate = np.tanh(y[kept])
    X_kept = X[kept] * gate[:, None]
    cache = {"X": X, "y": y, "kept": kept, "gate": gate, "norm": norm}
    return X_kept, adjacency.submatrix(kept), kept, cache


def topk_backward(p: np.ndarray, cache: dict, dX_kept: np.ndarray):
    X, kept, gate, norm = cache["X"], cache["kept"], cache["gate"], cache["norm"]
    Xk = X[kept]
    p_hat = p / norm if norm > 0 else np.zeros_like(p)
    dX = np.zeros_like(X)
    dX[kept] += dX_kept * gate[:, None]
    dy = np.sum(dX_kept * Xk, axis=1) * (1.0 - gate ** 2)
    dX[kept] += dy[:, None] * p_hat[None, :]
    dp_hat = Xk.T @ dy
    if norm == 0:
        return dX, np.zeros_like(p)
    dp = (dp_hat - p_hat * (p_hat @ dp_hat)) / norm
    return dX, dp


def mean_max_readout(X: np.ndarray):
    """Concatenated column mean and column max over nodes."""
    arg = np.argmax(X, axis=0)
    out = np.concatenate([X.mean(axis=0), X[arg, np.arange(X.shape[1])]])
    return out, {"n": X.shape[0], "arg": arg, "shape": X.shape}


def mean_max_backward(cache: dict, dout: np.ndarray) -> np.ndarray:
    n, d = cache["shape"]
    dX = np.tile(dout[:d] / n, (n, 1))
    dX[cache["arg"], np.arange(d)] += dout[d:]
    return dX


def softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - np.max(s))
    return e / e.sum()


def attn_mil_forward(V: np.ndarray, w: np.ndarray, H: np.ndarray):
    """Attention pooling over a bag of embeddings ``H`` (K x d)."""
    if H.shape[0] < 1:
        raise ValueError("MIL pooling needs a nonempty bag")
    U = np.tanh(H @ V.T)
    a = softmax(U @ w)
    return a @ H, a, {"H": H, "U": U, "a": a}


def attn_mil_backward(V: np.ndarray, w: np.ndarray, cache: dict, dh: np.ndarray):
    H, U, a = cache["H"], cache["U"], cache["a"]
    dH = np.outer(a, dh)
    da = H @ dh
    ds = a * (da - a @ da)
    dw = U.T @ ds
    dpre = np.outer(ds, w) * (1.0 - U ** 2)
    dV = dpre.T @ H
    dH += dpre @ V
    return dH, dV, dw
