"""Survival losses and ranking metrics."""

from __future__ import annotations

import numpy as np


class UninformativeBatchError(ValueError):
    """A Cox batch without any observed event."""


def cox_loss(risks, times, events, return_grad: bool = False):
    """Mean negative Cox partial log-likelihood over events.

    Risk sets are ``{j : t_j >= t_i}`` within the given batch; tied event
    times use the naive risk set (no Breslow/Efron correction).
    """
    r = np.asarray(risks, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    if not (r.shape == t.shape == e.shape):
        raise ValueError("risks, times and events must have equal length")
    n_events = int(e.sum())
    if n_events == 0:
        raise UninformativeBatchError("uninformative batch: no events")
    ev = np.flatnonzero(e)
    at_risk = t[None, :] >= t[ev, None]                      # (events, n)
    diff = np.where(at_risk, r[None, :] - r[ev, None], -np.inf)
    mx = diff.max(axis=1, keepdims=True)                     # >= 0, i is in its own risk set
    w = np.exp(diff - mx)
    s = w.sum(axis=1, keepdims=True)
    loss = float(np.sum(mx[:, 0] + np.log(s[:, 0])) / n_events)
    if not return_grad:
        return loss
    p = w / s
    grad = p.sum(axis=0)
    grad[ev] -= 1.0
    return loss, grad / n_events


def cross_entropy(logits, label: int):
    """Softmax cross-entropy and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    logp = z - m - np.log(np.exp(z - m).sum())
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def softmax_probs(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def concordance_index(risks, times, events) -> float:
    """Harrell's C.

    Ordered pairs ``(i, j)`` with ``t_i < t_j`` and an event at ``i`` are
    comparable; pairs with tied times never are. Concordant means
    ``risk_i > risk_j``; risk ties earn half credit.
    """
    r = np.asarray(risks, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    if not (r.shape == t.shape == e.shape):
        raise ValueError("risks, times and events must have equal length")
    comparable = e[:, None] & (t[:, None] < t[None, :])
    n_comp = int(comparable.sum())
    if n_comp == 0:
        raise ValueError("undefined C-index: no comparable pairs")
    gt = int((comparable & (r[:, None] > r[None, :])).sum())
    eq = int((comparable & (r[:, None] == r[None, :])).sum())
    return (gt + 0.5 * eq) / n_comp


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; positives are ``labels == 1``, ties count half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    pos, neg = s[y], s[~y]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUROC needs both classes present")
    # sorted-merge counting keeps this exact and O(n log n)
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    upto = np.searchsorted(neg_sorted, pos, side="right")
    wins = int(below.sum())
    ties = int((upto - below).sum())
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def stage_baseline_risk(stage_groups) -> np.ndarray:
    """Clinical baseline: late stage scores 1, early stage 0."""
    return np.array([1.0 if str(getattr(s, "value", s)) == "late" else 0.0 for s in stage_groups])
