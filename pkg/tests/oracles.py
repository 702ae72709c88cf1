"""Brute-force reference implementations used only by the tests.

They share no code with the package beyond reading model parameters and the
forward activations, so agreement is a genuine second route.
"""

from itertools import product

import numpy as np


def cindex_pairs(risks, times, events) -> float:
    conc = comp = 0.0
    n = len(risks)
    for i in range(n):
        for j in range(n):
            if events[i] and times[i] < times[j]:
                comp += 1
                if risks[i] > risks[j]:
                    conc += 1
                elif risks[i] == risks[j]:
                    conc += 0.5
    return conc / comp


def auroc_pairs(scores, labels) -> float:
    num = den = 0.0
    for i in range(len(scores)):
        for j in range(len(scores)):
            if labels[i] and not labels[j]:
                den += 1
                num += 1.0 if scores[i] > scores[j] else 0.5 if scores[i] == scores[j] else 0.0
    return num / den


def cox_loop(risks, times, events) -> float:
    total, n_ev = 0.0, 0
    for i in range(len(risks)):
        if not events[i]:
            continue
        n_ev += 1
        total += np.log(sum(np.exp(risks[j] - risks[i]) for j in range(len(risks)) if times[j] >= times[i]))
    return total / n_ev


def walks(dense_adj: np.ndarray, length: int, within=None):
    """All node tuples of ``length`` where consecutive nodes are equal or adjacent."""
    n = len(dense_adj)
    nodes = range(n) if within is None else sorted(within)
    for w in product(nodes, repeat=length):
        if all(a == b or dense_adj[a, b] for a, b in zip(w, w[1:])):
            yield w


def _stab(z, eps):
    return z + eps * (1.0 if z >= 0 else -1.0)


def _div(a, b):
    return 0.0 if b == 0 else a / b


def walk_relevance_loops(model, cache, dense_adj, walk, target, gamma, eps_stab) -> float:
    """Relevance of one walk with the gamma rule written as explicit scalar loops.

    Relevance flows only through node ``walk[l]`` at layer ``l`` (``walk[-1]`` at the readout).
    """
    p = model.params
    n_layers = model.config.n_layers
    rho = lambda w: w + gamma * max(w, 0.0)  # noqa: E731
    H = cache["layers"][-1]["H"]
    w_out = p["out.w"][:, target]
    g = H.sum(axis=0)
    z = sum(g[c] * rho(w_out[c]) for c in range(len(g)))
    logit = float(cache["logits"][target])
    v = walk[-1]
    R = np.array([H[v, c] * rho(w_out[c]) * _div(logit, _stab(z, eps_stab)) for c in range(len(g))])
    for layer in reversed(range(n_layers)):
        lc = cache["layers"][layer]
        w1, w2 = p[f"gin{layer}.w1"], p[f"gin{layer}.w2"]
        v = walk[layer + 1]
        a1, m = lc["A1"][v], lc["M"][v]
        # second dense layer
        R_a1 = np.zeros(len(a1))
        for k in range(w2.shape[1]):
            zk = sum(a1[j] * rho(w2[j, k]) for j in range(len(a1)))
            for j in range(len(a1)):
                R_a1[j] += _div(a1[j] * rho(w2[j, k]) * R[k], _stab(zk, eps_stab))
        # first dense layer
        R_m = np.zeros(len(m))
        for k in range(w1.shape[1]):
            zk = sum(m[j] * rho(w1[j, k]) for j in range(len(m)))
            for j in range(len(m)):
                R_m[j] += _div(m[j] * rho(w1[j, k]) * R_a1[k], _stab(zk, eps_stab))
        # aggregation: M[v] = (1+eps) X[v] + sum_u A[v,u] X[u]; only u = walk[layer] receives
        u = walk[layer]
        coef = (1.0 + model.config.eps_gin) if u == v else dense_adj[v, u]
        X = lc["X"]
        R = np.array([_div(X[u, c] * coef * R_m[c], _stab(lc["M"][v, c], eps_stab)) for c in range(len(m))])
    return float(R.sum())


def exhaustive_permutation_p(a, b) -> float:
    """Exact p-value over all distinct group assignments (add-one-free)."""
    from itertools import combinations
    pooled = np.concatenate([a, b])
    obs = abs(np.median(a) - np.median(b))
    n, na = len(pooled), len(a)
    hits = total = 0
    for idx in combinations(range(n), na):
        mask = np.zeros(n, bool)
        mask[list(idx)] = True
        total += 1
        if abs(np.median(pooled[mask]) - np.median(pooled[~mask])) >= obs - 1e-12:
            hits += 1
    return hits / total


def central_difference(f, params: dict, h: float = 1e-4) -> dict:
    out = {}
    for name, v in params.items():
        g = np.zeros_like(v)
        flat = v.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            gf[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic: dict, numeric: dict, floor: float = 1e-7) -> tuple[float, str]:
    worst, where = 0.0, ""
    for name in analytic:
        a, b = analytic[name], numeric[name]
        rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        if rel.max() > worst:
            worst, where = float(rel.max()), name
    return worst, where


def activation_signature(cache) -> bytes:
    """Fingerprint of every piecewise choice in a forward cache (ReLU signs, top-k sets, argmaxes)."""
    parts = []

    def walk(obj):
        if isinstance(obj, dict):
            for key in sorted(obj, key=str):
                val = obj[key]
                if key in ("Z1", "Z2", "z1") and isinstance(val, np.ndarray):
                    parts.append((val > 0).tobytes())
                elif key in ("kept", "arg") and isinstance(val, np.ndarray):
                    parts.append(val.tobytes())
                elif key != "model":
                    walk(val)
        elif isinstance(obj, (list, tuple)):
            for v in obj:
                walk(v)
    walk(cache)
    return b"|".join(parts)


def kink_crossings(signature, params: dict, h: float = 1e-4) -> int:
    """Number of coordinates whose +-h probes change the piecewise pattern."""
    base = signature()
    count = 0
    for v in params.values():
        flat = v.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = signature()
            flat[i] = old - h
            down = signature()
            flat[i] = old
            count += (up != base) or (down != base)
    return count
