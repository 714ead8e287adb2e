"""Marginal and pairwise projections of factored transport tensors.

The transport tensor of an entropy-regularized multi-marginal problem
factors as ``M = K .* (u_0 x u_1 x ... )``.  For the supported cost
topologies its single and pairwise marginalizations collapse to short
sequences of kernel-vector products:

* chains: prefix/suffix sweeps, T kernel applies per projection;
* stars: Hadamard products of leaf applies, J applies per projection;
* star chains: chain sweeps over the per-time aggregates
  ``p_t = u_(t,0) .* prod_j Kleaf u_(t,j)``.

``brute_force_project`` materializes the full tensor and is the test
oracle; it is guarded to small instances.
"""

from __future__ import annotations

import numpy as np

from .graphs import (CentralGraph, CostGraph, ScalingState, SequentialGraph,
                     StarChainGraph, tensor_size)

BRUTE_FORCE_GUARD = 10**7


# ---------------------------------------------------------------------------
# chain building blocks
# ---------------------------------------------------------------------------

def _chain_prefixes(kernels, vectors) -> list[np.ndarray]:
    """alpha[t] = (v_0^T K_1 diag(v_1) ... diag(v_{t-1}) K_t)^T, alpha[0] = 1."""
    alpha = [np.ones_like(vectors[0])]
    for t, K in enumerate(kernels):
        alpha.append(K.apply(vectors[t] * alpha[t], transpose=True))
    return alpha

def _chain_suffixes(kernels, vectors) -> list[np.ndarray]:
    """beta[t] = K_{t+1} diag(v_{t+1}) ... K_T v_T, beta[T] = 1."""
    T = len(kernels)
    beta = [None] * (T + 1)
    beta[T] = np.ones_like(vectors[T])
    for t in range(T - 1, -1, -1):
        beta[t] = kernels[t].apply(vectors[t + 1] * beta[t + 1])
    return beta

def _chain_middle(kernels, vectors, t1: int, t2: int) -> np.ndarray:
    """Dense matrix K_{t1+1} diag(v_{t1+1}) ... diag(v_{t2-1}) K_{t2}."""
    mid = kernels[t1].dense()
    for s in range(t1 + 1, t2):
        mid = (mid * vectors[s][None, :]) @ kernels[s].dense()
    return mid


def _star_leaf_products(graph: CentralGraph, u: ScalingState) -> list[np.ndarray]:
    return [graph.leaf_kernels[j - 1].apply(u[j]) for j in range(1, graph.leaves + 1)]

def _hadamard_excluding(vectors, skip) -> np.ndarray:
    """Entrywise product of all vectors except the skipped position(s)."""
    skipped = {skip} if isinstance(skip, int) else set(skip)
    out = None
    for i, v in enumerate(vectors):
        if i in skipped:
            continue
        out = v.copy() if out is None else out * v
    return out if out is not None else np.ones_like(vectors[0])


def _star_chain_p(graph: StarChainGraph, u: ScalingState):
    """q[t][j] = Kleaf u_(t,j+1)  and  p[t] = u_(t,0) .* prod_j q[t][j]."""
    q, p = [], []
    for t in range(graph.steps + 1):
        qt = [graph.leaf_kernel.apply(u[(t, j)]) for j in range(1, graph.leaves + 1)]
        pt = u[(t, 0)].copy()
        for v in qt:
            pt *= v
        q.append(qt)
        p.append(pt)
    return q, p


# ---------------------------------------------------------------------------
# single-marginal projections
# ---------------------------------------------------------------------------

def project_marginal(graph: CostGraph, u: ScalingState, idx) -> np.ndarray:
    """Marginalization of ``K .* U`` onto one index, via kernel applies only."""
    if isinstance(graph, SequentialGraph):
        t = _check_index(graph, idx)
        alpha = _chain_prefixes(graph.kernels[:t], [u[s] for s in range(t)] + [u[t]])[t]
        beta = _chain_suffixes(graph.kernels[t:], [u[s] for s in range(t, graph.steps + 1)])[0]
        return alpha * u[t] * beta
    if isinstance(graph, CentralGraph):
        j = _check_index(graph, idx)
        g = _star_leaf_products(graph, u)
        if j == 0:
            out = u[0].copy()
            for v in g:
                out *= v
            return out
        core = u[0] * _hadamard_excluding(g, j - 1)
        return u[j] * graph.leaf_kernels[j - 1].apply(core, transpose=True)
    if isinstance(graph, StarChainGraph):
        t, j = _check_index(graph, idx)
        q, p = _star_chain_p(graph, u)
        alpha = _chain_prefixes(graph.chain_kernels[:t], p[: t + 1])[t]
        beta = _chain_suffixes(graph.chain_kernels[t:], p[t:])[0]
        if j == 0:
            return alpha * p[t] * beta
        core = alpha * (u[(t, 0)] * _hadamard_excluding(q[t], j - 1)) * beta
        return u[(t, j)] * graph.leaf_kernel.apply(core, transpose=True)
    raise TypeError(f"unsupported graph type {type(graph).__name__}")


def _check_index(graph, idx):
    graph.marginal_size(idx)
    return idx


# ---------------------------------------------------------------------------
# pairwise projections
# ---------------------------------------------------------------------------

def project_pair(graph: CostGraph, u: ScalingState, idx1, idx2) -> np.ndarray:
    """Bi-marginal coupling matrix: rows follow idx1, columns follow idx2.

    Row sums equal ``project_marginal(idx1)`` and column sums equal
    ``project_marginal(idx2)``.  For star chains the supported pairs are
    central/central, and central/leaf or leaf/leaf at equal times; other
    pairs are not implemented.
    """
    if idx1 == idx2:
        raise ValueError("pair projection needs two distinct indices")
    if isinstance(graph, SequentialGraph):
        t1, t2 = _check_index(graph, idx1), _check_index(graph, idx2)
        if t1 > t2:
            return project_pair(graph, u, idx2, idx1).T
        vectors = [u[s] for s in range(graph.steps + 1)]
        alpha = _chain_prefixes(graph.kernels[:t1], vectors[: t1 + 1])[t1]
        beta = _chain_suffixes(graph.kernels[t2:], vectors[t2:])[0]
        mid = _chain_middle(graph.kernels, vectors, t1, t2)
        return (alpha * u[t1])[:, None] * mid * (u[t2] * beta)[None, :]
    if isinstance(graph, CentralGraph):
        j1, j2 = _check_index(graph, idx1), _check_index(graph, idx2)
        if j1 > j2 and j2 == 0:
            return project_pair(graph, u, idx2, idx1).T
        g = _star_leaf_products(graph, u)
        if j1 == 0:
            core = u[0] * _hadamard_excluding(g, j2 - 1)
            return core[:, None] * graph.leaf_kernels[j2 - 1].dense() * u[j2][None, :]
        core = u[0] * _hadamard_excluding(g, j1 - 1) / g[j2 - 1]
        K1 = graph.leaf_kernels[j1 - 1].dense()
        K2 = graph.leaf_kernels[j2 - 1].dense()
        return u[j1][:, None] * (K1.T * core[None, :]) @ K2 * u[j2][None, :]
    if isinstance(graph, StarChainGraph):
        return _star_chain_pair(graph, u, idx1, idx2)
    raise TypeError(f"unsupported graph type {type(graph).__name__}")


def _star_chain_pair(graph: StarChainGraph, u, idx1, idx2) -> np.ndarray:
    (t1, j1), (t2, j2) = _check_index(graph, idx1), _check_index(graph, idx2)
    q, p = _star_chain_p(graph, u)
    if j1 == 0 and j2 == 0:
        if t1 > t2:
            return _star_chain_pair(graph, u, idx2, idx1).T
        alpha = _chain_prefixes(graph.chain_kernels[:t1], p[: t1 + 1])[t1]
        beta = _chain_suffixes(graph.chain_kernels[t2:], p[t2:])[0]
        mid = _chain_middle(graph.chain_kernels, p, t1, t2)
        return (alpha * p[t1])[:, None] * mid * (p[t2] * beta)[None, :]
    if t1 != t2:
        raise ValueError(
            f"unsupported star-chain pair {idx1}, {idx2}: leaf pairs are only "
            "available at equal times")
    t = t1
    alpha = _chain_prefixes(graph.chain_kernels[:t], p[: t + 1])[t]
    beta = _chain_suffixes(graph.chain_kernels[t:], p[t:])[0]
    env = alpha * beta
    Kl = graph.leaf_kernel
    if j1 == 0:
        core = env * u[(t, 0)] * _hadamard_excluding(q[t], j2 - 1)
        return core[:, None] * Kl.dense() * u[(t, j2)][None, :]
    if j2 == 0:
        return _star_chain_pair(graph, u, idx2, idx1).T
    core = env * u[(t, 0)] * _hadamard_excluding(q[t], {j1 - 1, j2 - 1})
    Kd = Kl.dense()
    return u[(t, j1)][:, None] * (Kd.T * core[None, :]) @ Kd * u[(t, j2)][None, :]


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def _materialize(graph: CostGraph, u: ScalingState) -> tuple[np.ndarray, list]:
    """Full tensor ``K .* U`` with axes in marginal-index order."""
    if tensor_size(graph) > BRUTE_FORCE_GUARD:
        raise ValueError(
            f"tensor has {tensor_size(graph):.3g} entries, refusing to "
            f"materialize more than {BRUTE_FORCE_GUARD:.0g}")
    indices = graph.marginal_indices()
    sizes = [graph.marginal_size(i) for i in indices]
    pos = {idx: a for a, idx in enumerate(indices)}
    nd = len(sizes)

    def edge(K, a1, a2):
        shape = [1] * nd
        shape[a1], shape[a2] = K.shape
        return K.dense().reshape(shape)

    M = np.ones(sizes)
    if isinstance(graph, SequentialGraph):
        for t, K in enumerate(graph.kernels, start=1):
            M = M * edge(K, pos[t - 1], pos[t])
    elif isinstance(graph, CentralGraph):
        for j, K in enumerate(graph.leaf_kernels, start=1):
            M = M * edge(K, pos[0], pos[j])
    elif isinstance(graph, StarChainGraph):
        for t, K in enumerate(graph.chain_kernels, start=1):
            M = M * edge(K, pos[(t - 1, 0)], pos[(t, 0)])
        for t in range(graph.steps + 1):
            for j in range(1, graph.leaves + 1):
                M = M * edge(graph.leaf_kernel, pos[(t, 0)], pos[(t, j)])
    else:
        raise TypeError(f"unsupported graph type {type(graph).__name__}")
    for idx in indices:
        shape = [1] * nd
        shape[pos[idx]] = sizes[pos[idx]]
        M = M * u[idx].reshape(shape)
    return M, indices


def brute_force_project(graph: CostGraph, u: ScalingState, idx, idx2=None) -> np.ndarray:
    """Projection by explicit tensor summation (test oracle only)."""
    M, indices = _materialize(graph, u)
    pos = {index: a for a, index in enumerate(indices)}
    if idx2 is None:
        keep = (pos[idx],)
    else:
        keep = (pos[idx], pos[idx2])
    summed = tuple(a for a in range(M.ndim) if a not in keep)
    out = M.sum(axis=summed)
    if idx2 is not None and pos[idx] > pos[idx2]:
        out = out.T
    return out
