"""Sinkhorn scaling solvers for fully observed marginals.

Both solvers iterate the classical scaling fixed point: the transport plan
is ``K .* (u_0 x ... x u_T)`` and each update rescales one factor so that
its marginal constraint holds exactly.  A sweep cursor keeps the chain
prefix/suffix products incrementally up to date so a full sweep of a
T-step chain costs O(T) kernel applies instead of O(T^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .graphs import (CentralGraph, CostGraph, ScalingState, SequentialGraph,
                     StarChainGraph, check_scaling, tensor_size)
from .kernels import KernelOperator
from .projections import (_chain_suffixes, _hadamard_excluding, project_marginal)


@dataclass
class SolveReport:
    """Per-run diagnostics shared by all iterative solvers."""

    converged: bool = False
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    newton_history: list[int] = field(default_factory=list)
    objective_updates: list[float] = field(default_factory=list)
    final_residuals: dict = field(default_factory=dict)
    message: str = ""


# ---------------------------------------------------------------------------
# sweep cursors: incremental projections along the cyclic update order
# ---------------------------------------------------------------------------

class SweepCursor:
    """Serves marginal projections while a solver sweeps the marginals in order.

    Usage per sweep: ``begin_sweep()``, then for each index in
    ``graph.marginal_indices()`` call ``marginal(idx)`` and then
    ``advance(idx, new_u)`` (``new_u=None`` keeps the current vector).
    Projections are exact for the current scaling state at every step.
    """

    def __init__(self, graph: CostGraph, u: ScalingState):
        self.graph = graph
        self.u = u

    def begin_sweep(self):  # pragma: no cover - interface
        raise NotImplementedError

    def marginal(self, idx) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def advance(self, idx, new_u=None):  # pragma: no cover - interface
        raise NotImplementedError


class _SequentialCursor(SweepCursor):
    def begin_sweep(self):
        g = self.graph
        vecs = [self.u[t] for t in range(g.steps + 1)]
        self._beta = _chain_suffixes(g.kernels, vecs)
        self._alpha = np.ones_like(vecs[0])
        self._pos = 0

    def marginal(self, idx):
        assert idx == self._pos, "sequential cursor must be read in sweep order"
        return self._alpha * self.u[idx] * self._beta[idx]

    def advance(self, idx, new_u=None):
        assert idx == self._pos
        if new_u is not None:
            self.u[idx] = new_u
        if idx < self.graph.steps:
            self._alpha = self.graph.kernels[idx].apply(self.u[idx] * self._alpha,
                                                        transpose=True)
        self._pos += 1


class _CentralCursor(SweepCursor):
    def begin_sweep(self):
        g = self.graph
        self._g = [g.leaf_kernels[j - 1].apply(self.u[j]) for j in range(1, g.leaves + 1)]

    def marginal(self, idx):
        if idx == 0:
            out = self.u[0].copy()
            for v in self._g:
                out *= v
            return out
        core = self.u[0] * _hadamard_excluding(self._g, idx - 1)
        return self.u[idx] * self.graph.leaf_kernels[idx - 1].apply(core, transpose=True)

    def advance(self, idx, new_u=None):
        if new_u is not None:
            self.u[idx] = new_u
            if idx >= 1:
                self._g[idx - 1] = self.graph.leaf_kernels[idx - 1].apply(new_u)


class _StarChainCursor(SweepCursor):
    def begin_sweep(self):
        g = self.graph
        self._q = [[g.leaf_kernel.apply(self.u[(t, j)]) for j in range(1, g.leaves + 1)]
                   for t in range(g.steps + 1)]
        self._p = [self._recompute_p(t) for t in range(g.steps + 1)]
        self._beta = _chain_suffixes(g.chain_kernels, self._p)
        self._alpha = np.ones_like(self._p[0])
        self._pos_t = 0

    def _recompute_p(self, t):
        pt = self.u[(t, 0)].copy()
        for v in self._q[t]:
            pt *= v
        return pt

    def marginal(self, idx):
        t, j = idx
        assert t == self._pos_t, "star-chain cursor must be read in sweep order"
        env = self._alpha * self._beta[t]
        if j == 0:
            return env * self._p[t]
        core = env * self.u[(t, 0)] * _hadamard_excluding(self._q[t], j - 1)
        return self.u[idx] * self.graph.leaf_kernel.apply(core, transpose=True)

    def advance(self, idx, new_u=None):
        t, j = idx
        assert t == self._pos_t
        if new_u is not None:
            self.u[idx] = new_u
            if j >= 1:
                self._q[t][j - 1] = self.graph.leaf_kernel.apply(new_u)
            self._p[t] = self._recompute_p(t)
        if j == self.graph.leaves and t < self.graph.steps:
            self._alpha = self.graph.chain_kernels[t].apply(self._p[t] * self._alpha,
                                                            transpose=True)
            self._pos_t += 1


def sweep_cursor(graph: CostGraph, u: ScalingState) -> SweepCursor:
    if isinstance(graph, SequentialGraph):
        return _SequentialCursor(graph, u)
    if isinstance(graph, CentralGraph):
        return _CentralCursor(graph, u)
    if isinstance(graph, StarChainGraph):
        return _StarChainCursor(graph, u)
    raise TypeError(f"unsupported graph type {type(graph).__name__}")


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------

def entropy(M) -> float:
    """Normalized negative entropy ``sum(m log m - m + 1)`` (0 log 0 := 0)."""
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise ValueError("entropy is only defined for nonnegative entries")
    return float(np.sum(xlogy(M, M) - M) + M.size)


def factored_entropy(graph: CostGraph, u: ScalingState) -> float:
    """Entropy of the factored plan ``K .* U`` without materializing it."""
    indices = graph.marginal_indices()
    projections = {idx: project_marginal(graph, u, idx) for idx in indices}
    mass = float(projections[indices[0]].sum())
    eps = _graph_epsilon(graph)
    shift = _total_shift(graph)
    cost = transport_cost(graph, u)
    out = -(cost - shift * mass) / eps - mass + tensor_size(graph)
    for idx in indices:
        out += float(np.log(u[idx]) @ projections[idx])
    return out


def _graph_epsilon(graph: CostGraph) -> float:
    if isinstance(graph, SequentialGraph):
        return graph.kernels[0].epsilon
    if isinstance(graph, CentralGraph):
        return graph.leaf_kernels[0].epsilon
    return graph.chain_kernels[0].epsilon


def _total_shift(graph: CostGraph) -> float:
    if isinstance(graph, SequentialGraph):
        return sum(K.shift for K in graph.kernels)
    if isinstance(graph, CentralGraph):
        return sum(K.shift for K in graph.leaf_kernels)
    return (sum(K.shift for K in graph.chain_kernels)
            + graph.leaf_kernel.shift * (graph.steps + 1) * graph.leaves)


def transport_cost(graph: CostGraph, u: ScalingState) -> float:
    """Total cost ``<C, K .* U>``, summed edge by edge without the tensor."""
    if isinstance(graph, SequentialGraph):
        vecs = [u[t] for t in range(graph.steps + 1)]
        beta = _chain_suffixes(graph.kernels, vecs)
        alpha = np.ones_like(vecs[0])
        total = 0.0
        for t, K in enumerate(graph.kernels):
            left = alpha * vecs[t]
            total += float(left @ K.cost_weighted_apply(vecs[t + 1] * beta[t + 1]))
            alpha = K.apply(left, transpose=True)
        return total
    if isinstance(graph, CentralGraph):
        g = [graph.leaf_kernels[j - 1].apply(u[j]) for j in range(1, graph.leaves + 1)]
        total = 0.0
        for j in range(1, graph.leaves + 1):
            left = u[0] * _hadamard_excluding(g, j - 1)
            total += float(left @ graph.leaf_kernels[j - 1].cost_weighted_apply(u[j]))
        return total
    if isinstance(graph, StarChainGraph):
        q = [[graph.leaf_kernel.apply(u[(t, j)]) for j in range(1, graph.leaves + 1)]
             for t in range(graph.steps + 1)]
        p = []
        for t in range(graph.steps + 1):
            pt = u[(t, 0)].copy()
            for v in q[t]:
                pt *= v
            p.append(pt)
        beta = _chain_suffixes(graph.chain_kernels, p)
        alpha = np.ones_like(p[0])
        total = 0.0
        for t in range(graph.steps + 1):
            env = alpha * beta[t]
            for j in range(1, graph.leaves + 1):
                left = env * u[(t, 0)] * _hadamard_excluding(q[t], j - 1)
                total += float(left @ graph.leaf_kernel.cost_weighted_apply(u[(t, j)]))
            if t < graph.steps:
                total += float((alpha * p[t]) @ graph.chain_kernels[t]
                               .cost_weighted_apply(p[t + 1] * beta[t + 1]))
                alpha = graph.chain_kernels[t].apply(p[t] * alpha, transpose=True)
        return total
    raise TypeError(f"unsupported graph type {type(graph).__name__}")


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _rel_inf(x: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(x - ref)) / np.max(np.abs(ref)))


def _check_masses(vectors: list[np.ndarray], rel: float = 1e-9):
    masses = [float(v.sum()) for v in vectors]
    m0 = masses[0]
    for k, m in enumerate(masses[1:], start=1):
        if abs(m - m0) > rel * max(abs(m), abs(m0)):
            raise ValueError(
                f"marginals must have equal total mass: marginal 0 has {m0!r}, "
                f"marginal {k} has {m!r}")


def sinkhorn_bimarginal(K: KernelOperator, phi0, phi1, tol: float = 1e-9,
                        max_iter: int = 10_000) -> tuple[ScalingState, SolveReport]:
    """Classical two-marginal Sinkhorn iterations.

    Alternates ``u0 = phi0 ./ (K u1)`` and ``u1 = phi1 ./ (K^T u0)`` until
    both marginal residuals drop below ``tol`` (relative sup norm).  The
    plan is ``diag(u0) K diag(u1)``.
    """
    phi0 = np.asarray(phi0, dtype=float)
    phi1 = np.asarray(phi1, dtype=float)
    if np.any(phi0 <= 0) or np.any(phi1 <= 0):
        raise ValueError("marginals must be strictly positive")
    _check_masses([phi0, phi1])
    mass = float(phi0.sum())
    eps = K.epsilon
    u = {0: np.ones_like(phi0), 1: np.ones_like(phi1)}
    report = SolveReport()
    for sweep in range(1, max_iter + 1):
        u[0] = phi0 / K.apply(u[1])
        col = u[1] * K.apply(u[0], transpose=True)
        res_col = _rel_inf(col, phi1)
        u[1] = phi1 / K.apply(u[0], transpose=True)
        row = u[0] * K.apply(u[1])
        res_row = _rel_inf(row, phi0)
        report.iterations = sweep
        report.residual_history.append(max(res_row, res_col))
        report.objective_history.append(
            eps * (float(np.log(u[0]) @ phi0) + float(np.log(u[1]) @ phi1) - mass))
        if report.residual_history[-1] <= tol:
            report.converged = True
            break
    if not report.converged:
        report.message = f"no convergence within {max_iter} iterations"
    report.final_residuals = {0: res_row, 1: _rel_inf(u[1] * K.apply(u[0], transpose=True), phi1)}
    return u, report


def bimarginal_plan(K: KernelOperator, u: ScalingState) -> np.ndarray:
    """Dense plan ``diag(u0) K diag(u1)``."""
    return u[0][:, None] * K.dense() * u[1][None, :]


def sinkhorn_multimarginal(graph: CostGraph, marginals: dict, tol: float = 1e-9,
                           max_iter: int = 10_000) -> tuple[ScalingState, SolveReport]:
    """Cyclic multi-marginal Sinkhorn iterations.

    Sweeps the marginal indices in graph order; each update rescales one
    factor so its marginal constraint holds exactly.  Residuals are
    measured once per sweep as the worst pre-update relative sup-norm
    violation, and verified on the final state.
    """
    indices = graph.marginal_indices()
    phis = {}
    for idx in indices:
        if idx not in marginals:
            raise ValueError(f"missing marginal {idx}")
        phi = np.asarray(marginals[idx], dtype=float)
        if np.any(phi <= 0):
            raise ValueError(f"marginal {idx} must be strictly positive")
        phis[idx] = phi
    _check_masses([phis[idx] for idx in indices])
    mass = float(phis[indices[0]].sum())
    eps = _graph_epsilon(graph)
    u = {idx: np.ones_like(phis[idx]) for idx in indices}
    check_scaling(graph, u)
    cursor = sweep_cursor(graph, u)
    report = SolveReport()
    for sweep in range(1, max_iter + 1):
        cursor.begin_sweep()
        worst = 0.0
        for idx in indices:
            proj = cursor.marginal(idx)
            worst = max(worst, _rel_inf(proj, phis[idx]))
            v = proj / u[idx]
            cursor.advance(idx, phis[idx] / v)
        report.iterations = sweep
        report.residual_history.append(worst)
        report.objective_history.append(
            eps * (sum(float(np.log(u[idx]) @ phis[idx]) for idx in indices) - mass))
        if worst <= tol:
            report.converged = True
            break
    report.final_residuals = {
        idx: _rel_inf(project_marginal(graph, u, idx), phis[idx]) for idx in indices}
    if not report.converged:
        report.message = f"no convergence within {max_iter} sweeps"
    return u, report
