"""Block-coordinate dual ascent for transport with measured marginals.

Here the marginals of the transport tensor are not prescribed: each
constrained marginal is observed through a linear map ``G``, as
``G P_t(M) = r + delta`` with the perturbation ``delta`` penalized by
``gamma |delta|^2``.  The dual problem is finite-dimensional, one vector
``lambda_t`` per constrained marginal, with

    objective(lambda) = -eps <K, U> - sum_t |lambda_t|^2 / (4 gamma_t)
                        + sum_t lambda_t' r_t,
    u_t = exp(G_t' lambda_t / eps).

Each block update maximizes the objective exactly in one ``lambda_t`` by
solving the stationarity condition

    G (v .* exp(G' lambda / eps)) + lambda / (2 gamma) - r = 0,
    v = P_t(K .* U) ./ u_t,

with a damped Newton method; the Jacobian is symmetric positive definite.
When ``G`` is the identity, the root is available elementwise through the
Wright omega function, and with ``gamma = inf`` the update collapses to a
plain Sinkhorn rescaling.  Unconstrained marginals keep ``u_t = 1`` and are
skipped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import wrightomega

from .graphs import CostGraph, ScalingState
from .projections import project_marginal
from .sinkhorn import SolveReport, _graph_epsilon, sweep_cursor

logger = logging.getLogger(__name__)

U_CLAMP = (1e-300, 1e300)


@dataclass
class MeasurementConstraint:
    """One marginal's linear observation: ``G phi = r`` up to a penalized error.

    ``G=None`` stands for the identity map (full information).  ``gamma``
    is the perturbation penalty weight; ``inf`` enforces the measurement
    exactly.  Marginals without a constraint are simply omitted from the
    constraint mapping.
    """

    G: np.ndarray | None
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=float)
            if self.G.ndim != 2 or self.G.shape[0] != self.r.shape[0]:
                raise ValueError(
                    f"G has shape {self.G.shape}, measurement has {self.r.shape}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive (or inf), got {self.gamma}")

    def m(self) -> int:
        return self.r.shape[0]

    def is_identity(self, n: int) -> bool:
        if self.G is None:
            return self.r.shape[0] == n
        return self.G.shape == (n, n) and np.array_equal(self.G, np.eye(n))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x if self.G is None else self.G @ x

    def apply_t(self, y: np.ndarray) -> np.ndarray:
        return y if self.G is None else self.G.T @ y


DualState = dict


def scaling_from_duals(constraint: MeasurementConstraint | None, lam, epsilon: float,
                       n: int) -> np.ndarray:
    """u = exp(G' lambda / eps); all-ones for an unconstrained marginal."""
    if constraint is None or lam is None:
        return np.ones(n)
    with np.errstate(over="ignore"):
        u = np.exp(constraint.apply_t(np.asarray(lam, dtype=float)) / epsilon)
    return u


def dual_objective(graph: CostGraph, constraints: dict, lam: DualState,
                   epsilon: float | None = None) -> float:
    """Dual objective value at the given multipliers."""
    eps = _graph_epsilon(graph) if epsilon is None else epsilon
    indices = graph.marginal_indices()
    u = {idx: scaling_from_duals(constraints.get(idx), lam.get(idx), eps,
                                 graph.marginal_size(idx))
         for idx in indices}
    mass = float(project_marginal(graph, u, indices[0]).sum())
    out = -eps * mass
    for idx, c in constraints.items():
        lt = np.asarray(lam.get(idx, np.zeros(c.m())), dtype=float)
        if np.isfinite(c.gamma):
            out -= float(lt @ lt) / (4.0 * c.gamma)
        out += float(lt @ c.r)
    return out


def block_residual(v: np.ndarray, u: np.ndarray, constraint: MeasurementConstraint,
                   lam: np.ndarray) -> np.ndarray:
    """Stationarity residual ``G(v .* u) + lambda/(2 gamma) - r``.

    This is the negated gradient of the dual objective in this block.
    """
    out = constraint.apply(v * u) - constraint.r
    if np.isfinite(constraint.gamma):
        out = out + lam / (2.0 * constraint.gamma)
    return out


def block_jacobian(v: np.ndarray, u: np.ndarray, constraint: MeasurementConstraint,
                   epsilon: float) -> np.ndarray:
    """Jacobian of the residual: ``(1/eps) G diag(v .* u) G' + I/(2 gamma)``."""
    w = v * u
    if constraint.G is None:
        J = np.diag(w / epsilon)
    else:
        J = (constraint.G * w[None, :]) @ constraint.G.T / epsilon
    if np.isfinite(constraint.gamma):
        J = J + np.eye(constraint.m()) / (2.0 * constraint.gamma)
    return J


def newton_block_update(constraint: MeasurementConstraint, v: np.ndarray,
                        lam: np.ndarray, inner_tol: float = 1e-9,
                        max_newton: int = 50, *, epsilon: float
                        ) -> tuple[np.ndarray, int, bool]:
    """Solve one block's stationarity condition by damped Newton.

    Returns ``(lambda, steps, converged)``.  Steps counts accepted Newton
    updates, so starting at the root reports zero.  Each linear solve uses
    the Cholesky factorization of the SPD Jacobian; step lengths are halved
    (at most 40 times) until the residual 2-norm decreases.
    """
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float).copy()
    if np.any(v < 0) or not np.any(v > 0):
        raise ValueError("v must be nonnegative and not identically zero")
    u = scaling_from_duals(constraint, lam, epsilon, v.shape[0])
    f = block_residual(v, u, constraint, lam)
    steps = 0
    for _ in range(max_newton):
        if np.max(np.abs(f)) <= inner_tol:
            return lam, steps, True
        J = block_jacobian(v, u, constraint, epsilon)
        try:
            cho = sla.cho_factor(J)
            d = -sla.cho_solve(cho, f)
        except np.linalg.LinAlgError as err:  # pragma: no cover - fatal path
            raise RuntimeError(f"Newton Jacobian solve failed: {err}") from err
        norm0 = float(np.linalg.norm(f))
        eta = 1.0
        accepted = False
        for _ in range(40):
            lam_try = lam + eta * d
            u_try = scaling_from_duals(constraint, lam_try, epsilon, v.shape[0])
            with np.errstate(invalid="ignore", over="ignore"):
                f_try = block_residual(v, u_try, constraint, lam_try)
            norm_try = float(np.linalg.norm(f_try))
            if np.isfinite(norm_try) and norm_try <= (1.0 - 1e-4 * eta) * norm0:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            return lam, steps, False
        lam, u, f = lam_try, u_try, f_try
        steps += 1
    return lam, steps, bool(np.max(np.abs(f)) <= inner_tol)


def wright_omega_update(v: np.ndarray, r: np.ndarray, gamma: float,
                        epsilon: float) -> np.ndarray:
    """Elementwise root of ``v e^{lambda/eps} + lambda/(2 gamma) = r``.

    This is the identity-observation fast path.  Substituting
    ``s = r - lambda/(2 gamma)`` turns the scalar equation into
    ``(2 gamma s / eps) e^{2 gamma s / eps} = (2 gamma v / eps) e^{2 gamma r / eps}``,
    whose solution is the Wright omega function of
    ``z = log(2 gamma v / eps) + 2 gamma r / eps``; back-substitution in the
    cancellation-free form gives ``lambda = eps (log omega(z) - log(2 gamma v / eps))``.
    With ``gamma = inf`` the penalty vanishes and the root is
    ``eps log(r ./ v)``.
    """
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    if not np.isfinite(gamma):
        if np.any(r <= 0):
            raise ValueError("exact matching (gamma = inf) needs positive measurements")
        return epsilon * np.log(r / v)
    out = np.empty_like(v)
    zero = v <= 0.0
    out[zero] = 2.0 * gamma * r[zero]
    pos = ~zero
    log_a = np.log(2.0 * gamma * v[pos] / epsilon)
    z = log_a + 2.0 * gamma * r[pos] / epsilon
    out[pos] = epsilon * (np.log(wrightomega(z)) - log_a)
    return out


def recover_perturbations(lam: DualState, constraints: dict) -> dict:
    """Optimal measurement perturbations ``delta_t = -lambda_t / (2 gamma_t)``."""
    out = {}
    for idx, c in constraints.items():
        lt = np.asarray(lam.get(idx, np.zeros(c.m())), dtype=float)
        out[idx] = np.zeros(c.m()) if not np.isfinite(c.gamma) else -lt / (2.0 * c.gamma)
    return out


def solution_marginals(graph: CostGraph, u: ScalingState) -> dict:
    """Marginals of the converged plan, one vector per index."""
    return {idx: project_marginal(graph, u, idx) for idx in graph.marginal_indices()}


def solve(graph: CostGraph, constraints: dict, epsilon: float | None = None,
          outer_tol: float = 1e-8, max_sweeps: int = 10_000,
          inner_tol: float = 1e-10, max_newton: int = 50,
          ) -> tuple[DualState, ScalingState, SolveReport]:
    """Cyclic block-coordinate ascent on the measurement-constrained dual.

    Sweeps the graph's marginal indices in order, skipping unconstrained
    ones, and maximizes the dual objective exactly in each visited block.
    Convergence is declared when the scale-normalized sup-norm change of
    every multiplier over a sweep drops below ``outer_tol``.  The report
    carries the dual objective after every block update (nondecreasing up
    to inner-solve tolerance), the pre-update constraint residuals, the
    worst Newton step count per sweep, and the residuals of the final state.
    """
    eps = _graph_epsilon(graph) if epsilon is None else float(epsilon)
    indices = graph.marginal_indices()
    if not constraints:
        raise ValueError("at least one marginal must carry a constraint")
    constrained = [idx for idx in indices if idx in constraints]
    for idx in constrained:
        c = constraints[idx]
        n = graph.marginal_size(idx)
        if c.G is None:
            if c.m() != n:
                raise ValueError(
                    f"constraint {idx}: identity observation needs length {n}, "
                    f"got {c.m()}")
        elif c.G.shape[1] != n:
            raise ValueError(
                f"constraint {idx}: G has {c.G.shape[1]} columns, marginal size is {n}")
    identity = {idx: constraints[idx].is_identity(graph.marginal_size(idx))
                for idx in constrained}

    lam = {idx: np.zeros(constraints[idx].m()) for idx in constrained}
    pen = {idx: 0.0 for idx in constrained}
    u = {idx: np.ones(graph.marginal_size(idx)) for idx in indices}
    cursor = sweep_cursor(graph, u)
    report = SolveReport()
    clamped = False

    for sweep in range(1, max_sweeps + 1):
        cursor.begin_sweep()
        max_change = 0.0
        max_resid = 0.0
        max_steps = 0
        for idx in indices:
            if idx not in constraints:
                cursor.advance(idx, None)
                continue
            c = constraints[idx]
            proj = cursor.marginal(idx)
            v = proj / u[idx]
            lam_old = lam[idx]
            max_resid = max(max_resid, float(np.max(np.abs(
                block_residual(v, u[idx], c, lam_old)))))
            if identity[idx] and not np.isfinite(c.gamma):
                u_new = c.r / v
                lam_new = eps * np.log(u_new)
                steps = 0
            elif identity[idx]:
                lam_new = wright_omega_update(v, c.r, c.gamma, eps)
                u_new = np.exp(lam_new / eps)
                steps = 0
            else:
                lam_new, steps, ok = newton_block_update(
                    c, v, lam_old, inner_tol, max_newton, epsilon=eps)
                if not ok:
                    report.message = (f"inner Newton stalled at marginal {idx} "
                                      f"in sweep {sweep}")
                u_new = scaling_from_duals(c, lam_new, eps, v.shape[0])
            if np.any(u_new < U_CLAMP[0]) or np.any(u_new > U_CLAMP[1]):
                u_new = np.clip(u_new, *U_CLAMP)
                if not clamped:
                    clamped = True
                    logger.warning(
                        "scaling vector for marginal %s clamped to %s; persistent "
                        "clamping suggests epsilon is too small for the cost scale",
                        idx, U_CLAMP)
            max_steps = max(max_steps, steps)
            scale = max(1.0, float(np.max(np.abs(lam_new))))
            max_change = max(max_change, float(np.max(np.abs(lam_new - lam_old))) / scale)
            lam[idx] = lam_new
            if np.isfinite(c.gamma):
                pen[idx] = float(lam_new @ lam_new) / (4.0 * c.gamma) - float(lam_new @ c.r)
            else:
                pen[idx] = -float(lam_new @ c.r)
            cursor.advance(idx, u_new)
            mass = float((u_new * v).sum())
            report.objective_updates.append(-eps * mass - sum(pen.values()))
        report.iterations = sweep
        report.residual_history.append(max_resid)
        report.objective_history.append(report.objective_updates[-1])
        report.newton_history.append(max_steps)
        if max_change <= outer_tol:
            report.converged = True
            break
    if not report.converged and not report.message:
        report.message = f"no convergence within {max_sweeps} sweeps"
    for idx in constrained:
        proj = project_marginal(graph, u, idx)
        report.final_residuals[idx] = float(np.max(np.abs(
            block_residual(proj / u[idx], u[idx], constraints[idx], lam[idx]))))
    return lam, u, report
