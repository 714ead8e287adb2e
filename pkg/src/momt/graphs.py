"""Decoupling structures of multi-marginal transport cost tensors.

The full cost tensor of a multi-marginal problem is never materialized.
Instead each supported topology stores the small per-edge cost/kernel
matrices it decouples into:

* ``SequentialGraph`` - a chain; marginal t couples to t-1 and t+1
  (tracking over time).
* ``CentralGraph`` - a star; one central marginal couples to J leaves
  (barycenter / sensor fusion).
* ``StarChainGraph`` - a chain of stars; central nodes (t, 0) form a chain
  in time and each carries J leaves (t, j) (barycenter tracking).

Marginal indices are ints for the first two and (t, j) pairs for the star
chain.  Scaling states are plain dicts mapping marginal index to a strictly
positive vector of that marginal's size.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .kernels import KernelOperator

ScalingState = dict[Any, np.ndarray]


def _check_kernel(K: KernelOperator, name: str) -> None:
    if not isinstance(K, KernelOperator):
        raise TypeError(f"{name} must be a KernelOperator")
    if K.min_entry() <= 0:
        raise ValueError(f"{name} has nonpositive entries")


class SequentialGraph:
    """Chain cost: the tensor cost is a sum of per-step pair costs.

            C[i_0, ..., i_T] = sum_t C_t[i_{t-1}, i_t]

    Parameters
    ----------
    kernels : KernelOperator or list of KernelOperator
        One kernel per step (edge t joins marginals t-1 and t); a single
        operator is shared across all steps.
    steps : int, optional
        Number of steps T.  Required when a single shared kernel is given.
    """

    def __init__(self, kernels, steps: int | None = None):
        if isinstance(kernels, KernelOperator):
            if steps is None:
                raise ValueError("steps is required with a shared kernel")
            kernels = [kernels] * int(steps)
        kernels = list(kernels)
        if steps is not None and steps != len(kernels):
            raise ValueError(f"got {len(kernels)} kernels for {steps} steps")
        if not kernels:
            raise ValueError("need at least one step")
        for t, K in enumerate(kernels):
            _check_kernel(K, f"kernel {t}")
            if t > 0 and kernels[t - 1].shape[1] != K.shape[0]:
                raise ValueError(
                    f"kernel {t} rows ({K.shape[0]}) must match kernel {t-1} "
                    f"columns ({kernels[t-1].shape[1]})")
        self.kernels = kernels
        self.steps = len(kernels)

    def marginal_indices(self) -> list[int]:
        return list(range(self.steps + 1))

    def marginal_size(self, idx: int) -> int:
        if not 0 <= idx <= self.steps:
            raise IndexError(f"marginal index {idx} out of range 0..{self.steps}")
        return self.kernels[0].shape[0] if idx == 0 else self.kernels[idx - 1].shape[1]


class CentralGraph:
    """Star cost: every leaf couples to the single central marginal 0.

        C[i_0, i_1, ..., i_J] = sum_j w_j C[i_0, i_j]

    Parameters
    ----------
    kernel : KernelOperator
        Kernel of the leaf cost, from the central grid to the leaf grid.
    leaves : int
        Number of leaves J.
    weights : sequence of float, optional
        Per-leaf cost weights w_j; entrywise kernel powers implement them.
    """

    def __init__(self, kernel: KernelOperator, leaves: int, weights=None):
        _check_kernel(kernel, "leaf kernel")
        if leaves < 1:
            raise ValueError("need at least one leaf")
        if weights is None:
            self.leaf_kernels = [kernel] * leaves
        else:
            weights = [float(w) for w in weights]
            if len(weights) != leaves:
                raise ValueError(f"got {len(weights)} weights for {leaves} leaves")
            self.leaf_kernels = [kernel.elementwise_power(w) if w != 1.0 else kernel
                                 for w in weights]
        self.leaves = leaves

    def marginal_indices(self) -> list[int]:
        return list(range(self.leaves + 1))

    def marginal_size(self, idx: int) -> int:
        if not 0 <= idx <= self.leaves:
            raise IndexError(f"marginal index {idx} out of range 0..{self.leaves}")
        return self.leaf_kernels[0].shape[0] if idx == 0 else self.leaf_kernels[idx - 1].shape[1]


class StarChainGraph:
    """Chain of stars: central nodes form a chain, each with J leaves.

        C = sum_t C[i_{(t-1,0)}, i_{(t,0)}]
            + sum_t sum_j Ct[i_{(t,0)}, i_{(t,j)}]

    Marginal indices are pairs (t, j) with t in 0..T and j in 0..J; j = 0
    is the central node at time t.  The leaf kernel is shared across times
    and leaves and must already include the leaf-cost weight ``alpha``
    (i.e. it is built from the cost ``alpha * C_leaf``); ``alpha`` is kept
    for bookkeeping.
    """

    def __init__(self, chain_kernels, steps: int, leaves: int,
                 leaf_kernel: KernelOperator, alpha: float = 1.0):
        if isinstance(chain_kernels, KernelOperator):
            chain_kernels = [chain_kernels] * int(steps)
        chain_kernels = list(chain_kernels)
        if len(chain_kernels) != steps:
            raise ValueError(f"got {len(chain_kernels)} chain kernels for {steps} steps")
        if steps < 1 or leaves < 1:
            raise ValueError("need steps >= 1 and leaves >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        n = chain_kernels[0].shape[0]
        for t, K in enumerate(chain_kernels):
            _check_kernel(K, f"chain kernel {t}")
            if K.shape != (n, n):
                raise ValueError("chain kernels must be square and share the central size")
        _check_kernel(leaf_kernel, "leaf kernel")
        if leaf_kernel.shape[0] != n:
            raise ValueError(
                f"leaf kernel rows ({leaf_kernel.shape[0]}) must match the "
                f"central size ({n})")
        self.chain_kernels = chain_kernels
        self.leaf_kernel = leaf_kernel
        self.steps = int(steps)
        self.leaves = int(leaves)
        self.alpha = float(alpha)

    def marginal_indices(self) -> list[tuple[int, int]]:
        return [(t, j) for t in range(self.steps + 1) for j in range(self.leaves + 1)]

    def marginal_size(self, idx) -> int:
        t, j = idx
        if not (0 <= t <= self.steps and 0 <= j <= self.leaves):
            raise IndexError(f"marginal index {idx} out of range")
        return self.leaf_kernel.shape[0] if j == 0 else self.leaf_kernel.shape[1]


CostGraph = SequentialGraph | CentralGraph | StarChainGraph


def unit_scaling(graph: CostGraph) -> ScalingState:
    """All-ones scaling vectors (the standard initialization)."""
    return {idx: np.ones(graph.marginal_size(idx)) for idx in graph.marginal_indices()}


def check_scaling(graph: CostGraph, u: ScalingState) -> None:
    """Validate a scaling state against its graph."""
    for idx in graph.marginal_indices():
        if idx not in u:
            raise ValueError(f"scaling state is missing marginal {idx}")
        v = u[idx]
        if v.shape != (graph.marginal_size(idx),):
            raise ValueError(
                f"scaling vector {idx} has shape {v.shape}, expected "
                f"({graph.marginal_size(idx)},)")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError(f"scaling vector {idx} must be strictly positive and finite")


def tensor_size(graph: CostGraph) -> float:
    """Number of entries of the (never materialized) transport tensor."""
    out = 1.0
    for idx in graph.marginal_indices():
        out *= graph.marginal_size(idx)
    return out
