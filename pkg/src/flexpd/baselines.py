"""Reference methods: EXTRA and the (centralized) method of multipliers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import AlgorithmState, dual_step
from .graph import Graph, Network, consensus_matrix
from .objective import ObjectiveSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtraConfig:
    W: np.ndarray
    W_tilde: np.ndarray
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not np.allclose(self.W, self.W.T) or not np.allclose(self.W.sum(axis=1), 1.0):
            raise ValueError("W must be symmetric and doubly stochastic")
        if np.linalg.eigvalsh(0.5 * (self.W_tilde + self.W_tilde.T))[0] <= 0:
            raise ValueError("W_tilde must be positive definite")

    @classmethod
    def from_graph(cls, g: Graph, alpha: float) -> "ExtraConfig":
        W = consensus_matrix(g)
        return cls(W, 0.5 * (np.eye(g.n) + W), alpha)


def extra_step(state: AlgorithmState, cfg: ExtraConfig, obj: ObjectiveSet) -> AlgorithmState:
    """One EXTRA iteration.

    The first call takes ``x1 = W x0 - a grad f(x0)``; later calls take
    ``x+ = (I + W) x - W~ x_prev - a (grad f(x) - grad f(x_prev))``. The
    previous iterate and gradient ride along in ``state.extra``.
    """
    x = state.x
    g = obj.grad(x)
    if "x_prev" not in state.extra:
        x_new = cfg.W @ x - cfg.alpha * g
    else:
        x_new = (x + cfg.W @ x) - cfg.W_tilde @ state.extra["x_prev"] \
            - cfg.alpha * (g - state.extra["g_prev"])
    nxt = state.advanced(x_new, state.lam, grads=obj.n, comms=1)
    return replace(nxt, extra={"x_prev": x, "g_prev": g})


@dataclass(frozen=True)
class MmConfig:
    beta: float = 1.0
    inner_tol: float = 1e-10
    inner_max: int = 100_000

    def __post_init__(self):
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")


def augmented_lagrangian_grad(x, lam, net: Network, obj: ObjectiveSet):
    return obj.grad(x) + net.A.T @ lam + net.B @ x


def mm_step(state: AlgorithmState, net: Network, obj: ObjectiveSet, cfg: MmConfig) -> AlgorithmState:
    """Minimize the augmented Lagrangian in ``x`` (gradient descent, warm
    started at ``x^k``) and take a dual ascent step.

    The inner loop stops once ``|grad L_a| <= inner_tol * scale`` with
    ``scale = max(1, |grad f(x^k)|, |A' lam|)``, so the tolerance stays
    reachable in floating point when gradients are large. Hitting
    ``inner_max`` logs a warning and keeps the last iterate.
    """
    m, L = obj.constants()
    step = 2.0 / (m + L + net.rho_B)
    x = state.x
    dual_force = net.A.T @ state.lam
    g = obj.grad(x) + dual_force + net.B @ x
    scale = max(1.0, float(np.linalg.norm(g - dual_force - net.B @ x)),
                float(np.linalg.norm(dual_force)))
    tol = cfg.inner_tol * scale
    evals = 1
    while np.linalg.norm(g) > tol:
        if evals > cfg.inner_max:
            log.warning("MM inner solve stopped at inner_max=%d (|grad|=%.3g)",
                        cfg.inner_max, np.linalg.norm(g))
            break
        x = x - step * g
        g = augmented_lagrangian_grad(x, state.lam, net, obj)
        evals += 1
    lam = dual_step(state.lam, x, net.A, cfg.beta)
    nxt = state.advanced(x, lam, grads=evals * obj.n, comms=evals)
    return replace(nxt, extra={"inner_iters": evals - 1})
