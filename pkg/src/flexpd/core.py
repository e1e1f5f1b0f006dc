"""FlexPD primal-dual iterations, derived matrices, residuals and the run loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Network
from .objective import ObjectiveSet

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
INCREASE_PATIENCE = 10
VARIANTS = ("F", "G", "C")


class DivergenceError(RuntimeError):
    """Iterate became non-finite or exceeded the divergence threshold."""


class ConfigurationError(ValueError):
    """Stepsizes or penalty matrix violate a variant's preconditions."""


@dataclass
class AlgorithmState:
    x: np.ndarray
    lam: np.ndarray
    k: int = 0
    grad_evals: int = 0
    comm_rounds: int = 0
    # previous primal iterate and gradient, used by EXTRA only
    extra: dict = field(default_factory=dict, repr=False)

    @classmethod
    def initial(cls, net: Network, x0: np.ndarray) -> "AlgorithmState":
        x0 = np.array(x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0.reshape(-1, 1)
        return cls(x=x0, lam=np.zeros((net.num_edges, x0.shape[1])))

    def advanced(self, x, lam, grads: int, comms: int) -> "AlgorithmState":
        # np.maximum propagates nan, so one comparison catches nan, inf and blow-up
        size = np.abs(x).max()
        if lam.size:
            size = np.maximum(size, np.abs(lam).max())
        if not size <= DIVERGENCE_NORM:
            kind = "non-finite iterate" if not np.isfinite(size) else f"iterate magnitude {size:.3g}"
            raise DivergenceError(f"{kind} after iteration {self.k + 1}")
        return AlgorithmState(x, lam, self.k + 1, self.grad_evals + grads,
                              self.comm_rounds + comms, self.extra)


@dataclass(frozen=True)
class Stepsizes:
    """Plain stepsize triple; certificates expose the same attributes."""

    alpha: float
    beta: float
    T: int = 1
    variant: str | None = None


def _check_steps(alpha, beta, T):
    if T < 1 or int(T) != T:
        raise ConfigurationError("T must be a positive integer")
    if not alpha > 0 or not beta >= 0:
        raise ConfigurationError("need alpha > 0 and beta >= 0")


def dual_step(lam: np.ndarray, x_new: np.ndarray, A: np.ndarray, beta: float) -> np.ndarray:
    """Gradient ascent on the multipliers: ``lam + beta * A x``."""
    return lam + beta * (A @ x_new)


def flexpd_f_step(state: AlgorithmState, net: Network, obj: ObjectiveSet,
                  alpha: float, beta: float, T: int) -> AlgorithmState:
    """T primal steps with fresh gradients and fresh neighbor values."""
    _check_steps(alpha, beta, T)
    x, B = state.x, net.B
    Atl = net.A.T @ state.lam
    for _ in range(T):
        x = x - alpha * (obj.grad(x) + Atl + B @ x)
    lam = dual_step(state.lam, x, net.A, beta)
    return state.advanced(x, lam, grads=T * obj.n, comms=T)


def flexpd_g_step(state: AlgorithmState, net: Network, obj: ObjectiveSet,
                  alpha: float, beta: float, T: int) -> AlgorithmState:
    """T primal steps with fresh gradients; the penalty term uses ``x^k``."""
    _check_steps(alpha, beta, T)
    m, _ = obj.constants()
    if not net.rho_B < m:
        raise ConfigurationError(
            f"FlexPD-G needs rho(B) < m (rho(B)={net.rho_B:.4g}, m={m:.4g}); "
            "rescale B by a positive factor")
    x = state.x
    Atl = net.A.T @ state.lam
    Bxk = net.B @ x
    for _ in range(T):
        x = x - alpha * (obj.grad(x) + Atl + Bxk)
    lam = dual_step(state.lam, x, net.A, beta)
    return state.advanced(x, lam, grads=T * obj.n, comms=1)


@dataclass(frozen=True)
class DerivedMatrices:
    U: np.ndarray
    C: np.ndarray
    M: np.ndarray
    N: np.ndarray
    UT: np.ndarray  # U**T
    alpha: float
    T: int


def derived_matrices(net: Network, alpha: float, T: int, check: bool = True) -> DerivedMatrices:
    """``U = I - aB``, ``C = sum_{t<T} U^t``, ``M = C^{-1} U^T``,
    ``N = (C^{-1} - M) / a``.

    ``N`` is evaluated as ``C^{-1} B C`` (from ``I - U^T = a B C``), which
    avoids the cancellation in ``C^{-1} - M`` when ``a`` is tiny.

    Requires ``alpha < 1/rho(B)``; with ``check`` the eigenvalue bounds
    ``(1-a rho)^T / sum_t (1-a rho)^t <= eig(M) <= 1/T`` and ``N >= 0`` are
    verified.
    """
    _check_steps(alpha, 0.0, T)
    if net.rho_B > 0 and not alpha * net.rho_B < 1.0:
        raise ConfigurationError(f"alpha={alpha:.4g} must be below 1/rho(B)={1 / net.rho_B:.4g}")
    n = net.n
    U = np.eye(n) - alpha * net.B
    C = np.zeros((n, n))
    power = np.eye(n)
    for _ in range(T):
        C += power
        power = power @ U
    C = 0.5 * (C + C.T)
    UT = 0.5 * (power + power.T)
    Cinv = np.linalg.inv(C)
    Cinv = 0.5 * (Cinv + Cinv.T)
    M = Cinv @ UT
    M = 0.5 * (M + M.T)
    N = Cinv @ (net.B @ C)
    N = 0.5 * (N + N.T)
    dm = DerivedMatrices(U, C, M, N, UT, alpha, T)
    if check:
        lo, hi = m_eigen_bounds(alpha, net.rho_B, T)
        eM = np.linalg.eigvalsh(M)
        eN = np.linalg.eigvalsh(N)
        if eM[0] < lo - 1e-10 or eM[-1] > hi + 1e-10 or eN[0] < -1e-10 * max(1.0, eN[-1]):
            raise RuntimeError("derived matrices violate their eigenvalue bounds")
    return dm


def m_eigen_bounds(alpha: float, rho_B: float, T: int) -> tuple[float, float]:
    mu = 1.0 - alpha * rho_B
    return mu ** T / sum(mu ** t for t in range(T)), 1.0 / T


def flexpd_c_step(state: AlgorithmState, net: Network, obj: ObjectiveSet,
                  alpha: float, beta: float, T: int, form: str = "sweep",
                  derived: DerivedMatrices | None = None) -> AlgorithmState:
    """T primal steps reusing ``grad f(x^k)`` with fresh neighbor values.

    ``form="compact"`` applies ``U^T x - a C (grad f(x) + A' lam)`` in one
    shot using (cached) derived matrices.
    """
    _check_steps(alpha, beta, T)
    if net.rho_B > 0 and not alpha * net.rho_B < 1.0:
        raise ConfigurationError("FlexPD-C needs alpha < 1/rho(B)")
    x = state.x
    g = obj.grad(x)
    Atl = net.A.T @ state.lam
    if form == "sweep":
        B = net.B
        for _ in range(T):
            x = x - alpha * (g + Atl + B @ x)
    elif form == "compact":
        if derived is None or derived.alpha != alpha or derived.T != T:
            derived = derived_matrices(net, alpha, T, check=False)
        x = derived.UT @ x - alpha * (derived.C @ (g + Atl))
    else:
        raise ValueError(f"unknown form {form!r}")
    lam = dual_step(state.lam, x, net.A, beta)
    return state.advanced(x, lam, grads=obj.n, comms=T)


STEPS = {"F": flexpd_f_step, "G": flexpd_g_step, "C": flexpd_c_step}


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    feasibility: float
    penalty_null: float

    def max(self) -> float:
        return max(self.stationarity, self.feasibility, self.penalty_null)


def kkt_residual(state: AlgorithmState, net: Network, obj: ObjectiveSet) -> KKTResidual:
    return KKTResidual(
        stationarity=float(np.linalg.norm(obj.grad(state.x) + net.A.T @ state.lam)),
        feasibility=float(np.linalg.norm(net.A @ state.x)),
        penalty_null=float(np.linalg.norm(net.B @ state.x)),
    )


def lyapunov_weight(variant: str, net: Network, alpha: float, T: int = 1,
                    derived: DerivedMatrices | None = None) -> np.ndarray:
    """Primal weight matrix of the variant's Lyapunov function.

    ``U`` for F, ``(1 + a rho(B)) I`` for G, ``M`` for C and ``I`` for the
    baselines.
    """
    if variant == "F":
        return np.eye(net.n) - alpha * net.B
    if variant == "G":
        return (1.0 + alpha * net.rho_B) * np.eye(net.n)
    if variant == "C":
        if derived is None or derived.alpha != alpha or derived.T != T:
            derived = derived_matrices(net, alpha, T, check=False)
        return derived.M
    return np.eye(net.n)


def lyapunov(state: AlgorithmState, ref, W: np.ndarray, alpha: float, beta: float) -> float:
    """``||x - x*||_W^2 + (alpha/beta) ||lam - lam*||^2``."""
    x_star, lam_star = ref
    dx = state.x - x_star
    dl = state.lam - lam_star
    return float(np.sum(dx * (W @ dx)) + alpha / beta * np.sum(dl * dl))


def reference_solution(net: Network, obj: ObjectiveSet, tol: float = 1e-12,
                       max_iters: int = 1_000_000, method: str = "auto"):
    """Optimal ``(x*, lam*)`` from a centralized solve.

    ``x*`` replicates the minimizer of ``sum_i f_i``, found by gradient
    descent (or in closed form for quadratics under ``method="auto"``).
    ``lam*`` is the minimum-norm solution of ``A' lam = -grad f(x*)``, which
    lies in the column space of ``A``.
    """
    n, p = obj.n, obj.p
    if method == "auto" and hasattr(obj, "consensus_optimum"):
        xt = np.asarray(obj.consensus_optimum(), dtype=float)
    else:
        mu, ell = obj.sum_bounds()
        step = 2.0 / (mu + ell)
        xt = np.zeros(p)
        for _ in range(max_iters):
            G = obj.grad(np.tile(xt, (n, 1)))
            g = G.sum(axis=0)
            if np.linalg.norm(g) <= tol * max(1.0, np.abs(G).sum()):
                break
            xt = xt - step * g
        else:
            log.warning("reference solve hit max_iters=%d", max_iters)
    x_star = np.tile(xt, (n, 1))
    g = obj.grad(x_star)
    lam_star = np.linalg.lstsq(net.A.T, -g, rcond=None)[0]
    return x_star, lam_star


# ---------------------------------------------------------------------------
# run loop

TRACE_COLUMNS = ("k", "rel_error", "lyapunov", "grad_evals", "comm_rounds", "kkt_stat", "kkt_feas")


@dataclass(frozen=True)
class StopRule:
    """Stop once the relative error (or, without a reference, the largest
    KKT residual) drops below ``tol``, or after ``max_iters`` iterations."""

    tol: float = 0.01
    max_iters: int = 10_000


@dataclass
class RunTrace:
    metadata: dict
    rows: list = field(default_factory=list)
    status: str = "max_iters"
    message: str = ""
    final_state: AlgorithmState | None = field(default=None, repr=False)

    columns = TRACE_COLUMNS

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    @property
    def final(self) -> tuple:
        return self.rows[-1]

    def first_below(self, eps: float):
        """First row whose relative error is below ``eps`` (or None)."""
        for r in self.rows:
            if r[1] < eps:
                return r
        return None

    def iterations_to(self, eps: float):
        r = self.first_below(eps)
        return None if r is None else r[0]


def _run_step(variant, state, net, obj, steps, derived, cfg):
    if variant == "F":
        return flexpd_f_step(state, net, obj, steps.alpha, steps.beta, steps.T)
    if variant == "G":
        return flexpd_g_step(state, net, obj, steps.alpha, steps.beta, steps.T)
    if variant == "C":
        return flexpd_c_step(state, net, obj, steps.alpha, steps.beta, steps.T,
                             form="compact", derived=derived)
    from . import baselines
    if variant == "EXTRA":
        return baselines.extra_step(state, cfg, obj)
    if variant == "MM":
        return baselines.mm_step(state, net, obj, cfg)
    raise ValueError(f"unknown variant {variant!r}")


def solve(variant: str, net: Network, obj: ObjectiveSet, steps, x0=None,
          stop: StopRule = StopRule(), ref=None, certified: bool = False,
          record: bool = True, metadata: dict | None = None, baseline_cfg=None) -> RunTrace:
    """Iterate ``variant`` from ``(x0, 0)`` until ``stop``.

    ``steps`` carries ``alpha``, ``beta`` and ``T`` (a certificate or a
    :class:`Stepsizes`). With ``record=False`` only the first and last rows
    are kept. When ``certified`` is set, ten consecutive Lyapunov increases
    end the run with status ``invariant_violation``; a divergent iterate
    ends it with status ``diverged``.
    """
    if variant in VARIANTS and certified and not getattr(steps, "admissible", True):
        raise ConfigurationError("certificate is not admissible for this network/objective")
    if x0 is None:
        x0 = np.zeros((obj.n, obj.p))
    state = AlgorithmState.initial(net, x0)
    derived = None
    if variant == "C":
        derived = derived_matrices(net, steps.alpha, steps.T, check=certified)
    cfg = baseline_cfg
    if variant == "EXTRA" and cfg is None:
        from .baselines import ExtraConfig
        cfg = ExtraConfig.from_graph(net.graph, steps.alpha)
    if variant == "MM" and cfg is None:
        from .baselines import MmConfig
        cfg = MmConfig(beta=steps.beta)
    alpha = getattr(steps, "alpha", 1.0)
    beta = getattr(steps, "beta", 1.0) or 1.0
    W = lyapunov_weight(variant, net, alpha, getattr(steps, "T", 1), derived)
    dual_w = alpha if variant in VARIANTS else 1.0

    if ref is not None:
        x_star = ref[0]
        if variant == "EXTRA":
            # EXTRA carries no multipliers, so its Lyapunov value is primal only
            ref = (x_star, np.zeros_like(state.lam))
        denom = float(np.linalg.norm(state.x - x_star))

    def row(st, full):
        if ref is not None:
            dx = (st.x - x_star).ravel()
            err = math.sqrt(dx @ dx) / denom if denom > 0 else 0.0
            lyap = lyapunov(st, ref, W, dual_w, beta) if full or certified else float("nan")
        else:
            err = lyap = float("nan")
        if full or ref is None:
            kkt = kkt_residual(st, net, obj)
            ks, kf = kkt.stationarity, kkt.feasibility
        else:
            ks = kf = float("nan")
        return (st.k, err, lyap, st.grad_evals, st.comm_rounds, ks, kf)

    def converged(r):
        if ref is not None:
            return r[1] < stop.tol
        return max(r[5], r[6]) < stop.tol

    meta = dict(metadata or {})
    meta.setdefault("variant", variant)
    for key in ("alpha", "beta", "T"):
        if hasattr(steps, key):
            meta.setdefault(key, getattr(steps, key))
    trace = RunTrace(meta)
    current = row(state, True)
    trace.rows.append(current)
    if converged(current):
        trace.status = "converged"
        trace.final_state = state
        return trace
    increases = 0
    for _ in range(stop.max_iters):
        try:
            state = _run_step(variant, state, net, obj, steps, derived, cfg)
        except DivergenceError as exc:
            trace.status, trace.message = "diverged", str(exc)
            break
        prev = current
        current = row(state, record)
        if record:
            trace.rows.append(current)
        if certified and current[2] > prev[2]:
            increases += 1
            if increases >= INCREASE_PATIENCE:
                trace.status = "invariant_violation"
                trace.message = f"Lyapunov value increased {increases} times in a row at k={state.k}"
                break
        else:
            increases = 0
        if converged(current):
            trace.status = "converged"
            break
    if not record and trace.rows[-1][0] != state.k:
        trace.rows.append(row(state, True))
    elif record and trace.rows[-1][0] == state.k and np.isnan(trace.rows[-1][5]):
        trace.rows[-1] = row(state, True)
    trace.final_state = state
    return trace
