"""Theoretically admissible stepsizes and contraction constants.

Each ``certify_*`` function returns a :class:`StepsizeCertificate` whose
``violations()`` re-evaluates the linear-convergence conditions from the
recorded constants. Open inequalities are realized as a fraction of the
bound. By default the penalty is tied to the dual stepsize (``B = beta A'A``)
so ``rho(B) = beta * rho(A'A)``; pass ``tied=False`` to certify the
network's own ``B``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import ConfigurationError, StopRule, Stepsizes, solve
from .graph import Network, spectral_constants
from .objective import ObjectiveSet

DEFAULT_FRAC = 0.9
DELTA_SHARE = 0.5
ALPHA_GRID = np.logspace(0.0, -16.0, 321)[1:]


@dataclass
class StepsizeCertificate:
    variant: str
    alpha: float
    beta: float
    T: int
    m: float
    L: float
    rho_AtA: float
    s_AAt: float
    rho_B: float
    tied: bool
    eta: dict = field(default_factory=dict)
    delta: float | None = None
    delta_tilde: float | None = None
    gamma: float | None = None
    gamma_params: dict = field(default_factory=dict)
    rate: float | None = None
    rho_D: float = 0.0  # spectral radius of beta A'A - B
    bounds_used: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return not self.violations()

    def network(self, net: Network) -> Network:
        """The network the certificate applies to (``B = beta A'A`` when tied)."""
        return net.scaled(self.beta) if self.tied else net

    def violations(self) -> list[str]:
        """Convergence conditions of the variant that fail."""
        return _VIOLATIONS[self.variant](self)

    def to_text(self) -> str:
        """Human-readable ``key = value`` block."""
        lines = [
            f"variant = {self.variant}",
            f"alpha = {self.alpha!r}",
            f"beta = {self.beta!r}",
            f"T = {self.T}",
            f"m = {self.m!r}",
            f"L = {self.L!r}",
            f"rho_AtA = {self.rho_AtA!r}",
            f"s_AAt = {self.s_AAt!r}",
            f"rho_B = {self.rho_B!r}",
            f"tied_penalty = {self.tied}",
        ]
        lines += [f"{k} = {v!r}" for k, v in self.eta.items()]
        for key in ("delta", "delta_tilde", "gamma", "rate"):
            val = getattr(self, key)
            if val is not None:
                lines.append(f"{key} = {val!r}")
        lines += [f"gamma_{k} = {v!r}" for k, v in self.gamma_params.items()]
        lines += [f"bound.{k} = {v!r}" for k, v in self.bounds_used.items()]
        lines.append(f"admissible = {self.admissible}")
        lines += [f"note = {n}" for n in self.notes]
        return "\n".join(lines)


def _constants(net: Network, obj: ObjectiveSet):
    m, L = obj.constants()
    return m, L, net.rho_AtA, net.s_AAt


def _rho_B(net: Network, beta: float, tied: bool) -> float:
    return beta * net.rho_AtA if tied else net.rho_B


def _rho_D(net: Network, beta: float, tied: bool) -> float:
    if tied:
        return 0.0
    ev = spectral_constants(beta * (net.A.T @ net.A) - net.B).eigenvalues
    return float(max(abs(ev[0]), abs(ev[-1])))


def _crossing(dec, inc, lo=-25.0, hi=40.0):
    """Maximize ``min(dec(x), inc(x))`` over ``x = 1 + exp(u)`` where ``dec``
    decreases and ``inc`` increases in ``x``. Returns ``(x, value)``."""
    def h(u):
        x = 1.0 + math.exp(u)
        return dec(x) - inc(x)
    if h(lo) <= 0:
        u = lo
    elif h(hi) >= 0:
        u = hi
    else:
        u = brentq(h, lo, hi, xtol=1e-12)
    x = 1.0 + math.exp(u)
    return x, min(dec(x), inc(x))


def _minmax(inc, dec, lo=-25.0, hi=40.0):
    """Minimize ``max(inc(x), dec(x))`` over ``x = 1 + exp(u)``."""
    x, _ = _crossing(dec, inc, lo, hi)
    return x, max(inc(x), dec(x))


# ---------------------------------------------------------------------------
# FlexPD-C


def c_alpha_bound(L: float, eta4: float, rho_B: float, T: int) -> float:
    """``(1 - (L^2 / (L^2 + eta4 rho(B)))^(1/T)) / rho(B)``."""
    q = L * L / (L * L + eta4 * rho_B)
    return -math.expm1(math.log(q) / T) / rho_B


def certify_c(net: Network, obj: ObjectiveSet, T: int, eta4: float | None = None,
              beta_frac: float = DEFAULT_FRAC, alpha_frac: float = DEFAULT_FRAC,
              beta: float | None = None, tied: bool = True) -> StepsizeCertificate:
    """Stepsizes for FlexPD-C.

    ``beta`` defaults to ``beta_frac * (2m - eta4) / rho(A'A)``; passing it
    explicitly (e.g. ``beta = T``) keeps the alpha formula but the
    certificate then reports any violated dual bound.
    """
    m, L, r, s = _constants(net, obj)
    eta4 = m if eta4 is None else float(eta4)
    if not 0 < eta4 < 2 * m:
        raise ConfigurationError(f"eta4={eta4:.4g} must lie in (0, 2m={2 * m:.4g})")
    beta_bound = (2 * m - eta4) / r
    if beta is None:
        beta = beta_frac * beta_bound
    rho_B = _rho_B(net, beta, tied)
    a_bound = c_alpha_bound(L, eta4, rho_B, T)
    alpha = alpha_frac * a_bound
    cert = StepsizeCertificate(
        "C", alpha, beta, T, m, L, r, s, rho_B, tied, eta={"eta4": eta4},
        rho_D=_rho_D(net, beta, tied),
        bounds_used={"beta": beta_bound, "alpha": a_bound},
    )
    d, delta = c_delta(cert)
    if delta > 0:
        cert.delta, cert.rate = delta, 1.0 / (1.0 + delta)
        cert.gamma_params["d"] = d
    return cert


def c_delta(c: StepsizeCertificate):
    """Contraction slack of FlexPD-C, maximized over the free parameter."""
    lo_M = ((1 - c.alpha * c.rho_B) ** c.T
            / sum((1 - c.alpha * c.rho_B) ** t for t in range(c.T)))
    first = c.alpha * c.beta * (lo_M - c.alpha * c.L ** 2 / c.eta["eta4"]) * c.s_AAt \
        / (1.0 / c.T + c.alpha * c.L) ** 2
    num = c.beta * c.alpha * (2 * c.m - c.eta["eta4"] - c.beta * c.rho_AtA)
    K = c.alpha * (c.rho_D + c.L) ** 2 / c.s_AAt
    return _crossing(lambda d: first / d, lambda d: num / (d / (d - 1) * K + c.beta / c.T))


def _c_violations(c):
    out = []
    eta4 = c.eta["eta4"]
    if not 0 < eta4 < 2 * c.m:
        out.append("eta4 outside (0, 2m)")
    if not 0 < c.beta < (2 * c.m - eta4) / c.rho_AtA:
        out.append("beta >= (2m - eta4)/rho(A'A)")
    if not 0 < c.alpha < c_alpha_bound(c.L, eta4, c.rho_B, c.T):
        out.append("alpha above the FlexPD-C bound")
    return out + _tie_violations(c)


def _tie_violations(c):
    if c.tied and not math.isclose(c.rho_B, c.beta * c.rho_AtA, rel_tol=1e-9):
        return ["rho(B) inconsistent with B = beta A'A"]
    return []


# ---------------------------------------------------------------------------
# FlexPD-F


def f_delta(alpha, beta, m, L, r, s, rho_B, rho_D, eta1):
    """Largest contraction slack of one FlexPD-F primal-dual step."""
    first = alpha * beta * s * (1 - alpha * rho_B - alpha * L * L / eta1) / (1 + alpha * L) ** 2
    num = alpha * beta * (2 * m - eta1 - beta * r)
    K = alpha * (rho_D + L) ** 2 / s
    if first <= 0 or num <= 0:
        return 1.0, min(first, num)
    return _crossing(lambda d: first / d, lambda d: num / (d / (d - 1) * K + beta))


def f_gamma(alpha, beta, L, r, rho_B):
    """Inner-step growth factor of FlexPD-F, minimized over ``p > 1``."""
    inner = (1 + alpha * L / math.sqrt(1 - alpha * rho_B)) ** 2
    return _minmax(lambda p: p * inner, lambda p: 1 + p * alpha * beta * r / (p - 1))


def f_alpha_bounds(T, delta_tilde, beta, L, r, rho_B, eta1):
    b = {"alpha_1": 1.0 / (L * L / eta1 + rho_B)}
    if T > 1:
        x2 = (1 + delta_tilde) ** (1 / (2 * (T - 1))) - 1
        x1 = (1 + delta_tilde) ** (1 / (T - 1)) - 1
        b["alpha_2"] = x2 / (L + rho_B * x2)
        b["alpha_3"] = x1 / (beta * r)
    return b


def _f_eval(alpha, beta, T, m, L, r, s, rho_B, rho_D, eta1):
    d, delta = f_delta(alpha, beta, m, L, r, s, rho_B, rho_D, eta1)
    out = {"alpha": alpha, "delta": delta, "d": d, "feasible": False}
    if not delta > 0 or not alpha * rho_B < 1:
        return out
    dt = DELTA_SHARE * delta
    bounds = f_alpha_bounds(T, dt, beta, L, r, rho_B, eta1)
    out.update(delta_tilde=dt, bounds=bounds)
    if T > 1:
        p, gamma = f_gamma(alpha, beta, L, r, rho_B)
        rate = gamma ** (T - 1) / (1 + dt)
        out.update(gamma=gamma, p=p, rate=rate)
    else:
        rate = 1.0 / (1 + dt)
        out.update(rate=rate)
    out["feasible"] = alpha < min(bounds.values()) and rate < 1
    return out


def _search_alpha(evaluate, top, alpha_frac):
    """Pick alpha from the set where ``evaluate(alpha)["feasible"]``.

    Scans a log grid below ``top``, sharpens the supremum by bisection and
    returns the feasible candidate closest to ``alpha_frac * sup``.
    """
    grid = top * ALPHA_GRID
    evals = [evaluate(a) for a in grid]
    feas = [e for e in evals if e["feasible"]]
    if not feas:
        return None
    j = next(i for i, e in enumerate(evals) if e["feasible"])
    lo, hi = grid[j], (grid[j - 1] if j > 0 else top)
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if evaluate(mid)["feasible"]:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-12:
            break
    target = alpha_frac * lo
    best = evaluate(target)
    if best["feasible"]:
        return best
    cands = feas + [evaluate(lo)]
    cands = [e for e in cands if e["feasible"]]
    return min(cands, key=lambda e: abs(math.log(e["alpha"] / target)))


class CertificateError(AssertionError):
    """The admissible parameter set is empty for the requested configuration."""


def _pick_alpha(evaluate, top, alpha_frac, T, variant):
    if T == 1:
        best = evaluate(alpha_frac * top)
        if best["feasible"]:
            return best
    else:
        best = _search_alpha(evaluate, top, alpha_frac)
        if best is not None:
            return best
    if T == 1:
        raise CertificateError(
            f"no admissible FlexPD-{variant} stepsizes for T=1: the contraction slack delta "
            "is not positive, so beta or eta lies outside its admissible range")
    raise CertificateError(
        f"no admissible FlexPD-{variant} stepsizes for T={T}: the inner-step growth "
        "factor Gamma is at least (1 + alpha L)^2 while the contraction slack delta "
        "stays below 2 alpha m, so Gamma^(T-1)/(1 + delta_tilde) < 1 cannot hold for "
        "T > 1; certificates for this variant exist at T = 1 only")


def certify_f(net: Network, obj: ObjectiveSet, T: int, eta1: float | None = None,
              beta_frac: float = DEFAULT_FRAC, alpha_frac: float = DEFAULT_FRAC,
              beta: float | None = None, tied: bool = True) -> StepsizeCertificate:
    """Stepsizes for FlexPD-F.

    The contraction slack ``delta`` depends on ``alpha`` and the alpha
    bounds depend on ``delta``, so for ``T > 1`` alpha is searched over the
    self-consistent set; :class:`CertificateError` is raised when it is empty
    (which is always the case for ``T > 1``, see ``_pick_alpha``).
    """
    m, L, r, s = _constants(net, obj)
    eta1 = m if eta1 is None else float(eta1)
    if not 0 < eta1 < 2 * m:
        raise ConfigurationError(f"eta1={eta1:.4g} must lie in (0, 2m={2 * m:.4g})")
    beta_bound = (2 * m - eta1) / r
    beta = beta_frac * beta_bound if beta is None else float(beta)
    rho_B = _rho_B(net, beta, tied)
    rho_D = _rho_D(net, beta, tied)
    top = 1.0 / (L * L / eta1 + rho_B)
    best = _pick_alpha(
        lambda a: _f_eval(a, beta, T, m, L, r, s, rho_B, rho_D, eta1), top, alpha_frac, T, "F")
    cert = StepsizeCertificate(
        "F", best["alpha"], beta, T, m, L, r, s, rho_B, tied, eta={"eta1": eta1},
        delta=best["delta"], delta_tilde=best["delta_tilde"], gamma=best.get("gamma"),
        gamma_params={"d": best["d"], **({"p": best["p"]} if "p" in best else {})},
        rate=best["rate"], rho_D=rho_D,
        bounds_used={"beta": beta_bound, **best["bounds"]},
    )
    if T > 1:
        assert cert.gamma ** (T - 1) / (1 + cert.delta_tilde) < 1
    return cert


def _f_violations(c):
    out = []
    eta1 = c.eta["eta1"]
    if not 0 < eta1 < 2 * c.m:
        out.append("eta1 outside (0, 2m)")
    if not 0 < c.beta < (2 * c.m - eta1) / c.rho_AtA:
        out.append("beta >= (2m - eta1)/rho(A'A)")
    d = c.gamma_params.get("d", 2.0)
    first = c.alpha * c.beta * c.s_AAt * (1 - c.alpha * c.rho_B - c.alpha * c.L ** 2 / eta1) \
        / (1 + c.alpha * c.L) ** 2 / d
    second = c.alpha * c.beta * (2 * c.m - eta1 - c.beta * c.rho_AtA) / (
        c.alpha * d / ((d - 1) * c.s_AAt) * (c.rho_D + c.L) ** 2 + c.beta)
    if c.delta is None or not 0 < c.delta <= min(first, second) * (1 + 1e-12):
        out.append("delta not supported by its closed-form bounds")
        return out
    if not 0 < c.delta_tilde < c.delta:
        out.append("delta_tilde outside (0, delta)")
    for name, b in f_alpha_bounds(c.T, c.delta_tilde, c.beta, c.L, c.rho_AtA, c.rho_B, eta1).items():
        if not c.alpha < b:
            out.append(f"alpha >= {name}")
    if c.T > 1:
        p = c.gamma_params["p"]
        g = max(1 + p * c.alpha * c.beta * c.rho_AtA / (p - 1),
                p * (1 + c.alpha * c.L / math.sqrt(1 - c.alpha * c.rho_B)) ** 2)
        if not (g >= 1 and g ** (c.T - 1) / (1 + c.delta_tilde) < 1):
            out.append("Gamma^(T-1)/(1+delta_tilde) >= 1")
    return out + _tie_violations(c)


# ---------------------------------------------------------------------------
# FlexPD-G


def g_default_etas(m, rho_B):
    eta3 = 0.5 * (rho_B + (2 * m - rho_B))
    eta2 = 0.5 * (2 * m - rho_B - eta3)
    return eta2, eta3


def g_delta(alpha, beta, m, L, r, s, rho_B, eta2, eta3):
    """Largest contraction slack of one FlexPD-G step over ``(d, c)``."""
    k1 = alpha * beta * s * (1 - alpha * L * L / eta2) / (1 + alpha * L) ** 2
    k2 = beta * s * (1 - rho_B / eta3) / rho_B
    num3 = beta * (2 * m - eta2 - eta3 - beta * r - rho_B)
    k4 = (beta * r + L) ** 2 / s
    k5 = beta / alpha * (1 + alpha * rho_B)
    if min(k1, k2, num3) <= 0:
        return {"d": 2.0, "c": 2.0}, min(k1, k2, num3)

    def best_over_c(d):
        return _crossing(lambda c: k1 / (d * c), lambda c: num3 / (d * c / (c - 1) * k4 + k5))

    d, val = _crossing(lambda d: best_over_c(d)[1], lambda d: k2 * (d - 1) / d)
    return {"d": d, "c": best_over_c(d)[0]}, val


def g_gamma(alpha, beta, L, r, rho_B):
    """Inner-step growth factor of FlexPD-G, minimized over ``(p, q)``."""
    a, b = alpha * beta * r, alpha * rho_B
    q = 1 + b / a
    p, gamma = _minmax(lambda p: p * (1 + alpha * L) ** 2, lambda p: 1 + p * (a + b) / (p - 1))
    return {"p": p, "q": q}, gamma


def g_alpha_bounds(T, delta_tilde, beta, L, r, rho_B, eta2):
    b = {"alpha_1": eta2 / (L * L)}
    if T > 1:
        x2 = (1 + delta_tilde) ** (1 / (2 * (T - 1))) - 1
        x1 = (1 + delta_tilde) ** (1 / (T - 1)) - 1
        b["alpha_2"] = x2 / L
        b["alpha_3"] = x1 / (beta * r)
        b["alpha_4"] = x1 / rho_B
    return b


def _g_eval(alpha, beta, T, m, L, r, s, rho_B, eta2, eta3):
    params, delta = g_delta(alpha, beta, m, L, r, s, rho_B, eta2, eta3)
    out = {"alpha": alpha, "delta": delta, **params, "feasible": False}
    if not delta > 0:
        return out
    dt = DELTA_SHARE * delta
    bounds = g_alpha_bounds(T, dt, beta, L, r, rho_B, eta2)
    out.update(delta_tilde=dt, bounds=bounds)
    if T > 1:
        gp, gamma = g_gamma(alpha, beta, L, r, rho_B)
        rate = gamma ** (T - 1) / (1 + dt)
        out.update(gamma=gamma, gp=gp, rate=rate)
    else:
        rate = 1.0 / (1 + dt)
        out.update(rate=rate)
    out["feasible"] = alpha < min(bounds.values()) and rate < 1
    return out


def _g_beta_setup(net, m, r, beta, tied, eta2, eta3):
    rho_B = _rho_B(net, beta, tied)
    d2, d3 = g_default_etas(m, rho_B)
    e2 = d2 if eta2 is None else float(eta2)
    e3 = d3 if eta3 is None else float(eta3)
    return rho_B, e2, e3, (2 * m - (e2 + e3) - rho_B) / r


def certify_g(net: Network, obj: ObjectiveSet, T: int, eta2: float | None = None,
              eta3: float | None = None, beta_frac: float = DEFAULT_FRAC,
              alpha_frac: float = DEFAULT_FRAC, beta: float | None = None,
              tied: bool = True) -> StepsizeCertificate:
    """Stepsizes for FlexPD-G (requires ``rho(B) < m``).

    With a tied penalty the dual bound depends on beta through ``rho(B)``;
    beta is set to ``beta_frac`` times the fixed point of that relation.
    """
    m, L, r, s = _constants(net, obj)
    if beta is None:
        if tied:
            def excess(b):
                rho_B, e2, e3, bb = _g_beta_setup(net, m, r, b, tied, eta2, eta3)
                ok = rho_B < m and e3 > rho_B and e2 > 0
                return (bb - b) if ok else -b
            hi = m / r
            if excess(1e-300) <= 0:
                raise ConfigurationError("no admissible beta for FlexPD-G with these etas")
            sup = brentq(excess, 1e-300, hi, xtol=1e-15 * hi) if excess(hi) < 0 else hi
            beta = beta_frac * sup
        else:
            beta = beta_frac * _g_beta_setup(net, m, r, 1.0, tied, eta2, eta3)[3]
    rho_B, eta2, eta3, beta_bound = _g_beta_setup(net, m, r, beta, tied, eta2, eta3)
    if not rho_B < m:
        raise ConfigurationError(
            f"FlexPD-G needs rho(B) < m (rho(B)={rho_B:.4g}, m={m:.4g}); rescale B")
    if not (eta2 > 0 and eta3 > rho_B and eta2 + eta3 < 2 * m - rho_B):
        raise ConfigurationError("need eta2 > 0, eta3 > rho(B), eta2 + eta3 < 2m - rho(B)")
    best = _pick_alpha(
        lambda a: _g_eval(a, beta, T, m, L, r, s, rho_B, eta2, eta3), eta2 / (L * L),
        alpha_frac, T, "G")
    gp = best.get("gp", {})
    cert = StepsizeCertificate(
        "G", best["alpha"], beta, T, m, L, r, s, rho_B, tied,
        eta={"eta2": eta2, "eta3": eta3},
        delta=best["delta"], delta_tilde=best["delta_tilde"], gamma=best.get("gamma"),
        gamma_params={"d": best["d"], "c": best["c"], **gp}, rate=best["rate"],
        bounds_used={"beta": beta_bound, "beta_assumption": m / r if tied else None,
                     **best["bounds"]},
    )
    if T > 1:
        assert cert.gamma ** (T - 1) / (1 + cert.delta_tilde) < 1
    return cert


def _g_violations(c):
    out = []
    e2, e3 = c.eta["eta2"], c.eta["eta3"]
    if not c.rho_B < c.m:
        out.append("rho(B) >= m")
    if not (e2 > 0 and e3 > c.rho_B and e2 + e3 < 2 * c.m - c.rho_B):
        out.append("etas outside their admissible region")
    if not 0 < c.beta < (2 * c.m - (e2 + e3) - c.rho_B) / c.rho_AtA:
        out.append("beta >= (2m - eta2 - eta3 - rho(B))/rho(A'A)")
    d, cc = c.gamma_params.get("d", 2.0), c.gamma_params.get("c", 2.0)
    a, b, L, s, r, rB = c.alpha, c.beta, c.L, c.s_AAt, c.rho_AtA, c.rho_B
    bounds = (
        a * b * s * (1 - a * L * L / e2) / (d * cc * (1 + a * L) ** 2),
        b * s * (d - 1) * (1 - rB / e3) / (d * rB),
        b * (2 * c.m - e2 - e3 - b * r - rB) / (d * cc / (s * (cc - 1)) * (b * r + L) ** 2
                                                 + b / a * (1 + a * rB)),
    )
    if c.delta is None or not 0 < c.delta <= min(bounds) * (1 + 1e-12):
        out.append("delta not supported by its closed-form bounds")
        return out
    if not 0 < c.delta_tilde < c.delta:
        out.append("delta_tilde outside (0, delta)")
    for name, bnd in g_alpha_bounds(c.T, c.delta_tilde, b, L, r, rB, e2).items():
        if not a < bnd:
            out.append(f"alpha >= {name}")
    if c.T > 1:
        p, q = c.gamma_params["p"], c.gamma_params["q"]
        g = max(p * (1 + a * L) ** 2, 1 + p * q * a * b * r / (p - 1),
                1 + p * q * a * rB / ((p - 1) * (q - 1)))
        if not g ** (c.T - 1) / (1 + c.delta_tilde) < 1:
            out.append("Gamma^(T-1)/(1+delta_tilde) >= 1")
    return out + _tie_violations(c)


_VIOLATIONS = {"F": _f_violations, "G": _g_violations, "C": _c_violations}


def certify(variant: str, net: Network, obj: ObjectiveSet, T: int, **kw) -> StepsizeCertificate:
    return {"F": certify_f, "G": certify_g, "C": certify_c}[variant](net, obj, T, **kw)


# ---------------------------------------------------------------------------
# random search


@dataclass(frozen=True)
class SearchConfig:
    """Log-uniform random search over ``(alpha, beta)``."""

    alpha_range: tuple = (1e-4, 1.0)
    beta_range: tuple = (1e-3, 10.0)
    seed: int = 0
    tol: float = 0.01
    max_iters: int = 2000
    workers: int = 1


@dataclass
class TuningResult:
    alpha: float
    beta: float
    iterations: int | None
    evaluated: list
    fallback: bool = False


def tuned_stepsize(variant: str, net: Network, obj: ObjectiveSet, T: int,
                   search: SearchConfig = SearchConfig(), budget: int = 50,
                   ref=None, include_certificate: bool = True) -> TuningResult:
    """Best ``(alpha, beta)`` by iterations to ``search.tol`` relative error.

    Candidates use ``B = beta A'A``. For FlexPD-G, whose penalty must satisfy
    ``rho(B) < m``, the beta range is rescaled so its upper end sits at
    ``m / rho(A'A)``. The certificate pair (when one exists) joins the
    ``budget`` random samples, so the result is never worse than the
    certificate on this problem. Candidates run in batches of
    ``search.workers``; each batch is capped at the best count of earlier
    batches, which keeps the outcome independent of thread timing.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    from .core import reference_solution
    if ref is None:
        ref = reference_solution(net, obj)
    rng = np.random.default_rng(search.seed)
    la, lb = np.log(search.alpha_range), np.log(search.beta_range)
    if variant == "G":
        m, _ = obj.constants()
        lb = lb + math.log(m / net.rho_AtA) - lb[1]
    cands = [(float(np.exp(rng.uniform(*la))), float(np.exp(rng.uniform(*lb))))
             for _ in range(budget)]
    cert_pair = None
    if include_certificate and variant in ("F", "G", "C"):
        try:
            cert = certify(variant, net, obj, T)
            cert_pair = (cert.alpha, cert.beta)
            # last, so the pruning cap from the random samples applies to it
            cands.append(cert_pair)
        except (ConfigurationError, CertificateError):
            pass

    def run(pair, cap):
        alpha, beta = pair
        if variant == "EXTRA":
            net_b, steps = net, Stepsizes(alpha, 1.0, 1, variant)
        else:
            net_b, steps = net.scaled(beta), Stepsizes(alpha, beta, T, variant)
        try:
            tr = solve(variant, net_b, obj, steps, stop=StopRule(search.tol, cap),
                       ref=ref, record=False)
        except ConfigurationError:
            return None
        return tr.final[0] if tr.status == "converged" else None

    results = []
    best = search.max_iters
    width = max(1, search.workers)
    pool = ThreadPoolExecutor(width) if width > 1 else None
    try:
        for i in range(0, len(cands), width):
            batch = cands[i:i + width]
            cap = best
            its = list(pool.map(lambda c: run(c, cap), batch)) if pool else [run(c, cap) for c in batch]
            for pair, it in zip(batch, its):
                results.append((pair, it))
                if it is not None and it < best:
                    best = it
    finally:
        if pool:
            pool.shutdown()
    ok = [(it, i, pair) for i, (pair, it) in enumerate(results) if it is not None]
    if not ok:
        if cert_pair is None:
            raise RuntimeError("every sampled stepsize pair diverged or stalled and no certificate exists")
        return TuningResult(cert_pair[0], cert_pair[1], None, results, fallback=True)
    it, _, (alpha, beta) = min(ok)
    return TuningResult(alpha, beta, it, results)
