"""Local objective families and LIBSVM data ingestion.

Iterates are ``(n, p)`` arrays: row ``i`` is agent ``i``'s copy of the
decision variable, and all algebra acts column-wise.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.special import expit


class ObjectiveSet:
    """Sum of ``n`` local functions ``f_i``, each ``m``-strongly convex with
    ``L``-Lipschitz gradient."""

    kind = "abstract"
    n: int
    p: int

    def eval_f(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def constants(self) -> tuple[float, float]:
        """Per-agent ``(m, L)``."""
        raise NotImplementedError

    def sum_bounds(self) -> tuple[float, float]:
        """Curvature bounds of ``sum_i f_i`` as a function of one shared copy."""
        m, L = self.constants()
        return self.n * m, self.n * L

    def describe(self) -> dict:
        m, L = self.constants()
        return {"kind": self.kind, "n": self.n, "p": self.p, "m": m, "L": L}

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.p):
            raise ValueError(f"expected iterate of shape {(self.n, self.p)}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("iterate has non-finite entries")
        return x


class QuadraticObjective(ObjectiveSet):
    """``f_i(x) = c_i * ||x - b_i||^2``."""

    kind = "quadratic"

    def __init__(self, c, b, p: int | None = None):
        c = np.asarray(c, dtype=float).reshape(-1)
        if np.any(c <= 0):
            raise ValueError("quadratic coefficients must be positive")
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1) if p is None else np.tile(b.reshape(-1, 1), (1, p))
        if b.shape[0] != c.size:
            raise ValueError("c and b must have one entry per agent")
        self.c = c
        self.b = b
        self.n, self.p = b.shape

    def eval_f(self, x):
        x = self._check(x)
        return float(np.sum(self.c[:, None] * (x - self.b) ** 2))

    def grad(self, x):
        return 2.0 * self.c[:, None] * (x - self.b)

    def constants(self):
        return 2.0 * float(self.c.min()), 2.0 * float(self.c.max())

    def sum_bounds(self):
        h = 2.0 * float(self.c.sum())
        return h, h

    def consensus_optimum(self) -> np.ndarray:
        """Closed-form minimizer of ``sum_i c_i ||x - b_i||^2``."""
        return (self.c @ self.b) / self.c.sum()


class LogisticObjective(ObjectiveSet):
    """Regularized logistic loss split across agents.

    ``f_i(x) = kappa/(2n) ||x||^2 + (1/K) sum_j log(1 + exp(-v_ij u_ij' x))``
    where ``K`` counts samples over all agents.
    """

    kind = "logistic"

    def __init__(self, features, labels, kappa: float):
        if len(features) != len(labels) or not features:
            raise ValueError("need one feature block and one label vector per agent")
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.features = [np.asarray(u, dtype=float) for u in features]
        self.labels = [np.asarray(v, dtype=float).reshape(-1) for v in labels]
        for u, v in zip(self.features, self.labels):
            if u.ndim != 2 or u.shape[0] != v.size:
                raise ValueError("feature block rows must match label count")
            if not np.all(np.isin(v, (-1.0, 1.0))):
                raise ValueError("labels must be -1 or +1")
        self.n = len(self.features)
        self.p = self.features[0].shape[1]
        self.kappa = float(kappa)
        self.K = sum(u.shape[0] for u in self.features)
        self._U = np.vstack(self.features)
        self._v = np.concatenate(self.labels)
        sizes = [u.shape[0] for u in self.features]
        if min(sizes) < 1:
            raise ValueError("every agent needs at least one sample")
        self._owner = np.repeat(np.arange(self.n), sizes)
        self._starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        self._rows = np.arange(self.K)
        self._L_agents = np.array([
            self.kappa / self.n
            + np.linalg.eigvalsh(u.T @ u)[-1] / (4.0 * self.K)
            for u in self.features
        ])

    def _margins(self, x):
        return self._v * (self._U @ x.T)[self._rows, self._owner]

    def eval_f(self, x):
        x = self._check(x)
        loss = np.logaddexp(0.0, -self._margins(x)).sum() / self.K
        return float(0.5 * self.kappa / self.n * np.sum(x * x) + loss)

    def grad(self, x):
        w = -self._v * expit(-self._margins(x)) / self.K
        return self.kappa / self.n * x + np.add.reduceat(self._U * w[:, None], self._starts, axis=0)

    def constants(self):
        return self.kappa / self.n, float(self._L_agents.max())

    def sum_bounds(self):
        top = np.linalg.eigvalsh(self._U.T @ self._U)[-1]
        return self.kappa, self.kappa + top / (4.0 * self.K)


def random_quadratic(n: int, rng: np.random.Generator, c_range=(1, 1000),
                     b_range=(1, 100)) -> QuadraticObjective:
    """Integer coefficients drawn uniformly, inclusive of both ends."""
    c = rng.integers(c_range[0], c_range[1], size=n, endpoint=True)
    b = rng.integers(b_range[0], b_range[1], size=n, endpoint=True)
    return QuadraticObjective(c, b)


# ---------------------------------------------------------------------------
# LIBSVM data


class LibsvmError(ValueError):
    pass


@dataclass
class Dataset:
    labels: np.ndarray
    features: list
    p: int

    def __len__(self):
        return len(self.features)

    def dense(self) -> np.ndarray:
        X = np.zeros((len(self.features), self.p))
        for r, feats in enumerate(self.features):
            for idx, val in feats.items():
                X[r, idx - 1] = val
        return X


def parse_libsvm(source, p_hint: int | None = None) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...``, 1-based ascending
    indices, ``#`` starts a comment).

    Labels are mapped to ``+1`` when positive and ``-1`` otherwise, so 0/1
    data becomes -1/+1. ``source`` may be bytes, str or a binary/text file.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    labels, rows = [], []
    pmax = 0
    for lineno, raw in enumerate(io.StringIO(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *pairs = line.split()
        try:
            label = float(head)
        except ValueError:
            raise LibsvmError(f"line {lineno}: bad label {head!r}") from None
        feats: dict[int, float] = {}
        last = 0
        for pair in pairs:
            idx_s, sep, val_s = pair.partition(":")
            if not sep:
                raise LibsvmError(f"line {lineno}: malformed pair {pair!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmError(f"line {lineno}: non-numeric pair {pair!r}") from None
            if idx < 1:
                raise LibsvmError(f"line {lineno}: index {idx} below 1")
            if idx in feats:
                raise LibsvmError(f"line {lineno}: duplicate index {idx}")
            if idx < last:
                raise LibsvmError(f"line {lineno}: indices not ascending at {idx}")
            if p_hint is not None and idx > p_hint:
                raise LibsvmError(f"line {lineno}: index {idx} exceeds p={p_hint}")
            feats[idx] = val
            last = idx
        pmax = max(pmax, last)
        labels.append(1.0 if label > 0 else -1.0)
        rows.append(feats)
    return Dataset(np.array(labels), rows, p_hint if p_hint is not None else pmax)


def load_libsvm(path, p_hint: int | None = None) -> Dataset:
    with open(path, "rb") as fh:
        return parse_libsvm(fh, p_hint)


def partition(ds: Dataset, n: int, seed=None) -> list[np.ndarray]:
    """Shuffle sample indices and split them into ``n`` near-equal parts."""
    if n < 1:
        raise ValueError("need at least one agent")
    if n > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples over {n} agents")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return np.array_split(perm, n)


def logistic_from_dataset(ds: Dataset, n: int, kappa: float, seed=None) -> LogisticObjective:
    X = ds.dense()
    parts = partition(ds, n, seed)
    return LogisticObjective([X[idx] for idx in parts], [ds.labels[idx] for idx in parts], kappa)


def synthetic_binary_dataset(num_samples: int = 768, p: int = 8, seed: int = 0,
                             positive_rate: float = 0.35) -> Dataset:
    """Scaled binary classification data with ``num_samples`` rows.

    Stand-in for LIBSVM ``-scale`` datasets when the real file is not
    available: features lie in [-1, 1], labels come from a noisy linear
    model with roughly ``positive_rate`` positives.
    """
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(p, p)) / np.sqrt(p)
    Z = rng.normal(size=(num_samples, p)) @ (np.eye(p) + 0.5 * mix)
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    X = 2.0 * (Z - lo) / (hi - lo) - 1.0
    w = rng.normal(size=p) * 3.0
    score = X @ w + rng.logistic(size=num_samples)
    y = np.where(score > np.quantile(score, 1.0 - positive_rate), 1.0, -1.0)
    feats = [{j + 1: float(v) for j, v in enumerate(row) if v != 0.0} for row in X]
    return Dataset(y, feats, p)


# Column summaries of the 768-sample diabetes data: (mean, std, min, max,
# fraction of zero entries recorded as missing). Used only to shape the
# stand-in below.
_DIABETES_COLUMNS = (
    (3.85, 3.37, 0.0, 17.0, 0.0),      # pregnancies
    (120.9, 32.0, 0.0, 199.0, 0.0),    # glucose
    (69.1, 19.4, 0.0, 122.0, 0.05),    # blood pressure
    (20.5, 16.0, 0.0, 99.0, 0.30),     # skin thickness
    (79.8, 115.2, 0.0, 846.0, 0.49),   # insulin
    (32.0, 7.9, 0.0, 67.1, 0.0),       # body mass index
    (0.472, 0.331, 0.078, 2.42, 0.0),  # pedigree
    (33.2, 11.8, 21.0, 81.0, 0.0),     # age
)
# Signs/weights of a plausible risk model on standardized columns.
_DIABETES_RISK = np.array([0.4, 1.1, -0.1, 0.05, -0.1, 0.7, 0.3, 0.2])


def diabetes_like_dataset(seed: int = 0, num_samples: int = 768) -> Dataset:
    """Stand-in with the shape of the ``diabetes-scale`` LIBSVM file.

    Columns follow the real data's means, spreads, ranges and missing-value
    zeros (gamma draws, clipped), are min-max scaled to [-1, 1] with the
    real ranges, and labels come from a logistic risk model thresholded at
    the real positive rate (268 of 768).
    """
    rng = np.random.default_rng(seed)
    cols, std_cols = [], []
    for mean, sd, lo, hi, zero_frac in _DIABETES_COLUMNS:
        shape = ((mean - lo) / sd) ** 2
        raw = lo + rng.gamma(shape, sd * sd / (mean - lo), size=num_samples)
        raw = np.clip(raw, lo, hi)
        std_cols.append((raw - mean) / sd)
        if zero_frac:
            raw[rng.random(num_samples) < zero_frac] = 0.0
        cols.append(2.0 * (raw - lo) / (hi - lo) - 1.0)
    X = np.column_stack(cols)
    score = np.column_stack(std_cols) @ _DIABETES_RISK + rng.logistic(size=num_samples)
    y = np.where(score > np.quantile(score, 1.0 - 268 / 768), 1.0, -1.0)
    feats = [{j + 1: float(v) for j, v in enumerate(row) if v != 0.0} for row in X]
    return Dataset(y, feats, X.shape[1])
