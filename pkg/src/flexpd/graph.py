"""Network topologies, incidence/penalty matrices and their spectra."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

ER_MAX_ATTEMPTS = 1000
REGULAR_MAX_ATTEMPTS = 1000
NULL_TOL = 1e-9


class GraphError(ValueError):
    """Raised for infeasible topology parameters or disconnected graphs."""


@dataclass(frozen=True)
class Topology:
    """Topology tag: ``kind`` plus the parameters that kind needs.

    ``kind`` is one of ``path``, ``ring``, ``k_regular``, ``erdos_renyi``,
    ``complete`` or ``custom``.
    """

    kind: str
    k: int | None = None
    prob: float | None = None
    seed: int | None = None

    KINDS = ("path", "ring", "k_regular", "erdos_renyi", "complete", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise GraphError(f"unknown topology kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "Topology":
        """Parse ``"path"``, ``"ring"``, ``"complete"``, ``"k_regular:4"`` or
        ``"erdos_renyi:0.9178"`` (a trailing ``@<seed>`` overrides ``seed``)."""
        if "@" in text:
            text, s = text.split("@", 1)
            seed = int(s)
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower().replace("-", "_")
        if kind in ("4_regular", "regular"):
            kind, arg = "k_regular", arg or "4"
        if kind == "k_regular":
            return cls(kind, k=int(arg or 4), seed=seed)
        if kind in ("erdos_renyi", "er"):
            return cls("erdos_renyi", prob=float(arg or 0.5), seed=seed)
        return cls(kind, seed=seed)

    def label(self) -> str:
        if self.kind == "k_regular":
            return f"{self.k}_regular"
        if self.kind == "erdos_renyi":
            return f"erdos_renyi_{self.prob:g}"
        return self.kind


@dataclass(frozen=True)
class Graph:
    """Undirected, connected, simple graph on vertices ``0..n-1``."""

    n: int
    edges: tuple[tuple[int, int], ...]
    topology: Topology = field(default_factory=lambda: Topology("custom"))

    def __post_init__(self):
        if self.n < 2:
            raise GraphError("a network needs at least two agents")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if not is_connected(self.n, self.edges):
            raise GraphError("graph is not connected")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs


def is_connected(n: int, edges) -> bool:
    """Breadth-first search from vertex 0."""
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


def _ring_edges(n):
    if n == 2:
        return {(0, 1)}
    return {(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)}


def _random_regular_extension(n, d, forbidden, rng):
    # Stub pairing (as in networkx.random_regular_graph) avoiding `forbidden`.
    if d == 0:
        return set()
    edges: set = set()
    stubs = list(range(n)) * d
    while stubs:
        leftover: dict[int, int] = {}
        rng.shuffle(stubs)
        it = iter(stubs)
        for s1, s2 in zip(it, it):
            e = (min(s1, s2), max(s1, s2))
            if s1 != s2 and e not in edges and e not in forbidden:
                edges.add(e)
            else:
                leftover[s1] = leftover.get(s1, 0) + 1
                leftover[s2] = leftover.get(s2, 0) + 1
        if leftover:
            nodes = list(leftover)
            if not any(
                (min(a, b), max(a, b)) not in edges
                and (min(a, b), max(a, b)) not in forbidden
                for x, a in enumerate(nodes)
                for b in nodes[x + 1:]
            ):
                return None
        stubs = [v for v, c in leftover.items() for _ in range(c)]
    return edges


def build_topology(tag: Topology | str, n: int) -> Graph:
    """Build a connected graph on ``n`` agents.

    ``k_regular`` starts from a ring and adds a random ``(k-2)``-regular
    graph on the remaining vertex pairs, so every vertex ends up with
    degree exactly ``k``. ``erdos_renyi`` regenerates with an incremented
    seed until the sample is connected.
    """
    if isinstance(tag, str):
        tag = Topology.parse(tag)
    if n < 2:
        raise GraphError("n must be at least 2")
    kind = tag.kind
    if kind == "path":
        edges = {(i, i + 1) for i in range(n - 1)}
    elif kind == "ring":
        edges = _ring_edges(n)
    elif kind == "complete":
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif kind == "k_regular":
        k = tag.k
        if k is None or not 0 < k < n or (n * k) % 2:
            raise GraphError(f"no {k}-regular graph on {n} vertices (need 0<k<n, n*k even)")
        if k == 1:
            if n != 2:
                raise GraphError("a 1-regular graph is disconnected for n > 2")
            edges = {(0, 1)}
        elif k == n - 1:
            edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
        else:
            rng = np.random.default_rng(tag.seed)
            ring = _ring_edges(n)
            for _ in range(REGULAR_MAX_ATTEMPTS):
                extra = _random_regular_extension(n, k - 2, ring, rng)
                if extra is not None:
                    break
            else:
                raise GraphError(f"failed to sample a {k}-regular graph on {n} vertices")
            edges = ring | extra
    elif kind == "erdos_renyi":
        p = tag.prob
        if p is None or not 0 < p <= 1:
            raise GraphError("erdos_renyi needs 0 < prob <= 1")
        base = 0 if tag.seed is None else tag.seed
        iu = np.triu_indices(n, 1)
        for attempt in range(ER_MAX_ATTEMPTS):
            rng = np.random.default_rng(base + attempt)
            mask = rng.random(len(iu[0])) < p
            edges = set(zip(iu[0][mask].tolist(), iu[1][mask].tolist()))
            if edges and is_connected(n, edges):
                break
        else:
            raise GraphError(f"no connected G({n}, {p}) sample in {ER_MAX_ATTEMPTS} attempts")
    else:
        raise GraphError("custom topologies are built with Graph(n, edges) directly")
    return Graph(n, tuple(edges), tag)


def incidence_matrix(g: Graph) -> np.ndarray:
    """Edge-node incidence matrix; the lower vertex of each edge gets +1."""
    A = np.zeros((g.num_edges, g.n))
    for row, (i, j) in enumerate(g.edges):
        A[row, i] = 1.0
        A[row, j] = -1.0
    return A


def penalty_matrix(A: np.ndarray, beta: float = 1.0, variant: str = "scaled_gram",
                   weights=None) -> np.ndarray:
    """Penalty matrix ``B`` sharing the null space of ``A``.

    ``scaled_gram`` gives ``beta * A'A``; ``weighted_laplacian`` gives
    ``beta * A' diag(weights) A`` with one positive weight per edge.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if variant == "scaled_gram":
        B = beta * (A.T @ A)
    elif variant == "weighted_laplacian":
        w = np.asarray(weights, dtype=float)
        if w.shape != (A.shape[0],) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per edge")
        B = beta * (A.T * w) @ A
    else:
        raise ValueError(f"unknown penalty variant {variant!r}")
    return 0.5 * (B + B.T)


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    rho: float
    s: float
    spectral_gap: float


def spectral_constants(M: np.ndarray) -> SpectralReport:
    """Eigen-summary of a symmetric matrix.

    ``s`` is the smallest eigenvalue above ``1e-9 * rho``; ``spectral_gap``
    is the distance between the two largest eigenvalues.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    rho = float(eig[-1])
    tau = NULL_TOL * abs(rho)
    above = eig[eig > tau]
    s = float(above[0]) if above.size else 0.0
    gap = float(eig[-1] - eig[-2]) if eig.size > 1 else 0.0
    return SpectralReport(eig, rho, s, gap)


def laplacian(g: Graph) -> np.ndarray:
    A = incidence_matrix(g)
    return A.T @ A


def consensus_matrix(g: Graph) -> np.ndarray:
    """``W = I - L / (1 + d_max)``: symmetric and doubly stochastic."""
    dmax = int(g.degrees().max())
    return np.eye(g.n) - laplacian(g) / (1.0 + dmax)


def spectral_gap(g: Graph) -> float:
    return spectral_constants(consensus_matrix(g)).spectral_gap


@dataclass(frozen=True)
class Network:
    """A graph with its incidence matrix, penalty matrix and spectral constants."""

    graph: Graph
    A: np.ndarray
    B: np.ndarray
    rho_AtA: float
    s_AAt: float
    rho_B: float
    dmax: int

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges

    def with_penalty(self, B: np.ndarray) -> "Network":
        B = 0.5 * (np.asarray(B, dtype=float) + np.asarray(B, dtype=float).T)
        check_penalty(self.A, B)
        return replace(self, B=B, rho_B=spectral_constants(B).rho)

    def scaled(self, beta: float) -> "Network":
        """Same network with ``B = beta * A'A``."""
        return self.with_penalty(penalty_matrix(self.A, beta))


def check_penalty(A: np.ndarray, B: np.ndarray, tol: float = NULL_TOL) -> None:
    """Validate ``B`` is symmetric PSD with exactly the null space of ``A``."""
    n = A.shape[1]
    if B.shape != (n, n):
        raise ValueError(f"B must be {n}x{n}")
    if not np.allclose(B, B.T, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    rep = spectral_constants(B)
    if rep.rho <= 0:
        raise ValueError("B must be nonzero")
    allowed = (np.abs(A).T @ np.abs(A)) > 0
    if np.any((np.abs(B) > 1e-12 * rep.rho) & ~allowed):
        raise ValueError("B has entries outside the graph's edges")
    tau = tol * rep.rho
    if rep.eigenvalues[0] < -tau:
        raise ValueError("B must be positive semi-definite")
    if np.count_nonzero(rep.eigenvalues <= tau) != n - np.linalg.matrix_rank(A):
        raise ValueError("B must have the same null space as A")
    # null(A) is contained in null(B) and the dimensions agree
    null = np.linalg.svd(A)[2][np.linalg.matrix_rank(A):].T
    if null.size and np.linalg.norm(B @ null) > tau * np.sqrt(n):
        raise ValueError("B must vanish on the null space of A")


def make_network(g: Graph, beta: float = 1.0, variant: str = "scaled_gram",
                 weights=None, B: np.ndarray | None = None) -> Network:
    """Assemble a :class:`Network`; pass ``B`` to supply a custom penalty."""
    A = incidence_matrix(g)
    if B is None:
        B = penalty_matrix(A, beta, variant, weights)
    else:
        B = 0.5 * (np.asarray(B, dtype=float) + np.asarray(B, dtype=float).T)
    check_penalty(A, B)
    lap = spectral_constants(A.T @ A)
    return Network(
        graph=g,
        A=A,
        B=B,
        rho_AtA=lap.rho,
        s_AAt=lap.s,
        rho_B=spectral_constants(B).rho,
        dmax=int(g.degrees().max()),
    )
