"""Local-communication graphs and their mixing matrices.

Nodes are 0-based. Graphs are stored as sorted adjacency lists; the dense
Laplacian is only built once, at construction, to cache its spectrum.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import GenerationFailureError, InvalidParameterError, NoConvergenceError, NumericalFailureError

MAX_CONNECT_RETRIES = 100


class SensorGraph:
    """Connected undirected simple graph on ``n`` nodes."""

    def __init__(self, n: int, edges):
        if int(n) != n or n < 1:
            raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
        n = int(n)
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParameterError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidParameterError(f"edge ({i}, {j}) out of range for n={n}")
            pairs.add((min(i, j), max(i, j)))
        self.n = n
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(pairs))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        self.neighbors = tuple(tuple(sorted(v)) for v in nbrs)
        self.degrees = np.array([len(v) for v in nbrs], dtype=np.int64)
        self.d_max = int(self.degrees.max()) if n else 0

        adj = self.adjacency()
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise InvalidParameterError(f"graph is not connected ({n_comp} components)")
        lap = np.diag(self.degrees.astype(float)) - adj.toarray()
        try:
            self.laplacian_eigenvalues = np.linalg.eigvalsh(lap)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(f"Laplacian eigensolver failed: {exc}") from None

    def __repr__(self):
        return f"SensorGraph(n={self.n}, edges={len(self.edges)}, d_max={self.d_max})"

    def __eq__(self, other):
        return isinstance(other, SensorGraph) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def algebraic_connectivity(self) -> float:
        """Second smallest Laplacian eigenvalue (the usual connectivity measure)."""
        return float(self.laplacian_eigenvalues[1]) if self.n > 1 else 0.0

    @property
    def laplacian_max_eigenvalue(self) -> float:
        return float(self.laplacian_eigenvalues[-1])

    def adjacency(self) -> sparse.csr_matrix:
        if not self.edges:
            return sparse.csr_matrix((self.n, self.n))
        e = np.array(self.edges)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))

    def laplacian(self) -> sparse.csr_matrix:
        return (sparse.diags(self.degrees.astype(float)) - self.adjacency()).tocsr()

    # -- mixing matrices ----------------------------------------------------
    def consensus_matrix(self) -> sparse.csr_matrix:
        """W = I - L / d_max."""
        if self.n == 1:
            return sparse.identity(1, format="csr")
        return (sparse.identity(self.n) - self.laplacian() / self.d_max).tocsr()

    def metropolis_weights(self) -> sparse.csr_matrix:
        """c_ij = 1/max(deg_i, deg_j) on edges, diagonal makes rows sum to 1."""
        if not self.edges:
            return sparse.identity(self.n, format="csr")
        e = np.array(self.edges)
        w = 1.0 / np.maximum(self.degrees[e[:, 0]], self.degrees[e[:, 1]])
        off = sparse.csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(self.n, self.n),
        )
        # a max-degree node's weights sum to 1 exactly in theory; drop the rounding residue
        diag = np.maximum(1.0 - np.asarray(off.sum(axis=1)).ravel(), 0.0)
        return (off + sparse.diags(diag)).tocsr()

    def slem(self) -> float:
        """Second largest eigenvalue modulus of the consensus matrix."""
        if self.n == 1:
            return 0.0
        mu = 1.0 - self.laplacian_eigenvalues[1:] / self.d_max
        return float(np.max(np.abs(mu)))

    def switching_time(self, delta: float) -> int:
        return switching_time(self.slem(), delta)

    # -- I/O ------------------------------------------------------------------
    def to_edge_list(self) -> str:
        return "".join(f"{i} {j}\n" for i, j in self.edges)

    def write(self, path) -> None:
        Path(path).write_text(self.to_edge_list())

    @classmethod
    def from_edge_list(cls, text: str, n: int | None = None) -> "SensorGraph":
        """Parse ``i j`` lines (0-based). Blank lines and ``#`` comments are skipped."""
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidParameterError(f"line {lineno}: expected 'i j', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise InvalidParameterError(f"line {lineno}: node indices must be integers") from None
        if n is None:
            n = 1 + max((max(e) for e in edges), default=0)
        return cls(n, edges)

    @classmethod
    def read(cls, path, n: int | None = None) -> "SensorGraph":
        return cls.from_edge_list(Path(path).read_text(), n)


def complete_graph(n: int) -> SensorGraph:
    return SensorGraph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> SensorGraph:
    return SensorGraph(n, [(i, i + 1) for i in range(n - 1)])


def erdos_renyi(n: int, p_edge: float, seed, max_retries: int = MAX_CONNECT_RETRIES) -> SensorGraph:
    """G(n, p) conditioned on connectivity by bounded rejection sampling."""
    if int(n) != n or n < 2:
        raise InvalidParameterError(f"n must be an integer >= 2, got {n!r}")
    if not 0 < p_edge <= 1:
        raise InvalidParameterError(f"p_edge must lie in (0, 1], got {p_edge!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        keep = rng.random(iu.size) < p_edge
        try:
            return SensorGraph(n, zip(iu[keep].tolist(), ju[keep].tolist()))
        except InvalidParameterError:
            continue
    raise GenerationFailureError(
        f"no connected G({n}, {p_edge}) sample in {max_retries} attempts; p_edge is probably too small")


def slem_from_connectivity(d_max: float, lambda2: float) -> float:
    """rho = 1 - lambda2/d_max, valid when the top Laplacian eigenvalue is not dominant."""
    return 1.0 - lambda2 / d_max


def switching_time(rho: float, delta: float) -> int:
    """Smallest t >= 1 with rho^t <= delta.

    For symmetric W the spectral norm of W^t - 11^T/n equals rho^t, so this is
    the round at which consensus has mixed to within ``delta``.
    """
    if not 0 < delta <= 1:
        raise InvalidParameterError(f"delta must lie in (0, 1], got {delta!r}")
    if not rho >= 0:
        raise InvalidParameterError(f"rho must be non-negative, got {rho!r}")
    if rho >= 1:
        raise NoConvergenceError(f"rho = {rho!r} >= 1: consensus does not converge, switching time undefined")
    if rho == 0 or rho <= delta:
        return 1
    t = max(1, math.ceil(math.log(delta) / math.log(rho)))
    # guard the ceil against rounding in the log ratio
    while t > 1 and rho ** (t - 1) <= delta:
        t -= 1
    while rho**t > delta:
        t += 1
    return t
