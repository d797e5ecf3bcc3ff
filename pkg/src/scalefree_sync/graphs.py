"""Weighted directed graphs and the matrices that drive agent coupling.

Convention: ``weights[i, j] = a_ij`` is the weight of the edge j -> i, i.e.
agent i listens to agent j. Node ids are 0-based internally and 1-based in
edge-list files.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundTooSmall, ShapeMismatch, ZeroNotSimple

__all__ = [
    "DiGraph",
    "Laplacian",
    "RowStochastic",
    "laplacian",
    "row_stochastic",
    "has_spanning_tree",
    "spectral_spanning_tree",
    "nonzero_spectrum",
    "cycle",
    "path",
    "star",
    "random_tree",
    "from_edges",
    "parse_edge_list",
    "read_edge_list",
    "from_spec",
]

ROW_SUM_TOL = 1e-12
ZERO_EIG_RTOL = 1e-8


@dataclass(frozen=True)
class DiGraph:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise ShapeMismatch(f"adjacency must be a nonempty square matrix, got {w.shape}")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def in_degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def edges(self):
        """Yield ``(src, dst, weight)`` with 0-based ids."""
        dst, src = np.nonzero(self.weights)
        for i, j in zip(dst, src):
            yield int(j), int(i), float(self.weights[i, j])


@dataclass(frozen=True)
class Laplacian:
    L: np.ndarray


@dataclass(frozen=True)
class RowStochastic:
    D: np.ndarray
    din_bar: np.ndarray = field(default=None)


def laplacian(g: DiGraph) -> Laplacian:
    a = g.weights
    L = -a.copy()
    L[np.diag_indices_from(L)] = a.sum(axis=1)
    return Laplacian(L)


def row_stochastic(g: DiGraph, din_bar=None) -> RowStochastic:
    """Scaled coupling matrix ``D = I - (I + D_in)^-1 L``.

    ``din_bar`` defaults to the actual in-degrees. Each entry must bound the
    in-degree of its node from above, otherwise ``d_ii`` could hit zero or go
    negative.
    """
    deg = g.in_degree
    if din_bar is None:
        din_bar = deg.copy()
    din_bar = np.broadcast_to(np.asarray(din_bar, dtype=float), deg.shape).copy()
    short = np.nonzero(din_bar < deg)[0]
    if short.size:
        i = int(short[0])
        raise BoundTooSmall(
            f"din_bar[{i}] = {din_bar[i]} is below the in-degree {deg[i]} of node {i + 1}"
        )
    D = g.weights / (1.0 + din_bar)[:, None]
    D[np.diag_indices_from(D)] = 1.0 - D.sum(axis=1)
    return RowStochastic(D, din_bar)


def has_spanning_tree(g: DiGraph) -> bool:
    """True iff some node reaches every other node along directed edges."""
    n = g.n
    # out-neighbours: j -> i whenever a_ij > 0
    succ = [np.nonzero(g.weights[:, j])[0] for j in range(n)]
    # a root must have in-degree zero if any node does; at most one such node may exist
    sources = np.nonzero(g.in_degree == 0)[0]
    if sources.size > 1:
        return False
    candidates = sources if sources.size else range(n)
    for root in candidates:
        seen = np.zeros(n, dtype=bool)
        seen[root] = True
        queue = deque([root])
        while queue:
            j = queue.popleft()
            for i in succ[j]:
                if not seen[i]:
                    seen[i] = True
                    queue.append(i)
        if seen.all():
            return True
    return False


def _zero_multiplicity(L: np.ndarray) -> tuple[int, np.ndarray]:
    eig = np.linalg.eigvals(L)
    scale = np.linalg.norm(L, 2)
    tol = ZERO_EIG_RTOL * scale if scale > 0 else ZERO_EIG_RTOL
    return int(np.sum(np.abs(eig) < tol)), eig


def spectral_spanning_tree(g: DiGraph) -> bool:
    """Spectral counterpart of :func:`has_spanning_tree` (simple zero eigenvalue)."""
    if g.n == 1:
        return True
    count, _ = _zero_multiplicity(laplacian(g).L)
    return count == 1


def nonzero_spectrum(mat) -> np.ndarray:
    """Spectrum with the synchronized-mode eigenvalue removed.

    For a :class:`Laplacian` this drops the simple eigenvalue 0; for a
    :class:`RowStochastic` it drops the simple eigenvalue 1. Raises
    :class:`ZeroNotSimple` when that eigenvalue is repeated.
    """
    if isinstance(mat, RowStochastic):
        M = np.eye(mat.D.shape[0]) - mat.D
        shift = 1.0
    else:
        M = mat.L if isinstance(mat, Laplacian) else np.asarray(mat, dtype=float)
        shift = 0.0
    if M.shape[0] == 1:
        return np.empty(0, dtype=complex)
    count, eig = _zero_multiplicity(M)
    if count != 1:
        raise ZeroNotSimple(f"synchronized-mode eigenvalue has multiplicity {count}")
    keep = np.ones(eig.size, dtype=bool)
    keep[np.argmin(np.abs(eig))] = False
    rest = eig[keep].astype(complex)
    if shift:
        rest = shift - rest
    return rest


# ---------------------------------------------------------------------------
# construction helpers

def from_edges(n: int, edges) -> DiGraph:
    """Build a graph from ``(src, dst, weight)`` triples (0-based); duplicates add up."""
    w = np.zeros((n, n))
    for src, dst, weight in edges:
        if not (0 <= src < n and 0 <= dst < n):
            raise ValueError(f"edge {src}->{dst} outside 0..{n - 1}")
        if src == dst:
            raise ValueError(f"self-loop at node {src + 1}")
        w[dst, src] += weight
    return DiGraph(w)


def parse_edge_list(text: str, n: int | None = None) -> DiGraph:
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'src dst weight', got {raw!r}")
        src, dst, weight = int(parts[0]), int(parts[1]), float(parts[2])
        if src < 1 or dst < 1:
            raise ValueError(f"line {lineno}: node ids are 1-based")
        edges.append((src - 1, dst - 1, weight))
    if n is None:
        n = max((max(s, d) for s, d, _ in edges), default=0) + 1
    return from_edges(n, edges)


def read_edge_list(path, n: int | None = None) -> DiGraph:
    with open(path) as fh:
        return parse_edge_list(fh.read(), n)


def write_edge_list(g: DiGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write("# src dst weight\n")
        for src, dst, w in g.edges():
            fh.write(f"{src + 1} {dst + 1} {w!r}\n")


def cycle(n: int) -> DiGraph:
    """Directed ring 1 -> 2 -> ... -> n -> 1 with unit weights."""
    w = np.zeros((n, n))
    if n > 1:
        for i in range(n):
            w[(i + 1) % n, i] = 1.0
    return DiGraph(w)


def path(n: int) -> DiGraph:
    w = np.zeros((n, n))
    for i in range(n - 1):
        w[i + 1, i] = 1.0
    return DiGraph(w)


def star(n: int) -> DiGraph:
    """Node 1 broadcasts to the ``n - 1`` leaves."""
    w = np.zeros((n, n))
    w[1:, 0] = 1.0
    return DiGraph(w)


def random_tree(n: int, seed: int = 0, weight_range=(0.5, 2.0)) -> DiGraph:
    """Random directed spanning tree with random edge weights.

    Nodes are visited in a random order; each node after the first picks a
    parent uniformly among the nodes already placed.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    w = np.zeros((n, n))
    for k in range(1, n):
        parent = order[rng.integers(k)]
        w[order[k], parent] = rng.uniform(*weight_range)
    return DiGraph(w)


_GENERATORS = {"cycle": cycle, "path": path, "star": star, "random_tree": random_tree}
_SPEC_RE = re.compile(r"^\s*(\w+)\s*\(\s*([^)]*)\)\s*$")


def from_spec(spec: str) -> DiGraph:
    """Build a generator graph from a string such as ``"cycle(60)"`` or ``"random_tree(25, 7)"``."""
    m = _SPEC_RE.match(spec)
    if not m or m.group(1) not in _GENERATORS:
        raise ValueError(f"unknown graph spec {spec!r}; expected one of {sorted(_GENERATORS)}")
    args = [int(a) for a in m.group(2).split(",") if a.strip()]
    return _GENERATORS[m.group(1)](*args)
