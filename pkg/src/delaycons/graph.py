"""Digraphs and the spectral quantities of their Laplacians that consensus depends on.

Convention: ``adjacency[i, j] == 1`` means agent ``i`` receives information
from agent ``j`` (an information-flow edge ``j -> i``).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateSpectrum, ParseError

ZERO_TOL = 1e-8


@dataclass(frozen=True)
class Digraph:
    """Unweighted directed graph over ``n_agents`` agents."""

    adjacency: NDArray[np.int64]

    def __post_init__(self) -> None:
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise ValueError("a digraph needs at least 2 agents")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be 0 (no self-loops)")
        a = a.astype(np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_agents: int, edges, one_based: bool = True) -> "Digraph":
        """Build from ``(i, j)`` pairs meaning ``a_ij = 1``."""
        a = np.zeros((n_agents, n_agents), dtype=np.int64)
        off = 1 if one_based else 0
        for i, j in edges:
            a[i - off, j - off] = 1
        return cls(a)

    def neighbors(self, i: int) -> list[int]:
        """Agents that ``i`` listens to (0-based)."""
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def channels(self) -> list[tuple[int, int]]:
        """Active measurement channels as ``(receiver i, sender j)`` pairs, row-major."""
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    def edges(self) -> list[tuple[int, int]]:
        return self.channels()


@dataclass(frozen=True)
class SpectralData:
    laplacian: NDArray[np.float64]
    pi: NDArray[np.float64]
    nu: NDArray[np.float64]
    nonzero_eigs: NDArray[np.complex128]
    has_spanning_tree: bool
    is_balanced: bool
    is_undirected: bool
    lambda2: float | None = None
    lambdaN: float | None = None
    eigvecs: NDArray[np.float64] | None = field(default=None, repr=False)

    @property
    def n_agents(self) -> int:
        return self.laplacian.shape[0]


def build_laplacian(g: Digraph) -> NDArray[np.float64]:
    """Return ``L = D - A`` with ``D`` the diagonal of row sums (in-degrees)."""
    a = g.adjacency
    lap = np.diag(a.sum(axis=1)) - a
    return lap.astype(np.float64)


def _source_components(g: Digraph) -> list[list[int]]:
    """Strongly connected components that hear nobody outside themselves."""
    n_comp, labels = connected_components(g.adjacency, directed=True, connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    for i, j in g.channels():
        if labels[i] != labels[j]:
            closed[labels[i]] = False
    comps = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(n_comp) if closed[c]]
    return sorted(comps, key=lambda c: c[0])


def has_spanning_tree(g: Digraph) -> bool:
    """True iff some root agent's information reaches every agent.

    A digraph has a directed spanning tree exactly when it has a single
    strongly connected component that receives nothing from outside.
    """
    return len(_source_components(g)) == 1


def reachable_from(g: Digraph, root: int) -> set[int]:
    """Agents reachable from ``root`` along information flow (BFS)."""
    seen = {root}
    queue = deque([root])
    a = g.adjacency
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(a[:, j]):
            if int(i) not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return seen


def is_balanced(g: Digraph) -> bool:
    a = g.adjacency
    return bool(np.array_equal(a.sum(axis=0), a.sum(axis=1)))


def is_undirected(g: Digraph) -> bool:
    return bool(np.array_equal(g.adjacency, g.adjacency.T))


def _stationary(lap: NDArray[np.float64], g: Digraph) -> NDArray[np.float64]:
    # pi is supported on one closed strongly connected component S; the block
    # L_SS has zero row sums and is irreducible, so its left null vector is
    # unique and of one sign.
    comp = _source_components(g)[0]
    n = lap.shape[0]
    pi = np.zeros(n)
    if len(comp) == 1:
        pi[comp[0]] = 1.0
        return pi
    block = lap[np.ix_(comp, comp)]
    w, v = np.linalg.eig(block.T)
    k = int(np.argmin(np.abs(w)))
    vec = np.real(v[:, k])
    vec = vec / vec.sum()
    vec = np.clip(vec, 0.0, None)
    pi[comp] = vec / vec.sum()
    return pi


def spectral_decompose(g: Digraph) -> SpectralData:
    """Laplacian, stationary distribution, and nonzero spectrum of ``g``.

    Raises:
        DegenerateSpectrum: the graph has a spanning tree but a second
            eigenvalue sits within ``1e-8`` of the structural zero.
    """
    lap = build_laplacian(g)
    tree = has_spanning_tree(g)
    undirected = is_undirected(g)
    balanced = is_balanced(g)

    eigvecs = None
    if undirected:
        w, eigvecs = np.linalg.eigh(lap)
        eigs = w.astype(np.complex128)
    else:
        eigs = np.linalg.eigvals(lap)
    k0 = int(np.argmin(np.abs(eigs)))
    rest = np.delete(eigs, k0)
    if tree and np.min(np.abs(rest)) <= ZERO_TOL:
        raise DegenerateSpectrum(
            f"second eigenvalue {rest[np.argmin(np.abs(rest))]:.3g} within {ZERO_TOL} of zero"
        )
    order = np.lexsort((rest.imag, rest.real))
    rest = rest[order]

    lam2 = lamN = None
    if undirected:
        rest = rest.real.astype(np.complex128)
        lam2 = float(rest[0].real)
        lamN = float(rest[-1].real)
        eigvecs = np.delete(eigvecs, k0, axis=1)

    pi = _stationary(lap, g)
    n = g.n_agents
    return SpectralData(
        laplacian=lap,
        pi=pi,
        nu=np.sqrt(n) * pi,
        nonzero_eigs=rest,
        has_spanning_tree=tree,
        is_balanced=balanced,
        is_undirected=undirected,
        lambda2=lam2,
        lambdaN=lamN,
        eigvecs=eigvecs,
    )


def spectral_spanning_tree(spec: SpectralData, tol: float = ZERO_TOL) -> bool:
    """Spectral criterion: every nonzero-eigenvalue slot has positive real part."""
    return bool(np.all(spec.nonzero_eigs.real > tol))


def parse_graph(text: str, source: str = "<graph>") -> Digraph:
    """Parse the edge-list format: ``agents N`` header, then ``i j`` lines (1-based).

    Blank lines and ``#`` comments are ignored.
    """
    n = None
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        col = len(line) - len(line.lstrip()) + 1
        tokens = line.split()
        if n is None:
            if len(tokens) != 2 or tokens[0] != "agents":
                raise ParseError("expected header 'agents N'", lineno, col, source)
            try:
                n = int(tokens[1])
            except ValueError:
                raise ParseError(f"bad agent count {tokens[1]!r}", lineno, line.index(tokens[1]) + 1, source) from None
            if n < 2:
                raise ParseError("need at least 2 agents", lineno, line.index(tokens[1]) + 1, source)
            continue
        if len(tokens) != 2:
            raise ParseError("expected edge 'i j'", lineno, col, source)
        pair = []
        for tok in tokens:
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(f"bad agent index {tok!r}", lineno, line.index(tok) + 1, source) from None
            if not 1 <= v <= n:
                raise ParseError(f"agent index {v} outside 1..{n}", lineno, line.index(tok) + 1, source)
            pair.append(v)
        if pair[0] == pair[1]:
            raise ParseError("self-loop not allowed", lineno, col, source)
        edges.append((pair[0], pair[1]))
    if n is None:
        raise ParseError("empty graph file", 1, 1, source)
    return Digraph.from_edges(n, edges)


def load_graph(path: str | Path) -> Digraph:
    path = Path(path)
    return parse_graph(path.read_text(), source=str(path))


def format_graph(g: Digraph) -> str:
    lines = [f"agents {g.n_agents}"]
    lines += [f"{i + 1} {j + 1}" for i, j in g.channels()]
    return "\n".join(lines) + "\n"


# Four-agent topologies from the simulation study.
BENCHMARK_EDGES = [(1, 2), (2, 3), (3, 2), (3, 4), (4, 3)]


def benchmark_graph(multiplicative: bool = False) -> Digraph:
    """The four-agent test graph; ``multiplicative=True`` adds ``a_21 = 1``."""
    edges = list(BENCHMARK_EDGES)
    if multiplicative:
        edges.append((2, 1))
    return Digraph.from_edges(4, edges)
