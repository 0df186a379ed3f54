"""Weighted digraphs and the graph-theoretic checks the consensus analysis needs.

Convention: ``weights[i, j] = a_ij`` is the weight of the edge j -> i, i.e. agent
i *receives* information from agent j.  Agents are 0-indexed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, EmptySubset, NoSpanningTree, TooLarge

ZERO_EIG_RTOL = 1e-8
ROBUSTNESS_MAX_NODES = 12


@dataclass(frozen=True, eq=False)
class DiGraph:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ConfigError(f"adjacency must be a non-empty square matrix, got shape {w.shape}")
        if np.any(np.diag(w) != 0):
            raise ConfigError("self loops are not allowed")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("edge weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[float]]) -> "DiGraph":
        """Build from ``(tail, head, weight)`` triples; weight defaults to 1."""
        w = np.zeros((n, n))
        for e in edges:
            tail, head = int(e[0]), int(e[1])
            weight = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= tail < n and 0 <= head < n):
                raise ConfigError(f"edge {tail}->{head} out of range for n={n}")
            if tail == head:
                raise ConfigError(f"self loop at node {tail}")
            w[head, tail] = weight
        return cls(w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as ``(tail, head, weight)`` sorted by head then tail."""
        heads, tails = np.nonzero(self.weights)
        return [(int(j), int(i), float(self.weights[i, j])) for i, j in zip(heads, tails)]

    def in_neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.weights[i])]

    def out_neighbors(self, j: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.weights[:, j])]

    def reweighted(self, factors: np.ndarray) -> "DiGraph":
        """Elementwise product of the adjacency with ``factors`` (same shape)."""
        return DiGraph(self.weights * np.asarray(factors, dtype=float))

    def subgraph(self, nodes: Sequence[int]) -> "DiGraph":
        idx = list(nodes)
        return DiGraph(self.weights[np.ix_(idx, idx)])


@dataclass(frozen=True, eq=False)
class LaplacianPartition:
    root_nodes: list[int]
    nonroot_nodes: list[int]
    L_rr: np.ndarray
    L_rnr_zero_block: np.ndarray
    L_nr_r: np.ndarray
    L_nr_nr: np.ndarray


def laplacian(g: DiGraph) -> np.ndarray:
    w = g.weights
    return np.diag(w.sum(axis=1)) - w


def _reachable_from(g: DiGraph, src: int) -> set[int]:
    seen = {src}
    queue = deque([src])
    while queue:
        j = queue.popleft()
        for i in g.out_neighbors(j):
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def root_nodes(g: DiGraph) -> list[int]:
    """Nodes with a directed path to every other node."""
    return [k for k in range(g.n) if len(_reachable_from(g, k)) == g.n]


def has_spanning_tree(g: DiGraph) -> bool:
    return bool(root_nodes(g))


def zero_eigenvalue_multiplicity(L: np.ndarray) -> int:
    eig = np.linalg.eigvals(L)
    tol = ZERO_EIG_RTOL * max(1.0, np.linalg.norm(L, 2))
    return int(np.sum(np.abs(eig) < tol))


def root_partition(g: DiGraph) -> LaplacianPartition:
    roots = root_nodes(g)
    if not roots:
        raise NoSpanningTree("graph has no directed spanning tree")
    nonroots = [k for k in range(g.n) if k not in roots]
    L = laplacian(g)
    r = np.array(roots, dtype=int)
    nr = np.array(nonroots, dtype=int)
    return LaplacianPartition(
        root_nodes=roots,
        nonroot_nodes=nonroots,
        L_rr=L[np.ix_(r, r)],
        L_rnr_zero_block=L[np.ix_(r, nr)],
        L_nr_r=L[np.ix_(nr, r)],
        L_nr_nr=L[np.ix_(nr, nr)],
    )


def left_zero_eigenvector(g: DiGraph) -> np.ndarray:
    """Nonnegative p with p^T L = 0 and sum(p) = 1, supported on the root nodes."""
    part = root_partition(g)
    basis = scipy.linalg.null_space(part.L_rr.T, rcond=ZERO_EIG_RTOL)
    # the roots form one strongly connected component, so the null space is 1-d
    v = basis[:, 0]
    v = v / v.sum()
    p = np.zeros(g.n)
    p[part.root_nodes] = np.clip(v, 0.0, None)
    return p / p.sum()


def _in_masks(g: DiGraph) -> list[int]:
    masks = []
    for i in range(g.n):
        m = 0
        for j in g.in_neighbors(i):
            m |= 1 << j
        masks.append(m)
    return masks


def _reachable_mask(masks: list[int], subset: int, r: int) -> bool:
    s = subset
    while s:
        low = s & -s
        i = low.bit_length() - 1
        if bin(masks[i] & ~subset).count("1") >= r:
            return True
        s ^= low
    return False


def is_r_reachable(g: DiGraph, subset: Iterable[int], r: int) -> bool:
    nodes = set(int(k) for k in subset)
    if not nodes:
        raise EmptySubset("subset must be nonempty")
    if not nodes <= set(range(g.n)):
        raise ConfigError(f"subset {sorted(nodes)} not contained in 0..{g.n - 1}")
    return any(len(set(g.in_neighbors(i)) - nodes) >= r for i in nodes)


def is_r_robust(g: DiGraph, r: int, max_nodes: int = ROBUSTNESS_MAX_NODES) -> bool:
    """Exhaustive check over all pairs of nonempty disjoint node subsets."""
    n = g.n
    if n < 2:
        raise ConfigError("r-robustness needs at least two nodes")
    if n > max_nodes:
        raise TooLarge(f"exhaustive robustness check capped at {max_nodes} nodes, got {n}")
    masks = _in_masks(g)
    full = (1 << n) - 1
    reach = [False] + [_reachable_mask(masks, s, r) for s in range(1, full + 1)]
    for s1 in range(1, full + 1):
        if reach[s1]:
            continue
        rest = full & ~s1
        s2 = rest
        while s2:
            if not reach[s2]:
                return False
            s2 = (s2 - 1) & rest
    return True


def random_digraph(n: int, p: float, rng: np.random.Generator, weighted: bool = False) -> DiGraph:
    """Erdos-Renyi style digraph, used by tests and scripts."""
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    w = rng.uniform(0.5, 2.0, (n, n)) if weighted else np.ones((n, n))
    return DiGraph(np.where(mask, w, 0.0))


def canonical_graph() -> DiGraph:
    """Five-agent topology: 0->1, 1->2, 2->3, 2->4, 4->3 (unit weights).

    Agent 0 is the only root; agent 4 reaches only agent 3.
    """
    return DiGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (2, 4), (4, 3)])
