"""
Bipartite matching kernels.

Left vertices are packets (or queues), right vertices are servers.  All
weights are expected to be exact (integers or Fractions); the vertex
weighted routine never compares floats.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import PreconditionError

__all__ = [
    "BipartiteGraph",
    "Matching",
    "max_cardinality_matching",
    "has_perfect_matching",
    "max_vertex_weight_matching",
    "max_edge_weight_matching",
    "can_saturate",
]


@dataclass
class BipartiteGraph:
    left_count: int
    right_count: int
    adj: list[list[int]]
    left_weights: Sequence | None = None
    # either {(u, v): weight} or a dense (left x right) array
    edge_weights: Mapping[tuple[int, int], object] | np.ndarray | None = None
    mask: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, left_count: int, right_count: int,
                   edges: Iterable[tuple[int, int]], left_weights=None,
                   edge_weights=None) -> "BipartiteGraph":
        adj: list[set[int]] = [set() for _ in range(left_count)]
        for u, v in edges:
            if not (0 <= u < left_count and 0 <= v < right_count):
                raise PreconditionError(f"edge ({u}, {v}) out of bounds")
            if v in adj[u]:
                raise PreconditionError(f"duplicate edge ({u}, {v})")
            adj[u].add(v)
        return cls(left_count, right_count, [sorted(a) for a in adj],
                   left_weights, edge_weights)

    @classmethod
    def from_matrix(cls, mask, left_weights=None) -> "BipartiteGraph":
        """Build from a boolean (left x right) adjacency matrix."""
        mask = np.asarray(mask, dtype=bool)
        adj = [np.flatnonzero(row).tolist() for row in mask]
        return cls(mask.shape[0], mask.shape[1], adj, left_weights, mask=mask)

    def adjacency_matrix(self) -> np.ndarray:
        if self.mask is None:
            m = np.zeros((self.left_count, self.right_count), dtype=bool)
            for u, a in enumerate(self.adj):
                m[u, a] = True
            self.mask = m
        return self.mask

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.left_count) for v in self.adj[u]]

    def induced(self, lefts: Sequence[int]) -> "BipartiteGraph":
        """Subgraph on the given left vertices (renumbered in order)."""
        return BipartiteGraph(len(lefts), self.right_count, [self.adj[u] for u in lefts])


@dataclass(frozen=True)
class Matching:
    pairs: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.pairs)

    def left_map(self) -> dict[int, int]:
        return dict(self.pairs)

    def matched_left(self) -> set[int]:
        return {u for u, _ in self.pairs}

    def matched_right(self) -> set[int]:
        return {v for _, v in self.pairs}

    def is_valid(self, g: BipartiteGraph) -> bool:
        lefts = [u for u, _ in self.pairs]
        rights = [v for _, v in self.pairs]
        return (len(set(lefts)) == len(lefts) and len(set(rights)) == len(rights)
                and all(v in g.adj[u] for u, v in self.pairs))


def _as_matching(match_left: Sequence[int]) -> Matching:
    return Matching(frozenset((u, v) for u, v in enumerate(match_left) if v >= 0))


def max_cardinality_matching(g: BipartiteGraph) -> Matching:
    """Hopcroft-Karp."""
    nl, nr = g.left_count, g.right_count
    match_l = [-1] * nl
    match_r = [-1] * nr
    inf = nl + 1

    while True:
        # BFS layering from free left vertices
        dist = [inf] * nl
        bfs = deque()
        for u in range(nl):
            if match_l[u] < 0:
                dist[u] = 0
                bfs.append(u)
        found = False
        while bfs:
            u = bfs.popleft()
            for v in g.adj[u]:
                w = match_r[v]
                if w < 0:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    bfs.append(w)
        if not found:
            break

        # iterative DFS along the layers
        it = [0] * nl
        for root in range(nl):
            if match_l[root] >= 0:
                continue
            stack = [root]
            while stack:
                u = stack[-1]
                adj_u = g.adj[u]
                advanced = False
                while it[u] < len(adj_u):
                    v = adj_u[it[u]]
                    it[u] += 1
                    w = match_r[v]
                    if w < 0:
                        # augment along the stack
                        for x in reversed(stack):
                            nxt = match_l[x]
                            match_l[x] = v
                            match_r[v] = x
                            v = nxt
                        stack.clear()
                        advanced = True
                        break
                    if dist[w] == dist[u] + 1:
                        stack.append(w)
                        advanced = True
                        break
                if not advanced:
                    dist[u] = inf
                    stack.pop()
    return _as_matching(match_l)


def has_perfect_matching(g: BipartiteGraph) -> bool:
    if g.left_count != g.right_count:
        raise PreconditionError("perfect matching needs equal sides")
    return len(max_cardinality_matching(g)) == g.left_count


def can_saturate(g: BipartiteGraph, lefts: Sequence[int]) -> bool:
    """True iff some matching covers every left vertex in ``lefts``."""
    if len(lefts) > g.right_count:
        return False
    return len(max_cardinality_matching(g.induced(lefts))) == len(lefts)


def _augment_from(g: BipartiteGraph, root: int, match_l: list[int], match_r: list[int]) -> bool:
    # BFS over alternating paths; right vertices scanned in index order.
    parent = {}
    bfs = deque([root])
    while bfs:
        u = bfs.popleft()
        for v in g.adj[u]:
            if v in parent:
                continue
            parent[v] = u
            w = match_r[v]
            if w < 0:
                while True:
                    u = parent[v]
                    nxt = match_l[u]
                    match_l[u] = v
                    match_r[v] = u
                    if u == root:
                        return True
                    v = nxt
            bfs.append(w)
    return False


def max_vertex_weight_matching(g: BipartiteGraph) -> Matching:
    """Maximum vertex-weighted matching on the left side.

    Left vertices are offered in decreasing weight order and each is added
    through an augmenting path if one exists.  Augmentation never unmatches
    a left vertex, so whenever the k heaviest left vertices can be covered
    simultaneously, the result covers them.  O(V * E).
    """
    if g.left_weights is None:
        raise PreconditionError("max_vertex_weight_matching needs left_weights")
    w = list(g.left_weights)
    if len(w) != g.left_count:
        raise PreconditionError("left_weights length mismatch")
    if len(set(w)) != len(w):
        raise PreconditionError("left weights must be distinct")
    match_l = [-1] * g.left_count
    match_r = [-1] * g.right_count
    for u in sorted(range(g.left_count), key=w.__getitem__, reverse=True):
        _augment_from(g, u, match_l, match_r)
    return _as_matching(match_l)


def max_edge_weight_matching(g: BipartiteGraph) -> Matching:
    """Maximum total edge weight, not necessarily of maximum cardinality.

    Non-edges get weight zero in a dense assignment problem; pairs landing
    on non-edges are dropped afterwards.  Weights must be integers below
    2**53 / min(left, right) so the float64 sums stay exact.
    """
    if g.edge_weights is None:
        raise PreconditionError("max_edge_weight_matching needs edge_weights")
    if g.left_count == 0 or g.right_count == 0:
        return Matching()
    mask = g.adjacency_matrix()
    if isinstance(g.edge_weights, np.ndarray):
        if g.edge_weights.shape != mask.shape:
            raise PreconditionError("edge weight matrix has the wrong shape")
        profit = np.where(mask, g.edge_weights, 0).astype(float)
    else:
        profit = np.zeros(mask.shape)
        for (u, v), wt in g.edge_weights.items():
            if not mask[u, v]:
                raise PreconditionError(f"weight given for non-edge ({u}, {v})")
            profit[u, v] = wt
    if (profit < 0).any():
        raise PreconditionError("edge weights must be nonnegative")
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return Matching(frozenset((int(u), int(v)) for u, v in zip(rows, cols)
                              if mask[u, v] and profit[u, v] > 0))
