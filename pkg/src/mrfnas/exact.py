"""Exact MAP by min-fill triangulation and max-sum clique-tree message passing.

Cost is dominated by the largest clique table, ``prod(k_v for v in C)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mrf import FactorGraph, ScoredAssignment, log_energy, tie_tolerance

DEFAULT_TABLE_BUDGET = 10**8


class CliqueBudgetExceeded(RuntimeError):
    def __init__(self, clique_size: int, table_size: int, budget: int):
        self.clique_size = clique_size
        self.table_size = table_size
        super().__init__(
            f"largest clique has {clique_size} variables and a table of {table_size} "
            f"entries (budget {budget}); use the MPLP solver instead"
        )


class CliqueTreeError(RuntimeError):
    """Internal consistency failure while building a clique tree."""


@dataclass(frozen=True)
class EliminationOrder:
    order: tuple[int, ...]
    fill_edges: tuple[tuple[int, int], ...]
    elimination_cliques: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class CliqueTree:
    cliques: tuple[tuple[int, ...], ...]
    tree_edges: tuple[tuple[int, int], ...]
    # ("u", i) / ("p", (i, j)) -> index of the clique holding that factor
    factor_assignment: dict

    def sepset(self, a: int, b: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.cliques[a]) & set(self.cliques[b])))

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.cliques]
        for a, b in self.tree_edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj


def _adjacency(n: int, edges) -> list[set[int]]:
    adj = [set() for _ in range(n)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    return adj


def _fill_count(adj: list[set[int]], v: int) -> int:
    nb = sorted(adj[v])
    return sum(1 for a in range(len(nb)) for b in nb[a + 1:] if b not in adj[nb[a]])


def triangulate_minfill(graph: FactorGraph) -> EliminationOrder:
    """Greedy min-fill elimination; ties go to the smallest variable index."""
    adj = _adjacency(graph.n, graph.edges)
    remaining = set(range(graph.n))
    original = set(graph.edges)
    order, fills, cliques = [], [], []
    while remaining:
        v = min(remaining, key=lambda u: (_fill_count(adj, u), u))
        nb = sorted(adj[v])
        for a in range(len(nb)):
            for b in nb[a + 1:]:
                if b not in adj[nb[a]]:
                    adj[nb[a]].add(b)
                    adj[b].add(nb[a])
                    e = (min(nb[a], b), max(nb[a], b))
                    if e not in original:
                        fills.append(e)
        cliques.append(tuple(sorted([v, *nb])))
        for u in nb:
            adj[u].discard(v)
        adj[v] = set()
        remaining.discard(v)
        order.append(v)
    return EliminationOrder(tuple(order), tuple(fills), tuple(cliques))


def _maximal(cliques: Sequence[tuple[int, ...]]) -> list[tuple[int, ...]]:
    sets = [frozenset(c) for c in cliques]
    keep = []
    for a, s in enumerate(sets):
        if any(s < t or (s == t and b < a) for b, t in enumerate(sets) if b != a):
            continue
        keep.append(tuple(sorted(s)))
    return keep


def build_clique_tree(graph: FactorGraph, order: EliminationOrder | None = None) -> CliqueTree:
    """Maximal cliques joined by a maximum-weight spanning tree on sepset sizes."""
    if order is None:
        order = triangulate_minfill(graph)
    cliques = _maximal(order.elimination_cliques)
    if graph.n == 0:
        return CliqueTree((), (), {})

    # Kruskal on sepset size, deterministic by (weight desc, a, b).
    candidates = []
    for a in range(len(cliques)):
        for b in range(a + 1, len(cliques)):
            w = len(set(cliques[a]) & set(cliques[b]))
            candidates.append((-w, a, b))
    candidates.sort()
    parent = list(range(len(cliques)))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    tree_edges = []
    for _, a, b in candidates:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree_edges.append((a, b))
    assignment = {}
    for i in range(graph.n):
        assignment[("u", i)] = _home(cliques, (i,))
    for e in graph.edges:
        assignment[("p", e)] = _home(cliques, e)
    tree = CliqueTree(tuple(cliques), tuple(tree_edges), assignment)
    check_running_intersection(tree)
    return tree


def _home(cliques, scope) -> int:
    for c, clique in enumerate(cliques):
        if set(scope) <= set(clique):
            return c
    raise CliqueTreeError(f"no clique contains factor scope {scope}")


def check_running_intersection(tree: CliqueTree) -> None:
    """Raise :class:`CliqueTreeError` if some variable's cliques are disconnected."""
    adj = tree.adjacency()
    variables = set().union(*map(set, tree.cliques)) if tree.cliques else set()
    for v in variables:
        holders = {c for c, cl in enumerate(tree.cliques) if v in cl}
        start = min(holders)
        seen, stack = {start}, [start]
        while stack:
            c = stack.pop()
            for d in adj[c]:
                if d in holders and d not in seen:
                    seen.add(d)
                    stack.append(d)
        if seen != holders:
            raise CliqueTreeError(f"running intersection violated for variable {v}")
    if len(tree.tree_edges) != max(len(tree.cliques) - 1, 0):
        raise CliqueTreeError("clique tree is not a spanning tree")


def clique_size(graph: FactorGraph) -> int:
    """Largest clique after min-fill triangulation (0 for an empty graph)."""
    order = triangulate_minfill(graph)
    return max((len(c) for c in order.elimination_cliques), default=0)


def _expand(table: np.ndarray, scope: Sequence[int], target: Sequence[int], cards) -> np.ndarray:
    # both scopes sorted, scope a subset of target
    shape = [cards[v] if v in scope else 1 for v in target]
    return table.reshape(shape)


def _initial_potentials(graph: FactorGraph, tree: CliqueTree, evidence=None) -> list[np.ndarray]:
    cards = graph.cards
    pots = [np.zeros([cards[v] for v in c]) for c in tree.cliques]
    for i, t in enumerate(graph.unary):
        c = tree.factor_assignment[("u", i)]
        if evidence is not None and evidence.get(i) is not None:
            t = np.full_like(t, -np.inf)
            t[evidence[i]] = graph.unary[i][evidence[i]]
        pots[c] = pots[c] + _expand(t, (i,), tree.cliques[c], cards)
    for e, t in zip(graph.edges, graph.pairwise):
        c = tree.factor_assignment[("p", e)]
        pots[c] = pots[c] + _expand(t, e, tree.cliques[c], cards)
    return pots


def _max_to(table: np.ndarray, scope: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    axes = tuple(a for a, v in enumerate(scope) if v not in keep)
    return table.max(axis=axes) if axes else table


def calibrate(graph: FactorGraph, tree: CliqueTree, evidence: dict | None = None) -> list[np.ndarray]:
    """Two-pass max-sum; returns clique max-marginals (graph constant included)."""
    if not tree.cliques:
        return []
    cards = graph.cards
    pots = _initial_potentials(graph, tree, evidence)
    adj = tree.adjacency()
    messages: dict[tuple[int, int], np.ndarray] = {}

    # Each connected clique tree is a single tree here (spanning), root at 0.
    order, parent = [], {0: None}
    stack = [0]
    while stack:
        c = stack.pop()
        order.append(c)
        for d in sorted(adj[c], reverse=True):
            if d not in parent:
                parent[d] = c
                stack.append(d)

    def send(src: int, dst: int) -> None:
        belief = pots[src]
        for nb in adj[src]:
            if nb != dst:
                sep = tree.sepset(nb, src)
                belief = belief + _expand(messages[(nb, src)], sep, tree.cliques[src], cards)
        sep = tree.sepset(src, dst)
        messages[(src, dst)] = _max_to(belief, tree.cliques[src], sep)

    for c in reversed(order):
        if parent[c] is not None:
            send(c, parent[c])
    for c in order:
        for d in adj[c]:
            if parent.get(d) == c:
                send(c, d)

    beliefs = []
    for c, clique in enumerate(tree.cliques):
        b = pots[c]
        for nb in adj[c]:
            b = b + _expand(messages[(nb, c)], tree.sepset(nb, c), clique, cards)
        beliefs.append(b + graph.constant)
    return beliefs


def _variable_max_marginal(tree: CliqueTree, beliefs, v: int) -> np.ndarray:
    c = next(c for c, cl in enumerate(tree.cliques) if v in cl)
    return _max_to(beliefs[c], tree.cliques[c], (v,))


def check_budget(graph: FactorGraph, tree: CliqueTree, budget: int) -> None:
    cards = graph.cards
    for clique in tree.cliques:
        size = int(np.prod([cards[v] for v in clique], dtype=object))
        if size > budget:
            worst = max(tree.cliques, key=len)
            raise CliqueBudgetExceeded(len(worst), size, budget)


def map_clique_tree(
    graph: FactorGraph,
    tree: CliqueTree | None = None,
    budget: int = DEFAULT_TABLE_BUDGET,
) -> ScoredAssignment:
    """Exact MAP; among (near-)ties returns the lexicographically smallest assignment.

    Decoding fixes variables in index order, each to the smallest label whose
    conditioned max-marginal still reaches the MAP score. This costs one
    calibration per variable but yields a globally consistent joint
    assignment under ties. ``tree`` may be passed to reuse the structure for
    graphs with identical edges (e.g. across Lagrange multipliers).
    """
    if graph.n == 0:
        return ScoredAssignment((), graph.constant)
    if tree is None:
        tree = build_clique_tree(graph)
    check_budget(graph, tree, budget)
    beliefs = calibrate(graph, tree)
    best = float(beliefs[0].max())
    tol = tie_tolerance(best)
    evidence: dict[int, int] = {}
    for v in range(graph.n):
        mm = _variable_max_marginal(tree, beliefs, v)
        ok = np.flatnonzero(mm >= best - tol)
        if ok.size == 0:
            raise CliqueTreeError(f"no label of variable {v} reaches the MAP score")
        evidence[v] = int(ok[0])
        if v + 1 < graph.n and mm.size > 1:
            beliefs = calibrate(graph, tree, evidence)
    x = tuple(evidence[v] for v in range(graph.n))
    return ScoredAssignment(x, log_energy(graph, x))
