"""Pairwise Markov random fields in the log domain.

A :class:`FactorGraph` stores one unary table per variable, one pairwise table
per edge and a scalar offset. The score of an assignment is

    constant + sum_i unary[i][x_i] + sum_(i,j) pairwise[(i,j)][x_i, x_j]

and the (unnormalised) probability is ``exp(score)``. Everything downstream
(MAP solvers, samplers, resource models) works on scores; the exponential is
only formed when a normalised distribution is requested.

Ties between assignments are always resolved towards the lexicographically
smallest label vector. Two scores closer than :func:`tie_tolerance` count as a
tie so that solvers summing in different orders agree.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

DEFAULT_MAX_SPACE = 10**7


class GraphError(ValueError):
    """Raised when a factor graph or an assignment is malformed."""


class SpaceTooLargeError(ValueError):
    """Raised when exhaustive enumeration is requested over too many states."""


def tie_tolerance(best: float) -> float:
    return 1e-9 * max(1.0, abs(best))


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise GraphError("label set must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise GraphError(f"duplicate label names in {self.labels}")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def of_size(cls, k: int) -> "LabelSet":
        return cls(tuple(str(a) for a in range(k)))


class ScoredAssignment(NamedTuple):
    assignment: tuple[int, ...]
    score: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Immutable pairwise MRF.

    Edges are stored with ``i < j``; ``pairwise[e]`` has shape
    ``(k_i, k_j)`` for ``edges[e] == (i, j)``.
    """

    label_sets: tuple[LabelSet, ...]
    unary: tuple[np.ndarray, ...]
    edges: tuple[tuple[int, int], ...]
    pairwise: tuple[np.ndarray, ...]
    constant: float = 0.0
    _edge_index: dict = field(init=False, repr=False, compare=False)
    _neighbors: tuple = field(init=False, repr=False, compare=False)
    _cards: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_cards", tuple(len(ls) for ls in self.label_sets))
        index = {e: t for t, e in enumerate(self.edges)}
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_edge_index", index)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(v)) for v in nbrs))

    @property
    def n(self) -> int:
        return len(self.label_sets)

    @property
    def cards(self) -> tuple[int, ...]:
        return self._cards

    @property
    def space_size(self) -> int:
        return int(np.prod(self.cards, dtype=object)) if self.n else 1

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edge_index

    def edge_table(self, i: int, j: int) -> np.ndarray:
        """Pairwise table oriented as ``(k_i, k_j)``."""
        if i < j:
            return self.pairwise[self._edge_index[(i, j)]]
        return self.pairwise[self._edge_index[(j, i)]].T

    def same_structure(self, other: "FactorGraph") -> bool:
        return self.cards == other.cards

    def replace(self, unary=None, pairwise=None, constant=None, edges=None) -> "FactorGraph":
        """Return a copy with some fields swapped (validated again)."""
        return build_graph(
            self.label_sets,
            self.unary if unary is None else unary,
            self.edges if edges is None else edges,
            self.pairwise if pairwise is None else pairwise,
            self.constant if constant is None else constant,
        )

    def with_tables(self, unary, pairwise) -> "FactorGraph":
        """Same structure, new tables; skips validation (shapes must already match)."""
        return FactorGraph(
            self.label_sets,
            tuple(_frozen(t) for t in unary),
            self.edges,
            tuple(_frozen(t) for t in pairwise),
            self.constant,
        )

    def __repr__(self) -> str:
        return f"FactorGraph(n={self.n}, cards={self.cards}, edges={len(self.edges)})"


@dataclass(frozen=True, eq=False)
class ResourceGraph:
    """A factor graph whose additive score is a resource (MACs, ms, ...)."""

    graph: FactorGraph
    unit: str

    def __post_init__(self):
        if not self.unit:
            raise GraphError("resource graph needs a unit tag")


def build_graph(
    label_sets: Sequence[LabelSet | Sequence[str] | int],
    unary_tables: Sequence[Sequence[float] | None] | None = None,
    edge_list: Iterable[tuple[int, int]] = (),
    pairwise_tables: Sequence = (),
    constant: float = 0.0,
) -> FactorGraph:
    """Validate inputs and assemble a :class:`FactorGraph`.

    ``label_sets`` entries may be LabelSets, sequences of names or plain
    cardinalities. Missing unary tables (``None``) default to zeros. Edges
    given as ``(j, i)`` with ``j > i`` have their table transposed.
    """
    sets = []
    for ls in label_sets:
        if isinstance(ls, LabelSet):
            sets.append(ls)
        elif isinstance(ls, (int, np.integer)):
            if ls < 1:
                raise GraphError("label set must be non-empty")
            sets.append(LabelSet.of_size(int(ls)))
        else:
            sets.append(LabelSet(tuple(str(s) for s in ls)))
    n = len(sets)
    cards = [len(s) for s in sets]

    if unary_tables is None:
        unary_tables = [None] * n
    if len(unary_tables) != n:
        raise GraphError(f"expected {n} unary tables, got {len(unary_tables)}")
    unary = []
    for i, t in enumerate(unary_tables):
        t = np.zeros(cards[i]) if t is None else np.asarray(t, dtype=float)
        if t.shape != (cards[i],):
            raise GraphError(f"unary table {i} has shape {t.shape}, expected ({cards[i]},)")
        if not np.all(np.isfinite(t)):
            raise GraphError(f"unary table {i} has non-finite values")
        unary.append(_frozen(t))

    edge_list = list(edge_list)
    pairwise_tables = list(pairwise_tables)
    if len(edge_list) != len(pairwise_tables):
        raise GraphError("edge list and pairwise tables differ in length")
    items = []
    seen = set()
    for (i, j), t in zip(edge_list, pairwise_tables):
        i, j = int(i), int(j)
        if i == j:
            raise GraphError(f"self-loop on variable {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) references a missing variable")
        t = np.asarray(t, dtype=float)
        if i > j:
            i, j, t = j, i, t.T
        if (i, j) in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        if t.shape != (cards[i], cards[j]):
            raise GraphError(
                f"pairwise table on ({i}, {j}) has shape {t.shape}, "
                f"expected ({cards[i]}, {cards[j]})"
            )
        if not np.all(np.isfinite(t)):
            raise GraphError(f"pairwise table on ({i}, {j}) has non-finite values")
        items.append(((i, j), _frozen(t)))
    items.sort(key=lambda it: it[0])

    constant = float(constant)
    if not np.isfinite(constant):
        raise GraphError("constant must be finite")
    return FactorGraph(
        label_sets=tuple(sets),
        unary=tuple(unary),
        edges=tuple(e for e, _ in items),
        pairwise=tuple(t for _, t in items),
        constant=constant,
    )


def zero_graph(cards: Sequence[int], edges: Iterable[tuple[int, int]] = ()) -> FactorGraph:
    edges = list(edges)
    return build_graph(
        list(cards), None, edges, [np.zeros((cards[i], cards[j])) for i, j in edges]
    )


def validate_assignment(graph: FactorGraph, assignment: Sequence[int]) -> tuple[int, ...]:
    a = tuple(int(v) for v in assignment)
    if len(a) != graph.n:
        raise GraphError(f"assignment has length {len(a)}, graph has {graph.n} variables")
    for i, (v, k) in enumerate(zip(a, graph.cards)):
        if not 0 <= v < k:
            raise GraphError(f"label {v} out of range for variable {i} (k={k})")
    return a


def log_energy(graph: FactorGraph, assignment: Sequence[int]) -> float:
    x = validate_assignment(graph, assignment)
    s = graph.constant
    for i, t in enumerate(graph.unary):
        s += t[x[i]]
    for (i, j), t in zip(graph.edges, graph.pairwise):
        s += t[x[i], x[j]]
    return float(s)


def _check_space(graph: FactorGraph, max_space: int) -> None:
    if graph.space_size > max_space:
        raise SpaceTooLargeError(
            f"{graph.space_size} assignments exceed the enumeration limit {max_space}"
        )


def score_table(graph: FactorGraph, max_space: int = DEFAULT_MAX_SPACE) -> np.ndarray:
    """Scores of every assignment as an array of shape ``graph.cards``."""
    _check_space(graph, max_space)
    n = graph.n
    total = np.full(graph.cards, graph.constant)
    for i, t in enumerate(graph.unary):
        shape = [1] * n
        shape[i] = t.size
        total = total + t.reshape(shape)
    for (i, j), t in zip(graph.edges, graph.pairwise):
        shape = [1] * n
        shape[i], shape[j] = t.shape
        total = total + t.reshape(shape)
    return total


def lexicographic_argmax(scores: np.ndarray) -> tuple[int, ...]:
    """Smallest multi-index (C order) whose score ties the maximum."""
    flat = scores.ravel()
    best = flat.max()
    first = int(np.flatnonzero(flat >= best - tie_tolerance(best))[0])
    return tuple(int(v) for v in np.unravel_index(first, scores.shape))


def brute_force_map(graph: FactorGraph, max_space: int = DEFAULT_MAX_SPACE) -> ScoredAssignment:
    x = lexicographic_argmax(score_table(graph, max_space))
    return ScoredAssignment(x, log_energy(graph, x))


def exact_distribution(graph: FactorGraph, max_space: int = DEFAULT_MAX_SPACE) -> np.ndarray:
    """Normalised joint probability table of shape ``graph.cards``."""
    s = score_table(graph, max_space)
    p = np.exp(s - s.max())
    return p / p.sum()


def all_assignments(cards: Sequence[int]) -> Iterable[tuple[int, ...]]:
    return itertools.product(*(range(k) for k in cards))


def combine_lagrangian(
    perf: FactorGraph, res: FactorGraph | ResourceGraph, gamma: float, target: float
) -> FactorGraph:
    """Graph scoring ``S_perf(x) + gamma * (S_res(x) - target)``."""
    if isinstance(res, ResourceGraph):
        res = res.graph
    if not perf.same_structure(res):
        raise GraphError(f"structure mismatch: {perf.cards} vs {res.cards}")
    unary = [p + gamma * r for p, r in zip(perf.unary, res.unary)]
    tables: dict[tuple[int, int], np.ndarray] = {}
    for e, t in zip(perf.edges, perf.pairwise):
        tables[e] = np.array(t)
    for e, t in zip(res.edges, res.pairwise):
        tables[e] = tables.get(e, 0.0) + gamma * t
    edges = sorted(tables)
    return build_graph(
        perf.label_sets,
        unary,
        edges,
        [tables[e] for e in edges],
        perf.constant + gamma * (res.constant - target),
    )


def negate(graph: FactorGraph) -> FactorGraph:
    return graph.replace(
        unary=[-t for t in graph.unary],
        pairwise=[-t for t in graph.pairwise],
        constant=-graph.constant,
    )


def random_graph(
    rng: np.random.Generator,
    n: int,
    k_max: int = 4,
    edge_prob: float = 0.5,
    k_min: int = 2,
    scale: float = 1.0,
    tree: bool = False,
) -> FactorGraph:
    """Random graph with Gaussian factors.

    With ``tree=True`` the edges form a random spanning tree, otherwise
    each pair is connected independently with probability ``edge_prob``.
    """
    cards = [int(k) for k in rng.integers(k_min, k_max + 1, size=n)]
    if tree:
        edges = [(int(rng.integers(0, j)), j) for j in range(1, n)]
    else:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    unary = [rng.normal(scale=scale, size=k) for k in cards]
    pairwise = [rng.normal(scale=scale, size=(cards[i], cards[j])) for i, j in edges]
    return build_graph(cards, unary, edges, pairwise)


def is_forest(graph: FactorGraph) -> bool:
    parent = list(range(graph.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in graph.edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True
