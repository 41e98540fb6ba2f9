"""Diverse M-best MAP with Hamming penalties on the unary factors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .mrf import FactorGraph, ScoredAssignment, log_energy, validate_assignment

Solver = Literal["exact", "mplp"]


@dataclass(frozen=True)
class DiverseConfig:
    m: int = 5
    L: float = 10.0
    solver: Solver = "exact"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.solver not in ("exact", "mplp"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class DiverseSolutionSet:
    solutions: list[ScoredAssignment]
    lambdas: list[np.ndarray] = field(default_factory=list)
    duplicates: list[bool] = field(default_factory=list)
    # penalised graph each solution was the MAP of (index 0 is the original)
    penalized: list[FactorGraph] = field(default_factory=list, repr=False)

    def best(self) -> ScoredAssignment:
        return max(self.solutions, key=lambda s: s.score)


def lambda_vector(unaries: Sequence[np.ndarray], L: float) -> np.ndarray:
    """Per-variable penalty: range of the current unary table divided by ``L``."""
    if not L > 0:
        raise ValueError("L must be positive")
    return np.array([(float(np.max(u)) - float(np.min(u))) / L for u in unaries])


def apply_hamming_penalty(
    graph: FactorGraph, previous: Sequence[int], lam: Sequence[float]
) -> FactorGraph:
    x = validate_assignment(graph, previous)
    unary = []
    for i, u in enumerate(graph.unary):
        u = np.array(u)
        u[x[i]] -= lam[i]
        unary.append(u)
    return graph.replace(unary=unary)


def solve_map(graph: FactorGraph, solver: Solver = "exact", **kwargs) -> ScoredAssignment:
    if solver == "exact":
        from .exact import map_clique_tree

        return map_clique_tree(graph, **kwargs)
    if solver == "mplp":
        from .mplp import map_mplp

        r = map_mplp(graph, **kwargs)
        return ScoredAssignment(r.assignment, r.primal)
    raise ValueError(f"unknown solver {solver!r}")


def diverse_mbest(
    graph: FactorGraph,
    config: DiverseConfig = DiverseConfig(),
    solve: Callable[[FactorGraph], ScoredAssignment] | None = None,
    first: ScoredAssignment | None = None,
) -> DiverseSolutionSet:
    """Sequentially re-solve MAP with penalties against all earlier solutions.

    Reported scores are evaluated on the original ``graph``. ``solve``
    overrides the configured solver (e.g. to reuse a clique tree) and
    ``first`` may carry an already computed MAP of ``graph``.
    """
    if solve is None:
        solve = lambda g: solve_map(g, config.solver)  # noqa: E731
    current = graph
    x = first.assignment if first is not None else solve(graph).assignment
    out = DiverseSolutionSet([ScoredAssignment(x, log_energy(graph, x))], [], [False], [graph])
    seen = {x}
    for _ in range(1, config.m):
        lam = lambda_vector(current.unary, config.L)
        current = apply_hamming_penalty(current, x, lam)
        x = solve(current).assignment
        out.solutions.append(ScoredAssignment(x, log_energy(graph, x)))
        out.lambdas.append(lam)
        out.duplicates.append(x in seen)
        out.penalized.append(current)
        seen.add(x)
    return out
