"""Systematic-scan Gibbs sampling with the long/short burn-in scheme."""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .mrf import FactorGraph, validate_assignment

# Conditionals for a variable are tabulated over its neighbours' joint states
# when that table has at most this many rows.
_TABLE_ROWS = 4096
# Short runs sample straight from the factors instead of tabulating first.
_TABULATE_AFTER = 32


def gibbs_conditional(graph: FactorGraph, state, var: int) -> np.ndarray:
    """P(x_var = a | Markov blanket) for every label ``a``."""
    logits = np.array(graph.unary[var])
    for j in graph.neighbors(var):
        logits = logits + graph.edge_table(var, j)[:, state[j]]
    p = np.exp(logits - logits.max())
    return p / p.sum()


class _ConditionalTables:
    """Cumulative conditionals per variable, indexed by neighbour configuration."""

    def __init__(self, graph: FactorGraph):
        self.nbrs = [graph.neighbors(i) for i in range(graph.n)]
        self.strides = []
        self.cdfs = []
        for i in range(graph.n):
            nb = self.nbrs[i]
            ks = [graph.cards[j] for j in nb]
            rows = int(np.prod(ks)) if ks else 1
            if rows > _TABLE_ROWS:
                self.strides.append(None)
                self.cdfs.append(None)
                continue
            strides = [int(np.prod(ks[t + 1:])) for t in range(len(ks))]
            logits = np.broadcast_to(graph.unary[i], (*ks, graph.cards[i])).copy()
            for t, j in enumerate(nb):
                shape = [1] * len(ks) + [graph.cards[i]]
                shape[t] = ks[t]
                logits = logits + graph.edge_table(i, j).T.reshape(shape)
            logits = logits.reshape(rows, graph.cards[i])
            p = np.exp(logits - logits.max(axis=1, keepdims=True))
            cdf = np.cumsum(p, axis=1)
            cdf /= cdf[:, -1:]
            self.strides.append(strides)
            self.cdfs.append([list(row[:-1]) for row in cdf])


@dataclass
class GibbsChain:
    """Single-owner sampler state. ``steps_taken`` counts single-variable updates."""

    graph: FactorGraph
    state: list[int]
    rng: np.random.Generator
    steps_taken: int = 0
    _tables: _ConditionalTables | None = field(default=None, repr=False)

    @classmethod
    def start(cls, graph: FactorGraph, seed: int | np.random.Generator = 0, state=None) -> "GibbsChain":
        """New chain; the initial state is drawn uniformly unless given."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        if state is None:
            state = [int(rng.integers(0, k)) for k in graph.cards]
        else:
            state = list(validate_assignment(graph, state))
        return cls(graph, state, rng)

    @property
    def sweeps(self) -> int:
        return self.steps_taken // max(self.graph.n, 1)

    def rebind(self, graph: FactorGraph) -> None:
        """Point the chain at updated factors, keeping the current state."""
        if graph.cards != self.graph.cards:
            raise ValueError("new graph has a different variable structure")
        self.graph = graph
        self._tables = None

    def run(self, sweeps: int, record: bool = False) -> np.ndarray | None:
        """Advance ``sweeps`` full scans in index order; optionally return every post-sweep state."""
        g = self.graph
        n = g.n
        if self._tables is None and sweeps >= _TABULATE_AFTER:
            self._tables = _ConditionalTables(g)
        tab = self._tables
        x = self.state
        out = np.empty((sweeps, n), dtype=np.int64) if record else None
        chunk = 4096
        done = 0
        while done < sweeps:
            m = min(chunk, sweeps - done)
            us = self.rng.random((m, n)).tolist()
            for s in range(m):
                u = us[s]
                for i in range(n):
                    strides = None if tab is None else tab.strides[i]
                    if strides is None:
                        cdf = np.cumsum(gibbs_conditional(g, x, i))
                        x[i] = min(int(np.searchsorted(cdf, u[i], side="right")), g.cards[i] - 1)
                        continue
                    row = 0
                    for j, st in zip(tab.nbrs[i], strides):
                        row += x[j] * st
                    x[i] = bisect_right(tab.cdfs[i][row], u[i])
                if record:
                    out[done + s] = x
            done += m
        self.steps_taken += sweeps * n
        return out


def gibbs_sweep(chain: GibbsChain) -> GibbsChain:
    chain.run(1)
    return chain


@dataclass(frozen=True)
class LsbsConfig:
    n_long: int = 10000
    n_short: int = 10
    n_mc: int = 1
    # Gumbel-Softmax temperature; kept for configuration parity, the
    # score-function estimator does not use it
    tau: float = 1.0

    def __post_init__(self):
        if min(self.n_long, self.n_short) < 0 or self.tau < 0:
            raise ValueError("LSBS settings must be non-negative")
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")

    def sweeps_per_draw(self, phase: str) -> int:
        return (self.n_long if phase == "epoch_start" else self.n_short) + self.n_mc


def lsbs_draw(
    chain: GibbsChain, config: LsbsConfig, phase: Literal["epoch_start", "iteration"]
) -> list[tuple[int, ...]]:
    """Burn in (long at epoch start, short otherwise), then keep ``n_mc`` states.

    Each kept state costs one sweep, so a draw costs ``burn-in + n_mc`` sweeps.
    """
    if phase not in ("epoch_start", "iteration"):
        raise ValueError(f"unknown phase {phase!r}")
    chain.run(config.n_long if phase == "epoch_start" else config.n_short)
    states = chain.run(config.n_mc, record=True)
    return [tuple(int(v) for v in row) for row in states]


def empirical_joint(samples, cards) -> np.ndarray:
    counts = np.zeros(cards)
    idx = np.ravel_multi_index(np.asarray(samples).T, cards)
    np.add.at(counts.reshape(-1), idx, 1)
    return counts / len(samples)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
