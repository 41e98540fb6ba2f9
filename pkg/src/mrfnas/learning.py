"""Learning performance factors from an architecture-loss oracle.

Two estimators are provided:

* the averaging estimator: each unary entry is minus the mean loss observed
  while that label was sampled;
* gradient descent on the expected loss ``E_{x~P}[loss(x)]`` using the
  score-function identity ``d E[l] / d theta = Cov(l(x), s_theta(x))`` where
  ``s_theta`` indicates whether factor entry ``theta`` is active in ``x``.
  Samples come from a Gibbs chain that persists across parameter updates
  (long burn-in once per epoch, short burn-in per iteration).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mrf import (
    DEFAULT_MAX_SPACE,
    FactorGraph,
    all_assignments,
    build_graph,
    exact_distribution,
    log_energy,
    validate_assignment,
)
from .sampling import GibbsChain, LsbsConfig, lsbs_draw

log = logging.getLogger(__name__)


@dataclass
class LossTrace:
    records: list[tuple[tuple[int, ...], float]] = field(default_factory=list)

    def append(self, assignment: Sequence[int], loss: float) -> None:
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss}")
        self.records.append((tuple(int(v) for v in assignment), float(loss)))

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ObjectiveOracle:
    """Loss of an architecture; lower is better.

    Stands in for evaluating a trained weight-sharing network on ``x``.
    """

    fn: Callable[[tuple[int, ...]], float]
    deterministic: bool = True
    name: str = "oracle"

    def __call__(self, x: Sequence[int]) -> float:
        v = float(self.fn(tuple(int(a) for a in x)))
        if not math.isfinite(v):
            raise ValueError(f"{self.name} returned a non-finite loss for {tuple(x)}")
        return v

    def table(self, cards: Sequence[int]) -> np.ndarray:
        """Loss of every assignment, shaped ``cards`` (deterministic oracles only)."""
        if not self.deterministic:
            raise ValueError("exact expectations need a deterministic oracle")
        return np.array([self(x) for x in all_assignments(cards)]).reshape(cards)


def separable_oracle(costs: Sequence[Sequence[float]], name: str = "separable") -> ObjectiveOracle:
    costs = [np.asarray(c, dtype=float) for c in costs]
    return ObjectiveOracle(lambda x: sum(c[v] for c, v in zip(costs, x)), name=name)


def random_separable_oracle(cards: Sequence[int], seed: int, margin: float = 0.0) -> ObjectiveOracle:
    """Per-variable costs in ``[0, 1)``.

    With ``margin > 0`` one random label per variable costs 0 and the others
    cost at least ``margin``, so the optimum is unique and well separated.
    """
    rng = np.random.default_rng(seed)
    costs = []
    for k in cards:
        if margin > 0:
            c = rng.uniform(margin, 1.0, size=k)
            c[rng.integers(0, k)] = 0.0
        else:
            c = rng.uniform(0.0, 1.0, size=k)
        costs.append(c)
    return separable_oracle(costs, f"separable:{seed}")


def graph_oracle(graph: FactorGraph, name: str = "graph") -> ObjectiveOracle:
    """Loss equal to minus the score of a hidden factor graph."""
    return ObjectiveOracle(lambda x: -log_energy(graph, x), name=name)


@dataclass
class AowsEstimate:
    graph: FactorGraph
    counts: list[np.ndarray]
    unseen: list[tuple[int, int]]


def estimate_factors_aows(
    trace: LossTrace, skeleton: FactorGraph, unseen_margin: float = 1e3
) -> AowsEstimate:
    """Unary-only graph with ``unary[i][j] = -mean(loss | x_i = j)``.

    Labels never sampled get the variable's smallest observed entry minus
    ``unseen_margin`` and are listed in ``unseen``.
    """
    if len(trace) == 0:
        raise ValueError("empty loss trace")
    sums = [np.zeros(k) for k in skeleton.cards]
    counts = [np.zeros(k, dtype=np.int64) for k in skeleton.cards]
    for x, loss in trace.records:
        x = validate_assignment(skeleton, x)
        for i, v in enumerate(x):
            sums[i][v] += loss
            counts[i][v] += 1
    unary, unseen = [], []
    for i in range(skeleton.n):
        seen = counts[i] > 0
        u = np.zeros(skeleton.cards[i])
        u[seen] = -sums[i][seen] / counts[i][seen]
        floor = u[seen].min() - unseen_margin
        for j in np.flatnonzero(~seen):
            u[j] = floor
            unseen.append((i, int(j)))
        unary.append(u)
    graph = build_graph(skeleton.label_sets, unary)
    return AowsEstimate(graph, counts, unseen)


@dataclass
class FactorGradient:
    unary: list[np.ndarray]
    pairwise: list[np.ndarray]
    stderr: "FactorGradient | None" = None

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in [*self.unary, *self.pairwise]] or [np.zeros(0)])


def _indicators(graph: FactorGraph, X: np.ndarray) -> np.ndarray:
    """Rows: samples; columns: unary entries, then pairwise entries, in factor order."""
    cols = []
    for i, k in enumerate(graph.cards):
        cols.append(np.eye(k)[X[:, i]])
    for (i, j), t in zip(graph.edges, graph.pairwise):
        cols.append(np.eye(t.size)[X[:, i] * t.shape[1] + X[:, j]])
    return np.concatenate(cols, axis=1) if cols else np.zeros((len(X), 0))


def _unflatten(graph: FactorGraph, v: np.ndarray) -> tuple[list, list]:
    unary, pairwise, off = [], [], 0
    for k in graph.cards:
        unary.append(v[off:off + k])
        off += k
    for t in graph.pairwise:
        pairwise.append(v[off:off + t.size].reshape(t.shape))
        off += t.size
    return unary, pairwise


def grad_expected_loss(
    graph: FactorGraph,
    oracle: ObjectiveOracle | Sequence[float],
    samples: Sequence[Sequence[int]],
    marginals: np.ndarray | None = None,
    baseline: float = 0.0,
) -> FactorGradient:
    """Score-function estimate of the gradient of ``E_P[loss]``.

    ``mean_s (l(x_s) - baseline) * (s(x_s) - mu)`` where ``mu`` are the entry
    activation probabilities; without ``marginals`` they are estimated from
    the same batch. ``oracle`` may also be a sequence of precomputed losses.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    X = np.asarray(samples, dtype=np.int64).reshape(len(samples), graph.n)
    losses = np.asarray(
        [oracle(x) for x in X] if callable(oracle) else oracle, dtype=float
    ) - baseline
    S = _indicators(graph, X)
    if marginals is None:
        mu = S.mean(axis=0)
        # same mean (the centred indicators sum to zero), but the right spread for stderr
        losses = losses - losses.mean()
    else:
        mu = np.asarray(marginals)
    terms = losses[:, None] * (S - mu)
    g = terms.mean(axis=0)
    se = terms.std(axis=0, ddof=1) / np.sqrt(len(X)) if len(X) > 1 else np.full_like(g, np.inf)
    return FactorGradient(*_unflatten(graph, g), stderr=FactorGradient(*_unflatten(graph, se)))


def _entry_marginals(graph: FactorGraph, P: np.ndarray) -> tuple[list, list]:
    n = graph.n
    unary = [P.sum(axis=tuple(a for a in range(n) if a != i)) for i in range(n)]
    pairwise = [P.sum(axis=tuple(a for a in range(n) if a not in e)) for e in graph.edges]
    return unary, pairwise


def expected_loss(graph: FactorGraph, losses: np.ndarray, max_space: int = DEFAULT_MAX_SPACE) -> float:
    return float((exact_distribution(graph, max_space) * losses).sum())


def grad_expected_loss_exact(
    graph: FactorGraph, oracle: ObjectiveOracle | np.ndarray, max_space: int = DEFAULT_MAX_SPACE
) -> FactorGradient:
    """Exact ``Cov_P(loss, s)`` by enumerating every assignment."""
    L = oracle.table(graph.cards) if callable(oracle) else np.asarray(oracle, dtype=float)
    P = exact_distribution(graph, max_space)
    mean = float((P * L).sum())
    mu_u, mu_p = _entry_marginals(graph, P)
    pl_u, pl_p = _entry_marginals(graph, P * L)
    return FactorGradient(
        [a - mean * b for a, b in zip(pl_u, mu_u)],
        [a - mean * b for a, b in zip(pl_p, mu_p)],
    )


def apply_step(graph: FactorGraph, grad: FactorGradient, step: float) -> FactorGraph:
    """Descent step on the expected loss (ascent on its negation)."""
    return graph.with_tables(
        [u - step * g for u, g in zip(graph.unary, grad.unary)],
        [t - step * g for t, g in zip(graph.pairwise, grad.pairwise)],
    )


@dataclass
class LearnResult:
    graph: FactorGraph
    loss_history: list[float]
    trace: LossTrace
    sweeps: int
    updates: int


def learn_factors(
    skeleton: FactorGraph,
    oracle: ObjectiveOracle,
    epochs: int = 10,
    iters_per_epoch: int = 100,
    lsbs: LsbsConfig = LsbsConfig(),
    step_size: float = 3e-4,
    seed: int = 0,
    warmup: int = 0,
    decay: float = 0.95,
) -> LearnResult:
    """Stochastic gradient descent on ``E_P[loss]`` over all factor entries.

    Per epoch: one long-burn-in draw, then ``iters_per_epoch`` rounds of
    short-burn-in draw, gradient estimate, update. Entry marginals and the
    loss baseline are exponential moving averages (``decay``) over drawn
    samples, which keeps the estimator informative when ``n_mc == 1``.
    Epochs before ``warmup`` sample and record losses but do not update.
    """
    if step_size < 0:
        raise ValueError("step_size must be non-negative")
    graph = skeleton
    chain = GibbsChain.start(graph, seed)
    trace = LossTrace()
    history: list[float] = []
    mu = np.concatenate(
        [np.full(k, 1.0 / k) for k in graph.cards]
        + [np.full(t.size, 1.0 / t.size) for t in graph.pairwise]
        or [np.zeros(0)]
    )
    baseline = None
    updates = 0

    def observe(samples):
        nonlocal mu, baseline
        losses = [oracle(x) for x in samples]
        for x, loss in zip(samples, losses):
            trace.append(x, loss)
        S = _indicators(graph, np.asarray(samples, dtype=np.int64)).mean(axis=0)
        mu = decay * mu + (1 - decay) * S
        m = float(np.mean(losses))
        baseline = m if baseline is None else decay * baseline + (1 - decay) * m
        return losses

    for epoch in range(epochs):
        observe(lsbs_draw(chain, lsbs, "epoch_start"))
        for _ in range(iters_per_epoch):
            samples = lsbs_draw(chain, lsbs, "iteration")
            b = baseline
            losses = observe(samples)
            history.append(float(np.mean(losses)))
            if epoch < warmup or step_size == 0:
                continue
            grad = grad_expected_loss(graph, losses, samples, marginals=mu, baseline=b)
            graph = apply_step(graph, grad, step_size)
            chain.rebind(graph)
            updates += 1
        log.debug("epoch %d mean loss %.4f", epoch, np.mean(history[-iters_per_epoch:]))
    return LearnResult(graph, history, trace, chain.sweeps, updates)
