"""Pairwise resource models: exact MAC counts and least-squares latency fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mrf import FactorGraph, GraphError, ResourceGraph, build_graph, log_energy, validate_assignment
from .space import Template, channels, to_factor_graph_skeleton


@dataclass(frozen=True)
class ProfilingSample:
    assignment: tuple[int, ...]
    measured: float


@dataclass
class LatencyFit:
    model: ResourceGraph
    residual_rms: float
    rank_deficient: bool
    rank: int
    n_params: int


def _skeleton(structure: Template | FactorGraph) -> FactorGraph:
    if isinstance(structure, Template):
        return to_factor_graph_skeleton(structure)
    return structure


def flops_pairwise(template: Template) -> ResourceGraph:
    """MAC count of the whole network as a pairwise model.

    A layer's MACs are ``k^2 * c_in * c_out * positions`` with ``c_in`` the sum
    of its predecessors' output channels, so each predecessor edge carries
    its own share exactly. Layers fed by the network input become unaries.
    """
    nodes = template.nodes
    if any(nd.base_channels < 1 for nd in nodes):
        raise GraphError("template lacks channel metadata")
    c_out = [np.array([channels(nd.base_channels, w) for _, w in nd.labels], dtype=np.int64)
             for nd in nodes]
    ksq = [np.array([k * k for k, _ in nd.labels], dtype=np.int64) for nd in nodes]
    unary = [np.zeros(len(nd.labels), dtype=np.int64) for nd in nodes]
    edges, tables = [], []
    for v, nd in enumerate(nodes):
        per_out = ksq[v] * c_out[v] * nd.mac_positions
        preds = template.predecessors(v)
        if not preds:
            unary[v] = unary[v] + template.in_channels * per_out
        for p in preds:
            edges.append((p, v))
            tables.append(np.outer(c_out[p], per_out))
    for t in [*unary, *tables]:
        if t.size and int(np.abs(t).max()) >= 2**53:
            raise GraphError("MAC table exceeds exact float range")
    graph = build_graph(template.label_sets, unary, edges, tables)
    return ResourceGraph(graph, "MACs")


def exact_macs(model: ResourceGraph, assignment: Sequence[int]) -> int:
    """Integer-exact score of a MAC model (tables hold integers below 2**53)."""
    g = model.graph
    x = validate_assignment(g, assignment)
    total = int(g.constant)
    total += sum(int(t[x[i]]) for i, t in enumerate(g.unary))
    total += sum(int(t[x[i], x[j]]) for (i, j), t in zip(g.edges, g.pairwise))
    return total


def resource_of(model: ResourceGraph | FactorGraph, assignment: Sequence[int]) -> float:
    g = model.graph if isinstance(model, ResourceGraph) else model
    return log_energy(g, assignment)


def _columns(skel: FactorGraph):
    """Column layout of the design matrix: one block per edge, unaries only for isolated nodes."""
    blocks, offset = [], 0
    for e, (i, j) in enumerate(skel.edges):
        size = skel.cards[i] * skel.cards[j]
        blocks.append(("p", e, offset))
        offset += size
    for i in range(skel.n):
        if not skel.neighbors(i):
            blocks.append(("u", i, offset))
            offset += skel.cards[i]
    return blocks, offset


def design_matrix(skel: FactorGraph, assignments: Sequence[Sequence[int]]) -> np.ndarray:
    blocks, width = _columns(skel)
    X = np.zeros((len(assignments), width))
    for r, x in enumerate(assignments):
        for kind, idx, off in blocks:
            if kind == "p":
                i, j = skel.edges[idx]
                X[r, off + x[i] * skel.cards[j] + x[j]] = 1.0
            else:
                X[r, off + x[idx]] = 1.0
    return X


def fit_latency(
    structure: Template | FactorGraph,
    samples: Sequence[ProfilingSample],
    unit: str = "ms",
) -> LatencyFit:
    """Least-squares pairwise model of measured totals (minimum-norm solution).

    Pairwise entries are only identifiable up to shifts that cancel in every
    total, so the fit is judged by its predictions, not its entries.
    """
    if len(samples) == 0:
        raise ValueError("no profiling samples")
    skel = _skeleton(structure)
    xs = [validate_assignment(skel, s.assignment) for s in samples]
    y = np.array([s.measured for s in samples], dtype=float)
    X = design_matrix(skel, xs)
    theta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    blocks, width = _columns(skel)
    unary = [np.zeros(k) for k in skel.cards]
    tables = []
    for kind, idx, off in blocks:
        if kind == "p":
            i, j = skel.edges[idx]
            size = skel.cards[i] * skel.cards[j]
            tables.append(theta[off:off + size].reshape(skel.cards[i], skel.cards[j]))
        else:
            unary[idx] = theta[off:off + skel.cards[idx]]
    graph = build_graph(skel.label_sets, unary, skel.edges, tables)
    resid = X @ theta - y
    return LatencyFit(
        ResourceGraph(graph, unit),
        float(np.sqrt(np.mean(resid**2))),
        bool(rank < width),
        int(rank),
        width,
    )


def synthetic_latency_model(
    structure: Template | FactorGraph, seed: int, unit: str = "ms", scale: float = 1.0
) -> ResourceGraph:
    """Hidden positive pairwise latency model used in place of real hardware."""
    skel = _skeleton(structure)
    rng = np.random.default_rng(seed)
    unary = [rng.uniform(0.0, scale, size=k) for k in skel.cards]
    tables = [rng.uniform(0.0, scale, size=(skel.cards[i], skel.cards[j])) for i, j in skel.edges]
    return ResourceGraph(build_graph(skel.label_sets, unary, skel.edges, tables), unit)


def generate_profiles(
    structure: Template | FactorGraph,
    hidden_model: ResourceGraph | FactorGraph,
    noise_sigma: float,
    count: int,
    seed: int,
) -> list[ProfilingSample]:
    """Uniformly drawn architectures with (optionally noisy) hidden-model totals."""
    if count < 1:
        raise ValueError("count must be >= 1")
    skel = _skeleton(structure)
    rng = np.random.default_rng(seed)
    xs = np.stack([rng.integers(0, k, size=count) for k in skel.cards], axis=1)
    noise = rng.normal(0.0, noise_sigma, size=count) if noise_sigma > 0 else np.zeros(count)
    return [
        ProfilingSample(tuple(int(v) for v in x), resource_of(hidden_model, x) + float(eps))
        for x, eps in zip(xs, noise)
    ]
