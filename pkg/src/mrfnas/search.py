"""Resource-constrained search by bisection on the Lagrange multiplier.

For ``gamma <= 0`` the combined graph scores ``perf(x) + gamma * (res(x) - R_T)``.
Its maximiser's resource is non-increasing as ``gamma`` decreases, so the
largest feasible ``gamma`` is found by bisection; diverse M-best is then run
once at that multiplier.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .diverse import DiverseConfig, Solver, diverse_mbest
from .exact import build_clique_tree, map_clique_tree
from .learning import LearnResult, ObjectiveOracle, learn_factors
from .mplp import map_mplp
from .mrf import (
    FactorGraph,
    GraphError,
    ResourceGraph,
    ScoredAssignment,
    build_graph,
    combine_lagrangian,
    log_energy,
    negate,
    random_graph,
    score_table,
)
from .sampling import LsbsConfig
from .space import Template, decode, to_factor_graph_skeleton

log = logging.getLogger(__name__)

REPORT_FORMAT = "mrfnas-report"
REPORT_VERSION = 1


class InfeasibleError(RuntimeError):
    def __init__(self, target: float, min_resource: float):
        self.target = target
        self.min_resource = min_resource
        super().__init__(
            f"no assignment meets the target {target:g}; smallest resource found {min_resource:g}"
        )


class UnitMismatchError(GraphError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    target: float
    unit: str | None = None
    n_iter: int = 20
    m: int = 5
    L: float = 10.0
    solver: Solver = "exact"
    gamma_lo: float = -1.0
    max_expansions: int = 20

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.gamma_lo < 0:
            raise ValueError("gamma_lo must be negative")


@dataclass
class GammaRecord:
    gamma: float
    assignment: tuple[int, ...]
    map_score: float
    perf: float
    resource: float
    feasible: bool
    bound: float


@dataclass
class SolutionRecord:
    assignment: tuple[int, ...]
    perf: float
    resource: float
    feasible: bool
    duplicate: bool


@dataclass
class SearchReport:
    target: float
    unit: str | None
    gamma: float
    records: list[GammaRecord]
    solutions: list[SolutionRecord]
    inference_count: int
    # smallest Lagrangian dual value seen; bounds the constrained optimum from above
    bound: float
    notes: list[str] = field(default_factory=list)

    def best_feasible(self) -> SolutionRecord | None:
        feas = [s for s in self.solutions if s.feasible]
        return max(feas, key=lambda s: s.perf) if feas else None

    @property
    def gap(self) -> float | None:
        best = self.best_feasible()
        return None if best is None else self.bound - best.perf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = REPORT_FORMAT
        d["version"] = REPORT_VERSION
        for s in [*d["solutions"], *d["records"]]:
            s["assignment"] = list(s["assignment"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchReport":
        if d.get("format") != REPORT_FORMAT or d.get("version") != REPORT_VERSION:
            raise ValueError("not a search report (or unsupported version)")
        return cls(
            target=d["target"],
            unit=d["unit"],
            gamma=d["gamma"],
            records=[
                GammaRecord(**{**r, "assignment": tuple(r["assignment"])}) for r in d["records"]
            ],
            solutions=[
                SolutionRecord(**{**s, "assignment": tuple(s["assignment"])}) for s in d["solutions"]
            ],
            inference_count=d["inference_count"],
            bound=d["bound"],
            notes=list(d["notes"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "SearchReport":
        return cls.from_dict(json.loads(text))


class _Solver:
    """MAP oracle over graphs sharing one structure; counts calls."""

    def __init__(self, kind: Solver, template_graph: FactorGraph):
        self.kind = kind
        self.calls = 0
        self.tree = build_clique_tree(template_graph) if kind == "exact" else None

    def solve(self, graph: FactorGraph) -> tuple[ScoredAssignment, float]:
        self.calls += 1
        if self.kind == "exact":
            sa = map_clique_tree(graph, self.tree)
            return sa, sa.score
        r = map_mplp(graph)
        return ScoredAssignment(r.assignment, r.primal), r.dual


def _resource_graph(res) -> tuple[FactorGraph, str | None]:
    if isinstance(res, ResourceGraph):
        return res.graph, res.unit
    return res, None


def binary_search_gamma(
    perf: FactorGraph, res: ResourceGraph | FactorGraph, config: SearchConfig
) -> SearchReport:
    """Largest feasible multiplier by bisection, then diverse M-best there."""
    res_graph, unit = _resource_graph(res)
    if config.unit is not None and unit is not None and config.unit != unit:
        raise UnitMismatchError(f"target is in {config.unit} but the resource model is in {unit}")
    if not perf.same_structure(res_graph):
        raise GraphError("performance and resource graphs differ in structure")
    R = config.target
    solver = _Solver(config.solver, combine_lagrangian(perf, res_graph, -1.0, 0.0))
    records: list[GammaRecord] = []
    notes: list[str] = []

    def probe(gamma: float) -> GammaRecord:
        g = combine_lagrangian(perf, res_graph, gamma, R)
        sa, bound = solver.solve(g)
        r = log_energy(res_graph, sa.assignment)
        rec = GammaRecord(gamma, sa.assignment, sa.score, log_energy(perf, sa.assignment), r, r <= R, bound)
        records.append(rec)
        log.debug("gamma=%.6g resource=%.6g feasible=%s", gamma, r, rec.feasible)
        return rec

    best = probe(0.0)
    if not best.feasible:
        lo = config.gamma_lo
        rec = probe(lo)
        expansions = 0
        while not rec.feasible and expansions < config.max_expansions:
            lo *= 2
            rec = probe(lo)
            expansions += 1
        if not rec.feasible:
            low = solver.solve(negate(res_graph))[0]
            raise InfeasibleError(R, min(-low.score, min(r.resource for r in records)))
        if expansions:
            notes.append(f"bracket expanded {expansions} times to gamma={lo:g}")
        best, hi = rec, 0.0
        for _ in range(config.n_iter):
            mid = 0.5 * (lo + hi)
            rec = probe(mid)
            if rec.feasible:
                lo, best = mid, rec
            else:
                hi = mid
        if records[-1] is not best:
            notes.append("last bisection iterate infeasible; using the best feasible gamma seen")

    diverse = diverse_mbest(
        combine_lagrangian(perf, res_graph, best.gamma, R),
        DiverseConfig(config.m, config.L, config.solver),
        solve=lambda g: solver.solve(g)[0],
        first=ScoredAssignment(best.assignment, best.map_score),
    )
    solutions = []
    for sa, dup in zip(diverse.solutions, diverse.duplicates):
        r = log_energy(res_graph, sa.assignment)
        solutions.append(SolutionRecord(sa.assignment, log_energy(perf, sa.assignment), r, r <= R, dup))
    if config.solver == "mplp":
        bound = min(r.bound for r in records)
    else:
        bound = min(r.map_score for r in records)
    return SearchReport(R, unit or config.unit, best.gamma, records, solutions, solver.calls, bound, notes)


@dataclass
class GroundTruth:
    percentile: float
    target: float
    assignment: tuple[int, ...]
    perf: float
    resource: float


@dataclass
class SyntheticInstance:
    perf: FactorGraph
    res: ResourceGraph
    true_perf: FactorGraph
    ground_truth: list[GroundTruth]
    unconstrained: tuple[int, ...]


def constrained_optimum(
    perf: FactorGraph, res: FactorGraph, target: float
) -> tuple[tuple[int, ...], float, float] | None:
    """Brute-force best feasible assignment (lexicographic tie-break), or None."""
    P = score_table(perf)
    Rs = score_table(res)
    masked = np.where(Rs <= target, P, -np.inf)
    if not np.isfinite(masked).any():
        return None
    flat = masked.ravel()
    idx = int(np.flatnonzero(flat == flat.max())[0])
    x = tuple(int(v) for v in np.unravel_index(idx, P.shape))
    return x, log_energy(perf, x), log_energy(res, x)


def synthetic_benchmark(
    seed: int,
    n_vars: int = 5,
    k: int = 3,
    edge_prob: float = 0.5,
    noise: float = 0.0,
    percentiles: Sequence[float] = (25, 50, 75),
) -> SyntheticInstance:
    """Random enumerable instance with brute-force constrained optima.

    ``perf`` is the hidden performance model plus Gaussian noise of scale
    ``noise`` on every entry (what a learned model would look like); ground
    truth is always measured on the hidden model. Resources are positive.
    """
    rng = np.random.default_rng(seed)
    true_perf = random_graph(rng, n_vars, k_max=k, k_min=k, edge_prob=edge_prob)
    cards = true_perf.cards
    res = build_graph(
        cards,
        [rng.uniform(0.0, 1.0, size=c) for c in cards],
        true_perf.edges,
        [rng.uniform(0.0, 1.0, size=(cards[i], cards[j])) for i, j in true_perf.edges],
    )
    if noise > 0:
        perf = true_perf.with_tables(
            [u + rng.normal(0, noise, u.shape) for u in true_perf.unary],
            [t + rng.normal(0, noise, t.shape) for t in true_perf.pairwise],
        )
    else:
        perf = true_perf
    all_res = score_table(res).ravel()
    truth = []
    for p in percentiles:
        target = float(np.percentile(all_res, p))
        x, pv, rv = constrained_optimum(true_perf, res, target)
        truth.append(GroundTruth(float(p), target, x, pv, rv))
    unconstrained = constrained_optimum(true_perf, res, np.inf)[0]
    return SyntheticInstance(perf, ResourceGraph(res, "units"), true_perf, truth, unconstrained)


@dataclass
class PipelineResult:
    report: SearchReport
    learned: LearnResult
    configs: list = field(default_factory=list)


def run_pipeline(
    structure: Template | FactorGraph,
    oracle: ObjectiveOracle,
    lsbs: LsbsConfig,
    search_config: SearchConfig,
    resource: ResourceGraph | None = None,
    epochs: int = 10,
    iters_per_epoch: int = 100,
    step_size: float = 3e-4,
    seed: int = 0,
    warmup: int = 0,
) -> PipelineResult:
    """Learn factors, pick a resource model, search, decode.

    Without an explicit ``resource`` a template gets its exact MAC model.
    """
    from .resource import flops_pairwise

    skeleton = to_factor_graph_skeleton(structure) if isinstance(structure, Template) else structure
    learned = learn_factors(
        skeleton, oracle, epochs, iters_per_epoch, lsbs, step_size, seed=seed, warmup=warmup
    )
    if resource is None:
        if not isinstance(structure, Template):
            raise GraphError("a resource model is required when no template is given")
        resource = flops_pairwise(structure)
    perf = learned.graph
    res_graph, _ = _resource_graph(resource)
    if res_graph.edges != perf.edges:
        # align structures: both graphs carry the union of edges
        perf = combine_lagrangian(perf, res_graph, 0.0, 0.0)
    report = binary_search_gamma(perf, resource, search_config)
    configs = []
    if isinstance(structure, Template):
        configs = [decode(structure, s.assignment) for s in report.solutions]
    return PipelineResult(report, learned, configs)
