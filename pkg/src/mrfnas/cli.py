"""Command-line entry point: ``mrfnas <subcommand> ...``.

Exit codes: 0 success, 2 infeasible target, 3 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from io import StringIO
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as mio
from .diverse import DiverseConfig, diverse_mbest, solve_map
from .exact import CliqueBudgetExceeded, clique_size
from .learning import graph_oracle, learn_factors, random_separable_oracle
from .mplp import map_mplp
from .mrf import FactorGraph, GraphError, SpaceTooLargeError
from .resource import exact_macs, fit_latency, flops_pairwise, generate_profiles, synthetic_latency_model
from .sampling import GibbsChain, LsbsConfig
from .search import InfeasibleError, SearchConfig, binary_search_gamma
from .space import BACKBONES, build_template, space_size, template_from_spec, to_factor_graph_skeleton

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; 2 is reserved for infeasible targets
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _graph(path: str) -> FactorGraph:
    return mio.plain_graph(mio.load_graph(path))


def _assignment(text: str, template) -> tuple[int, ...]:
    if text == "original":
        return template.original_assignment()
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError:
        raise InputError(f"bad assignment {text!r}; expected comma-separated label indices") from None


def _fmt_x(x) -> str:
    return ",".join(str(v) for v in x)


def cmd_solve_map(a) -> int:
    g = _graph(a.graph)
    lines = ["# mrfnas-map 1", f"algo: {a.algo}"]
    if a.algo == "mplp":
        r = map_mplp(g, max_iters=a.max_iters)
        lines += [
            f"assignment: {_fmt_x(r.assignment)}",
            f"score: {r.primal!r}",
            f"dual: {r.dual!r}",
            f"gap: {r.dual - r.primal!r}",
            f"iterations: {r.iterations}",
            f"converged: {str(r.converged).lower()}",
        ]
    else:
        sa = solve_map(g, "exact")
        lines += [f"assignment: {_fmt_x(sa.assignment)}", f"score: {sa.score!r}",
                  f"clique_size: {clique_size(g)}"]
    _emit("\n".join(lines) + "\n", a.out)
    return EXIT_OK


def cmd_diverse(a) -> int:
    g = _graph(a.graph)
    res = diverse_mbest(g, DiverseConfig(a.m, a.L, a.algo))
    lines = ["# mrfnas-diverse 1", f"m: {a.m}", f"L: {a.L!r}", f"algo: {a.algo}",
             "rank\tscore\tduplicate\tassignment"]
    for r, (sa, dup) in enumerate(zip(res.solutions, res.duplicates), start=1):
        lines.append(f"{r}\t{sa.score!r}\t{str(dup).lower()}\t{_fmt_x(sa.assignment)}")
    _emit("\n".join(lines) + "\n", a.out)
    return EXIT_OK


def cmd_search(a) -> int:
    perf = mio.plain_graph(mio.load_graph(a.perf))
    res = mio.load_graph(a.res)
    cfg = SearchConfig(a.target, a.unit, a.iters, a.m, a.L, a.algo, a.gamma_lo)
    report = binary_search_gamma(perf, res, cfg)
    _emit(report.dumps() + "\n", a.out)
    return EXIT_OK


def cmd_fit_latency(a) -> int:
    t = template_from_spec(a.template)
    samples, names, unit = mio.read_profiles(Path(a.samples).read_text(), a.samples)
    if names and len(names) != len(t.nodes):
        raise InputError(f"samples have {len(names)} columns but the template has {len(t.nodes)} nodes")
    fit = fit_latency(t, samples, unit)
    _emit(mio.format_graph(fit.model), a.out)
    print(f"# fit: rms={fit.residual_rms!r} rank={fit.rank}/{fit.n_params} "
          f"rank_deficient={str(fit.rank_deficient).lower()}", file=sys.stderr)
    return EXIT_OK


def cmd_profile(a) -> int:
    """Synthetic latency measurements from a hidden pairwise model."""
    t = template_from_spec(a.template)
    hidden = synthetic_latency_model(t, a.seed, a.unit)
    samples = generate_profiles(t, hidden, a.noise, a.count, a.seed + 1)
    buf = StringIO()
    mio.write_profiles(samples, [nd.name for nd in t.nodes], a.unit, buf)
    _emit(buf.getvalue(), a.out)
    return EXIT_OK


def cmd_sample(a) -> int:
    g = _graph(a.graph)
    chain = GibbsChain.start(g, a.seed)
    chain.run(a.burn_in)
    xs = chain.run(a.sweeps, record=True)
    meta = f"seed={a.seed} burn_in={a.burn_in} sweeps={a.sweeps}"
    _emit(mio.samples_to_string(xs, g.n, meta), a.out)
    return EXIT_OK


def _oracle(spec: str, skeleton: FactorGraph):
    kind, _, arg = spec.partition(":")
    if kind == "separable":
        parts = arg.split(":") if arg else []
        try:
            seed = int(parts[0]) if parts else 0
            margin = float(parts[1]) if len(parts) > 1 else 0.0
        except ValueError:
            raise InputError(f"bad oracle spec {spec!r}") from None
        return random_separable_oracle(skeleton.cards, seed, margin)
    if kind == "graph":
        hidden = _graph(arg)
        if hidden.cards != skeleton.cards:
            raise InputError("oracle graph does not match the skeleton's variables")
        return graph_oracle(hidden)
    raise InputError(f"unknown oracle {spec!r}; use separable[:seed[:margin]] or graph:FILE")


def cmd_learn(a) -> int:
    if (a.template is None) == (a.graph is None):
        raise InputError("give exactly one of --template or --graph")
    skel = to_factor_graph_skeleton(template_from_spec(a.template)) if a.template else _graph(a.graph)
    oracle = _oracle(a.oracle, skel)
    lsbs = LsbsConfig(a.n_long, a.n_short, a.n_mc)
    r = learn_factors(skel, oracle, a.epochs, a.iters, lsbs, a.step, seed=a.seed, warmup=a.warmup)
    _emit(mio.format_graph(r.graph), a.out)
    if a.history:
        lines = ["# mrfnas-loss-history 1", "iteration,mean_loss"]
        lines += [f"{i},{v!r}" for i, v in enumerate(r.loss_history)]
        Path(a.history).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_space(a) -> int:
    t = build_template(a.backbone, a.depth, base_width=a.base_width, image_size=a.image_size)
    skel = to_factor_graph_skeleton(t)
    lines = [
        "# mrfnas-space 1",
        f"backbone: {a.backbone}",
        f"depth: {a.depth}",
        f"nodes: {len(t.nodes)}",
        f"edges: {len(skel.edges)}",
        f"clique_size: {clique_size(skel)}",
        f"space_size: {space_size(t)}",
    ]
    _emit("\n".join(lines) + "\n", a.out)
    if a.emit_skeleton:
        mio.save_graph(skel, a.emit_skeleton)
    if a.emit_template:
        Path(a.emit_template).write_text(json.dumps(t.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_flops(a) -> int:
    t = template_from_spec(a.template)
    model = flops_pairwise(t)
    if a.emit_model:
        mio.save_graph(model, a.emit_model)
    if a.assignment is None:
        return EXIT_OK
    x = _assignment(a.assignment, t)
    lines = ["# mrfnas-flops 1", f"assignment: {_fmt_x(x)}", f"macs: {exact_macs(model, x)}"]
    _emit("\n".join(lines) + "\n", a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrfnas", description="MRF-based architecture search tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", help="output file (default: stdout)")
        s.set_defaults(fn=fn)
        return s

    s = add("solve-map", cmd_solve_map, "MAP assignment of a factor-graph file")
    s.add_argument("--graph", required=True)
    s.add_argument("--algo", choices=["exact", "mplp"], default="exact")
    s.add_argument("--max-iters", type=int, default=1000)

    s = add("diverse", cmd_diverse, "diverse M-best assignments")
    s.add_argument("--graph", required=True)
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--L", type=float, default=10.0)
    s.add_argument("--algo", choices=["exact", "mplp"], default="exact")

    s = add("search", cmd_search, "resource-constrained search")
    s.add_argument("--perf", required=True)
    s.add_argument("--res", required=True)
    s.add_argument("--target", type=float, required=True)
    s.add_argument("--unit")
    s.add_argument("--iters", type=int, default=20)
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--L", type=float, default=10.0)
    s.add_argument("--algo", choices=["exact", "mplp"], default="exact")
    s.add_argument("--gamma-lo", type=float, default=-1.0)

    s = add("fit-latency", cmd_fit_latency, "fit a pairwise latency model to profiles")
    s.add_argument("--template", required=True)
    s.add_argument("--samples", required=True)

    s = add("profile", cmd_profile, "synthetic latency profiles for a template")
    s.add_argument("--template", required=True)
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--unit", default="ms")

    s = add("sample", cmd_sample, "Gibbs samples from a factor graph")
    s.add_argument("--graph", required=True)
    s.add_argument("--sweeps", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=1000)

    s = add("learn", cmd_learn, "learn factors against a synthetic oracle")
    s.add_argument("--template")
    s.add_argument("--graph", help="skeleton factor-graph file")
    s.add_argument("--oracle", default="separable")
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--iters", type=int, default=100)
    s.add_argument("--step", type=float, default=3e-4)
    s.add_argument("--warmup", type=int, default=0)
    s.add_argument("--n-long", type=int, default=10000)
    s.add_argument("--n-short", type=int, default=10)
    s.add_argument("--n-mc", type=int, default=1)
    s.add_argument("--history", help="loss-history output file")

    s = add("space", cmd_space, "search-space statistics")
    s.add_argument("--backbone", choices=sorted(BACKBONES), default="unet")
    s.add_argument("--depth", type=int, default=5)
    s.add_argument("--base-width", type=int, default=64)
    s.add_argument("--image-size", type=int, default=64)
    s.add_argument("--emit-skeleton")
    s.add_argument("--emit-template")

    s = add("flops", cmd_flops, "MAC count of an architecture")
    s.add_argument("--template", required=True)
    s.add_argument("--assignment", help="comma-separated label indices or 'original'")
    s.add_argument("--emit-model", help="write the pairwise MAC model as a graph file")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # usage errors and --help
        return e.code if isinstance(e.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    np.random.seed(args.seed)
    try:
        return args.fn(args)
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        print(f"min_resource: {e.min_resource!r}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, GraphError, SpaceTooLargeError, CliqueBudgetExceeded, OSError,
            ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
