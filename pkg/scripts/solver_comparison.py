"""Clique-tree MAP against MPLP on random loopy graphs and on UNet skeletons."""
import time
from dataclasses import dataclass

import numpy as np

from _config import parse
from mrfnas.exact import map_clique_tree
from mrfnas.mplp import certify_gap, map_mplp
from mrfnas.mrf import build_graph, random_graph
from mrfnas.space import build_template, to_factor_graph_skeleton


@dataclass
class Config:
    """Agreement, duality gaps and wall-clock of the two MAP solvers."""
    seeds: int = 20
    n: int = 10
    k_max: int = 4
    edge_prob: float = 0.4
    depth: int = 5
    backbone: str = "unet"


def compare(graphs):
    same, gaps, t_exact, t_mplp, dscore = 0, [], 0.0, 0.0, []
    for g in graphs:
        t0 = time.perf_counter()
        a = map_clique_tree(g)
        t1 = time.perf_counter()
        b = map_mplp(g)
        t2 = time.perf_counter()
        t_exact += t1 - t0
        t_mplp += t2 - t1
        same += a.assignment == b.assignment
        gaps.append(certify_gap(b))
        dscore.append(a.score - b.primal)
    n = len(graphs)
    print(f"  identical assignments {same}/{n}; mean score loss {np.mean(dscore):.4g}; "
          f"certified (gap<1e-6) {sum(g < 1e-6 for g in gaps)}/{n}")
    print(f"  time per graph: clique tree {t_exact / n * 1e3:.1f} ms, MPLP {t_mplp / n * 1e3:.1f} ms")


def main(cfg: Config):
    print(f"random graphs: n={cfg.n}, k<={cfg.k_max}, p={cfg.edge_prob}")
    compare([random_graph(np.random.default_rng(s), cfg.n, cfg.k_max, cfg.edge_prob)
             for s in range(cfg.seeds)])
    skel = to_factor_graph_skeleton(build_template(cfg.backbone, cfg.depth))
    graphs = []
    for s in range(cfg.seeds):
        rng = np.random.default_rng(s)
        graphs.append(build_graph(
            skel.label_sets,
            [rng.normal(size=k) for k in skel.cards],
            skel.edges,
            [rng.normal(scale=0.3, size=(skel.cards[i], skel.cards[j])) for i, j in skel.edges],
        ))
    print(f"{cfg.backbone} depth {cfg.depth} skeleton with random factors ({skel.n} variables)")
    compare(graphs)


if __name__ == "__main__":
    main(parse(Config))
