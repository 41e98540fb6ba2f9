"""Learn factors on a toy UNet space, then search under a MAC budget."""
from dataclasses import dataclass

import numpy as np

from _config import parse
from mrfnas.learning import graph_oracle
from mrfnas.mrf import build_graph, log_energy
from mrfnas.resource import exact_macs, flops_pairwise
from mrfnas.sampling import LsbsConfig
from mrfnas.search import SearchConfig, run_pipeline
from mrfnas.space import build_unet_template, to_factor_graph_skeleton


@dataclass
class Config:
    """Pipeline on a depth-2 UNet with a hidden pairwise loss."""
    seed: int = 0
    base_width: int = 16
    image_size: int = 32
    budget: float = 0.6  # fraction of the original network's MACs
    epochs: int = 5
    iters: int = 200
    step: float = 0.02
    n_long: int = 200
    n_short: int = 10


def main(cfg: Config):
    t = build_unet_template(2, cfg.base_width, cfg.image_size)
    skel = to_factor_graph_skeleton(t)
    rng = np.random.default_rng(cfg.seed)
    hidden = build_graph(skel.label_sets, [rng.normal(scale=0.5, size=k) for k in skel.cards], skel.edges,
                         [rng.normal(scale=0.2, size=(skel.cards[i], skel.cards[j])) for i, j in skel.edges])
    macs = flops_pairwise(t)
    target = cfg.budget * exact_macs(macs, t.original_assignment())
    out = run_pipeline(t, graph_oracle(hidden), LsbsConfig(cfg.n_long, cfg.n_short, 1),
                       SearchConfig(target, unit="MACs"), epochs=cfg.epochs,
                       iters_per_epoch=cfg.iters, step_size=cfg.step, seed=cfg.seed)
    h = out.learned.loss_history
    print(f"mean loss: first epoch {np.mean(h[:cfg.iters]):.3f}, last epoch {np.mean(h[-cfg.iters:]):.3f}")
    print(f"target {target:.0f} MACs, gamma {out.report.gamma:.4g}, inferences {out.report.inference_count}")
    for s, c in zip(out.report.solutions, out.configs):
        widths = " ".join(f"{l.width:g}" for l in c.layers)
        print(f"  feasible={s.feasible!s:5s} macs={c.macs:>9d} hidden loss={-log_energy(hidden, s.assignment):7.3f}"
              f" widths=[{widths}]")


if __name__ == "__main__":
    main(parse(Config))
