"""Largest clique after min-fill triangulation for UNet, UNet+ and UNet++ skeletons."""
from dataclasses import dataclass

from _config import parse
from mrfnas.exact import clique_size
from mrfnas.space import build_template, space_size, to_factor_graph_skeleton


@dataclass
class Config:
    """Clique size versus node count for each backbone."""
    depth_min: int = 2
    depth_max: int = 7
    backbones: tuple = ("unet", "unet+", "unet++")


def main(cfg: Config):
    print(f"{'backbone':8s} {'depth':>5s} {'nodes':>5s} {'edges':>5s} {'|C|':>4s} {'log10 |X|':>9s}")
    for b in cfg.backbones:
        for d in range(cfg.depth_min, cfg.depth_max + 1):
            t = build_template(b, d)
            g = to_factor_graph_skeleton(t)
            print(f"{b:8s} {d:5d} {g.n:5d} {len(g.edges):5d} {clique_size(g):4d} "
                  f"{len(str(space_size(t))) - 1:9d}")


if __name__ == "__main__":
    main(parse(Config))
