"""Encoder-decoder search spaces built from Normal, Down and Up operations.

Every node is one choice variable. Normal nodes choose a kernel size in
{3, 5} and a width ratio; Down (strided conv, kernel 3) and Up (transposed
conv, kernel 2) nodes choose only the width ratio::

    Normal  k in {3, 5}   w in {0.5, 0.75, 1.0, 1.25, 1.5}   10 labels
    Down    k = 3         w as above                          5 labels
    Up      k = 2         w as above                          5 labels

The UNet layout uses two Normal convolutions per level, one Down between
encoder levels and one Up per decoder level, so depth 5 has 26 nodes.
MACs use the multiply-accumulate convention (no factor of two).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .mrf import FactorGraph, GraphError, LabelSet, build_graph

WIDTHS = (0.5, 0.75, 1.0, 1.25, 1.5)
KERNELS = {"normal": (3, 5), "down": (3,), "up": (2,)}
OP_TYPES = tuple(KERNELS)


@dataclass(frozen=True)
class Node:
    name: str
    op_type: str
    level: int
    base_channels: int
    out_spatial: tuple[int, int]
    # positions the kernel is applied at: output size for convs, input size for Up
    mac_positions: int
    kernels: tuple[int, ...] = ()
    widths: tuple[float, ...] = WIDTHS

    def __post_init__(self):
        if self.op_type not in KERNELS:
            raise GraphError(f"unknown op type {self.op_type!r}")
        if not self.kernels:
            object.__setattr__(self, "kernels", KERNELS[self.op_type])

    @property
    def labels(self) -> tuple[tuple[int, float], ...]:
        """(kernel, width) pairs, kernel-major."""
        return tuple((k, w) for k in self.kernels for w in self.widths)

    def label_names(self) -> tuple[str, ...]:
        return tuple(f"k{k}_w{w:g}" for k, w in self.labels)


@dataclass(frozen=True)
class Template:
    name: str
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...]
    in_channels: int = 3

    def __post_init__(self):
        n = len(self.nodes)
        for s, d in self.edges:
            if not (0 <= s < n and 0 <= d < n) or s == d:
                raise GraphError(f"bad data-flow edge ({s}, {d})")
        if len(set(self.edges)) != len(self.edges):
            raise GraphError("duplicate data-flow edge")

    @property
    def label_sets(self) -> tuple[LabelSet, ...]:
        return tuple(LabelSet(nd.label_names()) for nd in self.nodes)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(len(nd.labels) for nd in self.nodes)

    def predecessors(self, v: int) -> list[int]:
        return sorted(s for s, d in self.edges if d == v)

    def index(self, name: str) -> int:
        return next(i for i, nd in enumerate(self.nodes) if nd.name == name)

    def label_index(self, v: int, kernel: int, width: float) -> int:
        return self.nodes[v].labels.index((kernel, width))

    def original_assignment(self) -> tuple[int, ...]:
        """Every node at width 1.0 with its smallest kernel."""
        return tuple(self.label_index(v, nd.kernels[0], 1.0) for v, nd in enumerate(self.nodes))

    def to_dict(self) -> dict:
        return {
            "format": "mrfnas-template",
            "version": 1,
            "name": self.name,
            "in_channels": self.in_channels,
            "nodes": [asdict(nd) for nd in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Template":
        if d.get("format") != "mrfnas-template":
            raise GraphError("not a template file")
        nodes = tuple(
            Node(
                name=nd["name"],
                op_type=nd["op_type"],
                level=nd["level"],
                base_channels=nd["base_channels"],
                out_spatial=tuple(nd["out_spatial"]),
                mac_positions=nd["mac_positions"],
                kernels=tuple(nd["kernels"]),
                widths=tuple(nd["widths"]),
            )
            for nd in d["nodes"]
        )
        return cls(d["name"], nodes, tuple(tuple(e) for e in d["edges"]), d["in_channels"])


def channels(base: int, width: float) -> int:
    """Round half up, never below one channel."""
    return max(1, math.floor(base * width + 0.5))


class _Builder:
    def __init__(self, base_width: int, image_size: int, widths=WIDTHS, normal_kernels=(3, 5)):
        self.base_width = base_width
        self.image_size = image_size
        self.widths = tuple(widths)
        self.normal_kernels = tuple(normal_kernels)
        self.nodes: list[Node] = []
        self.edges: list[tuple[int, int]] = []

    def side(self, level: int) -> int:
        return max(1, self.image_size >> (level - 1))

    def base(self, level: int) -> int:
        return self.base_width * 2 ** (level - 1)

    def add(self, name, op_type, level, preds=(), positions_level=None) -> int:
        s = self.side(level)
        ps = self.side(positions_level or level)
        kernels = self.normal_kernels if op_type == "normal" else KERNELS[op_type]
        self.nodes.append(
            Node(name, op_type, level, self.base(level), (s, s), ps * ps, kernels, self.widths)
        )
        v = len(self.nodes) - 1
        for p in preds:
            self.edges.append((p, v))
        return v

    def block(self, tag, level, preds) -> int:
        a = self.add(f"{tag}.conv1", "normal", level, preds)
        return self.add(f"{tag}.conv2", "normal", level, [a])

    def encoder(self, depth: int) -> list[int]:
        """Backbone column; returns the last node of each level."""
        outs, prev = [], []
        for lvl in range(1, depth + 1):
            if lvl > 1:
                prev = [self.add(f"down{lvl - 1}", "down", lvl, prev)]
            last = self.block(f"enc{lvl}", lvl, prev)
            outs.append(last)
            prev = [last]
        return outs

    def build(self, name: str, in_channels: int) -> Template:
        return Template(name, tuple(self.nodes), tuple(self.edges), in_channels)


def _check_depth(depth: int) -> None:
    if depth < 2:
        raise GraphError("depth must be >= 2")


def build_unet_template(
    depth: int = 5,
    base_width: int = 64,
    image_size: int = 64,
    in_channels: int = 3,
    widths: Sequence[float] = WIDTHS,
    normal_kernels: Sequence[int] = (3, 5),
) -> Template:
    """UNet: encoder column, one decoder node per level, one skip per level.

    ``widths`` and ``normal_kernels`` shrink the label sets for toy spaces.
    """
    _check_depth(depth)
    if base_width < 1:
        raise GraphError("base_width must be >= 1")
    b = _Builder(base_width, image_size, widths, normal_kernels)
    enc = b.encoder(depth)
    below = enc[-1]
    for lvl in range(depth - 1, 0, -1):
        up = b.add(f"up{lvl}", "up", lvl, [below], positions_level=lvl + 1)
        below = b.block(f"dec{lvl}", lvl, [up, enc[lvl - 1]])
    return b.build(f"unet-d{depth}", in_channels)


def _nested(depth, dense, base_width, image_size, in_channels, widths, normal_kernels) -> Template:
    _check_depth(depth)
    b = _Builder(base_width, image_size, widths, normal_kernels)
    # out[(i, j)]: last node of X^{i,j}, i = level - 1, j = column
    out = {(i, 0): v for i, v in enumerate(b.encoder(depth))}
    for j in range(1, depth):
        for i in range(depth - 1 - j, -1, -1):
            lvl = i + 1
            up = b.add(f"x{i}{j}.up", "up", lvl, [out[(i + 1, j - 1)]], positions_level=lvl + 1)
            skips = [out[(i, k)] for k in range(j)] if dense else [out[(i, j - 1)]]
            out[(i, j)] = b.block(f"x{i}{j}", lvl, [up, *skips])
    return b.build(f"unet{'++' if dense else '+'}-d{depth}", in_channels)


def build_unet_plus_template(depth: int = 5, base_width: int = 64, image_size: int = 64,
                             in_channels: int = 3, widths=WIDTHS, normal_kernels=(3, 5)) -> Template:
    """Nested decoder columns; each node takes the previous node of its level."""
    return _nested(depth, False, base_width, image_size, in_channels, widths, normal_kernels)


def build_unet_plusplus_template(depth: int = 5, base_width: int = 64, image_size: int = 64,
                                 in_channels: int = 3, widths=WIDTHS,
                                 normal_kernels=(3, 5)) -> Template:
    """Nested decoder columns with dense skips from every earlier node of the level."""
    return _nested(depth, True, base_width, image_size, in_channels, widths, normal_kernels)


BACKBONES = {
    "unet": build_unet_template,
    "unet+": build_unet_plus_template,
    "unet++": build_unet_plusplus_template,
}


def build_template(backbone: str, depth: int, **kwargs) -> Template:
    try:
        return BACKBONES[backbone](depth, **kwargs)
    except KeyError:
        raise GraphError(f"unknown backbone {backbone!r}; choose from {sorted(BACKBONES)}") from None


def template_from_spec(spec: str) -> Template:
    """Parse ``backbone:depth[:base_width[:image_size]]`` or load a template JSON file."""
    import os

    if os.path.exists(spec):
        with open(spec) as fh:
            return Template.from_dict(json.load(fh))
    parts = spec.split(":")
    try:
        nums = [int(p) for p in parts[1:]]
    except ValueError:
        raise GraphError(f"bad template spec {spec!r}") from None
    keys = ["depth", "base_width", "image_size"]
    return build_template(parts[0], **dict(zip(keys, nums)))


def space_size(template: Template) -> int:
    return math.prod(template.cards)


def to_factor_graph_skeleton(template: Template) -> FactorGraph:
    """One variable per node, one edge per data-flow edge, all factors zero."""
    edges = sorted({(min(s, d), max(s, d)) for s, d in template.edges})
    cards = template.cards
    return build_graph(
        template.label_sets, None, edges, [np.zeros((cards[i], cards[j])) for i, j in edges]
    )


@dataclass(frozen=True)
class LayerConfig:
    name: str
    op_type: str
    kernel: int
    width: float
    in_channels: int
    out_channels: int
    mac_positions: int

    @property
    def macs(self) -> int:
        return self.kernel**2 * self.in_channels * self.out_channels * self.mac_positions


@dataclass(frozen=True)
class NetConfig:
    template: str
    layers: tuple[LayerConfig, ...] = field(default_factory=tuple)

    @property
    def macs(self) -> int:
        return sum(layer.macs for layer in self.layers)

    def to_dict(self) -> dict:
        return {"template": self.template, "macs": self.macs, "layers": [asdict(l) for l in self.layers]}


def decode(template: Template, assignment: Sequence[int]) -> NetConfig:
    x = tuple(int(v) for v in assignment)
    if len(x) != len(template.nodes) or any(
        not 0 <= v < k for v, k in zip(x, template.cards)
    ):
        raise GraphError(f"invalid assignment for {template.name}")
    outs = []
    for v, nd in enumerate(template.nodes):
        k, w = nd.labels[x[v]]
        outs.append((k, w, channels(nd.base_channels, w)))
    layers = []
    for v, nd in enumerate(template.nodes):
        preds = template.predecessors(v)
        c_in = sum(outs[p][2] for p in preds) if preds else template.in_channels
        k, w, c_out = outs[v]
        layers.append(LayerConfig(nd.name, nd.op_type, k, w, c_in, c_out, nd.mac_positions))
    return NetConfig(template.name, tuple(layers))


def encode(template: Template, config: NetConfig) -> tuple[int, ...]:
    return tuple(
        template.label_index(v, layer.kernel, layer.width) for v, layer in enumerate(config.layers)
    )
