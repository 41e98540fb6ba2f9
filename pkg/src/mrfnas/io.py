"""Plain-text persistence for factor graphs, profiling samples and Gibbs samples.

Factor-graph files look like::

    mrfnas-graph 1
    variables: 2
    unit: MACs
    labels 0: a b
    labels 1: x y z
    unary 0: 0.5 -1.0
    unary 1: 0.0 0.0 0.25
    pairwise 0 1:
      1.0 0.0 2.0
      0.0 0.0 0.0
    constant: 0.0

``unit`` is optional and marks a resource model. Blank lines and ``#``
comments are ignored. Floats are written with ``repr`` so values round-trip.
"""
from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .mrf import FactorGraph, GraphError, LabelSet, ResourceGraph, build_graph
from .resource import ProfilingSample

GRAPH_MAGIC = "mrfnas-graph"
GRAPH_VERSION = 1
PROFILE_MAGIC = "# mrfnas-profiles 1"
SAMPLES_MAGIC = "# mrfnas-samples 1"


class GraphFormatError(GraphError):
    def __init__(self, message: str, line: int | None = None, source: str = "<graph>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _fmt(v: float) -> str:
    return repr(float(v))


def format_graph(graph: FactorGraph | ResourceGraph) -> str:
    unit = None
    if isinstance(graph, ResourceGraph):
        graph, unit = graph.graph, graph.unit
    out = [f"{GRAPH_MAGIC} {GRAPH_VERSION}", f"variables: {graph.n}"]
    if unit is not None:
        if re.search(r"\s", unit):
            raise GraphError(f"unit {unit!r} contains whitespace")
        out.append(f"unit: {unit}")
    for i, ls in enumerate(graph.label_sets):
        if any(re.search(r"\s", a) or a == "" for a in ls.labels):
            raise GraphError(f"label names of variable {i} must be non-empty without whitespace")
        out.append(f"labels {i}: " + " ".join(ls.labels))
    for i, u in enumerate(graph.unary):
        out.append(f"unary {i}: " + " ".join(_fmt(v) for v in u))
    for (i, j), t in zip(graph.edges, graph.pairwise):
        out.append(f"pairwise {i} {j}:")
        out.extend("  " + " ".join(_fmt(v) for v in row) for row in t)
    out.append(f"constant: {_fmt(graph.constant)}")
    return "\n".join(out) + "\n"


def _floats(text: str, lineno: int, source: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split()]
    except ValueError as e:
        raise GraphFormatError(f"bad number ({e})", lineno, source) from None
    if not all(math.isfinite(v) for v in vals):
        raise GraphFormatError("non-finite value", lineno, source)
    return vals


def parse_graph(text: str, source: str = "<graph>") -> FactorGraph | ResourceGraph:
    """Inverse of :func:`format_graph`; errors carry the offending line number."""
    lines = [
        (no, ln.split("#", 1)[0].strip())
        for no, ln in enumerate(text.splitlines(), start=1)
    ]
    lines = [(no, ln) for no, ln in lines if ln]
    if not lines:
        raise GraphFormatError("empty file", None, source)
    no, head = lines[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != GRAPH_MAGIC:
        raise GraphFormatError(f"expected header '{GRAPH_MAGIC} {GRAPH_VERSION}'", no, source)
    if parts[1] != str(GRAPH_VERSION):
        raise GraphFormatError(f"unsupported version {parts[1]}", no, source)

    n = None
    unit = None
    labels: dict[int, tuple[str, ...]] = {}
    unary: dict[int, list[float]] = {}
    pairwise: dict[tuple[int, int], tuple[int, list[list[float]]]] = {}
    constant = 0.0
    seen_constant = False
    pos = 1
    current: tuple[int, int] | None = None

    def var(tok: str, lineno: int) -> int:
        try:
            i = int(tok)
        except ValueError:
            raise GraphFormatError(f"bad variable index {tok!r}", lineno, source) from None
        if n is None:
            raise GraphFormatError("'variables:' must come first", lineno, source)
        if not 0 <= i < n:
            raise GraphFormatError(f"variable {i} out of range 0..{n - 1}", lineno, source)
        return i

    while pos < len(lines):
        no, ln = lines[pos]
        pos += 1
        if ":" not in ln:
            if current is None:
                raise GraphFormatError(f"unexpected line {ln!r}", no, source)
            pairwise[current][1].append(_floats(ln, no, source))
            continue
        current = None
        key, _, rest = ln.partition(":")
        kp = key.split()
        rest = rest.strip()
        if kp == ["variables"]:
            if n is not None:
                raise GraphFormatError("duplicate 'variables:'", no, source)
            try:
                n = int(rest)
            except ValueError:
                raise GraphFormatError(f"bad variable count {rest!r}", no, source) from None
            if n < 0:
                raise GraphFormatError("negative variable count", no, source)
        elif kp == ["unit"]:
            unit = rest
        elif kp == ["constant"]:
            if seen_constant:
                raise GraphFormatError("duplicate 'constant:'", no, source)
            vals = _floats(rest, no, source)
            if len(vals) != 1:
                raise GraphFormatError("constant takes one value", no, source)
            constant, seen_constant = vals[0], True
        elif kp[0] == "labels" and len(kp) == 2:
            i = var(kp[1], no)
            if i in labels:
                raise GraphFormatError(f"duplicate labels for variable {i}", no, source)
            labels[i] = tuple(rest.split())
            if not labels[i]:
                raise GraphFormatError(f"variable {i} has no labels", no, source)
        elif kp[0] == "unary" and len(kp) == 2:
            i = var(kp[1], no)
            if i in unary:
                raise GraphFormatError(f"duplicate unary for variable {i}", no, source)
            unary[i] = _floats(rest, no, source)
        elif kp[0] == "pairwise" and len(kp) == 3:
            i, j = var(kp[1], no), var(kp[2], no)
            if (i, j) in pairwise or (j, i) in pairwise:
                raise GraphFormatError(f"duplicate pairwise factor {i} {j}", no, source)
            if rest:
                raise GraphFormatError("pairwise rows go on the following lines", no, source)
            current = (i, j)
            pairwise[current] = (no, [])
        else:
            raise GraphFormatError(f"unknown entry {key!r}", no, source)

    if n is None:
        raise GraphFormatError("missing 'variables:'", None, source)
    missing = [i for i in range(n) if i not in labels]
    if missing:
        raise GraphFormatError(f"missing labels for variables {missing}", None, source)
    cards = [len(labels[i]) for i in range(n)]
    tables = []
    for i in range(n):
        u = unary.get(i, [0.0] * cards[i])
        if len(u) != cards[i]:
            raise GraphFormatError(f"unary {i} has {len(u)} values, expected {cards[i]}", None, source)
        tables.append(np.array(u))
    edges, ptabs = [], []
    for (i, j), (no, rows) in pairwise.items():
        shape = (cards[i], cards[j])
        if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
            raise GraphFormatError(f"pairwise {i} {j} block must be {shape[0]}x{shape[1]}", no, source)
        edges.append((i, j))
        ptabs.append(np.array(rows))
    try:
        g = build_graph([LabelSet(labels[i]) for i in range(n)], tables, edges, ptabs, constant)
    except GraphError as e:
        raise GraphFormatError(str(e), None, source) from None
    return ResourceGraph(g, unit) if unit else g


def save_graph(graph: FactorGraph | ResourceGraph, path: str | Path) -> None:
    Path(path).write_text(format_graph(graph))


def load_graph(path: str | Path) -> FactorGraph | ResourceGraph:
    return parse_graph(Path(path).read_text(), str(path))


def plain_graph(g: FactorGraph | ResourceGraph) -> FactorGraph:
    return g.graph if isinstance(g, ResourceGraph) else g


def write_profiles(
    samples: Sequence[ProfilingSample], names: Sequence[str], unit: str, out: TextIO
) -> None:
    out.write(PROFILE_MAGIC + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow([*names, f"measured[{unit}]"])
    for s in samples:
        w.writerow([*s.assignment, _fmt(s.measured)])


def read_profiles(text: str, source: str = "<profiles>") -> tuple[list[ProfilingSample], list[str], str]:
    """Returns samples, variable names and the measurement unit."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != PROFILE_MAGIC:
        raise GraphFormatError(f"expected header {PROFILE_MAGIC!r}", 1, source)
    rows = list(csv.reader(lines[1:]))
    if not rows:
        raise GraphFormatError("missing column header", 2, source)
    head = rows[0]
    m = re.fullmatch(r"measured\[(.*)\]", head[-1].strip()) if head else None
    if m is None:
        raise GraphFormatError("last column must be 'measured[<unit>]'", 2, source)
    names = [h.strip() for h in head[:-1]]
    samples = []
    for r, row in enumerate(rows[1:], start=3):
        if not row:
            continue
        if len(row) != len(head):
            raise GraphFormatError(f"expected {len(head)} fields, got {len(row)}", r, source)
        try:
            x = tuple(int(v) for v in row[:-1])
            y = float(row[-1])
        except ValueError as e:
            raise GraphFormatError(str(e), r, source) from None
        if not math.isfinite(y):
            raise GraphFormatError("non-finite measurement", r, source)
        samples.append(ProfilingSample(x, y))
    return samples, names, m.group(1)


def write_samples(samples: Iterable[Sequence[int]], n: int, out: TextIO, meta: str = "") -> None:
    out.write(SAMPLES_MAGIC + (f" {meta}" if meta else "") + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(n)])
    for s in samples:
        w.writerow(list(s))


def read_samples(text: str, source: str = "<samples>") -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(SAMPLES_MAGIC):
        raise GraphFormatError(f"expected header {SAMPLES_MAGIC!r}", 1, source)
    rows = list(csv.reader(lines[2:]))
    try:
        return np.array([[int(v) for v in r] for r in rows if r], dtype=np.int64)
    except ValueError as e:
        raise GraphFormatError(str(e), None, source) from None


def samples_to_string(samples, n: int, meta: str = "") -> str:
    buf = io.StringIO()
    write_samples(samples, n, buf, meta)
    return buf.getvalue()
