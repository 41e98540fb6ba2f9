import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from mrfnas.mrf import build_graph, random_graph

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def make_g2():
    return build_graph([2, 2], [[0.0, 1.0], [0.5, 0.0]], [(0, 1)], [[[0.0, 0.0], [0.0, 2.0]]])


@pytest.fixture
def g2():
    return make_g2()


@st.composite
def small_graphs(draw, n_max=5, k_max=3, tree=False):
    seed = draw(st.integers(0, 2**31 - 1))
    n = draw(st.integers(1, n_max))
    p = draw(st.sampled_from([0.0, 0.3, 0.5, 1.0]))
    return random_graph(np.random.default_rng(seed), n, k_max=k_max, edge_prob=p, tree=tree)


def cycle(n, table, unary=None):
    edges = [(i, (i + 1) % n) for i in range(n)]
    return build_graph([2] * n, unary or [[0.0, 0.0]] * n, edges, [table] * n)


def lagrangian_dual(perf, res, target):
    """min over gamma <= 0 of max_x perf(x) + gamma * (res(x) - target), as an LP."""
    from scipy.optimize import linprog

    from mrfnas.mrf import score_table

    P = score_table(perf).ravel()
    R = score_table(res).ravel() - target
    # variables (t, g); minimise t subject to P + g R <= t, g <= 0
    A = np.column_stack([-np.ones_like(P), R])
    out = linprog([1.0, 0.0], A_ub=A, b_ub=-P, bounds=[(None, None), (None, 0.0)], method="highs")
    assert out.success
    return float(out.fun)


_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    """Record a one-line verdict for an acceptance criterion."""
    number = request.node.get_closest_marker("criterion").args[0]
    _VERDICTS[number] = f"criterion {number:2d}: FAIL ({request.node.name})"

    def record(ok: bool, detail: str):
        _VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
