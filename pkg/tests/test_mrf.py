import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_graphs
from mrfnas.mrf import (
    GraphError,
    LabelSet,
    ResourceGraph,
    SpaceTooLargeError,
    all_assignments,
    brute_force_map,
    build_graph,
    combine_lagrangian,
    exact_distribution,
    is_forest,
    log_energy,
    negate,
    random_graph,
    score_table,
    validate_assignment,
    zero_graph,
)


def test_build_small_graph():
    g = build_graph([2, 2], [[0, 1], [1, 0]], [(0, 1)], [np.eye(2)])
    assert g.n == 2 and len(g.edges) == 1
    assert g.cards == (2, 2)


def test_shape_mismatch_rejected():
    with pytest.raises(GraphError):
        build_graph([2, 2], None, [(0, 1)], [np.zeros((2, 3))])


def test_self_loop_rejected():
    with pytest.raises(GraphError):
        build_graph([2, 2], None, [(1, 1)], [np.zeros((2, 2))])


def test_duplicate_and_nonfinite_rejected():
    with pytest.raises(GraphError):
        build_graph([2, 2], None, [(0, 1), (1, 0)], [np.zeros((2, 2))] * 2)
    with pytest.raises(GraphError):
        build_graph([2, 2], [[0, np.nan], [0, 0]])
    with pytest.raises(GraphError):
        LabelSet(("a", "a"))


def test_reversed_edge_is_transposed():
    t = np.arange(6.0).reshape(3, 2)
    g = build_graph([2, 3], None, [(1, 0)], [t])
    assert g.edges == ((0, 1),)
    assert np.array_equal(g.edge_table(0, 1), t.T)
    assert np.array_equal(g.edge_table(1, 0), t)
    assert log_energy(g, (1, 2)) == t[2, 1]


def test_log_energy_g2(g2):
    assert log_energy(zero_graph([2, 3]), (1, 2)) == 0.0
    assert log_energy(g2, (1, 1)) == 3.0
    assert [log_energy(g2, x) for x in all_assignments(g2.cards)] == [0.5, 0.0, 1.5, 3.0]


def test_validate_assignment(g2):
    with pytest.raises(GraphError):
        validate_assignment(g2, (0,))
    with pytest.raises(GraphError):
        validate_assignment(g2, (0, 2))


def test_brute_force_map(g2):
    assert brute_force_map(g2) == ((1, 1), 3.0)
    assert brute_force_map(build_graph([2], [[0.3, 0.3]])).assignment == (0,)
    with pytest.raises(SpaceTooLargeError):
        brute_force_map(zero_graph([2] * 30), max_space=10**7)


def test_exact_distribution(g2):
    assert np.allclose(exact_distribution(zero_graph([2, 2])), 0.25)
    w = np.exp([0.5, 0.0, 1.5, 3.0])
    assert np.allclose(exact_distribution(g2).ravel(), w / w.sum(), rtol=1e-12)


@given(small_graphs())
def test_distribution_normalised(g):
    assert abs(exact_distribution(g).sum() - 1.0) < 1e-12


@given(small_graphs(), st.integers(0, 4), st.floats(-5, 5))
def test_constant_shift_leaves_distribution(g, which, c):
    i = which % g.n
    u = [np.array(t) for t in g.unary]
    u[i] = u[i] + c
    assert np.allclose(exact_distribution(g), exact_distribution(g.replace(unary=u)), atol=1e-12)


@given(small_graphs(), st.integers(0, 100), st.floats(-3, 3))
def test_unary_entry_is_additive(g, pick, delta):
    i = pick % g.n
    j = pick % g.cards[i]
    u = [np.array(t) for t in g.unary]
    u[i][j] += delta
    before, after = score_table(g), score_table(g.replace(unary=u))
    diff = after - before
    uses = np.zeros(g.cards, dtype=bool)
    idx = [slice(None)] * g.n
    idx[i] = j
    uses[tuple(idx)] = True
    assert np.allclose(diff[uses], delta)
    assert np.allclose(diff[~uses], 0.0)


def test_combine_identity_and_cancellation(g2):
    assert all(
        math.isclose(log_energy(combine_lagrangian(g2, g2, 0.0, 5.0), x), log_energy(g2, x))
        for x in all_assignments(g2.cards)
    )
    both = combine_lagrangian(g2, ResourceGraph(g2, "u"), -1.0, 0.0)
    assert np.allclose(score_table(both), 0.0)


def test_combine_random_pair():
    rng = np.random.default_rng(7)
    p = random_graph(rng, 4, edge_prob=0.5)
    r = build_graph(p.cards, [rng.normal(size=k) for k in p.cards], [(0, 3)], [rng.normal(size=(p.cards[0], p.cards[3]))])
    c = combine_lagrangian(p, r, -0.5, 2.0)
    for x in all_assignments(p.cards):
        assert math.isclose(log_energy(c, x), log_energy(p, x) - 0.5 * (log_energy(r, x) - 2.0), abs_tol=1e-12)


def test_combine_structure_mismatch(g2):
    with pytest.raises(GraphError):
        combine_lagrangian(g2, zero_graph([2, 3]), -1.0, 0.0)


@given(small_graphs(), st.floats(-4, 0), st.floats(-5, 5))
def test_combine_is_affine_in_gamma(g, gamma, target):
    r = negate(g)
    s0 = score_table(combine_lagrangian(g, r, 0.0, target))
    s1 = score_table(combine_lagrangian(g, r, -1.0, target))
    sg = score_table(combine_lagrangian(g, r, gamma, target))
    assert np.allclose(sg, s0 + (-gamma) * (s1 - s0), atol=1e-9)


def test_is_forest():
    assert is_forest(random_graph(np.random.default_rng(0), 6, tree=True))
    assert not is_forest(build_graph([2, 2, 2], None, [(0, 1), (1, 2), (0, 2)], [np.zeros((2, 2))] * 3))


def test_resource_graph_needs_unit(g2):
    with pytest.raises(GraphError):
        ResourceGraph(g2, "")
