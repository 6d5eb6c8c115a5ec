import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbdsbl.errors import InvalidArgumentError, TopologyGenerationError
from cbdsbl.graph import (
    build_constraints,
    cbdsbl_rate_constants,
    delta_general,
    format_topology,
    generate_erdos_renyi,
    make_topology,
    parse_topology,
    rho_opt,
    select_bridges,
    validate_bridges,
)

PATH3 = make_topology(3, [(0, 1), (1, 2)])


def star(L):
    return make_topology(L, [(0, j) for j in range(1, L)])


def complete(L):
    return make_topology(L, itertools.combinations(range(L), 2))


@st.composite
def connected_graphs(draw, max_L=8):
    L = draw(st.integers(2, max_L))
    p = draw(st.floats(0.3, 1.0))
    seed = draw(st.integers(0, 2**31))
    return generate_erdos_renyi(L, p, seed)


# ---------------------------------------------------------------- generation

def test_two_nodes_complete():
    topo = generate_erdos_renyi(2, 1.0, seed=5)
    assert topo.edges == ((0, 1),)


def test_zero_probability_cannot_connect():
    with pytest.raises(TopologyGenerationError):
        generate_erdos_renyi(5, 0.0, seed=0)


@pytest.mark.parametrize("L,p", [(1, 0.5), (5, 1.5), (5, -0.1)])
def test_generation_argument_checks(L, p):
    with pytest.raises(InvalidArgumentError):
        generate_erdos_renyi(L, p)


def test_mean_degree_matches_edge_probability():
    # connectivity conditioning barely matters at p=0.8, L=10
    degs = [generate_erdos_renyi(10, 0.8, seed=s).degrees().mean() for s in range(400)]
    assert abs(np.mean(degs) - 0.8 * 9) < 0.1


def test_seeded_generation_is_connected_and_stable():
    a = generate_erdos_renyi(10, 0.8, seed=3)
    assert a.is_connected()
    assert a == generate_erdos_renyi(10, 0.8, seed=3)


@given(connected_graphs())
def test_generated_graphs_connected(topo):
    assert topo.is_connected()
    assert all(a < b for a, b in topo.edges)


# ---------------------------------------------------------------- bridges

def test_star_center_is_only_bridge():
    assert select_bridges(star(5)) == (0,)


def test_complete_graph_tie_breaks_to_lowest_id():
    assert select_bridges(complete(4)) == (0,)


def test_path_selects_middle():
    assert select_bridges(PATH3) == (1,)


def test_path_with_end_bridge_is_invalid():
    ok, why = validate_bridges(PATH3.with_bridges([0]))
    assert not ok
    assert any("node 2" in w for w in why)


def test_path_with_middle_bridge_is_valid():
    assert validate_bridges(PATH3.with_bridges([1])) == (True, [])


def test_uncovered_edge_reported():
    # path 0-1-2-3 with the two end nodes as bridges: edge (1, 2) has B_1 = {0}, B_2 = {3}
    topo = make_topology(4, [(0, 1), (1, 2), (2, 3)]).with_bridges([0, 3])
    ok, why = validate_bridges(topo)
    assert not ok
    assert why == ["edge (1, 2) has no common bridge"]


def test_unassigned_bridges_invalid():
    assert validate_bridges(PATH3)[0] is False


@given(connected_graphs())
def test_all_nodes_as_bridges_always_valid(topo):
    assert validate_bridges(topo.with_bridges(range(topo.L)))[0]


@given(connected_graphs())
def test_greedy_selection_valid_and_deterministic(topo):
    b = select_bridges(topo)
    assert validate_bridges(topo.with_bridges(b))[0]
    assert b == select_bridges(topo)
    # greedy prefix is minimal: dropping the last-added node breaks validity
    deg = topo.degrees()
    order = sorted(range(topo.L), key=lambda v: (-deg[v], v))
    prefix = order[: len(b)]
    assert sorted(prefix) == list(b)
    if len(b) > 1:
        assert not validate_bridges(topo.with_bridges(prefix[:-1]))[0]


@given(connected_graphs())
def test_membership_symmetry(topo):
    t = topo.with_bridges(select_bridges(topo))
    for j, bj in enumerate(t.bridge_nbrs):
        for b in t.bridges:
            assert (b in bj) == (j in t.node_nbrs_of_bridge[b])


def test_extended_bridge_count():
    topo = complete(6)
    assert select_bridges(topo, 3) == (0, 1, 2)
    assert select_bridges(topo, 100) == tuple(range(6))


def test_bridge_out_of_range():
    with pytest.raises(InvalidArgumentError):
        PATH3.with_bridges([3])


# ---------------------------------------------------------------- constraints

def test_path_constraint_matrices():
    c = build_constraints(PATH3.with_bridges([1]), n=1)
    assert np.array_equal(c.C1, np.eye(3))
    assert np.array_equal(c.C2, -np.ones((3, 1)))
    assert c.sigma2_min == c.sigma2_max == 1.0
    assert c.kappa == 1.0


def test_constraints_require_valid_bridges():
    with pytest.raises(InvalidArgumentError):
        build_constraints(PATH3.with_bridges([0]))


def test_five_node_diagonal_counts():
    # five nodes, two bridges; node 2 sits between both
    topo = make_topology(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).with_bridges([1, 3])
    assert validate_bridges(topo)[0]
    c = build_constraints(topo, n=2)
    counts = [len(bj) for bj in topo.bridge_nbrs]
    assert counts == [1, 1, 2, 1, 1]
    assert np.allclose(np.diag(c.E1.T @ c.E1), np.repeat(counts, 2))
    assert (c.sigma2_min, c.sigma2_max) == (1.0, 2.0)


@given(connected_graphs(max_L=6), st.integers(1, 3), st.integers(0, 3))
def test_spectrum_matches_explicit_eigenvalues(topo, n, extra):
    t = topo.with_bridges(select_bridges(topo, len(select_bridges(topo)) + extra))
    c = build_constraints(t, n)
    ev = np.linalg.eigvalsh(c.E1.T @ c.E1)
    assert ev.min() == pytest.approx(c.sigma2_min, abs=1e-12)
    assert ev.max() == pytest.approx(c.sigma2_max, abs=1e-12)
    assert np.linalg.matrix_rank(c.E1) == t.L * n
    assert np.all(c.C1.sum(axis=1) == 1) and np.all((c.C1 == 1).sum(axis=1) == 1)
    assert np.all((c.C2 == -1).sum(axis=1) == 1) and np.all(c.C2.sum(axis=1) == -1)
    assert c.E1.shape == (t.n_constraints * n, t.L * n)
    assert c.E2.shape == (t.n_constraints * n, len(t.bridges) * n)


def test_rows_lexicographic():
    t = complete(3).with_bridges([0, 2])
    assert t.constraint_rows() == [(0, 0), (0, 2), (1, 0), (1, 2), (2, 0), (2, 2)]


# ---------------------------------------------------------------- rate constants

def test_rho_opt_kappa_one():
    rc = rho_opt(2, 2, 1, 1)
    assert rc.rho_opt == pytest.approx(2.0)
    assert rc.delta_opt == pytest.approx(0.5)


def test_rho_opt_kappa_three():
    rc = rho_opt(2, 2, 1, 3)
    assert rc.rho_opt == pytest.approx(2.0)
    assert rc.delta_opt == pytest.approx(0.25)


def test_delta_opt_ill_conditioned_objective():
    rc = rho_opt(1, 2, 1, 1)
    assert rc.kappa_f == 2
    assert rc.delta_opt == pytest.approx(1 / 3)


@given(st.floats(0.1, 10), st.floats(1, 20))
def test_cbdsbl_reduction(s2min, kappa):
    rc = rho_opt(2, 2, s2min, s2min * kappa)
    assert rc.rho_opt == pytest.approx(2 / s2min, rel=1e-12)
    assert rc.delta_opt == pytest.approx(1 / (kappa + 1), rel=1e-12)
    assert rc.rho_opt > 0 and 0 < rc.delta_opt < 1


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 1, -1, 1), (2, 1, 1, 1), (1, 1, 2, 1), (1, math.inf, 1, 1)])
def test_rho_opt_rejects_bad_input(args):
    with pytest.raises(InvalidArgumentError):
        rho_opt(*args)


def test_cbdsbl_constants_from_topology():
    c = build_constraints(PATH3.with_bridges([1]))
    rc = cbdsbl_rate_constants(c)
    assert (rc.m_f, rc.M_f, rc.rho_opt, rc.delta_opt) == (2.0, 2.0, 2.0, 0.5)


def test_delta_general_f3_branch():
    rc = rho_opt(2, 2, 1, 1)
    # mu=1.1, nu=2, rho=2: f1 = 4/6.2, f2 = 1/2, f3 = 1/11
    assert delta_general(1.1, 2.0, 2.0, rc, (1, 1)) == pytest.approx(0.1 / 1.1, rel=1e-14)
    # f3(2) = 1/2 caps the value whatever the other arguments are
    for nu, rho in [(1.5, 0.5), (2.0, 2.0), (1.01, 10.0)]:
        assert delta_general(2.0, nu, rho, rc, (1, 1)) <= 0.5
    assert delta_general(2.0, 2.0, 2.0, rc, (1, 1)) == pytest.approx(0.5)


def test_delta_general_large_nu_vanishes():
    rc = rho_opt(2, 2, 1, 1)
    assert delta_general(5.0, 1e9, 2.0, rc, (1, 1)) < 1e-8


@pytest.mark.parametrize("mu,nu,rho", [(1.0, 2.0, 1.0), (2.0, 1.0, 1.0), (2.0, 2.0, 0.0)])
def test_delta_general_domain(mu, nu, rho):
    with pytest.raises(InvalidArgumentError):
        delta_general(mu, nu, rho, rho_opt(2, 2, 1, 1), (1, 1))


def test_delta_general_broadcasts():
    rc = rho_opt(2, 2, 1, 2)
    mu = np.linspace(1.1, 5, 7)
    out = delta_general(mu[:, None], 2.0, np.array([1.0, 2.0]), rc, (1, 2))
    assert out.shape == (7, 2)


def _grid_max(rc, s2min, s2max):
    """Independent coarse-to-fine grid maximum of the three-term min."""
    lo = np.array([1.0 + 1e-9, 1.0 + 1e-9, 1e-6 * rc.rho_opt])
    hi = np.array([100.0, 100.0, 100.0 * rc.rho_opt])
    best = -1.0
    for _ in range(6):
        mu, nu, rho = (np.geomspace(lo[i] - (1.0 if i < 2 else 0.0) + 1e-12, hi[i] - (1.0 if i < 2 else 0.0), 60)
                       + (1.0 if i < 2 else 0.0) for i in range(3))
        M, N, R = np.meshgrid(mu, nu, rho, indexing="ij")
        f1 = 2 * rc.m_f / (N * rc.M_f**2 / (R * (N - 1) * s2min) + M * R * s2max)
        f2 = s2min / (N * s2max)
        f3 = (M - 1) / M
        d = np.minimum(np.minimum(f1, f2), f3)
        i = np.unravel_index(np.argmax(d), d.shape)
        best = max(best, float(d[i]))
        c = np.array([mu[i[0]], nu[i[1]], rho[i[2]]])
        lo = np.maximum(lo, c - (c - lo) * 0.25 - 1e-12)
        hi = np.minimum(hi, c + (hi - c) * 0.25 + 1e-12)
        lo[:2] = np.maximum(lo[:2], 1.0 + 1e-12)
    return best


@pytest.mark.parametrize("kappa,kappa_f", [(1, 1), (3, 1), (2, 2), (5, 1.5)])
def test_grid_maximum_matches_closed_form(kappa, kappa_f):
    rc = rho_opt(1.0, kappa_f, 1.0, kappa)
    best = _grid_max(rc, 1.0, kappa)
    assert best <= rc.delta_opt + 1e-3
    assert best >= rc.delta_opt - 1e-3


def test_rho_opt_dominates_other_rho():
    rc = rho_opt(2, 2, 1, 3)
    mu = np.linspace(1.001, 100, 400)[:, None, None]
    nu = np.linspace(1.001, 100, 400)[None, :, None]
    for scale in (0.25, 0.5, 2, 4):
        d = delta_general(mu, nu, np.array([rc.rho_opt * scale]), rc, (1, 3))
        assert d.max() <= rc.delta_opt + 1e-12


# ---------------------------------------------------------------- text format

def test_text_roundtrip():
    topo = generate_erdos_renyi(7, 0.6, seed=2)
    topo = topo.with_bridges(select_bridges(topo))
    text = format_topology(topo)
    assert text.splitlines()[0] == "7"
    assert text.splitlines()[-1].startswith("bridges:")
    assert parse_topology(text) == topo


def test_parse_with_comments_and_errors():
    t = parse_topology("# a path\n3\n0 1\n1 2\nbridges: 1\n")
    assert t.bridges == (1,)
    with pytest.raises(InvalidArgumentError):
        parse_topology("")
    with pytest.raises(InvalidArgumentError):
        parse_topology("x\n")
    with pytest.raises(InvalidArgumentError):
        parse_topology("3\n0 1 2\n")
