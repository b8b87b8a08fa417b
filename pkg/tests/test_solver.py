import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjnet import kernels
from hjnet.errors import InvalidArgument, InvalidState, RejectedStep
from hjnet.flux_limiter import MINUS_INFINITY, JunctionFunction, a0
from hjnet.grid import Grid, GridFunction
from hjnet.hamiltonian import CallableHamiltonian, PowerHamiltonian, quadratic
from hjnet.network import Edge, Network, build_junction
from hjnet.solver import (Operator, SchemeConfig, godunov_flux, junction_flux, reduction_experiment, solve,
                          solve_stationary, step)

HS = [quadratic(), PowerHamiltonian(1.0, 0.5, 1.5, 0.2), quadratic(scale=0.5, center=-1.0)]
JGRID = Grid(build_junction(3), 0.05, 1.0)


def _line_network():
    return Network.from_edges([Edge("a", 1.0, "l", "m"), Edge("b", 0.7, "m", "r")])


# --------------------------------------------------------------------------- grid

def test_grid_layout():
    grid = Grid(_line_network(), 0.3)
    assert grid.n_nodes == len(set(np.concatenate(list(grid.edge_nodes.values()))))
    for e in grid.network.edge_ids:
        x = grid.edge_offsets[e]
        assert x[0] == 0.0 and x[-1] == pytest.approx(grid.edge_length[e])
        assert x.size >= 3
        assert np.allclose(np.diff(x), grid.edge_dx[e])
    # the shared vertex is one unknown
    assert grid.edge_nodes["a"][-1] == grid.edge_nodes["b"][0] == grid.vertex_node("m")


def test_short_edges_get_two_cells():
    grid = Grid(Network.from_edges([Edge("a", 0.01, "l", "r")]), 1.0)
    assert grid.edge_offsets["a"].size == 3


def test_truncation_per_edge():
    grid = Grid(build_junction(2), 0.1, {"e1": 1.0, "e2": 2.0})
    assert grid.edge_length == {"e1": 1.0, "e2": 2.0}
    with pytest.raises(InvalidArgument):
        Grid(build_junction(2), 0.1)


def test_grid_function_validation():
    with pytest.raises(InvalidState):
        GridFunction(JGRID, np.zeros(3))
    with pytest.raises(InvalidState):
        GridFunction(JGRID, np.full(JGRID.n_nodes, np.nan))
    u = GridFunction(JGRID, JGRID.sample(lambda e, x: x))
    assert u.at("e2", 0.525) == pytest.approx(0.525)


# --------------------------------------------------------------------------- fluxes

@settings(max_examples=200, deadline=None)
@given(st.sampled_from(HS), st.floats(-10.0, 10.0))
def test_godunov_flux_consistent(H, p):
    assert godunov_flux(H, p, p) == float(H(p))


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.0, 2.0), st.floats(0.0, 3.0), st.integers(0, 2))
def test_junction_flux_at_germ_slopes(A, extra, k):
    net = build_junction(3)
    config = SchemeConfig(HS, {"o": A})
    lam = max(A, a0(HS)) + extra
    slopes = [float(H.partial_inverse(lam, 1)) for H in HS]
    slopes[k] = float(HS[k].partial_inverse(lam, -1))
    assert junction_flux(net, "o", slopes, config) == pytest.approx(lam, rel=1e-14, abs=1e-14)


def test_junction_flux_with_general_function():
    net = build_junction(2)
    F = JunctionFunction(2, lambda p: 2.0 - p[0] - p[1])
    config = SchemeConfig([quadratic(), quadratic()], {"o": F})
    assert junction_flux(net, "o", [0.5, 0.5], config) == 1.0
    assert junction_flux(net, "o", [-2.0, 3.0], config) == 4.0


def test_config_validation():
    with pytest.raises(InvalidArgument):
        SchemeConfig(HS, cfl_safety=0.0)
    with pytest.raises(InvalidArgument):
        SchemeConfig(HS, boundary="periodic")
    with pytest.raises(InvalidArgument):
        SchemeConfig(HS, backend="fortran")
    with pytest.raises(InvalidArgument):
        Operator(JGRID, SchemeConfig(HS[:2]))


# --------------------------------------------------------------------------- time marching

def test_step_rejects_large_dt():
    config = SchemeConfig(HS, {"o": 0.3})
    u = GridFunction(JGRID, JGRID.sample(lambda e, x: np.sin(3 * x)))
    _, allowed = Operator(JGRID, config).evaluate(u.values)
    with pytest.raises(RejectedStep) as err:
        step(u, 2 * allowed, config)
    assert err.value.required_dt == pytest.approx(allowed)
    assert step(u, allowed, config).time == allowed


def test_snapshots_land_on_requested_times():
    config = SchemeConfig(HS, {"o": 0.3})
    res = solve(lambda e, x: np.cos(x), 0.3, JGRID, config, snapshot_times=[0.0, 0.1, 0.25])
    assert [s.time for s in res.info["snapshots"]] == [0.0, 0.1, 0.25, 0.3]
    assert res.time == 0.3
    assert np.array_equal(res.info["snapshots"][-1].values, res.values)


def test_constant_state_with_high_limiter_moves_at_limiter_speed():
    grid = Grid(build_junction(2), 0.05, 1.0)
    res = solve(lambda e, x: 0 * x, 0.2, grid, SchemeConfig([quadratic(), quadratic()], {"o": 1.0}))
    assert res.values[grid.vertex_node("o")] == pytest.approx(-0.2, abs=1e-12)


def _random_state(rng, grid):
    c = rng.normal(size=(3, 2))
    return grid.sample(lambda e, x: sum(c[k, 0] * np.sin((k + 1) * x + c[k, 1]) for k in range(3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 1.5))
def test_discrete_comparison(seed, A):
    rng = np.random.default_rng(seed)
    op = Operator(JGRID, SchemeConfig(HS, {"o": A}))
    u = _random_state(rng, JGRID)
    v = u + rng.uniform(0.0, 0.5, JGRID.n_nodes)
    for _ in range(20):
        hu, du = op.evaluate(u)
        hv, dv = op.evaluate(v)
        dt = min(du, dv)
        u, v = u - dt * hu, v - dt * hv
        assert np.all(u <= v)


def test_general_function_rows_are_monotone():
    rng = np.random.default_rng(5)
    F = JunctionFunction(2, lambda p: 1.0 - 2 * p[0] - 0.5 * p[1])
    grid = Grid(build_junction(2), 0.05, 1.0)
    op = Operator(grid, SchemeConfig([quadratic(), quadratic(center=0.5)], {"o": F}))
    u = _random_state(rng, grid)
    v = u + rng.uniform(0.0, 0.5, grid.n_nodes)
    for _ in range(30):
        hu, du = op.evaluate(u)
        hv, dv = op.evaluate(v)
        dt = min(du, dv)
        u, v = u - dt * hu, v - dt * hv
        assert np.all(u <= v)


def test_shift_normalisation_commutes_with_marching():
    rng = np.random.default_rng(11)
    shifts = np.array([0.3, -0.7, 1.1])
    c = 0.4
    base = [quadratic(center=0.3), PowerHamiltonian(1.0, -0.7, 1.5, 0.2), quadratic(scale=0.5, center=1.1)]
    moved = [H.shifted(dp=p, dc=c) for H, p in zip(base, shifts)]
    assert all(H.p0 == pytest.approx(0.0) for H in moved)
    op = Operator(JGRID, SchemeConfig(base, {"o": 0.5}))
    op_moved = Operator(JGRID, SchemeConfig(moved, {"o": 0.5 - c}))
    drift = np.zeros(JGRID.n_nodes)
    for e, p in zip(JGRID.network.edge_ids, shifts):
        drift[JGRID.edge_nodes[e]] = p * JGRID.edge_offsets[e]
    u = _random_state(rng, JGRID)
    w = u - drift
    t = 0.0
    for _ in range(50):
        hu, du = op.evaluate(u)
        hw, dw = op_moved.evaluate(w)
        dt = min(du, dw)
        u, w, t = u - dt * hu, w - dt * hw, t + dt
    assert np.max(np.abs(w - (u - drift + c * t))) <= 1e-12


def test_python_and_compiled_backends_agree():
    if kernels.compiled() is None:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(3)
    u0 = _random_state(rng, JGRID)
    fast = solve(u0, 0.3, JGRID, SchemeConfig(HS, {"o": 0.3}, backend="cython"))
    slow = solve(u0, 0.3, JGRID, SchemeConfig(HS, {"o": 0.3}, backend="python"))
    assert fast.info["backend"] == "cython" and slow.info["backend"] == "python"
    assert np.max(np.abs(fast.values - slow.values)) <= 1e-12


def test_callable_hamiltonians_fall_back_to_numpy():
    H = CallableHamiltonian(lambda p: p**2 + 0.1 * np.abs(p), "c")
    res = solve(lambda e, x: x, 0.05, Grid(build_junction(2), 0.1, 1.0), SchemeConfig([H, H]))
    assert res.info["backend"] == "python"


def test_reduction_experiment_shrinks_with_dx():
    H = quadratic()
    F = JunctionFunction(2, lambda p: 2.0 - p[0] - p[1])
    gaps = [reduction_experiment(F, [H, H], lambda e, x: -np.abs(x - 0.5), 0.3,
                                 Grid(build_junction(2), dx, 1.5)).sup_gap for dx in (0.04, 0.02)]
    assert gaps[1] < gaps[0]


# --------------------------------------------------------------------------- stationary

def test_stationary_constant_solution():
    net = Network.from_edges([Edge("x1", 1.0, "0", "0")])
    grid = Grid(net, 0.05)
    alpha = 0.1
    res = solve_stationary(grid, SchemeConfig(quadratic(offset=-1.0)), alpha)
    assert np.allclose(res.values, 1.0 / alpha, atol=1e-8)
    assert res.info["residual"] < 1e-8


def test_stationary_residual_history_and_methods_agree():
    net = Network.from_edges([Edge("x1", 1.0, "0", "0")])
    grid = Grid(net, 0.05)
    config = SchemeConfig(quadratic().shifted(dp=0.3), {"0": 0.5})
    fast = solve_stationary(grid, config, 0.5, tol=1e-10)
    slow = solve_stationary(grid, config, 0.5, tol=1e-10, implicit=False)
    hist = fast.info["history"]
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert np.max(np.abs(fast.values - slow.values)) < 1e-8
    assert fast.info["iterations"] < slow.info["iterations"]


def test_stationary_rejects_bad_discount():
    with pytest.raises(InvalidArgument):
        solve_stationary(JGRID, SchemeConfig(HS), 0.0)


def test_truncated_end_uses_state_constraint_floor():
    grid = Grid(build_junction(1), 0.1, 1.0)
    end = grid.edge_nodes["e1"][-1]
    res = solve(lambda e, x: 0 * x, 0.5, grid, SchemeConfig(quadratic(offset=-1.0)))
    # a flat state moves at speed -min H everywhere
    assert res.values[end] == pytest.approx(0.5, abs=1e-12)
    assert math.isfinite(res.values.sum())


def test_minus_infinity_limiter_matches_a0():
    rng = np.random.default_rng(8)
    u0 = _random_state(rng, JGRID)
    lo = solve(u0, 0.2, JGRID, SchemeConfig(HS, {"o": MINUS_INFINITY}))
    base = solve(u0, 0.2, JGRID, SchemeConfig(HS, {"o": a0(HS)}))
    assert np.array_equal(lo.values, base.values)
