import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmf.core import Atom, GridSpec, ModelParams, build_initial
from dpmf.curves import MonotoneCurve
from dpmf.timechange import (delays_of, delta_schedule, new_state, solve_block,
                             solve_until_blowup, sup_transform)

from conftest import solve_atom


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.floats(0.01, 2.0))
def test_sup_transform_slope_floor(vals, delta):
    s = np.arange(len(vals), dtype=float)
    out = sup_transform(s, np.array(vals), delta)
    assert np.all(out >= np.array(vals) - 1e-12)
    assert np.all(np.diff(out) >= delta - 1e-9)


def test_sup_transform_leaves_steep_curves():
    s = np.linspace(0, 1, 11)
    assert np.allclose(sup_transform(s, 2 * s, 0.5), 2 * s)


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.0])
def test_uncoupled_clock_is_linear(nu):
    run = solve_atom(1.0, 0.0, nu=nu, horizon=3.0, step=0.01)
    st = run.state
    assert np.max(np.abs(st.psi - st.sigma / nu)) < 2 * 0.01


def test_self_consistency(subcritical):
    st = subcritical.state
    p = st.params
    assert subcritical.status == "horizon"
    assert np.max(np.abs(p.nu * st.psi + p.lam * st.G - st.sigma)) < 1e-8


def test_picard_residuals_are_geometric(subcritical):
    multi = [r for r in subcritical.state.residuals if len(r) > 1]
    assert multi
    for r in multi:
        assert all(b < a for a, b in zip(r, r[1:]))


def test_constant_clock_gives_constant_delays():
    psi = MonotoneCurve([-0.2, 0.0, 3.0], [-0.1, 0.0, 1.5])  # nu = 2
    d = delays_of(psi, 0.1)
    s = np.linspace(0, 3, 7)
    assert np.allclose(d.eta(s), 0.2)
    assert np.allclose(d.tau(np.array([0.5, 1.0])), [0.7, 1.2])
    assert d.min_delay == pytest.approx(0.2)


def test_plateau_produces_delay_jump():
    # Psi flat on [1, 2]: mass inactivated there comes back at once
    psi = MonotoneCurve([-0.5, 0, 1, 2, 4], [-0.5, 0, 1, 1, 3])
    d = delays_of(psi, 0.5)
    assert len(d.jumps) == 1
    ts, S, U = d.jumps[0]
    assert (ts, S, U) == pytest.approx((2.5, 1.0, 2.0))
    assert d.xi(2.5) == pytest.approx(2.0)
    assert d.xi(2.5 - 1e-9) == pytest.approx(1.0, abs=1e-8)


def test_delays_need_history():
    with pytest.raises(ValueError):
        delays_of(MonotoneCurve([0, 1], [0, 1]), 0.1)


def test_delta_schedule_halves_down_to_floor():
    p = ModelParams(1.0, 0.5, 1.0, 0.1)
    st = new_state(build_initial(p, Atom(4.0)), p, GridSpec(0.01, 1.0))
    sched = delta_schedule(st)
    assert sched[0] == pytest.approx(0.5)
    assert sched[-1] == pytest.approx(st.delta_min)
    assert all(b <= a for a, b in zip(sched, sched[1:]))


def test_increasing_schedule_rejected():
    p = ModelParams(1.0, 0.5, 1.0, 0.1)
    with pytest.raises(ValueError):
        solve_until_blowup(build_initial(p, Atom(4.0)), p, GridSpec(0.01, 1.0), schedule=[0.1, 0.2])


def test_block_stays_within_one_delay():
    p = ModelParams(1.0, 0.5, 1.0, 0.1)
    st = new_state(build_initial(p, Atom(4.0)), p, GridSpec(0.01, 1.0))
    br = solve_block(st, 0.25)
    assert br.sigma[0] > 0 and br.sigma[-1] <= p.nu * p.epsilon
    assert br.residuals[-1] < 1e-10


def test_refinement_order():
    # Psi differences between successive halvings shrink at least linearly
    runs = [solve_atom(4.0, 0.5, horizon=3.0, step=h).state for h in (0.02, 0.01, 0.005)]
    s = np.linspace(0, 3.0, 61)
    p = [r.psi_curve(s) for r in runs]
    e1, e2 = np.max(np.abs(p[0] - p[1])), np.max(np.abs(p[1] - p[2]))
    assert np.log2(e1 / e2) >= 1.0
