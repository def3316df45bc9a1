import numpy as np
import pytest

from dpmf.blowup import (BlowupEvent, detect_onset, divergence_fit, divergence_samples,
                         exit_check, full_blowup_check, solve_pi, zeta_from_state)
from dpmf.density import duhamel_density
from dpmf.renewal import FluxCurve

from conftest import solve_atom, supercritical_lam

# Reset-free constants from tests/oracles/derive_blowup.py (scipy.stats.invgauss only).
ORACLE = {
    0.5: dict(S1=0.022554126119200872, T1=0.018775419031969564, a1=178.72322207419276,
              pi1=0.9766965834472059, amplitude=0.019894284029701104),
    1.0: dict(S1=0.10593444527286529, T1=0.08519317877770545, a1=29.895213782134753,
              pi1=0.9690393452251082, amplitude=0.034395606929471044),
}


@pytest.fixture(scope="module", params=[0.5, 1.0], ids=lambda x: f"x0={x}")
def reset_free(request):
    # epsilon = 5 keeps every reset beyond the first plateau
    x0 = request.param
    return x0, solve_atom(x0, supercritical_lam(x0), epsilon=5.0, step=0.001, horizon=1.0)


def test_onset_and_jump_match_oracle(reset_free):
    x0, run = reset_free
    ev, ref = run.events[0], ORACLE[x0]
    assert ev.S == pytest.approx(ref["S1"], rel=1e-12)
    assert ev.T == pytest.approx(ref["T1"], rel=1e-12)
    assert ev.pi == pytest.approx(ref["pi1"], abs=1e-11)
    assert ev.U - ev.S == pytest.approx(run.params.lam * ev.pi, rel=1e-14)
    # exact derivative of g at onset gives a1
    assert run.params.lam / run.params.nu * ev.dg == pytest.approx(ref["a1"], rel=1e-8)


def test_short_refractory_run_shares_first_event(supercritical):
    x0, run = supercritical
    ev, ref = run.events[0], ORACLE[x0]
    assert ev.S == pytest.approx(ref["S1"], rel=1e-9)
    assert ev.pi == pytest.approx(ref["pi1"], abs=1e-9)
    assert run.status == "horizon" and len(run.events) >= 2


def test_plateau_is_flat_and_clock_jumps(supercritical):
    _, run = supercritical
    st = run.state
    for ev in run.events:
        on = (st.sigma >= ev.S) & (st.sigma <= ev.U)
        assert np.all(st.psi[on] == ev.T)
        phi = st.phi_curve
        assert phi.right(ev.T) - phi.left(ev.T) == pytest.approx(run.params.lam * ev.pi, rel=1e-12)


def test_density_route_agrees_with_flux_route(supercritical):
    _, run = supercritical
    st = run.state
    ev = run.events[0]
    x = np.linspace(0, 12, 6001)
    snap = duhamel_density(st, ev.S, x)
    assert solve_pi(snap, run.params.lam) == pytest.approx(ev.pi, abs=1e-4)
    assert 0 < ev.pi < snap.active_mass


def test_zeta_curvature(supercritical):
    _, run = supercritical
    lam = run.params.lam
    for ev in run.events:
        z = zeta_from_state(run.state, ev.S, float(run.state.G_at(ev.S)))
        p = 1e-5
        curv = 2 * z(np.array([p]))[0] / p ** 2
        assert curv == pytest.approx(-lam ** 2 * ev.dg, rel=0.1)


def test_exit_resumes_below_threshold(supercritical):
    _, run = supercritical
    for ev in run.events[:-1]:
        assert ev.status == "full"
        assert run.params.lam * ev.exit_g < 1


def test_no_blowup_when_subcritical(subcritical):
    assert subcritical.status == "horizon" and not subcritical.events


def test_divergence_exponent_and_derived_amplitude(reset_free):
    x0, run = reset_free
    ev = run.events[0]
    sig, g, dt = divergence_samples(run.state, ev)
    expo, amp = divergence_fit(sig, g, ev.S, dt, run.params)
    assert expo == pytest.approx(-0.5, abs=1e-3)
    # f ~ 1 / (lam sqrt(2 a1 (T1 - t))) with the exact a1
    assert amp == pytest.approx(ORACLE[x0]["amplitude"], rel=2e-3)


def test_divergence_fit_recovers_planted_law():
    from dpmf.core import ModelParams
    p = ModelParams(1.0, 2.0, 1.0, 0.1)
    dt = np.logspace(-8, -4, 30)
    f = 0.3 * dt ** -0.5
    g = f / (p.nu + p.lam * f)
    expo, amp = divergence_fit(np.zeros(30), g, 1.0, dt, p)
    assert expo == pytest.approx(-0.5, abs=1e-10)
    assert amp == pytest.approx(0.3, rel=1e-10)


def test_divergence_fit_needs_samples():
    from dpmf.core import ModelParams
    with pytest.raises(ValueError):
        divergence_fit(np.zeros(5), np.full(5, 0.1), 1.0, np.ones(5), ModelParams(1, 1, 1, 1))


def planted(slope, n=400, S1=1.0, lam=2.0, curvature=0.0):
    s = np.linspace(0.5, S1, n, endpoint=False)
    g = 1 / lam + slope * (s - S1) + curvature * (s - S1) ** 2
    return FluxCurve(s, np.cumsum(g) * (s[1] - s[0]), g)


def test_full_blowup_check_recovers_planted_slope():
    chk = full_blowup_check(planted(3.0, curvature=2.0), 1.0, lam=2.0, nu=1.0)
    assert chk.status == "full"
    assert chk.a == pytest.approx(2.0 * 3.0, rel=0.05)


def test_full_blowup_check_rejects_negative_slope():
    assert full_blowup_check(planted(-1.0), 1.0, lam=2.0, nu=1.0).status == "rejected"


def test_full_blowup_check_flat_is_inconclusive():
    assert full_blowup_check(planted(0.0), 1.0, lam=2.0, nu=1.0).status == "inconclusive"


def test_full_blowup_check_on_solved_run(supercritical):
    _, run = supercritical
    assert run.events[0].a > 0


def test_detect_onset_quadratic():
    s = np.linspace(0, 1, 101)
    g = 0.2 + s ** 2
    assert detect_onset(FluxCurve(s, s, g), 2.0) == pytest.approx(np.sqrt(0.3), abs=1e-12)
    assert detect_onset(FluxCurve(s, s, 0.1 * g), 2.0) is None
    assert detect_onset(FluxCurve(s, s, g), 0.0) is None


def onset_density(a, b):
    # q = a x (1 + b x^2) e^{-x}: q''(0) = -2 q'(0) as the absorbing boundary requires
    return lambda x: a * x * (1 + b * x ** 2) * np.exp(-x)


# lam q'(0) / 2 = 1 and q''(0) + q'''(0) / 2 > 0
@pytest.mark.parametrize("a,b", [(0.1, 1.0), (0.2, 0.5)])
def test_solve_pi_density_route(a, b):
    from scipy import integrate
    from dpmf.kernels import fp_cdf
    q, lam = onset_density(a, b), 2.0 / a
    x = np.linspace(0, 40, 40001)
    pi = solve_pi((x, q(x)), lam)
    ref, _ = integrate.quad(lambda y: fp_cdf(lam * pi, y) * q(y), 0, np.inf, epsabs=1e-13)
    assert pi == pytest.approx(ref, abs=1e-6)
    assert 0 < pi < integrate.trapezoid(q(x), x)


@pytest.mark.parametrize("q,lam", [(onset_density(0.5, 0.0), 4.0),  # at threshold, flux decreasing
                                   (lambda x: 4 * x ** 2 * np.exp(-2 * x), 2.0)])  # below threshold
def test_solve_pi_rejects_non_onset_density(q, lam):
    x = np.linspace(0, 40, 40001)
    with pytest.raises(ArithmeticError):
        solve_pi((x, q(x)), lam)


def test_exit_check_statuses(supercritical):
    _, run = supercritical
    st = run.state
    lam = run.params.lam
    mk = lambda g: BlowupEvent(1, 0.0, 0.0, 0.5, 1.0, 1.0, g, "full")
    assert exit_check(st, mk(0.5 / lam)) == "resume"
    assert exit_check(st, mk(1 / lam)) == "marginal_exit"
    assert exit_check(st, mk(2 / lam)) == "explosive_exit"
