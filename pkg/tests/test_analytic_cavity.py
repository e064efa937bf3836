import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from steadybounds import analytic_cavity as ac
from steadybounds.errors import ThresholdError, ZeroRate

P = ac.CavityParams(1.0, 0.9, 0.2)


def wick_tau_c(p: ac.CavityParams) -> float:
    """tau_c from Gaussian factorisation of the intensity correlator.

    With a(t) = c1 a + c2 a^dag + noise, <a(t) a> = c1 M + c2 N and
    <a^dag(t) a> = conj(c1) N + conj(c2) M, so
    g2(t) - 1 = (|c1 M + c2 N|^2 + |conj(c1) N + conj(c2) M|^2) / N^2.
    """
    n, m = ac.stationary_moments(p)

    def excess(t):
        c1, c2, *_ = ac.langevin_coefficients(p, t)
        return (abs(c1 * m + c2 * n) ** 2 + abs(c1.conjugate() * n + c2.conjugate() * m) ** 2) / n**2

    gap = ac.spectral_gap(p)
    val, _ = quad(excess, 0, 60 / gap, limit=2000, epsabs=1e-13, epsrel=1e-11)
    return 2 * val


def test_nss_values():
    assert ac.nss(P) == pytest.approx(2.025)
    assert ac.nss(ac.CavityParams(1.0, 0.0, 0.2)) == 0.0


def test_nss_monotone_towards_threshold():
    eps = np.linspace(0.0, 0.999, 40) * ac.epsilon_c(1.0, 0.2)
    vals = [ac.nss(ac.CavityParams(1.0, e, 0.2)) for e in eps]
    assert np.all(np.diff(vals) > 0)


def test_threshold_errors():
    above = ac.CavityParams(1.0, 1.01, 0.2)
    for f in (ac.nss, ac.tau_c_exact, ac.tau_c_bound_formula, ac.spectral_gap):
        with pytest.raises(ThresholdError):
            f(above)
    with pytest.raises(ZeroRate):
        ac.tau_c_exact(ac.CavityParams(1.0, 0.0, 0.2))


def test_tau_c_reference_value():
    # closed form with the gamma / (2 epsilon^2) middle term
    assert ac.tau_c_exact(P) == pytest.approx(14.469135802469, rel=1e-12)


@pytest.mark.parametrize("eps", [0.2, 0.6, 0.9, 1.0, 1.004])
def test_tau_c_matches_wick_oracle(eps):
    p = ac.CavityParams(1.0, eps, 0.2)
    assert ac.tau_c_exact(p) == pytest.approx(wick_tau_c(p), rel=1e-7)


def test_tau_c_near_threshold_limit():
    ec = ac.epsilon_c(1.0, 0.2)
    ratios = [ac.tau_c_exact(ac.CavityParams(1.0, ec * (1 - d), 0.2))
              / ac.tau_c_near_critical(ac.CavityParams(1.0, ec * (1 - d), 0.2))
              for d in (1e-2, 1e-3, 1e-4, 1e-5)]
    errs = np.abs(np.array(ratios) - 1)
    assert np.all(np.diff(errs) < 0) and errs[-1] < 1e-3


def test_derivative_matches_difference_and_critical_form():
    h = 1e-6
    num = (ac.nss(ac.CavityParams(1 + h, 0.9, 0.2)) - ac.nss(ac.CavityParams(1 - h, 0.9, 0.2))) / (2 * h)
    assert ac.dnss_domega(P) == pytest.approx(num, rel=1e-8)
    ec = ac.epsilon_c(1.0, 0.2)
    errs = []
    for d in (1e-2, 1e-3, 1e-4):
        p = ac.CavityParams(1.0, ec * (1 - d), 0.2)
        errs.append(abs(ac.dnss_domega_critical(p) / ac.dnss_domega(p) - 1))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("eps", [0.0, 0.5, 0.9, 1.0, 1.003])
def test_langevin_initial_conditions_and_ode(eps):
    p = ac.CavityParams(1.0, eps, 0.2)
    c1, c2, lp, lm = ac.langevin_coefficients(p, 0.0)
    assert c1 == pytest.approx(1) and c2 == pytest.approx(0)
    h = 1e-3
    for x in (0.3, 2.0, 7.5):
        vals = [ac.langevin_coefficients(p, x + k * h)[:2] for k in (-2, -1, 1, 2)]
        d1 = (vals[0][0] - 8 * vals[1][0] + 8 * vals[2][0] - vals[3][0]) / (12 * h)
        d2 = (vals[0][1] - 8 * vals[1][1] + 8 * vals[2][1] - vals[3][1]) / (12 * h)
        c1, c2, *_ = ac.langevin_coefficients(p, x)
        r1, r2 = ac.langevin_rhs(p, c1, c2)
        assert abs(d1 - r1) < 1e-10 and abs(d2 - r2) < 1e-10


def test_langevin_against_ode_integration():
    p = ac.CavityParams(1.0, 0.7, 0.2)

    def rhs(_, y):
        c1, c2 = y[0] + 1j * y[1], y[2] + 1j * y[3]
        d1, d2 = ac.langevin_rhs(p, c1, c2)
        return [d1.real, d1.imag, d2.real, d2.imag]

    sol = solve_ivp(rhs, (0, 12), [1, 0, 0, 0], rtol=1e-12, atol=1e-14, dense_output=True)
    for x in (1.0, 5.0, 12.0):
        c1, c2, *_ = ac.langevin_coefficients(p, x)
        y = sol.sol(x)
        assert abs(c1 - (y[0] + 1j * y[1])) < 1e-9
        assert abs(c2 - (y[2] + 1j * y[3])) < 1e-9


def test_langevin_decays_below_threshold():
    for eps in (0.3, 1.0, 1.004):
        c1, c2, *_ = ac.langevin_coefficients(ac.CavityParams(1.0, eps, 0.2), 2000.0)
        assert abs(c1) < 1e-6 and abs(c2) < 1e-6


def test_degenerate_point_is_continuous():
    a = ac.langevin_coefficients(ac.CavityParams(1.0, 1.0, 0.2), 3.0)
    b = ac.langevin_coefficients(ac.CavityParams(1.0, 1.0 + 1e-7, 0.2), 3.0)
    assert abs(a[0] - b[0]) < 1e-5 and abs(a[1] - b[1]) < 1e-5


below = st.tuples(st.floats(0.05, 5.0), st.floats(0.01, 5.0), st.floats(0.01, 0.999))


@settings(max_examples=300, deadline=None)
@given(below)
def test_bound_never_exceeds_exact(t):
    w, g, frac = t
    p = ac.CavityParams(w, frac * ac.epsilon_c(w, g), g)
    diff = ac.tau_c_exact(p) - ac.tau_c_bound_formula(p)
    assert diff >= -1e-9 * max(1.0, abs(ac.tau_c_exact(p)))
    assert ac.bound_gap(p) == pytest.approx(diff, rel=1e-9, abs=1e-9 * ac.tau_c_exact(p))
    assert ac.bound_gap_lower_estimate(p) <= ac.bound_gap(p) * (1 + 1e-9) + 1e-12


def test_bound_ineffective_for_slow_oscillator():
    ec = ac.epsilon_c(0.1, 1.0)
    assert ac.tau_c_bound_formula(ac.CavityParams(0.1, 0.5 * ec, 1.0)) < 0
    # close to threshold it turns positive but captures only omega^2/eps_c^2 of tau_c
    p = ac.CavityParams(0.1, 0.999 * ec, 1.0)
    assert 0 < ac.tau_c_bound_formula(p) < 0.05 * ac.tau_c_exact(p)


def test_near_critical_bound_ratio():
    w, g = 1.0, 0.2
    ec = ac.epsilon_c(w, g)
    p = ac.CavityParams(w, ec * (1 - 1e-6), g)
    ratio = ac.tau_c_bound_formula(p) / ac.tau_c_exact(p)
    assert ratio == pytest.approx(w**2 / ec**2, rel=1e-3)


def test_thermal_reference():
    assert ac.thermal_tau_c(0.5) == 4.0
    np.testing.assert_allclose(ac.thermal_g2(0.5, [0.0, 2.0]), [2.0, 1 + math.exp(-1)])
