import numpy as np
import pytest

from steadybounds import analytic_cavity as ac
from steadybounds import correlations as cr
from steadybounds import liouvillian as lv
from steadybounds import sensitivity as se
from steadybounds.errors import ModelClassError, ZeroRate
from steadybounds.operators import build_parametric_cavity, build_thermal_cavity, thermal_dim


def rel_diff(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def test_linear_solve_matches_finite_difference(suite):
    for name, model in suite.items():
        ls = se.dss_domega(model)
        fd = se.finite_diff_dss(model)
        assert ls.method == "linear_solve" and fd.method == "finite_difference"
        assert rel_diff(fd.d_rho, ls.d_rho) < 1e-5, name
        assert abs(np.trace(ls.d_rho)) < 1e-10, name
        assert np.abs(ls.d_rho - ls.d_rho.conj().T).max() < 1e-10, name
        assert fd.richardson_error < 1e-5 * np.abs(ls.d_rho).max(), name


def test_cavity_derivative_matches_closed_form():
    for eps in (0.3, 0.6, 0.9):
        p = ac.CavityParams(1.0, eps, 0.2)
        d = se.dss_domega(lv.adequate_cavity(1.0, eps, 0.2)).d_obs["g0"]
        assert d == pytest.approx(ac.dnss_domega(p), rel=1e-8)


def test_near_critical_derivative():
    ec = ac.epsilon_c(1.0, 1.0)
    p = ac.CavityParams(1.0, ec * (1 - 0.0025), 1.0)
    d = se.dss_domega(lv.adequate_cavity(1.0, p.epsilon, 1.0)).d_obs["g0"]
    assert d == pytest.approx(ac.dnss_domega_critical(p), rel=0.01)


def test_named_observables(cavity_models):
    m = cavity_models[0.5]
    res = se.dss_domega(m, {"twice": 2 * m.g0, "one": np.eye(m.dim)})
    assert res.d_obs["twice"] == pytest.approx(2 * res.d_obs["g0"], rel=1e-12)
    assert res.d_obs["one"] == pytest.approx(0.0, abs=1e-12)


def test_ineffective_parameter_gives_zero():
    vac = build_parametric_cavity(1.0, 0.0, 0.2, 6)
    assert np.abs(se.dss_domega(vac).d_rho).max() < 1e-12
    th = build_thermal_cavity(0.5, 1.0, thermal_dim(1.0, 1e-14))
    assert np.abs(se.dss_domega(th).d_rho).max() < 1e-12
    assert np.abs(se.finite_diff_dss(th, richardson=False).d_rho).max() < 1e-9
    with pytest.raises(ValueError):
        se.finite_diff_dss(th, delta=0.0)


def test_snr_below_qfi_rate(suite):
    for name, model in suite.items():
        gamma = model.loss_rate()
        for frac in np.linspace(0.1, 0.9, 9):
            g1 = frac * gamma
            assert se.snr_rate(model, g1) <= se.qfi_rate_bound(model, g1), (name, frac)
    m = suite["cavity_eps0.5"]
    assert se.qfi_rate_bound(m, m.loss_rate()) == float("inf")


def test_snr_formula_pieces(cavity_models):
    m = cavity_models[0.9]
    p = ac.CavityParams(1.0, 0.9, 0.2)
    G, dG, tc = ac.nss(p), ac.dnss_domega(p), ac.tau_c_exact(p)
    g1 = 0.1
    expected = (g1 * dG) ** 2 / (g1 * G + (g1 * G) ** 2 * tc)
    assert se.snr_rate(m, g1) == pytest.approx(expected, rel=1e-7)
    assert se.snr_rate(m, g1, g0_mean=G, d_g0=0.0, tau_c=tc) == 0.0
    # bunched light: the correlation term adds to the shot noise
    assert cr.correlation_time_resolvent(m).tau_c > 0
    with pytest.raises(ValueError):
        se.snr_rate(m, 0.0)
    with pytest.raises(ValueError):
        se.snr_rate(m, 0.3)


def test_snr_errors():
    th = build_thermal_cavity(0.5, 1.0, thermal_dim(1.0, 1e-14))
    with pytest.raises(ModelClassError):
        se.snr_rate(th, 0.1)
    with pytest.raises(ModelClassError):
        se.qfi_rate_bound(th, 0.1)
    vac = build_parametric_cavity(1.0, 0.0, 0.2, 6)
    with pytest.raises(ZeroRate):
        se.snr_rate(vac, 0.1)
