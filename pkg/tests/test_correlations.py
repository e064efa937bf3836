import numpy as np
import pytest

from steadybounds import analytic_cavity as ac
from steadybounds import correlations as cr
from steadybounds import liouvillian as lv
from steadybounds.errors import InvalidObservable, ZeroRate
from steadybounds.operators import (build_parametric_cavity, build_thermal_cavity, expect,
                                    random_hermitian, thermal_dim)


def test_thermal_g2_curve(thermal_model):
    tau, g2 = cr.g2_curve(thermal_model, 10.0, 50)
    np.testing.assert_allclose(g2, ac.thermal_g2(0.5, tau), rtol=0, atol=1e-9)
    assert cr.g2_at(thermal_model, 0.0) == pytest.approx(2.0, abs=1e-10)
    assert cr.g2_at(thermal_model, -3.0) == pytest.approx(cr.g2_at(thermal_model, 3.0), abs=1e-13)


def test_thermal_tau_c_does_not_depend_on_occupation():
    vals = []
    for nbar in (0.5, 1.0, 2.0):
        m = build_thermal_cavity(0.5, nbar, thermal_dim(nbar, 1e-14))
        vals.append(cr.correlation_time_resolvent(m).tau_c)
    np.testing.assert_allclose(vals, 4.0, rtol=1e-8)


def test_cavity_tau_c_against_closed_form(cavity_models):
    res = cr.correlation_time_resolvent(cavity_models[0.9])
    assert res.method == "resolvent"
    assert res.tau_c == pytest.approx(ac.tau_c_exact(ac.CavityParams(1.0, 0.9, 0.2)), rel=1e-8)
    assert res.click_rate == pytest.approx(0.2 * 2.025, rel=1e-8)


def test_two_paths_agree(suite):
    for name, model in suite.items():
        for tau in (0.0, 0.7, 3.1):
            a, b = cr.g2_at(model, tau), cr.g2_conditional(model, tau)
            assert a == pytest.approx(b, abs=1e-9), name


def test_curve_matches_pointwise(cavity_models):
    m = cavity_models[0.5]
    tau, g2 = cr.g2_curve(m, 6.0, 12)
    for t, g in zip(tau[::4], g2[::4]):
        assert g == pytest.approx(cr.g2_at(m, t), abs=1e-9)


def test_g2_nonnegative_and_decorrelates(suite):
    for name, model in suite.items():
        gap = lv.spectral_gap(model)
        tau, g2 = cr.g2_curve(model, 30.0 / gap, 300)
        assert g2.min() >= -1e-9, name
        assert abs(g2[-1] - 1) < 1e-6, name


def test_quadrature_agrees_with_resolvent(suite):
    for name, model in suite.items():
        q = cr.correlation_time_quadrature(model, steps=4000)
        r = cr.correlation_time_resolvent(model)
        assert abs(q.tau_c - r.tau_c) <= max(1e-6, q.truncation_estimate) + 1e-6 * abs(r.tau_c), name


def test_thermal_quadrature():
    m = build_thermal_cavity(1.0, 1.0, thermal_dim(1.0, 1e-14))
    q = cr.correlation_time_quadrature(m, tau_max=20.0, steps=2000)
    assert q.tau_c == pytest.approx(2.0, rel=1e-4)
    assert q.truncation_estimate < 1e-7


def test_zero_rate_for_undriven_cavity():
    vac = build_parametric_cavity(1.0, 0.0, 0.2, 6)
    for f in (lambda: cr.g2_at(vac, 0.0), lambda: cr.correlation_time_resolvent(vac),
              lambda: cr.correlation_time_quadrature(vac, tau_max=5.0, gap=0.1)):
        with pytest.raises(ZeroRate):
            f()


def test_resonant_qubit_antibunched(suite):
    q = suite["qubit_resonant"]
    assert cr.g2_at(q, 0.0) <= 1e-9
    tau_c = cr.correlation_time_resolvent(q).tau_c
    g = expect(q.g0, lv.steady_state(q).rho).real
    assert -1 / (0.2 * g) <= tau_c < 0


def test_truncation_invariance():
    m = lv.adequate_cavity(1.0, 0.8, 0.2)
    base = cr.correlation_time_resolvent(m).tau_c
    xi = m.params["squeeze"]
    bigger = build_parametric_cavity(1.0, 0.8, 0.2, m.dim + 5, squeeze=xi)
    assert cr.correlation_time_resolvent(bigger).tau_c == pytest.approx(base, rel=1e-6)


def test_system_autocorrelation(suite):
    rng = np.random.default_rng(5)
    for name, model in suite.items():
        d = model.dim
        assert cr.system_autocorrelation(model, np.eye(d), 1.3) == pytest.approx(0, abs=1e-12)
        rho = lv.steady_state(model).rho
        var = expect(model.g0 @ model.g0, rho).real - expect(model.g0, rho).real ** 2
        assert cr.system_autocorrelation(model, model.g0, 0.0) == pytest.approx(var, abs=1e-10)
        a = random_hermitian(d, rng)
        with pytest.raises(InvalidObservable):
            cr.system_autocorrelation(model, a + 1j * np.eye(d), 0.0)


def test_autocorrelation_envelope_and_integral(driven_qubit):
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    gap = lv.spectral_gap(driven_qubit)
    eig = lv.liouvillian_eigenvalues(lv.assemble(driven_qubit))
    slow = -np.sort(-eig.real)[1]
    assert slow == pytest.approx(-gap, rel=1e-9)
    c0 = abs(cr.system_autocorrelation(driven_qubit, a, 0.0))
    for t in (5.0, 20.0, 40.0):
        c = abs(cr.system_autocorrelation(driven_qubit, a, t))
        assert c <= 3 * max(c0, 1e-12) * np.exp(-gap * t) + 1e-12
    tau = np.linspace(0.0, 200.0, 4001)
    vals = [cr.system_autocorrelation(driven_qubit, a, t) for t in tau[::8]]
    from scipy.integrate import simpson
    quad = simpson(vals, x=tau[::8])
    assert cr.integrated_autocorrelation(driven_qubit, a) == pytest.approx(quad, rel=1e-4, abs=1e-8)


def test_count_variance_rate(thermal_model):
    n = cr.click_rate(thermal_model)
    assert n == pytest.approx(0.5 * 2 * 1, rel=1e-10)  # gamma (nbar + 1) nbar on the downward channel
    asym = cr.count_variance_rate(thermal_model)
    assert asym == pytest.approx(n + n**2 * 4.0, rel=1e-8)
    g = 0.5
    for T in (1.0, 10.0, 200.0):
        exact = n + 2 * n**2 / T * (T / g - (1 - np.exp(-g * T)) / g**2)
        got = cr.count_variance_rate(thermal_model, window=T)
        assert got == pytest.approx(exact, rel=1e-8)
        assert n < got < asym
    with pytest.raises(ValueError):
        cr.count_variance_rate(thermal_model, window=0.0)


def test_csv_roundtrip(tmp_path, cavity_models):
    res = cr.correlation_time_quadrature(cavity_models[0.5], steps=40)
    text = res.to_csv(tmp_path / "g2.csv", metadata={"model": "cavity"})
    assert text.splitlines()[0].startswith("# tau_c = ")
    assert "tau,g2" in text
    back = cr.CorrelationResult.from_csv(tmp_path / "g2.csv")
    assert back.tau_c == res.tau_c and back.method == "quadrature"
    assert back.click_rate == res.click_rate
    np.testing.assert_array_equal(back.tau_grid, res.tau_grid)
    np.testing.assert_array_equal(back.g2_values, res.g2_values)
