import math

import numpy as np
import pytest

from conftest import REFERENCE, TENSION
from rtmodes.discretize import assemble_all, build_mesh, evaluate_profile
from rtmodes.growth import dispersion_curve
from rtmodes.modes import (
    GridSpec,
    ModeError,
    build_mode,
    check_energy_identity,
    discrete_divergence,
    eta_l2,
    interface_jump,
    modal_integrals,
    mode_norm,
    momentum_residual,
    negate_frequency,
    pressure_formula,
    recover_horizontal,
    renormalize,
    sample_fields,
    sample_l2,
    scale_mode,
    tangential_stress,
    top_pressure,
    torus_area,
    with_frequency,
)
from rtmodes.params import Frequency, jump_density


def make_mode(cfg, n1, n2, n=32, **kw):
    mesh = build_mesh(cfg.b, n, n)
    point = dispersion_curve(mesh, cfg, [Frequency(n1, n2, cfg.L1, cfg.L2)])[0]
    return build_mode(point, mesh, cfg, **kw)


@pytest.fixture(scope="module")
def mode12():
    return make_mode(REFERENCE, 1, 2)


@pytest.fixture(scope="module")
def mode_tension():
    return make_mode(TENSION, 2, -1)


X3 = np.linspace(-1.0, 1.0, 97)


def test_mode_invariants(mode12, mode_tension):
    for mode in (mode12, mode_tension):
        m, k = mode.mesh, mode.xi_abs
        np.testing.assert_allclose(k * mode.phi_mag(X3) + evaluate_profile(mode.psi, m, X3, 1), 0, atol=1e-9)
        assert mode.eta_plus == evaluate_profile(mode.psi, m, 1.0) / mode.lam
        assert mode.eta_minus == evaluate_profile(mode.psi, m, 0.0) / mode.lam
        assert evaluate_profile(mode.psi, m, -1.0) == 0 and evaluate_profile(mode.psi, m, -1.0, 1) == 0
        assert abs(mode.energy_residual) <= 1e-8
        forms = assemble_all(m, mode.cfg, k)
        assert forms.J.value(mode.psi) == pytest.approx(1.0, abs=1e-10)
        lam = mode.lam
        e = lam**2 * forms.J.value(mode.psi) + lam * forms.E1.value(mode.psi) + forms.E0.value(mode.psi)
        assert abs(e) <= 1e-8


def test_recover_horizontal_examples(mode12):
    m, psi = mode12.mesh, mode12.psi
    k = math.sqrt(5.0)
    dpsi = evaluate_profile(psi, m, X3, 1)
    phi, theta = recover_horizontal(psi, m, Frequency(1, 0, 1 / k, 1.0))
    np.testing.assert_allclose(theta(X3), 0.0, atol=0)
    np.testing.assert_allclose(phi(X3), -dpsi / k, rtol=1e-14, atol=1e-15)
    phi, theta = recover_horizontal(psi, m, Frequency(0, 1, 1.0, 1 / k))
    np.testing.assert_allclose(phi(X3), 0.0, atol=0)
    np.testing.assert_allclose(theta(X3), -dpsi / k, rtol=1e-14, atol=1e-15)
    for xi in (Frequency(1, 2, 1.0, 1.0), Frequency(-2, 1, 1.0, 1.0), Frequency(3, -1, 0.7, 1.3)):
        phi, theta = recover_horizontal(psi, m, xi)
        r = xi.xi1 * phi(X3) + xi.xi2 * theta(X3) + dpsi
        np.testing.assert_allclose(r, 0.0, atol=1e-12 * np.abs(dpsi).max())


def test_pressure_anchor_and_jump(mode_tension):
    mode, cfg = mode_tension, TENSION
    m, k, lam = mode.mesh, mode.xi_abs, mode.lam
    psi1, dpsi1 = evaluate_profile(mode.psi, m, 1.0), evaluate_profile(mode.psi, m, 1.0, 1)
    assert mode.pi(1.0) == pytest.approx(top_pressure(cfg, lam, k, psi1, dpsi1), rel=1e-14)
    assert top_pressure(cfg, lam, k, psi1, dpsi1) == pytest.approx(
        (cfg.g * cfg.rho_plus + cfg.sigma_plus * k * k) * psi1 / lam + 2 * cfg.mu_plus * dpsi1
    )
    psi0, dpsi0 = evaluate_profile(mode.psi, m, 0.0), evaluate_profile(mode.psi, m, 0.0, 1)
    expected = (cfg.g * jump_density(cfg) * psi0 - cfg.sigma_minus * k * k * psi0) / lam + 2 * (
        cfg.mu_plus - cfg.mu_minus
    ) * dpsi0
    assert interface_jump(cfg, lam, k, psi0, dpsi0) == pytest.approx(expected, rel=1e-14)
    jump = mode.pi(0.0, side="right") - mode.pi(0.0, side="left")
    assert jump == pytest.approx(expected, rel=1e-12)


def test_pressure_quadrature_samples_avoid_nodes(mode12):
    x, vals = mode12.pi.quadrature_samples()
    assert not np.isin(x, mode12.mesh.nodes).any()
    np.testing.assert_allclose(vals, mode12.pi(x), rtol=1e-13, atol=1e-14)


def test_strong_form_residuals_converge():
    # the weak form imposes these only at discretization order
    mom, alt, stress = [], [], []
    x = np.linspace(-0.97, 0.97, 60)
    x = x[np.abs(x) > 0.05]
    for n in (16, 32, 64):
        mode = make_mode(REFERENCE, 1, 0, n)
        mom.append(momentum_residual(mode))
        alt.append(np.max(np.abs(pressure_formula(mode, x) - mode.pi(x))))
        t = tangential_stress(mode)
        stress.append(max(t["top"], t["jump"]))
    for errs, order in ((mom, 1.0), (alt, 1.0), (stress, 2.0)):
        observed = np.log2(errs[1] / errs[2])
        assert observed >= 0.9 * order


def stress_scale(mode):
    x = np.linspace(-mode.cfg.b, 1.0, 401)
    mu = max(mode.cfg.mu_plus, mode.cfg.mu_minus)
    psi = np.abs(evaluate_profile(mode.psi, mode.mesh, x)).max()
    return mu * mode.lam * (mode.xi_abs * psi + np.abs(mode.phi_mag(x, 1)).max())


@pytest.mark.parametrize("cfg, n1, n2, n", [(REFERENCE, 1, 0, 128), (REFERENCE, 1, 2, 256), (TENSION, 2, 2, 256)])
def test_tangential_stress_bounded(cfg, n1, n2, n):
    mode = make_mode(cfg, n1, n2, n)
    t = tangential_stress(mode)
    assert max(t["top"], t["jump"]) <= 1e-6 * stress_scale(mode)


def test_negated_frequency_gives_same_real_fields(mode12):
    grid = GridSpec(6, 5, 9)
    a = sample_fields(mode12, 0.3, grid)
    b = sample_fields(negate_frequency(mode12), 0.3, grid)
    c = sample_fields(make_mode(REFERENCE, -1, -2), 0.3, grid)
    np.testing.assert_allclose(b.u, a.u, atol=1e-15)
    np.testing.assert_allclose(c.u, a.u, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(b.p_tilde, a.p_tilde, atol=0)
    np.testing.assert_allclose(b.eta, a.eta, atol=1e-15)


def point_velocity(mode, x1, x2, x3):
    ph = mode.xi.xi1 * x1 + mode.xi.xi2 * x2
    return np.array(
        [mode.phi(x3) * np.sin(ph), mode.theta(x3) * np.sin(ph), evaluate_profile(mode.psi, mode.mesh, x3) * np.cos(ph)]
    )


def test_rotational_covariance(mode12, rng):
    # a quarter turn maps the lattice to itself when L1 = L2
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    rotated = make_mode(REFERENCE, -2, 1)
    assert rotated.lam == pytest.approx(mode12.lam, rel=1e-12)
    pts = rng.uniform(0, 2 * np.pi, (2, 50))
    x3 = rng.uniform(-1, 1, 50)
    u = point_velocity(mode12, pts[0], pts[1], x3)
    rp = R @ pts
    ur = point_velocity(rotated, rp[0], rp[1], x3)
    np.testing.assert_allclose(ur[:2], R @ u[:2], atol=1e-10)
    np.testing.assert_allclose(ur[2], u[2], atol=1e-10)
    # the same profiles attached to the rotated frequency
    same = with_frequency(mode12, Frequency(-2, 1, 1.0, 1.0))
    np.testing.assert_allclose(point_velocity(same, rp[0], rp[1], x3)[:2], R @ u[:2], atol=1e-14)
    with pytest.raises(ValueError):
        with_frequency(mode12, Frequency(1, 0, 1.0, 1.0))


def test_sampling_growth_is_exact(mode12):
    grid = GridSpec(8, 8, 17)
    s0 = sample_fields(mode12, 0.0, grid)
    for t in (0.5, 1.0, 2.0):
        st = sample_fields(mode12, t, grid)
        f = math.exp(mode12.lam * t)
        assert eta_l2(st, REFERENCE) / eta_l2(s0, REFERENCE) == pytest.approx(f, rel=1e-12)
        np.testing.assert_allclose(st.u, f * s0.u, rtol=1e-14, atol=0)
        np.testing.assert_allclose(st.p_tilde, f * s0.p_tilde, rtol=1e-14, atol=0)
    with pytest.raises(ValueError):
        sample_fields(mode12, -1.0, grid)


def test_static_sample_matches_profiles(mode12):
    grid = GridSpec(4, 4, 11)
    s = sample_fields(mode12, 0.0, grid)
    x1, x2, x3 = s.grid
    assert x3[0] == -1.0 and x3[-1] == 1.0
    np.testing.assert_array_equal(s.u[:, :, :, 0], 0.0)
    ph = mode12.xi.xi1 * x1[2] + mode12.xi.xi2 * x2[3]
    np.testing.assert_allclose(s.u[2, 2, 3], evaluate_profile(mode12.psi, mode12.mesh, x3) * np.cos(ph), atol=1e-15)
    np.testing.assert_allclose(s.eta[0, 2, 3], mode12.eta_plus.real * np.cos(ph), atol=1e-15)
    with pytest.raises(ValueError):
        GridSpec(1, 4, 4)


def test_divergence_vanishes_at_discretization_order(mode12):
    errs = []
    for n3 in (41, 81, 161):
        s = sample_fields(mode12, 0.0, GridSpec(8, 8, n3))
        d = discrete_divergence(s)
        # x3 = 0 is a kink of u3 only through psi'' (psi' is continuous); keep the full grid
        errs.append(np.abs(d).max())
    assert errs[2] < errs[1] < errs[0]
    assert np.log2(errs[1] / errs[2]) >= 1.5


def test_modal_integrals_reduce_to_forms(mode12, mode_tension):
    for mode in (mode12, mode_tension):
        forms = assemble_all(mode.mesh, mode.cfg, mode.xi_abs)
        I = modal_integrals(mode)
        c = torus_area(mode.cfg) / mode.xi_abs**2
        assert I.kinetic == pytest.approx(c * forms.J.value(mode.psi), rel=1e-12)
        assert I.surface == pytest.approx(c * forms.E0.value(mode.psi), rel=1e-12)
        assert I.dissipation == pytest.approx(c * forms.E1.value(mode.psi), rel=1e-10)
        # d/dt of the identity: lambda (lambda^2 kin + surf) + lambda^2 diss = lambda c E(lambda) + lambda^3 c J
        lam = mode.lam
        lhs = lam * (lam**2 * I.kinetic + I.surface) + lam**2 * I.dissipation
        assert lhs == pytest.approx(lam * c * mode.energy_residual * forms.J.value(mode.psi), abs=1e-9)


def test_energy_identity(mode12, mode_tension):
    for mode in (mode12, mode_tension):
        for t0, t1 in ((0.0, 0.5), (1.0, 3.0)):
            assert check_energy_identity(mode, t0, t1) <= 1e-7
    assert check_energy_identity(scale_mode(mode12, 0.0), 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        check_energy_identity(mode12, 1.0, 1.0)


def test_normalizations(mode12):
    unit = renormalize(mode12, "unit_norm")
    assert mode_norm(unit) == pytest.approx(1.0, rel=1e-12)
    back = renormalize(unit, "J")
    np.testing.assert_allclose(back.psi.coeffs, mode12.psi.coeffs, rtol=1e-12, atol=1e-14)
    direct = make_mode(REFERENCE, 1, 2, normalization="unit_norm")
    assert mode_norm(direct) == pytest.approx(1.0, rel=1e-12)
    # the period-cell norm of a sampled field agrees with the quadrature norm
    s = sample_fields(unit, 0.0, GridSpec(16, 16, 2001))
    cell = torus_area(REFERENCE) / 256 * (2.0 / 2000)
    u_sq = sample_l2(s.u[:, :, :, 1:-1], cell) ** 2
    assert u_sq + eta_l2(s, REFERENCE) ** 2 == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        renormalize(mode12, "bogus")


def test_stable_point_has_no_mode():
    mesh = build_mesh(1.0, 8, 8)
    cfg = REFERENCE.replace(rho_plus=0.5)
    point = dispersion_curve(mesh, cfg, [Frequency(1, 0, 1.0, 1.0)])[0]
    with pytest.raises(ModeError):
        build_mode(point, mesh, cfg)
