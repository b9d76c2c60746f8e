import math
import os

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from pullback_lab.inclusion import (
    NotAbsorbedError,
    QuadratureError,
    SolverBlowUp,
    SolverConfig,
    design,
    energy_certificate,
    flattening_certificate,
    galerkin_energy_bound,
    galerkin_step,
    h_norm,
    inclusion_process,
    make_forcing,
    make_nonlinearity,
    mollified_h,
    solve_ensemble,
    solve_trajectory,
    time_nodes,
    weak_form_residual,
)
from pullback_lab.inclusion.problem import Forcing, bump_cdf
from pullback_lab.metric import SINE_MODE_WEIGHT, SampledSet
from pullback_lab.process import check_axioms

HEAVI = make_nonlinearity("heaviside")
ZERO_NL = make_nonlinearity("zero")
NO_F = make_forcing("zero")


def e1(n):
    v = np.zeros(n)
    v[0] = 1.0
    return v


# ---------------------------------------------------------------- mollifier


def test_mollified_heaviside_values():
    for n in (1, 4, 32):
        assert mollified_h(HEAVI, n, 0.0, 0.0, 1.0 / n) == 1.0
        assert mollified_h(HEAVI, n, 0.0, 0.0, -1.0 / n) == 0.0
        assert mollified_h(HEAVI, n, 0.0, 0.0, 0.0) == pytest.approx(0.5, abs=1e-12)


def test_kernel_shift_sweeps_the_jump_interval():
    vals = [float(mollified_h(HEAVI, 8, 0.0, 0.0, 0.0, th)) for th in np.linspace(0, 1, 11)]
    assert vals[0] == 0.0 and vals[-1] == 1.0
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_mollified_matches_direct_convolution():
    nl = make_nonlinearity("sine-heaviside", amp=0.5)
    n, th = 4, 0.3
    c = 0.5 - th

    def rho(y):
        return math.exp(-1 / (1 - 4 * y * y)) if abs(y) < 0.5 else 0.0

    Z = quad(rho, -0.5, 0.5)[0]
    for s in (-0.7, 0.2, 0.95, 1.0, 1.1, 3.0):
        # (rho_n * h)(s) with eta = (y + c)/n
        val = quad(lambda y: rho(y) * float(nl.h(0, 0, s - (y + c) / n)), -0.5, 0.5, points=[n * (s - 1) - c], limit=200)[0] / Z
        assert mollified_h(nl, n, 0.0, 0.0, s, th) == pytest.approx(val, abs=1e-7)


def test_bump_cdf_symmetry():
    y = np.linspace(-0.6, 0.6, 13)
    assert np.allclose(bump_cdf(y) + bump_cdf(-y), 1.0, atol=1e-12)


def test_mollified_growth_constants_hold():
    nl = make_nonlinearity("sine-heaviside", amp=0.5)
    s = np.linspace(-20, 20, 4001)
    for n in (1, 4, 16):
        c1, c2, d1, d2 = nl.mollified_constants(n)
        for th in (0.0, 0.5, 1.0):
            v = mollified_h(nl, n, 0.0, 0.0, s, th)
            assert np.all(np.abs(v) <= c1 + c2 * np.abs(s) + 1e-9)
            assert np.all(v * s >= d1 - d2 * s**2 - 1e-9)
        assert d2 < 1.0


def test_heaviside_mollified_constants():
    assert HEAVI.mollified_constants(8) == (1.0, 0.0, -1.0 / 8, 0.0)


@pytest.mark.parametrize("name", ["heaviside", "sine-heaviside", "smooth-sine", "zero"])
def test_shipped_nonlinearities_validate(name):
    rep = make_nonlinearity(name).validate(t_grid=[-1.0, 0.0, 2.0])
    assert rep.ok, rep


def test_validation_catches_bad_constants():
    bad = make_nonlinearity("heaviside")
    bad = type(bad)(bad.name, None, bad.jumps, 0.5, 0.0, 0.0, 0.0)
    assert bad.validate().j2_violations > 0


def test_validation_rejects_large_d2():
    nl = make_nonlinearity("smooth-sine")
    with pytest.raises(ValueError):
        type(nl)(nl.name, nl.smooth, (), 0, 1.0, 0, 1.0).validate()


def test_hull_at_jump():
    lo, hi = HEAVI.hull(0, 0, np.array([0.0, 1.0]))
    assert lo.tolist() == [0.0, 1.0] and hi.tolist() == [1.0, 1.0]


# ---------------------------------------------------------------- forcing


def test_dual_norm_sine():
    f = make_forcing("sine-steady", amp=3.0)
    assert f.dual_norm(0.0) == pytest.approx(3.0 * math.sqrt(math.pi / 2), rel=1e-12)


def test_dual_norm_quadrature_oracle():
    # ||f||_{V*}^2 = sum_k <f, z_k>^2 / (k^2 ||z_k||^2) for f = x(pi - x)
    f = Forcing("poly", lambda x, t: x * (math.pi - x), 0.0, 0.0)
    terms = []
    for k in range(1, 200):
        ip = quad(lambda x: x * (math.pi - x) * math.sin(k * x), 0, math.pi, limit=400)[0]
        terms.append(ip**2 / (k**2 * math.pi / 2))
    assert f.dual_norm(0.0, n_modes=64) == pytest.approx(math.sqrt(sum(terms)), rel=1e-6)


def test_periodic_forcing_sup_past():
    f = make_forcing("sine-periodic", amp=1.0, t_bar=0.0)
    ts = np.linspace(-20, 0, 2001)
    assert max(f.dual_norm(t) for t in ts) <= f.sup_past + 1e-12
    assert f.dual_norm(-1.5 * math.pi) == pytest.approx(f.sup_past, rel=1e-12)
    assert f.check_square_integrable(-3, 3)


def test_time_integral_of_dual_norm():
    f = make_forcing("sine-periodic", amp=1.0)
    exact = quad(lambda s: (math.pi / 2) * (1 + math.sin(s)) ** 2, 0.3, 2.9)[0]
    assert f.dual_norm_sq_integral(0.3, 2.9) == pytest.approx(exact, rel=1e-10)


# ---------------------------------------------------------------- stepping


def test_config_invariants():
    with pytest.raises(ValueError):
        SolverConfig(dt=0)
    with pytest.raises(ValueError):
        SolverConfig(modes=4, quad_points=8)
    with pytest.raises(ValueError):
        SolverConfig(selection_theta=1.5)
    assert SolverConfig(modes=5).quad_points == 40


def test_pure_linear_mode():
    cfg = SolverConfig(modes=4, dt=1e-3)
    a = galerkin_step(e1(4), 0.0, cfg, ZERO_NL, NO_F)
    assert a[0] == pytest.approx(math.exp(-1e-3), abs=1e-10)
    assert np.all(a[1:] == 0)


def test_steady_forcing_scalar_oracle():
    # a1' = -a1 + 1 with a1(0) = 0 gives a1(t) = 1 - e^{-t}
    cfg = SolverConfig(modes=4, dt=1e-2)
    f = make_forcing("sine-steady", amp=1.0)
    tr = solve_trajectory(np.zeros(4), 0.0, 12.0, cfg, ZERO_NL, f)
    assert tr.final[0] == pytest.approx(1 - math.exp(-12.0), abs=1e-10)
    assert np.abs(tr.final[1:]).max() <= 1e-12


def test_zero_data_stays_zero():
    tr = solve_trajectory(np.zeros(6), 0.0, 2.0, SolverConfig(modes=6), ZERO_NL, NO_F)
    assert not np.any(tr.coeffs)


def test_first_step_hand_oracle():
    # from u0 = 0 the mollified heaviside equals its value at 0 everywhere
    n, dt = 8, 1e-3
    for th in (0.0, 0.3, 0.5, 1.0):
        cfg = SolverConfig(modes=n, dt=dt, mollifier_index=8, selection_theta=th)
        a = galerkin_step(np.zeros(n), 0.0, cfg, HEAVI, NO_F)
        j0 = float(bump_cdf(th - 0.5))
        k = np.arange(1, n + 1)
        expected = -(1 - np.exp(-(k**2) * dt)) / k**2 * (2 / math.pi) * j0 * (1 - (-1.0) ** k) / k
        assert np.allclose(a, expected, atol=1e-14)


def test_selections_give_distinct_endpoints():
    ends = []
    for th in (0.0, 1.0):
        cfg = SolverConfig(modes=8, selection_theta=th)
        ends.append(solve_trajectory(np.zeros(8), 0.0, 1.0, cfg, HEAVI, NO_F).final)
    assert np.array_equal(ends[0], np.zeros(8))
    assert h_norm(ends[0] - ends[1])[0] > 0.1


def test_energy_decreases_for_sign_preserving_selection():
    cfg = SolverConfig(modes=8, selection_theta=0.0)
    tr = solve_trajectory(2 * e1(8), 0.0, 3.0, cfg, HEAVI, NO_F)
    assert np.all(np.diff(tr.norms) <= 0)


def test_discrete_energy_inequality():
    # d/dt |u|^2 <= -2|u|_V^2 - 2 int j_n'(u) u <= -2|u|^2 - 2 d1' pi
    cfg = SolverConfig(modes=8, selection_theta=0.5)
    tr = solve_trajectory(2 * e1(8) + 0.3 * np.eye(8)[2], 0.0, 3.0, cfg, HEAVI, NO_F)
    _, _, d1, _ = HEAVI.mollified_constants(cfg.mollifier_index)
    e = tr.norms**2
    rate = np.diff(e) / np.diff(tr.times)
    assert np.all(rate <= -2 * e[:-1] - 2 * d1 * math.pi + 5e-3)
    above = e[:-1] > math.pi / cfg.mollifier_index
    assert np.all(rate[above] < 0)


def test_matches_reference_ode_solver():
    # the smooth Galerkin system integrated independently with a tight RK45 tolerance
    nl = make_nonlinearity("smooth-sine", amp=0.5)
    f = make_forcing("sine-periodic", amp=1.0)
    n = 6
    x, w = np.polynomial.legendre.leggauss(96)
    x = 0.5 * math.pi * (x + 1)
    w = 0.5 * math.pi * w
    k = np.arange(1, n + 1)
    S = np.sin(np.outer(k, x))
    cfg = SolverConfig(modes=n, dt=1e-3, mollifier_index=1000)

    def rhs(t, a):
        u = a @ S
        g = (2 / math.pi) * S @ (w * (np.sin(x) * (1 + math.sin(t)) - 0.5 * np.sin(u)))
        return -(k**2) * a + g

    u0 = np.array([1.0, -0.5, 0.2, 0.0, 0.1, 0.0])
    ref = solve_ivp(rhs, (0, 1), u0, rtol=1e-11, atol=1e-12).y[:, -1]
    errs = []
    for dt in (2e-3, 1e-3):
        c = SolverConfig(modes=n, dt=dt, mollifier_index=1000)
        errs.append(h_norm(solve_trajectory(u0, 0, 1, c, nl, f).final - ref)[0])
    assert errs[1] < 2e-3
    assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.3)
    assert cfg.modes == n


def test_mollifier_convergence_first_order():
    nl = make_nonlinearity("smooth-sine", amp=0.5)
    f = make_forcing("sine-steady", amp=2.0)
    u0 = np.r_[1.0, -0.5, 0.3, np.zeros(5)]
    ends = [
        solve_trajectory(u0, 0, 2, SolverConfig(modes=8, mollifier_index=n, selection_theta=0.0), nl, f).final
        for n in (8, 16, 32, 64)
    ]
    d = [h_norm(ends[i] - ends[i + 1])[0] for i in range(3)]
    assert d[0] > d[1] > d[2]
    for a, b in zip(d, d[1:]):
        assert a / b == pytest.approx(2.0, abs=0.2)


def test_residual_first_order():
    u0 = np.random.default_rng(0).normal(size=8)
    out = []
    for dt in (2e-3, 1e-3):
        cfg = SolverConfig(modes=8, dt=dt)
        tr = solve_trajectory(u0, 0.0, 1.0, cfg, HEAVI, NO_F)
        out.append(np.abs(weak_form_residual(tr.times, tr.coeffs, cfg, HEAVI, NO_F)).max())
    assert out[0] / out[1] == pytest.approx(2.0, abs=0.3)


def test_time_nodes_are_absolute_multiples():
    nodes = time_nodes(-0.0025, 0.0031, 1e-3)
    assert nodes[0] == -0.0025 and nodes[-1] == 0.0031
    assert np.allclose(nodes[1:-1], [-0.002, -0.001, 0.0, 0.001, 0.002, 0.003])
    with pytest.raises(ValueError):
        time_nodes(1.0, 1.0, 1e-3)


def test_restart_concatenation_is_seamless():
    cfg = SolverConfig(modes=6, dt=1e-3)
    u0 = np.r_[1.0, 0.5, -0.2, 0, 0, 0]
    direct = solve_trajectory(u0, 0.0, 2.5, cfg, HEAVI, NO_F).final
    mid = solve_trajectory(u0, 0.0, 1.2, cfg, HEAVI, NO_F).final
    glued = solve_trajectory(mid, 1.2, 2.5, cfg, HEAVI, NO_F).final
    assert np.allclose(direct, glued, atol=1e-13)


def test_blow_up_guard():
    cfg = SolverConfig(modes=4, norm_cap=0.5)
    with pytest.raises(SolverBlowUp):
        solve_trajectory(e1(4), 0.0, 1.0, cfg, ZERO_NL, make_forcing("sine-steady", amp=10.0))


def test_quadrature_failure():
    bad = Forcing("nan", lambda x, t: np.full_like(x, np.nan), 0.0, 0.0)
    with pytest.raises(QuadratureError):
        galerkin_step(np.zeros(4), 0.0, SolverConfig(modes=4), ZERO_NL, bad)


def test_trajectory_cache(tmp_path):
    cfg = SolverConfig(modes=4, dt=1e-2)
    u0 = np.r_[0.3, 0.1, 0, 0]
    a = solve_trajectory(u0, 0.0, 1.0, cfg, HEAVI, NO_F, cache_dir=str(tmp_path))
    files = os.listdir(tmp_path)
    assert len(files) == 1 and files[0].endswith(".csv")
    b = solve_trajectory(u0, 0.0, 1.0, cfg, HEAVI, NO_F, cache_dir=str(tmp_path))
    assert np.array_equal(a.coeffs, b.coeffs) and np.array_equal(a.times, b.times)
    with open(tmp_path / files[0]) as fh:
        assert fh.readline().strip() == "t,a1,a2,a3,a4"


def test_ensemble_matches_single_runs():
    cfg = SolverConfig(modes=6, dt=1e-3)
    U0 = np.random.default_rng(2).normal(size=(3, 6))
    ns, ths = [4, 8, 16], [0.1, 0.5, 0.9]
    ens = solve_ensemble(U0, 0.0, 1.0, cfg, HEAVI, NO_F, ns, ths)
    for i in range(3):
        c = SolverConfig(modes=6, dt=1e-3, mollifier_index=ns[i], selection_theta=ths[i])
        assert np.allclose(ens[i], solve_trajectory(U0[i], 0.0, 1.0, c, HEAVI, NO_F).final, atol=1e-13)


# ---------------------------------------------------------------- certificates


def test_heaviside_certificate_constants():
    cert = energy_certificate(HEAVI, NO_F)
    assert cert.eps == 0.5 and cert.C1 == 1.0 and cert.C2 == 1.0 and cert.C3 == 0.0


def test_certificate_general_constants():
    # hand-derived: eps = 1/2 - d2/2, C1 = 1 - d2, C2 = 1/(1 - d2), C3 = -2 d1 pi
    nl = make_nonlinearity("smooth-sine", amp=0.25)
    nl = type(nl)(nl.name, nl.smooth, (), 0.0, 0.25, -0.5, 0.25)
    cert = energy_certificate(nl, NO_F)
    assert cert.C1 == pytest.approx(0.75)
    assert cert.C2 == pytest.approx(4 / 3)
    assert cert.C3 == pytest.approx(math.pi)


def test_certificate_degenerate_limit():
    nl = make_nonlinearity("smooth-sine", amp=0.5)
    f = make_forcing("sine-steady", amp=1.0)
    Rs = []
    for d2 in (0.9, 0.99, 0.999):
        Rs.append(energy_certificate(type(nl)(nl.name, nl.smooth, (), 0, d2, 0, d2), f).R(0.0))
    assert Rs[0] < Rs[1] < Rs[2]
    with pytest.raises(ValueError):
        energy_certificate(type(nl)(nl.name, nl.smooth, (), 0, 1.0, 0, 1.0), f)


def test_forcing_envelope():
    f = make_forcing("sine-periodic", amp=1.0, t_bar=2.0)
    cert = energy_certificate(HEAVI, f)
    assert cert.F(-5.0) == cert.F(1.9) == pytest.approx(2 * math.pi)
    vals = [cert.F(t) for t in np.linspace(-1, 6, 15)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(math.isfinite(v) for v in vals)
    Rs = [cert.R(t) for t in np.linspace(-1, 6, 15)]
    assert all(b >= a for a, b in zip(Rs, Rs[1:]))


def test_tau_bar():
    cert = energy_certificate(HEAVI, make_forcing("zero", t_bar=10.0))
    assert cert.tau_bar(3.0, 0.5) == 2.0
    assert cert.tau_bar(3.0, math.e**2) == pytest.approx(-1.0)
    assert make_forcing("zero", t_bar=0.0) and energy_certificate(HEAVI, NO_F).tau_bar(5.0, 1.0) == 0.0


def test_galerkin_bound_window():
    with pytest.raises(ValueError):
        galerkin_energy_bound(1.0, 0.0, 1.5, 1.0, 0.0, NO_F)


def test_flattening_linear_heat_far_below_bound():
    cfg = SolverConfig(modes=12, dt=1e-3)
    u0 = np.ones(12)
    cert = energy_certificate(ZERO_NL, NO_F)
    t0, t = -4.0, 1.0
    end = solve_trajectory(u0, t0, t, cfg, ZERO_NL, NO_F).final
    for m in (2, 4):
        exact = (math.pi / 2) * sum(np.exp(-2 * (k**2) * (t - t0)) for k in range(m + 1, 13))
        rep = flattening_certificate(end[None, :], m, t, 0.5, 1.0, cert, t0, h_norm(u0)[0])
        assert rep.measured == pytest.approx(exact, rel=1e-6)
        assert rep.measured <= 1e-10 * rep.bound


def test_flattening_bound_monotone_in_m():
    f = make_forcing("sine-periodic", amp=1.0)
    cert = energy_certificate(HEAVI, f, n_moll=4)
    end = np.zeros((1, 16))
    bounds = [flattening_certificate(end, m, 3.0, 0.5, 1.0, cert, -5.0, 1.0).bound for m in range(1, 15)]
    assert all(b <= a for a, b in zip(bounds, bounds[1:]))


def test_flattening_requires_absorption():
    cert = energy_certificate(HEAVI, NO_F)
    with pytest.raises(NotAbsorbedError):
        flattening_certificate(np.zeros((1, 8)), 2, 1.0, 0.5, 1.0, cert, t0=0.0, E_norm=5.0)


def test_flattening_recipe():
    cert = energy_certificate(HEAVI, make_forcing("sine-steady", amp=1.0))
    rep = flattening_certificate(np.zeros((1, 8)), 2, 3.0, 0.5, 1.0, cert, -10.0, 1.0)
    R2 = cert.R(3.0) ** 2
    m1, m2, m3 = rep.recipe_m
    assert math.exp(-((m1 + 1) ** 2)) * R2 <= 0.25 < math.exp(-(m1**2)) * R2
    assert 4 * math.pi / (m2 + 1) ** 2 <= 0.25 < 4 * math.pi / m2**2


# ---------------------------------------------------------------- multivalued process


def test_design_prefix_property():
    assert design(7, 3) == design(7, 10)[:3]
    assert design(7, 3) != design(8, 3)


def test_budget_one_is_singleton():
    p = inclusion_process(modes=6)
    img = p.evolve(1.0, 0.0, p.point(np.r_[1.0, np.zeros(5)]), 1, 0)
    assert len(img) == 1 and img.metric_weight == SINE_MODE_WEIGHT


def test_process_images_are_multivalued_at_jump():
    p = inclusion_process(modes=6, thetas=[0.0, 1.0], mollifier_indices=[8])
    img = p.evolve(1.0, 0.0, p.point(np.zeros(6)), 6, 0)
    assert img.unique().points.shape[0] == 2


def test_inclusion_process_axioms():
    p = inclusion_process(modes=6, dt=1e-3)
    rng = np.random.default_rng(1)
    probes = [(1.0, 0.5, 0.0, rng.normal(size=6)), (0.0, 0.0, 0.0, rng.normal(size=6))]
    rep = check_axioms(p, probes, tol=1e-3, branch_budget=2, oracle_budget=4)
    assert rep.is_process
    assert rep.probes[1].identity_residual == 0.0


def test_images_inside_absorbing_ball():
    f = make_forcing("sine-periodic", amp=1.0, t_bar=0.0)
    p = inclusion_process(modes=8, forcing="sine-periodic", forcing_params={"amp": 1.0, "t_bar": 0.0})
    cert = energy_certificate(p.nl, f, n_moll=min(p.mollifier_indices))
    u0 = 4.0 * e1(8)
    E = h_norm(u0)[0]
    t = 2.0
    tau = math.floor(cert.tau_bar(t, E))
    img = p.evolve(t, tau, SampledSet(u0[None, :], metric_weight=SINE_MODE_WEIGHT), 8, 3)
    assert np.all(h_norm(img.points) <= cert.R(t))
