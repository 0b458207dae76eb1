import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from lowmach.besov import INF, Trajectory
from lowmach.errors import BlowUpError, ConfigError, DomainError, LatticeError, ProjectionError
from lowmach.solvers import (
    BaroState,
    IncState,
    NSFState,
    PhysicalParams,
    StepperConfig,
    ThetaState,
    effective_velocity,
    integrate_baro,
    integrate_incompressible,
    integrate_nsf,
    integrate_theta_limit,
    interpolate_velocity,
    leray_advection,
    linear_propagator_baro,
    linear_propagator_nsf,
    pressure_k,
    rescale_state,
    solve_heat,
    step_baro,
    step_incompressible,
    step_nsf,
    unscale_state,
    verify_heat_estimate,
    J,
)
from lowmach.spectral import (
    Grid,
    SpectralField,
    VectorField,
    from_physical,
    gradient,
    inv_laplacian,
    project_P,
    project_Q,
    vector_from_physical,
)
from lowmach.verification import random_field, random_vector


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def mode_generator(xi, p, nsf=False):
    """Linear generator in (a, u[, theta]) coordinates built directly from the equations."""
    xi = np.asarray(xi, float)
    d = len(xi)
    n = d + 2 if nsf else d + 1
    M = np.zeros((n, n), complex)
    M[0, 1:1 + d] = -1j * xi / p.eps
    M[1:1 + d, 1:1 + d] = -p.mu * xi @ xi * np.eye(d) - (p.lam + p.mu) * np.outer(xi, xi)
    M[1:1 + d, 0] = -1j * xi / p.eps
    if nsf:
        M[1:1 + d, d + 1] = -1j * xi / p.eps
        M[d + 1, 1:1 + d] = -1j * xi / p.eps
        M[d + 1, d + 1] = -p.kappa * xi @ xi
    return M


def ode_oracle(M, U0, T):
    f = lambda t, y: M @ y
    sol = solve_ivp(f, (0, T), U0.astype(complex), method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]


def small(f, amp):
    return f * (amp / float(np.max(np.abs(f.physical()))))


def test_params_validation():
    with pytest.raises(ConfigError, match="params.eps"):
        PhysicalParams(eps=0.0)
    with pytest.raises(ConfigError, match="params.lam"):
        PhysicalParams(mu=1.0, lam=-3.0)
    p = PhysicalParams(0.1, 0.4, 0.2)
    assert p.nu == pytest.approx(1.0) and p.eps_tilde == pytest.approx(0.1)
    with pytest.raises(ConfigError, match="stepper.dt"):
        StepperConfig(dt=0.0)


def test_pressure_k():
    z = np.linspace(-0.4, 0.4, 9)
    assert np.allclose(pressure_k(1.0)(z), J(z), atol=1e-15)
    g = 1.4
    direct = 1 - (1 + z) ** (g - 1) / (1 + z)
    assert np.allclose(pressure_k(g)(z), direct, atol=1e-14)


def test_baro_propagator_examples():
    p = PhysicalParams(1.0, 0.5, 0.0)
    assert np.array_equal(linear_propagator_baro((0.0, 0.0), p, 0.3), np.eye(3))
    xi = np.array([0.6, 0.8])
    E = linear_propagator_baro(xi, p, 0.1)
    perp = np.array([0, -0.8, 0.6])
    assert np.allclose(E @ perp, math.exp(-p.mu * 0.1) * perp, atol=1e-15)
    U0 = np.array([0.3, 0.6 * 0.7, 0.8 * 0.7], complex)
    assert np.max(np.abs(E @ U0 - ode_oracle(mode_generator(xi, p), U0, 0.1))) < 1e-10


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_baro_propagator_vs_expm(eps):
    p = PhysicalParams(eps, 0.3, 0.1)
    for xi in ([1.0, 0.0, 0.0], [0.3, -2.0, 1.5], [1e-4, 0.0, 0.0]):
        E = linear_propagator_baro(xi, p, 0.37)
        ref = expm(mode_generator(xi, p) * 0.37)
        assert np.max(np.abs(E - ref)) < 1e-10


def test_nsf_propagator_vs_ode():
    p = PhysicalParams(0.5, 0.4, 0.1, 0.3)
    xi = np.array([1.0, -2.0, 0.5])
    U0 = np.array([0.2, 0.1, -0.3, 0.4, 0.25], complex)
    E = linear_propagator_nsf(xi, p, 0.2)
    assert np.max(np.abs(E @ U0 - ode_oracle(mode_generator(xi, p, True), U0, 0.2))) < 1e-10
    assert np.array_equal(linear_propagator_nsf((0, 0, 0), p, 0.2), np.eye(5))


def test_semigroup():
    p = PhysicalParams(0.2, 0.5, 0.0)
    xi = [1.3, 0.4]
    A = linear_propagator_baro(xi, p, 0.3)
    assert np.max(np.abs(A @ A - linear_propagator_baro(xi, p, 0.6))) < 1e-14


def test_zero_state_stays_zero():
    g = Grid(2, 16)
    p = PhysicalParams(0.1, 0.5, 0.0, 0.2)
    cfg = StepperConfig(dt=0.01)
    s = step_baro(BaroState.zeros(g, p), cfg)
    assert not np.any(s.pack())
    s = step_nsf(NSFState.zeros(g, p), cfg)
    assert not np.any(s.pack())
    v = step_incompressible(IncState(0.0, VectorField.zeros(g)), 0.1, cfg)
    assert not np.any(v.v.coeffs)


def test_divfree_heat_decay(rng):
    g = Grid(2, 16)
    p = PhysicalParams(0.1, 0.5, 0.0)
    u = project_P(random_vector(g, rng, 5))
    traj = integrate_baro(BaroState(0.0, SpectralField.zeros(g), u, p), 0.5, StepperConfig(dt=0.05, nonlinear=False))
    expect = np.exp(-p.mu * g.xi_norm2 * 0.5) * u.coeffs
    assert rel(traj.snapshots[-1].u.coeffs, expect) < 1e-10
    assert abs(traj.times[-1] - 0.5) < 1e-15 and len(traj) == 11


def test_single_mode_acoustics():
    g = Grid(2, 16)
    p = PhysicalParams(0.1, 0.5, 0.0)
    x1, x2 = g.coordinates
    a0 = from_physical(0.2 * np.cos(x1 + 2 * x2), g)
    u0 = vector_from_physical([0.1 * np.sin(x1 + 2 * x2), 0.2 * np.sin(x1 + 2 * x2)], g)
    traj = integrate_baro(BaroState(0.0, a0, u0, p), 1.0, StepperConfig(dt=0.1, nonlinear=False))
    idx = (1, 2)
    xi = np.array([1.0, 2.0])
    M = mode_generator(xi, p)
    U0 = np.array([a0.coeffs[idx], *u0.coeffs[:, idx[0], idx[1]]])
    for t, s in zip(traj.times, traj.snapshots):
        ref = expm(M * t) @ U0
        got = np.array([s.a.coeffs[idx], *s.u.coeffs[:, idx[0], idx[1]]])
        assert np.max(np.abs(got - ref)) < 1e-8


def test_nsf_reduces_to_baro(rng):
    g = Grid(2, 16)
    p = PhysicalParams(0.3, 0.5, 0.0, 0.2)
    a = small(random_field(g, rng, 4, mean=False), 0.3)
    u = small(random_vector(g, rng, 4), 0.3)
    cfg = StepperConfig(dt=0.01, theta_equation=False, heat_conduction=False, dissipation_source=False)
    b = integrate_baro(BaroState(0.0, a, u, p), 0.1, cfg).snapshots[-1]
    n = integrate_nsf(NSFState(0.0, a, u, SpectralField.zeros(g), p), 0.1, cfg).snapshots[-1]
    assert rel(n.a.coeffs, b.a.coeffs) < 1e-12 and rel(n.u.coeffs, b.u.coeffs) < 1e-12
    assert not np.any(n.theta.coeffs)


def test_blowup_detection():
    g = Grid(2, 16)
    p = PhysicalParams(1.0, 0.5, 0.0)
    x1, _ = g.coordinates
    a = from_physical(-1.5 * np.cos(x1), g)
    with pytest.raises(BlowUpError) as err:
        step_baro(BaroState(0.0, a, VectorField.zeros(g), p), StepperConfig(dt=0.01))
    assert err.value.max_eps_a > 1
    u = vector_from_physical([100 * np.cos(x1), 0.0], g)
    with pytest.raises(BlowUpError, match="Courant"):
        step_baro(BaroState(0.0, SpectralField.zeros(g), u, p), StepperConfig(dt=0.1))


def convolution_advection(v):
    """``P(v . grad v)`` by explicit summation over mode pairs (full complex spectrum)."""
    g = v.grid
    n = g.n
    V = np.fft.fftn(v.physical(), axes=(1, 2)) / n**2
    ks = np.fft.fftfreq(n, 1.0 / n).astype(int)
    active = [(i, j) for i in range(n) for j in range(n) if np.any(np.abs(V[:, i, j]) > 1e-14)]
    out = np.zeros((2, n, n), complex)
    for (i1, j1) in active:
        for (i2, j2) in active:
            k2 = np.array([ks[i2], ks[j2]])
            k = (ks[i1] + ks[i2], ks[j1] + ks[j2])
            if max(abs(k[0]), abs(k[1])) >= n // 2:
                continue
            # v(k1) . (i k2) v(k2)
            out[:, k[0] % n, k[1] % n] += (V[:, i1, j1] @ (1j * k2)) * V[:, i2, j2]
    phys = np.real(np.fft.ifftn(out * n**2, axes=(1, 2)))
    return project_P(vector_from_physical(phys, g))


def test_leray_advection_single_mode(rng):
    # v = (cos x2, 0): v . grad v = 0 exactly
    g = Grid(2, 16)
    _, x2 = g.coordinates
    v = vector_from_physical([np.cos(x2), 0.0], g)
    assert np.max(np.abs(leray_advection(v).coeffs)) < 1e-15
    v = project_P(random_vector(g, rng, 3))
    ref = convolution_advection(v)
    assert np.linalg.norm(ref.coeffs) > 1e-3
    assert rel(leray_advection(v).coeffs, ref.coeffs) < 1e-12


def test_projection_error(rng):
    g = Grid(2, 16)
    with pytest.raises(ProjectionError):
        step_incompressible(IncState(0.0, gradient(random_field(g, rng))), 0.1, StepperConfig())


def test_theta_limit_examples(rng):
    g = Grid(2, 16)
    th = random_field(g, rng, 5)
    zero_u = Trajectory([0.0, 1.0], (VectorField.zeros(g),) * 2)
    out = integrate_theta_limit(ThetaState(0.0, th), zero_u, 0.4, 0.5, StepperConfig(dt=0.05))
    assert rel(out.snapshots[-1].Theta.coeffs, np.exp(-0.2 * g.xi_norm2 * 0.5) * th.coeffs) < 1e-13
    c = from_physical(np.full(g.shape, 2.0), g)
    u = Trajectory([0.0, 1.0], (random_vector(g, rng, 3),) * 2)
    out = integrate_theta_limit(ThetaState(0.0, c), u, 0.4, 0.5, StepperConfig(dt=0.05))
    assert rel(out.snapshots[-1].Theta.coeffs, c.coeffs) < 1e-13
    with pytest.raises(DomainError):
        interpolate_velocity(u, 1.5)


def test_theta_characteristics():
    # shear flow u = (U sin x2, 0) advecting cos(x1): Theta = cos(x1 - U sin(x2) t)
    g = Grid(2, 64)
    x1, x2 = g.coordinates
    U = 0.5
    u = vector_from_physical([U * np.sin(x2), 0.0], g)
    th0 = from_physical(np.cos(x1), g)
    traj = Trajectory([0.0, 2.0], (u, u))
    out = integrate_theta_limit(ThetaState(0.0, th0), traj, 0.0, 1.0, StepperConfig(dt=2.5e-3))
    exact = np.cos(x1 - U * np.sin(x2) * 1.0)
    assert np.max(np.abs(out.snapshots[-1].Theta.physical() - exact)) < 1e-6


def test_effective_velocity_examples(rng):
    g = Grid(2, 16)
    p = PhysicalParams()
    u = random_vector(g, rng)
    w, _ = effective_velocity(BaroState(0.0, SpectralField.zeros(g), u, p))
    assert rel(w.coeffs, project_Q(u).coeffs) < 1e-15
    x1, x2 = g.coordinates
    a = from_physical(np.cos(2 * x1 + x2), g)
    w, _ = effective_velocity(BaroState(0.0, a, VectorField.zeros(g), p))
    xi = np.array([2.0, 1.0])
    expect = 1j * xi / 5.0 * a.coeffs[2, 1]
    assert np.allclose(w.coeffs[:, 2, 1], expect, atol=1e-15)
    a = random_field(g, rng, mean=False)
    qu = VectorField(g, -gradient(-inv_laplacian(a)).coeffs)  # -(-Lap)^{-1} grad a
    w, _ = effective_velocity(BaroState(0.0, a, qu, p))
    assert np.max(np.abs(w.coeffs)) < 1e-14


def test_heat_examples():
    g = Grid(2, 16, 1.0 / 1.4)
    x1, _ = g.coordinates
    z0 = from_physical(np.cos(x1 / g.scale), g)
    times = np.linspace(0, 1, 801)
    f = Trajectory(times, tuple(SpectralField.zeros(g) for _ in times))
    rep = verify_heat_estimate([(z0, f)], 0.5, INF, 0.0, 2.0, 1.0)
    assert rep.constant <= 1 + 1e-12
    rep = verify_heat_estimate([(z0, f)], 0.5, 1, 0.0, 2.0, 1.0)
    xi2 = 1.4**2
    assert rep.constant == pytest.approx((1 - math.exp(-0.5 * xi2)) / (0.5 * xi2), rel=1e-5)
    z = solve_heat(z0, None, 0.5, times=[0.0, 1.0])
    assert rel(z.snapshots[1].coeffs, math.exp(-0.5 * xi2) * z0.coeffs) < 1e-15


def test_rescale_examples(rng):
    g = Grid(2, 16, 1.0, normalized=False)
    s = BaroState(0.0, random_field(g, rng, 4), random_vector(g, rng, 4), PhysicalParams(1.0, 0.5, 0.0))
    r = rescale_state(s)
    assert r.grid == g and np.array_equal(r.pack(), s.pack())
    p = PhysicalParams(0.5, 0.5, 0.0)
    x1, _ = g.coordinates
    a = from_physical(np.cos(3 * x1), g)
    s = BaroState(0.2, a, VectorField.zeros(g), p)
    r = rescale_state(s)
    assert r.grid.scale == 2.0 and r.t == pytest.approx(0.8)
    assert r.a.coeffs[3, 0] == pytest.approx(0.25)
    r2 = rescale_state(s, target=g.with_(n=32, scale=4.0))
    assert r2.a.coeffs[6, 0] == pytest.approx(0.25)
    back = unscale_state(r, p)
    assert rel(back.pack(), s.pack()) < 1e-15 and back.grid == g
    with pytest.raises(LatticeError):
        rescale_state(s, target=g.with_(scale=3.0))
