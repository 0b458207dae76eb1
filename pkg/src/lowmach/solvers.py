"""Exponential integrators for the barotropic, incompressible, full and limit-temperature systems.

State vectors are stacked coefficient arrays with the component axis first:
``(a, u_1..u_d)`` for the barotropic system and ``(a, u_1..u_d, theta)`` for
the full system. The stiff linear part (the ``1/eps`` acoustic coupling and
all constant-coefficient second-order terms) is applied exactly mode by mode;
the remaining nonlinear terms are explicit and dealiased.

The default scheme is the Lawson exponential midpoint rule

    k1 = N(U_n)
    U* = E(dt/2) (U_n + dt/2 k1)
    U_{n+1} = E(dt) U_n + dt E(dt/2) N(U*)

and ``order=1`` gives the Lawson-Euler step ``E(dt) (U_n + dt N(U_n))``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .besov import INF, BesovSpec, Exponent, SpaceTimeSpec, Trajectory, besov_norm, spacetime_norm
from .bony import InequalityReport, report
from .errors import BlowUpError, ConfigError, DomainError, LatticeError, ProjectionError
from .littlewood_paley import DEFAULT_PROFILE, DyadicProfile
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    divergence,
    from_padded_physical,
    gradient,
    padded_physical,
    project_P,
    project_Q,
)


# ---------------------------------------------------------------------------
# parameters and coefficient functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalParams:
    """Mach number, viscosities, heat conduction and pressure law.

    The pressure law is ``P(rho) = rho**gamma / gamma`` (so ``P'(1) = 1``);
    ``gamma = 1`` is the isothermal law ``P(rho) = rho``.
    """

    eps: float = 1.0
    mu: float = 1.0
    lam: float = -1.0
    kappa: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"must be positive, got {self.eps}", "params.eps")
        if not self.mu > 0:
            raise ConfigError(f"must be positive, got {self.mu}", "params.mu")
        if not self.lam + 2 * self.mu > 0:
            raise ConfigError(f"lam + 2 mu must be positive, got {self.lam + 2 * self.mu}", "params.lam")
        if self.kappa < 0:
            raise ConfigError(f"must be nonnegative, got {self.kappa}", "params.kappa")
        if not self.gamma > 0:
            raise ConfigError(f"must be positive, got {self.gamma}", "params.gamma")

    @property
    def nu(self) -> float:
        return self.lam + 2 * self.mu

    @property
    def eps_tilde(self) -> float:
        return self.eps * self.nu

    @property
    def mu_tilde(self) -> float:
        return self.mu / self.nu

    @property
    def lam_tilde(self) -> float:
        return self.lam / self.nu

    @property
    def kappa_tilde(self) -> float:
        return self.kappa / self.nu

    def require_nsf(self):
        if not self.kappa > 0:
            raise ConfigError(f"heat conduction must be positive, got {self.kappa}", "params.kappa")


def J(z):
    """``J(z) = z / (1 + z)``."""
    return z / (1.0 + z)


def pressure_k(gamma: float) -> Callable:
    """``k(z) = P'(1) - P'(1+z)/(1+z)`` for ``P(rho) = rho**gamma/gamma``."""
    def k(z):
        return -np.expm1((gamma - 2.0) * np.log1p(z))
    return k


def mu_variation(z):
    """Viscosity variation for constant coefficients (identically zero)."""
    return np.zeros_like(np.asarray(z, dtype=float))


lam_variation = mu_variation


# ---------------------------------------------------------------------------
# states and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaroState:
    t: float
    a: SpectralField
    u: VectorField
    params: PhysicalParams

    @property
    def grid(self) -> Grid:
        return self.a.grid

    def pack(self) -> np.ndarray:
        return np.concatenate([self.a.coeffs[None], self.u.coeffs])

    @classmethod
    def unpack(cls, t, U, grid, params) -> "BaroState":
        return cls(t, SpectralField(grid, U[0]), VectorField(grid, U[1:1 + grid.dim]), params)

    @classmethod
    def zeros(cls, grid, params) -> "BaroState":
        return cls(0.0, SpectralField.zeros(grid), VectorField.zeros(grid), params)


@dataclass(frozen=True)
class NSFState:
    t: float
    a: SpectralField
    u: VectorField
    theta: SpectralField
    params: PhysicalParams

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @property
    def q(self) -> SpectralField:
        return self.theta + self.a

    @property
    def Theta(self) -> SpectralField:
        return self.theta - self.a

    def pack(self) -> np.ndarray:
        return np.concatenate([self.a.coeffs[None], self.u.coeffs, self.theta.coeffs[None]])

    @classmethod
    def unpack(cls, t, U, grid, params) -> "NSFState":
        d = grid.dim
        return cls(t, SpectralField(grid, U[0]), VectorField(grid, U[1:1 + d]),
                   SpectralField(grid, U[1 + d]), params)

    @classmethod
    def zeros(cls, grid, params) -> "NSFState":
        return cls(0.0, SpectralField.zeros(grid), VectorField.zeros(grid), SpectralField.zeros(grid), params)


@dataclass(frozen=True)
class IncState:
    t: float
    v: VectorField

    @property
    def grid(self) -> Grid:
        return self.v.grid


@dataclass(frozen=True)
class ThetaState:
    t: float
    Theta: SpectralField

    @property
    def grid(self) -> Grid:
        return self.Theta.grid


@dataclass(frozen=True)
class StepperConfig:
    """Time stepping options.

    ``nonlinear=False`` keeps only the exact linear propagator. For the full
    system, ``theta_equation=False`` freezes theta at zero and removes its
    couplings, ``heat_conduction`` and ``dissipation_source`` toggle the
    corresponding terms. ``assembly`` selects how the viscous term of the
    velocity equation is formed (``'J'``: ``-J(eps a) A u``; ``'direct'``:
    ``A u / (1 + eps a) - A u``).
    """

    dt: float = 1e-2
    order: int = 2
    snapshot_every: int = 1
    courant: float = 2.0
    nonlinear: bool = True
    assembly: str = "J"
    theta_equation: bool = True
    heat_conduction: bool = True
    dissipation_source: bool = True
    dealias: str = "3/2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"must be positive, got {self.dt}", "stepper.dt")
        if self.order not in (1, 2):
            raise ConfigError(f"must be 1 or 2, got {self.order}", "stepper.order")
        if self.snapshot_every < 1:
            raise ConfigError(f"must be >= 1, got {self.snapshot_every}", "stepper.snapshot_every")
        if self.assembly not in ("J", "direct"):
            raise ConfigError(f"must be 'J' or 'direct', got {self.assembly!r}", "stepper.assembly")
        if self.dealias != "3/2":
            raise ConfigError(f"only the 3/2 rule is supported, got {self.dealias!r}", "stepper.dealias")
        if not self.courant > 0:
            raise ConfigError(f"must be positive, got {self.courant}", "stepper.courant")


# ---------------------------------------------------------------------------
# per-mode propagators
# ---------------------------------------------------------------------------

def _acoustic_2x2(r, nu, eps, dt):
    """Entries of ``exp(M dt)`` for ``M = [[0, -i r/eps], [-i r/eps, -nu r^2]]`` (arrays in ``r``)."""
    r = np.asarray(r, dtype=np.float64)
    tau = -nu * r**2
    w = r / eps
    s = np.sqrt((tau**2 / 4 - w**2).astype(np.complex128))
    s = np.where(s.real < 0, -s, s)
    lp, lm = tau / 2 + s, tau / 2 - s
    ep, em = np.exp(lp * dt), np.exp(lm * dt)
    ch = 0.5 * (ep + em)
    x = s * dt
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, s)
    sh = np.where(small, np.exp(tau * dt / 2) * dt * (1 + x**2 / 6 + x**4 / 120), (ep - em) / (2 * safe))
    # exp(Mt) = ch I + sh (M - tau/2 I)
    e00 = ch + sh * (-tau / 2)
    e11 = ch + sh * (tau / 2)
    e01 = sh * (-1j * w)
    return e00, e01, e01.copy(), e11


def _unit(xi):
    r = math.sqrt(sum(x * x for x in xi))
    return r, (np.array(xi, dtype=float) / r if r > 0 else np.zeros(len(xi)))


def linear_propagator_baro(xi: Sequence[float], params: PhysicalParams, dt: float) -> np.ndarray:
    """Exact ``(d+1) x (d+1)`` propagator of the linearized barotropic system at frequency ``xi``.

    Coordinates are ``(a, u_1, ..., u_d)``.
    """
    d = len(xi)
    r, e = _unit(xi)
    out = np.zeros((d + 1, d + 1), dtype=np.complex128)
    if r == 0:
        return np.eye(d + 1, dtype=np.complex128)
    e00, e01, e10, e11 = (complex(np.asarray(v)) for v in _acoustic_2x2(r, params.nu, params.eps, dt))
    heat = math.exp(-params.mu * r**2 * dt)
    out[0, 0] = e00
    out[0, 1:] = e01 * e
    out[1:, 0] = e10 * e
    out[1:, 1:] = e11 * np.outer(e, e) + heat * (np.eye(d) - np.outer(e, e))
    return out


def _nsf_block(r, params: PhysicalParams, theta_equation=True, heat_conduction=True):
    """Generator of the ``(a, xi_hat.u, theta)`` block, shape ``r.shape + (3, 3)``."""
    r = np.asarray(r, dtype=np.float64)
    w = r / params.eps
    M = np.zeros(r.shape + (3, 3), dtype=np.complex128)
    M[..., 0, 1] = -1j * w
    M[..., 1, 0] = -1j * w
    M[..., 1, 1] = -params.nu * r**2
    if theta_equation:
        M[..., 1, 2] = -1j * w
        M[..., 2, 1] = -1j * w
        if heat_conduction:
            M[..., 2, 2] = -params.kappa * r**2
    return M


def linear_propagator_nsf(xi: Sequence[float], params: PhysicalParams, dt: float,
                          theta_equation: bool = True, heat_conduction: bool = True) -> np.ndarray:
    """Exact ``(d+2) x (d+2)`` propagator of the linearized full system; coordinates ``(a, u, theta)``."""
    d = len(xi)
    r, e = _unit(xi)
    if r == 0:
        return np.eye(d + 2, dtype=np.complex128)
    B = sla.expm(_nsf_block(np.array(r), params, theta_equation, heat_conduction) * dt)
    heat = math.exp(-params.mu * r**2 * dt)
    # change of basis: (a, u, theta) -> (a, b, theta) with b = e.u
    S = np.zeros((3, d + 2))
    S[0, 0] = 1.0
    S[1, 1:1 + d] = e
    S[2, d + 1] = 1.0
    Pproj = np.zeros((d + 2, d + 2))
    Pproj[1:1 + d, 1:1 + d] = np.eye(d) - np.outer(e, e)
    return S.T @ B @ S + heat * Pproj


class _ModePropagator:
    """Vectorized propagator over all modes of a grid."""

    def __init__(self, grid: Grid, params: PhysicalParams, dt: float, kind: str,
                 theta_equation=True, heat_conduction=True):
        self.grid = grid
        r = grid.xi_norm
        mask = grid.resolved
        self.mask = mask
        self.e = np.stack([np.broadcast_to(x, grid.spectral_shape) / np.where(r > 0, r, 1.0) * (r > 0)
                           for x in grid.xi])
        self.heat = np.exp(-params.mu * grid.xi_norm2 * dt)
        self.kind = kind
        if kind == "baro":
            self.blk = np.stack([np.stack(row) for row in _pairs(_acoustic_2x2(r, params.nu, params.eps, dt))])
        else:
            pos = r > 0
            B = np.zeros(r.shape + (3, 3), dtype=np.complex128)
            B[...] = np.eye(3)
            B[pos] = sla.expm(_nsf_block(r[pos], params, theta_equation, heat_conduction) * dt)
            self.blk = np.moveaxis(B, (-2, -1), (0, 1))
        zero = grid.zero_mode
        n = self.blk.shape[0]
        self.blk[(slice(None), slice(None)) + zero] = np.eye(n)

    def apply(self, U: np.ndarray) -> np.ndarray:
        d = self.grid.dim
        u = U[1:1 + d]
        b = np.sum(self.e * u, axis=0)
        up = u - self.e * b
        comps = [U[0], b] + ([U[1 + d]] if self.kind == "nsf" else [])
        n = len(comps)
        new = [sum(self.blk[i, k] * comps[k] for k in range(n)) for i in range(n)]
        out = np.empty_like(U)
        out[0] = new[0]
        out[1:1 + d] = self.heat * up + self.e * new[1]
        if self.kind == "nsf":
            out[1 + d] = new[2]
        out *= self.mask
        return out


def _pairs(entries):
    e00, e01, e10, e11 = entries
    return [[e00, e01], [e10, e11]]


_PROP_CACHE: "OrderedDict[tuple, _ModePropagator]" = OrderedDict()


def _propagator(grid, params, dt, kind, theta_equation=True, heat_conduction=True) -> _ModePropagator:
    key = (grid, params, float(dt), kind, theta_equation, heat_conduction)
    hit = _PROP_CACHE.get(key)
    if hit is None:
        hit = _ModePropagator(grid, params, dt, kind, theta_equation, heat_conduction)
        _PROP_CACHE[key] = hit
        while len(_PROP_CACHE) > 16:
            _PROP_CACHE.popitem(last=False)
    else:
        _PROP_CACHE.move_to_end(key)
    return hit


# ---------------------------------------------------------------------------
# nonlinear right-hand sides
# ---------------------------------------------------------------------------

def _ixi(grid):
    return np.stack([1j * np.broadcast_to(x, grid.spectral_shape) * grid.resolved for x in grid.xi])


def _lame(grid, u_hat, mu, lam):
    """Coefficients of ``A u = mu Lap u + (lam + mu) grad div u``."""
    ixi = _ixi(grid)
    div = np.sum(ixi * u_hat, axis=0)
    return -mu * grid.xi_norm2 * u_hat + (lam + mu) * ixi * div


def _check_density(grid, eps, a_p, t):
    za = eps * a_p
    if not np.all(np.isfinite(za)):
        raise BlowUpError("non-finite density perturbation", t, float("nan"))
    m = float(np.max(np.abs(za)))
    if float(np.min(za)) <= -1.0:
        raise BlowUpError(f"density 1 + eps a lost positivity (max|eps a| = {m:.4g})", t, m)
    return m


def _check_courant(grid, u_p, dt, courant, t, eps_a):
    speed = float(np.max(np.sqrt(np.sum(u_p**2, axis=0))))
    if not math.isfinite(speed):
        raise BlowUpError("non-finite velocity", t, eps_a)
    cfl = dt * speed * grid.n / (2 * np.pi * grid.scale)
    if cfl > courant:
        raise BlowUpError(f"Courant number {cfl:.3g} exceeds bound {courant:g}", t, eps_a)


def _advect(grid, u_p, U_hat_comp):
    """Padded physical ``u . grad f`` for coefficient array ``f`` (leading axes allowed)."""
    ixi = _ixi(grid)
    acc = 0.0
    for j in range(grid.dim):
        acc = acc + u_p[j] * padded_physical(ixi[j] * U_hat_comp, grid)
    return acc


def baro_rhs(U: np.ndarray, grid: Grid, params: PhysicalParams, cfg: StepperConfig, t: float = 0.0) -> np.ndarray:
    """Nonlinear terms of the barotropic system (everything outside the exact propagator)."""
    d, eps = grid.dim, params.eps
    a_hat, u_hat = U[0], U[1:1 + d]
    a_p = padded_physical(a_hat, grid)
    u_p = padded_physical(u_hat, grid)
    ea = _check_density(grid, eps, a_p, t)
    _check_courant(grid, u_p, cfg.dt, cfg.courant, t, ea)
    ixi = _ixi(grid)
    out = np.zeros_like(U)
    out[0] = -np.sum(ixi * from_padded_physical(a_p * u_p, grid), axis=0)
    Au_p = padded_physical(_lame(grid, u_hat, params.mu, params.lam), grid)
    z = eps * a_p
    if cfg.assembly == "J":
        visc = -J(z) * Au_p
    else:
        visc = Au_p / (1.0 + z) - Au_p
    grad_a = padded_physical(ixi * a_hat, grid)
    press = (pressure_k(params.gamma)(z) / eps) * grad_a
    out[1:1 + d] = from_padded_physical(-_advect(grid, u_p, u_hat) + visc + press, grid)
    return out


def nsf_rhs(U: np.ndarray, grid: Grid, params: PhysicalParams, cfg: StepperConfig, t: float = 0.0) -> np.ndarray:
    """Nonlinear terms of the full system."""
    d, eps = grid.dim, params.eps
    a_hat, u_hat, th_hat = U[0], U[1:1 + d], U[1 + d]
    a_p = padded_physical(a_hat, grid)
    u_p = padded_physical(u_hat, grid)
    ea = _check_density(grid, eps, a_p, t)
    _check_courant(grid, u_p, cfg.dt, cfg.courant, t, ea)
    ixi = _ixi(grid)
    out = np.zeros_like(U)
    out[0] = -np.sum(ixi * from_padded_physical(a_p * u_p, grid), axis=0)
    z = eps * a_p
    inv = 1.0 / (1.0 + z)
    Au_p = padded_physical(_lame(grid, u_hat, params.mu, params.lam), grid)
    visc = -J(z) * Au_p if cfg.assembly == "J" else Au_p * inv - Au_p
    grad_a = padded_physical(ixi * a_hat, grid)
    mom = -_advect(grid, u_p, u_hat) + visc + (a_p * inv) * grad_a
    if cfg.theta_equation:
        th_p = padded_physical(th_hat, grid)
        grad_th = padded_physical(ixi * th_hat, grid)
        grad_ath = a_p * grad_th + th_p * grad_a
        mom = mom + (a_p * inv) * grad_th - inv * grad_ath
        th_rhs = -np.sum(ixi * from_padded_physical(th_p * u_p, grid), axis=0)
        src = np.zeros(grid.padded_shape)
        if cfg.heat_conduction:
            lap_th = padded_physical(-grid.xi_norm2 * th_hat, grid)
            src = src - params.kappa * J(z) * lap_th
        if cfg.dissipation_source:
            gu = padded_physical(ixi[None, :] * u_hat[:, None], grid)  # gu[i, j] = d_j u_i
            D = 0.5 * (gu + np.swapaxes(gu, 0, 1))
            divu = np.trace(gu, axis1=0, axis2=1)
            src = src + eps * inv * (2 * params.mu * np.sum(D**2, axis=(0, 1)) + params.lam * divu**2)
        out[1 + d] = th_rhs + from_padded_physical(src, grid)
    out[1:1 + d] = from_padded_physical(mom, grid)
    return out


# ---------------------------------------------------------------------------
# generic Lawson stepping
# ---------------------------------------------------------------------------

def _lawson(U, dt, prop_full, prop_half, rhs, order, t):
    if order == 1:
        return prop_full.apply(U + dt * rhs(U, t))
    k1 = rhs(U, t)
    Us = prop_half.apply(U + 0.5 * dt * k1)
    k2 = rhs(Us, t + 0.5 * dt)
    return prop_full.apply(U) + dt * prop_half.apply(k2)


def step_baro(state: BaroState, cfg: StepperConfig) -> BaroState:
    """Advance the barotropic system by one step of size ``cfg.dt``."""
    g, p, dt = state.grid, state.params, cfg.dt
    full = _propagator(g, p, dt, "baro")
    U = state.pack()
    if not cfg.nonlinear:
        return BaroState.unpack(state.t + dt, full.apply(U), g, p)
    half = _propagator(g, p, dt / 2, "baro")
    U1 = _lawson(U, dt, full, half, lambda V, t: baro_rhs(V, g, p, cfg, t), cfg.order, state.t)
    _check_density(g, p.eps, padded_physical(U1[0], g), state.t + dt)
    return BaroState.unpack(state.t + dt, U1, g, p)


def step_nsf(state: NSFState, cfg: StepperConfig) -> NSFState:
    """Advance the full system by one step of size ``cfg.dt``."""
    g, p, dt = state.grid, state.params, cfg.dt
    if cfg.theta_equation and cfg.heat_conduction:
        p.require_nsf()
    flags = (cfg.theta_equation, cfg.heat_conduction)
    full = _propagator(g, p, dt, "nsf", *flags)
    U = state.pack()
    if not cfg.theta_equation:
        U[1 + g.dim] = 0.0
    if not cfg.nonlinear:
        return NSFState.unpack(state.t + dt, full.apply(U), g, p)
    half = _propagator(g, p, dt / 2, "nsf", *flags)
    U1 = _lawson(U, dt, full, half, lambda V, t: nsf_rhs(V, g, p, cfg, t), cfg.order, state.t)
    _check_density(g, p.eps, padded_physical(U1[0], g), state.t + dt)
    return NSFState.unpack(state.t + dt, U1, g, p)


def _n_steps(T, dt):
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


def _integrate(state, T, cfg, stepper):
    n, dt = _n_steps(T, cfg.dt)
    cfg = replace(cfg, dt=dt)
    t0 = state.t
    times, snaps = [state.t], [state]
    for i in range(1, n + 1):
        state = stepper(state, cfg)
        state = replace(state, t=t0 + i * dt)
        if i % cfg.snapshot_every == 0 or i == n:
            times.append(state.t)
            snaps.append(state)
    return Trajectory(np.array(times), tuple(snaps))


def integrate_baro(state: BaroState, T: float, cfg: StepperConfig) -> Trajectory:
    """Run to ``state.t + T``; ``dt`` is shrunk slightly so that ``T`` is hit exactly."""
    return _integrate(state, T, cfg, step_baro)


def integrate_nsf(state: NSFState, T: float, cfg: StepperConfig) -> Trajectory:
    return _integrate(state, T, cfg, step_nsf)


# ---------------------------------------------------------------------------
# incompressible reference and limit temperature
# ---------------------------------------------------------------------------

def _div_rel(v: VectorField) -> float:
    div = divergence(v).coeffs
    scale = max(float(np.max(np.abs(v.coeffs))) * max(v.grid.xi_max, 1.0), 1e-300)
    return float(np.max(np.abs(div))) / scale


def leray_advection(v: VectorField) -> VectorField:
    """``P(v . grad v)`` with dealiased products."""
    g = v.grid
    vp = padded_physical(v.coeffs, g)
    return project_P(VectorField(g, from_padded_physical(_advect(g, vp, v.coeffs), g)))


def step_incompressible(state: IncState, mu: float, cfg: StepperConfig) -> IncState:
    """One exponential step of ``v_t - mu Lap v + P(v . grad v) = 0``."""
    g, dt = state.grid, cfg.dt
    if _div_rel(state.v) > 1e-10:
        raise ProjectionError(f"initial field not divergence-free (relative div {_div_rel(state.v):.3e})")
    h_full = np.exp(-mu * g.xi_norm2 * dt)
    if not cfg.nonlinear:
        return IncState(state.t + dt, VectorField(g, h_full * state.v.coeffs))
    h_half = np.exp(-mu * g.xi_norm2 * dt / 2)
    V = state.v.coeffs
    vp = padded_physical(V, g)
    speed = float(np.max(np.sqrt(np.sum(vp**2, axis=0))))
    if dt * speed * g.n / (2 * np.pi * g.scale) > cfg.courant or not math.isfinite(speed):
        raise BlowUpError("Courant bound exceeded in the incompressible solver", state.t, 0.0)

    def rhs(C):
        return -leray_advection(VectorField(g, C)).coeffs

    if cfg.order == 1:
        V1 = h_full * (V + dt * rhs(V))
    else:
        Vs = h_half * (V + 0.5 * dt * rhs(V))
        V1 = h_full * V + dt * h_half * rhs(Vs)
    out = project_P(VectorField(g, V1))
    if _div_rel(out) > 1e-8:
        raise ProjectionError(f"divergence drift {_div_rel(out):.3e} at t = {state.t + dt:.6g}")
    return IncState(state.t + dt, out)


def integrate_incompressible(state: IncState, mu: float, T: float, cfg: StepperConfig) -> Trajectory:
    return _integrate(state, T, cfg, lambda s, c: step_incompressible(s, mu, c))


def _as_vector_traj(u_traj: Trajectory) -> Trajectory:
    first = u_traj.snapshots[0]
    if isinstance(first, VectorField):
        return u_traj
    if isinstance(first, IncState):
        return u_traj.map(lambda s: s.v)
    return u_traj.map(lambda s: s.u)


def interpolate_velocity(u_traj: Trajectory, t: float) -> VectorField:
    """Linear interpolation in time; outside the covered interval raises DomainError."""
    times = u_traj.times
    tol = 1e-9 * max(1.0, abs(times[-1]))
    if t < times[0] - tol or t > times[-1] + tol:
        raise DomainError(f"velocity trajectory covers [{times[0]:.6g}, {times[-1]:.6g}], need t = {t:.6g}")
    if len(times) == 1:
        return u_traj.snapshots[0]
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    w = float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))
    a, b = u_traj.snapshots[i], u_traj.snapshots[i + 1]
    return VectorField(a.grid, (1 - w) * a.coeffs + w * b.coeffs)


def step_theta_limit(state: ThetaState, u_traj: Trajectory, kappa: float, cfg: StepperConfig) -> ThetaState:
    """One exponential step of ``Theta_t - (kappa/2) Lap Theta + u . grad Theta = 0``."""
    g, dt = state.grid, cfg.dt
    ut = _as_vector_traj(u_traj)
    diff = 0.5 * kappa
    h_full = np.exp(-diff * g.xi_norm2 * dt)
    h_half = np.exp(-diff * g.xi_norm2 * dt / 2)

    def rhs(C, t):
        u = interpolate_velocity(ut, t)
        up = padded_physical(u.coeffs, g)
        return -from_padded_physical(_advect(g, up, C), g)

    C = state.Theta.coeffs
    if not cfg.nonlinear:
        return ThetaState(state.t + dt, SpectralField(g, h_full * C))
    if cfg.order == 1:
        C1 = h_full * (C + dt * rhs(C, state.t))
    else:
        Cs = h_half * (C + 0.5 * dt * rhs(C, state.t))
        C1 = h_full * C + dt * h_half * rhs(Cs, state.t + 0.5 * dt)
    interpolate_velocity(ut, state.t + dt)
    return ThetaState(state.t + dt, SpectralField(g, C1))


def integrate_theta_limit(state: ThetaState, u_traj: Trajectory, kappa: float, T: float,
                          cfg: StepperConfig) -> Trajectory:
    return _integrate(state, T, cfg, lambda s, c: step_theta_limit(s, u_traj, kappa, c))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def effective_velocity(state) -> tuple[VectorField, dict]:
    """``w = Q u + (-Lap)^{-1} grad a``; per mode ``Q u_hat + i xi a_hat / |xi|^2``.

    The mean of ``a`` does not enter (its gradient vanishes); it is reported
    in the returned metadata.
    """
    g = state.grid
    a = state.a
    r2 = np.where(g.xi_norm2 > 0, g.xi_norm2, 1.0)
    ga = gradient(a.mean_free()).coeffs / r2 * (g.xi_norm2 > 0)
    w = VectorField(g, project_Q(state.u).coeffs + ga)
    return w, {"mean_a_removed": a.mean}


def verify_heat_estimate(cases, mu: float, m: Exponent, s: float, p: Exponent, r: Exponent,
                         profile: DyadicProfile = DEFAULT_PROFILE) -> InequalityReport:
    """Fitted constant of the heat smoothing estimate.

    Each case is ``(z0, f_traj)`` with ``f_traj`` a Trajectory of source
    fields starting at ``t = 0``; its last time is the horizon ``T``. The
    solution is advanced exactly per mode with the trapezoid Duhamel rule on
    the source samples and compared as
    ``||z||_{Ltilde^m_T B^{s+2/m}_{p,r}}`` against
    ``||z0||_{B^s_{p,r}} + ||f||_{Ltilde^1_T B^s_{p,r}}``.
    """
    from .besov import as_float

    pairs = []
    for z0, f_traj in cases:
        z = solve_heat(z0, f_traj, mu)
        lhs = spacetime_norm(z, SpaceTimeSpec(BesovSpec(s + 2.0 / as_float(m), p, r), m, True), profile).value
        rhs = besov_norm(z0, BesovSpec(s, p, r), profile).value
        if f_traj is not None and len(f_traj) > 1:
            rhs += spacetime_norm(f_traj, SpaceTimeSpec(BesovSpec(s, p, r), 1, True), profile).value
        pairs.append((lhs, rhs))
    return report("heat", pairs, mu=mu, m=m, s=s, p=p, r=r, profile=profile.kind)


def heat_constants(cases, mu: float, ms, ss, p: Exponent, r: Exponent,
                   profile: DyadicProfile = DEFAULT_PROFILE) -> dict:
    """:func:`verify_heat_estimate` over every ``(m, s)`` pair, keyed by the pair.

    Block tables do not depend on ``(m, s)`` and are computed once per case.
    """
    from .besov import aggregate_besov, aggregate_spacetime, as_float, block_norms, block_table

    pairs = {(m, s): [] for m in ms for s in ss}
    for z0, f_traj in cases:
        z = solve_heat(z0, f_traj, mu)
        js, tz = block_table(z.snapshots, p, profile)
        _, row0 = block_norms(z0, p, profile, js)
        tf = None
        if f_traj is not None and len(f_traj) > 1:
            tf = block_table(f_traj.snapshots, p, profile)[1]
        for m, s in pairs:
            lhs = aggregate_spacetime(z.times, js, tz, s + 2.0 / as_float(m), m, r, True)
            rhs = aggregate_besov(js, row0, s, r)
            if tf is not None:
                rhs += aggregate_spacetime(f_traj.times, js, tf, s, 1, r, True)
            pairs[(m, s)].append((lhs, rhs))
    return {key: report("heat", val, mu=mu, m=key[0], s=key[1], p=p, r=r, profile=profile.kind)
            for key, val in pairs.items()}


def solve_heat(z0: SpectralField, f_traj: Trajectory | None, mu: float, times=None) -> Trajectory:
    """Exact heat flow of ``z0`` plus trapezoid Duhamel integral of the sampled source."""
    g = z0.grid
    lam = mu * g.xi_norm2
    if f_traj is None or len(f_traj) < 2:
        ts = np.asarray(times if times is not None else [0.0], dtype=float)
        return Trajectory(ts, tuple(SpectralField(g, np.exp(-lam * t) * z0.coeffs) for t in ts))
    ts = f_traj.times
    out = [z0.coeffs.copy()]
    for i in range(len(ts) - 1):
        dt = ts[i + 1] - ts[i]
        e = np.exp(-lam * dt)
        out.append(e * out[-1] + 0.5 * dt * (e * f_traj.snapshots[i].coeffs + f_traj.snapshots[i + 1].coeffs))
    return Trajectory(ts, tuple(SpectralField(g, c) for c in out))


# ---------------------------------------------------------------------------
# scaling between (eps, nu) and (1, 1)
# ---------------------------------------------------------------------------

def rescaled_params(params: PhysicalParams) -> PhysicalParams:
    nu = params.nu
    return PhysicalParams(1.0, params.mu / nu, params.lam / nu, params.kappa / nu, params.gamma)


def _relabel(coeffs: np.ndarray, grid: Grid, target: Grid, m: int) -> np.ndarray:
    """Move mode ``k`` to ``m k`` on ``target``."""
    d = grid.dim
    if m == 1 and target.n == grid.n:
        return coeffs.copy()
    lead = coeffs.shape[: coeffs.ndim - d]
    out = np.zeros(lead + target.spectral_shape, dtype=np.complex128)
    nz = np.argwhere(np.any(np.abs(coeffs.reshape((-1,) + grid.spectral_shape)) > 0, axis=0) & grid.resolved)
    for idx in nz:
        k = [int(grid.k[ax].reshape(-1)[idx[ax]]) for ax in range(d)]
        kt = [m * ki for ki in k]
        if any(abs(ki) >= target.n // 2 for ki in kt):
            raise LatticeError(f"mode {tuple(k)} maps to {tuple(kt)}, beyond the target grid (N = {target.n})")
        tidx = tuple(kt[ax] % target.n for ax in range(d - 1)) + (kt[-1],)
        out[(Ellipsis,) + tidx] = coeffs[(Ellipsis,) + tuple(idx)]
    return out


def _scale_factor(grid: Grid, eps_tilde: float, target: Grid | None, forward: bool):
    """Return ``(target grid, integer mode multiplier)``."""
    natural = grid.scale / eps_tilde if forward else grid.scale * eps_tilde
    if target is None:
        return grid.with_(scale=natural), 1
    if target.dim != grid.dim or target.normalized != grid.normalized:
        raise LatticeError("target grid must share dimension and measure convention")
    ratio = target.scale / natural
    m = round(ratio)
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        admissible = ", ".join(f"{grid.scale * k / target.scale:g}" if forward else f"{target.scale / (k * grid.scale):g}"
                               for k in range(1, 5))
        raise LatticeError(f"eps*nu = {eps_tilde:g} does not map the lattice of L = {grid.scale:g} onto the "
                           f"target L = {target.scale:g}; admissible eps*nu values: {admissible}, ...")
    return target, m


def rescale_state(state, target: Grid | None = None):
    """Map a state at ``(eps, nu)`` to the normalized system ``eps = nu = 1``.

    ``(a, u[, theta])(t, x) = eps (a, u[, theta])^eps(eps^2 nu t, eps nu x)``: the
    box scale becomes ``L / (eps nu)``, coefficients are multiplied by ``eps``
    and times divided by ``eps^2 nu``.
    """
    p = state.params
    et, eps = p.eps_tilde, p.eps
    g, m = _scale_factor(state.grid, et, target, True)
    U = _relabel(state.pack(), state.grid, g, m) * eps
    return type(state).unpack(state.t / (eps**2 * p.nu), U, g, rescaled_params(p))


def unscale_state(state, params: PhysicalParams, target: Grid | None = None):
    """Inverse of :func:`rescale_state` for a normalized state and target parameters."""
    if abs(state.params.eps - 1.0) > 1e-14 or abs(state.params.nu - 1.0) > 1e-12:
        raise DomainError("unscale_state expects a state of the normalized system")
    et, eps = params.eps_tilde, params.eps
    g, m = _scale_factor(state.grid, et, target, False)
    U = _relabel(state.pack(), state.grid, g, m) / eps
    return type(state).unpack(state.t * eps**2 * params.nu, U, g, params)


def rescale_solution(traj: Trajectory, target: Grid | None = None) -> Trajectory:
    snaps = tuple(rescale_state(s, target) for s in traj.snapshots)
    return Trajectory(np.array([s.t for s in snaps]), snaps)


def unscale_solution(traj: Trajectory, params: PhysicalParams, target: Grid | None = None) -> Trajectory:
    snaps = tuple(unscale_state(s, params, target) for s in traj.snapshots)
    return Trajectory(np.array([s.t for s in snaps]), snaps)


def unscale_data(state, params: PhysicalParams, target: Grid | None = None):
    """Data at ``(eps, nu)`` from normalized data (time is reset to 0)."""
    return replace(unscale_state(state, params, target), t=0.0)


def rescale_data(state, target: Grid | None = None):
    return replace(rescale_state(state, target), t=0.0)


def rescaled_stepper(cfg: StepperConfig, params: PhysicalParams) -> StepperConfig:
    """Stepper for the normalized system matching ``cfg`` at ``params`` (``dt -> dt / (eps^2 nu)``)."""
    return replace(cfg, dt=cfg.dt / (params.eps**2 * params.nu))
