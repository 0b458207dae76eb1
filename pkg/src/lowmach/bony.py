"""Paraproduct, remainder and the inequality checks built on them.

``T_u v = sum_j S_{j-1} u * Delta_j v`` and
``R(u, v) = sum_j Delta_j u * (Delta_{j-1} + Delta_j + Delta_{j+1}) v``.
All products are dealiased, so on the grid

    trunc(u v) = T_u v + T_v u + R(u, v) + mean(u) mean(v)

holds up to rounding; the last term is kept in ``BonyParts.mean_ledger``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .besov import INF, BesovSpec, Exponent, as_float, besov_norm, block_norms, aggregate_besov
from .errors import DomainError, RangeError
from .littlewood_paley import DEFAULT_PROFILE, DyadicProfile, block_symbol, dyadic_range, lowpass_symbol
from .spectral import (
    FourierMultiplier,
    SpectralField,
    _check_grid,
    from_padded_physical,
    gradient,
    lp_norm,
    padded_physical,
)


def _blocks_physical(f: SpectralField, js, profile):
    g = f.grid
    return {j: padded_physical(block_symbol(g, j, profile) * f.coeffs, g) for j in js}


def paraproduct_terms(u: SpectralField, v: SpectralField, profile: DyadicProfile = DEFAULT_PROFILE):
    """List of ``(j, S_{j-1}u * Delta_j v)`` for every resolved ``j``."""
    g = _check_grid(u, v)
    out = []
    for j in dyadic_range(g, profile):
        low = padded_physical(lowpass_symbol(g, j - 1, profile) * u.coeffs, g)
        high = padded_physical(block_symbol(g, j, profile) * v.coeffs, g)
        out.append((j, SpectralField(g, from_padded_physical(low * high, g))))
    return out


def paraproduct(u: SpectralField, v: SpectralField, profile: DyadicProfile = DEFAULT_PROFILE) -> SpectralField:
    """``T_u v``; the mean of ``u`` multiplies ``v - mean(v)``."""
    g = _check_grid(u, v)
    acc = np.zeros(g.padded_shape)
    for j in dyadic_range(g, profile):
        sv = block_symbol(g, j, profile)
        if not np.any(sv * v.coeffs):
            continue
        acc += padded_physical(lowpass_symbol(g, j - 1, profile) * u.coeffs, g) * padded_physical(sv * v.coeffs, g)
    return SpectralField(g, from_padded_physical(acc, g))


def remainder(u: SpectralField, v: SpectralField, profile: DyadicProfile = DEFAULT_PROFILE) -> SpectralField:
    """``R(u, v)``, symmetric in its arguments."""
    g = _check_grid(u, v)
    js = dyadic_range(g, profile)
    ub = _blocks_physical(u, js, profile)
    vb = _blocks_physical(v, js, profile)
    zero = np.zeros(g.padded_shape)
    acc = np.zeros(g.padded_shape)
    for j in js:
        window = vb.get(j - 1, zero) + vb[j] + vb.get(j + 1, zero)
        acc += ub[j] * window
    return SpectralField(g, from_padded_physical(acc, g))


@dataclass(frozen=True)
class BonyParts:
    T_uv: SpectralField
    T_vu: SpectralField
    R_uv: SpectralField
    mean_ledger: float
    meta: dict = field(default_factory=dict)

    def total(self) -> SpectralField:
        c = (self.T_uv + self.T_vu + self.R_uv).coeffs.copy()
        c[self.T_uv.grid.zero_mode] += self.mean_ledger
        return SpectralField(self.T_uv.grid, c)


def bony_decompose(u: SpectralField, v: SpectralField, profile: DyadicProfile = DEFAULT_PROFILE) -> BonyParts:
    """Split the dealiased product; the mean-mean interaction goes to the ledger.

    ``meta['residual']`` is the relative coefficient l2 residual of the
    reconstruction against the dealiased product.
    """
    from .spectral import multiply

    tuv = paraproduct(u, v, profile)
    tvu = paraproduct(v, u, profile)
    r = remainder(u, v, profile)
    parts = BonyParts(tuv, tvu, r, u.mean * v.mean)
    prod = multiply(u, v)
    denom = max(float(np.linalg.norm(prod.coeffs)), 1e-300)
    res = float(np.linalg.norm(parts.total().coeffs - prod.coeffs)) / denom
    return BonyParts(tuv, tvu, r, parts.mean_ledger, {"residual": res, "mean_u": u.mean, "mean_v": v.mean})


# ---------------------------------------------------------------------------
# inequality reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    """Fitted constant of ``lhs <= C rhs`` over a sample set."""

    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        rhs = np.asarray(self.rhs, dtype=float)
        lhs = np.asarray(self.lhs, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
        return out

    @property
    def constant(self) -> float:
        return float(np.max(self.ratios)) if len(self.lhs) else 0.0

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.ratios)) if len(self.lhs) else -1

    @property
    def samples(self) -> int:
        return len(self.lhs)

    def merge(self, other: "InequalityReport") -> "InequalityReport":
        return InequalityReport(self.name, np.concatenate([self.lhs, other.lhs]),
                                np.concatenate([self.rhs, other.rhs]), dict(self.params))

    CSV_HEADER = ("name", "samples", "constant", "argmax", "lhs_at_max", "rhs_at_max", "params")

    def to_row(self) -> dict:
        i = self.argmax
        return {
            "name": self.name, "samples": self.samples, "constant": repr(self.constant), "argmax": i,
            "lhs_at_max": repr(float(self.lhs[i])) if i >= 0 else "",
            "rhs_at_max": repr(float(self.rhs[i])) if i >= 0 else "",
            "params": ";".join(f"{k}={v}" for k, v in sorted(self.params.items())),
        }


def report(name: str, pairs: Iterable[tuple[float, float]], **params) -> InequalityReport:
    pairs = list(pairs)
    lhs = np.array([p[0] for p in pairs], dtype=float)
    rhs = np.array([p[1] for p in pairs], dtype=float)
    return InequalityReport(name, lhs, rhs, params)


# ---------------------------------------------------------------------------
# commutator estimate
# ---------------------------------------------------------------------------

def _symbol(A, grid):
    if A is None:
        return np.ones(grid.spectral_shape)
    if isinstance(A, FourierMultiplier):
        return A.evaluate(grid)
    if callable(A):
        return FourierMultiplier(A, zero_value=0.0).evaluate(grid)
    return np.asarray(A)


def riesz_symbol(i: int, k: int):
    """Zero-order symbol ``xi_i xi_k / |xi|^2`` (real and even)."""
    def sym(xi):
        r2 = sum(x**2 for x in xi)
        return xi[i] * xi[k] / r2
    return FourierMultiplier(sym, zero_value=0.0)


def commutator(a: SpectralField, b: SpectralField, A=None, j0: int = 0,
               profile: DyadicProfile = DEFAULT_PROFILE) -> SpectralField:
    """``[S_{j0} A(D), T_a] b = S_{j0}A(D)(T_a b) - T_a(S_{j0}A(D) b)``."""
    g = _check_grid(a, b)
    m = lowpass_symbol(g, j0, profile) * _symbol(A, g)
    first = SpectralField(g, m * paraproduct(a, b, profile).coeffs)
    second = paraproduct(a, SpectralField(g, m * b.coeffs), profile)
    return first - second


def commutator_terms(a, b, s: float, sigma: float, p: Exponent, p1: Exponent, p2: Exponent,
                     A=None, j0: int = 0, profile: DyadicProfile = DEFAULT_PROFILE) -> tuple[float, float]:
    """Both sides of the commutator estimate for one pair ``(a, b)``."""
    ip = 1.0 / as_float(p)
    if abs(ip - (1.0 / as_float(p1) + 1.0 / as_float(p2))) > 1e-12:
        raise DomainError(f"need 1/p = 1/p1 + 1/p2, got p={p}, p1={p1}, p2={p2}")
    if s > 1:
        raise DomainError(f"commutator estimate needs s <= 1, got {s}")
    c = commutator(a, b, A, j0, profile)
    lhs = besov_norm(c, BesovSpec(sigma + s, p, 1), profile).value
    grad = gradient(a)
    if s < 1:
        ga = besov_norm(grad, BesovSpec(s - 1, p1, 1), profile).value
        gb = besov_norm(b, BesovSpec(sigma, p2, INF), profile).value
    else:
        vals = padded_physical(grad.coeffs, grad.grid)
        ga = lp_norm(np.sqrt(np.sum(vals**2, axis=0)), as_float(p1), grad.grid)
        gb = besov_norm(b, BesovSpec(sigma, p2, 1), profile).value
    return lhs, ga * gb


def check_commutator(pairs: Sequence[tuple[SpectralField, SpectralField]], A=None, j0: int = 0,
                     s: float = 0.5, sigma: float = 0.0, p: Exponent = 2.0, p1: Exponent = INF,
                     p2: Exponent = 2.0, profile: DyadicProfile = DEFAULT_PROFILE) -> InequalityReport:
    """Fitted constant of the commutator estimate over sample pairs ``(a, b)``."""
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], SpectralField):
        pairs = [pairs]
    vals = [commutator_terms(a, b, s, sigma, p, p1, p2, A, j0, profile) for a, b in pairs]
    return report("commutator", vals, j0=j0, s=s, sigma=sigma, p=p, p1=p1, p2=p2, profile=profile.kind)


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

SMALLNESS_BOUND = 0.5


def compose(a: SpectralField, G: Callable[[np.ndarray], np.ndarray],
            interval: tuple[float, float] | None = None) -> SpectralField:
    """``G(a)`` evaluated pointwise on the padded grid.

    ``interval`` is the closed range the values of ``a`` must lie in; a
    violation raises :class:`RangeError`.
    """
    g = a.grid
    vals = padded_physical(a.coeffs, g)
    if interval is not None:
        lo, hi = interval
        vmin, vmax = float(vals.min()), float(vals.max())
        if vmin < lo or vmax > hi:
            raise RangeError(
                f"values of a span [{vmin:.4g}, {vmax:.4g}], outside [{lo:g}, {hi:g}]"
                f" (smallness condition sup|a| <= {SMALLNESS_BOUND:g} for J and k)"
            )
    return SpectralField(g, from_padded_physical(G(vals), g))


def composition_terms(a, G, s: float, p: Exponent, interval=None,
                      profile: DyadicProfile = DEFAULT_PROFILE) -> tuple[float, float]:
    if s <= 0:
        raise DomainError(f"composition estimate needs s > 0, got {s}")
    spec = BesovSpec(s, p, 1)
    return besov_norm(compose(a, G, interval), spec, profile).value, besov_norm(a, spec, profile).value


def check_composition(samples, G, s: float, p: Exponent = 2.0, m: Exponent = INF,
                      interval=(-SMALLNESS_BOUND, SMALLNESS_BOUND),
                      profile: DyadicProfile = DEFAULT_PROFILE) -> InequalityReport:
    """Fitted constant of ``||G(a)||_{B^s_{p,1}} <= C ||a||_{B^s_{p,1}}``.

    Samples are fields or trajectories; for trajectories the tilde
    ``L^m`` time norm is used on both sides.
    """
    from .besov import SpaceTimeSpec, Trajectory, spacetime_norm

    if isinstance(samples, (SpectralField, Trajectory)):
        samples = [samples]
    vals = []
    for a in samples:
        if isinstance(a, Trajectory):
            spec = SpaceTimeSpec(BesovSpec(s, p, 1), m, True)
            ga = a.map(lambda f: compose(f, G, interval))
            vals.append((spacetime_norm(ga, spec, profile).value, spacetime_norm(a, spec, profile).value))
        else:
            vals.append(composition_terms(a, G, s, p, interval, profile))
    return report("composition", vals, s=s, p=p, m=m, profile=profile.kind)
