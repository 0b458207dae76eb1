"""Homogeneous Besov semi-norms and their space-time variants.

Every norm is assembled from a *block table*: the array of
``||Delta_j z(t)||_{L^p}`` over snapshots ``t`` and dyadic indices ``j``.
L^p norms are computed on the 3/2 padded grid (``p = inf`` is the grid
maximum); vector fields use the pointwise Euclidean magnitude. Time
integrals use the trapezoid rule on the recorded snapshot times.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

from .errors import DomainError, GridMismatchError
from .littlewood_paley import (
    DEFAULT_PROFILE,
    DyadicProfile,
    SplitConfig,
    block_symbol,
    dyadic_range,
)
from .spectral import Grid, SpectralField, VectorField, lp_norm, padded_physical, project_P, project_Q


class Infinity(enum.Enum):
    INF = "inf"

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"


INF = Infinity.INF
Exponent = Union[float, int, Infinity]


def as_float(p: Exponent) -> float:
    return math.inf if p is INF else float(p)


def parse_exponent(text: str | float | Infinity) -> Exponent:
    """Parse ``'inf'``, ``'∞'`` or a number >= 1."""
    if text is INF:
        return INF
    if isinstance(text, str):
        t = text.strip().lower()
        if t in ("inf", "infinity", "∞", "+inf"):
            return INF
        text = float(t)
    if math.isinf(text):
        return INF
    if text < 1:
        raise DomainError(f"Lebesgue/summation exponents must be >= 1, got {text}")
    return float(text)


def _fmt(p: Exponent) -> str:
    return "inf" if p is INF else f"{float(p):g}"


@dataclass(frozen=True)
class BesovSpec:
    s: float
    p: Exponent = 2.0
    r: Exponent = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", parse_exponent(self.p))
        object.__setattr__(self, "r", parse_exponent(self.r))

    def label(self) -> str:
        return f"B^{self.s:g}_{{{_fmt(self.p)},{_fmt(self.r)}}}"


@dataclass(frozen=True)
class SpaceTimeSpec:
    base: BesovSpec
    q: Exponent = INF
    tilde: bool = True
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", parse_exponent(self.q))

    def label(self) -> str:
        lt = "Ltilde" if self.tilde else "L"
        return f"{lt}^{_fmt(self.q)}({self.base.label()})"


@dataclass(frozen=True)
class TruncatedSpec:
    base: BesovSpec | SpaceTimeSpec
    side: str
    split: SplitConfig

    def __post_init__(self):
        if self.side not in ("low", "high"):
            raise DomainError(f"side must be 'low' or 'high', got {self.side!r}")

    def label(self) -> str:
        return f"{self.base.label()}^{{{self.side},alpha={self.split.alpha:g},j0={self.split.j0}}}"


@dataclass(frozen=True)
class NormValue:
    value: float
    spec: Any = None
    j_range: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)

    CSV_HEADER = ("spec", "s", "p", "r", "q", "tilde", "side", "value", "j_min", "j_max", "snapshots")

    def to_row(self) -> dict:
        spec = self.spec
        side = ""
        if isinstance(spec, TruncatedSpec):
            side = spec.side
            spec = spec.base
        q, tilde = "", ""
        if isinstance(spec, SpaceTimeSpec):
            q, tilde = _fmt(spec.q), int(spec.tilde)
            spec = spec.base
        s = p = r = ""
        if isinstance(spec, BesovSpec):
            s, p, r = f"{spec.s:g}", _fmt(spec.p), _fmt(spec.r)
        jr = self.j_range or ("", "")
        return {
            "spec": self.spec.label() if hasattr(self.spec, "label") else str(self.spec or ""),
            "s": s, "p": p, "r": r, "q": q, "tilde": tilde, "side": side,
            "value": repr(float(self.value)),
            "j_min": jr[0], "j_max": jr[1],
            "snapshots": self.meta.get("snapshots", 1),
        }


@dataclass(frozen=True)
class Trajectory:
    """Time samples ``(t_i, snapshot_i)`` with strictly increasing ``t_i``."""

    times: np.ndarray
    snapshots: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or t.size != len(self.snapshots):
            raise DomainError("times and snapshots must have equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    def __len__(self):
        return len(self.snapshots)

    def map(self, fn: Callable) -> "Trajectory":
        return Trajectory(self.times, tuple(fn(s) for s in self.snapshots))

    def upto(self, horizon: float | None) -> "Trajectory":
        if horizon is None:
            return self
        keep = self.times <= horizon * (1 + 1e-12) + 1e-300
        return Trajectory(self.times[keep], tuple(s for s, k in zip(self.snapshots, keep) if k))

    @property
    def grid(self) -> Grid:
        s = self.snapshots[0]
        return s.grid


# ---------------------------------------------------------------------------
# block tables
# ---------------------------------------------------------------------------

def block_lp(z: SpectralField | VectorField, j: int, p: Exponent,
             profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """``||Delta_j z||_{L^p}`` on the padded grid."""
    g = z.grid
    c = block_symbol(g, j, profile) * z.coeffs
    if not np.any(c):
        return 0.0
    vals = padded_physical(c, g)
    if isinstance(z, VectorField):
        vals = np.sqrt(np.sum(vals**2, axis=0))
    return lp_norm(vals, as_float(p), g)


def block_norms(z, p: Exponent, profile: DyadicProfile = DEFAULT_PROFILE,
                js: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(js, values)`` with ``values[i] = ||Delta_{js[i]} z||_{L^p}``."""
    if js is None:
        js = dyadic_range(z.grid, profile)
    js = np.asarray(js, dtype=int)
    g, pf = z.grid, as_float(p)
    vals = np.zeros(len(js))
    if pf == 2.0:
        # Parseval; the padded-grid quadrature is exact here
        w = g.measure_factor * g.hermitian_weights
        power = np.abs(z.coeffs) ** 2
        if isinstance(z, VectorField):
            power = power.sum(axis=0)
        for i, j in enumerate(js):
            vals[i] = math.sqrt(float(np.sum(w * block_symbol(g, int(j), profile) ** 2 * power)))
        return js, vals
    blocks, idx = [], []
    for i, j in enumerate(js):
        c = block_symbol(g, int(j), profile) * z.coeffs
        if np.any(c):
            blocks.append(c)
            idx.append(i)
    per = g.padded_n**g.dim * (g.dim if isinstance(z, VectorField) else 1)
    chunk = max(1, _BATCH_POINTS // per)
    for start in range(0, len(blocks), chunk):
        phys = padded_physical(np.stack(blocks[start:start + chunk]), g)
        if isinstance(z, VectorField):
            phys = np.sqrt(np.sum(phys**2, axis=1))
        for k, v in enumerate(phys):
            vals[idx[start + k]] = lp_norm(v, pf, g)
    return js, vals


_BATCH_POINTS = 1 << 22


def block_table(fields: Iterable, p: Exponent, profile: DyadicProfile = DEFAULT_PROFILE):
    """Block norms of each field in ``fields``: ``(js, table[t, j])``."""
    fields = list(fields)
    if not fields:
        raise DomainError("empty field list")
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise GridMismatchError("snapshots live on different grids")
    js = np.asarray(dyadic_range(grid, profile), dtype=int)
    pf = as_float(p)
    if pf == 2.0 or len(fields) == 1:
        return js, np.array([block_norms(f, p, profile, js)[1] for f in fields])
    # all snapshots of one block in a single batched transform
    vector = isinstance(fields[0], VectorField)
    coeffs = np.stack([f.coeffs for f in fields])
    table = np.zeros((len(fields), len(js)))
    per = grid.padded_n**grid.dim * (grid.dim if vector else 1)
    chunk = max(1, _BATCH_POINTS // per)
    for i, j in enumerate(js):
        sym = block_symbol(grid, int(j), profile)
        if not np.any(sym * grid.resolved):
            continue
        for start in range(0, len(fields), chunk):
            phys = padded_physical(sym * coeffs[start:start + chunk], grid)
            if vector:
                phys = np.sqrt(np.sum(phys**2, axis=1))
            a = np.abs(phys.reshape(phys.shape[0], -1))
            if math.isinf(pf):
                table[start:start + chunk, i] = a.max(axis=1)
            else:
                table[start:start + chunk, i] = (grid.measure_factor * np.mean(a**pf, axis=1)) ** (1.0 / pf)
    return js, table


def _lr(values: np.ndarray, r: Exponent, axis: int = -1) -> np.ndarray:
    v = np.abs(values)
    if r is INF:
        return v.max(axis=axis) if v.shape[axis] else np.zeros(v.shape[:axis] + v.shape[axis + 1:])
    r = float(r)
    return np.sum(v**r, axis=axis) ** (1.0 / r)


def time_lq(times: np.ndarray, values: np.ndarray, q: Exponent, axis: int = 0) -> np.ndarray:
    """Trapezoid L^q(0, T) norm along ``axis`` (``q = inf`` is the sample max)."""
    v = np.abs(values)
    if q is INF:
        return v.max(axis=axis)
    q = float(q)
    if len(times) < 2:
        return np.zeros(np.delete(v.shape, axis)) if v.ndim > 1 else np.float64(0.0)
    return np.trapezoid(v**q, times, axis=axis) ** (1.0 / q)


def _mask(js: np.ndarray, trunc: tuple[str, SplitConfig] | None) -> np.ndarray:
    if trunc is None:
        return np.ones(js.shape, dtype=bool)
    side, cfg = trunc
    low = cfg.is_low(js)
    return low if side == "low" else ~low


def aggregate_besov(js, row, s: float, r: Exponent, trunc=None) -> float:
    m = _mask(js, trunc)
    return float(_lr((2.0 ** (s * js) * row)[m], r))


def aggregate_spacetime(times, js, table, s: float, q: Exponent, r: Exponent,
                        tilde: bool, trunc=None) -> float:
    m = _mask(js, trunc)
    w = (2.0 ** (s * js) * table)[:, m]
    if w.shape[1] == 0:
        return 0.0
    if tilde:
        return float(_lr(time_lq(times, w, q, axis=0), r))
    return float(time_lq(times, _lr(w, r, axis=1), q, axis=0))


def _jr(js, trunc=None):
    m = _mask(np.asarray(js), trunc)
    sel = np.asarray(js)[m]
    return (int(sel.min()), int(sel.max())) if sel.size else None


# ---------------------------------------------------------------------------
# public norms
# ---------------------------------------------------------------------------

def besov_norm(z, spec: BesovSpec, profile: DyadicProfile = DEFAULT_PROFILE, _trunc=None) -> NormValue:
    """``|| 2^{js} ||Delta_j z||_{L^p} ||_{l^r}`` over the resolved blocks."""
    js, row = block_norms(z, spec.p, profile)
    val = aggregate_besov(js, row, spec.s, spec.r, _trunc)
    return NormValue(val, spec, _jr(js, _trunc), {"snapshots": 1})


def spacetime_norm(traj: Trajectory, spec: SpaceTimeSpec, profile: DyadicProfile = DEFAULT_PROFILE,
                   _trunc=None) -> NormValue:
    """Time-Lebesgue norm of Besov norms (``tilde=False``) or the Chemin-Lerner norm."""
    if len(traj) == 0:
        raise DomainError("empty trajectory")
    traj = traj.upto(spec.horizon)
    js, table = block_table(traj.snapshots, spec.base.p, profile)
    val = aggregate_spacetime(traj.times, js, table, spec.base.s, spec.q, spec.base.r, spec.tilde, _trunc)
    meta = {"snapshots": len(traj), "quadrature": "trapezoid",
            "dt_max": float(np.max(np.diff(traj.times))) if len(traj) > 1 else 0.0}
    return NormValue(val, spec, _jr(js, _trunc), meta)


def truncated_norm(obj, spec: TruncatedSpec, profile: DyadicProfile = DEFAULT_PROFILE) -> NormValue:
    """Base norm restricted to the low or high block set of the split."""
    trunc = (spec.side, spec.split)
    if isinstance(obj, Trajectory):
        base = spec.base if isinstance(spec.base, SpaceTimeSpec) else SpaceTimeSpec(spec.base, INF)
        nv = spacetime_norm(obj, base, profile, trunc)
    else:
        if not isinstance(spec.base, BesovSpec):
            raise DomainError("a single field needs a BesovSpec base")
        nv = besov_norm(obj, spec.base, profile, trunc)
    return NormValue(nv.value, spec, nv.j_range, nv.meta)


def intersection_norm(z, specs: Sequence[BesovSpec], profile=DEFAULT_PROFILE) -> NormValue:
    """Norm of an intersection space, taken as the max of the component norms."""
    vals = [besov_norm(z, s, profile) for s in specs]
    best = max(vals, key=lambda v: v.value)
    return NormValue(best.value, tuple(specs), best.j_range, {"components": [v.value for v in vals]})


# ---------------------------------------------------------------------------
# composite norms of the barotropic and full systems
# ---------------------------------------------------------------------------

class _Tables:
    """Lazily computed block tables of named derived fields along a trajectory."""

    def __init__(self, traj: Trajectory, derive: dict[str, Callable], profile: DyadicProfile):
        self.traj = traj
        self.derive = derive
        self.profile = profile
        self._fields: dict[str, list] = {}
        self._tables: dict[tuple, tuple] = {}

    def fields(self, name):
        if name not in self._fields:
            self._fields[name] = [self.derive[name](s) for s in self.traj.snapshots]
        return self._fields[name]

    def table(self, name, p):
        key = (name, as_float(p))
        if key not in self._tables:
            self._tables[key] = block_table(self.fields(name), p, self.profile)
        return self._tables[key]

    def norm(self, name, s, p, r, q, tilde=True, trunc=None):
        js, tab = self.table(name, p)
        return aggregate_spacetime(self.traj.times, js, tab, s, q, r, tilde, trunc)


def _as_traj(obj) -> Trajectory:
    if isinstance(obj, Trajectory):
        return obj
    return Trajectory(np.array([0.0]), (obj,))


def _qu(s):
    return project_Q(s.u)


def _pu(s):
    return project_P(s.u)


def x_norm(traj: Trajectory, eps: float, nu: float, p: float, r: Exponent,
           profile: DyadicProfile = DEFAULT_PROFILE, j0: int = 3, terms: bool = False):
    """Solution-space norm of a barotropic trajectory ``(a, u)``.

    Sum of eight terms with the low/high split at ``alpha = eps * nu``. With
    ``terms=True`` the individual terms are returned in ``meta['terms']``.
    """
    traj = _as_traj(traj)
    d = traj.grid.dim
    et = eps * nu
    lo = ("low", SplitConfig(j0, et))
    hi = ("high", SplitConfig(j0, et))
    T = _Tables(traj, {"a": lambda s: s.a, "Qu": _qu, "Pu": _pu}, profile)
    t = {}
    t["lf_inf"] = T.norm("a", d / 2 - 1, 2, 1, INF, True, lo) + T.norm("Qu", d / 2 - 1, 2, 1, INF, True, lo)
    t["hf_Qu_inf"] = T.norm("Qu", d / p - 1, p, 1, INF, True, hi)
    t["Pu_inf"] = max(T.norm("Pu", d / p - 1, p, r, INF, True), T.norm("Pu", -1, INF, 1, INF, True))
    t["hf_a_inf"] = et * T.norm("a", d / p, p, 1, INF, True, hi)
    t["lf_L1"] = nu * (T.norm("a", d / 2 + 1, 2, 1, 1, False, lo) + T.norm("Qu", d / 2 + 1, 2, 1, 1, False, lo))
    t["hf_Qu_L1"] = nu * T.norm("Qu", d / p + 1, p, 1, 1, False, hi)
    t["Pu_L1"] = nu * max(T.norm("Pu", d / p + 1, p, r, 1, True), T.norm("Pu", 1, INF, 1, 1, True))
    t["hf_a_L1"] = T.norm("a", d / p, p, 1, 1, False, hi) / eps
    val = sum(t.values())
    return NormValue(val, ("X", p, r, eps, nu), None,
                     {"snapshots": len(traj), "terms": t if terms else None})


def c0_functional(a0: SpectralField, u0: VectorField, eps: float, nu: float, p: float, r: Exponent,
                  profile: DyadicProfile = DEFAULT_PROFILE, j0: int = 3, terms: bool = False):
    """Smallness functional of the barotropic data (four terms)."""
    d = a0.grid.dim
    et = eps * nu
    lo = ("low", SplitConfig(j0, et))
    hi = ("high", SplitConfig(j0, et))
    qu, pu = project_Q(u0), project_P(u0)
    ja, ra2 = block_norms(a0, 2, profile)
    _, rq2 = block_norms(qu, 2, profile)
    _, rap = block_norms(a0, p, profile)
    _, rqp = block_norms(qu, p, profile)
    _, rpp = block_norms(pu, p, profile)
    _, rpi = block_norms(pu, INF, profile)
    t = {
        "lf": aggregate_besov(ja, ra2, d / 2 - 1, 1, lo) + aggregate_besov(ja, rq2, d / 2 - 1, 1, lo),
        "hf_Qu": aggregate_besov(ja, rqp, d / p - 1, 1, hi),
        "Pu": max(aggregate_besov(ja, rpp, d / p - 1, r), aggregate_besov(ja, rpi, -1, 1)),
        "hf_a": et * aggregate_besov(ja, rap, d / p, 1, hi),
    }
    return NormValue(sum(t.values()), ("C0", p, r, eps, nu), None, {"terms": t if terms else None})


def y_norm(traj: Trajectory, eps: float, nu: float, p: float,
           profile: DyadicProfile = DEFAULT_PROFILE, j0: int = 3, terms: bool = False):
    """Solution-space norm of a Navier-Stokes-Fourier trajectory ``(a, u, theta)``."""
    traj = _as_traj(traj)
    d = traj.grid.dim
    et = eps * nu
    lo = ("low", SplitConfig(j0, et))
    hi = ("high", SplitConfig(j0, et))
    T = _Tables(traj, {"a": lambda s: s.a, "th": lambda s: s.theta, "Qu": _qu, "Pu": _pu}, profile)
    t = {}
    t["lf_inf"] = sum(T.norm(n, d / 2 - 1, 2, 1, INF, False, lo) for n in ("a", "Qu", "th"))
    t["Pu_hfQu_inf"] = T.norm("Pu", d / p - 1, p, 1, INF, False) + T.norm("Qu", d / p - 1, p, 1, INF, False, hi)
    t["hf_a_inf"] = et * T.norm("a", d / p, p, 1, INF, False, hi)
    t["hf_th_inf"] = T.norm("th", d / p - 2, p, 1, INF, False, hi) / et
    t["lf_L1"] = nu * sum(T.norm(n, d / 2 + 1, 2, 1, 1, False, lo) for n in ("a", "Qu", "th"))
    t["Pu_hfQu_L1"] = nu * (T.norm("Pu", d / p + 1, p, 1, 1, False) + T.norm("Qu", d / p + 1, p, 1, 1, False, hi))
    t["hf_a_th_L1"] = (T.norm("a", d / p, p, 1, 1, False, hi) + T.norm("th", d / p, p, 1, 1, False, hi)) / eps
    return NormValue(sum(t.values()), ("Y", p, eps, nu), None,
                     {"snapshots": len(traj), "terms": t if terms else None})


def y0_functional(a0: SpectralField, u0: VectorField, theta0: SpectralField, eps: float, nu: float,
                  p: float, profile: DyadicProfile = DEFAULT_PROFILE, j0: int = 3, terms: bool = False):
    """Data norm of the Navier-Stokes-Fourier system."""
    d = a0.grid.dim
    et = eps * nu
    lo = ("low", SplitConfig(j0, et))
    hi = ("high", SplitConfig(j0, et))
    qu, pu = project_Q(u0), project_P(u0)
    js, ra2 = block_norms(a0, 2, profile)
    rows = {
        "a2": ra2, "q2": block_norms(qu, 2, profile)[1], "t2": block_norms(theta0, 2, profile)[1],
        "ap": block_norms(a0, p, profile)[1], "qp": block_norms(qu, p, profile)[1],
        "pp": block_norms(pu, p, profile)[1], "tp": block_norms(theta0, p, profile)[1],
    }
    t = {
        "lf": sum(aggregate_besov(js, rows[k], d / 2 - 1, 1, lo) for k in ("a2", "q2", "t2")),
        "Pu_hfQu": aggregate_besov(js, rows["pp"], d / p - 1, 1) + aggregate_besov(js, rows["qp"], d / p - 1, 1, hi),
        "hf_a": et * aggregate_besov(js, rows["ap"], d / p, 1, hi),
        "hf_th": aggregate_besov(js, rows["tp"], d / p - 2, 1, hi) / et,
    }
    return NormValue(sum(t.values()), ("Y0", p, eps, nu), None, {"terms": t if terms else None})
