"""Periodic-box Fourier representation of scalar and vector fields.

Fields live on the box ``[0, 2*pi*L)^d`` sampled by ``N`` points per axis and
are stored as half-spectrum (``rfftn``) coefficients ``c(k)`` such that

    f(x) = sum_k c(k) exp(i k.x / L),

so the physical frequency of the integer wavevector ``k`` is ``xi = k / L``.
Nyquist modes are kept at zero so every odd-order symbol maps real fields to
real fields. Every operator here is a Fourier multiplier; products are
evaluated on a 3/2 zero-padded grid and truncated back.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, GridMismatchError, SingularSymbolError, ZeroModeError

__all__ = [
    "Grid",
    "SpectralField",
    "VectorField",
    "FourierMultiplier",
    "from_physical",
    "to_physical",
    "vector_from_physical",
    "apply_multiplier",
    "gradient",
    "divergence",
    "laplacian",
    "inv_laplacian",
    "project_P",
    "project_Q",
    "multiply",
    "compose_pointwise",
    "lp_norm",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid.

    Parameters
    ----------
    dim : int
        Space dimension, 2 or 3.
    n : int
        Points per axis, a power of two no smaller than 8.
    scale : float
        Box scale ``L``; the box is ``[0, 2*pi*L)^dim``.
    normalized : bool
        If True (default) the box carries total measure one, so that
        ``||exp(i k.x/L)||_{L^p} = 1`` for every ``p``. Otherwise Lebesgue
        measure is used, which makes dilations behave as on ``R^d``.
    """

    dim: int
    n: int
    scale: float = 1.0
    normalized: bool = True

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DimensionError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise DimensionError(f"n must be a power of two >= 8, got {self.n}")
        if not self.scale > 0:
            raise DimensionError(f"scale must be positive, got {self.scale}")

    # -- shapes -------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def padded_n(self) -> int:
        return 3 * self.n // 2

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return (self.padded_n,) * self.dim

    @property
    def volume(self) -> float:
        return (2 * np.pi * self.scale) ** self.dim

    @property
    def measure_factor(self) -> float:
        """Total measure of the box under the chosen normalization."""
        return 1.0 if self.normalized else self.volume

    def with_(self, **changes) -> "Grid":
        """Return a copy with some fields replaced."""
        params = dict(dim=self.dim, n=self.n, scale=self.scale, normalized=self.normalized)
        params.update(changes)
        return Grid(**params)

    # -- wavevectors -------------------------------------------------------
    @cached_property
    def k(self) -> tuple[np.ndarray, ...]:
        """Integer wavevector components, broadcastable to ``spectral_shape``."""
        out = []
        for axis in range(self.dim):
            if axis < self.dim - 1:
                ki = np.fft.fftfreq(self.n, 1.0 / self.n)
            else:
                ki = np.fft.rfftfreq(self.n, 1.0 / self.n)
            shape = [1] * self.dim
            shape[axis] = ki.size
            out.append(np.rint(ki).astype(np.int64).reshape(shape))
        return tuple(out)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Physical frequency components ``k / L``."""
        return tuple(ki / self.scale for ki in self.k)

    @cached_property
    def xi_norm2(self) -> np.ndarray:
        out = np.zeros(self.spectral_shape)
        for xi in self.xi:
            out = out + xi**2
        return out

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_norm2)

    @cached_property
    def resolved(self) -> np.ndarray:
        """Boolean mask of modes kept by the representation (no Nyquist)."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k:
            mask = mask & (np.abs(ki) < self.n // 2)
        return mask

    @cached_property
    def zero_mode(self) -> tuple[int, ...]:
        return (0,) * self.dim

    @cached_property
    def hermitian_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w * self.resolved

    @cached_property
    def xi_min(self) -> float:
        return 1.0 / self.scale

    @cached_property
    def xi_max(self) -> float:
        return float(np.max(self.xi_norm[self.resolved]))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Physical sample coordinates, broadcastable to ``shape``."""
        x = 2 * np.pi * self.scale * np.arange(self.n) / self.n
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n
            out.append(x.reshape(shape))
        return tuple(out)

    # -- padding index maps --------------------------------------------------
    @cached_property
    def _pad_index(self):
        n, m = self.n, self.padded_n
        h = n // 2
        src_full = np.concatenate([np.arange(0, h), np.arange(h + 1, n)])
        dst_full = np.concatenate([np.arange(0, h), np.arange(m - h + 1, m)])
        src_last = np.arange(0, h)
        src = [src_full] * (self.dim - 1) + [src_last]
        dst = [dst_full] * (self.dim - 1) + [src_last]
        return np.ix_(*src), np.ix_(*dst)


def _check_grid(*objs):
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {o.grid}")
    return grid


def _frozen(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real scalar field stored by its Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.spectral_shape:
            raise DimensionError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", _frozen(c))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.spectral_shape, dtype=np.complex128))

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.grid.zero_mode].real)

    def mean_free(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[self.grid.zero_mode] = 0.0
        return SpectralField(self.grid, c)

    def physical(self) -> np.ndarray:
        return to_physical(self)

    def l2(self) -> float:
        """L^2 norm computed from the coefficients (Parseval)."""
        g = self.grid
        return float(np.sqrt(g.measure_factor * np.sum(g.hermitian_weights * np.abs(self.coeffs) ** 2)))

    def _lift(self, other):
        if isinstance(other, SpectralField):
            _check_grid(self, other)
            return other.coeffs
        return other

    def __add__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField(self.grid, self.coeffs + self._lift(other))
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField(self.grid, self.coeffs - self._lift(other))
        return NotImplemented

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return SpectralField(self.grid, self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return SpectralField(self.grid, self.coeffs / other)
        return NotImplemented


@dataclass(frozen=True, eq=False)
class VectorField:
    """``dim`` real components on a shared grid; ``coeffs`` has a leading component axis."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        expected = (self.grid.dim,) + self.grid.spectral_shape
        if c.shape != expected:
            raise DimensionError(f"coefficient shape {c.shape} does not match {expected}")
        object.__setattr__(self, "coeffs", _frozen(c))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.spectral_shape, dtype=np.complex128))

    @classmethod
    def from_components(cls, comps: Sequence[SpectralField]) -> "VectorField":
        grid = _check_grid(*comps)
        if len(comps) != grid.dim:
            raise DimensionError(f"need {grid.dim} components, got {len(comps)}")
        return cls(grid, np.stack([c.coeffs for c in comps]))

    @property
    def components(self) -> tuple[SpectralField, ...]:
        return tuple(SpectralField(self.grid, c) for c in self.coeffs)

    def physical(self) -> np.ndarray:
        g = self.grid
        return sfft.irfftn(self.coeffs * g.n**g.dim, s=g.shape, axes=tuple(range(1, g.dim + 1)))

    def l2(self) -> float:
        g = self.grid
        return float(np.sqrt(g.measure_factor * np.sum(g.hermitian_weights * np.abs(self.coeffs) ** 2)))

    def __add__(self, other):
        if isinstance(other, VectorField):
            _check_grid(self, other)
            return VectorField(self.grid, self.coeffs + other.coeffs)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, VectorField):
            _check_grid(self, other)
            return VectorField(self.grid, self.coeffs - other.coeffs)
        return NotImplemented

    def __neg__(self):
        return VectorField(self.grid, -self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return VectorField(self.grid, self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__


Field = SpectralField | VectorField


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def _broadcast(values, shape):
    """Real samples broadcast to ``shape`` (sparse coordinate arrays are accepted)."""
    values = np.asarray(values, dtype=np.float64)
    try:
        return np.broadcast_to(values, shape)
    except ValueError:
        raise DimensionError(f"array shape {values.shape} does not match grid {shape}") from None


def from_physical(values: np.ndarray, grid: Grid) -> SpectralField:
    """Fourier coefficients of a real array sampled on ``grid``.

    Nyquist modes are discarded, so the result is exactly the coefficient
    set of a real trigonometric polynomial.
    """
    values = _broadcast(values, grid.shape)
    c = sfft.rfftn(values) / grid.n**grid.dim
    c[~grid.resolved] = 0.0
    return SpectralField(grid, c)


def vector_from_physical(values: np.ndarray, grid: Grid) -> VectorField:
    values = np.stack([_broadcast(v, grid.shape) for v in values]) if len(values) == grid.dim else values
    values = _broadcast(values, (grid.dim,) + grid.shape)
    c = sfft.rfftn(values, axes=tuple(range(1, grid.dim + 1))) / grid.n**grid.dim
    c[:, ~grid.resolved] = 0.0
    return VectorField(grid, c)


def to_physical(f: Field) -> np.ndarray:
    """Sample values of ``f`` on its grid (component axis first for vectors)."""
    if isinstance(f, VectorField):
        return f.physical()
    g = f.grid
    return sfft.irfftn(f.coeffs * g.n**g.dim, s=g.shape)


def pad(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Embed coefficients (optionally with leading axes) into the 3/2 padded spectrum."""
    src, dst = grid._pad_index
    m = grid.padded_n
    lead = coeffs.shape[: coeffs.ndim - grid.dim]
    out = np.zeros(lead + (m,) * (grid.dim - 1) + (m // 2 + 1,), dtype=np.complex128)
    ell = (slice(None),) * len(lead)
    out[ell + dst] = coeffs[ell + src]
    return out


def unpad(coeffs_padded: np.ndarray, grid: Grid) -> np.ndarray:
    src, dst = grid._pad_index
    lead = coeffs_padded.shape[: coeffs_padded.ndim - grid.dim]
    out = np.zeros(lead + grid.spectral_shape, dtype=np.complex128)
    ell = (slice(None),) * len(lead)
    out[ell + src] = coeffs_padded[ell + dst]
    return out


def padded_physical(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Values on the 3/2 padded grid of coefficients ``coeffs`` (leading axes allowed)."""
    m = grid.padded_n
    axes = tuple(range(coeffs.ndim - grid.dim, coeffs.ndim))
    return sfft.irfftn(pad(coeffs, grid) * m**grid.dim, s=(m,) * grid.dim, axes=axes)


def from_padded_physical(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Truncated coefficients of values given on the padded grid."""
    m = grid.padded_n
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    return unpad(sfft.rfftn(values, axes=axes) / m**grid.dim, grid)


def lp_norm(values: np.ndarray, p: float, grid: Grid) -> float:
    """L^p norm of samples of a scalar field on a uniform grid (any resolution)."""
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((grid.measure_factor * np.mean(a**p)) ** (1.0 / p))


# ---------------------------------------------------------------------------
# multipliers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierMultiplier:
    """Fourier multiplier with a scalar or ``dim x dim`` matrix symbol.

    ``symbol`` receives the tuple of frequency component arrays ``xi`` and
    returns either an array broadcastable to the spectral shape or, when
    ``matrix`` is True, an array of shape ``(dim, dim, *spectral_shape)``.
    ``zero_value`` is used at ``xi = 0`` (required when the symbol is not
    finite there).
    """

    symbol: Callable[[tuple[np.ndarray, ...]], np.ndarray]
    zero_value: complex | np.ndarray | None = None
    matrix: bool = False

    def evaluate(self, grid: Grid) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.asarray(self.symbol(grid.xi), dtype=np.complex128)
        if self.matrix:
            s = np.broadcast_to(s, (grid.dim, grid.dim) + grid.spectral_shape).copy()
            z = (slice(None), slice(None)) + grid.zero_mode
        else:
            s = np.broadcast_to(s, grid.spectral_shape).copy()
            z = grid.zero_mode
        if self.zero_value is not None:
            s[z] = self.zero_value
        bad = ~np.isfinite(s)
        if self.matrix:
            bad = bad.any(axis=(0, 1))
        bad &= grid.resolved
        if bad[grid.zero_mode]:
            raise SingularSymbolError("symbol undefined at xi = 0 and no zero_value given")
        if bad.any():
            raise SingularSymbolError(f"symbol undefined at {int(bad.sum())} resolved nonzero modes")
        s[..., ~grid.resolved] = 0.0
        return s


def apply_multiplier(m: FourierMultiplier | np.ndarray, f: Field) -> Field:
    """Coefficientwise product of ``f`` with the symbol of ``m``."""
    grid = f.grid
    s = m.evaluate(grid) if isinstance(m, FourierMultiplier) else np.asarray(m)
    if isinstance(f, SpectralField):
        if s.ndim == grid.dim + 2:
            raise DimensionError("matrix symbol applied to a scalar field")
        return SpectralField(grid, s * f.coeffs)
    if s.ndim == grid.dim + 2:
        return VectorField(grid, np.einsum("ij...,j...->i...", s, f.coeffs))
    return VectorField(grid, s * f.coeffs)


def _ixi(grid: Grid) -> np.ndarray:
    """Stacked ``i*xi`` symbols with Nyquist removed."""
    return np.stack([1j * np.broadcast_to(x, grid.spectral_shape) * grid.resolved for x in grid.xi])


def gradient(f: SpectralField) -> VectorField:
    return VectorField(f.grid, _ixi(f.grid) * f.coeffs)


def divergence(v: VectorField) -> SpectralField:
    return SpectralField(v.grid, np.sum(_ixi(v.grid) * v.coeffs, axis=0))


def laplacian(f: Field) -> Field:
    s = -f.grid.xi_norm2
    return type(f)(f.grid, s * f.coeffs)


def inv_laplacian(f: SpectralField) -> SpectralField:
    """Discrete inverse Laplacian (symbol ``-1/|xi|^2``) of a mean-free field."""
    c0 = abs(f.coeffs[f.grid.zero_mode])
    scale = max(float(np.max(np.abs(f.coeffs))), 1e-300)
    if c0 >= 1e-12 * scale and c0 > 0:
        raise ZeroModeError(f"inv_laplacian needs a mean-free field, mean = {c0:.3e}")
    g = f.grid
    with np.errstate(divide="ignore"):
        s = np.where(g.xi_norm2 > 0, -1.0 / np.where(g.xi_norm2 > 0, g.xi_norm2, 1.0), 0.0)
    return SpectralField(g, s * f.coeffs)


def _unit_xi(grid: Grid) -> np.ndarray:
    r = grid.xi_norm
    safe = np.where(r > 0, r, 1.0)
    return np.stack([np.broadcast_to(x, grid.spectral_shape) / safe * (r > 0) for x in grid.xi])


def project_Q(v: VectorField) -> VectorField:
    """Potential part ``grad Delta^{-1} div v``; annihilates the mean."""
    e = _unit_xi(v.grid)
    return VectorField(v.grid, e * np.sum(e * v.coeffs, axis=0))


def project_P(v: VectorField) -> VectorField:
    """Divergence-free (Leray) part ``v - Q v``; keeps the mean."""
    e = _unit_xi(v.grid)
    return VectorField(v.grid, v.coeffs - e * np.sum(e * v.coeffs, axis=0))


# ---------------------------------------------------------------------------
# nonlinear pointwise operations
# ---------------------------------------------------------------------------

def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased product: padded physical product truncated back to the grid."""
    grid = _check_grid(f, g)
    prod = padded_physical(f.coeffs, grid) * padded_physical(g.coeffs, grid)
    return SpectralField(grid, from_padded_physical(prod, grid))


def compose_pointwise(func: Callable[[np.ndarray], np.ndarray], f: SpectralField) -> SpectralField:
    """Apply ``func`` pointwise on the padded grid and transform back."""
    grid = f.grid
    return SpectralField(grid, from_padded_physical(func(padded_physical(f.coeffs, grid)), grid))


# ---------------------------------------------------------------------------
# binary checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"MACH"
FORMAT_VERSION = 1


def save_checkpoint(path, fields: Sequence[SpectralField], t: float = 0.0, eps: float = 1.0,
                    nu: float = 1.0) -> None:
    """Write scalar fields sharing one grid.

    Layout (little endian): magic ``MACH``, u32 version, u32 d, d x u32 N,
    f64 L, t, eps, nu, then for each field its ``rfftn`` coefficient array in
    C (row-major) order as (re, im) f64 pairs. The component count follows
    from the file size.
    """
    grid = _check_grid(*fields)
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, grid.dim)
    header += struct.pack(f"<{grid.dim}I", *grid.shape)
    header += struct.pack("<4d", grid.scale, t, eps, nu)
    body = np.stack([f.coeffs for f in fields]).astype("<c16", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(body).tobytes(order="C"))


def load_checkpoint(path, normalized: bool = True):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns ``(fields, meta)`` with ``meta`` holding ``t``, ``eps``, ``nu``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise DimensionError(f"{path}: bad magic {raw[:4]!r}")
    version, d = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DimensionError(f"{path}: unsupported format version {version}")
    off = 12
    ns = struct.unpack_from(f"<{d}I", raw, off)
    off += 4 * d
    scale, t, eps, nu = struct.unpack_from("<4d", raw, off)
    off += 32
    if len(set(ns)) != 1:
        raise DimensionError(f"{path}: anisotropic grids are not supported ({ns})")
    grid = Grid(d, ns[0], scale, normalized)
    per_field = int(np.prod(grid.spectral_shape))
    data = np.frombuffer(raw, dtype="<c16", offset=off)
    if data.size % per_field:
        raise DimensionError(f"{path}: truncated coefficient block")
    data = data.reshape((-1,) + grid.spectral_shape).astype(np.complex128)
    fields = [SpectralField(grid, c) for c in data]
    return fields, {"t": t, "eps": eps, "nu": nu}
