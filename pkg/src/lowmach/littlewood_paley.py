"""Homogeneous dyadic decomposition on the periodic grid.

The low-pass profile ``chi`` equals 1 on ``[0, 3/4]``, vanishes on
``[4/3, inf)`` and decreases in between; the annular profile is
``phi(r) = chi(r/2) - chi(r)``, supported in ``[3/4, 8/3]``. Block ``j``
multiplies the coefficient at frequency ``xi`` by ``phi(2^-j |xi|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import Grid, SpectralField, VectorField

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0


def _psi(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _chi_smooth(rho):
    rho = np.asarray(rho, dtype=np.float64)
    u = np.clip((rho - CHI_INNER) / (CHI_OUTER - CHI_INNER), 0.0, 1.0)
    a, b = _psi(u), _psi(1.0 - u)
    return b / (a + b)


def _chi_linear(rho):
    rho = np.asarray(rho, dtype=np.float64)
    return np.clip((CHI_OUTER - rho) / (CHI_OUTER - CHI_INNER), 0.0, 1.0)


_PROFILES = {"smooth": _chi_smooth, "linear": _chi_linear}


@dataclass(frozen=True)
class DyadicProfile:
    """Cutoff pair ``(chi, phi)``.

    ``kind='smooth'`` (default) glues 1 to 0 with the ``exp(-1/u)`` C-infinity
    transition; ``kind='linear'`` is a Lipschitz alternative for studying how
    constants in the checked inequalities depend on the cutoff.
    """

    kind: str = "smooth"

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise ValueError(f"unknown profile kind {self.kind!r}; choose from {sorted(_PROFILES)}")

    def chi(self, rho):
        return _PROFILES[self.kind](rho)

    def phi(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        return self.chi(rho / 2.0) - self.chi(rho)


DEFAULT_PROFILE = DyadicProfile()


@dataclass(frozen=True)
class SplitConfig:
    """Low/high threshold: block ``j`` is low iff ``2^j * alpha <= 2^j0``."""

    j0: int = 3
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @property
    def last_low(self) -> int:
        """Largest low index, ``floor(j0 - log2 alpha)``."""
        x = self.j0 - math.log2(self.alpha)
        r = round(x)
        return int(r) if abs(x - r) < 1e-9 else math.floor(x)

    def is_low(self, j) -> np.ndarray:
        return np.asarray(j) <= self.last_low


# ---------------------------------------------------------------------------
# symbol banks (cached per grid)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def dyadic_range(grid: Grid, profile: DyadicProfile = DEFAULT_PROFILE) -> tuple[int, ...]:
    """Indices ``j`` whose block contains at least one resolved nonzero mode."""
    r = grid.xi_norm[grid.resolved & (grid.xi_norm > 0)]
    lo = math.floor(math.log2(r.min() / (8.0 / 3.0))) - 1
    hi = math.ceil(math.log2(r.max() / CHI_INNER)) + 1
    out = []
    for j in range(lo, hi + 1):
        if np.any(profile.phi(r * 2.0**-j) > 0):
            out.append(j)
    return tuple(out)


@lru_cache(maxsize=512)
def _block_symbol(grid: Grid, j: int, profile: DyadicProfile) -> np.ndarray:
    s = profile.phi(grid.xi_norm * 2.0**-j)
    s[grid.zero_mode] = 0.0
    s = s * grid.resolved
    s.flags.writeable = False
    return s


@lru_cache(maxsize=512)
def _lowpass_symbol(grid: Grid, j: int, profile: DyadicProfile) -> np.ndarray:
    s = profile.chi(grid.xi_norm * 2.0**-j) * grid.resolved
    s.flags.writeable = False
    return s


def block_symbol(grid: Grid, j: int, profile: DyadicProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Symbol of block ``j`` on the grid's half spectrum (zero mode removed)."""
    return _block_symbol(grid, int(j), profile)


def lowpass_symbol(grid: Grid, j: int, profile: DyadicProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Symbol ``chi(2^-j |xi|)`` (keeps the zero mode)."""
    return _lowpass_symbol(grid, int(j), profile)


def _apply(f, s):
    return type(f)(f.grid, s * f.coeffs)


def delta_j(z: SpectralField | VectorField, j: int, profile: DyadicProfile = DEFAULT_PROFILE):
    """Dyadic block ``phi(2^-j D) z``; the zero field outside the resolved range."""
    return _apply(z, block_symbol(z.grid, j, profile))


def s_j(z: SpectralField | VectorField, j: int, profile: DyadicProfile = DEFAULT_PROFILE):
    """Low-frequency cutoff ``chi(2^-j D) z``."""
    return _apply(z, lowpass_symbol(z.grid, j, profile))


def side_symbol(grid: Grid, cfg: SplitConfig, side: str,
                profile: DyadicProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Sum of the block symbols on one side of the split."""
    js = dyadic_range(grid, profile)
    out = np.zeros(grid.spectral_shape)
    for j in js:
        if (side == "low") == bool(cfg.is_low(j)):
            out = out + block_symbol(grid, j, profile)
    return out


def split_low_high(z, cfg: SplitConfig, profile: DyadicProfile = DEFAULT_PROFILE):
    """Return ``(z_low, z_high)``; their sum is ``z`` minus its mean."""
    low = side_symbol(z.grid, cfg, "low", profile)
    high = side_symbol(z.grid, cfg, "high", profile)
    return _apply(z, low), _apply(z, high)


def dyadic_index(xi_norm: float) -> int:
    """Index of the block whose plateau ``[4/3, 3/2] 2^j`` is nearest to ``|xi|``."""
    return int(round(math.log2(xi_norm / 1.4)))
