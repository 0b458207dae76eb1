import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowmach.besov import INF
from lowmach.bony import (
    InequalityReport,
    bony_decompose,
    check_commutator,
    check_composition,
    commutator,
    commutator_terms,
    compose,
    paraproduct,
    paraproduct_terms,
    remainder,
    report,
    riesz_symbol,
)
from lowmach.errors import DomainError, RangeError
from lowmach.littlewood_paley import dyadic_range
from lowmach.solvers import J
from lowmach.spectral import Grid, SpectralField, from_physical, multiply
from lowmach.verification import random_field


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def const(g, c):
    return from_physical(np.full(g.shape, c), g)


def test_constant_paraproduct(rng):
    g = Grid(2, 32)
    v = random_field(g, rng)
    out = paraproduct(const(g, 2.5), v)
    assert rel(out.coeffs, 2.5 * v.mean_free().coeffs) < 1e-13
    parts = bony_decompose(const(g, 2.5), v)
    assert np.max(np.abs(parts.T_vu.coeffs)) < 1e-14
    assert np.max(np.abs(parts.R_uv.coeffs)) < 1e-14
    assert parts.mean_ledger == pytest.approx(2.5 * v.mean)


def test_separated_modes():
    g = Grid(2, 128, 1.0 / 1.4)
    x1, x2 = g.coordinates
    u = from_physical(np.cos(x1 / g.scale), g)
    v = from_physical(np.cos(32 * x2 / g.scale), g)
    parts = bony_decompose(u, v)
    prod = multiply(u, v)
    assert rel(parts.T_uv.coeffs, prod.mean_free().coeffs) < 1e-13
    assert np.max(np.abs(parts.T_vu.coeffs)) < 1e-14
    assert np.max(np.abs(parts.R_uv.coeffs)) < 1e-14


def test_spectral_localization(rng):
    g = Grid(2, 64)
    u, v = random_field(g, rng, 20), random_field(g, rng, 20)
    r = g.xi_norm
    for j, term in paraproduct_terms(u, v):
        rho = r * 2.0**-j
        outside = (rho < 1 / 12) | (rho > 10 / 3)
        c = term.coeffs
        tot = np.sum(np.abs(c) ** 2)
        if tot > 0:
            assert np.sum(np.abs(c[outside]) ** 2) <= 1e-24 * max(tot, 1.0)


def test_remainder_examples(rng):
    g = Grid(2, 128, 1.0 / 1.4)
    x1, x2 = g.coordinates
    u = from_physical(np.cos(x1 / g.scale), g)
    v = from_physical(np.cos(8 * x2 / g.scale), g)
    assert np.max(np.abs(remainder(u, v).coeffs)) < 1e-15
    # u = v: R is what the exact product leaves after the paraproducts
    w = random_field(Grid(2, 32), rng, 8)
    parts = bony_decompose(w, w)
    assert rel(parts.T_uv.coeffs, parts.T_vu.coeffs) < 1e-14
    direct = multiply(w, w).coeffs - 2 * parts.T_uv.coeffs
    direct[w.grid.zero_mode] -= w.mean**2
    assert rel(parts.R_uv.coeffs, direct) < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_identity_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    g = Grid(2, 32)
    u, v = random_field(g, rng, 10), random_field(g, rng, 10)
    assert bony_decompose(u, v).meta["residual"] < 1e-12
    assert rel(remainder(u, v).coeffs, remainder(v, u).coeffs) < 1e-13


def test_report_api():
    rep = report("x", [(1.0, 2.0), (3.0, 2.0), (0.0, 0.0)], p=2)
    assert rep.constant == 1.5 and rep.argmax == 1 and rep.samples == 3
    merged = rep.merge(report("x", [(9.0, 1.0)]))
    assert merged.constant == 9.0 and merged.samples == 4
    assert tuple(rep.to_row()) == InequalityReport.CSV_HEADER


def test_commutator_constant_a(rng):
    g = Grid(2, 32)
    b = random_field(g, rng, 8)
    lhs, _ = commutator_terms(const(g, 3.0), b, 0.5, 0.0, 2.0, INF, 2.0, riesz_symbol(0, 1), 2)
    assert lhs < 1e-13


def test_commutator_separated_blocks():
    g = Grid(2, 128, 1.0 / 1.4)
    x1, x2 = g.coordinates
    a = from_physical(np.cos(x1 / g.scale), g)
    b = from_physical(np.cos(32 * x2 / g.scale), g)
    c = commutator(a, b, None, j0=1)
    assert np.max(np.abs(c.coeffs)) < 1e-15


def test_commutator_domain(rng):
    g = Grid(2, 16)
    a, b = random_field(g, rng), random_field(g, rng)
    with pytest.raises(DomainError):
        commutator_terms(a, b, 0.5, 0.0, 2.0, 4.0, 2.0)
    with pytest.raises(DomainError):
        commutator_terms(a, b, 1.5, 0.0, 2.0, INF, 2.0)
    rep = check_commutator([(a, b)], riesz_symbol(0, 1), 1, s=1.0)
    assert np.isfinite(rep.constant)


def test_composition_examples(rng):
    g = Grid(2, 32)
    a = random_field(g, rng, 6, mean=False)
    a = a * (0.3 / np.max(np.abs(a.physical())))
    rep = check_composition([a], lambda z: z, 1.0)
    assert abs(rep.constant - 1) < 1e-13
    assert np.isfinite(check_composition([a], J, 1.0).constant)
    x1, _ = g.coordinates
    m = from_physical(0.4 * np.cos(3 * x1), g)
    sq = compose(m, lambda z: z**2)
    assert np.max(np.abs(sq.physical() - 0.08 * (1 + np.cos(6 * x1)))) < 1e-15
    with pytest.raises(RangeError):
        compose(a * 3.0, J, (-0.5, 0.5))
    with pytest.raises(DomainError):
        check_composition([a], J, 0.0)
