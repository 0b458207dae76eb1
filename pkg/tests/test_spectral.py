import numpy as np
import pytest

from lowmach.errors import DimensionError, SingularSymbolError, ZeroModeError
from lowmach.spectral import (
    FourierMultiplier,
    Grid,
    SpectralField,
    VectorField,
    apply_multiplier,
    divergence,
    from_physical,
    gradient,
    inv_laplacian,
    laplacian,
    load_checkpoint,
    multiply,
    project_P,
    project_Q,
    save_checkpoint,
    to_physical,
    vector_from_physical,
)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("dim", [2, 3])
def test_round_trip(dim, rng):
    g = Grid(dim, 16, 1.7)
    x = rng.standard_normal(g.shape)
    f = from_physical(x, g)
    assert rel(from_physical(to_physical(f), g).coeffs, f.coeffs) < 1e-13


def test_constant_is_single_coefficient():
    g = Grid(2, 16)
    f = from_physical(np.ones(g.shape), g)
    c = f.coeffs.copy()
    assert abs(c[g.zero_mode] - 1) < 1e-15
    c[g.zero_mode] = 0
    assert np.max(np.abs(c)) < 1e-15


def test_cosine_coefficients():
    g = Grid(2, 16)
    x1, _ = g.coordinates
    f = from_physical(np.cos(x1), g)
    c = f.coeffs.copy()
    assert abs(c[1, 0] - 0.5) < 1e-15 and abs(c[-1, 0] - 0.5) < 1e-15
    c[1, 0] = c[-1, 0] = 0
    assert np.max(np.abs(c)) < 1e-15


def test_nyquist_zeroed():
    g = Grid(2, 8)
    x1, _ = g.coordinates
    f = from_physical(np.cos(4 * x1), g)
    assert np.max(np.abs(f.coeffs)) < 1e-15


def test_grid_validation():
    with pytest.raises(DimensionError):
        Grid(4, 16)
    with pytest.raises(DimensionError):
        Grid(2, 12)
    with pytest.raises(DimensionError):
        Grid(2, 16, -1.0)


def test_multiplier_identity_and_eigen(rng, rand_field):
    g = Grid(2, 16, 2.0)
    f = rand_field(g, rng)
    one = FourierMultiplier(lambda xi: 1.0)
    assert rel(apply_multiplier(one, f).coeffs, f.coeffs) < 1e-15
    lap = FourierMultiplier(lambda xi: sum(x**2 for x in xi))
    x1, x2 = g.coordinates
    mode = from_physical(np.cos((3 * x1 + x2) / g.scale), g)
    out = apply_multiplier(lap, mode)
    assert rel(out.coeffs, (10 / 4.0) * mode.coeffs) < 1e-14


def test_multiplier_inverse_and_singular(rng, rand_field):
    g = Grid(2, 16)
    f = rand_field(g, rng, mean=False)
    inv = FourierMultiplier(lambda xi: 1 / sum(x**2 for x in xi), zero_value=0.0)
    assert rel(apply_multiplier(inv, f).coeffs, -inv_laplacian(f).coeffs) < 1e-14
    with pytest.raises(SingularSymbolError):
        FourierMultiplier(lambda xi: 1 / sum(x**2 for x in xi)).evaluate(g)


@pytest.mark.parametrize("dim", [2, 3])
def test_operator_identities(dim, rng, rand_field):
    g = Grid(dim, 16, 1.3)
    f = rand_field(g, rng)
    assert rel(divergence(gradient(f)).coeffs, laplacian(f).coeffs) < 1e-13
    assert rel(inv_laplacian(laplacian(f)).coeffs, f.mean_free().coeffs) < 1e-13
    with pytest.raises(ZeroModeError):
        inv_laplacian(SpectralField(g, f.coeffs + (np.arange(f.coeffs.size) == 0).reshape(f.coeffs.shape)))


def test_gradient_of_sine():
    g = Grid(2, 16)
    x1, _ = g.coordinates
    gr = gradient(from_physical(np.sin(x1), g)).physical()
    assert np.max(np.abs(gr[0] - np.cos(x1))) < 1e-14
    assert np.max(np.abs(gr[1])) < 1e-14


def test_projectors(rng, rand_field, rand_vector):
    g = Grid(2, 16)
    f = rand_field(g, rng)
    v = gradient(f)
    assert np.max(np.abs(project_P(v).coeffs)) < 1e-13
    assert rel(project_Q(v).coeffs, v.coeffs) < 1e-14
    _, x2 = g.coordinates
    w = vector_from_physical([np.sin(x2), 0.0], g)
    assert np.max(np.abs(divergence(w).coeffs)) < 1e-15
    assert rel(project_P(w).coeffs, w.coeffs) < 1e-15
    u = rand_vector(g, rng)
    assert rel((project_P(u) + project_Q(u)).coeffs, u.coeffs) < 1e-13
    assert rel(project_P(project_P(u)).coeffs, project_P(u).coeffs) < 1e-13


def test_multiply_dealiased_exact():
    g = Grid(2, 16)
    x1, x2 = g.coordinates
    f = from_physical(np.cos(3 * x1), g)
    h = from_physical(np.sin(4 * x2), g)
    prod = multiply(f, h).physical()
    assert np.max(np.abs(prod - np.cos(3 * x1) * np.sin(4 * x2))) < 1e-14


def test_lebesgue_measure():
    g = Grid(2, 16, 2.0, normalized=False)
    f = from_physical(np.ones(g.shape), g)
    assert abs(f.l2() - np.sqrt(g.volume)) < 1e-12
    assert abs(Grid(2, 16, 2.0).volume - (2 * np.pi * 2.0) ** 2) < 1e-12


def test_checkpoint_round_trip(tmp_path, rng, rand_field):
    g = Grid(3, 8, 0.75)
    fs = [rand_field(g, rng) for _ in range(4)]
    path = tmp_path / "x.mach"
    save_checkpoint(path, fs, t=1.5, eps=0.1, nu=2.0)
    back, meta = load_checkpoint(path)
    assert len(back) == 4 and back[0].grid == g
    assert all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(fs, back))
    assert meta == {"t": 1.5, "eps": 0.1, "nu": 2.0}


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.mach"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(DimensionError):
        load_checkpoint(path)


def test_grid_mismatch(rng, rand_field):
    a = rand_field(Grid(2, 16), rng)
    b = rand_field(Grid(2, 32), rng)
    with pytest.raises(Exception):
        multiply(a, b)
