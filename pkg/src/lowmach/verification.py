"""Invariant suites run by ``lowmach verify``.

Each suite returns a list of :class:`CheckResult`; a check passes when its
measured value is at most its tolerance (fitted-constant checks report the
constant and only require it to be finite).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .besov import INF, Trajectory
from .bony import bony_decompose, check_commutator, check_composition, riesz_symbol
from .littlewood_paley import DEFAULT_PROFILE, block_symbol, delta_j, dyadic_range
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    divergence,
    from_physical,
    gradient,
    project_P,
    project_Q,
    to_physical,
)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if math.isinf(self.tolerance):
            return math.isfinite(self.value)
        return self.value <= self.tolerance

    CSV_HEADER = ("suite", "check", "value", "tolerance", "passed")

    def to_row(self):
        return {"suite": self.suite, "check": self.name, "value": repr(float(self.value)),
                "tolerance": repr(float(self.tolerance)), "passed": int(self.passed)}


def random_field(grid: Grid, rng: np.random.Generator, kmax: float | None = None, mean: bool = True) -> SpectralField:
    """Random real band-limited field (all resolved modes, or ``|xi| <= kmax``)."""
    shape = grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = grid.resolved if kmax is None else grid.resolved & (grid.xi_norm <= kmax)
    f = from_physical(to_physical(SpectralField(grid, c * mask)), grid)
    if not mean:
        f = f.mean_free()
    return f


def random_vector(grid: Grid, rng, kmax=None) -> VectorField:
    return VectorField.from_components([random_field(grid, rng, kmax) for _ in range(grid.dim)])


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / max(float(np.linalg.norm(np.asarray(b))), 1e-300)


def suite_projectors(n_fields=20, sizes=(32, 64), dims=(2, 3), seed=0):
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in ("P^2=P", "Q^2=Q", "P+Q=Id", "div P=0", "Parseval")}
    for d in dims:
        for n in sizes:
            g = Grid(d, n)
            for _ in range(n_fields):
                v = random_vector(g, rng)
                Pv, Qv = project_P(v), project_Q(v)
                worst["P^2=P"] = max(worst["P^2=P"], _rel(project_P(Pv).coeffs, Pv.coeffs))
                worst["Q^2=Q"] = max(worst["Q^2=Q"], _rel(project_Q(Qv).coeffs, Qv.coeffs))
                worst["P+Q=Id"] = max(worst["P+Q=Id"], _rel((Pv + Qv).coeffs, v.coeffs))
                div = divergence(Pv).coeffs
                worst["div P=0"] = max(worst["div P=0"], float(np.linalg.norm(div)) / (float(np.linalg.norm(gradient(v.components[0]).coeffs)) + 1e-300))
                f = v.components[0]
                phys = math.sqrt(np.mean(to_physical(f) ** 2))
                worst["Parseval"] = max(worst["Parseval"], abs(phys - f.l2()) / f.l2())
    return [CheckResult("projectors", k, v, 1e-12) for k, v in worst.items()]


def suite_littlewood_paley(sizes=(32, 64), dims=(2, 3), seed=0):
    rng = np.random.default_rng(seed)
    pu = rec = orth = 0.0
    for d in dims:
        for n in sizes:
            g = Grid(d, n)
            js = dyadic_range(g)
            total = sum(block_symbol(g, j) for j in js)
            m = g.resolved & (g.xi_norm > 0)
            pu = max(pu, float(np.max(np.abs(total[m] - 1.0))))
            z = random_field(g, rng)
            s = sum(delta_j(z, j).coeffs for j in js)
            rec = max(rec, _rel(s, z.mean_free().coeffs))
            for j in js:
                for k in js:
                    if abs(j - k) >= 2:
                        c = delta_j(delta_j(z, j), k).coeffs
                        orth = max(orth, float(np.max(np.abs(c))) / float(np.max(np.abs(z.coeffs))))
    return [CheckResult("littlewood_paley", "partition of unity", pu, 1e-10),
            CheckResult("littlewood_paley", "reconstruction", rec, 1e-12),
            CheckResult("littlewood_paley", "near orthogonality", orth, 1e-13)]


def suite_bony(n_pairs=20, n=64, seed=0):
    rng = np.random.default_rng(seed)
    g = Grid(2, n)
    worst = 0.0
    for _ in range(n_pairs):
        u = random_field(g, rng, kmax=n / 3)
        v = random_field(g, rng, kmax=n / 3)
        worst = max(worst, bony_decompose(u, v).meta["residual"])
    return [CheckResult("bony", "identity residual", worst, 1e-12)]


def suite_heat(n_cases=10, n=32, seed=0):
    from .solvers import verify_heat_estimate

    rng = np.random.default_rng(seed)
    g = Grid(2, n)
    times = np.linspace(0.0, 1.0, 41)
    cases = []
    for _ in range(n_cases):
        z0 = random_field(g, rng, kmax=n / 4, mean=False)
        f0 = random_field(g, rng, kmax=n / 4, mean=False)
        f = Trajectory(times, tuple(f0 * math.cos(2 * t) for t in times))
        cases.append((z0, f))
    out = []
    for m in (1, 2, INF):
        rep = verify_heat_estimate(cases, 1.0, m, 0.0, 2.0, 1.0)
        out.append(CheckResult("heat", f"constant m={m}", rep.constant, math.inf))
    return out


def suite_commutator(n_samples=10, n=32, seed=0):
    rng = np.random.default_rng(seed)
    g = Grid(2, n)
    pairs = [(random_field(g, rng, kmax=n / 4), random_field(g, rng, kmax=n / 4)) for _ in range(n_samples)]
    rep = check_commutator(pairs, riesz_symbol(0, 1), j0=2, s=0.5, sigma=0.0, p=2.0, p1=INF, p2=2.0)
    zero = check_commutator([(_const(g, 2.0), pairs[0][1])], riesz_symbol(0, 1), j0=2, s=0.5)
    return [CheckResult("commutator", "fitted constant", rep.constant, math.inf),
            CheckResult("commutator", "constant a gives zero", float(zero.lhs[0]), 1e-13)]


def _const(g, c):
    f = np.zeros(g.spectral_shape, dtype=complex)
    f[g.zero_mode] = c
    return SpectralField(g, f)


def suite_composition(n_samples=10, n=32, seed=0):
    from .solvers import J

    rng = np.random.default_rng(seed)
    g = Grid(2, n)
    samples = []
    for _ in range(n_samples):
        a = random_field(g, rng, kmax=n / 4, mean=False)
        samples.append(a * (0.3 / float(np.max(np.abs(to_physical(a))))))
    rep = check_composition(samples, J, 1.0, 2.0)
    ident = check_composition(samples[:3], lambda z: z, 1.0, 2.0)
    return [CheckResult("composition", "fitted constant J", rep.constant, math.inf),
            CheckResult("composition", "identity ratio - 1", abs(ident.constant - 1.0), 1e-12)]


def suite_scaling(n=32, seed=0):
    from .solvers import BaroState, PhysicalParams, StepperConfig, integrate_baro, rescale_data, rescale_solution, rescaled_stepper

    rng = np.random.default_rng(seed)
    g = Grid(2, n, 1.0, normalized=False)
    a = random_field(g, rng, kmax=4, mean=False)
    a = a * (0.2 / float(np.max(np.abs(to_physical(a)))))
    u = random_vector(g, rng, kmax=4)
    u = u * (0.2 / float(np.max(np.abs(u.physical()))))
    p = PhysicalParams(0.5, 0.4, 0.2)
    cfg = StepperConfig(dt=2e-3)
    s0 = BaroState(0.0, a, u, p)
    A = rescale_solution(integrate_baro(s0, 0.1, cfg)).snapshots[-1].pack()
    B = integrate_baro(rescale_data(s0), 0.1 / (p.eps**2 * p.nu), rescaled_stepper(cfg, p)).snapshots[-1].pack()
    return [CheckResult("scaling", "solve-rescale vs rescale-solve", _rel(A, B), 1e-8)]


def suite_admissibility():
    from .harness import admissible

    table = [((3, 4, 1, None), True), ((3, 4.5, 1, None), False), ((2, 4, 1, 0.25), False),
             ((2, 3, 1, 0.5), True), ((2, 3, 3, 0.5), True), ((2, 3, 3.5, 0.5), False)]
    bad = sum(admissible(*args) != ok for args, ok in table)
    return [CheckResult("admissibility", "table mismatches", bad, 0)]


SUITES: dict[str, Callable] = {
    "projectors": suite_projectors,
    "littlewood_paley": suite_littlewood_paley,
    "bony": suite_bony,
    "heat": suite_heat,
    "commutator": suite_commutator,
    "composition": suite_composition,
    "scaling": suite_scaling,
    "admissibility": suite_admissibility,
}


def run_suites(names, n: int | None = None) -> list[CheckResult]:
    out = []
    for name in names:
        fn = SUITES[name]
        if n is not None and name in ("bony", "heat", "commutator", "composition", "scaling"):
            out.extend(fn(n=n))
        else:
            out.extend(fn())
    return out


def write_ledger(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CheckResult.CSV_HEADER)
        w.writeheader()
        for r in results:
            w.writerow(r.to_row())
