"""Data families, epsilon sweeps, rate fits and weak-convergence diagnostics."""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .besov import (
    INF,
    BesovSpec,
    SpaceTimeSpec,
    Trajectory,
    aggregate_besov,
    aggregate_spacetime,
    as_float,
    block_norms,
    block_table,
    c0_functional,
    parse_exponent,
    spacetime_norm,
    y0_functional,
)
from .errors import BlowUpError, DomainError, InsufficientSignalError, PartialResultsError, SpecError
from .littlewood_paley import DEFAULT_PROFILE, DyadicProfile, SplitConfig
from .solvers import (
    BaroState,
    IncState,
    NSFState,
    PhysicalParams,
    StepperConfig,
    ThetaState,
    _propagator,
    integrate_baro,
    integrate_incompressible,
    integrate_nsf,
    integrate_theta_limit,
    unscale_data,
)
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    divergence,
    from_physical,
    gradient,
    load_checkpoint,
    project_P,
    project_Q,
    save_checkpoint,
    to_physical,
)


# ---------------------------------------------------------------------------
# admissibility and targets
# ---------------------------------------------------------------------------

def admissibility_reason(d: int, p: float, r, c: float | None = None) -> str | None:
    """``None`` if ``(d, p, r, c)`` is admissible for the convergence-rate estimates, else the reason."""
    try:
        p = as_float(parse_exponent(p))
        r = as_float(parse_exponent(r))
    except DomainError as err:
        return str(err)
    if d < 2:
        return f"dimension {d} not covered"
    if p < 2:
        return f"p = {p:g} < 2"
    if d == 2:
        if not p < 4:
            return f"d = 2 needs p < 4, got {p:g}"
    elif d == 3:
        if not p <= 4:
            return f"d = 3 needs p <= 4, got {p:g}"
    else:
        pc = 2 * d / (d - 2)
        if p > pc or (p == pc and r != 1):
            return f"d = {d} needs p < {pc:g}, or p = {pc:g} with r = 1"
    if r < 1:
        return f"r = {r:g} < 1"
    rmax = math.inf if p == 2 else p / (p - 2)
    if r > rmax:
        return f"r = {r:g} exceeds p/(p-2) = {rmax:g}"
    if d == 2:
        if c is None:
            return "d = 2 needs the exponent c"
        if not 0 <= c <= 0.5:
            return f"c = {c:g} outside [0, 1/2]"
        cmax = math.inf if p == 2 else (8 - 2 * p) / (p - 2)
        if not c < cmax:
            return f"c = {c:g} must be < (8-2p)/(p-2) = {cmax:g}"
    return None


def admissible(d: int, p: float, r, c: float | None = None) -> bool:
    return admissibility_reason(d, p, r, c) is None


def check_admissible(d, p, r, c=None):
    why = admissibility_reason(d, p, r, c)
    if why is not None:
        raise SpecError(f"inadmissible exponents (d={d}, p={p}, r={r}, c={c}): {why}")


def target_exponent(d: int, p: float, c: float | None = None) -> float:
    """Theoretical rate exponent in ``eps*nu``."""
    if d == 2:
        return c * (0.5 - 1.0 / p)
    return 0.5 - 1.0 / p


def rate_regularity(d: int, p: float, c: float | None = None) -> float:
    """Regularity ``s`` of the ``Ltilde^2 B^s_{p,1}`` acoustic norm."""
    if d == 2:
        return (c + 2) / p - c / 2
    return (d + 1) / p - 0.5


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataSpec:
    """Budget-driven ill-prepared data.

    Budgets are the values of the individual terms of the data functional:
    ``low_acoustic`` for ``||(a0, Qu0)||^l`` in ``B^{d/2-1}_{2,1}`` (split
    between ``a0`` and ``Qu0`` by ``low_a_fraction``), ``high_a`` for
    ``eps~ ||a0||^h`` in ``B^{d/p}_{p,1}``, ``high_Qu`` for ``||Qu0||^h`` in
    ``B^{d/p-1}_{p,1}``, ``Pu`` for ``||Pu0||`` in
    ``B^{d/p-1}_{p,r} cap B^{-1}_{inf,1}``, ``theta_low`` for ``||theta0||^l``
    in ``B^{d/2-1}_{2,1}`` and ``theta_high`` for ``eps~^{-1} ||theta0||^h``
    in ``B^{d/p-2}_{p,1}``. Low components use modes with
    ``|xi| < 1.5 2^{J}`` and high components modes with ``|xi| > (8/3) 2^{J}``,
    ``J`` the last low index, so that each term only sees its own component.
    Per-mode amplitudes are ``|xi|^-envelope`` with random phases, restricted
    to ``band`` (physical frequencies) if given.
    """

    grid: Grid
    p: float = 4.0
    r: float = 1.0
    low_acoustic: float = 0.0
    low_a_fraction: float = 0.5
    high_a: float = 0.0
    high_Qu: float = 0.0
    Pu: float = 0.0
    theta_low: float = 0.0
    theta_high: float = 0.0
    envelope: float = 0.0
    band: tuple[float, float] | None = None
    seed: int = 0
    j0: int = 3
    v0: str = "Pu0"
    Theta0: str = "matched"
    smallness: float | None = None

    def __post_init__(self):
        for name in ("low_acoustic", "high_a", "high_Qu", "Pu", "theta_low", "theta_high"):
            if getattr(self, name) < 0:
                raise SpecError(f"budget {name} must be nonnegative")
        if not 0 <= self.low_a_fraction <= 1:
            raise SpecError("low_a_fraction must lie in [0, 1]")
        if self.v0 not in ("Pu0", "zero"):
            raise SpecError(f"v0 must be 'Pu0' or 'zero', got {self.v0!r}")
        if self.Theta0 not in ("matched", "zero"):
            raise SpecError(f"Theta0 must be 'matched' or 'zero', got {self.Theta0!r}")


@dataclass(frozen=True)
class GeneratedData:
    a0: SpectralField
    u0: VectorField
    theta0: SpectralField | None
    v0: VectorField
    Theta0: SpectralField | None
    norms: dict

    def baro_state(self, params: PhysicalParams) -> BaroState:
        return BaroState(0.0, self.a0, self.u0, params)

    def nsf_state(self, params: PhysicalParams) -> NSFState:
        th = self.theta0 if self.theta0 is not None else SpectralField.zeros(self.a0.grid)
        return NSFState(0.0, self.a0, self.u0, th, params)


def _mode_sets(grid: Grid, cfg: SplitConfig, band):
    r = grid.xi_norm
    base = grid.resolved & (r > 0)
    if band is not None:
        base &= (r >= band[0]) & (r <= band[1])
    J = cfg.last_low
    low = base & (r < 1.5 * 2.0**J)
    high = base & (r > (8.0 / 3.0) * 2.0**J)
    return base, low, high


def _random_scalar(grid, mask, envelope, rng) -> SpectralField:
    shape = grid.spectral_shape
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    r = np.where(grid.xi_norm > 0, grid.xi_norm, 1.0)
    c = c * r ** (-envelope)
    f = from_physical(to_physical(SpectralField(grid, c)), grid)
    return SpectralField(grid, f.coeffs * mask)


def _scaled(f, value, target, name):
    if target == 0:
        return f * 0.0
    if value <= 0:
        raise SpecError(f"budget {name} = {target:g} unreachable: no admissible modes on this grid/band")
    return f * (target / value)


def generate_data(spec: DataSpec, eps: float, nu: float, system: str = "baro",
                  profile: DyadicProfile = DEFAULT_PROFILE) -> GeneratedData:
    """Random-phase band-limited data meeting the component budgets exactly."""
    g, d, p = spec.grid, spec.grid.dim, spec.p
    et = eps * nu
    cfg = SplitConfig(spec.j0, et)
    lo, hi = ("low", cfg), ("high", cfg)
    base, low, high = _mode_sets(g, cfg, spec.band)
    ss = np.random.SeedSequence(spec.seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(9)]

    def term(f, s, pp, rr, trunc):
        js, row = block_norms(f, pp, profile)
        return aggregate_besov(js, row, s, rr, trunc)

    # low acoustic part
    fa = spec.low_a_fraction
    a_low = _random_scalar(g, low, spec.envelope, rngs[0])
    a_low = _scaled(a_low, term(a_low, d / 2 - 1, 2, 1, lo), fa * spec.low_acoustic, "low_acoustic")
    psi_low = _random_scalar(g, low, spec.envelope + 1, rngs[1])
    qu_low = gradient(psi_low)
    qu_low = _scaled(qu_low, term(qu_low, d / 2 - 1, 2, 1, lo), (1 - fa) * spec.low_acoustic, "low_acoustic")
    # high parts
    a_high = _random_scalar(g, high, spec.envelope, rngs[2])
    a_high = _scaled(a_high, et * term(a_high, d / p, p, 1, hi), spec.high_a, "high_a")
    psi_high = _random_scalar(g, high, spec.envelope + 1, rngs[3])
    qu_high = gradient(psi_high)
    qu_high = _scaled(qu_high, term(qu_high, d / p - 1, p, 1, hi), spec.high_Qu, "high_Qu")
    # incompressible part
    w = VectorField.from_components([_random_scalar(g, base, spec.envelope, rngs[4 + i])
                                     for i in range(d)])
    pu = project_P(w)
    pu_val = max(term(pu, d / p - 1, p, spec.r, None), term(pu, -1, INF, 1, None))
    pu = _scaled(pu, pu_val, spec.Pu, "Pu")
    a0 = a_low + a_high
    u0 = qu_low + qu_high + pu
    theta0 = None
    if system == "nsf":
        t_low = _random_scalar(g, low, spec.envelope, rngs[7])
        t_low = _scaled(t_low, term(t_low, d / 2 - 1, 2, 1, lo), spec.theta_low, "theta_low")
        t_high = _random_scalar(g, high, spec.envelope, rngs[8])
        t_high = _scaled(t_high, term(t_high, d / p - 2, p, 1, hi) / et, spec.theta_high, "theta_high")
        theta0 = t_low + t_high
    v0 = pu if spec.v0 == "Pu0" else VectorField.zeros(g)
    Theta0 = None
    if theta0 is not None:
        Theta0 = theta0 - a0 if spec.Theta0 == "matched" else SpectralField.zeros(g)
    if system == "nsf":
        functional = y0_functional(a0, u0, theta0, eps, nu, p, profile, spec.j0, terms=True)
    else:
        functional = c0_functional(a0, u0, eps, nu, p, spec.r, profile, spec.j0, terms=True)
    if spec.smallness is not None and functional.value > spec.smallness * nu:
        raise SpecError(f"data functional {functional.value:.4g} exceeds smallness bound {spec.smallness:g} * nu")
    norms = {"functional": functional.value, **{f"term_{k}": v for k, v in functional.meta["terms"].items()}}
    return GeneratedData(a0, u0, theta0, v0, Theta0, norms)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    """Epsilon sweep.

    ``family='fixed'`` reuses one datum (generated at ``reference_eps``,
    default the largest epsilon) for all epsilon on the grid of the data
    spec, up to horizon ``T``. ``family='critical'`` treats the data spec as
    normalized data (``eps = nu = 1`` on the data grid) and maps it to each
    ``(eps, nu)`` by the critical change of variables: the box becomes
    ``eps nu L`` and the horizon ``eps^2 nu T``.
    """

    eps: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    nu: float = 1.0
    mu: float = 0.5
    kappa: float = 0.0
    gamma: float = 1.0
    p: float = 4.0
    r: float = 1.0
    c: float | None = None
    T: float = 1.0
    system: str = "baro"
    family: str = "fixed"
    reference_eps: float | None = None
    reference: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if not self.eps or any(e <= 0 for e in self.eps):
            raise SpecError("eps list must be nonempty and positive")
        if self.system not in ("baro", "nsf"):
            raise SpecError(f"system must be 'baro' or 'nsf', got {self.system!r}")
        if self.family not in ("fixed", "critical"):
            raise SpecError(f"family must be 'fixed' or 'critical', got {self.family!r}")
        if not self.T > 0:
            raise SpecError("horizon T must be positive")
        if self.system == "nsf" and not self.kappa > 0:
            raise SpecError("the full system needs kappa > 0")

    def params(self, eps: float) -> PhysicalParams:
        return PhysicalParams(eps, self.mu, self.nu - 2 * self.mu, self.kappa, self.gamma)


@dataclass
class RunRecord:
    eps: float
    params: PhysicalParams
    trajectory: Trajectory
    reference: Trajectory | None
    theta_reference: Trajectory | None
    data: GeneratedData
    box: float
    horizon: float
    wrap: bool
    files: list = field(default_factory=list)


@dataclass
class SweepResult:
    sweep: SweepConfig
    data_spec: DataSpec
    stepper: StepperConfig
    runs: list
    manifest: Path | None = None


def _prepare(spec: DataSpec, sweep: SweepConfig, eps: float):
    """Data, grid and horizon for one epsilon."""
    params = sweep.params(eps)
    if sweep.family == "critical":
        base = generate_data(spec, 1.0, 1.0, sweep.system)
        norm_params = PhysicalParams(1.0, sweep.mu / sweep.nu, (sweep.nu - 2 * sweep.mu) / sweep.nu,
                                     sweep.kappa / sweep.nu, sweep.gamma)
        if sweep.system == "nsf":
            st = base.nsf_state(norm_params)
        else:
            st = base.baro_state(norm_params)
        st = unscale_data(st, params)
        g = st.grid
        v0 = VectorField(g, base.v0.coeffs / eps)
        Th0 = SpectralField(g, base.Theta0.coeffs / eps) if base.Theta0 is not None else None
        th0 = st.theta if sweep.system == "nsf" else None
        data = GeneratedData(st.a, st.u, th0, v0, Th0, {"normalized": base.norms})
        horizon = eps**2 * sweep.nu * sweep.T
    else:
        ref = sweep.reference_eps or max(sweep.eps)
        data = generate_data(spec, ref, sweep.nu, sweep.system)
        horizon = sweep.T
    return params, data, horizon


def _stepper_for(stepper: StepperConfig, sweep: SweepConfig, eps: float) -> StepperConfig:
    if sweep.family == "critical":
        return replace(stepper, dt=stepper.dt * eps**2 * sweep.nu)
    return stepper


def run_single(spec: DataSpec, sweep: SweepConfig, stepper: StepperConfig, eps: float) -> RunRecord:
    """One epsilon of a sweep: the compressible run plus its limit references."""
    params, data, horizon = _prepare(spec, sweep, eps)
    cfg = _stepper_for(stepper, sweep, eps)
    g = data.a0.grid
    if sweep.system == "nsf":
        traj = integrate_nsf(data.nsf_state(params), horizon, cfg)
    else:
        traj = integrate_baro(data.baro_state(params), horizon, cfg)
    ref = th_ref = None
    if sweep.reference:
        ref = integrate_incompressible(IncState(0.0, data.v0), sweep.mu, horizon, cfg)
        if sweep.system == "nsf":
            th_ref = integrate_theta_limit(ThetaState(0.0, data.Theta0), ref, sweep.kappa, horizon, cfg)
    wrap = bool(horizon / eps > np.pi * g.scale)
    return RunRecord(eps, params, traj, ref, th_ref, data, g.scale, horizon, wrap)


def _run_job(args):
    return run_single(*args)


def run_sweep(spec: DataSpec, sweep: SweepConfig, stepper: StepperConfig,
              out_dir: str | os.PathLike | None = None) -> SweepResult:
    """Run every epsilon of ``sweep``; persist checkpoints and a manifest if ``out_dir`` is given.

    A blow-up in any run raises :class:`PartialResultsError` whose
    ``completed`` attribute lists the finished epsilon values; the partial
    :class:`SweepResult` is attached as ``err.result``.
    """
    check_admissible(spec.grid.dim, sweep.p, sweep.r, sweep.c if spec.grid.dim == 2 else None)
    jobs = [(spec, sweep, stepper, e) for e in sweep.eps]
    runs, failed = [], []
    if sweep.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=sweep.workers) as ex:
            futs = [ex.submit(_run_job, j) for j in jobs]
            for e, f in zip(sweep.eps, futs):
                try:
                    runs.append(f.result())
                except BlowUpError as err:
                    failed.append((e, err))
    else:
        for j in jobs:
            try:
                runs.append(run_single(*j))
            except BlowUpError as err:
                failed.append((j[3], err))
    result = SweepResult(sweep, spec, stepper, runs)
    if out_dir is not None:
        result.manifest = write_sweep(result, out_dir)
    if failed:
        e, err = failed[0]
        exc = PartialResultsError(f"blow-up at eps = {e:g}: {err}", [r.eps for r in runs])
        exc.result = result
        raise exc
    return result


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _spec_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, Grid):
            out.update({"dim": v.dim, "n": v.n, "scale": repr(v.scale), "normalized": v.normalized})
        elif isinstance(v, tuple):
            out[f.name] = ",".join(repr(x) for x in v)
        elif isinstance(v, float):
            out[f.name] = repr(v)
        else:
            out[f.name] = "" if v is None else str(v)
    return out


def _save_traj(traj: Trajectory, prefix: Path, pack, eps, nu, normalized) -> list[str]:
    names = []
    for i, (t, s) in enumerate(zip(traj.times, traj.snapshots)):
        name = f"{prefix.name}_{i:04d}.mach"
        U = pack(s)
        g = s.grid
        save_checkpoint(prefix.parent / name, [SpectralField(g, c) for c in U], t, eps, nu)
        names.append(name)
    return names


def write_sweep(result: SweepResult, out_dir) -> Path:
    """Write checkpoints (one file per run and snapshot) and an INI manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cp = configparser.ConfigParser()
    cp["sweep"] = _spec_dict(result.sweep)
    cp["data"] = _spec_dict(result.data_spec)
    cp["stepper"] = _spec_dict(result.stepper)
    for i, run in enumerate(result.runs):
        sec = f"run.{i}"
        nu = run.params.nu
        main = _save_traj(run.trajectory, out / f"run{i}", lambda s: s.pack(), run.eps, nu, True)
        entry = {"eps": repr(run.eps), "box": repr(run.box), "horizon": repr(run.horizon), "wrap": str(run.wrap),
                 "times": ",".join(repr(float(t)) for t in run.trajectory.times), "snapshots": ",".join(main)}
        if run.reference is not None:
            ref = _save_traj(run.reference, out / f"run{i}_ref", lambda s: s.v.coeffs, run.eps, nu, True)
            entry["reference"] = ",".join(ref)
        if run.theta_reference is not None:
            th = _save_traj(run.theta_reference, out / f"run{i}_theta", lambda s: s.Theta.coeffs[None], run.eps, nu, True)
            entry["theta_reference"] = ",".join(th)
        cp[sec] = entry
        run.files = main
    path = out / "manifest.ini"
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def _parse_value(text: str, kind):
    if kind is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _from_section(cls, sec, extra=None):
    kw = dict(extra or {})
    hints = {f.name: f for f in fields(cls)}
    for name, f in hints.items():
        if name in kw or name not in sec:
            continue
        raw = sec[name]
        default = f.default
        if name in ("eps",):
            kw[name] = tuple(float(x) for x in raw.split(","))
        elif name == "band":
            kw[name] = tuple(float(x) for x in raw.split(",")) if raw else None
        elif raw == "" and default is None:
            kw[name] = None
        elif isinstance(default, bool):
            kw[name] = _parse_value(raw, bool)
        elif isinstance(default, int):
            kw[name] = int(raw)
        elif isinstance(default, float) or default is None:
            kw[name] = float(raw)
        else:
            kw[name] = raw
    return cls(**kw)


def read_manifest(path):
    """Parse a sweep manifest into ``(DataSpec, SweepConfig, StepperConfig, run sections)``."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    d = cp["data"]
    grid = Grid(int(d["dim"]), int(d["n"]), float(d["scale"]), _parse_value(d["normalized"], bool))
    spec = _from_section(DataSpec, d, {"grid": grid})
    sweep = _from_section(SweepConfig, cp["sweep"])
    stepper = _from_section(StepperConfig, cp["stepper"])
    runs = [dict(cp[s]) for s in cp.sections() if s.startswith("run.")]
    return spec, sweep, stepper, runs


def load_sweep(path) -> SweepResult:
    """Rebuild a :class:`SweepResult` from a manifest and its checkpoints."""
    path = Path(path)
    spec, sweep, stepper, sections = read_manifest(path)
    normalized = spec.grid.normalized
    runs = []
    for sec in sections:
        eps = float(sec["eps"])
        params = sweep.params(eps)
        times = np.array([float(x) for x in sec["times"].split(",")])

        def load(names, build):
            snaps = []
            for nm in names.split(","):
                flds, meta = load_checkpoint(path.parent / nm, normalized)
                snaps.append(build(flds, meta))
            return Trajectory(times, tuple(snaps))

        def build_state(flds, meta):
            g = flds[0].grid
            U = np.stack([f.coeffs for f in flds])
            cls = NSFState if sweep.system == "nsf" else BaroState
            return cls.unpack(meta["t"], U, g, params)

        traj = load(sec["snapshots"], build_state)
        ref = th = None
        if "reference" in sec:
            ref = load(sec["reference"], lambda f, m: IncState(m["t"], VectorField.from_components(f)))
        if "theta_reference" in sec:
            th = load(sec["theta_reference"], lambda f, m: ThetaState(m["t"], f[0]))
        s0 = traj.snapshots[0]
        data = GeneratedData(s0.a, s0.u, getattr(s0, "theta", None),
                             ref.snapshots[0].v if ref else VectorField.zeros(s0.grid),
                             th.snapshots[0].Theta if th else None, {})
        runs.append(RunRecord(eps, params, traj, ref, th, data, float(sec["box"]), float(sec["horizon"]),
                              _parse_value(sec["wrap"], bool), sec["snapshots"].split(",")))
    return SweepResult(sweep, spec, stepper, runs, path)


# ---------------------------------------------------------------------------
# rate measurement
# ---------------------------------------------------------------------------

@dataclass
class RateReport:
    mode: str
    eps: np.ndarray
    eps_tilde: np.ndarray
    norms: np.ndarray
    target: float
    slope: float
    residual: float
    pairwise: np.ndarray
    boxes: np.ndarray
    wrap: np.ndarray
    meta: dict = field(default_factory=dict)

    CSV_HEADER = ("eps", "eps_tilde", "norm", "target_exponent", "fitted_slope", "residual", "L", "wrap")

    def within(self, tol: float) -> bool:
        return abs(self.slope - self.target) <= tol

    def rows(self) -> list[dict]:
        return [
            {"eps": repr(float(e)), "eps_tilde": repr(float(et)), "norm": repr(float(n)),
             "target_exponent": repr(self.target), "fitted_slope": repr(self.slope),
             "residual": repr(self.residual), "L": repr(float(L)), "wrap": int(w)}
            for e, et, n, L, w in zip(self.eps, self.eps_tilde, self.norms, self.boxes, self.wrap)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.CSV_HEADER)
            w.writeheader()
            w.writerows(self.rows())

    def write_plot_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("log2_eps_tilde", "log2_norm"))
            for et, n in zip(self.eps_tilde, self.norms):
                w.writerow((repr(math.log2(et)), repr(math.log2(n))))


def fit_slope(eps_tilde, norms):
    """Least-squares slope of ``log2 norm`` against ``log2 eps_tilde``; returns (slope, rms residual, pairwise)."""
    x = np.log2(np.asarray(eps_tilde, dtype=float))
    y = np.log2(np.asarray(norms, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    pair = np.diff(y) / np.diff(x)
    return float(coef[0]), float(np.sqrt(np.mean(res**2))), pair


def make_report(mode, eps, eps_tilde, norms, target, boxes=None, wrap=None, meta=None) -> RateReport:
    norms = np.asarray(norms, dtype=float)
    if len(norms) < 3:
        raise InsufficientSignalError(f"need at least 3 epsilon values, got {len(norms)}")
    if np.any(~np.isfinite(norms)) or np.any(norms < 1e-14):
        raise InsufficientSignalError(f"norms too small for a rate fit: {norms}")
    slope, res, pair = fit_slope(eps_tilde, norms)
    n = len(norms)
    return RateReport(mode, np.asarray(eps, float), np.asarray(eps_tilde, float), norms, float(target),
                      slope, res, pair, np.asarray(boxes if boxes is not None else np.full(n, np.nan), float),
                      np.asarray(wrap if wrap is not None else np.zeros(n), bool), meta or {})


def acoustic_norm(traj: Trajectory, nu: float, s: float, p: float, system: str = "baro",
                  eps: float | None = None, j0: int = 3, profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """``nu^{1/2} ||(a, Qu)||_{Ltilde^2 B^s_{p,1}}``; for the full system the low part of ``(q, Qu)`` in ``L^2``."""
    spec2 = SpaceTimeSpec(BesovSpec(s, p, 1), 2, system == "baro")
    if system == "nsf":
        trunc = ("low", SplitConfig(j0, eps * nu))
        first = traj.map(lambda st: st.q)
    else:
        trunc = None
        first = traj.map(lambda st: st.a)
    qu = traj.map(lambda st: project_Q(st.u))
    return math.sqrt(nu) * (spacetime_norm(first, spec2, profile, trunc).value
                            + spacetime_norm(qu, spec2, profile, trunc).value)


def velocity_gap_norm(traj: Trajectory, ref: Trajectory, mu: float, s: float, p: float, r, tilde: bool = True,
                      profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """``||Pu - v||_{L^inf B^{s-1}_{p,r}} + mu ||Pu - v||_{L^1 B^{s+1}_{p,r}}``."""
    gap = Trajectory(traj.times, tuple(VectorField(st.grid, project_P(st.u).coeffs - rv.v.coeffs)
                                       for st, rv in zip(traj.snapshots, ref.snapshots)))
    n1 = spacetime_norm(gap, SpaceTimeSpec(BesovSpec(s - 1, p, r), INF, tilde), profile).value
    n2 = spacetime_norm(gap, SpaceTimeSpec(BesovSpec(s + 1, p, r), 1, tilde), profile).value
    return n1 + mu * n2


def theta_gap_norm(traj: Trajectory, th_ref: Trajectory, eps: float, nu: float, p: float, j0: int = 3,
                   profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """Sum-space norm of ``Theta^eps - Theta`` with the canonical low/high split at ``eps nu``."""
    d = traj.snapshots[0].grid.dim
    gap = Trajectory(traj.times, tuple(st.Theta - rt.Theta for st, rt in zip(traj.snapshots, th_ref.snapshots)))
    js, tab = block_table(gap.snapshots, p, profile)
    cfg = SplitConfig(j0, eps * nu)
    lo, hi = ("low", cfg), ("high", cfg)
    t = gap.times
    return (aggregate_spacetime(t, js, tab, (d + 1) / p - 1.5, INF, 1, False, lo)
            + aggregate_spacetime(t, js, tab, d / p - 2, INF, 1, False, hi)
            + aggregate_spacetime(t, js, tab, (d + 1) / p - 0.5, 2, 1, False, lo)
            + aggregate_spacetime(t, js, tab, d / p, 1, 1, False, hi))


MODES = ("acoustic-decay", "velocity-convergence", "theta-convergence")


def measure_rates(result: SweepResult, which: str = "acoustic-decay",
                  profile: DyadicProfile = DEFAULT_PROFILE) -> RateReport:
    """Norm of the rate statement for each epsilon and its fitted slope in ``eps nu``."""
    if which not in MODES:
        raise SpecError(f"unknown mode {which!r}; choose from {MODES}")
    sw = result.sweep
    d = result.data_spec.grid.dim
    p, r = sw.p, parse_exponent(sw.r)
    c = sw.c if d == 2 else None
    s = rate_regularity(d, p, c) if sw.system == "baro" else (d + 1) / p - 0.5
    target = target_exponent(d, p, c) if sw.system == "baro" else 0.5 - 1.0 / p
    norms = []
    for run in result.runs:
        if which == "acoustic-decay":
            norms.append(acoustic_norm(run.trajectory, sw.nu, s, p, sw.system, run.eps, result.data_spec.j0, profile))
        elif which == "velocity-convergence":
            if run.reference is None:
                raise SpecError("velocity convergence needs the incompressible reference runs")
            tilde = sw.system == "baro"
            rr = r if sw.system == "baro" else 1
            norms.append(velocity_gap_norm(run.trajectory, run.reference, sw.mu, s, p, rr, tilde, profile))
        else:
            if run.theta_reference is None:
                raise SpecError("theta convergence needs the full system with limit-temperature references")
            norms.append(theta_gap_norm(run.trajectory, run.theta_reference, run.eps, sw.nu, p,
                                        result.data_spec.j0, profile))
    eps = np.array([run.eps for run in result.runs])
    meta = {"system": sw.system, "family": sw.family, "s": s, "d": d,
            "outside_proven_range": d == 2 and sw.system == "nsf"}
    return make_report(which, eps, eps * sw.nu, norms, target,
                       [run.box for run in result.runs], [run.wrap for run in result.runs], meta)


def linear_acoustic_direct(data: GeneratedData, params: PhysicalParams, times: Sequence[float], s: float, p: float,
                           profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """Acoustic norm of the linear barotropic flow evaluated by one propagator per sample time."""
    g = data.a0.grid
    U0 = BaroState(0.0, data.a0, data.u0, params).pack()
    snaps = []
    for t in times:
        U = U0 if t == 0 else _propagator(g, params, float(t), "baro").apply(U0)
        snaps.append(BaroState.unpack(float(t), U, g, params))
    return acoustic_norm(Trajectory(np.asarray(times, float), tuple(snaps)), params.nu, s, p, "baro")


# ---------------------------------------------------------------------------
# weak convergence diagnostics
# ---------------------------------------------------------------------------

@dataclass
class WeakReport:
    div_L2L2: float
    Qu_L2: np.ndarray
    Pu_gap: float
    times: np.ndarray
    alpha: float
    p: float


def weak_diagnostics(traj: Trajectory, reference: Trajectory | None, p: float = 2.0, alpha: float = 0.1,
                     profile: DyadicProfile = DEFAULT_PROFILE) -> WeakReport:
    """``||div u||_{L^2_t L^2_x}``, the ``||Qu(t)||_{L^2}`` series and ``||Pu - v||_{L^inf_T B^{d/p-1-alpha}_{p,1}}``."""
    t = traj.times
    divs = np.array([divergence(st.u).l2() for st in traj.snapshots])
    div_norm = float(math.sqrt(np.trapezoid(divs**2, t))) if len(t) > 1 else 0.0
    qu = np.array([project_Q(st.u).l2() for st in traj.snapshots])
    gap = 0.0
    if reference is not None:
        d = traj.snapshots[0].grid.dim
        g = Trajectory(t, tuple(VectorField(st.grid, project_P(st.u).coeffs - rv.v.coeffs)
                                for st, rv in zip(traj.snapshots, reference.snapshots)))
        gap = spacetime_norm(g, SpaceTimeSpec(BesovSpec(d / p - 1 - alpha, p, 1), INF, False), profile).value
    return WeakReport(div_norm, qu, gap, t, alpha, p)
