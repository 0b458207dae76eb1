"""Command-line front end: ``lowmach {verify,simulate,sweep,rates,norms,decompose}``.

Exit codes: 0 success, 1 verification failure, 2 validation or IO failure,
3 solver blow-up.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .besov import (
    INF,
    BesovSpec,
    SpaceTimeSpec,
    Trajectory,
    TruncatedSpec,
    NormValue,
    besov_norm,
    block_norms,
    parse_exponent,
    spacetime_norm,
    truncated_norm,
    x_norm,
    y_norm,
)
from .errors import BlowUpError, ConfigError, LowMachError, PartialResultsError
from .harness import (
    MODES,
    DataSpec,
    SweepConfig,
    generate_data,
    load_sweep,
    measure_rates,
    run_sweep,
    write_sweep,
)
from .littlewood_paley import SplitConfig
from .solvers import PhysicalParams, StepperConfig, integrate_baro, integrate_nsf
from .spectral import Grid, SpectralField, VectorField, load_checkpoint

EXIT_OK, EXIT_VERIFY, EXIT_INVALID, EXIT_BLOWUP = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    grid: Grid
    params: PhysicalParams
    data: DataSpec
    sweep: SweepConfig
    stepper: StepperConfig
    system: str
    T: float
    output: Path


def _convert(raw: str, default, field: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple) or field.endswith(".band"):
            return tuple(float(x) for x in raw.split(",")) if raw else None
        if default is None:
            return None if raw == "" else float(raw)
    except ValueError as err:
        raise ConfigError(str(err), field) from None
    return raw


def _section(cp, name, cls, skip=(), extra=None):
    """Build ``cls`` from section ``name`` with field-precise error messages."""
    kw = dict(extra or {})
    sec = cp[name] if cp.has_section(name) else {}
    known = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    for key in sec:
        if key not in known:
            raise ConfigError("unknown key", f"{name}.{key}")
    for key, f in known.items():
        if key in sec and key not in kw:
            default = f.default if f.default is not dataclasses.MISSING else None
            kw[key] = _convert(sec[key], default, f"{name}.{key}")
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (LowMachError, ValueError, TypeError) as err:
        raise ConfigError(str(err), name) from None


def output_dir(default) -> Path:
    return Path(os.environ.get("LOWMACH_OUTPUT_DIR") or default)


def parse_config(path) -> RunConfig:
    """Read and validate an INI run configuration.

    Sections: ``[grid]`` (dim, n, scale, normalized), ``[params]`` (eps, mu,
    lam, kappa, gamma), ``[data]`` (DataSpec budgets), ``[stepper]``,
    ``[sweep]`` (epsilon list and sweep options) and ``[run]`` (system, T,
    output). ``LOWMACH_OUTPUT_DIR`` overrides ``run.output``.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as err:
        raise ConfigError(str(err), "config") from None
    except configparser.Error as err:
        raise ConfigError(str(err).replace("\n", " "), "config") from None
    allowed = {"grid", "params", "data", "stepper", "sweep", "run"}
    for s in cp.sections():
        if s not in allowed:
            raise ConfigError("unknown section", s)
    g = cp["grid"] if cp.has_section("grid") else {}
    try:
        dim = int(g.get("dim", "2"))
    except ValueError:
        raise ConfigError(f"not an integer: {g.get('dim')!r}", "grid.dim") from None
    try:
        n = int(g.get("n", "32"))
    except ValueError:
        raise ConfigError(f"not an integer: {g.get('n')!r}", "grid.n") from None
    try:
        scale = float(g.get("scale", "1.0"))
    except ValueError:
        raise ConfigError(f"not a number: {g.get('scale')!r}", "grid.scale") from None
    normalized = _convert(g.get("normalized", "true"), True, "grid.normalized")
    for key in g:
        if key not in ("dim", "n", "scale", "normalized"):
            raise ConfigError("unknown key", f"grid.{key}")
    if dim not in (2, 3):
        raise ConfigError(f"must be 2 or 3, got {dim}", "grid.dim")
    if n < 8 or n & (n - 1):
        raise ConfigError(f"must be a power of two >= 8, got {n}", "grid.n")
    if not scale > 0:
        raise ConfigError(f"must be positive, got {scale}", "grid.scale")
    grid = Grid(dim, n, scale, normalized)
    params = _section(cp, "params", PhysicalParams)
    data = _section(cp, "data", DataSpec, skip=("grid",), extra={"grid": grid})
    stepper = _section(cp, "stepper", StepperConfig)
    sweep = _section(cp, "sweep", SweepConfig)
    r = cp["run"] if cp.has_section("run") else {}
    for key in r:
        if key not in ("system", "T", "output"):
            raise ConfigError("unknown key", f"run.{key}")
    system = r.get("system", "baro")
    if system not in ("baro", "nsf"):
        raise ConfigError(f"must be 'baro' or 'nsf', got {system!r}", "run.system")
    T = _convert(r.get("T", "1.0"), 1.0, "run.T")
    if not T > 0:
        raise ConfigError(f"must be positive, got {T}", "run.T")
    if system == "nsf" and not params.kappa > 0:
        raise ConfigError("the full system needs kappa > 0", "params.kappa")
    return RunConfig(grid, params, data, sweep, stepper, system, T, output_dir(r.get("output", "lowmach_out")))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verification import SUITES, run_suites, write_ledger

    names = list(SUITES) if args.suite in (None, "all") else [args.suite.replace("-", "_").replace("heat_estimate", "heat")]
    for nm in names:
        if nm not in SUITES:
            print(f"unknown suite {nm!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
            return EXIT_INVALID
    results = run_suites(names, args.n)
    out = output_dir(args.output)
    out.mkdir(parents=True, exist_ok=True)
    ledger = out / "verify_ledger.csv"
    write_ledger(results, ledger)
    w = csv.writer(sys.stdout)
    w.writerow(("suite", "check", "value", "tolerance", "passed"))
    for r in results:
        w.writerow((r.suite, r.name, repr(float(r.value)), repr(float(r.tolerance)), int(r.passed)))
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"FAILED {r.suite}/{r.name}: measured {r.value:.6g} > {r.tolerance:.3g}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    data = generate_data(cfg.data, cfg.params.eps, cfg.params.nu, cfg.system)
    if cfg.system == "nsf":
        traj = integrate_nsf(data.nsf_state(cfg.params), cfg.T, cfg.stepper)
    else:
        traj = integrate_baro(data.baro_state(cfg.params), cfg.T, cfg.stepper)
    from .harness import RunRecord, SweepResult

    eps = cfg.params.eps
    sweep = dataclasses.replace(cfg.sweep, eps=(eps,), system=cfg.system, T=cfg.T, family="fixed",
                                mu=cfg.params.mu, nu=cfg.params.nu, kappa=cfg.params.kappa,
                                gamma=cfg.params.gamma, reference=False)
    rec = RunRecord(eps, cfg.params, traj, None, None, data, cfg.grid.scale, cfg.T, False)
    manifest = write_sweep(SweepResult(sweep, cfg.data, cfg.stepper, [rec]), cfg.output)
    _print_state_norms(traj, cfg.data.p)
    print(f"manifest,{manifest}")
    return EXIT_OK


def _print_state_norms(traj: Trajectory, p):
    w = csv.writer(sys.stdout)
    w.writerow(("t", "a_L2", "u_L2"))
    for s in traj.snapshots:
        w.writerow((repr(float(s.t)), repr(s.a.l2()), repr(s.u.l2())))


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    sweep = cfg.sweep
    if args.workers is not None:
        sweep = dataclasses.replace(sweep, workers=args.workers)
    result = run_sweep(cfg.data, sweep, cfg.stepper, cfg.output)
    print(f"manifest,{result.manifest}")
    return EXIT_OK


def cmd_rates(args) -> int:
    try:
        result = load_sweep(args.manifest)
    except (OSError, KeyError) as err:
        raise ConfigError(f"cannot read manifest: {err}", "manifest") from None
    rep = measure_rates(result, args.mode)
    out = output_dir(args.output or Path(args.manifest).parent)
    out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(out / f"rates_{args.mode}.csv")
    rep.write_plot_csv(out / f"rates_{args.mode}_plot.csv")
    w = csv.DictWriter(sys.stdout, fieldnames=rep.CSV_HEADER)
    w.writeheader()
    for row in rep.rows():
        w.writerow(row)
    return EXIT_OK


def _load_field(path, component, normalized):
    """Component ``i``, a slice ``i:j`` (a vector field) or ``all``."""
    flds, meta = load_checkpoint(path, normalized)
    if component == "all":
        sel = flds
    elif ":" in component:
        lo, hi = (int(x) if x else None for x in component.split(":"))
        sel = flds[lo:hi]
    else:
        idx = int(component)
        if not 0 <= idx < len(flds):
            raise ConfigError(f"checkpoint has {len(flds)} components, got {idx}", "component")
        sel = [flds[idx]]
    if len(sel) == 1:
        return sel[0], meta
    if len(sel) != sel[0].grid.dim:
        raise ConfigError(f"{len(sel)} components selected; choose one or a slice of {sel[0].grid.dim} "
                          "(e.g. 1:3 for u in an (a, u) checkpoint)", "component")
    return VectorField.from_components(sel), meta


def cmd_norms(args) -> int:
    w = csv.DictWriter(sys.stdout, fieldnames=NormValue.CSV_HEADER)
    if args.manifest:
        result = load_sweep(args.manifest)
        sw = result.sweep
        rows = []
        for run in result.runs:
            if sw.system == "nsf":
                nv = y_norm(run.trajectory, run.eps, sw.nu, sw.p, j0=result.data_spec.j0)
            else:
                nv = x_norm(run.trajectory, run.eps, sw.nu, sw.p, parse_exponent(sw.r), j0=result.data_spec.j0)
            rows.append((run.eps, nv))
        print("eps,norm,value")
        for e, nv in rows:
            print(f"{e!r},{'Y' if sw.system == 'nsf' else 'X'},{float(nv.value)!r}")
        return EXIT_OK
    if not args.checkpoint:
        raise ConfigError("give checkpoint paths or --manifest", "checkpoint")
    zs, times = [], []
    for path in args.checkpoint:
        z, meta = _load_field(path, args.component, not args.lebesgue)
        zs.append(z)
        times.append(meta["t"])
    base = BesovSpec(args.s, parse_exponent(args.p), parse_exponent(args.r))
    if len(zs) > 1 or args.q is not None:
        q = parse_exponent(args.q) if args.q is not None else INF
        spec = SpaceTimeSpec(base, q, args.tilde)
        obj = Trajectory(np.asarray(times), tuple(zs))
    else:
        spec, obj = base, zs[0]
    if args.side:
        alpha = args.alpha if args.alpha is not None else 1.0
        nv = truncated_norm(obj, TruncatedSpec(spec, args.side, SplitConfig(args.j0, alpha)))
    elif isinstance(spec, SpaceTimeSpec):
        nv = spacetime_norm(obj, spec)
    else:
        nv = besov_norm(obj, spec)
    w.writeheader()
    w.writerow(nv.to_row())
    return EXIT_OK


def cmd_decompose(args) -> int:
    z, meta = _load_field(args.checkpoint, args.component, not args.lebesgue)
    p = parse_exponent(args.p)
    js, vals = block_norms(z, p)
    w = csv.writer(sys.stdout)
    w.writerow(("j", "lp_norm", "p", "t"))
    for j, v in zip(js, vals):
        w.writerow((int(j), repr(float(v)), args.p, repr(float(meta["t"]))))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowmach", description="Low Mach number limit experiments on the torus.")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run invariant suites and write a per-check ledger CSV")
    v.add_argument("suite", nargs="?", default="all",
                   help="projectors, littlewood_paley, bony, heat, commutator, composition, scaling, admissibility or all")
    v.add_argument("--n", type=int, default=None, help="grid size for the suites that take one")
    v.add_argument("--output", default=".", help="directory for verify_ledger.csv")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="single run from a config file; writes checkpoints and a manifest")
    s.add_argument("config")
    s.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="epsilon sweep from a config file")
    sw.add_argument("config")
    sw.add_argument("--workers", type=int, default=None, help="override sweep.workers")
    sw.set_defaults(func=cmd_sweep)

    r = sub.add_parser("rates", help="fit convergence rates of a stored sweep")
    r.add_argument("manifest")
    r.add_argument("--mode", choices=MODES, default="acoustic-decay")
    r.add_argument("--output", default=None, help="directory for the rate CSVs (default: next to the manifest)")
    r.set_defaults(func=cmd_rates)

    n = sub.add_parser("norms", help="Besov norms of checkpoints, or X/Y norms over a manifest")
    n.add_argument("checkpoint", nargs="*", help="one file for a Besov norm, several for a time-space norm")
    n.add_argument("--manifest", default=None, help="report the solution-space norm of each run")
    n.add_argument("--s", type=float, default=0.0)
    n.add_argument("--p", default="2")
    n.add_argument("--r", default="1")
    n.add_argument("--q", default=None, help="time exponent (implies a time-space norm)")
    n.add_argument("--tilde", action=argparse.BooleanOptionalAction, default=True,
                   help="Chemin-Lerner (default) or plain time-space norm")
    n.add_argument("--side", choices=("low", "high"), default=None)
    n.add_argument("--alpha", type=float, default=None, help="split parameter (eps*nu)")
    n.add_argument("--j0", type=int, default=3)
    n.add_argument("--component", default="all", help="component index, slice i:j for a vector, or 'all'")
    n.add_argument("--lebesgue", action="store_true", help="use Lebesgue instead of normalized measure")
    n.set_defaults(func=cmd_norms)

    d = sub.add_parser("decompose", help="per-block L^p norms of a checkpoint")
    d.add_argument("checkpoint")
    d.add_argument("--p", default="2")
    d.add_argument("--component", default="all")
    d.add_argument("--lebesgue", action="store_true")
    d.set_defaults(func=cmd_decompose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BlowUpError, PartialResultsError) as err:
        print(f"blow-up: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except (LowMachError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
