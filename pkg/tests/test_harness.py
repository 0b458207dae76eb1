import numpy as np
import pytest

from lowmach.besov import INF, BesovSpec, besov_norm, c0_functional
from lowmach.errors import InsufficientSignalError, PartialResultsError, SpecError
from lowmach.harness import (
    DataSpec,
    SweepConfig,
    admissible,
    check_admissible,
    fit_slope,
    generate_data,
    load_sweep,
    make_report,
    measure_rates,
    rate_regularity,
    run_sweep,
    target_exponent,
    weak_diagnostics,
)
from lowmach.solvers import BaroState, PhysicalParams, StepperConfig, integrate_baro
from lowmach.spectral import Grid, SpectralField, project_P, vector_from_physical
from lowmach.verification import random_vector


def test_targets():
    assert target_exponent(3, 4.0) == 0.25
    assert target_exponent(2, 3.0, 0.5) == pytest.approx(1 / 12)
    assert rate_regularity(3, 4.0) == pytest.approx(0.5)
    assert not admissible(2, 4.0, 1, 0.5)
    with pytest.raises(SpecError, match="p < 4"):
        check_admissible(2, 4.0, 1, 0.5)


def test_fit_slope_exact_power_law():
    et = np.array([0.2, 0.1, 0.05, 0.025])
    slope, res, pair = fit_slope(et, 3.0 * et**0.25)
    assert abs(slope - 0.25) < 1e-12 and res < 1e-12 and np.allclose(pair, 0.25)
    with pytest.raises(InsufficientSignalError):
        make_report("acoustic-decay", et[:2], et[:2], [1.0, 0.5], 0.25)
    with pytest.raises(InsufficientSignalError):
        make_report("acoustic-decay", et, et, [1.0, 0.5, 0.0, 1e-20], 0.25)


def test_generate_data_examples():
    g = Grid(2, 32)
    zero = generate_data(DataSpec(g, p=3.0), 0.1, 1.0)
    assert not np.any(zero.a0.coeffs) and not np.any(zero.u0.coeffs)
    spec = DataSpec(g, p=3.0, Pu=0.2, seed=5)
    d1 = generate_data(spec, 0.1, 1.0)
    d2 = generate_data(spec, 0.1, 1.0)
    assert np.array_equal(d1.u0.coeffs, d2.u0.coeffs)
    val = c0_functional(d1.a0, d1.u0, 0.1, 1.0, 3.0, 1).value
    assert val == pytest.approx(0.2, rel=1e-2)
    pu = max(besov_norm(d1.u0, BesovSpec(2 / 3 - 1, 3.0, 1)).value, besov_norm(d1.u0, BesovSpec(-1, INF, 1)).value)
    assert pu == pytest.approx(val, rel=1e-12)


def test_generate_data_budgets_exact():
    g = Grid(2, 64)
    spec = DataSpec(g, p=3.0, low_acoustic=0.1, high_a=0.05, high_Qu=0.03, Pu=0.07, seed=2)
    d = generate_data(spec, 2.0, 1.0)
    t = d.norms
    assert t["term_lf"] == pytest.approx(0.1, rel=1e-12)
    assert t["term_hf_a"] == pytest.approx(0.05, rel=1e-12)
    assert t["term_hf_Qu"] == pytest.approx(0.03, rel=1e-12)
    assert t["term_Pu"] == pytest.approx(0.07, rel=1e-12)
    with pytest.raises(SpecError):
        generate_data(DataSpec(g, p=3.0, Pu=1.0, smallness=0.1), 2.0, 1.0)


def test_zero_sweep_and_manifest_round_trip(tmp_path):
    g = Grid(2, 16)
    spec = DataSpec(g, p=3.0)
    sw = SweepConfig(eps=(0.5,), nu=1.0, mu=0.5, p=3.0, c=0.5, T=0.1)
    res = run_sweep(spec, sw, StepperConfig(dt=0.05))
    assert all(not np.any(s.pack()) for s in res.runs[0].trajectory.snapshots)

    spec = DataSpec(g, p=3.0, low_acoustic=0.2, Pu=0.2, seed=1)
    sw = SweepConfig(eps=(0.4, 0.2, 0.1), nu=1.0, mu=0.5, p=3.0, c=0.5, T=0.1)
    res = run_sweep(spec, sw, StepperConfig(dt=0.025), out_dir=tmp_path)
    back = load_sweep(res.manifest)
    for which in ("acoustic-decay", "velocity-convergence"):
        a = measure_rates(res, which)
        b = measure_rates(back, which)
        assert np.max(np.abs(a.norms - b.norms) / a.norms) < 1e-12
    rep = measure_rates(back, "acoustic-decay")
    rep.write_csv(tmp_path / "r.csv")
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "eps,eps_tilde,norm,target_exponent,fitted_slope,residual,L,wrap"
    with pytest.raises(SpecError):
        measure_rates(back, "theta-convergence")


def test_four_point_sweep_records():
    g = Grid(2, 64)
    spec = DataSpec(g, p=3.0, low_acoustic=0.1, Pu=0.1, band=(1, 4), seed=0)
    sw = SweepConfig(eps=(0.2, 0.1, 0.05, 0.025), nu=1.0, mu=0.5, p=3.0, c=0.5, T=0.05, reference=False)
    res = run_sweep(spec, sw, StepperConfig(dt=0.025))
    assert len(res.runs) == 4 and all(len(r.trajectory) == 3 for r in res.runs)


def test_sweep_validation():
    with pytest.raises(SpecError):
        run_sweep(DataSpec(Grid(2, 16), p=4.0), SweepConfig(p=4.0, c=0.5), StepperConfig())
    with pytest.raises(SpecError):
        SweepConfig(system="nsf", kappa=0.0)
    with pytest.raises(SpecError):
        SweepConfig(eps=())


def test_partial_results_on_blowup():
    g = Grid(2, 16)
    spec = DataSpec(g, p=3.0, low_acoustic=2.0, low_a_fraction=1.0, seed=0)
    sw = SweepConfig(eps=(0.5, 0.01), nu=1.0, mu=0.5, p=3.0, c=0.5, T=0.2, family="fixed",
                     reference_eps=0.01, reference=False)
    with pytest.raises(PartialResultsError) as err:
        run_sweep(spec, sw, StepperConfig(dt=0.05))
    assert err.value.completed == [0.01]
    assert len(err.value.result.runs) == 1


def test_weak_diagnostics_divfree(rng):
    g = Grid(2, 16)
    p = PhysicalParams(0.1, 0.5, 0.0)
    _, x2 = g.coordinates
    u = vector_from_physical([0.3 * np.sin(x2), 0.0], g)
    traj = integrate_baro(BaroState(0.0, SpectralField.zeros(g), u, p), 0.1, StepperConfig(dt=0.02))
    w = weak_diagnostics(traj, None)
    assert w.div_L2L2 < 1e-12
