import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mfit.package import Block, BoundarySpec, Layer, Material, PackageSpec, PowerBlock
from mfit.rc import build_rc
from mfit.solver import (
    SingularModelError,
    SolverConfig,
    SolverError,
    layer_heatmap,
    simulate,
    steady_rise,
    steady_state,
    steady_trace,
)
from mfit.workload import PowerTrace, SynthSpec, constant_trace, synth_wl1

from conftest import chip_on_slab, quad_chiplets
from oracles import implicit_euler, random_spec, scalar_step_response


def scalar_model(g=0.1, c=1.0, ambient=25.0):
    """Single node with convective conductance ``g`` W/K and capacitance ``c`` J/K."""
    side, lz = 1e-3, 1e-3
    m = Material("m", 1.0, 1.0, 1.0, c / (side * side * lz) / 1e3, 1e3)
    chip = Block("chip", (0.0, 0.0), (side, side), "m", (1, 1), (PowerBlock("p", (0.0, 0.0), (side, side)),), 1.0, True)
    spec = PackageSpec(
        "scalar",
        (side, side),
        BoundarySpec(g / (side * side), 0.0, 0.0, ambient),
        (m,),
        (Layer("L0", 0, lz, None, blocks=(chip,)),),
    )
    model = build_rc(spec)
    assert model.g_conv[0] == pytest.approx(g, rel=1e-12)
    assert model.C[0] == pytest.approx(c, rel=1e-12)
    return model


def small_prbs(ids, prbs=6.0, seed=3, max_power=2.0):
    return synth_wl1(SynthSpec(stress=2.0, prbs=prbs, cooldown=2.0, dwell=0.1, max_power=max_power, seed=seed), ids)


# ---------------------------------------------------------------------------
# steady state


def test_steady_single_node():
    model = scalar_model(g=0.1)
    assert steady_state(model, {"p": 1.0})[0] == pytest.approx(35.0, rel=1e-12)


def test_steady_zero_power_is_ambient():
    model = build_rc(quad_chiplets())
    assert np.array_equal(steady_state(model, {}), np.full(model.n_nodes, 25.0))


def test_steady_two_node_chain():
    spec = chip_on_slab(chip_grid=(1, 1), top_htc=0.0, bottom_htc=1000.0)
    model = build_rc(spec)
    slab, chip = model.layer_nodes("slab")[0].index, model.layer_nodes("die")[0].index
    g12 = model.G[slab, chip]
    gc = model.g_conv[slab]
    q = 3.0
    T = steady_state(model, {"p0": q})
    # the chip top is adiabatic, so all heat crosses chip -> slab -> ambient
    assert T[slab] == pytest.approx(25.0 + q / gc, rel=1e-12)
    assert T[chip] == pytest.approx(25.0 + q / gc + q / g12, rel=1e-12)


def test_singular_model():
    spec = chip_on_slab()
    spec = dataclasses.replace(spec, boundary=BoundarySpec(0.0, 0.0, 0.0, 25.0))
    # build refuses such a spec, so assemble by bypassing validation
    from mfit import rc

    orig = rc.validate_package
    rc.validate_package = lambda s: []
    try:
        model = build_rc(spec)
    finally:
        rc.validate_package = orig
    with pytest.raises(SingularModelError):
        steady_state(model, {"p0": 1.0})


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_energy_balance_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    model = build_rc(spec)
    if not model.power_ids:
        return
    p = rng.uniform(0, 5, len(model.power_ids))
    rise = steady_rise(model, p)
    assert float(model.g_conv @ rise) == pytest.approx(p.sum(), rel=1e-6, abs=1e-12)
    k = int(rng.integers(len(p)))
    p2 = p.copy()
    p2[k] += rng.uniform(0.1, 3)
    rise2 = steady_rise(model, p2)
    assert np.all(rise2 >= rise - 1e-9 * np.abs(rise).max())


# ---------------------------------------------------------------------------
# transient


def test_scalar_step_closed_form():
    model = scalar_model(g=0.1, c=1.0)
    res = simulate(model, constant_trace(["p"], 1.0, 100.0), SolverConfig(output_dt=0.1))
    exact = 25.0 + scalar_step_response(1.0, 0.1, 1.0, res.times)
    assert np.max(np.abs(res.values[:, 0] - exact)) <= 1e-4


def test_long_hold_reaches_steady():
    model = build_rc(chip_on_slab())
    res = simulate(model, constant_trace(["p0"], 2.0, 400.0), SolverConfig(output_dt=1.0))
    assert np.max(np.abs(res.values[-1] - steady_state(model, {"p0": 2.0}))) < 1e-4


def test_zero_power_is_bitwise_ambient():
    model = build_rc(quad_chiplets())
    res = simulate(model, constant_trace(model.power_ids, 0.0, 2.0))
    assert np.all(res.values == 25.0)


def test_initial_row_and_output_grid():
    model = build_rc(chip_on_slab())
    t0 = np.full(model.n_nodes, 40.0)
    res = simulate(model, constant_trace(["p0"], 1.0, 0.5), SolverConfig(output_dt=0.1), t_init=t0)
    assert np.array_equal(res.values[0], t0)
    assert res.times == pytest.approx(np.arange(6) * 0.1, abs=1e-15)
    with pytest.raises(ValueError):
        simulate(model, constant_trace(["p0"], 1.0, 0.5), t_init=t0[:-1])


def test_change_instant_sample_is_left_limit():
    model = scalar_model(g=0.1, c=1.0)
    trace = PowerTrace(np.array([0.0, 1.0]), ("p",), np.array([[1.0], [0.0]]), 2.0)
    res = simulate(model, trace, SolverConfig(output_dt=0.5, rtol=1e-9, atol=1e-12))
    k = res.nearest_index(1.0)
    assert res.values[k, 0] - 25.0 == pytest.approx(scalar_step_response(1.0, 0.1, 1.0, 1.0), rel=1e-6)


def test_unknown_power_block():
    model = build_rc(chip_on_slab())
    with pytest.raises(KeyError):
        simulate(model, constant_trace(["nope"], 1.0, 1.0))


def test_matches_implicit_euler_reference():
    rng = np.random.default_rng(11)
    while True:
        spec = random_spec(rng, max_nodes=50)
        model = build_rc(spec)
        if model.power_ids:
            break
    trace = small_prbs(list(model.power_ids), prbs=6.0)
    res = simulate(model, trace, SolverConfig(output_dt=0.01, rtol=1e-8, atol=1e-10))
    E = model.E
    times, ref = implicit_euler(model.G, model.C, lambda t: E @ trace.power_at(t), trace.end_time, 1e-4)
    ref = ref[::100] + model.ambient
    assert np.max(np.abs(res.values - ref)) <= 0.05


def test_mirror_symmetry():
    model = build_rc(quad_chiplets())
    trace = constant_trace(model.power_ids, 1.5, 3.0)
    res = simulate(model, trace, SolverConfig(output_dt=0.5))
    col = {nid: k for k, nid in enumerate(res.node_ids)}
    for i in range(2):
        for j in range(2):
            a = res.values[:, col[f"dies/c00/{i}_{j}"]]
            for other, (ii, jj) in (("c01", (1 - i, j)), ("c10", (i, 1 - j)), ("c11", (1 - i, 1 - j))):
                b = res.values[:, col[f"dies/{other}/{ii}_{jj}"]]
                assert np.max(np.abs(a - b)) <= 1e-6


def test_solver_failure_reports_time(monkeypatch):
    import mfit.solver as solver

    class Failed:
        status = -1
        message = "step size too small"
        t = np.array([0.0, 0.25])

    monkeypatch.setattr(solver, "solve_ivp", lambda *a, **k: Failed())
    with pytest.raises(SolverError) as info:
        simulate(build_rc(chip_on_slab()), constant_trace(["p0"], 1.0, 1.0))
    assert info.value.last_good_time == 0.25


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rtol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(output_dt=-1.0)


# ---------------------------------------------------------------------------
# heat maps


def test_heatmap_single_cell():
    model = scalar_model()
    hm = layer_heatmap(steady_trace(model, steady_state(model, {"p": 1.0})), model, "L0", 0.0)
    assert hm.values.shape == (1, 1)
    assert hm.values[0, 0] == pytest.approx(35.0)


def test_heatmap_symmetric_and_na(tmp_path):
    model = build_rc(quad_chiplets())
    T = steady_state(model, {pid: 1.0 for pid in model.power_ids})
    hm = layer_heatmap(steady_trace(model, T), model, "dies", 0.0)
    v = hm.values
    assert np.isnan(v).any()
    finite = ~np.isnan(v)
    assert np.array_equal(finite, finite[::-1, :]) and np.array_equal(finite, finite[:, ::-1])
    assert np.allclose(v[finite], v[::-1, :][finite], atol=1e-9)
    assert np.allclose(v[finite], v[:, ::-1][finite], atol=1e-9)
    path = tmp_path / hm.filename()
    hm.write_csv(path)
    assert hm.filename() == "dies_0.csv"
    assert "NA" in path.read_text()


def test_heatmap_hot_corner():
    spec = chip_on_slab(size=2e-3, chip_grid=(2, 2), power_blocks=(PowerBlock("p0", (1e-3, 1e-3), (1e-3, 1e-3)),))
    model = build_rc(spec)
    hm = layer_heatmap(steady_trace(model, steady_state(model, {"p0": 1.0})), model, "die", 0.0)
    j, i = np.unravel_index(np.argmax(hm.values), hm.values.shape)
    assert (i, j) == (1, 1)
    assert hm.y_edges[0] == 0.0 and hm.x_edges[-1] == pytest.approx(2e-3)


def test_heatmap_unknown_layer():
    model = scalar_model()
    with pytest.raises(ValueError, match="unknown layer"):
        layer_heatmap(steady_trace(model, steady_state(model, {})), model, "nope", 0.0)
