"""Analytical model tests: data movement, latency, resources, devices.

Expected values come from tests/oracles.py (independent closed forms and a
brute-force schedule simulator), not from the implementation.
"""

import json

import numpy as np
import pytest

import oracles
import support
from systune import design_space as ds
from systune import perf_model as pm
from systune.workload import make_cnn, make_mm


def _spec(w, df_text, ord_text):
    by_key = {(str(s.dataflow), str(s.ordering)): s for s in ds.enumerate_specs(w)}
    return by_key[(df_text, ord_text)]


# --- data movement ----------------------------------------------------------

def test_dm_output_resident_golden(mm1024):
    # reduction innermost: every output tile drained exactly once
    spec = _spec(mm1024, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (129, 130, 64), (1, 1), 1)
    assert pm.data_movement(p, "C") == 1_073_280
    assert pm.data_movement(p, "C") == oracles.eq1_dm_c(1024, 1024, 1024, 129, 130, 64)


def test_dm_output_hoisted_golden(mm1024):
    # reduction above a tile loop: partials leave and re-enter, factor 2
    spec = _spec(mm1024, "[i,j]", "<[i,k],j>")
    p = ds.DesignPoint(spec, (129, 130, 64), (1, 1), 1)
    assert pm.data_movement(p, "C") == 34_344_960
    assert pm.data_movement(p, "C") == oracles.eq2_dm_c(1024, 1024, 1024, 129, 130, 64)


def test_dm_hoisting_ratio_random_tiles(mm64):
    a = _spec(mm64, "[i,j]", "<[i,j],k>")
    b = _spec(mm64, "[i,j]", "<[i,k],j>")
    rng = np.random.default_rng(1)
    for _ in range(50):
        t1 = tuple(int(rng.integers(1, 65)) for _ in range(3))
        pa = ds.DesignPoint(a, t1, (1, 1), 1)
        pb = ds.DesignPoint(b, t1, (1, 1), 1)
        k_tiles = -(-64 // t1[2])
        assert pm.data_movement(pb, "C") == 2 * k_tiles * pm.data_movement(pa, "C")


def test_dm_single_tile_moves_each_array_once(mm64):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (64, 64, 64), (1, 1), 1)
    dm = pm.data_movement(p)
    assert dm == {"A": 64 * 64, "B": 64 * 64, "C": 64 * 64}


def test_dm_at_least_tile_footprint(cnn16):
    rng = np.random.default_rng(2)
    for spec in ds.enumerate_specs(cnn16)[:6]:
        for _ in range(20):
            p = support.random_repaired_point(spec, rng)
            dm = pm.data_movement(p)
            for a in cnn16.arrays:
                assert dm[a.name] >= a.tile_footprint(dict(zip(cnn16.loops, p.t1)))


# --- compute latency --------------------------------------------------------

def test_compute_latency_table_point(mm1024):
    # 43x10 PE grid, 4-wide SIMD: 3*13*(64/4) = 624 busy cycles, 53 drain
    spec = _spec(mm1024, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (129, 130, 64), (3, 13), 4)
    assert pm.pe_dims(p) == (43, 10)
    per_tile, total, n_tiles = pm.compute_latency(p)
    assert per_tile == 624 + 53
    assert n_tiles == 8 * 8 * 16
    assert total == per_tile * n_tiles


def test_compute_latency_tiny_grid():
    w = make_mm(4, 4, 4)
    spec = _spec(w, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (4, 4, 4), (1, 1), 1)
    per_tile, total, n_tiles = pm.compute_latency(p)
    assert n_tiles == 1
    assert per_tile == 1 * 1 * 4 + (4 + 4)  # busy + drain of the 4x4 wavefront
    assert total == per_tile


def test_compute_charged_on_padded_extents():
    # I=3 tiled by 2 covers 4 iterations; the padded quarter is real work
    w = make_mm(3, 4, 4)
    spec = _spec(w, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (2, 4, 4), (1, 1), 1)
    _, total, n_tiles = pm.compute_latency(p)
    assert n_tiles == 2
    assert total == 2 * (2 * 4 * 4 / (2 * 4) + (2 + 4))


def test_simd_never_slows_compute(mm64):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    base = ds.DesignPoint(spec, (16, 16, 64), (4, 4), 1)
    prev = pm.compute_latency(base).__getitem__(1)
    for t3 in (2, 4, 8, 16):
        cur = pm.compute_latency(ds.DesignPoint(spec, (16, 16, 64), (4, 4), t3))[1]
        assert cur <= prev
        prev = cur


# --- io latency -------------------------------------------------------------

def test_hoisted_output_pays_narrow_bus(mm64, u250):
    # same output tile, but partial-result streams ride the 8B network
    # instead of the 64B one: 8x more cycles per tile
    a = _spec(mm64, "[i,j]", "<[i,j],k>")
    b = _spec(mm64, "[i,j]", "<[i,k],j>")
    pa = ds.DesignPoint(a, (16, 16, 16), (1, 1), 1)
    pb = ds.DesignPoint(b, (16, 16, 16), (1, 1), 1)
    io_a = pm.io_latency(pa, u250)
    io_b = pm.io_latency(pb, u250)
    assert set(io_a) == {"A", "B", "C(out)"}
    assert set(io_b) == {"A", "B", "C(out)", "C(in)"}
    assert io_b["C(out)"]["per_tile"] == 8 * io_a["C(out)"]["per_tile"]


def test_latency_single_tile_is_pure_sequence(mm64, u250):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (64, 64, 64), (1, 1), 1)
    est = pm.evaluate(p, u250)
    br = est.breakdown
    assert br["n_tiles"] == 1
    assert est.latency_cycles == br["prologue"] + br["compute_total"] + br["epilogue"]


def test_latency_compute_bound_limit(mm64, u250):
    # compute per tile dwarfs every stream: steady state is N * compute
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (16, 64, 64), (16, 64), 1)  # single PE
    est = pm.evaluate(p, u250)
    br = est.breakdown
    assert br["compute_per_tile"] >= max(
        io["per_tile"] for io in br["io"].values())
    assert est.latency_cycles == br["prologue"] + \
        br["n_tiles"] * br["compute_per_tile"] + br["epilogue"]


def _sim_latency(point, device):
    """Re-derive latency from the odometer schedule simulator."""
    cd = pm.compiled(point.spec)
    counts = pm._tile_counts(cd, point)
    tiles = pm._band_tiles(cd, point)
    per_tile, _, _ = pm.compute_latency(point)
    ins, outs = [], []
    for s in cd.streams:
        io = pm._stream_io_tile(cd, s, tiles, device)
        (outs if s.direction == "out" else ins).append((s.suffix, io))
    pro, steady, epi = oracles.simulate_schedule(counts, per_tile, ins, outs)
    return pro + steady + epi


@pytest.mark.parametrize("dims,df,orde", [
    ((8, 8, 8), "[i,j]", "<[i,j],k>"),
    ((8, 8, 8), "[i,j]", "<[i,k],j>"),
    ((12, 6, 9), "[i]", "<[j,k],i>"),
    ((12, 6, 9), "[j,k]", "<[i,j],k>"),
])
def test_latency_matches_schedule_simulation_mm(dims, df, orde, u250):
    w = make_mm(*dims)
    spec = _spec(w, df, orde)
    rng = np.random.default_rng(sum(dims))
    for _ in range(40):
        p = support.random_repaired_point(spec, rng)
        assert pm.latency(p, u250) == _sim_latency(p, u250)


def test_latency_matches_schedule_simulation_cnn(u250):
    w = make_cnn(4, 4, 6, 6, 3, 3)
    rng = np.random.default_rng(9)
    for spec in ds.enumerate_specs(w)[::5]:
        for _ in range(25):
            p = support.random_repaired_point(spec, rng)
            assert pm.latency(p, u250) == _sim_latency(p, u250)


def test_latency_dominates_naive_max_model(mm64, u250):
    spec = _spec(mm64, "[j]", "<[j,k],i>")
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = support.random_repaired_point(spec, rng)
        assert pm.latency(p, u250) >= pm.naive_latency(p, u250)


# --- resources --------------------------------------------------------------

def test_single_lane_dsp_cost(mm64, u250):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (1, 1, 1), (1, 1), 1)
    _, dsp = pm.resources(p, u250)
    assert dsp == 5


def test_dsp_linear_in_simd_width(mm64, u250):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    d1 = pm.resources(ds.DesignPoint(spec, (8, 8, 32), (1, 1), 4), u250)[1]
    d2 = pm.resources(ds.DesignPoint(spec, (8, 8, 32), (1, 1), 8), u250)[1]
    assert d2 == 2 * d1


def test_table_point_saturates_u250_dsp(mm1024, u250):
    spec = _spec(mm1024, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (129, 130, 64), (3, 13), 4)
    bram, dsp = pm.resources(p, u250)
    assert dsp == 43 * 10 * 4 * 5 == 8600 == u250.dsp_available
    assert pm.feasible(p, u250)


def test_extra_partial_result_stream_costs_bram(mm64, u250):
    # the flow-innermost ordering drops the partial-result input module and
    # never allocates more memory at the same tiling
    a = _spec(mm64, "[i,j]", "<[i,j],k>")
    b = _spec(mm64, "[i,j]", "<[i,k],j>")
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = support.random_repaired_point(a, rng)
        bram_a = pm.resources(p, u250)[0]
        bram_b = pm.resources(ds.DesignPoint(b, p.t1, p.t2, p.t3), u250)[0]
        assert bram_a <= bram_b


def test_tiny_buffers_are_lutram(mm64, u250):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    p = ds.DesignPoint(spec, (1, 1, 1), (1, 1), 1)
    bram, _ = pm.resources(p, u250)
    assert bram == 0  # every tile fits the 512-bit LUTRAM threshold


def test_feasibility_boundaries(mm64, u250):
    spec = _spec(mm64, "[i,j]", "<[i,j],k>")
    assert pm.feasible(ds.DesignPoint(spec, (1, 1, 1), (1, 1), 1), u250)
    # 64x64 PEs * 32 lanes * 5 = way past 8600
    assert not pm.feasible(ds.DesignPoint(spec, (64, 64, 64), (1, 1), 32), u250)


def test_evaluate_breakdown_is_consistent(cnn16, u250):
    rng = np.random.default_rng(8)
    spec = ds.enumerate_specs(cnn16)[7]
    for _ in range(30):
        p = support.random_repaired_point(spec, rng)
        est = pm.evaluate(p, u250)
        br = est.breakdown
        assert est.latency_cycles == br["prologue"] + br["steady"] + br["epilogue"]
        assert est.latency_cycles >= br["compute_total"]
        for io in br["io"].values():
            assert est.latency_cycles >= io["total"]


# --- device handling --------------------------------------------------------

def test_presets_exist():
    assert set(pm.DEVICE_PRESETS) == {"u250-like", "small-test"}
    small = pm.DEVICE_PRESETS["small-test"]
    assert small.bram_blocks_available == 256
    assert small.dsp_available == 640


def test_zero_budget_device_is_constructible():
    dev = pm.DeviceBudget(name="null", bram_blocks_available=0, dsp_available=0)
    assert dev.dsp_available == 0


@pytest.mark.parametrize("field,value", [
    ("bram_blocks_available", -1),
    ("dram_port_bits", 0),
    ("l1_pack_bytes", -8),
])
def test_bad_device_fields_rejected(field, value):
    kw = dict(name="x", bram_blocks_available=16, dsp_available=16)
    kw[field] = value
    with pytest.raises(pm.ConfigError):
        pm.DeviceBudget(**kw)


def test_unknown_mac_width_rejected(u250):
    with pytest.raises(pm.ConfigError):
        u250.mac_cost(16)


def test_load_device_preset_and_file(tmp_path):
    assert pm.load_device("u250-like") is pm.DEVICE_PRESETS["u250-like"]
    f = tmp_path / "dev.json"
    f.write_text(json.dumps({
        "bram_blocks_available": 100, "dsp_available": 200,
        "dsp_cost_table": {"32": 5, "16": 2},
    }))
    dev = pm.load_device(f)
    assert dev.name == "dev"
    assert dev.mac_cost(16) == 2
    with pytest.raises(pm.ConfigError):
        pm.load_device("no-such-device")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(pm.ConfigError):
        pm.load_device(bad)
