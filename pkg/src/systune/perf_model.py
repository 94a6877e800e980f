"""Analytical performance and resource models.

Maps a DesignPoint to off-chip data movement, a double-buffered latency with
explicit prologue/epilogue, and BRAM/DSP usage. All functions are pure; the
scalar implementations here are the reference semantics, and kernels.py
carries batched equivalents for the search hot path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from .design_space import DesignPoint, DesignSpec
from .workload import Workload


class ConfigError(Exception):
    """Bad device database or CLI configuration."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class DeviceBudget:
    name: str
    bram_blocks_available: int
    dsp_available: int
    bram_block_bits: int = 18432
    dram_port_bits: int = 512
    l1_pack_bytes: int = 8
    l2_pack_bytes: int = 64
    # (element_bits, DSPs per MAC lane) pairs
    dsp_cost_table: tuple[tuple[int, int], ...] = ((32, 5),)
    # buffers at or below this size are register/LUTRAM mapped, costing 0 blocks
    lutram_threshold_bits: int = 512

    def __post_init__(self):
        for fname in ("bram_blocks_available", "dsp_available"):
            if getattr(self, fname) < 0:
                raise ConfigError(f"device field {fname} must be nonnegative")
        for fname in ("bram_block_bits", "dram_port_bits", "l1_pack_bytes",
                      "l2_pack_bytes"):
            if getattr(self, fname) <= 0:
                raise ConfigError(f"device field {fname} must be positive")

    def mac_cost(self, element_bits: int) -> int:
        for bits, cost in self.dsp_cost_table:
            if bits == element_bits:
                return cost
        raise ConfigError(
            f"no DSP cost entry for a {element_bits}-bit MAC in device {self.name!r}")


DEVICE_PRESETS = {
    # budget sized so that a ~1700-lane fp32 array saturates DSPs
    "u250-like": DeviceBudget(name="u250-like", bram_blocks_available=5376,
                              dsp_available=8600),
    # small enough that 64^3 problems leave a nontrivial trade-off
    "small-test": DeviceBudget(name="small-test", bram_blocks_available=256,
                               dsp_available=640),
}


def load_device(spec: str | Path) -> DeviceBudget:
    """Resolve a preset name or a JSON device file."""
    if isinstance(spec, str) and spec in DEVICE_PRESETS:
        return DEVICE_PRESETS[spec]
    path = Path(spec)
    if not path.exists():
        raise ConfigError(
            f"unknown device {spec!r}: not a preset {sorted(DEVICE_PRESETS)} or a file")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"device file {path}: invalid JSON: {exc}") from exc
    if "dsp_cost_table" in raw:
        raw["dsp_cost_table"] = tuple(
            (int(k), int(v)) for k, v in sorted(raw["dsp_cost_table"].items()))
    raw.setdefault("name", path.stem)
    try:
        return DeviceBudget(**raw)
    except TypeError as exc:
        raise ConfigError(f"device file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Compiled spec descriptor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stream:
    """One directional DRAM stream of an array.

    suffix: band depth s such that the stream moves a fresh tile exactly on
    transitions whose shallowest changed loop is above depth s. Reuse is
    only possible across the innermost run of loops that do not index the
    array, which s encodes structurally.
    """

    array: str
    direction: str                       # "in" | "out"
    suffix: int
    narrow: bool                         # True: per-PE path, l1 pack width
    banks_simd: bool
    footprint: tuple[tuple[int, int], ...]   # (loop position in band, halo)
    element_bits: int


@dataclass(frozen=True)
class CompiledDesign:
    workload: Workload
    space_loops: tuple[str, ...]
    sequence: tuple[str, ...]            # band order, outermost first
    streams: tuple[Stream, ...]
    flow_reloads: tuple[tuple[str, bool], ...] = field(default_factory=tuple)

    def extent_at(self, depth: int) -> int:
        return self.workload.extent(self.sequence[depth])


@lru_cache(maxsize=None)
def compile_design(workload: Workload, space_loops: tuple[str, ...],
                   sequence: tuple[str, ...]) -> CompiledDesign:
    if sorted(sequence) != sorted(workload.loops):
        raise ValueError(f"ordering {sequence} is not a permutation of {workload.loops}")
    for l in space_loops:
        if l not in workload.space_candidates:
            raise ValueError(f"loop {l} cannot be a space loop for {workload.kind}")
    pos = {l: d for d, l in enumerate(sequence)}
    m = len(sequence)

    streams = []
    flow_reloads = []
    for ref in workload.arrays:
        indexed = ref.indexed_loops()
        suffix = m
        while suffix > 0 and sequence[suffix - 1] not in indexed:
            suffix -= 1
        fp = tuple(sorted((pos[l], halo) for l, halo in ref.index))
        banks = workload.simd_loop in indexed
        if ref.is_output:
            # flow loop hoisted above an indexing loop: partial results leave
            # the chip and come back, through the narrow per-PE path
            reload_out = any(pos[f] < pos[l] for f in ref.carried_flow for l in indexed)
            flow_reloads.append((ref.name, reload_out))
            streams.append(Stream(ref.name, "out", suffix, reload_out, banks,
                                  fp, ref.element_bits))
            if reload_out:
                streams.append(Stream(ref.name, "in", suffix, True, banks,
                                      fp, ref.element_bits))
        else:
            streams.append(Stream(ref.name, "in", suffix, False, banks,
                                  fp, ref.element_bits))
    return CompiledDesign(workload, space_loops, sequence, tuple(streams),
                          tuple(flow_reloads))


def compiled(spec: DesignSpec) -> CompiledDesign:
    return compile_design(spec.workload, spec.dataflow.space_loops,
                          spec.ordering.sequence)


# ---------------------------------------------------------------------------
# Model pieces
# ---------------------------------------------------------------------------

def _band_tiles(cd: CompiledDesign, point: DesignPoint) -> list[int]:
    return [point.t1_of(l) for l in cd.sequence]


def _tile_counts(cd: CompiledDesign, point: DesignPoint) -> list[int]:
    return [_ceil_div(cd.workload.extent(l), point.t1_of(l)) for l in cd.sequence]


def pe_dims(point: DesignPoint) -> tuple[int, ...]:
    """PE array shape: parallel space loops contribute t1/t2, the SIMD loop
    (when spatial) contributes t1/t3 since its tile splits between the array
    dimension and the vector lanes."""
    w = point.spec.workload
    dims = []
    for l in point.spec.dataflow.space_loops:
        if l == w.simd_loop:
            dims.append(point.t1_of(l) // point.t3)
        else:
            dims.append(point.t1_of(l) // point.t2_of(l))
    return tuple(dims)


def pe_count(point: DesignPoint) -> int:
    n = 1
    for d in pe_dims(point):
        n *= d
    return n


def _stream_footprint(cd: CompiledDesign, stream: Stream, tiles: list[int]) -> int:
    n = 1
    for depth, halo in stream.footprint:
        n *= tiles[depth] + halo
    return n


def _stream_io_tile(cd: CompiledDesign, stream: Stream, tiles: list[int],
                    device: DeviceBudget) -> int:
    pack = device.l1_pack_bytes if stream.narrow else device.l2_pack_bytes
    eff_bits = min(device.dram_port_bits, pack * 8)
    return _ceil_div(_stream_footprint(cd, stream, tiles) * stream.element_bits,
                     eff_bits)


def _loads(counts: list[int], suffix: int) -> int:
    n = 1
    for d in range(suffix):
        n *= counts[d]
    return n


def data_movement(point: DesignPoint, array: str | None = None):
    """Off-chip element traffic per array. A stream refetches a tile whenever
    any loop above its reuse suffix advances; flow arrays with a hoisted flow
    loop pay the round trip twice."""
    cd = compiled(point.spec)
    counts = _tile_counts(cd, point)
    tiles = _band_tiles(cd, point)
    dm: dict[str, int] = {}
    for s in cd.streams:
        dm[s.array] = dm.get(s.array, 0) + \
            _loads(counts, s.suffix) * _stream_footprint(cd, s, tiles)
    if array is not None:
        return dm[array]
    return dm


def compute_latency(point: DesignPoint) -> tuple[int, int, int]:
    """(cycles per tile, total compute cycles, tile count).

    Per tile, each PE runs the tile's iteration space divided by the array
    size and the SIMD width at initiation interval 1, then the systolic
    wavefront drains across the array diagonal. Tile counts use padded
    extents, so non-divisor tiles are charged for the padding.
    """
    cd = compiled(point.spec)
    tiles = _band_tiles(cd, point)
    iters = 1
    for t in tiles:
        iters *= t
    per_tile = iters // (pe_count(point) * point.t3) + sum(pe_dims(point))
    n_tiles = 1
    for c in _tile_counts(cd, point):
        n_tiles *= c
    return per_tile, per_tile * n_tiles, n_tiles


def io_latency(point: DesignPoint, device: DeviceBudget,
               array: str | None = None) -> dict[str, dict[str, int]]:
    """Per-stream transfer cycles: one tile and the whole run."""
    cd = compiled(point.spec)
    counts = _tile_counts(cd, point)
    tiles = _band_tiles(cd, point)
    out: dict[str, dict[str, int]] = {}
    for s in cd.streams:
        name = s.array if s.direction == "in" and not s.narrow else \
            f"{s.array}({s.direction})"
        per_tile = _stream_io_tile(cd, s, tiles, device)
        out[name] = {"per_tile": per_tile,
                     "tiles": _loads(counts, s.suffix),
                     "total": per_tile * _loads(counts, s.suffix)}
    if array is not None:
        return {k: v for k, v in out.items() if k.split("(")[0] == array}
    return out


def _latency_parts(cd: CompiledDesign, point: DesignPoint, device: DeviceBudget):
    counts = _tile_counts(cd, point)
    tiles = _band_tiles(cd, point)
    per_tile, total_compute, n_tiles = compute_latency(point)

    ins, outs = [], []
    for s in cd.streams:
        io = _stream_io_tile(cd, s, tiles, device)
        (ins if s.direction == "in" else outs).append((s.suffix, io))

    prologue = max((io for _, io in ins), default=0)
    epilogue = max((io for _, io in outs), default=0)

    def load_at(d):
        return max((io for suf, io in ins if d < suf), default=0)

    def drain_at(d):
        return max((io for suf, io in outs if d < suf), default=0)

    if n_tiles == 1:
        steady = per_tile
    else:
        dhat = max(d for d, c in enumerate(counts) if c > 1)
        l_hat, d_hat = load_at(dhat), drain_at(dhat)
        # first slot has no drain pending, last slot has nothing to prefetch
        steady = max(per_tile, l_hat) + max(per_tile, d_hat)
        prefix = 1
        for d in range(dhat):
            if counts[d] > 1:
                # every shallow transition is sandwiched between deepest-level ones
                t_d = prefix * (counts[d] - 1)
                steady += t_d * (max(per_tile, load_at(d), d_hat) +
                                 max(per_tile, l_hat, drain_at(d)))
            prefix *= counts[d]
        steady += (n_tiles - 2 * (n_tiles // counts[dhat])) * \
            max(per_tile, l_hat, d_hat)
    return prologue, steady, epilogue, counts, per_tile, total_compute, n_tiles


def latency(point: DesignPoint, device: DeviceBudget) -> int:
    cd = compiled(point.spec)
    prologue, steady, epilogue, *_ = _latency_parts(cd, point, device)
    return prologue + steady + epilogue


def naive_latency(point: DesignPoint, device: DeviceBudget) -> int:
    """The overlap-everything model: max of total compute and the slowest
    stream. Ignores prologue/epilogue and per-slot interference."""
    _, total_compute, _ = compute_latency(point)
    ios = io_latency(point, device)
    return max(total_compute, max((v["total"] for v in ios.values()), default=0))


def _buffer_blocks(elements: int, element_bits: int, banks: int,
                   device: DeviceBudget) -> int:
    bits = elements * element_bits
    if bits <= device.lutram_threshold_bits:
        return 0
    per_bank_bits = _ceil_div(elements, banks) * element_bits
    return banks * _ceil_div(per_bank_bits, device.bram_block_bits)


def resources(point: DesignPoint, device: DeviceBudget) -> tuple[int, int]:
    """(BRAM blocks, DSPs).

    BRAM: double-buffered top-level tile buffers per stream (SIMD-indexed
    arrays are banked t3 ways for parallel lane access), plus per-PE
    accumulators for flow arrays. DSP: one MAC per lane.
    """
    cd = compiled(point.spec)
    w = cd.workload
    tiles = _band_tiles(cd, point)
    bram = 0
    for s in cd.streams:
        banks = point.t3 if s.banks_simd else 1
        bram += 2 * _buffer_blocks(_stream_footprint(cd, s, tiles), s.element_bits,
                                   banks, device)
    pes = pe_count(point)
    for ref in w.arrays:
        if not ref.is_output:
            continue
        elems = 1
        for loop, _ in ref.index:
            if loop in cd.space_loops:
                elems *= point.t3 if loop == w.simd_loop else point.t2_of(loop)
            else:
                elems *= point.t1_of(loop)
        bram += pes * _buffer_blocks(elems, ref.element_bits, 1, device)
    dsp = pes * point.t3 * device.mac_cost(w.element_bits)
    return bram, dsp


def feasible(point: DesignPoint, device: DeviceBudget) -> bool:
    bram, dsp = resources(point, device)
    return bram <= device.bram_blocks_available and dsp <= device.dsp_available


@dataclass
class PerfEstimate:
    latency_cycles: int
    dm_per_array: dict[str, int]
    bram_used: int
    dsp_used: int
    feasible: bool
    breakdown: dict

    def throughput(self) -> float:
        return 1.0 / self.latency_cycles


def evaluate(point: DesignPoint, device: DeviceBudget) -> PerfEstimate:
    point.validate()
    cd = compiled(point.spec)
    prologue, steady, epilogue, counts, per_tile, total_compute, n_tiles = \
        _latency_parts(cd, point, device)
    total = prologue + steady + epilogue
    bram, dsp = resources(point, device)
    ios = io_latency(point, device)
    breakdown = {
        "prologue": prologue,
        "steady": steady,
        "epilogue": epilogue,
        "compute_per_tile": per_tile,
        "compute_total": total_compute,
        "tile_counts": list(counts),
        "n_tiles": n_tiles,
        "io": ios,
    }
    return PerfEstimate(
        latency_cycles=total,
        dm_per_array=data_movement(point),
        bram_used=bram,
        dsp_used=dsp,
        feasible=bram <= device.bram_blocks_available and dsp <= device.dsp_available,
        breakdown=breakdown,
    )
