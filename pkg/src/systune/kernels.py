"""Batched candidate evaluation.

The search loop and the brute-force baseline evaluate millions of tilings,
so the model from perf_model is also expressed over int64 matrices: one row
per candidate, one column per tile knob. Two interchangeable backends:

* a numba @njit scalar loop (default),
* a vectorized pure-numpy path, selected with SYSTUNE_NO_NUMBA=1 or used
  automatically when numba is not importable.

Both must match perf_model.evaluate exactly; all arithmetic is integral.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .design_space import DesignPoint, DesignSpec
from .perf_model import DeviceBudget, compiled
from .workload import Workload

_NO_NUMBA_ENV = os.environ.get("SYSTUNE_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]


def default_backend() -> str:
    return "numba" if HAS_NUMBA and not _NO_NUMBA_ENV else "numpy"


# ---------------------------------------------------------------------------
# Candidate matrix layout
# ---------------------------------------------------------------------------

def columns(workload: Workload) -> list[tuple[str, str]]:
    """Column order of a candidate row: t1 per loop, t2 per parallel loop,
    then the SIMD width."""
    cols = [("t1", l) for l in workload.loops]
    cols += [("t2", l) for l in workload.parallel_loops]
    cols.append(("t3", workload.simd_loop))
    return cols


def point_to_row(point: DesignPoint) -> np.ndarray:
    return np.array(list(point.t1) + list(point.t2) + [point.t3], dtype=np.int64)


def row_to_point(spec: DesignSpec, row: np.ndarray) -> DesignPoint:
    w = spec.workload
    nl, np_ = len(w.loops), len(w.parallel_loops)
    return DesignPoint(spec=spec,
                       t1=tuple(int(v) for v in row[:nl]),
                       t2=tuple(int(v) for v in row[nl:nl + np_]),
                       t3=int(row[nl + np_]))


@dataclass(frozen=True)
class KernelDescriptor:
    """Numeric encoding of one DesignSpec + device for the batch kernels."""

    n_cols: int
    band_col: np.ndarray          # [m] X column of t1 at each band depth
    extents: np.ndarray           # [m] padded-from extents, band order
    space_t1_col: np.ndarray      # [n_space]
    space_split_col: np.ndarray   # [n_space] t2 col, or t3 col for the SIMD loop
    t3_col: int
    s_suffix: np.ndarray          # [S]
    s_is_in: np.ndarray           # [S]
    s_eff_bits: np.ndarray        # [S] DRAM bits moved per cycle for the stream
    s_bits: np.ndarray            # [S]
    s_banks_simd: np.ndarray      # [S]
    fp_col: np.ndarray            # [S, max_fp] X column per footprint factor
    fp_halo: np.ndarray           # [S, max_fp]
    fp_len: np.ndarray            # [S]
    acc_col: np.ndarray           # [A, max_acc] per-PE accumulator factors
    acc_len: np.ndarray           # [A]
    acc_bits: np.ndarray          # [A]
    mac_cost: int
    block_bits: int
    lutram_bits: int

    def as_args(self) -> tuple:
        return (self.band_col, self.extents, self.space_t1_col,
                self.space_split_col, self.t3_col, self.s_suffix, self.s_is_in,
                self.s_eff_bits, self.s_bits, self.s_banks_simd, self.fp_col,
                self.fp_halo, self.fp_len, self.acc_col, self.acc_len,
                self.acc_bits, self.mac_cost, self.block_bits, self.lutram_bits)


def build_descriptor(spec: DesignSpec, device: DeviceBudget) -> KernelDescriptor:
    cd = compiled(spec)
    w = cd.workload
    col_of = {c: i for i, c in enumerate(columns(w))}
    m = len(cd.sequence)

    band_col = np.array([col_of[("t1", l)] for l in cd.sequence], dtype=np.int64)
    extents = np.array([w.extent(l) for l in cd.sequence], dtype=np.int64)

    sp_t1, sp_split = [], []
    for l in cd.space_loops:
        sp_t1.append(col_of[("t1", l)])
        sp_split.append(col_of[("t3", l)] if l == w.simd_loop else col_of[("t2", l)])

    streams = cd.streams
    max_fp = max(len(s.footprint) for s in streams)
    fp_col = np.zeros((len(streams), max_fp), dtype=np.int64)
    fp_halo = np.zeros((len(streams), max_fp), dtype=np.int64)
    fp_len = np.zeros(len(streams), dtype=np.int64)
    s_suffix = np.zeros(len(streams), dtype=np.int64)
    s_is_in = np.zeros(len(streams), dtype=np.int64)
    s_eff = np.zeros(len(streams), dtype=np.int64)
    s_bits = np.zeros(len(streams), dtype=np.int64)
    s_banks = np.zeros(len(streams), dtype=np.int64)
    for i, s in enumerate(streams):
        s_suffix[i] = s.suffix
        s_is_in[i] = 1 if s.direction == "in" else 0
        pack = device.l1_pack_bytes if s.narrow else device.l2_pack_bytes
        s_eff[i] = min(device.dram_port_bits, pack * 8)
        s_bits[i] = s.element_bits
        s_banks[i] = 1 if s.banks_simd else 0
        fp_len[i] = len(s.footprint)
        for f, (depth, halo) in enumerate(s.footprint):
            fp_col[i, f] = band_col[depth]
            fp_halo[i, f] = halo

    outs = [ref for ref in w.arrays if ref.is_output]
    max_acc = max(len(ref.index) for ref in outs)
    acc_col = np.zeros((len(outs), max_acc), dtype=np.int64)
    acc_len = np.zeros(len(outs), dtype=np.int64)
    acc_bits = np.zeros(len(outs), dtype=np.int64)
    for a, ref in enumerate(outs):
        acc_len[a] = len(ref.index)
        acc_bits[a] = ref.element_bits
        for f, (loop, _halo) in enumerate(ref.index):
            if loop in cd.space_loops:
                acc_col[a, f] = col_of[("t3", loop)] if loop == w.simd_loop \
                    else col_of[("t2", loop)]
            else:
                acc_col[a, f] = col_of[("t1", loop)]

    return KernelDescriptor(
        n_cols=len(col_of),
        band_col=band_col, extents=extents,
        space_t1_col=np.array(sp_t1, dtype=np.int64),
        space_split_col=np.array(sp_split, dtype=np.int64),
        t3_col=col_of[("t3", w.simd_loop)],
        s_suffix=s_suffix, s_is_in=s_is_in, s_eff_bits=s_eff, s_bits=s_bits,
        s_banks_simd=s_banks, fp_col=fp_col, fp_halo=fp_halo, fp_len=fp_len,
        acc_col=acc_col, acc_len=acc_len, acc_bits=acc_bits,
        mac_cost=device.mac_cost(w.element_bits),
        block_bits=device.bram_block_bits,
        lutram_bits=device.lutram_threshold_bits,
    )


# ---------------------------------------------------------------------------
# numba backend: plain scalar loops, one candidate at a time
# ---------------------------------------------------------------------------

@njit(cache=True)
def _eval_batch_nb(X, band_col, extents, space_t1_col, space_split_col, t3_col,
                   s_suffix, s_is_in, s_eff_bits, s_bits, s_banks_simd,
                   fp_col, fp_halo, fp_len, acc_col, acc_len, acc_bits,
                   mac_cost, block_bits, lutram_bits,
                   out_lat, out_bram, out_dsp):  # pragma: no cover - runs compiled
    n = X.shape[0]
    m = band_col.shape[0]
    n_space = space_t1_col.shape[0]
    n_streams = s_suffix.shape[0]
    n_acc = acc_len.shape[0]
    counts = np.empty(m, dtype=np.int64)
    lmax = np.empty(m, dtype=np.int64)
    dmax = np.empty(m, dtype=np.int64)
    for r in range(n):
        n_tiles = np.int64(1)
        iters = np.int64(1)
        for d in range(m):
            t = X[r, band_col[d]]
            c = (extents[d] + t - 1) // t
            counts[d] = c
            n_tiles *= c
            iters *= t
        pes = np.int64(1)
        drain = np.int64(0)
        for j in range(n_space):
            dim = X[r, space_t1_col[j]] // X[r, space_split_col[j]]
            pes *= dim
            drain += dim
        t3 = X[r, t3_col]
        ct = iters // (pes * t3) + drain

        prologue = np.int64(0)
        epilogue = np.int64(0)
        for d in range(m):
            lmax[d] = 0
            dmax[d] = 0
        bram = np.int64(0)
        for s in range(n_streams):
            fp = np.int64(1)
            for f in range(fp_len[s]):
                fp *= X[r, fp_col[s, f]] + fp_halo[s, f]
            io = (fp * s_bits[s] + s_eff_bits[s] - 1) // s_eff_bits[s]
            if s_is_in[s] == 1:
                if io > prologue:
                    prologue = io
                for d in range(s_suffix[s]):
                    if io > lmax[d]:
                        lmax[d] = io
            else:
                if io > epilogue:
                    epilogue = io
                for d in range(s_suffix[s]):
                    if io > dmax[d]:
                        dmax[d] = io
            banks = t3 if s_banks_simd[s] == 1 else np.int64(1)
            if fp * s_bits[s] > lutram_bits:
                per_bank = ((fp + banks - 1) // banks) * s_bits[s]
                bram += 2 * banks * ((per_bank + block_bits - 1) // block_bits)
        for a in range(n_acc):
            elems = np.int64(1)
            for f in range(acc_len[a]):
                elems *= X[r, acc_col[a, f]]
            if elems * acc_bits[a] > lutram_bits:
                bram += pes * ((elems * acc_bits[a] + block_bits - 1) // block_bits)

        if n_tiles == 1:
            steady = ct
        else:
            dhat = 0
            for d in range(m):
                if counts[d] > 1:
                    dhat = d
            lh = lmax[dhat]
            dh = dmax[dhat]
            first = ct if ct > lh else lh
            last = ct if ct > dh else dh
            steady = first + last
            prefix = np.int64(1)
            for d in range(dhat):
                if counts[d] > 1:
                    x = ct
                    if lmax[d] > x:
                        x = lmax[d]
                    if dh > x:
                        x = dh
                    y = ct
                    if lh > y:
                        y = lh
                    if dmax[d] > y:
                        y = dmax[d]
                    steady += prefix * (counts[d] - 1) * (x + y)
                prefix *= counts[d]
            z = ct
            if lh > z:
                z = lh
            if dh > z:
                z = dh
            steady += (n_tiles - 2 * (n_tiles // counts[dhat])) * z
        out_lat[r] = prologue + steady + epilogue
        out_bram[r] = bram
        out_dsp[r] = pes * t3 * mac_cost


# ---------------------------------------------------------------------------
# numpy backend: same math, whole-column operations
# ---------------------------------------------------------------------------

def _eval_batch_np(X, band_col, extents, space_t1_col, space_split_col, t3_col,
                   s_suffix, s_is_in, s_eff_bits, s_bits, s_banks_simd,
                   fp_col, fp_halo, fp_len, acc_col, acc_len, acc_bits,
                   mac_cost, block_bits, lutram_bits,
                   out_lat, out_bram, out_dsp):
    n = X.shape[0]
    m = band_col.shape[0]
    t1_band = X[:, band_col]
    counts = -(-extents[None, :] // t1_band)
    n_tiles = counts.prod(axis=1)
    iters = t1_band.prod(axis=1)
    dims = X[:, space_t1_col] // X[:, space_split_col]
    pes = dims.prod(axis=1)
    drain = dims.sum(axis=1)
    t3 = X[:, t3_col]
    ct = iters // (pes * t3) + drain

    prologue = np.zeros(n, dtype=np.int64)
    epilogue = np.zeros(n, dtype=np.int64)
    lmax = np.zeros((n, m), dtype=np.int64)
    dmax = np.zeros((n, m), dtype=np.int64)
    bram = np.zeros(n, dtype=np.int64)
    for s in range(s_suffix.shape[0]):
        fp = np.ones(n, dtype=np.int64)
        for f in range(fp_len[s]):
            fp = fp * (X[:, fp_col[s, f]] + fp_halo[s, f])
        io = -(-(fp * s_bits[s]) // s_eff_bits[s])
        if s_is_in[s] == 1:
            np.maximum(prologue, io, out=prologue)
            for d in range(s_suffix[s]):
                np.maximum(lmax[:, d], io, out=lmax[:, d])
        else:
            np.maximum(epilogue, io, out=epilogue)
            for d in range(s_suffix[s]):
                np.maximum(dmax[:, d], io, out=dmax[:, d])
        banks = t3 if s_banks_simd[s] == 1 else np.ones(n, dtype=np.int64)
        per_bank = -(-fp // banks) * s_bits[s]
        blocks = 2 * banks * -(-per_bank // block_bits)
        bram += np.where(fp * s_bits[s] > lutram_bits, blocks, 0)
    for a in range(acc_len.shape[0]):
        elems = np.ones(n, dtype=np.int64)
        for f in range(acc_len[a]):
            elems = elems * X[:, acc_col[a, f]]
        blocks = -(-(elems * acc_bits[a]) // block_bits)
        bram += np.where(elems * acc_bits[a] > lutram_bits, pes * blocks, 0)

    # deepest band position that actually has more than one tile
    multi = counts > 1
    dhat = m - 1 - multi[:, ::-1].argmax(axis=1)
    lh = np.take_along_axis(lmax, dhat[:, None], axis=1)[:, 0]
    dh = np.take_along_axis(dmax, dhat[:, None], axis=1)[:, 0]
    steady = np.maximum(ct, lh) + np.maximum(ct, dh)
    prefix = np.ones(n, dtype=np.int64)
    for d in range(m - 1):
        active = (d < dhat) & multi[:, d]
        x = np.maximum(np.maximum(ct, lmax[:, d]), dh)
        y = np.maximum(np.maximum(ct, lh), dmax[:, d])
        t_d = prefix * (counts[:, d] - 1)
        steady += np.where(active, t_d * (x + y), 0)
        prefix *= np.where(d < dhat, counts[:, d], 1)
    n_dhat = np.take_along_axis(counts, dhat[:, None], axis=1)[:, 0]
    steady += (n_tiles - 2 * (n_tiles // n_dhat)) * \
        np.maximum(np.maximum(ct, lh), dh)
    steady = np.where(n_tiles == 1, ct, steady)

    out_lat[:] = prologue + steady + epilogue
    out_bram[:] = bram
    out_dsp[:] = pes * t3 * mac_cost


def batch_evaluate(desc: KernelDescriptor, X: np.ndarray,
                   backend: str | None = None
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate candidate rows: (latency, bram, dsp), all int64.

    Rows must already satisfy the divisibility constraints (use
    design_space.repair / Genome decoding); the kernels do not re-check.
    """
    if backend is None:
        backend = default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not available")
    X = np.ascontiguousarray(X, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != desc.n_cols:
        raise ValueError(f"expected shape (n, {desc.n_cols}), got {X.shape}")
    n = X.shape[0]
    lat = np.empty(n, dtype=np.int64)
    bram = np.empty(n, dtype=np.int64)
    dsp = np.empty(n, dtype=np.int64)
    fn = _eval_batch_nb if backend == "numba" else _eval_batch_np
    fn(X, *desc.as_args(), lat, bram, dsp)
    return lat, bram, dsp
