"""Relaxed-optimization seeding for the evolutionary search.

Drops the integrality and divisibility constraints of the tiling lattice,
optimizes a normalized objective over the resulting box with multi-start
projected coordinate descent under quadratic resource penalties, then rounds
each optimum back onto the lattice. The survivors of a feasibility filter
become the initial population.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import design_space, perf_model
from .design_space import DesignPoint, DesignSpec
from .perf_model import DeviceBudget, compiled
from .workload import Workload


class Objective(Enum):
    OBJ1_NEG_DSP = "obj1"        # maximize DSP usage
    OBJ2_COMM = "obj2"           # minimize total off-chip movement
    OBJ3_COMM_MINUS_COMP = "obj3"  # movement minus DSP usage, both normalized

    @classmethod
    def from_name(cls, name: str) -> "Objective":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown objective {name!r}; expected obj1|obj2|obj3")


def dm_scale(workload: Workload) -> float:
    """Total element count of all arrays, halo included."""
    full = {l: workload.extent(l) for l in workload.loops}
    return float(sum(ref.tile_footprint(full) for ref in workload.arrays))


@dataclass
class RelaxedPoint:
    """Continuous tiling variables, same layout as a DesignPoint."""

    spec: DesignSpec
    t1: list[float]
    t2: list[float]
    t3: float

    def clamped(self) -> "RelaxedPoint":
        w = self.spec.workload
        t1 = [min(max(v, 1.0), w.extent(l)) for v, l in zip(self.t1, w.loops)]
        t2 = [min(max(v, 1.0), t1[w.loops.index(l)])
              for v, l in zip(self.t2, w.parallel_loops)]
        t3 = min(max(self.t3, 1.0), t1[w.loops.index(w.simd_loop)])
        return RelaxedPoint(self.spec, t1, t2, t3)


def _relaxed_model(rp: RelaxedPoint, device: DeviceBudget):
    """Real-valued DM total, DSP usage, and a smooth BRAM estimate."""
    rp = rp.clamped()
    w = rp.spec.workload
    cd = compiled(rp.spec)
    t1 = {l: v for l, v in zip(w.loops, rp.t1)}
    t2 = {l: v for l, v in zip(w.parallel_loops, rp.t2)}

    counts = [w.extent(l) / t1[l] for l in cd.sequence]
    tiles = [t1[l] for l in cd.sequence]

    pes = 1.0
    for l in cd.space_loops:
        pes *= t1[l] / (rp.t3 if l == w.simd_loop else t2[l])
    dsp_used = pes * rp.t3 * device.mac_cost(w.element_bits)

    dm_total = 0.0
    bram_bits = 0.0
    for s in cd.streams:
        fp = 1.0
        for depth, halo in s.footprint:
            fp *= tiles[depth] + halo
        loads = 1.0
        for d in range(s.suffix):
            loads *= counts[d]
        dm_total += loads * fp
        bram_bits += 2.0 * fp * s.element_bits
    for ref in w.arrays:
        if not ref.is_output:
            continue
        elems = 1.0
        for loop, _ in ref.index:
            if loop in cd.space_loops:
                elems *= rp.t3 if loop == w.simd_loop else t2[loop]
            else:
                elems *= t1[loop]
        bram_bits += pes * elems * ref.element_bits
    bram_blocks = bram_bits / device.bram_block_bits
    return dm_total, dsp_used, bram_blocks


def objective_value(rp: RelaxedPoint, objective: Objective, spec: DesignSpec,
                    device: DeviceBudget) -> float:
    dm_total, dsp_used, _ = _relaxed_model(rp, device)
    scale_dm = dm_scale(spec.workload)
    scale_dsp = float(max(device.dsp_available, 1))
    if objective is Objective.OBJ1_NEG_DSP:
        return -dsp_used / scale_dsp
    if objective is Objective.OBJ2_COMM:
        return dm_total / scale_dm
    return dm_total / scale_dm - dsp_used / scale_dsp


def _discrete_objective(point: DesignPoint, objective: Objective,
                        device: DeviceBudget) -> float:
    est = perf_model.evaluate(point, device)
    scale_dm = dm_scale(point.spec.workload)
    scale_dsp = float(max(device.dsp_available, 1))
    if objective is Objective.OBJ1_NEG_DSP:
        return -est.dsp_used / scale_dsp
    if objective is Objective.OBJ2_COMM:
        return sum(est.dm_per_array.values()) / scale_dm
    return sum(est.dm_per_array.values()) / scale_dm - est.dsp_used / scale_dsp


def _penalized(rp: RelaxedPoint, objective: Objective, spec: DesignSpec,
               device: DeviceBudget, weight: float) -> float:
    dm_total, dsp_used, bram_blocks = _relaxed_model(rp, device)
    scale_dm = dm_scale(spec.workload)
    scale_dsp = float(max(device.dsp_available, 1))
    if objective is Objective.OBJ1_NEG_DSP:
        obj = -dsp_used / scale_dsp
    elif objective is Objective.OBJ2_COMM:
        obj = dm_total / scale_dm
    else:
        obj = dm_total / scale_dm - dsp_used / scale_dsp
    over_dsp = max(0.0, dsp_used - device.dsp_available) / max(device.dsp_available, 1)
    over_bram = max(0.0, bram_blocks - device.bram_blocks_available) / \
        max(device.bram_blocks_available, 1)
    return obj + weight * (over_dsp ** 2 + over_bram ** 2)


def _grid(lo: float, hi: float, n: int = 17) -> list[float]:
    if hi <= lo:
        return [lo]
    return list(np.geomspace(lo, hi, n))


def _descend(rp: RelaxedPoint, objective: Objective, spec: DesignSpec,
             device: DeviceBudget, weight: float, max_iters: int) -> RelaxedPoint:
    w = spec.workload
    bounds = [(1.0, float(w.extent(l))) for l in w.loops]
    bounds += [(1.0, float(w.extent(l))) for l in w.parallel_loops]
    bounds.append((1.0, float(w.extent(w.simd_loop))))

    def get(vec):
        nl, npar = len(w.loops), len(w.parallel_loops)
        return RelaxedPoint(spec, list(vec[:nl]), list(vec[nl:nl + npar]),
                            float(vec[-1]))

    vec = list(rp.t1) + list(rp.t2) + [rp.t3]
    best = _penalized(get(vec), objective, spec, device, weight)
    for _ in range(max_iters):
        moved = False
        for i, (lo, hi) in enumerate(bounds):
            cur = vec[i]
            for cand in _grid(lo, hi):
                if cand == cur:
                    continue
                vec[i] = cand
                val = _penalized(get(vec), objective, spec, device, weight)
                if val < best - 1e-12:
                    best = val
                    cur = cand
                    moved = True
                else:
                    vec[i] = cur
        if not moved:
            break
    return get(vec).clamped()


def _round_candidates(rp: RelaxedPoint) -> list[DesignPoint]:
    """Floor/ceil cross product of all variables, repaired onto the lattice."""
    w = rp.spec.workload
    vec = list(rp.t1) + list(rp.t2) + [rp.t3]
    choices = []
    for v in vec:
        lo, hi = int(math.floor(v)), int(math.ceil(v))
        choices.append((lo,) if lo == hi else (lo, hi))
    nl, npar = len(w.loops), len(w.parallel_loops)
    points = []
    for combo in itertools.product(*choices):
        raw = DesignPoint(spec=rp.spec, t1=tuple(combo[:nl]),
                          t2=tuple(combo[nl:nl + npar]), t3=int(combo[-1]))
        points.append(design_space.repair(raw))
    return points


def solve(spec: DesignSpec, workload: Workload, device: DeviceBudget,
          objective: Objective, seed: int, m_starts: int = 16,
          max_iters: int = 200, k_best: int = 5) -> list[DesignPoint]:
    """Multi-start relaxed descent, rounded and filtered to feasible points.

    Returns up to k_best distinct feasible DesignPoints, best objective
    first; empty when nothing feasible rounds out, in which case the caller
    falls back to random initialization.
    """
    assert workload == spec.workload
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    w = workload
    weight = 10.0
    rounded: dict[str, DesignPoint] = {}
    for _ in range(m_starts):
        t1 = [math.exp(rng.uniform(0, math.log(w.extent(l)))) for l in w.loops]
        t2 = [rng.uniform(1.0, t1[w.loops.index(l)]) for l in w.parallel_loops]
        t3 = rng.uniform(1.0, t1[w.loops.index(w.simd_loop)])
        start = RelaxedPoint(spec, t1, t2, t3).clamped()
        opt = _descend(start, objective, spec, device, weight, max_iters)
        _, dsp_used, bram_blocks = _relaxed_model(opt, device)
        if dsp_used > device.dsp_available or bram_blocks > device.bram_blocks_available:
            weight *= 2.0  # restart violated: press harder on the constraints
        for point in _round_candidates(opt):
            if perf_model.feasible(point, device):
                rounded.setdefault(str(point), point)
    ranked = sorted(rounded.values(),
                    key=lambda p: (_discrete_objective(p, objective, device), str(p)))
    return _diverse_head(ranked, k_best)


def _shape_key(point: DesignPoint) -> tuple:
    """Coarse geometry bucket: log2 of SIMD width and of each PE dimension.

    Rounded candidates cluster around a few relaxed optima; picking the
    objective-best of each cluster gives the search distinct basins instead
    of five near-copies of one."""
    dims = perf_model.pe_dims(point)
    return (point.t3.bit_length(), tuple(d.bit_length() for d in dims))


def _diverse_head(ranked: list[DesignPoint], k_best: int) -> list[DesignPoint]:
    picks: list[int] = []
    seen_shapes = set()
    for idx, p in enumerate(ranked):
        key = _shape_key(p)
        if key not in seen_shapes:
            seen_shapes.add(key)
            picks.append(idx)
        if len(picks) == k_best:
            break
    for idx in range(len(ranked)):  # pad from the top if clusters were few
        if len(picks) == k_best:
            break
        if idx not in picks:
            picks.append(idx)
    return [ranked[i] for i in sorted(picks)]


def standalone_best(specs: list[DesignSpec], device: DeviceBudget,
                    objective: Objective, seed: int,
                    m_starts: int = 16) -> DesignPoint | None:
    """Best rounded point across a spec ensemble, by objective alone.

    This is the solver-only pipeline: no evolutionary refinement, so its
    winner is generally worse in latency than the hybrid flow's.
    """
    best: DesignPoint | None = None
    best_key = None
    for spec in specs:
        for point in solve(spec, spec.workload, device, objective, seed,
                           m_starts=m_starts, k_best=1):
            key = (_discrete_objective(point, objective, device), str(point))
            if best_key is None or key < best_key:
                best, best_key = point, key
    return best
