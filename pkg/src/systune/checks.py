"""Self-contained invariant suites behind the `validate` subcommand.

Each check returns (name, passed, detail). They mirror the core guarantees:
the data-movement closed forms, pruned-ordering dominance, operator closure,
the latency lower bound, and agreement between the evaluation backends.
"""

from __future__ import annotations

import numpy as np

from . import design_space, kernels, perf_model, search
from .design_space import DesignPoint, DesignSpec, LoopOrdering
from .perf_model import DEVICE_PRESETS, DeviceBudget
from .workload import make_mm


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


CheckResult = tuple[str, bool, str]


def check_dm_goldens(seed: int = 0, samples: int = 200) -> CheckResult:
    """Output-array traffic closed forms: with the reduction loop innermost
    the output moves once per (i, j) tile; hoisting the reduction loop
    multiplies the traffic by its tile count and a store+reload round trip."""
    rng = np.random.default_rng(seed)
    name = "dm-closed-forms"
    for _ in range(samples):
        dims = [int(rng.integers(4, 1025)) for _ in range(3)]
        w = make_mm(*dims)
        tiles = [int(rng.integers(1, d + 1)) for d in dims]
        df = design_space.enumerate_dataflows(w)[0]
        spec1 = DesignSpec(w, df, design_space.parse_ordering("<[i,j],k>"))
        spec2 = DesignSpec(w, df, design_space.parse_ordering("<[j,k],i>"))
        p1 = DesignPoint(spec1, t1=tuple(tiles), t2=(1, 1), t3=1)
        p2 = DesignPoint(spec2, t1=tuple(tiles), t2=(1, 1), t3=1)
        i, j, k = dims
        ti, tj, tk = tiles
        keep = _ceil_div(i, ti) * _ceil_div(j, tj) * ti * tj
        hoisted = 2 * _ceil_div(k, tk) * keep
        got1 = perf_model.data_movement(p1, "C")
        got2 = perf_model.data_movement(p2, "C")
        if got1 != keep:
            return (name, False,
                    f"innermost-reduction DM mismatch: {got1} != {keep} at "
                    f"dims={dims} tiles={tiles}")
        if got2 != hoisted:
            return (name, False,
                    f"hoisted-reduction DM mismatch: {got2} != {hoisted} at "
                    f"dims={dims} tiles={tiles}")
        if got2 != 2 * _ceil_div(k, tk) * got1:
            return (name, False, f"ratio identity broken at dims={dims}")
    return (name, True, f"{samples} random tuples matched exactly")


def _all_orderings(w) -> list[LoopOrdering]:
    import itertools
    perms = []
    for seq in itertools.permutations(w.loops):
        perms.append(LoopOrdering(outer=tuple(seq[:-1]), inner=(seq[-1],)))
    return perms


def check_pruned_ordering_dominance(seed: int = 0, min_points: int = 500,
                                    device: DeviceBudget | None = None
                                    ) -> CheckResult:
    """Every loop ordering outside the pruned set is weakly dominated in
    (latency, BRAM, DSP) by a pruned one at the same tiling."""
    name = "pruned-ordering-dominance"
    device = device or DEVICE_PRESETS["u250-like"]
    w = make_mm(64, 64, 64)
    pruned = design_space.prune_orderings(w)
    pruned_seqs = {o.sequence for o in pruned}
    others = [o for o in _all_orderings(w) if o.sequence not in pruned_seqs]
    rng = np.random.default_rng(seed)
    dataflows = design_space.enumerate_dataflows(w)
    checked = 0
    tried = 0
    while checked < min_points and tried < min_points * 50:
        tried += 1
        raw = DesignPoint(
            spec=DesignSpec(w, dataflows[0], pruned[0]),
            t1=tuple(int(rng.integers(1, 65)) for _ in range(3)),
            t2=tuple(int(rng.integers(1, 65)) for _ in range(2)),
            t3=int(rng.integers(1, 65)))
        point = design_space.repair(raw)
        df = dataflows[int(rng.integers(len(dataflows)))]
        if not perf_model.feasible(
                DesignPoint(DesignSpec(w, df, pruned[0]), point.t1, point.t2,
                            point.t3), device):
            continue
        checked += 1

        def score(ordering):
            p = DesignPoint(DesignSpec(w, df, ordering), point.t1, point.t2,
                            point.t3)
            est = perf_model.evaluate(p, device)
            return (est.latency_cycles, est.bram_used, est.dsp_used)

        pruned_scores = [score(o) for o in pruned]
        for o in others:
            s = score(o)
            dominated = any(all(ps[i] <= s[i] for i in range(3))
                            for ps in pruned_scores)
            if not dominated:
                return (name, False,
                        f"ordering {o} undominated at point {point}: {s} vs "
                        f"{pruned_scores}")
    if checked < min_points:
        return (name, False,
                f"could not sample {min_points} feasible points ({checked})")
    return (name, True,
            f"{checked} feasible points x {len(others)} orderings dominated")


def check_operator_closure(seed: int = 0, applications: int = 10000
                           ) -> CheckResult:
    """Random mutation/crossover chains never leave the valid-genome set,
    never lose padded coverage, and factorization conserves chain products."""
    name = "operator-closure"
    rng = np.random.default_rng(seed)
    w = make_mm(64, 64, 64)
    specs = design_space.enumerate_specs(w)
    genomes = [search.random_genome(specs[int(rng.integers(len(specs)))], rng)
               for _ in range(16)]
    for step in range(applications):
        gi = int(rng.integers(len(genomes)))
        g = genomes[gi]
        op = int(rng.integers(3))
        if op == 0:
            before = [1]
            for chain in g.chains:
                p = 1
                for b in chain:
                    p *= b
                before.append(p)
            g2 = search.mutate_factorization(g, rng)
            after = [1]
            for chain in g2.chains:
                p = 1
                for b in chain:
                    p *= b
                after.append(p)
            if sorted(before) != sorted(after):
                return (name, False, f"factorization changed products at {step}")
        elif op == 1:
            g2 = search.mutate_random(g, rng)
        else:
            mate = genomes[int(rng.integers(len(genomes)))]
            if mate.spec != g.spec:
                continue
            g2 = search.crossover(g, mate, rng)[0]
        if not g2.is_valid():
            return (name, False, f"invalid genome after op {op} at step {step}: {g2}")
        point = g2.decode()
        try:
            point.validate()
        except Exception as exc:
            return (name, False, f"decoded point invalid at step {step}: {exc}")
        for l, chain in zip(w.loops, g2.chains):
            t1 = 1
            for b in chain[1:]:
                t1 *= b
            if chain[0] * t1 < w.extent(l):
                return (name, False, f"padded coverage lost at step {step}")
        genomes[gi] = g2
    return (name, True, f"{applications} operator applications closed")


def check_latency_lower_bound(seed: int = 0, samples: int = 1000,
                              device: DeviceBudget | None = None) -> CheckResult:
    """latency >= max(total compute, each stream's total transfer), and the
    breakdown re-sums to the reported total."""
    name = "latency-lower-bound"
    device = device or DEVICE_PRESETS["u250-like"]
    rng = np.random.default_rng(seed)
    w = make_mm(64, 64, 64)
    specs = design_space.enumerate_specs(w)
    done = 0
    tried = 0
    while done < samples and tried < samples * 50:
        tried += 1
        spec = specs[int(rng.integers(len(specs)))]
        g = search.random_genome(spec, rng)
        point = g.decode()
        if not perf_model.feasible(point, device):
            continue
        done += 1
        est = perf_model.evaluate(point, device)
        total = est.breakdown["prologue"] + est.breakdown["steady"] + \
            est.breakdown["epilogue"]
        if total != est.latency_cycles:
            return (name, False, f"breakdown does not re-sum at {point}")
        if est.latency_cycles < est.breakdown["compute_total"]:
            return (name, False, f"latency below compute bound at {point}")
        for stream, io in est.breakdown["io"].items():
            if est.latency_cycles < io["total"]:
                return (name, False,
                        f"latency below {stream} transfer bound at {point}")
    if done < samples:
        return (name, False, f"could not sample {samples} feasible points")
    return (name, True, f"{done} feasible points bounded")


def check_backend_agreement(seed: int = 0, samples: int = 512) -> CheckResult:
    """The batch kernels agree with the scalar reference bit for bit."""
    name = "backend-agreement"
    rng = np.random.default_rng(seed)
    device = DEVICE_PRESETS["small-test"]
    w = make_mm(64, 64, 64)
    specs = design_space.enumerate_specs(w)
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    for spec in specs[:4]:
        desc = kernels.build_descriptor(spec, device)
        genomes = [search.random_genome(spec, rng) for _ in range(samples)]
        points = [g.decode() for g in genomes]
        rows = np.stack([kernels.point_to_row(p) for p in points])
        ref = []
        for p in points:
            est = perf_model.evaluate(p, device)
            ref.append((est.latency_cycles, est.bram_used, est.dsp_used))
        ref = np.array(ref, dtype=np.int64)
        for backend in backends:
            lat, bram, dsp = kernels.batch_evaluate(desc, rows, backend=backend)
            got = np.stack([lat, bram, dsp], axis=1)
            if not np.array_equal(got, ref):
                bad = int(np.flatnonzero((got != ref).any(axis=1))[0])
                return (name, False,
                        f"{backend} disagrees with reference at {points[bad]}: "
                        f"{got[bad].tolist()} vs {ref[bad].tolist()}")
    return (name, True,
            f"backends {backends} match the scalar reference on "
            f"{samples} points x 4 specs")


ALL_CHECKS = (
    check_dm_goldens,
    check_pruned_ordering_dominance,
    check_operator_closure,
    check_latency_lower_bound,
    check_backend_agreement,
)


def run_all(seed: int = 0) -> list[CheckResult]:
    return [check(seed=seed) for check in ALL_CHECKS]
