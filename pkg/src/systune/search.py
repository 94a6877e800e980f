"""Evolutionary tiling search and the brute-force baselines.

Candidates are genomes: per original loop, the chain of derived loop bounds
after tiling. For a parallel loop that is (tile count, t1/t2, t2); for the
SIMD loop (tile count, t1/t3, t3); for untiled-inner loops (tile count, t1).
The chain view makes both mutation flavors natural: factorization moves a
divisor between levels of one chain (product conserved, stays on the divisor
lattice), random mutation resizes one level and ceil-repairs a sibling,
which is what introduces non-divisor tiles.
"""

from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import design_space
from .design_space import DesignPoint, DesignSpec, divisors, largest_divisor_at_most
from .kernels import batch_evaluate, build_descriptor, columns, point_to_row
from .perf_model import DeviceBudget
from .workload import Workload


class SearchSpaceError(Exception):
    """Enumeration refused: the lattice is too large."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


# ---------------------------------------------------------------------------
# Genome
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Genome:
    spec: DesignSpec
    chains: tuple[tuple[int, ...], ...]   # aligned with workload.loops

    def decode(self) -> DesignPoint:
        w = self.spec.workload
        t1, t2 = [], []
        t3 = 1
        for l, chain in zip(w.loops, self.chains):
            inner = 1
            for b in chain[1:]:
                inner *= b
            t1.append(inner)
            if l in w.parallel_loops:
                t2.append(chain[2])
            if l == w.simd_loop:
                t3 = chain[2]
        return DesignPoint(spec=self.spec, t1=tuple(t1), t2=tuple(t2), t3=t3)

    @staticmethod
    def encode(point: DesignPoint) -> "Genome":
        w = point.spec.workload
        chains = []
        for l in w.loops:
            t1 = point.t1_of(l)
            count = _ceil_div(w.extent(l), t1)
            if l in w.parallel_loops:
                t2 = point.t2_of(l)
                chains.append((count, t1 // t2, t2))
            elif l == w.simd_loop:
                chains.append((count, t1 // point.t3, point.t3))
            else:
                chains.append((count, t1))
        return Genome(point.spec, tuple(chains))

    def is_valid(self) -> bool:
        w = self.spec.workload
        if len(self.chains) != len(w.loops):
            return False
        for l, chain in zip(w.loops, self.chains):
            expect_len = 3 if (l in w.parallel_loops or l == w.simd_loop) else 2
            if len(chain) != expect_len:
                return False
            if any(b < 1 for b in chain):
                return False
            t1 = 1
            for b in chain[1:]:
                t1 *= b
            if t1 > w.extent(l):
                return False
            if chain[0] != _ceil_div(w.extent(l), t1):
                return False
        return True

    def flat(self) -> tuple[int, ...]:
        return tuple(itertools.chain.from_iterable(self.chains))

    def short(self) -> str:
        w = self.spec.workload
        return ";".join(f"{l}=" + ".".join(str(b) for b in chain)
                        for l, chain in zip(w.loops, self.chains))


def random_genome(spec: DesignSpec, rng: np.random.Generator,
                  divisor_only: bool = False) -> Genome:
    w = spec.workload
    chains = []
    for l in w.loops:
        extent = w.extent(l)
        if divisor_only:
            divs = divisors(extent)
            t1 = int(divs[rng.integers(len(divs))])
        else:
            t1 = int(rng.integers(1, extent + 1))
        if l in w.parallel_loops or l == w.simd_loop:
            divs = divisors(t1)
            split = int(divs[rng.integers(len(divs))])
            chains.append((_ceil_div(extent, t1), t1 // split, split))
        else:
            chains.append((_ceil_div(extent, t1), t1))
    return Genome(spec, tuple(chains))


def _snap_to_divisors(point: DesignPoint) -> DesignPoint:
    w = point.spec.workload
    t1 = tuple(largest_divisor_at_most(w.extent(l), point.t1_of(l))
               for l in w.loops)
    return design_space.repair(DesignPoint(spec=point.spec, t1=t1,
                                           t2=point.t2, t3=point.t3))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def mutate_factorization(genome: Genome, rng: np.random.Generator) -> Genome:
    """Move a divisor between two levels of one chain. The chain product is
    conserved exactly, so divisor tilings stay divisor tilings; moves that
    would break tile-count consistency or push t1 past the extent are not
    offered. Returns the genome unchanged if no valid move exists."""
    moves = []
    for li, chain in enumerate(genome.chains):
        for src in range(len(chain)):
            for d in divisors(chain[src]):
                if d == 1:
                    continue
                for dst in range(len(chain)):
                    if dst == src:
                        continue
                    new_chain = list(chain)
                    new_chain[src] //= d
                    new_chain[dst] *= d
                    chains = list(genome.chains)
                    chains[li] = tuple(new_chain)
                    cand = Genome(genome.spec, tuple(chains))
                    if cand.is_valid():
                        moves.append(cand)
    if not moves:
        return genome
    return moves[int(rng.integers(len(moves)))]


def _renormalized(spec: DesignSpec, point: DesignPoint) -> Genome:
    return Genome.encode(design_space.repair(point))


def mutate_random(genome: Genome, rng: np.random.Generator) -> Genome:
    """Resize one level to a uniform draw in [1, bound] and ceil-repair a
    sibling so the padded extent stays covered; this is the move that leaves
    the divisor lattice."""
    w = genome.spec.workload
    slots = [(li, lv) for li, chain in enumerate(genome.chains)
             for lv in range(len(chain))]
    li, lv = slots[int(rng.integers(len(slots)))]
    chain = list(genome.chains[li])
    others = [j for j in range(len(chain)) if j != lv]
    sib = others[int(rng.integers(len(others)))]
    s = int(rng.integers(1, chain[lv] + 1))
    chain[sib] = _ceil_div(chain[lv] * chain[sib], s)
    chain[lv] = s
    chains = list(genome.chains)
    chains[li] = tuple(chain)
    return _renormalized(genome.spec, Genome(genome.spec, tuple(chains)).decode())


def mutate(genome: Genome, rng: np.random.Generator, alpha: float) -> Genome:
    if rng.random() < alpha:
        return mutate_factorization(genome, rng)
    return mutate_random(genome, rng)


def crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator
              ) -> tuple[Genome, Genome]:
    """Swap whole bound-chains per original loop; tiling constraints are
    chain-local, so offspring need no repair."""
    if parent_a.spec != parent_b.spec:
        raise ValueError("crossover requires parents of the same spec")
    n = len(parent_a.chains)
    mask = rng.integers(0, 2, size=n)
    ca, cb = [], []
    for i in range(n):
        if mask[i]:
            ca.append(parent_b.chains[i])
            cb.append(parent_a.chains[i])
        else:
            ca.append(parent_a.chains[i])
            cb.append(parent_b.chains[i])
    return (Genome(parent_a.spec, tuple(ca)), Genome(parent_a.spec, tuple(cb)))


# ---------------------------------------------------------------------------
# Config / trace / result
# ---------------------------------------------------------------------------

@dataclass
class SearchConfig:
    population_size: int = 50
    elite_fraction: float = 0.2
    alpha: float = 0.4
    crossover_rate: float = 0.7
    max_evaluations: int = 3000
    max_seconds: float | None = None
    rng_seed: int | None = None
    divisor_only: bool = False
    model: str = "full"   # "full" | "naive": fitness model used during search

    def validate(self):
        if self.model not in ("full", "naive"):
            raise ValueError("model must be 'full' or 'naive'")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must be in (0, 1)")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")


TRACE_COLUMNS = ("eval_idx", "ms", "spec", "genome", "latency", "bram", "dsp",
                 "best_latency")


@dataclass
class SearchTrace:
    spec_key: str
    records: list[tuple] = field(default_factory=list)

    def append(self, eval_idx: int, ms: int, genome: str, latency: int,
               bram: int, dsp: int, best_latency: int):
        # best_latency is -1 until the first feasible candidate appears
        self.records.append((eval_idx, ms, self.spec_key, genome, latency,
                             bram, dsp, best_latency))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            writer.writerows(self.records)

    def best_curve(self) -> list[tuple[int, int]]:
        return [(r[0], r[7]) for r in self.records if r[7] >= 0]


@dataclass
class SearchResult:
    spec: DesignSpec
    best: DesignPoint | None
    best_latency: int | None
    best_bram: int | None
    best_dsp: int | None
    evaluations: int
    completed: bool
    seed_used: int
    trace: SearchTrace


class _Evaluator:
    """Shared batch-evaluation plumbing with trace + best tracking."""

    def __init__(self, spec: DesignSpec, device: DeviceBudget, deterministic: bool,
                 model: str = "full"):
        self.spec = spec
        self.device = device
        self.desc = build_descriptor(spec, device)
        self.trace = SearchTrace(spec_key=spec.key)
        self.deterministic = deterministic
        self.model = model
        self.start = time.monotonic()
        self.evals = 0
        self.best_key = None
        self.best_genome: Genome | None = None

    def _ms(self) -> int:
        if self.deterministic:
            return 0
        return int((time.monotonic() - self.start) * 1000)

    def run(self, genomes: list[Genome]) -> list[tuple[bool, int, int, int]]:
        if not genomes:
            return []
        if self.model == "naive":
            from . import perf_model
            lat, bram, dsp = [], [], []
            for g in genomes:
                p = g.decode()
                b, d = perf_model.resources(p, self.device)
                lat.append(perf_model.naive_latency(p, self.device))
                bram.append(b)
                dsp.append(d)
        else:
            rows = np.stack([point_to_row(g.decode()) for g in genomes])
            lat, bram, dsp = batch_evaluate(self.desc, rows)
        fits = []
        for i, g in enumerate(genomes):
            self.evals += 1
            feas = bool(bram[i] <= self.device.bram_blocks_available
                        and dsp[i] <= self.device.dsp_available)
            if feas:
                key = (int(lat[i]), int(dsp[i]), int(bram[i]), g.flat())
                if self.best_key is None or key < self.best_key:
                    self.best_key, self.best_genome = key, g
            best_lat = self.best_key[0] if self.best_key else -1
            self.trace.append(self.evals, self._ms(), g.short(), int(lat[i]),
                              int(bram[i]), int(dsp[i]), best_lat)
            fits.append((feas, int(lat[i]), int(dsp[i]), int(bram[i])))
        return fits

    def result(self, spec: DesignSpec, completed: bool, seed_used: int
               ) -> SearchResult:
        if self.best_genome is None:
            return SearchResult(spec, None, None, None, None, self.evals,
                                completed, seed_used, self.trace)
        lat, dsp, bram = self.best_key[0], self.best_key[1], self.best_key[2]
        return SearchResult(spec, self.best_genome.decode(), lat, bram, dsp,
                            self.evals, completed, seed_used, self.trace)


def _resolve_seed(config: SearchConfig) -> tuple[int, bool]:
    if config.rng_seed is not None:
        return int(config.rng_seed), True
    return int(np.random.SeedSequence().entropy % (2 ** 63)), False


def _spawn(entropy: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key))


# ---------------------------------------------------------------------------
# Search methods
# ---------------------------------------------------------------------------

def evolve(spec: DesignSpec, workload: Workload, device: DeviceBudget,
           config: SearchConfig, seeds: tuple[DesignPoint, ...] = ()
           ) -> SearchResult:
    """Generational search: feasible-only elitism, chain crossover, hybrid
    mutation. Infeasible individuals carry infinite fitness, so they are
    never elites and never parents while anything feasible exists."""
    assert workload == spec.workload
    config.validate()
    entropy, deterministic = _resolve_seed(config)
    ev = _Evaluator(spec, device, deterministic, model=config.model)
    divisor_init = config.divisor_only or config.alpha >= 1.0

    def timed_out() -> bool:
        return (config.max_seconds is not None
                and time.monotonic() - ev.start >= config.max_seconds)

    pop: list[Genome] = []
    for p in seeds[:config.population_size]:
        p = _snap_to_divisors(p) if divisor_init else p
        pop.append(Genome.encode(p))
    while len(pop) < config.population_size:
        rng = _spawn(entropy, 0, len(pop))
        pop.append(random_genome(spec, rng, divisor_only=divisor_init))

    budget = config.max_evaluations
    fits = ev.run(pop[:budget])
    pop = pop[:len(fits)]
    seen = {g.flat() for g in pop}

    def sort_key(i: int):
        feas, lat, dsp, bram = fits[i]
        return (0 if feas else 1, lat, dsp, bram, pop[i].flat())

    def breed(pool: list[Genome], rng: np.random.Generator) -> Genome:
        pa = pool[int(rng.integers(len(pool)))]
        pb = pool[int(rng.integers(len(pool)))]
        child = crossover(pa, pb, rng)[0] if rng.random() < config.crossover_rate \
            else pa
        child = mutate(child, rng, config.alpha)
        # burst: occasional extra mutations let a child move several loops at
        # once, which single-step mutation cannot
        while rng.random() < 0.35:
            child = mutate(child, rng, config.alpha)
        return child

    gen = 0
    stale = 0
    best_seen = min((sort_key(i) for i in range(len(pop))), default=None)
    while ev.evals < budget and not timed_out():
        gen += 1
        order = sorted(range(len(pop)), key=sort_key)
        elite_n = max(1, int(config.elite_fraction * config.population_size))
        elites = [i for i in order if fits[i][0]][:elite_n]
        pool = [pop[i] for i in elites] if elites else pop
        survivors = [pop[i] for i in elites]
        survivor_fits = [fits[i] for i in elites]
        reinject = stale >= 10
        offspring: list[Genome] = []
        while len(survivors) + len(offspring) < config.population_size:
            slot = len(survivors) + len(offspring)
            rng = _spawn(entropy, gen, slot)
            for _ in range(8):  # retry duplicates; accept the last attempt
                child = random_genome(spec, rng, divisor_only=divisor_init) \
                    if reinject else breed(pool, rng)
                if child.flat() not in seen:
                    break
            seen.add(child.flat())
            offspring.append(child)
        offspring = offspring[:budget - ev.evals]
        new_fits = ev.run(offspring)
        pop = survivors + offspring
        fits = survivor_fits + new_fits
        gen_best = min(sort_key(i) for i in range(len(pop)))
        if best_seen is None or gen_best < best_seen:
            best_seen, stale = gen_best, 0
        else:
            stale = 0 if reinject else stale + 1
    return ev.result(spec, True, entropy)


def random_search(spec: DesignSpec, workload: Workload, device: DeviceBudget,
                  config: SearchConfig) -> SearchResult:
    assert workload == spec.workload
    config.validate()
    entropy, deterministic = _resolve_seed(config)
    ev = _Evaluator(spec, device, deterministic, model=config.model)
    rng = _spawn(entropy, 0)
    while ev.evals < config.max_evaluations:
        if config.max_seconds is not None and \
                time.monotonic() - ev.start >= config.max_seconds:
            break
        batch = min(256, config.max_evaluations - ev.evals)
        ev.run([random_genome(spec, rng) for _ in range(batch)])
    return ev.result(spec, True, entropy)


# ---------------------------------------------------------------------------
# Lattice enumeration
# ---------------------------------------------------------------------------

def _loop_option_count(workload: Workload, loop: str) -> int:
    extent = workload.extent(loop)
    if loop in workload.parallel_loops or loop == workload.simd_loop:
        # number of (t1, split) pairs with split | t1: sum of divisor counts
        return sum(extent // d for d in range(1, extent + 1))
    return extent


def lattice_size(spec: DesignSpec) -> int:
    n = 1
    for l in spec.workload.loops:
        n *= _loop_option_count(spec.workload, l)
    return n


def _loop_options(workload: Workload, loop: str, col_of) -> tuple[np.ndarray, list[int]]:
    """(options matrix, target X columns) for one loop's chain choices."""
    extent = workload.extent(loop)
    if loop in workload.parallel_loops or loop == workload.simd_loop:
        pairs = [(t1, d) for t1 in range(1, extent + 1) for d in divisors(t1)]
        split_col = col_of[("t3", loop)] if loop == workload.simd_loop \
            else col_of[("t2", loop)]
        return np.array(pairs, dtype=np.int64), [col_of[("t1", loop)], split_col]
    vals = np.arange(1, extent + 1, dtype=np.int64).reshape(-1, 1)
    return vals, [col_of[("t1", loop)]]


def _lattice_chunks(spec: DesignSpec, chunk_target: int = 1 << 20):
    """Yield candidate matrices covering the full lattice exactly once, in a
    fixed order (loop-major, ascending tiles)."""
    w = spec.workload
    col_of = {c: i for i, c in enumerate(columns(w))}
    n_cols = len(col_of)
    options = [_loop_options(w, l, col_of) for l in w.loops]
    sizes = [o[0].shape[0] for o in options]

    # split loops into a python-iterated head and a vectorized tail
    tail_start = len(sizes)
    tail_rows = 1
    while tail_start > 0 and tail_rows * sizes[tail_start - 1] <= chunk_target:
        tail_rows *= sizes[tail_start - 1]
        tail_start -= 1

    template = np.empty((max(tail_rows, 1), n_cols), dtype=np.int64)
    stride = 1
    for li in range(len(sizes) - 1, tail_start - 1, -1):
        opts, cols = options[li]
        reps = tail_rows // (stride * sizes[li])
        block = np.repeat(opts, stride, axis=0)
        block = np.tile(block, (reps, 1))
        for ci, col in enumerate(cols):
            template[:, col] = block[:, ci]
        stride *= sizes[li]

    head_ranges = [range(sizes[i]) for i in range(tail_start)]
    for combo in itertools.product(*head_ranges):
        X = template.copy()
        for li, oi in enumerate(combo):
            opts, cols = options[li]
            for ci, col in enumerate(cols):
                X[:, col] = opts[oi, ci]
        yield X


def _chunk_best(lat, bram, dsp, X, mask):
    """Index of the best row under (latency, dsp, bram, lexicographic row)."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    for key in (lat, dsp, bram):
        vals = key[idx]
        idx = idx[vals == vals.min()]
        if idx.size == 1:
            return int(idx[0])
    order = np.lexsort(tuple(X[idx, c] for c in reversed(range(X.shape[1]))))
    return int(idx[order[0]])


def exhaustive_pruned(spec: DesignSpec, workload: Workload, device: DeviceBudget,
                      config: SearchConfig | None = None,
                      dsp_floor_fraction: float = 0.25) -> SearchResult:
    """Enumerate the lattice, skipping candidates whose DSP usage falls below
    the floor; skipped candidates cost no budget. Exact when the floor is 0
    and the enumeration completes. Traces record improvements only."""
    assert workload == spec.workload
    if not 0.0 <= dsp_floor_fraction:
        raise ValueError("dsp_floor_fraction must be nonnegative")
    config = config or SearchConfig(max_evaluations=2 ** 62)
    desc = build_descriptor(spec, device)
    ev = _Evaluator(spec, device, deterministic=True)
    floor = dsp_floor_fraction * device.dsp_available
    budget = config.max_evaluations
    completed = True
    for X in _lattice_chunks(spec):
        lat, bram, dsp = batch_evaluate(desc, X)
        keep = np.flatnonzero(dsp >= floor)
        remaining = budget - ev.evals
        if keep.size > remaining:
            keep = keep[:remaining]
            completed = False
        feas = (bram[keep] <= device.bram_blocks_available) & \
               (dsp[keep] <= device.dsp_available)
        i = _chunk_best(lat[keep], bram[keep], dsp[keep], X[keep], feas)
        if i is not None:
            g = Genome.encode(design_space.repair(
                _row_point(spec, X[keep][i])))
            key = (int(lat[keep][i]), int(dsp[keep][i]), int(bram[keep][i]),
                   g.flat())
            if ev.best_key is None or key < ev.best_key:
                ev.best_key, ev.best_genome = key, g
                ev.trace.append(ev.evals + int(i) + 1, 0, g.short(), key[0],
                                key[2], key[1], key[0])
        ev.evals += int(keep.size)
        if not completed:
            break
    seed = config.rng_seed if config.rng_seed is not None else 0
    return ev.result(spec, completed, seed)


def _row_point(spec: DesignSpec, row: np.ndarray) -> DesignPoint:
    from .kernels import row_to_point
    return row_to_point(spec, row)


def oracle(spec: DesignSpec, workload: Workload, device: DeviceBudget,
           cap: int = 1 << 26) -> DesignPoint:
    """Full enumeration ground truth. Refuses lattices above the cap."""
    assert workload == spec.workload
    size = lattice_size(spec)
    if size > cap:
        raise SearchSpaceError(
            f"lattice for {spec.key} has {size} points, above the cap {cap}")
    desc = build_descriptor(spec, device)
    best_key = None
    best_row = None
    for X in _lattice_chunks(spec):
        lat, bram, dsp = batch_evaluate(desc, X)
        feas = (bram <= device.bram_blocks_available) & \
               (dsp <= device.dsp_available)
        i = _chunk_best(lat, bram, dsp, X, feas)
        if i is None:
            continue
        key = (int(lat[i]), int(dsp[i]), int(bram[i]), tuple(int(v) for v in X[i]))
        if best_key is None or key < best_key:
            best_key, best_row = key, X[i].copy()
    if best_row is None:
        raise SearchSpaceError(f"no feasible point exists for {spec.key}")
    return _row_point(spec, best_row)
