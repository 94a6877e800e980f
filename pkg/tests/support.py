"""Shared helpers for the test suite. Kept outside conftest so tests can
import them explicitly."""

import numpy as np

from systune import design_space


def random_repaired_point(spec, rng: np.random.Generator):
    """Uniform random t1 per loop, random splits, snapped legal by repair."""
    w = spec.workload
    t1 = tuple(int(rng.integers(1, w.extent(l) + 1)) for l in w.loops)
    t2 = tuple(int(rng.integers(1, t1[w.loops.index(l)] + 1))
               for l in w.parallel_loops)
    t3 = int(rng.integers(1, t1[w.loops.index(w.simd_loop)] + 1))
    return design_space.repair(design_space.DesignPoint(spec, t1, t2, t3))


def random_feasible_points(spec, device, rng, n, feasible, max_tries=200000):
    pts = []
    tries = 0
    while len(pts) < n and tries < max_tries:
        tries += 1
        p = random_repaired_point(spec, rng)
        if feasible(p, device):
            pts.append(p)
    return pts
