"""Slow, independent oracles used to pin expected values in the test suite.

Everything here is deliberately naive: literal textbook formulas and
brute-force odometer simulation. Nothing imports the package under test.
"""

import itertools
import math


def eq1_dm_c(I, J, K, ti, tj, tk):
    """Output traffic with the reduction loop innermost: each output tile is
    drained exactly once."""
    return math.ceil(I / ti) * math.ceil(J / tj) * ti * tj


def eq2_dm_c(I, J, K, ti, tj, tk):
    """Output traffic with the reduction loop hoisted above a tile loop:
    partial results leave and re-enter the chip, hence the factor 2."""
    return 2 * math.ceil(I / ti) * math.ceil(K / tk) * math.ceil(J / tj) * ti * tj


def divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def largest_divisor_at_most(n, cap):
    cap = max(1, cap)
    for d in range(min(n, cap), 0, -1):
        if n % d == 0:
            return d
    return 1


# ---------------------------------------------------------------------------
# Odometer simulation of the tiled loop band.
#
# The band iterates like an odometer over per-depth trip counts
# (outermost first). A stream with suffix depth s fetches/drains a fresh
# tile whenever the shallowest position that changed between consecutive
# steps is < s; reuse is only possible across the innermost run of loops
# that do not index the array, which is what the suffix depth encodes.
# ---------------------------------------------------------------------------

def transition_depths(counts):
    """Shallowest changed position for each consecutive state pair."""
    depths = []
    states = list(itertools.product(*[range(c) for c in counts]))
    for prev, cur in zip(states, states[1:]):
        for d in range(len(counts)):
            if prev[d] != cur[d]:
                depths.append(d)
                break
    return depths


def count_loads(counts, suffix_depth):
    """Number of tile fetches for a stream: first fetch + one per transition
    shallower than the suffix."""
    return 1 + sum(1 for d in transition_depths(counts) if d < suffix_depth)


def simulate_schedule(counts, compute_tile, in_streams, out_streams):
    """Double-buffered schedule, slot by slot.

    in_streams / out_streams: lists of (suffix_depth, io_cycles_per_tile).
    Slot n overlaps compute with the fetches needed for slot n+1 and the
    drain of the tile run that ended entering slot n. Returns
    (prologue, steady, epilogue).
    """
    n_tiles = 1
    for c in counts:
        n_tiles *= c
    depths = transition_depths(counts)
    assert len(depths) == n_tiles - 1

    prologue = max([io for _, io in in_streams], default=0)
    epilogue = max([io for _, io in out_streams], default=0)

    steady = 0
    for slot in range(1, n_tiles + 1):
        load = 0
        if slot <= n_tiles - 1:
            d = depths[slot - 1]
            load = max([io for s, io in in_streams if d < s], default=0)
        drain = 0
        if slot >= 2:
            d = depths[slot - 2]
            drain = max([io for s, io in out_streams if d < s], default=0)
        steady += max(compute_tile, load, drain)
    return prologue, steady, epilogue
