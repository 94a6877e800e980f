"""Dataflow/ordering enumeration, the tiling-point encoding, and legality repair."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

from .workload import Workload


def divisors(n: int) -> list[int]:
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def largest_divisor_at_most(n: int, cap: int) -> int:
    cap = min(n, max(1, cap))
    best = 1
    for d in divisors(n):
        if d <= cap:
            best = d
        else:
            break
    return best


@dataclass(frozen=True)
class Dataflow:
    """Loops mapped to the spatial dimensions of the PE array (1 or 2 of them)."""

    space_loops: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.space_loops) <= 2:
            raise ValueError("only 1D and 2D arrays are supported")

    def __str__(self) -> str:
        return "[" + ",".join(self.space_loops) + "]"


@dataclass(frozen=True)
class LoopOrdering:
    """Array-partitioning loop permutation, split into the freely permutable
    outer group and the reuse group placed innermost."""

    outer: tuple[str, ...]
    inner: tuple[str, ...]
    # provenance only: which array's reuse group sits innermost; not identity
    defining_array: str = field(default="", compare=False)

    @property
    def sequence(self) -> tuple[str, ...]:
        return self.outer + self.inner

    def __str__(self) -> str:
        return f"<{_fmt_group(self.outer)},{_fmt_group(self.inner)}>"


def _fmt_group(loops: tuple[str, ...]) -> str:
    if len(loops) == 1:
        return loops[0]
    return "[" + ",".join(loops) + "]"


def _parse_group(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ValueError(f"unbalanced group: {text!r}")
        text = text[1:-1]
    return tuple(p.strip() for p in text.split(",") if p.strip())


def parse_ordering(text: str) -> LoopOrdering:
    text = text.strip()
    if not (text.startswith("<") and text.endswith(">")):
        raise ValueError(f"ordering must look like <[i,j],k>, got {text!r}")
    body = text[1:-1]
    # split at the comma that separates the two groups (not commas inside [])
    depth = 0
    for pos, ch in enumerate(body):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0:
            return LoopOrdering(_parse_group(body[:pos]), _parse_group(body[pos + 1:]))
    raise ValueError(f"ordering needs two groups: {text!r}")


@dataclass(frozen=True)
class DesignSpec:
    """One candidate architecture: a workload, a dataflow, and a loop ordering."""

    workload: Workload
    dataflow: Dataflow
    ordering: LoopOrdering

    @property
    def key(self) -> str:
        return f"{self.workload.kind}/df={self.dataflow}/ord={self.ordering}"

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class DesignPoint:
    """Tiling factors for one spec.

    t1: array-partitioning tile per loop (canonical loop order); any value in
        [1, extent], divisors not required (padding covers the remainder).
    t2: latency-hiding tile per parallel loop; must divide the matching t1.
    t3: SIMD factor on the workload's vectorizable loop; must divide its t1.
    """

    spec: DesignSpec
    t1: tuple[int, ...]
    t2: tuple[int, ...]
    t3: int

    def t1_of(self, loop: str) -> int:
        return self.t1[self.spec.workload.loops.index(loop)]

    def t2_of(self, loop: str) -> int:
        w = self.spec.workload
        if loop in w.parallel_loops:
            return self.t2[w.parallel_loops.index(loop)]
        return 1

    def tiles(self) -> dict[str, int]:
        return dict(zip(self.spec.workload.loops, self.t1))

    def validate(self) -> None:
        w = self.spec.workload
        if len(self.t1) != len(w.loops) or len(self.t2) != len(w.parallel_loops):
            raise ValueError("tiling vector lengths do not match the workload")
        for loop, t in zip(w.loops, self.t1):
            if not 1 <= t <= w.extent(loop):
                raise ValueError(f"t1[{loop}]={t} outside [1, {w.extent(loop)}]")
        for loop, t in zip(w.parallel_loops, self.t2):
            if self.t1_of(loop) % t != 0:
                raise ValueError(f"t2[{loop}]={t} does not divide t1={self.t1_of(loop)}")
        if self.t1_of(w.simd_loop) % self.t3 != 0:
            raise ValueError(f"t3={self.t3} does not divide t1[{w.simd_loop}]")

    def __str__(self) -> str:
        t1 = ",".join(str(t) for t in self.t1)
        t2 = ",".join(str(t) for t in self.t2)
        return f"{self.spec.key}/t1={t1}/t2={t2}/t3={self.t3}"


def parse_point(workload: Workload, text: str) -> DesignPoint:
    """Inverse of str(DesignPoint) for a known workload."""
    fields = dict(part.split("=", 1) for part in text.split("/") if "=" in part)
    spec = DesignSpec(workload,
                      Dataflow(_parse_group(fields["df"])),
                      parse_ordering(fields["ord"]))
    t1 = tuple(int(v) for v in fields["t1"].split(","))
    t2 = tuple(int(v) for v in fields["t2"].split(",")) if fields["t2"] else ()
    return DesignPoint(spec, t1, t2, int(fields["t3"]))


def enumerate_dataflows(workload: Workload) -> list[Dataflow]:
    """All 1D arrays over the eligible loops, then all 2D combinations."""
    cands = workload.space_candidates
    flows = [Dataflow((l,)) for l in cands]
    flows += [Dataflow(pair) for pair in itertools.combinations(cands, 2)]
    return flows


def prune_orderings(workload: Workload) -> list[LoopOrdering]:
    """Non-dominated orderings: for each array reference, the permutation that
    puts the loops carrying its dependences innermost (reuse position).

    Within each group, loops keep declaration order; any member of the
    outer group's permutation class performs identically, so one canonical
    representative suffices.
    """
    loops = workload.nest_order
    seen = set()
    out = []
    for ref in reversed(workload.arrays):
        rl = ref.carried_read | ref.carried_flow
        inner = tuple(l for l in loops if l in rl)
        outer = tuple(l for l in loops if l not in rl)
        key = (outer, inner)
        if key not in seen:
            seen.add(key)
            out.append(LoopOrdering(outer, inner, defining_array=ref.name))
    return out


def enumerate_specs(workload: Workload) -> list[DesignSpec]:
    return [DesignSpec(workload, df, o)
            for df in enumerate_dataflows(workload)
            for o in prune_orderings(workload)]


def repair(point: DesignPoint) -> DesignPoint:
    """Restore legality: clamp t1 into range, snap t2/t3 down to divisors."""
    w = point.spec.workload
    t1 = tuple(min(max(1, t), w.extent(loop)) for loop, t in zip(w.loops, point.t1))
    t2 = tuple(largest_divisor_at_most(t1[w.loops.index(loop)], t)
               for loop, t in zip(w.parallel_loops, point.t2))
    t3 = largest_divisor_at_most(t1[w.loops.index(w.simd_loop)], point.t3)
    return DesignPoint(point.spec, t1, t2, t3)


class Dominance(enum.Enum):
    A_DOMINATES = "a_dominates"
    B_DOMINATES = "b_dominates"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def dominance_witness(spec_a: DesignSpec, spec_b: DesignSpec,
                      point: DesignPoint, device) -> Dominance:
    """Evaluate the same tiling under two orderings and compare
    (latency, BRAM, DSP) for Pareto dominance."""
    if spec_a.workload != spec_b.workload or spec_a.dataflow != spec_b.dataflow:
        raise ValueError("dominance comparison needs a shared workload and dataflow")
    from . import perf_model

    def metrics(spec):
        est = perf_model.evaluate(
            DesignPoint(spec, point.t1, point.t2, point.t3), device)
        return (est.latency_cycles, est.bram_used, est.dsp_used)

    ma, mb = metrics(spec_a), metrics(spec_b)
    if ma == mb:
        return Dominance.EQUAL
    if all(x <= y for x, y in zip(ma, mb)):
        return Dominance.A_DOMINATES
    if all(y <= x for x, y in zip(ma, mb)):
        return Dominance.B_DOMINATES
    return Dominance.INCOMPARABLE
