"""MM and CNN workload definitions with their dependence metadata."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

MM = "mm"
CNN = "cnn"


@dataclass(frozen=True)
class ArrayRef:
    """One array reference of a workload loop nest.

    index holds (loop, halo) pairs: the on-chip tile of the array spans
    tile[loop] + halo elements along that axis. Loops absent from index
    carry a dependence instead: read reuse for inputs, flow (reduction)
    for outputs.
    """

    name: str
    index: tuple[tuple[str, int], ...]
    carried_read: frozenset[str] = frozenset()
    carried_flow: frozenset[str] = frozenset()
    element_bits: int = 32

    def __post_init__(self):
        if self.carried_read & self.carried_flow:
            raise ValueError(f"{self.name}: a loop cannot carry both read and flow")

    @property
    def is_output(self) -> bool:
        return bool(self.carried_flow)

    def indexed_loops(self) -> frozenset[str]:
        return frozenset(l for l, _ in self.index)

    def tile_footprint(self, tiles: dict[str, int]) -> int:
        n = 1
        for loop, halo in self.index:
            n *= tiles[loop] + halo
        return n


@dataclass(frozen=True)
class Workload:
    kind: str
    name: str
    dims: tuple[tuple[str, int], ...]          # loop name -> extent, declaration order
    arrays: tuple[ArrayRef, ...]
    parallel_loops: tuple[str, ...]            # loops eligible for latency hiding
    simd_loop: str
    space_candidates: tuple[str, ...]          # loops eligible as array dimensions
    element_bits: int = 32
    nest_order: tuple[str, ...] = ()           # loop-nest order; defaults to dims order

    def __post_init__(self):
        for loop, extent in self.dims:
            if extent < 1:
                raise ValueError(f"extent of loop {loop} must be >= 1, got {extent}")
        if not self.nest_order:
            object.__setattr__(self, "nest_order", self.loops)
        elif sorted(self.nest_order) != sorted(self.loops):
            raise ValueError("nest_order must permute the workload loops")

    @property
    def loops(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.dims)

    def extent(self, loop: str) -> int:
        return dict(self.dims)[loop]

    @property
    def extents(self) -> dict[str, int]:
        return dict(self.dims)

    def array(self, name: str) -> ArrayRef:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    def total_ops(self) -> int:
        n = 1
        for _, e in self.dims:
            n *= e
        return n


def make_mm(I: int, J: int, K: int, element_bits: int = 32, name: str = "") -> Workload:
    """C[i][j] += A[i][k] * B[k][j]."""
    arrays = (
        ArrayRef("A", (("i", 0), ("k", 0)), carried_read=frozenset({"j"}),
                 element_bits=element_bits),
        ArrayRef("B", (("k", 0), ("j", 0)), carried_read=frozenset({"i"}),
                 element_bits=element_bits),
        ArrayRef("C", (("i", 0), ("j", 0)), carried_flow=frozenset({"k"}),
                 element_bits=element_bits),
    )
    return Workload(
        kind=MM,
        name=name or f"mm{I}x{J}x{K}",
        dims=(("i", I), ("j", J), ("k", K)),
        arrays=arrays,
        parallel_loops=("i", "j"),
        simd_loop="k",
        space_candidates=("i", "j", "k"),
        element_bits=element_bits,
    )


def make_cnn(I: int, O: int, H: int, W: int, P: int, Q: int,
             element_bits: int = 32, name: str = "") -> Workload:
    """fo[o][h][w] += fi[i][h+p][w+q] * weights[o][i][p][q], stride and batch 1."""
    arrays = (
        ArrayRef("fi", (("i", 0), ("h", P - 1), ("w", Q - 1)),
                 carried_read=frozenset({"o"}), element_bits=element_bits),
        ArrayRef("weights", (("o", 0), ("i", 0), ("p", 0), ("q", 0)),
                 carried_read=frozenset({"h", "w"}), element_bits=element_bits),
        ArrayRef("fo", (("o", 0), ("h", 0), ("w", 0)),
                 carried_flow=frozenset({"i", "p", "q"}), element_bits=element_bits),
    )
    return Workload(
        kind=CNN,
        name=name or f"cnn{I}x{O}x{H}x{W}x{P}x{Q}",
        dims=(("i", I), ("o", O), ("h", H), ("w", W), ("p", P), ("q", Q)),
        arrays=arrays,
        parallel_loops=("o", "h", "w"),
        simd_loop="i",
        space_candidates=("o", "h", "w", "i"),
        element_bits=element_bits,
        # output channels outermost in the written nest; group members of a
        # loop ordering keep this order
        nest_order=("o", "i", "h", "w", "p", "q"),
    )


@dataclass(frozen=True)
class NetworkFile:
    """Ordered list of named CNN layers."""

    path: str
    layers: tuple[tuple[str, Workload], ...] = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


def load_network(path: str | Path) -> NetworkFile:
    """Parse a layer file: one `name I O H W P Q` record per line, # comments."""
    path = Path(path)
    layers = []
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 7:
                raise ValueError(
                    f"{path}:{lineno}: expected `name I O H W P Q`, got {raw.strip()!r}")
            name = parts[0]
            if name in seen:
                raise ValueError(f"{path}:{lineno}: duplicate layer name {name!r}")
            seen.add(name)
            try:
                dims = [int(p) for p in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer dimension: {exc}") from exc
            layers.append((name, make_cnn(*dims, name=name)))
    return NetworkFile(path=str(path), layers=tuple(layers))


def bundled_network(name: str) -> NetworkFile:
    """Load a network description shipped with the package (vgg16, resnet50)."""
    ref = importlib.resources.files("systune").joinpath(f"data/{name}.layers")
    with importlib.resources.as_file(ref) as p:
        return load_network(p)
