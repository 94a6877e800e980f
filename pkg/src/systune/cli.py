"""Command-line front end.

Subcommands: tune, sweep-network, ablate, validate, oracle.
Exit codes: 0 success, 1 no feasible design, 2 configuration error,
3 validation failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checks, design_space, mp_seed, perf_model, report, search, workload
from .design_space import DesignSpec
from .mp_seed import Objective
from .perf_model import ConfigError, DeviceBudget, load_device
from .search import SearchConfig, SearchResult, SearchSpaceError
from .workload import Workload

METHODS = ("evolve", "random", "exhaustive-pruned", "oracle")
STUDIES = ("full", "divisor-only", "mp-only-obj1", "mp-only-obj2",
           "mp-only-obj3", "max-latency-model")


@dataclass
class RunConfig:
    command: str
    mm: tuple[int, int, int] | None = None
    cnn: tuple[int, int, int, int, int, int] | None = None
    network: str | None = None
    device: str = "u250-like"
    method: str = "evolve"
    mp_objective: str = "obj3"
    budget_evals: int = 3000
    budget_seconds: float | None = None
    population: int = 50
    elite_fraction: float = 0.2
    crossover_rate: float = 0.7
    alpha: float = 0.4
    dsp_floor: float = 0.25
    divisor_only: bool = False
    seed: int | None = None
    out: str | None = None
    trace_dir: str | None = None
    spec_filter: str | None = None
    ordering: str | None = None
    studies: tuple[str, ...] = ()
    oracle_cap: int = 1 << 26


def _add_workload_flags(p: argparse.ArgumentParser, network: bool = True):
    g = p.add_argument_group("workload (pick one)")
    g.add_argument("--mm", nargs=3, type=int, metavar=("I", "J", "K"),
                   help="matrix multiplication extents")
    g.add_argument("--cnn", nargs=6, type=int,
                   metavar=("I", "O", "H", "W", "P", "Q"),
                   help="convolution layer extents (stride 1, batch 1)")
    if network:
        g.add_argument("--network", metavar="FILE|NAME",
                       help="layer file path or bundled name (vgg16, resnet50)")


def _add_search_flags(p: argparse.ArgumentParser):
    p.add_argument("--budget-evals", type=int, default=3000,
                   help="model evaluations per spec (default 3000)")
    p.add_argument("--budget-seconds", type=float, default=None,
                   help="wall-clock cap per spec")
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--elite-fraction", type=float, default=0.2)
    p.add_argument("--crossover-rate", type=float, default=0.7)
    p.add_argument("--alpha", type=float, default=0.4,
                   help="probability of the factorization mutation")
    p.add_argument("--seed", type=int, default=None,
                   help="master RNG seed; drawn from OS entropy if omitted")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--trace-dir", help="directory for per-spec trace CSVs")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="systune",
        description="Design-space exploration for systolic-array mappings")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tune", help="search every candidate spec of one workload")
    _add_workload_flags(t, network=False)
    t.add_argument("--device", default="u250-like")
    t.add_argument("--method", choices=METHODS, default="evolve")
    t.add_argument("--mp-objective", choices=("obj1", "obj2", "obj3", "none"),
                   default="obj3", help="relaxed objective for seeding")
    t.add_argument("--spec-filter", help="glob over spec keys, e.g. '*df=[i,j]*'")
    t.add_argument("--dsp-floor", type=float, default=0.25,
                   help="DSP pruning floor for exhaustive-pruned")
    t.add_argument("--divisor-only", action="store_true",
                   help="restrict tiles to divisors of the extents")
    t.add_argument("--oracle-cap", type=int, default=1 << 26)
    _add_search_flags(t)

    s = sub.add_parser("sweep-network",
                       help="per-layer per-dataflow sweep over a network file")
    s.add_argument("--network", required=True, metavar="FILE|NAME")
    s.add_argument("--device", default="u250-like")
    s.add_argument("--mp-objective", choices=("obj1", "obj2", "obj3", "none"),
                   default="obj3")
    s.add_argument("--ordering",
                   help="fix the loop ordering, e.g. '<[o,h,w],[i,p,q]>'")
    _add_search_flags(s)

    a = sub.add_parser("ablate", help="compare restricted pipelines")
    _add_workload_flags(a, network=False)
    a.add_argument("--device", default="u250-like")
    a.add_argument("--study", action="append", choices=STUDIES, default=None,
                   help="variant to run (repeatable; default: all)")
    _add_search_flags(a)

    v = sub.add_parser("validate", help="run the bundled invariant suites")
    v.add_argument("--seed", type=int, default=0)

    o = sub.add_parser("oracle", help="exact optimum by full enumeration")
    _add_workload_flags(o, network=False)
    o.add_argument("--device", default="u250-like")
    o.add_argument("--spec-filter")
    o.add_argument("--oracle-cap", type=int, default=1 << 26)
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--out")
    o.add_argument("--trace-dir")
    return p


def _to_config(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    cfg = RunConfig(command=values.pop("command"))
    for key, val in values.items():
        name = "studies" if key == "study" else key
        if not hasattr(cfg, name):
            continue
        if name == "studies":
            val = tuple(val) if val else ()
        elif name in ("mm", "cnn") and val is not None:
            val = tuple(val)
        setattr(cfg, name, val)
    return cfg


def _single_workload(cfg: RunConfig) -> Workload:
    picks = [cfg.mm is not None, cfg.cnn is not None, cfg.network is not None]
    if sum(picks) != 1:
        raise ConfigError("pick exactly one workload: --mm I J K or --cnn I O H W P Q"
                          + (" or --network FILE" if cfg.command == "sweep-network"
                             else ""))
    if cfg.network is not None:
        raise ConfigError(f"{cfg.command} takes a single workload; "
                          "use sweep-network for layer files")
    try:
        if cfg.mm is not None:
            return workload.make_mm(*cfg.mm)
        return workload.make_cnn(*cfg.cnn)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_network(name_or_path: str) -> workload.NetworkFile:
    path = Path(name_or_path)
    try:
        if path.exists():
            return workload.load_network(path)
        if re.fullmatch(r"[a-z0-9_]+", name_or_path):
            try:
                return workload.bundled_network(name_or_path)
            except FileNotFoundError:
                pass
        raise ConfigError(f"network {name_or_path!r}: no such file or bundled name")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _master_seed(cfg: RunConfig) -> int:
    if cfg.seed is not None:
        return int(cfg.seed)
    return int(np.random.SeedSequence().entropy % (2 ** 63))


def _per_spec_seed(master: int, idx: int) -> int:
    child = np.random.SeedSequence(master, spawn_key=(idx,))
    return int(child.generate_state(1, np.uint64)[0] % (2 ** 63))


def _glob_match(key: str, pattern: str) -> bool:
    # only * and ? are wildcards; spec keys are full of brackets, so fnmatch
    # character classes would make e.g. 'df=[i,j]' unmatchable
    rx = re.escape(pattern).replace(r"\*", ".*").replace(r"\?", ".")
    return re.fullmatch(rx, key) is not None


def _filtered_specs(w: Workload, pattern: str | None) -> list[DesignSpec]:
    specs = design_space.enumerate_specs(w)
    if pattern:
        specs = [s for s in specs if _glob_match(s.key, pattern)]
        if not specs:
            raise ConfigError(f"--spec-filter {pattern!r} matched no spec")
    return specs


def _search_config(cfg: RunConfig, seed: int, model: str = "full") -> SearchConfig:
    try:
        sc = SearchConfig(population_size=cfg.population,
                          elite_fraction=cfg.elite_fraction,
                          alpha=cfg.alpha,
                          crossover_rate=cfg.crossover_rate,
                          max_evaluations=cfg.budget_evals,
                          max_seconds=cfg.budget_seconds,
                          rng_seed=seed,
                          divisor_only=cfg.divisor_only,
                          model=model)
        sc.validate()
        return sc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mp_seeds(spec: DesignSpec, device: DeviceBudget, objective: str,
              seed: int) -> tuple:
    if objective == "none":
        return ()
    return tuple(mp_seed.solve(spec, spec.workload, device,
                               Objective.from_name(objective), seed))


def _oracle_result(spec: DesignSpec, device: DeviceBudget, cap: int
                   ) -> SearchResult:
    size = search.lattice_size(spec)
    point = search.oracle(spec, spec.workload, device, cap=cap)
    est = perf_model.evaluate(point, device)
    trace = search.SearchTrace(spec_key=spec.key)
    g = search.Genome.encode(point)
    trace.append(size, 0, g.short(), est.latency_cycles, est.bram_used,
                 est.dsp_used, est.latency_cycles)
    return SearchResult(spec, point, est.latency_cycles, est.bram_used,
                        est.dsp_used, size, True, 0, trace)


def _run_spec(spec: DesignSpec, device: DeviceBudget, cfg: RunConfig,
              seed: int, method: str | None = None, model: str = "full"
              ) -> SearchResult:
    method = method or cfg.method
    sc = _search_config(cfg, seed, model=model)
    if method == "evolve":
        seeds = _mp_seeds(spec, device, cfg.mp_objective, seed)
        return search.evolve(spec, spec.workload, device, sc, seeds)
    if method == "random":
        return search.random_search(spec, spec.workload, device, sc)
    if method == "exhaustive-pruned":
        return search.exhaustive_pruned(spec, spec.workload, device, sc,
                                        dsp_floor_fraction=cfg.dsp_floor)
    if method == "oracle":
        return _oracle_result(spec, device, cfg.oracle_cap)
    raise ConfigError(f"unknown method {method!r}")


def _trace_name(key: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", key).strip("_") + ".csv"


def _write_traces(results: list[SearchResult], trace_dir: str | None):
    if not trace_dir:
        return
    d = Path(trace_dir)
    d.mkdir(parents=True, exist_ok=True)
    for r in results:
        r.trace.write_csv(d / _trace_name(r.spec.key))


def _emit(rep: report.Report, out: str | None):
    if out:
        rep.write(out)
    else:
        sys.stdout.write(rep.to_json())


def cmd_tune(cfg: RunConfig) -> int:
    w = _single_workload(cfg)
    device = load_device(cfg.device)
    specs = _filtered_specs(w, cfg.spec_filter)
    master = _master_seed(cfg)
    results = []
    for idx, spec in enumerate(specs):
        results.append(_run_spec(spec, device, cfg, _per_spec_seed(master, idx)))
    meta = report.base_meta(report.workload_label(w), device, cfg.method,
                            cfg.mp_objective, master, cfg.budget_evals,
                            cfg.population, cfg.alpha)
    rep = report.build_tune_report(meta, results, device)
    _write_traces(results, cfg.trace_dir)
    _emit(rep, cfg.out)
    if all(r.best is None for r in results):
        print("no feasible design in any spec", file=sys.stderr)
        return 1
    return 0


CNN_FIXED_ORDERING = "<[o,h,w],[i,p,q]>"


def cmd_sweep_network(cfg: RunConfig) -> int:
    net = _load_network(cfg.network) if cfg.network else None
    if net is None:
        raise ConfigError("sweep-network requires --network")
    if len(net) == 0:
        raise ConfigError(f"network {cfg.network!r} has no layers")
    device = load_device(cfg.device)
    master = _master_seed(cfg)
    wanted_ordering = None
    if cfg.ordering:
        try:
            wanted_ordering = design_space.parse_ordering(cfg.ordering)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    layer_names = [name for name, _ in net]
    dataflow_keys: list[str] = []
    cells: dict[tuple[str, str], dict] = {}
    results: list[SearchResult] = []
    idx = 0
    for lname, lw in net:
        orderings = design_space.prune_orderings(lw)
        if wanted_ordering is not None:
            if sorted(wanted_ordering.sequence) != sorted(lw.loops):
                raise ConfigError(
                    f"--ordering {cfg.ordering!r} does not permute {lw.loops}")
            orderings = [o for o in orderings
                         if o.sequence == wanted_ordering.sequence]
            if not orderings:
                orderings = [wanted_ordering]
        for df in design_space.enumerate_dataflows(lw):
            if str(df) not in dataflow_keys:
                dataflow_keys.append(str(df))
            best = None
            for ordering in orderings:
                spec = DesignSpec(lw, df, ordering)
                r = _run_spec(spec, device, cfg, _per_spec_seed(master, idx),
                              method="evolve")
                idx += 1
                results.append(r)
                if r.best is not None and (best is None
                                           or r.best_latency < best.best_latency):
                    best = r
            if best is not None:
                cells[(str(df), lname)] = {
                    "latency": best.best_latency,
                    "throughput": lw.total_ops() / best.best_latency,
                    "point": str(best.best),
                    "ordering": str(best.spec.ordering),
                }
    meta = report.base_meta(f"network {cfg.network}", device, "evolve",
                            cfg.mp_objective, master, cfg.budget_evals,
                            cfg.population, cfg.alpha)
    if cfg.ordering:
        meta["ordering"] = cfg.ordering
    rep = report.build_sweep_report(meta, layer_names, dataflow_keys, cells)
    _write_traces(results, cfg.trace_dir)
    _emit(rep, cfg.out)
    return 0 if cells else 1


def cmd_ablate(cfg: RunConfig) -> int:
    w = _single_workload(cfg)
    device = load_device(cfg.device)
    specs = design_space.enumerate_specs(w)
    master = _master_seed(cfg)
    studies = cfg.studies or STUDIES

    def best_of(results: list[SearchResult]) -> SearchResult | None:
        found = [r for r in results if r.best is not None]
        return min(found, key=lambda r: (r.best_latency, r.spec.key), default=None)

    variants: dict[str, dict] = {}
    for study in studies:
        run = RunConfig(**{**cfg.__dict__})
        model = "full"
        if study == "divisor-only":
            run.alpha = 1.0
            run.divisor_only = True
        elif study == "max-latency-model":
            model = "naive"
        if study.startswith("mp-only-"):
            objective = Objective.from_name(study.removeprefix("mp-only-"))
            point = mp_seed.standalone_best(specs, device, objective,
                                            _per_spec_seed(master, 0))
            entry = {"spec": None, "point": None, "latency": None, "dsp": None}
            if point is not None:
                est = perf_model.evaluate(point, device)
                entry = {"spec": point.spec.key, "point": str(point),
                         "latency": est.latency_cycles, "dsp": est.dsp_used}
            variants[study] = entry
            continue
        results = [_run_spec(spec, device, run, _per_spec_seed(master, i),
                             method="evolve", model=model)
                   for i, spec in enumerate(specs)]
        best = best_of(results)
        if best is None:
            variants[study] = {"spec": None, "point": None, "latency": None,
                               "dsp": None}
        else:
            # re-score under the full model regardless of the search model
            est = perf_model.evaluate(best.best, device)
            variants[study] = {"spec": best.spec.key, "point": str(best.best),
                               "latency": est.latency_cycles,
                               "dsp": est.dsp_used}
    meta = report.base_meta(report.workload_label(w), device, "ablate",
                            cfg.mp_objective, master, cfg.budget_evals,
                            cfg.population, cfg.alpha)
    meta["studies"] = list(studies)
    rep = report.build_ablate_report(meta, variants)
    _emit(rep, cfg.out)
    return 0 if any(v["latency"] is not None for v in variants.values()) else 1


def cmd_validate(cfg: RunConfig) -> int:
    failures = 0
    for name, ok, detail in checks.run_all(seed=cfg.seed or 0):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 3


def cmd_oracle(cfg: RunConfig) -> int:
    cfg.method = "oracle"
    return cmd_tune(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _to_config(args)
    try:
        if cfg.command == "tune":
            return cmd_tune(cfg)
        if cfg.command == "sweep-network":
            return cmd_sweep_network(cfg)
        if cfg.command == "ablate":
            return cmd_ablate(cfg)
        if cfg.command == "validate":
            return cmd_validate(cfg)
        if cfg.command == "oracle":
            return cmd_oracle(cfg)
        raise ConfigError(f"unknown command {cfg.command!r}")
    except (ConfigError, SearchSpaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
