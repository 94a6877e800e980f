"""Report assembly and canonical JSON emission.

Reports are plain JSON with sorted keys and a fixed indent, so
serialize -> parse -> serialize is byte-identical and seeded runs diff
cleanly. Every best point is stored in its parseable string form together
with the numbers it re-evaluates to.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import perf_model
from .perf_model import DeviceBudget
from .search import SearchResult
from .workload import Workload


@dataclass
class Report:
    payload: dict

    def to_json(self) -> str:
        return json.dumps(self.payload, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "Report":
        return Report(json.loads(text))

    def write(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())


def workload_label(w: Workload) -> str:
    dims = " ".join(str(w.extent(l)) for l in w.loops)
    return f"{w.kind.lower()} {dims}"


def base_meta(workload_desc: str, device: DeviceBudget, method: str,
              objective: str, seed: int, budget_evals: int,
              population: int, alpha: float) -> dict:
    from . import __version__
    return {
        "tool": "systune",
        "version": __version__,
        "workload": workload_desc,
        "device": device.name,
        "method": method,
        "mp_objective": objective,
        "seed": seed,
        "budget_evals": budget_evals,
        "population": population,
        "alpha": alpha,
    }


def _spec_entry(result: SearchResult, device: DeviceBudget) -> dict:
    entry = {
        "spec": result.spec.key,
        "evaluations": result.evaluations,
        "completed": result.completed,
        "point": None,
        "latency": None,
        "bram": None,
        "dsp": None,
        "dm": None,
        "bram_util": None,
        "dsp_util": None,
    }
    if result.best is not None:
        est = perf_model.evaluate(result.best, device)
        entry.update({
            "point": str(result.best),
            "latency": est.latency_cycles,
            "bram": est.bram_used,
            "dsp": est.dsp_used,
            "dm": {k: int(v) for k, v in sorted(est.dm_per_array.items())},
            "bram_util": est.bram_used / device.bram_blocks_available
            if device.bram_blocks_available else math.inf,
            "dsp_util": est.dsp_used / device.dsp_available
            if device.dsp_available else math.inf,
            "feasible": est.feasible,
        })
    return entry


def build_tune_report(meta: dict, results: list[SearchResult],
                      device: DeviceBudget) -> Report:
    entries = [_spec_entry(r, device) for r in results]
    with_best = [e for e in entries if e["latency"] is not None]
    best = min(with_best, key=lambda e: (e["latency"], e["spec"]), default=None)
    anchor = best["latency"] if best else None
    for e in entries:
        e["normalized_throughput"] = (anchor / e["latency"]
                                      if e["latency"] is not None else None)
    payload = {
        "kind": "tune",
        "meta": meta,
        "results": entries,
        "best": None if best is None else {
            "spec": best["spec"], "point": best["point"],
            "latency": best["latency"],
        },
    }
    return Report(payload)


def build_sweep_report(meta: dict, layer_names: list[str],
                       dataflow_keys: list[str],
                       cells: dict[tuple[str, str], dict]) -> Report:
    """cells[(dataflow, layer)] -> {latency, throughput, point, ordering}."""
    matrix = {}
    geo = {}
    for df in dataflow_keys:
        row = {}
        tps = []
        for layer in layer_names:
            cell = cells.get((df, layer))
            row[layer] = cell
            if cell is not None and cell["throughput"] > 0:
                tps.append(cell["throughput"])
        matrix[df] = row
        geo[df] = math.exp(sum(math.log(t) for t in tps) / len(tps)) \
            if len(tps) == len(layer_names) and tps else None
    ranked = [df for df in dataflow_keys if geo[df] is not None]
    best_df = max(ranked, key=lambda df: (geo[df], df), default=None)
    payload = {
        "kind": "sweep-network",
        "meta": meta,
        "layers": layer_names,
        "dataflows": dataflow_keys,
        "matrix": matrix,
        "geo_mean_throughput": geo,
        "best_dataflow": best_df,
    }
    return Report(payload)


def build_ablate_report(meta: dict, variants: dict[str, dict]) -> Report:
    """variants[name] -> {spec, point, latency, dsp} scored under the full
    model; throughput is normalized against the best variant."""
    scored = {k: v for k, v in variants.items() if v.get("latency") is not None}
    anchor = min((v["latency"] for v in scored.values()), default=None)
    for name, v in variants.items():
        v["normalized_throughput"] = (anchor / v["latency"]
                                      if v.get("latency") is not None else None)
    payload = {"kind": "ablate", "meta": meta, "variants": variants}
    return Report(payload)
