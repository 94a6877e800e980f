"""Design-space exploration for systolic-array accelerator mappings."""

__version__ = "0.1.0"

from .design_space import (Dataflow, DesignPoint, DesignSpec, LoopOrdering,
                           enumerate_dataflows, enumerate_specs,
                           prune_orderings, repair)
from .perf_model import (DEVICE_PRESETS, ConfigError, DeviceBudget,
                         PerfEstimate, evaluate, load_device)
from .workload import Workload, load_network, make_cnn, make_mm

__all__ = [
    "__version__",
    "Workload", "make_mm", "make_cnn", "load_network",
    "Dataflow", "LoopOrdering", "DesignSpec", "DesignPoint",
    "enumerate_dataflows", "prune_orderings", "enumerate_specs", "repair",
    "DeviceBudget", "DEVICE_PRESETS", "load_device", "PerfEstimate",
    "evaluate", "ConfigError",
]
