"""Rack-aware VM consolidation simulator for a small tree-topology datacenter."""

from .engine import SimulationReport, run_simulation
from .model import Datacenter, Thresholds, Topology, build_topology
from .placement import ALGORITHMS, get_placer
from .workload import WorkloadConfig, generate_benchmark

__all__ = [
    "ALGORITHMS",
    "Datacenter",
    "SimulationReport",
    "Thresholds",
    "Topology",
    "WorkloadConfig",
    "build_topology",
    "generate_benchmark",
    "get_placer",
    "run_simulation",
]
__version__ = "0.1.0"
