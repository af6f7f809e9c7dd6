"""Scenario files: strict JSON schema, defaults, resolved dumps."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator, model_validator

from .engine import EVACUATION_MODES
from .migration import MigrationCostModel
from .model import INVENTORY_ORDERS, Server, Thresholds, Topology, build_topology
from .placement import ALGORITHMS
from .workload import WorkloadConfig

SCENARIO_SCHEMA = "vmconsol-scenario/1"
BUNDLED = ("paper_default",)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ServerSpecModel(_Strict):
    capacity_mips: PositiveInt = 2000
    memory_mb: PositiveInt = 10_000
    storage_gb: PositiveInt = 1_000
    nic_bandwidth_mbps: PositiveFloat = 1000.0
    p_max_watts: PositiveFloat = 250.0
    k_idle_fraction: float = Field(0.7, ge=0.0, le=1.0)


class TopologyModel(_Strict):
    rows: PositiveInt = 2
    racks_per_row: PositiveInt = 4
    servers_per_rack: PositiveInt = 10
    switch_fan_in: PositiveInt = 4
    tor_watts: PositiveFloat = 366.0
    aggregate_watts: PositiveFloat = 405.0
    core_watts: PositiveFloat = 3500.0
    cooling_watts: PositiveFloat = 950.0
    inventory: Literal[INVENTORY_ORDERS] = "interleaved"  # type: ignore[valid-type]
    inventory_seed: int = Field(0, ge=0)


class ThresholdModel(_Strict):
    lower: float = Field(0.4, gt=0.0, lt=1.0)
    upper: float = Field(0.8, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lower < self.upper:
            raise ValueError(f"lower ({self.lower}) must be below upper ({self.upper})")
        return self


class WorkloadModel(_Strict):
    epochs: int = Field(200, ge=0)
    initial_vm_count: int = Field(250, ge=0)
    vm_capacity_choices: tuple[PositiveInt, ...] = Field((250, 500, 750, 1000), min_length=1)
    p_leave: float = Field(0.05, ge=0.0, le=1.0)
    p_arrive_rate: float = Field(0.05, ge=0.0, le=1.0)
    p_demand_change: float = Field(0.5, ge=0.0, le=1.0)
    epoch_seconds: PositiveFloat = 300.0
    vm_memory_mb: PositiveInt = 128
    vm_storage_gb: PositiveInt = 1
    cap_at_datacenter_capacity: bool = True


class MigrationModel(_Strict):
    effective_bandwidth_mbps: PositiveFloat = 1000.0
    evacuation: Literal[EVACUATION_MODES] = "auto"  # type: ignore[valid-type]


class ScenarioConfig(_Strict):
    schema_version: Literal[SCENARIO_SCHEMA] = SCENARIO_SCHEMA  # type: ignore[valid-type]
    name: str
    topology: TopologyModel = TopologyModel()
    server: ServerSpecModel = ServerSpecModel()
    thresholds: ThresholdModel = ThresholdModel()
    workload: WorkloadModel = WorkloadModel()
    migration: MigrationModel = MigrationModel()
    trace: Optional[str] = None
    algorithms: tuple[str, ...] = Field(ALGORITHMS, min_length=1)
    seeds: tuple[int, ...] = Field((0, 1, 2, 3, 4, 5, 6, 7), min_length=1)
    baseline: str = "mbfd"
    output_dir: str = "out"
    debug_invariants: bool = False

    @field_validator("algorithms")
    @classmethod
    def _known_algorithms(cls, v):
        names = tuple(a.strip().lower() for a in v)
        for a in names:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
        if len(set(names)) != len(names):
            raise ValueError("algorithms must not repeat")
        return names

    @field_validator("baseline")
    @classmethod
    def _known_baseline(cls, v):
        v = v.strip().lower()
        if v not in ALGORITHMS:
            raise ValueError(f"unknown baseline {v!r}")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if any(s < 0 or s >= 2**64 for s in v):
            raise ValueError("seeds must be 64-bit non-negative integers")
        if len(set(v)) != len(v):
            raise ValueError("seeds must not repeat")
        return v

    # -- builders ----------------------------------------------------------

    def build_topology(self) -> Topology:
        t, s = self.topology, self.server
        template = Server(
            id=0,
            rack_id=0,
            capacity_mips=s.capacity_mips,
            memory_mb=s.memory_mb,
            storage_gb=s.storage_gb,
            nic_bandwidth_mbps=s.nic_bandwidth_mbps,
            p_max_watts=s.p_max_watts,
            k_idle_fraction=s.k_idle_fraction,
        )
        return build_topology(
            rows=t.rows,
            racks_per_row=t.racks_per_row,
            servers_per_rack=t.servers_per_rack,
            switch_fan_in=t.switch_fan_in,
            server_template=template,
            tor_watts=t.tor_watts,
            aggregate_watts=t.aggregate_watts,
            core_watts=t.core_watts,
            cooling_watts=t.cooling_watts,
            inventory=t.inventory,
            inventory_seed=t.inventory_seed,
        )

    def build_thresholds(self) -> Thresholds:
        return Thresholds(self.thresholds.lower, self.thresholds.upper)

    def build_workload(self, seed: int) -> WorkloadConfig:
        w = self.workload
        t = self.topology
        cap = None
        if w.cap_at_datacenter_capacity:
            cap = t.rows * t.racks_per_row * t.servers_per_rack * self.server.capacity_mips
        return WorkloadConfig(
            epochs=w.epochs,
            initial_vm_count=w.initial_vm_count,
            vm_capacity_choices=w.vm_capacity_choices,
            p_leave=w.p_leave,
            p_arrive_rate=w.p_arrive_rate,
            p_demand_change=w.p_demand_change,
            epoch_seconds=w.epoch_seconds,
            rng_seed=seed,
            vm_memory_mb=w.vm_memory_mb,
            vm_storage_gb=w.vm_storage_gb,
            max_total_capacity_mips=cap,
        )

    def build_cost_model(self) -> MigrationCostModel:
        return MigrationCostModel(effective_bandwidth_mbps=self.migration.effective_bandwidth_mbps)


class ScenarioError(ValueError):
    pass


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<root>"
        reason = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        lines.append(f"{key}: {reason}")
    return "; ".join(lines)


def parse_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ScenarioError(_format_errors(err)) from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by name (e.g. ``paper_default``)."""
    if str(path) in BUNDLED:
        text = resources.files("vmconsol.scenarios").joinpath(f"{path}.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: not valid JSON ({err})") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return parse_scenario(data)


def dump_scenario(config: ScenarioConfig) -> str:
    """Resolved config with every default filled in."""
    return json.dumps(config.model_dump(mode="json"), indent=2) + "\n"
