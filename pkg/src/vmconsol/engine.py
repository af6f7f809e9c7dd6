"""Epoch loop: apply workload, evict, place, evacuate, sleep, account."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .migration import (
    MigrationCostModel,
    MigrationPlan,
    MoveReason,
    evacuate_underutilized_racks,
    migration_time,
    run_server_evacuation,
    select_overload_evictions,
)
from .model import Datacenter, ServerClass, Thresholds, Topology
from .placement import Placer, PlacementItem, get_placer
from .power import COMPONENTS, EnergyLedger, PowerBreakdown, accumulate_energy, datacenter_power
from .workload import EpochEvents

log = logging.getLogger(__name__)

EVACUATION_MODES = ("auto", "server", "rack", "both", "none")


@dataclass
class SlaAccounting:
    violation_events: int = 0
    vm_epoch_frames: int = 0

    @property
    def violation_rate(self) -> float:
        return self.violation_events / max(1, self.vm_epoch_frames)

    def __iadd__(self, other: SlaAccounting) -> SlaAccounting:
        self.violation_events += other.violation_events
        self.vm_epoch_frames += other.vm_epoch_frames
        return self


@dataclass(frozen=True)
class MigrationRecord:
    epoch: int
    vm_id: int
    from_server: int
    to_server: int
    reason: str
    modeled_seconds: float


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    servers_watts: float
    tor_watts: float
    aggregate_watts: float
    core_watts: float
    network_watts: float
    cooling_watts: float
    total_watts: float
    active_servers: int
    active_racks: int
    migrations: int
    sla_events: int
    vm_frames: int
    live_vms: int
    unplaced_vms: int
    residual_overloads: int


def record_sla(dc: Datacenter) -> SlaAccounting:
    """Violations for the current epoch.

    Every VM on an On server whose total request exceeds its capacity is
    shorted; so is every queued VM, which receives nothing.
    """
    events = 0
    for s in dc.topology.servers:
        if s.is_on and dc.load_mips[s.id] > s.capacity_mips:
            events += len(dc.hosted[s.id])
    events += len(dc.specs) - len(dc.allocation.placements)
    return SlaAccounting(events, len(dc.specs))


def resolve_evacuation(placer: Placer, mode: str) -> str:
    if mode not in EVACUATION_MODES:
        raise ValueError(f"evacuation mode must be one of {EVACUATION_MODES}")
    if mode == "auto":
        return placer.evacuation
    return mode


class Simulation:
    """One run of one algorithm over a topology.

    All servers start asleep. Call :meth:`run_epoch` once per trace epoch, in
    order. With ``debug=True`` every model invariant is re-checked after each
    epoch; otherwise only at :meth:`finish`.
    """

    def __init__(
        self,
        topology: Topology,
        algorithm: str | Placer,
        thresholds: Thresholds = Thresholds(),
        epoch_seconds: float = 300.0,
        evacuation: str = "auto",
        cost_model: MigrationCostModel = MigrationCostModel(),
        debug: bool = False,
    ):
        if epoch_seconds <= 0:
            raise ValueError("epoch_seconds must be positive")
        self.placer = get_placer(algorithm) if isinstance(algorithm, str) else algorithm
        self.thresholds = thresholds
        self.epoch_seconds = epoch_seconds
        self.evacuation = resolve_evacuation(self.placer, evacuation)
        self.cost_model = cost_model
        self.debug = debug
        self.dc = Datacenter(topology.copy())
        for s in self.dc.topology.servers:
            if s.is_on:
                raise ValueError("simulation must start with every server asleep")
        self.epoch = 0
        self.queue: list[int] = []
        self.ledger = EnergyLedger()
        self.sla = SlaAccounting()
        self.migration_log: list[MigrationRecord] = []
        self.rows: list[EpochRow] = []
        self.seen_ids: set[int] = set()

    def run_epoch(self, events: EpochEvents) -> EpochRow:
        if events.epoch != self.epoch:
            raise ValueError(f"events for epoch {events.epoch}, simulation is at {self.epoch}")
        dc, thr = self.dc, self.thresholds
        live_before = len(dc.specs)

        # 1-2: workload changes
        for vm in events.departures:
            dc.remove_vm(vm)
        if events.departures:
            gone = set(events.departures)
            self.queue = [vm for vm in self.queue if vm not in gone]
        for vm, mips in events.demand_updates.items():
            dc.set_demand(vm, mips)

        # 3: evictions from overloaded servers
        plan = MigrationPlan()
        evicted: list[PlacementItem] = []
        for sid in dc.on_servers():
            if dc.classify(sid, thr) is not ServerClass.OVERLOADED:
                continue
            cap = dc.server(sid).capacity_mips
            share = min(1.0, cap / dc.load_mips[sid])
            for vm in select_overload_evictions(dc, sid, thr):
                evicted.append(PlacementItem(vm, dc.demands[vm], dc.demands[vm] * share, sid))
                dc.unplace(vm)

        # 4: merge evictions, retries and arrivals
        request = list(evicted)
        request += [PlacementItem(vm, dc.demands[vm]) for vm in self.queue]
        for spec, mips in events.arrivals:
            if spec.id in self.seen_ids:
                raise ValueError(f"VM id {spec.id} reused")
            self.seen_ids.add(spec.id)
            dc.add_vm(spec, mips)
            request.append(PlacementItem(spec.id, mips))

        # 5: placement; evictions with no new home go back where they were
        outcome = self.placer.place(dc, request, thr)
        unplaced = set(outcome.unplaced)
        for item in evicted:
            if item.vm_id in unplaced:
                dc.place(item.vm_id, item.origin)
                unplaced.discard(item.vm_id)
            else:
                plan.record(item.vm_id, item.origin, outcome.placed[item.vm_id], MoveReason.OVERLOAD)
        self.queue = [it.vm_id for it in request if it.vm_id in unplaced]
        if self.queue:
            log.debug("epoch %d: %d VMs queued for retry", self.epoch, len(self.queue))

        # 6: evacuation
        if self.evacuation in ("server", "both"):
            run_server_evacuation(dc, self.placer, thr, plan)
        if self.evacuation in ("rack", "both"):
            evacuate_underutilized_racks(dc, thr, self.placer, plan)

        # 7: sleep whatever is empty
        dc.sleep_empty_servers()

        # 8-9: SLA and power
        sla = record_sla(dc)
        self.sla += sla
        breakdown = datacenter_power(dc)
        accumulate_energy(self.ledger, breakdown, self.epoch_seconds)
        moves = plan.moves
        for mv in moves:
            seconds = migration_time(dc.specs[mv.vm_id], self.cost_model, len(moves))
            self.migration_log.append(
                MigrationRecord(self.epoch, mv.vm_id, mv.from_server, mv.to_server, mv.reason.value, seconds)
            )

        residual = sum(
            1 for s in dc.on_servers() if dc.classify(s, thr) is ServerClass.OVERLOADED
        )
        row = EpochRow(
            epoch=self.epoch,
            servers_watts=breakdown.servers_watts,
            tor_watts=breakdown.tor_watts,
            aggregate_watts=breakdown.aggregate_watts,
            core_watts=breakdown.core_watts,
            network_watts=breakdown.network_watts,
            cooling_watts=breakdown.cooling_watts,
            total_watts=breakdown.total_watts,
            active_servers=len(dc.on_servers()),
            active_racks=len(dc.active_racks()),
            migrations=len(moves),
            sla_events=sla.violation_events,
            vm_frames=sla.vm_epoch_frames,
            live_vms=len(dc.specs),
            unplaced_vms=len(self.queue),
            residual_overloads=residual,
        )
        self.rows.append(row)
        if self.debug:
            self.check_invariants(live_before, events, breakdown)
        self.epoch += 1
        return row

    def check_invariants(
        self, live_before: int, events: EpochEvents, breakdown: PowerBreakdown
    ) -> None:
        dc = self.dc
        dc.check_invariants()
        expected = live_before + len(events.arrivals) - len(events.departures)
        assert len(dc.specs) == expected, "VM conservation violated"
        assert sorted(self.queue) == sorted(dc.unplaced()), "queue disagrees with allocation"
        assert breakdown.network_watts == (
            breakdown.tor_watts + breakdown.aggregate_watts + breakdown.core_watts
        )
        assert breakdown.total_watts == (
            breakdown.servers_watts + breakdown.cooling_watts + breakdown.network_watts
        )
        active = set(dc.active_racks())
        for s in dc.topology.servers:
            if not s.is_on:
                assert not dc.hosted[s.id], f"sleeping server {s.id} hosts VMs"
            else:
                assert dc.hosted[s.id], f"empty server {s.id} left on"
        expected_cooling = sum(dc.topology.racks[r].cooling_power_watts for r in sorted(active))
        assert breakdown.cooling_watts == expected_cooling, "phantom cooling power"
        if not active:
            assert breakdown.total_watts == 0.0, "phantom power in an idle datacenter"

    def finish(self) -> SimulationReport:
        self.dc.check_invariants()
        return SimulationReport.from_simulation(self)


@dataclass
class SimulationReport:
    algorithm: str
    epochs: int
    epoch_seconds: float
    rows: list[EpochRow] = field(default_factory=list)
    energy_joules: dict[str, float] = field(default_factory=dict)
    sla: SlaAccounting = field(default_factory=SlaAccounting)
    migrations: list[MigrationRecord] = field(default_factory=list)
    seed: int | None = None

    @classmethod
    def from_simulation(cls, sim: Simulation, seed: int | None = None) -> SimulationReport:
        return cls(
            algorithm=sim.placer.name,
            epochs=len(sim.rows),
            epoch_seconds=sim.epoch_seconds,
            rows=list(sim.rows),
            energy_joules=dict(sim.ledger.joules),
            sla=SlaAccounting(sim.sla.violation_events, sim.sla.vm_epoch_frames),
            migrations=list(sim.migration_log),
            seed=seed,
        )

    @property
    def avg_active_servers(self) -> float:
        return sum(r.active_servers for r in self.rows) / max(1, len(self.rows))

    @property
    def avg_active_racks(self) -> float:
        return sum(r.active_racks for r in self.rows) / max(1, len(self.rows))

    @property
    def migration_count(self) -> int:
        return len(self.migrations)

    def energy_wh(self, component: str = "total") -> float:
        return self.energy_joules[component] / 3600.0

    def summary(self) -> dict:
        return {
            "avg_active_servers": self.avg_active_servers,
            "avg_active_racks": self.avg_active_racks,
            "energy_joules": {c: self.energy_joules[c] for c in COMPONENTS},
            "migrations": self.migration_count,
            "sla_violation_events": self.sla.violation_events,
            "sla_vm_frames": self.sla.vm_epoch_frames,
            "sla_violation_rate": self.sla.violation_rate,
            "max_unplaced": max((r.unplaced_vms for r in self.rows), default=0),
            "residual_overload_epochs": sum(1 for r in self.rows if r.residual_overloads),
        }

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "epochs": self.epochs,
            "epoch_seconds": self.epoch_seconds,
            "summary": self.summary(),
            "rows": [asdict(r) for r in self.rows],
            "migrations": [asdict(m) for m in self.migrations],
        }


def run_simulation(
    topology: Topology,
    trace: Sequence[EpochEvents],
    algorithm: str | Placer,
    thresholds: Thresholds = Thresholds(),
    epoch_seconds: float = 300.0,
    evacuation: str = "auto",
    cost_model: MigrationCostModel = MigrationCostModel(),
    debug: bool = False,
    seed: int | None = None,
) -> SimulationReport:
    if not trace:
        raise ValueError("trace must contain at least one epoch")
    validate_trace(topology, trace)
    sim = Simulation(topology, algorithm, thresholds, epoch_seconds, evacuation, cost_model, debug)
    for events in trace:
        sim.run_epoch(events)
    sim.dc.check_invariants()
    return SimulationReport.from_simulation(sim, seed)


def validate_trace(topology: Topology, trace: Iterable[EpochEvents]) -> None:
    """Reject traces no server of this topology could ever host."""
    biggest = max(s.capacity_mips for s in topology.servers)
    mem = max(s.memory_mb for s in topology.servers)
    for ev in trace:
        for spec, _ in ev.arrivals:
            if spec.capacity_mips > biggest or spec.memory_mb > mem:
                raise ValueError(
                    f"VM {spec.id} ({spec.capacity_mips} MIPS, {spec.memory_mb} MB) "
                    "exceeds every server in the topology"
                )
