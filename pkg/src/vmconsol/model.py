"""Datacenter hierarchy, VM population and utilization primitives.

All identifiers are dense integers. Candidate orderings everywhere break ties
toward the lowest id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping


class PowerState(str, enum.Enum):
    ON = "on"
    SLEEP = "sleep"


class ServerClass(str, enum.Enum):
    EMPTY = "empty"
    UNDERUTILIZED = "underutilized"
    NORMAL = "normal"
    OVERLOADED = "overloaded"


@dataclass(frozen=True)
class VmSpec:
    id: int
    capacity_mips: int
    memory_mb: int = 128
    storage_gb: int = 1

    def __post_init__(self):
        if self.capacity_mips <= 0 or self.memory_mb <= 0 or self.storage_gb <= 0:
            raise ValueError(f"VM {self.id}: resources must be positive")


@dataclass(frozen=True)
class VmDemand:
    vm_id: int
    requested_mips: int

    def check(self, spec: VmSpec) -> None:
        if not 0 < self.requested_mips <= spec.capacity_mips:
            raise ValueError(
                f"VM {self.vm_id}: requested {self.requested_mips} MIPS outside "
                f"(0, {spec.capacity_mips}]"
            )


@dataclass
class Server:
    id: int
    rack_id: int
    capacity_mips: int = 2000
    memory_mb: int = 10_000
    storage_gb: int = 1_000
    nic_bandwidth_mbps: float = 1000.0
    p_max_watts: float = 250.0
    k_idle_fraction: float = 0.7
    state: PowerState = PowerState.SLEEP

    def __post_init__(self):
        if self.capacity_mips <= 0 or self.p_max_watts <= 0:
            raise ValueError(f"server {self.id}: capacity and P_max must be positive")
        if not 0.0 <= self.k_idle_fraction <= 1.0:
            raise ValueError(f"server {self.id}: idle fraction must be in [0, 1]")

    @property
    def is_on(self) -> bool:
        return self.state is PowerState.ON


@dataclass(frozen=True)
class Rack:
    id: int
    server_ids: tuple[int, ...]
    tor_switch_power_watts: float = 366.0
    cooling_power_watts: float = 950.0


@dataclass(frozen=True)
class AggregateSwitch:
    rack_ids: frozenset[int]
    power_watts: float = 405.0


@dataclass
class Topology:
    """Racks, servers and the three-layer switch tree.

    Servers carry their power state, so a topology is mutable; use
    :meth:`copy` before speculative changes.
    """

    servers: list[Server]
    racks: list[Rack]
    aggregate_switches: list[AggregateSwitch]
    core_router_power_watts: float = 3500.0
    # order in which rack-oblivious algorithms scan servers; None = by id
    inventory_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.inventory_order is None:
            self.inventory_order = tuple(range(len(self.servers)))
        elif sorted(self.inventory_order) != list(range(len(self.servers))):
            raise ValueError("inventory_order must be a permutation of server ids")
        for i, s in enumerate(self.servers):
            if s.id != i:
                raise ValueError("server ids must be dense and ordered")
        for i, r in enumerate(self.racks):
            if r.id != i:
                raise ValueError("rack ids must be dense and ordered")
        owner: dict[int, int] = {}
        for r in self.racks:
            for sid in r.server_ids:
                if sid in owner:
                    raise ValueError(f"server {sid} is in racks {owner[sid]} and {r.id}")
                if self.servers[sid].rack_id != r.id:
                    raise ValueError(f"server {sid} disagrees about its rack")
                owner[sid] = r.id
        if len(owner) != len(self.servers):
            raise ValueError("every server must belong to exactly one rack")
        seen: set[int] = set()
        for agg in self.aggregate_switches:
            if seen & agg.rack_ids:
                raise ValueError("a rack is attached to two aggregate switches")
            seen |= agg.rack_ids
        if seen != set(range(len(self.racks))):
            raise ValueError("every rack must attach to exactly one aggregate switch")

    @property
    def n_racks(self) -> int:
        return len(self.racks)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    @property
    def total_capacity_mips(self) -> int:
        return sum(s.capacity_mips for s in self.servers)

    def copy(self) -> Topology:
        new = object.__new__(Topology)
        new.servers = [replace(s) for s in self.servers]
        new.racks = self.racks
        new.aggregate_switches = self.aggregate_switches
        new.core_router_power_watts = self.core_router_power_watts
        new.inventory_order = self.inventory_order
        return new


def build_topology(
    rows: int = 2,
    racks_per_row: int = 4,
    servers_per_rack: int = 10,
    switch_fan_in: int = 4,
    server_template: Server | None = None,
    tor_watts: float = 366.0,
    aggregate_watts: float = 405.0,
    core_watts: float = 3500.0,
    cooling_watts: float = 950.0,
    inventory: str = "interleaved",
    inventory_seed: int = 0,
) -> Topology:
    """Regular topology: racks numbered row-major, servers rack-major.

    Aggregate switches take ``switch_fan_in`` consecutive racks each; the last
    one takes the remainder. ``inventory`` picks the flat server order seen by
    rack-oblivious algorithms (see :func:`inventory_order`).
    """
    template = server_template or Server(id=0, rack_id=0)
    n_racks = rows * racks_per_row
    servers, racks = [], []
    for r in range(n_racks):
        ids = []
        for _ in range(servers_per_rack):
            sid = len(servers)
            servers.append(replace(template, id=sid, rack_id=r, state=PowerState.SLEEP))
            ids.append(sid)
        racks.append(Rack(r, tuple(ids), tor_watts, cooling_watts))
    aggs = [
        AggregateSwitch(frozenset(range(lo, min(lo + switch_fan_in, n_racks))), aggregate_watts)
        for lo in range(0, n_racks, switch_fan_in)
    ]
    order = inventory_order(n_racks, servers_per_rack, inventory, inventory_seed)
    return Topology(servers, racks, aggs, core_watts, order)


INVENTORY_ORDERS = ("rack_major", "interleaved", "shuffled")


def inventory_order(
    n_racks: int, servers_per_rack: int, kind: str = "interleaved", seed: int = 0
) -> tuple[int, ...]:
    """Flat server order for a regular rack-major numbering.

    ``rack_major`` is plain id order, ``interleaved`` walks slot 0 of every
    rack, then slot 1, and so on; ``shuffled`` is a seeded permutation.
    """
    n = n_racks * servers_per_rack
    if kind == "rack_major":
        return tuple(range(n))
    if kind == "interleaved":
        return tuple(sorted(range(n), key=lambda s: (s % servers_per_rack, s // servers_per_rack)))
    if kind == "shuffled":
        import numpy as np

        return tuple(np.random.default_rng(seed).permutation(n).tolist())
    raise ValueError(f"unknown inventory order {kind!r}; choose from {INVENTORY_ORDERS}")


@dataclass(frozen=True)
class Thresholds:
    lower_utilization: float = 0.4
    upper_utilization: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.lower_utilization < self.upper_utilization < 1.0:
            raise ValueError(
                "thresholds must satisfy 0 < lower < upper < 1, got "
                f"({self.lower_utilization}, {self.upper_utilization})"
            )


@dataclass
class Allocation:
    placements: dict[int, int] = field(default_factory=dict)


def classify(utilization: float, n_vms: int, thresholds: Thresholds) -> ServerClass:
    if n_vms == 0:
        return ServerClass.EMPTY
    if utilization < thresholds.lower_utilization:
        return ServerClass.UNDERUTILIZED
    if utilization > thresholds.upper_utilization:
        return ServerClass.OVERLOADED
    return ServerClass.NORMAL


class Datacenter:
    """Mutable simulation state: topology, live VMs, demands and the allocation.

    Per-server aggregates (hosted MIPS, memory, storage) are maintained
    incrementally; :meth:`check_invariants` recomputes them from scratch.
    Live VMs may be unplaced (queued), in which case they are absent from the
    allocation but still present in ``specs`` and ``demands``.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        self.specs: dict[int, VmSpec] = {}
        self.demands: dict[int, int] = {}
        self.allocation = Allocation()
        n = topology.n_servers
        self.hosted: list[set[int]] = [set() for _ in range(n)]
        self.load_mips = [0] * n
        self.mem_used = [0] * n
        self.storage_used = [0] * n

    # -- VM population -----------------------------------------------------

    def add_vm(self, spec: VmSpec, requested_mips: int) -> None:
        if spec.id in self.specs:
            raise ValueError(f"VM {spec.id} already live")
        VmDemand(spec.id, requested_mips).check(spec)
        self.specs[spec.id] = spec
        self.demands[spec.id] = requested_mips

    def remove_vm(self, vm_id: int) -> None:
        if vm_id in self.allocation.placements:
            self.unplace(vm_id)
        del self.specs[vm_id]
        del self.demands[vm_id]

    def set_demand(self, vm_id: int, requested_mips: int) -> None:
        VmDemand(vm_id, requested_mips).check(self.specs[vm_id])
        sid = self.allocation.placements.get(vm_id)
        if sid is not None:
            self.load_mips[sid] += requested_mips - self.demands[vm_id]
        self.demands[vm_id] = requested_mips

    # -- placement ---------------------------------------------------------

    def server(self, server_id: int) -> Server:
        if not 0 <= server_id < len(self.topology.servers):
            raise KeyError(f"unknown server {server_id}")
        return self.topology.servers[server_id]

    def rack(self, rack_id: int) -> Rack:
        if not 0 <= rack_id < len(self.topology.racks):
            raise KeyError(f"unknown rack {rack_id}")
        return self.topology.racks[rack_id]

    def host_of(self, vm_id: int) -> int | None:
        return self.allocation.placements.get(vm_id)

    def place(self, vm_id: int, server_id: int) -> None:
        if vm_id in self.allocation.placements:
            raise ValueError(f"VM {vm_id} already placed")
        server = self.server(server_id)
        server.state = PowerState.ON
        spec = self.specs[vm_id]
        self.allocation.placements[vm_id] = server_id
        self.hosted[server_id].add(vm_id)
        self.load_mips[server_id] += self.demands[vm_id]
        self.mem_used[server_id] += spec.memory_mb
        self.storage_used[server_id] += spec.storage_gb

    def unplace(self, vm_id: int) -> int:
        sid = self.allocation.placements.pop(vm_id)
        spec = self.specs[vm_id]
        self.hosted[sid].discard(vm_id)
        self.load_mips[sid] -= self.demands[vm_id]
        self.mem_used[sid] -= spec.memory_mb
        self.storage_used[sid] -= spec.storage_gb
        return sid

    def move(self, vm_id: int, server_id: int) -> int:
        origin = self.unplace(vm_id)
        self.place(vm_id, server_id)
        return origin

    def wake(self, server_id: int) -> None:
        self.server(server_id).state = PowerState.ON

    def sleep(self, server_id: int) -> None:
        if self.hosted[server_id]:
            raise ValueError(f"server {server_id} still hosts VMs")
        self.server(server_id).state = PowerState.SLEEP

    def sleep_empty_servers(self) -> list[int]:
        slept = [s.id for s in self.topology.servers if s.is_on and not self.hosted[s.id]]
        for sid in slept:
            self.sleep(sid)
        return slept

    # -- queries -----------------------------------------------------------

    def utilization(self, server_id: int) -> float:
        capacity = self.server(server_id).capacity_mips
        return self.load_mips[server_id] / capacity

    def rack_utilization(self, rack_id: int) -> float:
        rack = self.rack(rack_id)
        cap = sum(self.topology.servers[s].capacity_mips for s in rack.server_ids)
        return sum(self.load_mips[s] for s in rack.server_ids) / cap

    def rack_active(self, rack_id: int) -> bool:
        return any(self.topology.servers[s].is_on for s in self.rack(rack_id).server_ids)

    def classify(self, server_id: int, thresholds: Thresholds) -> ServerClass:
        return classify(self.utilization(server_id), len(self.hosted[server_id]), thresholds)

    def fits(self, server_id: int, vm_id: int, thresholds: Thresholds) -> bool:
        server = self.server(server_id)
        spec = self.specs[vm_id]
        if self.mem_used[server_id] + spec.memory_mb > server.memory_mb:
            return False
        if self.storage_used[server_id] + spec.storage_gb > server.storage_gb:
            return False
        after = (self.load_mips[server_id] + self.demands[vm_id]) / server.capacity_mips
        return after <= thresholds.upper_utilization

    def on_servers(self) -> list[int]:
        return [s.id for s in self.topology.servers if s.is_on]

    def active_racks(self) -> list[int]:
        return [r.id for r in self.topology.racks if self.rack_active(r.id)]

    def unplaced(self) -> list[int]:
        return [v for v in self.specs if v not in self.allocation.placements]

    def copy(self) -> Datacenter:
        new = object.__new__(Datacenter)
        new.topology = self.topology.copy()
        new.specs = dict(self.specs)
        new.demands = dict(self.demands)
        new.allocation = Allocation(dict(self.allocation.placements))
        new.hosted = [set(h) for h in self.hosted]
        new.load_mips = list(self.load_mips)
        new.mem_used = list(self.mem_used)
        new.storage_used = list(self.storage_used)
        return new

    def restore(self, snapshot: Datacenter) -> None:
        """Roll back in place to a snapshot taken with :meth:`copy`."""
        self.topology = snapshot.topology.copy()
        self.specs = dict(snapshot.specs)
        self.demands = dict(snapshot.demands)
        self.allocation = Allocation(dict(snapshot.allocation.placements))
        self.hosted = [set(h) for h in snapshot.hosted]
        self.load_mips = list(snapshot.load_mips)
        self.mem_used = list(snapshot.mem_used)
        self.storage_used = list(snapshot.storage_used)

    def fingerprint(self) -> tuple:
        return (
            tuple(s.state for s in self.topology.servers),
            tuple(sorted(self.allocation.placements.items())),
            tuple(sorted(self.demands.items())),
        )

    def check_invariants(self) -> None:
        """Recompute all cached aggregates and assert the model invariants."""
        servers = self.topology.servers
        n = len(servers)
        load, mem, sto = [0] * n, [0] * n, [0] * n
        hosted: list[set[int]] = [set() for _ in range(n)]
        for vm, sid in self.allocation.placements.items():
            assert vm in self.specs, f"placed VM {vm} is not live"
            assert servers[sid].is_on, f"VM {vm} placed on sleeping server {sid}"
            load[sid] += self.demands[vm]
            mem[sid] += self.specs[vm].memory_mb
            sto[sid] += self.specs[vm].storage_gb
            hosted[sid].add(vm)
        assert load == self.load_mips, "cached MIPS load drifted"
        assert mem == self.mem_used and sto == self.storage_used, "cached memory/storage drifted"
        assert hosted == self.hosted, "cached hosting sets drifted"
        for s in servers:
            assert mem[s.id] <= s.memory_mb, f"server {s.id} memory overcommitted"
            assert sto[s.id] <= s.storage_gb, f"server {s.id} storage overcommitted"
            if not s.is_on:
                assert not hosted[s.id], f"sleeping server {s.id} hosts VMs"
        for vm, spec in self.specs.items():
            VmDemand(vm, self.demands[vm]).check(spec)
        assert self.specs.keys() == self.demands.keys()


# Spec-named queries over a Datacenter. Pure recomputations (no caches) so they
# double as an independent route for the cached methods above.


def server_utilization(
    server: Server, allocation: Allocation, demands: Mapping[int, int]
) -> float:
    total = sum(demands[vm] for vm, sid in allocation.placements.items() if sid == server.id)
    return total / server.capacity_mips


def rack_utilization(
    rack: Rack, topology: Topology, allocation: Allocation, demands: Mapping[int, int]
) -> float:
    members = set(rack.server_ids)
    hosted = sum(demands[vm] for vm, sid in allocation.placements.items() if sid in members)
    return hosted / sum(topology.servers[s].capacity_mips for s in rack.server_ids)


def classify_server(
    server: Server, allocation: Allocation, demands: Mapping[int, int], thresholds: Thresholds
) -> ServerClass:
    n = sum(1 for sid in allocation.placements.values() if sid == server.id)
    return classify(server_utilization(server, allocation, demands), n, thresholds)


def fits(
    server: Server,
    allocation: Allocation,
    demands: Mapping[int, int],
    specs: Mapping[int, VmSpec],
    vm: VmSpec,
    demand: VmDemand,
    thresholds: Thresholds,
) -> bool:
    hosted = [v for v, sid in allocation.placements.items() if sid == server.id]
    if sum(specs[v].memory_mb for v in hosted) + vm.memory_mb > server.memory_mb:
        return False
    if sum(specs[v].storage_gb for v in hosted) + vm.storage_gb > server.storage_gb:
        return False
    after = (sum(demands[v] for v in hosted) + demand.requested_mips) / server.capacity_mips
    return after <= thresholds.upper_utilization


def demand_map(demands: Iterable[VmDemand]) -> dict[int, int]:
    return {d.vm_id: d.requested_mips for d in demands}
