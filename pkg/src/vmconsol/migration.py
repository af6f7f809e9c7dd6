"""Double-threshold migration policy and the migration cost model."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .model import Datacenter, ServerClass, Thresholds, VmSpec
from .placement import Placer, split_racks


class MoveReason(str, enum.Enum):
    OVERLOAD = "overload"
    UNDERUTILIZED_SERVER = "underutilized_server"
    UNDERUTILIZED_RACK = "underutilized_rack"


@dataclass(frozen=True)
class Move:
    vm_id: int
    from_server: int
    to_server: int | None  # None while the target is still pending
    reason: MoveReason


@dataclass
class MigrationPlan:
    """Moves committed during one epoch.

    A VM touched twice in the same epoch migrates once, from its original host
    straight to the final one; a round trip cancels out.
    """

    _moves: dict[int, Move] = field(default_factory=dict)

    def record(self, vm_id: int, from_server: int, to_server: int, reason: MoveReason) -> None:
        if vm_id in self._moves:
            first = self._moves.pop(vm_id)
            from_server, reason = first.from_server, first.reason
        if from_server != to_server:
            self._moves[vm_id] = Move(vm_id, from_server, to_server, reason)

    @property
    def moves(self) -> list[Move]:
        return list(self._moves.values())

    def __len__(self) -> int:
        return len(self._moves)


@dataclass(frozen=True)
class MigrationCostModel:
    # VM disks live on network-attached storage, so only memory is copied
    nas_assumed: bool = True
    effective_bandwidth_mbps: float = 1000.0
    # reserved hook: CPU tax per move on source/target (not modeled)
    cpu_tax_mips: int = 0

    def __post_init__(self):
        if self.effective_bandwidth_mbps <= 0:
            raise ValueError("migration bandwidth must be positive")


def migration_time(vm: VmSpec, model: MigrationCostModel, concurrent_moves: int) -> float:
    """Seconds to copy the VM's memory when ``concurrent_moves`` share the link.

    Decimal units: 1 MB = 10**6 bytes, 1 Mb/s = 10**6 bit/s.
    """
    if concurrent_moves < 1:
        raise ValueError("concurrent_moves must be at least 1")
    if model.effective_bandwidth_mbps <= 0:
        raise ValueError("migration bandwidth must be positive")
    bits = vm.memory_mb * 8e6
    return bits / (model.effective_bandwidth_mbps * 1e6 / concurrent_moves)


def select_overload_evictions(dc: Datacenter, server_id: int, thresholds: Thresholds) -> list[int]:
    """VMs to move off an overloaded server, in selection order.

    Each step takes the VM whose removal alone brings the server to or under
    the upper threshold with the smallest remaining gap; when no single VM is
    enough, the one with the highest request goes and the search repeats.
    """
    if dc.classify(server_id, thresholds) is not ServerClass.OVERLOADED:
        raise ValueError(f"server {server_id} is not overloaded")
    cap = dc.server(server_id).capacity_mips
    upper = thresholds.upper_utilization
    remaining = {vm: dc.demands[vm] for vm in dc.hosted[server_id]}
    load = sum(remaining.values())
    chosen = []
    while load / cap > upper:
        sufficient = [
            (upper - (load - d) / cap, vm) for vm, d in remaining.items() if (load - d) / cap <= upper
        ]
        if sufficient:
            _, vm = min(sufficient)
        else:
            vm = min(remaining, key=lambda v: (-remaining[v], v))
        load -= remaining.pop(vm)
        chosen.append(vm)
    return chosen


def underutilized_servers(dc: Datacenter, thresholds: Thresholds) -> list[int]:
    """Underutilized On servers, least utilized first."""
    ids = [
        s for s in dc.on_servers() if dc.classify(s, thresholds) is ServerClass.UNDERUTILIZED
    ]
    return sorted(ids, key=lambda s: (dc.utilization(s), s))


def evacuate_underutilized_servers(dc: Datacenter, thresholds: Thresholds) -> list[int]:
    """All VMs hosted on underutilized servers (the candidates for evacuation)."""
    return [
        vm
        for s in underutilized_servers(dc, thresholds)
        for vm in sorted(dc.hosted[s], key=lambda v: (-dc.demands[v], v))
    ]


def run_server_evacuation(
    dc: Datacenter, placer: Placer, thresholds: Thresholds, plan: MigrationPlan
) -> list[int]:
    """Empty every underutilized server whose VMs all fit elsewhere; returns slept servers.

    Targets are other non-empty On servers. A server whose VMs cannot all be
    rehomed keeps them.
    """
    slept = []
    for sid in underutilized_servers(dc, thresholds):
        if dc.classify(sid, thresholds) is not ServerClass.UNDERUTILIZED:
            continue
        vms = sorted(dc.hosted[sid], key=lambda v: (-dc.demands[v], v))
        moved = []
        for vm in vms:
            dc.unplace(vm)
            target = placer.find_server(dc, vm, thresholds, exclude={sid}, allow_empty=False)
            if target is None:
                dc.place(vm, sid)
                break
            dc.place(vm, target)
            moved.append((vm, target))
        else:
            dc.sleep(sid)
            slept.append(sid)
            for vm, target in moved:
                plan.record(vm, sid, target, MoveReason.UNDERUTILIZED_SERVER)
            continue
        for vm, _ in moved:
            dc.move(vm, sid)
    return slept


def evacuate_underutilized_racks(
    dc: Datacenter, thresholds: Thresholds, placer: Placer, plan: MigrationPlan
) -> list[int]:
    """Move whole underutilized racks onto non-underutilized ones; returns racks switched off.

    Racks go least utilized first. Each rack commits atomically: if any of its
    VMs has nowhere to go, the datacenter is restored exactly.
    """
    _, under, _ = split_racks(dc, thresholds)
    order = sorted(under, key=lambda r: (dc.rack_utilization(r), r))
    switched_off = []
    for rack_id in order:
        full, _, _ = split_racks(dc, thresholds)
        targets = [r for r in full if r != rack_id]
        if not targets or dc.rack_utilization(rack_id) >= thresholds.lower_utilization:
            continue
        servers = dc.topology.racks[rack_id].server_ids
        vms = sorted(
            (vm for s in servers for vm in dc.hosted[s]), key=lambda v: (-dc.demands[v], v)
        )
        snapshot = dc.copy()
        moves = []
        for vm in vms:
            origin = dc.unplace(vm)
            target = placer.find_server(dc, vm, thresholds, racks=targets)
            if target is None:
                dc.restore(snapshot)
                break
            dc.place(vm, target)
            moves.append((vm, origin, target))
        else:
            for s in servers:
                if dc.server(s).is_on:
                    dc.sleep(s)
            for vm, origin, target in moves:
                plan.record(vm, origin, target, MoveReason.UNDERUTILIZED_RACK)
            switched_off.append(rack_id)
    return switched_off
