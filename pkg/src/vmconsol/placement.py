"""VM placement algorithms over a shared best-fit search core.

Every placer mutates the :class:`~vmconsol.model.Datacenter` it is given.
Copy the datacenter first to evaluate a placement speculatively.

Names accepted by :func:`get_placer`: ``mbfd``, ``obfd``, ``rbr``, ``nur``,
``omur`` (case-insensitive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection, Iterable, Sequence

from .model import Datacenter, Thresholds
from .power import estimated_power, server_power

# power increases closer than this are ties; ties go to the earlier candidate
POWER_EPS = 1e-9


@dataclass(frozen=True)
class PlacementItem:
    vm_id: int
    requested_mips: int
    # MIPS the VM actually received on its previous host; None for new arrivals
    current_mips: float | None = None
    origin: int | None = None


@dataclass
class PlacementOutcome:
    placed: dict[int, int] = field(default_factory=dict)
    unplaced: list[int] = field(default_factory=list)
    servers_woken: list[int] = field(default_factory=list)


def request_for(dc: Datacenter, vm_ids: Iterable[int]) -> list[PlacementItem]:
    """Placement request for live, currently unplaced VMs."""
    items = []
    seen = set()
    for vm in vm_ids:
        if vm in seen or dc.host_of(vm) is not None:
            raise ValueError(f"VM {vm} is duplicated or already placed")
        seen.add(vm)
        items.append(PlacementItem(vm, dc.demands[vm]))
    return items


def sort_vms_by_mips_desc(items: Iterable[PlacementItem]) -> list[PlacementItem]:
    return sorted(items, key=lambda it: (-it.requested_mips, it.vm_id))


def power_increase(dc: Datacenter, server_id: int, vm_id: int) -> float:
    """Server-power delta if ``vm_id`` were added; includes the idle share for a sleeping server."""
    server = dc.server(server_id)
    before = server_power(server, dc.utilization(server_id))
    after = estimated_power(
        server, (dc.load_mips[server_id] + dc.demands[vm_id]) / server.capacity_mips
    )
    return after - before


def best_server_min_power_increase(
    dc: Datacenter, candidates: Iterable[int], vm_id: int, thresholds: Thresholds
) -> int | None:
    best, best_power = None, math.inf
    for sid in candidates:
        if not dc.fits(sid, vm_id, thresholds):
            continue
        p = power_increase(dc, sid, vm_id)
        if p < best_power - POWER_EPS:
            best, best_power = sid, p
    return best


def obfd_tiers(
    dc: Datacenter, candidates: Iterable[int], thresholds: Thresholds, allow_empty: bool = True
) -> tuple[list[int], list[int], list[int]]:
    """Split candidates into (normal-or-above, underutilized, empty), order kept."""
    normal, under, empty = [], [], []
    for sid in candidates:
        if not dc.hosted[sid]:
            if allow_empty:
                empty.append(sid)
        elif dc.utilization(sid) < thresholds.lower_utilization:
            under.append(sid)
        else:
            normal.append(sid)
    return normal, under, empty


def obfd_search(
    dc: Datacenter,
    candidates: Sequence[int],
    vm_id: int,
    thresholds: Thresholds,
    allow_empty: bool = True,
) -> int | None:
    for tier in obfd_tiers(dc, candidates, thresholds, allow_empty):
        sid = best_server_min_power_increase(dc, tier, vm_id, thresholds)
        if sid is not None:
            return sid
    return None


def _rack_servers(dc: Datacenter, racks: Iterable[int]) -> list[int]:
    return [sid for r in racks for sid in dc.topology.racks[r].server_ids]


class Placer:
    """Base placer: sort the request, then find a server for each VM in turn.

    ``find_server`` takes optional restrictions used by the evacuation passes:
    ``racks`` limits candidates to those racks, ``exclude`` drops servers and
    ``allow_empty=False`` forbids empty (including sleeping) targets.
    """

    name = ""
    rack_aware = False
    # which evacuation pass follows placement: "server", "rack" or "both"
    evacuation = "server"

    def order(self, items: Iterable[PlacementItem]) -> list[PlacementItem]:
        return sort_vms_by_mips_desc(items)

    def find_server(
        self,
        dc: Datacenter,
        vm_id: int,
        thresholds: Thresholds,
        *,
        racks: Collection[int] | None = None,
        exclude: Collection[int] = (),
        allow_empty: bool = True,
    ) -> int | None:
        raise NotImplementedError

    def place(
        self, dc: Datacenter, request: Iterable[PlacementItem], thresholds: Thresholds
    ) -> PlacementOutcome:
        outcome = PlacementOutcome()
        for item in self.order(request):
            if dc.host_of(item.vm_id) is not None:
                raise ValueError(f"VM {item.vm_id} is already placed")
            sid = self.find_server(dc, item.vm_id, thresholds)
            if sid is None:
                outcome.unplaced.append(item.vm_id)
                continue
            if not dc.server(sid).is_on:
                outcome.servers_woken.append(sid)
            dc.place(item.vm_id, sid)
            outcome.placed[item.vm_id] = sid
        return outcome

    @staticmethod
    def _candidates(
        dc: Datacenter, racks: Collection[int] | None, exclude: Collection[int]
    ) -> list[int]:
        if racks is None:
            ids = dc.topology.inventory_order
        else:
            ids = _rack_servers(dc, sorted(racks))
        return [s for s in ids if s not in exclude]

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class MBFD(Placer):
    """Baseline modified best-fit decreasing.

    VMs are ranked by the MIPS they were actually receiving (new arrivals by
    their request) and each goes to the server with the smallest power
    increase across one flat list of all servers.
    """

    name = "mbfd"

    def order(self, items):
        def key(it: PlacementItem):
            current = it.requested_mips if it.current_mips is None else it.current_mips
            return (-current, it.vm_id)

        return sorted(items, key=key)

    def find_server(self, dc, vm_id, thresholds, *, racks=None, exclude=(), allow_empty=True):
        candidates = self._candidates(dc, racks, exclude)
        if not allow_empty:
            candidates = [s for s in candidates if dc.hosted[s]]
        return best_server_min_power_increase(dc, candidates, vm_id, thresholds)


class OBFD(Placer):
    """Request-sorted best fit over tiers: loaded servers, then underutilized, then empty."""

    name = "obfd"

    def find_server(self, dc, vm_id, thresholds, *, racks=None, exclude=(), allow_empty=True):
        return obfd_search(dc, self._candidates(dc, racks, exclude), vm_id, thresholds, allow_empty)


def racks_by_utilization(dc: Datacenter, racks: Iterable[int] | None = None) -> list[int]:
    ids = range(dc.topology.n_racks) if racks is None else racks
    return sorted(ids, key=lambda r: (-dc.rack_utilization(r), r))


def split_racks(
    dc: Datacenter, thresholds: Thresholds, racks: Iterable[int] | None = None
) -> tuple[list[int], list[int], list[int]]:
    """(non-underutilized active, underutilized active, inactive) racks by id."""
    ids = range(dc.topology.n_racks) if racks is None else sorted(racks)
    full, under, idle = [], [], []
    for r in ids:
        if not dc.rack_active(r):
            idle.append(r)
        elif dc.rack_utilization(r) < thresholds.lower_utilization:
            under.append(r)
        else:
            full.append(r)
    return full, under, idle


class RBR(Placer):
    """Rack by rack: the most utilized rack that can take the VM, then OBFD inside it."""

    name = "rbr"
    rack_aware = True
    evacuation = "rack"

    def find_server(self, dc, vm_id, thresholds, *, racks=None, exclude=(), allow_empty=True):
        for r in racks_by_utilization(dc, racks):
            candidates = [s for s in dc.topology.racks[r].server_ids if s not in exclude]
            if not allow_empty:
                candidates = [s for s in candidates if dc.hosted[s]]
            if any(dc.fits(s, vm_id, thresholds) for s in candidates):
                return obfd_search(dc, candidates, vm_id, thresholds, allow_empty)
        return None


class NUR(Placer):
    """OBFD over non-underutilized racks first, then underutilized ones, then idle racks."""

    name = "nur"
    rack_aware = True
    evacuation = "rack"

    def find_server(self, dc, vm_id, thresholds, *, racks=None, exclude=(), allow_empty=True):
        for group in split_racks(dc, thresholds, racks):
            candidates = [s for s in _rack_servers(dc, group) if s not in exclude]
            sid = obfd_search(dc, candidates, vm_id, thresholds, allow_empty)
            if sid is not None:
                return sid
        return None


class OMUR(Placer):
    """Tightest fit against the upper threshold in non-underutilized racks.

    Falls back to OBFD over every server, racks ordered by decreasing
    utilization and servers within a rack likewise.
    """

    name = "omur"
    rack_aware = True
    evacuation = "both"

    def find_server(self, dc, vm_id, thresholds, *, racks=None, exclude=(), allow_empty=True):
        full, _, _ = split_racks(dc, thresholds, racks)
        sid = self.min_gap_server(dc, _rack_servers(dc, full), vm_id, thresholds, exclude)
        if sid is not None:
            return sid
        ordered = []
        for r in racks_by_utilization(dc, racks):
            servers = sorted(
                dc.topology.racks[r].server_ids, key=lambda s: (-dc.utilization(s), s)
            )
            ordered.extend(s for s in servers if s not in exclude)
        return obfd_search(dc, ordered, vm_id, thresholds, allow_empty)

    @staticmethod
    def min_gap_server(
        dc: Datacenter,
        candidates: Iterable[int],
        vm_id: int,
        thresholds: Thresholds,
        exclude: Collection[int] = (),
    ) -> int | None:
        best, best_gap = None, math.inf
        for sid in candidates:
            if sid in exclude or not dc.hosted[sid] or not dc.fits(sid, vm_id, thresholds):
                continue
            after = (dc.load_mips[sid] + dc.demands[vm_id]) / dc.server(sid).capacity_mips
            gap = thresholds.upper_utilization - after
            if gap < best_gap - POWER_EPS:
                best, best_gap = sid, gap
        return best


PLACERS: dict[str, type[Placer]] = {p.name: p for p in (MBFD, OBFD, RBR, NUR, OMUR)}
ALGORITHMS = tuple(PLACERS)


def get_placer(name: str) -> Placer:
    try:
        return PLACERS[name.strip().lower()]()
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}") from None


def mbfd_place(dc, request, thresholds):
    return MBFD().place(dc, request, thresholds)


def obfd_place(dc, request, thresholds):
    return OBFD().place(dc, request, thresholds)


def rbr_place(dc, request, thresholds):
    return RBR().place(dc, request, thresholds)


def nur_place(dc, request, thresholds):
    return NUR().place(dc, request, thresholds)


def omur_place(dc, request, thresholds):
    return OMUR().place(dc, request, thresholds)
