import pytest
from hypothesis import HealthCheck, settings

from vmconsol.model import (
    AggregateSwitch,
    Datacenter,
    Rack,
    Server,
    Thresholds,
    Topology,
    VmSpec,
    build_topology,
)

settings.register_profile(
    "default", deadline=None, max_examples=150, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def small_topology(layout, capacity=2000, memory=10_000, fan_in=4):
    """Topology from a list of servers-per-rack counts, e.g. ``[3, 2]``."""
    servers, racks = [], []
    for r, n in enumerate(layout):
        ids = []
        for _ in range(n):
            servers.append(Server(id=len(servers), rack_id=r, capacity_mips=capacity, memory_mb=memory))
            ids.append(servers[-1].id)
        racks.append(Rack(r, tuple(ids)))
    aggs = [
        AggregateSwitch(frozenset(range(lo, min(lo + fan_in, len(layout)))))
        for lo in range(0, len(layout), fan_in)
    ]
    return Topology(servers, racks, aggs)


def populate(dc: Datacenter, loads, start_id=0, capacity=1000):
    """Place VMs given as ``{server_id: [demand, ...]}``; returns the next free VM id."""
    vm = start_id
    for sid, demands in loads.items():
        for d in demands:
            dc.add_vm(VmSpec(vm, max(capacity, d)), d)
            dc.place(vm, sid)
            vm += 1
    return vm


@pytest.fixture
def thresholds():
    return Thresholds(0.4, 0.8)


@pytest.fixture
def default_dc():
    return Datacenter(build_topology())
