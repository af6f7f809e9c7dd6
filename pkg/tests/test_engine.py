import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import populate, small_topology
from vmconsol.engine import Simulation, SlaAccounting, record_sla, run_simulation
from vmconsol.migration import MigrationPlan, evacuate_underutilized_racks
from vmconsol.model import Datacenter, Thresholds, VmSpec, build_topology
from vmconsol.placement import ALGORITHMS, get_placer
from vmconsol.workload import EpochEvents, WorkloadConfig, generate_benchmark

THR = Thresholds(0.4, 0.8)


def seeded(sim, loads):
    """Put VMs straight into a simulation's datacenter, bypassing placement."""
    nxt = populate(sim.dc, loads, capacity=2000)
    sim.seen_ids.update(range(nxt))
    return nxt


def test_zero_event_epoch_is_a_fixed_point():
    trace = generate_benchmark(WorkloadConfig(epochs=3, initial_vm_count=40, rng_seed=2))
    sim = Simulation(build_topology(), "omur")
    for ev in trace:
        sim.run_epoch(ev)
    before = sim.dc.fingerprint()
    samples = len(sim.ledger.samples)
    row = sim.run_epoch(EpochEvents(3))
    assert sim.dc.fingerprint() == before
    assert len(sim.ledger.samples) == samples + 1
    assert row.migrations == 0


def test_demand_rise_triggers_exactly_one_eviction():
    sim = Simulation(small_topology([2]), "obfd")
    seeded(sim, {0: [700, 500], 1: [900]})
    row = sim.run_epoch(EpochEvents(0, rises={1: 1000}))
    assert row.migrations == 1
    assert [(m.vm_id, m.from_server, m.to_server, m.reason) for m in sim.migration_log] == [(0, 0, 1, "overload")]
    assert row.residual_overloads == 0
    assert all(sim.dc.utilization(s) <= 0.8 for s in sim.dc.on_servers())


def test_draining_a_rack_switches_off_its_cooling_and_tor():
    sim = Simulation(small_topology([2, 1, 1], fan_in=2), "omur")
    seeded(sim, {0: [1200], 1: [1200], 2: [1600]})
    steady = sim.run_epoch(EpochEvents(0))
    assert steady.active_racks == 2
    drained = sim.run_epoch(EpochEvents(1, drops={2: 400}))
    assert drained.active_racks == 1
    assert steady.cooling_watts - drained.cooling_watts == 950.0
    assert steady.tor_watts - drained.tor_watts == 366.0
    # rack 0 shares the aggregate switch, so it stays on
    assert drained.aggregate_watts == steady.aggregate_watts == 405.0


def test_sla_counts_every_vm_on_an_overcommitted_server():
    dc = Datacenter(small_topology([2]))
    populate(dc, {0: [1500, 800], 1: [100]}, capacity=2000)
    assert record_sla(dc) == SlaAccounting(2, 3)


def test_sla_counts_queued_vms():
    dc = Datacenter(small_topology([1]))
    populate(dc, {0: [1600]})
    dc.add_vm(VmSpec(9, 1000), 500)
    assert record_sla(dc) == SlaAccounting(1, 2)


def test_sla_rate_guards_zero_frames():
    assert SlaAccounting().violation_rate == 0.0


def test_unplaceable_arrivals_queue_and_retry():
    sim = Simulation(small_topology([1]), "obfd", debug=True)
    sim.run_epoch(EpochEvents(0, arrivals=[(VmSpec(0, 1000), 1000), (VmSpec(1, 1000), 900)]))
    assert sim.queue == [1]
    row = sim.run_epoch(EpochEvents(1, drops={0: 200}))
    assert sim.queue == [] and row.unplaced_vms == 0
    assert sim.dc.host_of(1) == 0


def test_arrival_lands_in_a_rack_that_would_otherwise_be_evacuated():
    def state():
        sim = Simulation(small_topology([2, 2]), "rbr", debug=True)
        seeded(sim, {0: [600], 2: [1000], 3: [1000]})
        return sim

    # evacuating first would have emptied rack 0
    probe = state()
    assert evacuate_underutilized_racks(probe.dc, THR, probe.placer, MigrationPlan()) == [0]

    sim = state()
    row = sim.run_epoch(EpochEvents(0, arrivals=[(VmSpec(10, 1000), 1000)]))
    assert sim.dc.host_of(10) == 0 and sim.dc.host_of(0) == 0
    assert sim.dc.rack_active(0) and row.migrations == 0


def test_empty_single_epoch_is_all_zero():
    report = run_simulation(build_topology(), [EpochEvents(0)], "mbfd")
    assert all(v == 0.0 for v in report.energy_joules.values())
    assert report.sla.vm_epoch_frames == 0 and report.migration_count == 0


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        run_simulation(build_topology(), [], "mbfd")


def test_oversized_vm_rejected_before_epoch_zero():
    trace = [EpochEvents(0, arrivals=[(VmSpec(0, 5000), 10)])]
    with pytest.raises(ValueError, match="exceeds"):
        run_simulation(build_topology(), trace, "omur")


def test_events_must_be_in_epoch_order():
    sim = Simulation(build_topology(), "obfd")
    with pytest.raises(ValueError):
        sim.run_epoch(EpochEvents(1))


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_run_is_deterministic(alg):
    trace = generate_benchmark(WorkloadConfig(epochs=30, initial_vm_count=150, rng_seed=9))
    a = run_simulation(build_topology(), trace, alg, seed=9)
    b = run_simulation(build_topology(), trace, alg, seed=9)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_report_totals_equal_sum_of_rows(alg):
    trace = generate_benchmark(WorkloadConfig(epochs=25, initial_vm_count=200, rng_seed=4))
    report = run_simulation(build_topology(), trace, alg)
    total = servers = 0.0
    for r in report.rows:
        total += r.total_watts * report.epoch_seconds
        servers += r.servers_watts * report.epoch_seconds
    assert report.energy_joules["total"] == total
    assert report.energy_joules["servers"] == servers
    assert report.sla.vm_epoch_frames == sum(r.vm_frames for r in report.rows)
    assert report.migration_count == sum(r.migrations for r in report.rows)


@pytest.mark.parametrize("alg", ALGORITHMS)
@settings(max_examples=25)
@given(seed=st.integers(0, 2**32), leave=st.floats(0, 0.3), arrive=st.floats(0, 0.3))
def test_debug_invariants_hold_under_random_workloads(alg, seed, leave, arrive):
    trace = generate_benchmark(
        WorkloadConfig(epochs=12, initial_vm_count=120, p_leave=leave, p_arrive_rate=arrive, rng_seed=seed)
    )
    report = run_simulation(build_topology(), trace, alg, debug=True)
    live = 0
    for ev, row in zip(trace, report.rows):
        live += len(ev.arrivals) - len(ev.departures)
        assert row.live_vms == live


def test_evacuation_mode_override():
    trace = generate_benchmark(WorkloadConfig(epochs=20, initial_vm_count=150, rng_seed=1))
    none = run_simulation(build_topology(), trace, "omur", evacuation="none")
    assert all(m.reason == "overload" for m in none.migrations)
    with pytest.raises(ValueError):
        run_simulation(build_topology(), trace, "omur", evacuation="sometimes")
