from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vmconsol.workload import (
    TraceError,
    WorkloadConfig,
    dump_trace,
    generate_benchmark,
    parse_trace,
    replay_from_file,
    write_trace,
)


def test_frozen_workload_has_no_events_after_epoch_zero():
    events = generate_benchmark(
        WorkloadConfig(epochs=20, initial_vm_count=30, p_leave=0, p_arrive_rate=0, p_demand_change=0)
    )
    assert len(events[0].arrivals) == 30
    assert all(ev.is_empty() for ev in events[1:])


def test_epoch_zero_holds_only_arrivals():
    ev = generate_benchmark(WorkloadConfig(epochs=1, initial_vm_count=50))[0]
    assert not (ev.departures or ev.drops or ev.rises)
    assert [spec.id for spec, _ in ev.arrivals] == list(range(50))


def test_same_seed_same_bytes():
    cfg = WorkloadConfig(epochs=50, rng_seed=7)
    assert dump_trace(generate_benchmark(cfg)) == dump_trace(generate_benchmark(cfg))
    other = WorkloadConfig(epochs=50, rng_seed=8)
    assert dump_trace(generate_benchmark(cfg)) != dump_trace(generate_benchmark(other))


def test_resampled_demand_mean_is_half_capacity():
    events = generate_benchmark(
        WorkloadConfig(epochs=2, initial_vm_count=1000, p_leave=0, p_arrive_rate=0, p_demand_change=1, rng_seed=11)
    )
    caps = {spec.id: spec.capacity_mips for spec, _ in events[0].arrivals}
    demands = {spec.id: d for spec, d in events[0].arrivals}
    demands.update(events[1].demand_updates)
    ratios = [demands[vm] / caps[vm] for vm in caps]
    mean = sum(ratios) / len(ratios)
    # integer demands uniform on 1..c have mean (c + 1) / 2, i.e. ratio 0.5 + 1/(2c)
    assert abs(mean - 0.5) <= 0.03


def test_capacity_histogram_is_uniform():
    events = generate_benchmark(WorkloadConfig(epochs=1, initial_vm_count=12_000, rng_seed=3))
    counts = Counter(spec.capacity_mips for spec, _ in events[0].arrivals)
    assert set(counts) == {250, 500, 750, 1000}
    for c in counts.values():
        assert abs(c / 12_000 - 0.25) <= 0.02


@given(st.integers(0, 2**32), st.floats(0.0, 0.3), st.floats(0.0, 0.3), st.floats(0.0, 1.0))
def test_generated_events_respect_bounds_and_partition(seed, leave, arrive, change):
    cfg = WorkloadConfig(
        epochs=15, initial_vm_count=40, p_leave=leave, p_arrive_rate=arrive, p_demand_change=change, rng_seed=seed
    )
    caps = {}
    live = set()
    for ev in generate_benchmark(cfg):
        departures = set(ev.departures)
        updates = set(ev.demand_updates)
        arrivals = {spec.id for spec, _ in ev.arrivals}
        assert not (departures & updates) and not (departures & arrivals) and not (updates & arrivals)
        assert departures <= live and updates <= live - departures
        assert not set(ev.drops) & set(ev.rises)
        for vm, d in ev.demand_updates.items():
            assert 0 < d <= caps[vm]
        for spec, d in ev.arrivals:
            assert spec.id not in caps, "VM id reused"
            assert 0 < d <= spec.capacity_mips
            caps[spec.id] = spec.capacity_mips
        live = (live - departures) | arrivals


def test_capacity_cap_limits_population():
    cfg = WorkloadConfig(epochs=30, initial_vm_count=400, p_arrive_rate=0.5, max_total_capacity_mips=100_000)
    live = {}
    for ev in generate_benchmark(cfg):
        for vm in ev.departures:
            live.pop(vm)
        for spec, _ in ev.arrivals:
            live[spec.id] = spec.capacity_mips
        assert sum(live.values()) <= 100_000


def test_trace_round_trip(tmp_path):
    events = generate_benchmark(WorkloadConfig(epochs=40, rng_seed=5))
    path = tmp_path / "trace.csv"
    write_trace(events, path, seed=5)
    assert replay_from_file(path) == events
    assert dump_trace(replay_from_file(path), seed=5) == path.read_text()


def test_empty_file_is_zero_epochs(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert replay_from_file(path) == []


HEADER = "# schema=vmconsol-trace/1\nepoch,kind,vm_id,capacity_mips,requested_mips\n"


def test_demand_above_capacity_is_rejected():
    with pytest.raises(TraceError, match="line 3.*requested_mips"):
        parse_trace((HEADER + "0,arrive,0,1000,1200\n").splitlines(True))


@pytest.mark.parametrize(
    "row,needle",
    [
        ("0,arrive,x,1000,10", "vm_id"),
        ("0,teleport,0,1000,10", "kind"),
        ("0,arrive,0,1000", "fields"),
        ("zero,arrive,0,1000,10", "epoch"),
    ],
)
def test_malformed_rows_name_the_field(row, needle):
    with pytest.raises(TraceError, match=needle):
        parse_trace((HEADER + row + "\n").splitlines(True))


def test_wrong_schema_rejected():
    with pytest.raises(TraceError, match="schema"):
        parse_trace(["# schema=other/9\n", "epoch,kind,vm_id,capacity_mips,requested_mips\n"])


@pytest.mark.parametrize(
    "kw",
    [{"p_leave": 1.5}, {"epochs": -1}, {"epoch_seconds": 0}, {"vm_capacity_choices": ()}, {"rng_seed": -1}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        WorkloadConfig(**kw)
