"""Seeded synthetic workloads and the line-oriented trace format.

Each epoch carries four groups of VMs: departures, demand drops, demand rises
and arrivals. Epoch 0 holds only the initial population.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import VmSpec

TRACE_SCHEMA = "vmconsol-trace/1"
TRACE_COLUMNS = ("epoch", "kind", "vm_id", "capacity_mips", "requested_mips")
KINDS = ("arrive", "depart", "drop", "rise")


@dataclass(frozen=True)
class WorkloadConfig:
    epochs: int = 200
    initial_vm_count: int = 120
    vm_capacity_choices: tuple[int, ...] = (250, 500, 750, 1000)
    p_leave: float = 0.05
    # expected arrivals per epoch, as a fraction of the initial population
    p_arrive_rate: float = 0.05
    p_demand_change: float = 0.5
    epoch_seconds: float = 300.0
    rng_seed: int = 0
    vm_memory_mb: int = 128
    vm_storage_gb: int = 1
    # arrivals are refused once live VM capacity would exceed this
    max_total_capacity_mips: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "vm_capacity_choices", tuple(self.vm_capacity_choices))
        for name in ("p_leave", "p_arrive_rate", "p_demand_change"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.epochs < 0 or self.initial_vm_count < 0:
            raise ValueError("counts must be non-negative")
        if self.epoch_seconds <= 0:
            raise ValueError("epoch_seconds must be positive")
        if not self.vm_capacity_choices or min(self.vm_capacity_choices) <= 0:
            raise ValueError("vm_capacity_choices must be non-empty and positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must fit in 64 bits")


@dataclass
class EpochEvents:
    epoch: int
    departures: list[int] = field(default_factory=list)
    drops: dict[int, int] = field(default_factory=dict)
    rises: dict[int, int] = field(default_factory=dict)
    arrivals: list[tuple[VmSpec, int]] = field(default_factory=list)

    @property
    def demand_updates(self) -> dict[int, int]:
        return {**self.drops, **self.rises}

    def is_empty(self) -> bool:
        return not (self.departures or self.drops or self.rises or self.arrivals)


class TraceError(ValueError):
    pass


def generate_benchmark(config: WorkloadConfig) -> list[EpochEvents]:
    rng = np.random.default_rng(config.rng_seed)
    choices = np.asarray(config.vm_capacity_choices)
    live: dict[int, list[int]] = {}  # vm_id -> [capacity, demand]
    next_id = 0
    live_capacity = 0

    def arrive(n: int, ev: EpochEvents) -> None:
        nonlocal next_id, live_capacity
        caps = rng.choice(choices, size=n)
        uniforms = rng.random(n)
        for cap, u in zip(caps.tolist(), uniforms.tolist()):
            limit = config.max_total_capacity_mips
            if limit is not None and live_capacity + cap > limit:
                continue
            demand = _uniform_demand(u, cap)
            spec = VmSpec(next_id, cap, config.vm_memory_mb, config.vm_storage_gb)
            ev.arrivals.append((spec, demand))
            live[next_id] = [cap, demand]
            live_capacity += cap
            next_id += 1

    events: list[EpochEvents] = []
    for epoch in range(config.epochs):
        ev = EpochEvents(epoch)
        if epoch == 0:
            arrive(config.initial_vm_count, ev)
            events.append(ev)
            continue
        ids = sorted(live)
        leave = rng.random(len(ids)) < config.p_leave
        for vm, gone in zip(ids, leave.tolist()):
            if gone:
                ev.departures.append(vm)
                live_capacity -= live.pop(vm)[0]
        survivors = [vm for vm, gone in zip(ids, leave.tolist()) if not gone]
        change = rng.random(len(survivors)) < config.p_demand_change
        uniforms = rng.random(len(survivors))
        for vm, c, u in zip(survivors, change.tolist(), uniforms.tolist()):
            if not c:
                continue
            cap, old = live[vm]
            new = _uniform_demand(u, cap)
            if new < old:
                ev.drops[vm] = new
            elif new > old:
                ev.rises[vm] = new
            live[vm][1] = new
        arrive(int(rng.poisson(config.p_arrive_rate * config.initial_vm_count)), ev)
        events.append(ev)
    return events


def _uniform_demand(u: float, capacity: int) -> int:
    # integer MIPS uniform over 1..capacity
    return min(int(u * capacity) + 1, capacity)


# -- trace files --------------------------------------------------------------


def dump_trace(
    events: Sequence[EpochEvents], seed: int | None = None, memory_mb: int = 128, storage_gb: int = 1
) -> str:
    out = io.StringIO()
    out.write(f"# schema={TRACE_SCHEMA}\n")
    out.write(f"# seed={'' if seed is None else seed}\n")
    out.write(f"# epochs={len(events)}\n")
    out.write(f"# vm_memory_mb={memory_mb}\n")
    out.write(f"# vm_storage_gb={storage_gb}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    caps: dict[int, int] = {}
    for ev in events:
        for vm in sorted(ev.departures):
            writer.writerow((ev.epoch, "depart", vm, caps[vm], ""))
        for kind, group in (("drop", ev.drops), ("rise", ev.rises)):
            for vm in sorted(group):
                writer.writerow((ev.epoch, kind, vm, caps[vm], group[vm]))
        for spec, demand in ev.arrivals:
            caps[spec.id] = spec.capacity_mips
            writer.writerow((ev.epoch, "arrive", spec.id, spec.capacity_mips, demand))
    return out.getvalue()


def write_trace(events: Sequence[EpochEvents], path: str | Path, **header) -> None:
    Path(path).write_text(dump_trace(events, **header))


def parse_trace(lines: Iterable[str]) -> list[EpochEvents]:
    header: dict[str, str] = {}
    rows: list[tuple[int, list[str]]] = []
    saw_columns = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        fields = next(csv.reader([line]))
        if not saw_columns:
            if tuple(fields) != TRACE_COLUMNS:
                raise TraceError(f"line {lineno}: expected column header {','.join(TRACE_COLUMNS)}")
            saw_columns = True
            continue
        rows.append((lineno, fields))

    if header.get("schema", TRACE_SCHEMA) != TRACE_SCHEMA:
        raise TraceError(f"unsupported trace schema {header['schema']!r}")
    memory_mb = _header_int(header, "vm_memory_mb", 128)
    storage_gb = _header_int(header, "vm_storage_gb", 1)

    by_epoch: dict[int, EpochEvents] = {}
    caps: dict[int, int] = {}
    for lineno, fields in rows:
        if len(fields) != len(TRACE_COLUMNS):
            raise TraceError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(fields)}")
        epoch = _field_int(fields[0], lineno, "epoch")
        kind = fields[1]
        if kind not in KINDS:
            raise TraceError(f"line {lineno}: field 'kind': unknown event kind {kind!r}")
        vm = _field_int(fields[2], lineno, "vm_id")
        cap = _field_int(fields[3], lineno, "capacity_mips")
        ev = by_epoch.setdefault(epoch, EpochEvents(epoch))
        if kind == "depart":
            ev.departures.append(vm)
            continue
        demand = _field_int(fields[4], lineno, "requested_mips")
        if not 0 < demand <= cap:
            raise TraceError(
                f"line {lineno}: field 'requested_mips': {demand} outside (0, {cap}] for VM {vm}"
            )
        if kind == "arrive":
            caps[vm] = cap
            ev.arrivals.append((VmSpec(vm, cap, memory_mb, storage_gb), demand))
        else:
            if caps.get(vm, cap) != cap:
                raise TraceError(f"line {lineno}: field 'capacity_mips': VM {vm} changed capacity")
            (ev.drops if kind == "drop" else ev.rises)[vm] = demand

    n_epochs = _header_int(header, "epochs", max(by_epoch, default=-1) + 1)
    if by_epoch and max(by_epoch) >= n_epochs:
        raise TraceError(f"event at epoch {max(by_epoch)} beyond declared epochs={n_epochs}")
    return [by_epoch.get(e, EpochEvents(e)) for e in range(n_epochs)]


def replay_from_file(path: str | Path) -> list[EpochEvents]:
    with open(path, newline="") as fh:
        return parse_trace(fh)


def _field_int(text: str, lineno: int, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise TraceError(f"line {lineno}: field {name!r}: not an integer: {text!r}") from None


def _header_int(header: dict[str, str], key: str, default: int) -> int:
    if not header.get(key):
        return default
    try:
        return int(header[key])
    except ValueError:
        raise TraceError(f"header {key!r}: not an integer: {header[key]!r}") from None
