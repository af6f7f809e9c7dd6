"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or as a script).
Criteria 5-7 share one comparison run over the bundled default scenario.
"""

import json
import random
from pathlib import Path

import pytest

from oracle import brute_force, current_power, random_micro_instance
from vmconsol.config import load_scenario, parse_scenario
from vmconsol.model import Datacenter, PowerState, Server, Thresholds, VmSpec, build_topology
from vmconsol.placement import ALGORITHMS, get_placer, request_for
from vmconsol.migration import select_overload_evictions
from vmconsol.power import datacenter_power, server_power
from vmconsol.report import report_json, run_comparison, run_one, write_run

from conftest import small_topology

TOL = 1e-9


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" -- {detail}" if detail else ""))
        assert ok, detail

    return emit


def test_criterion_1_server_power_endpoints(verdict):
    s = Server(id=0, rack_id=0, p_max_watts=250.0, k_idle_fraction=0.7, state=PowerState.ON)
    idle, full = server_power(s, 0.0), server_power(s, 1.0)
    ok = abs(idle - 175.0) <= TOL and abs(full - 250.0) <= TOL
    verdict(1, "idle 175 W and full-load 250 W", ok, f"idle={idle!r} full={full!r}")


def test_criterion_2_full_topology_network_power(verdict):
    dc = Datacenter(build_topology())
    for r in dc.topology.racks:
        dc.wake(r.server_ids[0])
    b = datacenter_power(dc)
    ok = (
        b.network_watts == 7238.0
        and b.network_watts == b.tor_watts + b.aggregate_watts + b.core_watts
        and b.total_watts == b.servers_watts + b.cooling_watts + b.network_watts
    )
    verdict(2, "8 active racks draw 7238 W of network power, identities exact", ok, f"network={b.network_watts!r}")


def test_criterion_3_oracle_equivalence(verdict):
    failures = []
    feasible = 0
    for seed in range(200):
        inst = random_micro_instance(random.Random(seed))
        best = brute_force(inst)
        feasible += best is not None
        request = [spec.id for spec, _ in inst.request]
        for alg in ALGORITHMS:
            dc = inst.build()
            placer = get_placer(alg)
            if alg == "obfd":
                tier_ok = _obfd_tier_replay(dc.copy(), placer, request, inst.thresholds)
                if not tier_ok:
                    failures.append(f"seed {seed} obfd tier discipline")
            out = placer.place(dc, request_for(dc, request), inst.thresholds)
            try:
                dc.check_invariants()
            except AssertionError as err:
                failures.append(f"seed {seed} {alg} infeasible: {err}")
                continue
            for sid in set(out.placed.values()):
                if dc.utilization(sid) > inst.thresholds.upper_utilization + TOL:
                    failures.append(f"seed {seed} {alg} target over upper threshold")
            if best is None:
                continue
            if out.unplaced:
                failures.append(f"seed {seed} {alg} left {out.unplaced} unplaced; oracle packs all")
                continue
            p = current_power(dc)
            if not best[0] - TOL <= p <= best[0] + 175.0 + TOL:
                failures.append(f"seed {seed} {alg} power {p:.2f} vs optimum {best[0]:.2f}")
    verdict(
        3,
        "200 micro-instances within 175 W of brute-force optimum, OBFD tiers respected",
        not failures,
        f"{feasible} feasible instances; " + ("; ".join(failures[:5]) if failures else "no violations"),
    )


def _obfd_tier_replay(dc, placer, request, thr):
    for item in placer.order(request_for(dc, request)):
        target = placer.find_server(dc, item.vm_id, thr)
        if target is not None and not dc.hosted[target]:
            loaded = [s for s in range(dc.topology.n_servers) if dc.hosted[s]]
            if any(dc.fits(s, item.vm_id, thr) for s in loaded):
                return False
        if target is not None:
            dc.place(item.vm_id, target)
    return True


def test_criterion_4_minimum_migrations(verdict):
    rng = random.Random(4)
    thr = Thresholds()
    checked, failures = 0, []
    while checked < 1000:
        demands = [rng.randint(1, 1000) for _ in range(rng.randint(1, 8))]
        cap = 2000
        load = sum(demands)
        if load / cap <= thr.upper_utilization:
            continue
        gaps = [
            (thr.upper_utilization - (load - d) / cap, i)
            for i, d in enumerate(demands)
            if (load - d) / cap <= thr.upper_utilization
        ]
        if not gaps:
            continue
        expected = demands[min(gaps)[1]]
        dc = Datacenter(small_topology([1]))
        for i, d in enumerate(demands):
            dc.add_vm(VmSpec(i, 1000), d)
            dc.place(i, 0)
        chosen = select_overload_evictions(dc, 0, thr)
        if len(chosen) != 1 or dc.demands[chosen[0]] != expected:
            failures.append(f"{demands} -> {[dc.demands[v] for v in chosen]}, expected [{expected}]")
        checked += 1
    verdict(4, "1000 overloaded servers evict exactly the min-gap VM", not failures, "; ".join(failures[:3]))


@pytest.fixture(scope="module")
def comparison(tmp_path_factory):
    cfg = load_scenario("paper_default")
    assert len(cfg.seeds) >= 8 and cfg.workload.epochs >= 200
    matrix, reports = run_comparison(cfg, tmp_path_factory.mktemp("paper_default"))
    with_header = ["algorithm   total%   servers%  racks%   E_srv%   migr%"]
    for alg in matrix.algorithms:
        with_header.append(
            f"{alg:10s} {matrix.mean_saving(alg, 'energy_total'):7.2f} {matrix.mean_saving(alg, 'servers'):8.2f}"
            f" {matrix.mean_saving(alg, 'racks'):7.2f} {matrix.mean_saving(alg, 'energy_servers'):8.2f}"
            f" {matrix.mean_saving(alg, 'migrations'):7.2f}"
        )
    return cfg, matrix, reports, "\n".join(with_header)


BANDS = {"omur": (7.0, 22.0), "rbr": (5.0, 20.0), "nur": (4.0, 18.0), "obfd": (-2.0, 8.0)}


def test_criterion_5_energy_bands(verdict, comparison, capsys):
    cfg, matrix, _, table = comparison
    with capsys.disabled():
        print(f"\nmean savings vs {matrix.baseline} over seeds {list(cfg.seeds)}, {cfg.workload.epochs} epochs:\n{table}")
    parts, ok = [], True
    for alg, (lo, hi) in BANDS.items():
        s = matrix.mean_saving(alg, "energy_total")
        ok &= lo <= s <= hi
        parts.append(f"{alg} {s:.2f}% in [{lo}, {hi}]")
    racks = matrix.mean_saving("omur", "racks")
    ok &= 18.0 <= racks <= 38.0
    parts.append(f"omur racks {racks:.2f}% in [18, 38]")
    verdict(5, "total-energy saving bands and OMUR rack reduction", ok, "; ".join(parts))


def test_criterion_6_ordering(verdict, comparison):
    _, matrix, _, _ = comparison
    total = {a: matrix.mean_saving(a, "energy_total") for a in ("omur", "rbr", "nur")}
    srv = {a: matrix.mean_saving(a, "energy_servers") for a in ("obfd", "rbr", "nur")}
    ok = total["omur"] >= total["rbr"] and total["omur"] >= total["nur"]
    ok &= srv["obfd"] >= srv["rbr"] and srv["obfd"] >= srv["nur"]
    detail = (
        f"total omur {total['omur']:.2f} rbr {total['rbr']:.2f} nur {total['nur']:.2f}; "
        f"server energy obfd {srv['obfd']:.2f} rbr {srv['rbr']:.2f} nur {srv['nur']:.2f}"
    )
    verdict(6, "OMUR >= RBR, NUR on total; OBFD >= RBR, NUR on server energy", ok, detail)


def test_criterion_7_sla_band(verdict, comparison):
    cfg, _, reports, _ = comparison
    worst = max(
        100 * (reports[a, s].sla.violation_rate - reports["mbfd", s].sla.violation_rate)
        for a in ALGORITHMS
        for s in cfg.seeds
    )
    rates = {a: max(reports[a, s].sla.violation_rate for s in cfg.seeds) for a in ALGORITHMS}
    detail = f"worst excess over mbfd {worst:.3f} pp; max rates " + ", ".join(f"{a} {100 * r:.3f}%" for a, r in rates.items())
    verdict(7, "SLA violation rate within +2.5 pp of MBFD on every seed", worst <= 2.5, detail)


def test_criterion_8_determinism(verdict, tmp_path):
    cfg = load_scenario("paper_default")
    seed = cfg.seeds[0]
    mismatched = []
    for alg in ALGORITHMS:
        first = write_run(run_one(cfg, alg, seed), tmp_path / "a")
        second = write_run(run_one(cfg, alg, seed), tmp_path / "b")
        for p, q in zip(first, second):
            if p.read_bytes() != q.read_bytes():
                mismatched.append(p.name)
    verdict(8, "repeated runs write byte-identical report files", not mismatched, ", ".join(mismatched))


def test_criterion_9_invariant_sweep(verdict):
    base = load_scenario("paper_default").model_dump(mode="json")
    base["workload"].update(epochs=500, p_leave=0.1, p_arrive_rate=0.1, p_demand_change=0.8)
    base["debug_invariants"] = True
    cfg = parse_scenario(base)
    failures, epochs = [], {}
    for i, alg in enumerate(ALGORITHMS):
        try:
            report = run_one(cfg, alg, 900 + i)
            epochs[alg] = report.epochs
        except AssertionError as err:
            failures.append(f"{alg}: {err}")
    ok = not failures and all(n == 500 for n in epochs.values())
    verdict(9, "500-epoch debug run per algorithm, zero invariant failures", ok, "; ".join(failures) or f"epochs {epochs}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
