"""Command line: ``vmconsol {simulate,compare,gen-trace,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ScenarioConfig, ScenarioError, dump_scenario, load_scenario, parse_scenario
from .report import ComparisonFailed, run_comparison, run_one, write_run
from .workload import TraceError, generate_benchmark, write_trace

log = logging.getLogger("vmconsol")


def _csv_list(text: str) -> list[str]:
    return [t for t in (p.strip() for p in text.split(",")) if t]


def _seed_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers: {text!r}") from None


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    data = config.model_dump(mode="json")
    if getattr(args, "algorithms", None):
        data["algorithms"] = args.algorithms
    if getattr(args, "seeds", None):
        data["seeds"] = args.seeds
    if getattr(args, "baseline", None):
        data["baseline"] = args.baseline
    if getattr(args, "trace", None):
        data["trace"] = args.trace
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    if getattr(args, "debug_invariants", False):
        data["debug_invariants"] = True
    return parse_scenario(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmconsol", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=True):
        p.add_argument("--scenario", default="paper_default", help="scenario file or bundled name")
        if runs:
            p.add_argument("--algorithms", type=_csv_list, help="comma-separated algorithm names")
            p.add_argument("--seeds", type=_seed_list, help="comma-separated seeds")
            p.add_argument("--trace", help="replay this trace instead of generating workloads")
            p.add_argument("--debug-invariants", action="store_true")
        p.add_argument("--out", help="output directory (file for gen-trace)")

    p = sub.add_parser("simulate", help="run one algorithm on one seed")
    common(p)
    p = sub.add_parser("compare", help="run every algorithm x seed and build the matrix")
    common(p)
    p.add_argument("--baseline", help="algorithm savings are measured against")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p = sub.add_parser("gen-trace", help="export the generated workload for one seed")
    common(p, runs=False)
    p.add_argument("--seeds", type=_seed_list, help="exactly one seed")
    p = sub.add_parser("validate", help="check a scenario and print it fully resolved")
    common(p, runs=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        config = _apply_overrides(load_scenario(args.scenario), args)
        return COMMANDS[args.command](config, args)
    except (ScenarioError, TraceError, ComparisonFailed, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def cmd_validate(config: ScenarioConfig, args) -> int:
    sys.stdout.write(dump_scenario(config))
    return 0


def cmd_simulate(config: ScenarioConfig, args) -> int:
    if len(config.algorithms) != 1 or len(config.seeds) != 1:
        raise ValueError("simulate takes exactly one algorithm and one seed")
    report = run_one(config, config.algorithms[0], config.seeds[0])
    paths = write_run(report, Path(config.output_dir))
    s = report.summary()
    print(
        f"{report.algorithm} seed {report.seed}: total {report.energy_wh() / 1000:.3f} kWh, "
        f"{s['avg_active_servers']:.2f} servers, {s['avg_active_racks']:.2f} racks, "
        f"{s['migrations']} migrations, SLA {100 * s['sla_violation_rate']:.3f}%"
    )
    for p in paths:
        log.info("wrote %s", p)
    return 0


def cmd_compare(config: ScenarioConfig, args) -> int:
    matrix, _ = run_comparison(config, config.output_dir, jobs=args.jobs)
    print(f"savings vs {matrix.baseline} (mean over seeds {list(matrix.seeds)}):")
    print(f"{'algorithm':10s} {'servers':>8s} {'racks':>8s} {'E_srv':>8s} {'E_net':>8s} {'E_cool':>8s} {'E_tot':>8s} {'migr':>8s} {'sla':>8s}")
    for alg in matrix.algorithms:
        cells = []
        for m in ("servers", "racks", "energy_servers", "energy_network", "energy_cooling",
                  "energy_total", "migrations", "sla_violation_rate"):
            v = matrix.mean_saving(alg, m)
            cells.append("     n/a" if v is None else f"{v:8.2f}")
        print(f"{alg:10s} " + " ".join(cells))
    log.info("artifacts in %s", config.output_dir)
    return 0


def cmd_gen_trace(config: ScenarioConfig, args) -> int:
    seeds = args.seeds or [config.seeds[0]]
    if len(seeds) != 1:
        raise ValueError("gen-trace takes exactly one seed")
    if not args.out:
        raise ValueError("gen-trace needs --out <file>")
    wl = config.build_workload(seeds[0])
    write_trace(
        generate_benchmark(wl), args.out, seed=seeds[0], memory_mb=wl.vm_memory_mb, storage_gb=wl.vm_storage_gb
    )
    log.info("wrote %s", args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "gen-trace": cmd_gen_trace,
    "validate": cmd_validate,
}


if __name__ == "__main__":
    sys.exit(main())
