"""Batch comparison runs and their on-disk artifacts.

Every file written here carries the schema string ``REPORT_SCHEMA``: JSON
files as a ``schema`` key, CSV files as a leading ``# schema=...`` line.
Savings are percentages relative to a baseline algorithm,
``100 * (baseline - value) / baseline``, so a positive number means the
algorithm did better (lower cost) and a negative one means it did worse.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .config import ScenarioConfig, dump_scenario
from .engine import SimulationReport, run_simulation
from .workload import EpochEvents, generate_benchmark, replay_from_file

log = logging.getLogger(__name__)

REPORT_SCHEMA = "vmconsol-report/1"

EPOCH_COLUMNS = (
    "epoch", "P_S", "P_NET", "P_C", "P_DC",
    "active_servers", "active_racks", "migrations", "sla_events",
)

# metric name -> how to read it off a report; all are costs (lower is better)
METRICS = {
    "servers": lambda r: r.avg_active_servers,
    "racks": lambda r: r.avg_active_racks,
    "energy_servers": lambda r: r.energy_joules["servers"],
    "energy_network": lambda r: r.energy_joules["network"],
    "energy_cooling": lambda r: r.energy_joules["cooling"],
    "energy_total": lambda r: r.energy_joules["total"],
    "migrations": lambda r: float(r.migration_count),
    "sla_violation_rate": lambda r: r.sla.violation_rate,
}

# plot series: file stem -> value extractor (energy in watt-hours)
PLOT_SERIES = {
    "active_servers": lambda r: r.avg_active_servers,
    "server_energy_wh": lambda r: r.energy_wh("servers"),
    "active_racks": lambda r: r.avg_active_racks,
    "network_energy_wh": lambda r: r.energy_wh("network"),
    "cooling_energy_wh": lambda r: r.energy_wh("cooling"),
    "total_energy_wh": lambda r: r.energy_wh("total"),
    "migrations": lambda r: r.migration_count,
    "sla_violation_percent": lambda r: 100.0 * r.sla.violation_rate,
}


def saving_percent(baseline: float, value: float) -> float | None:
    """Relative saving of ``value`` against ``baseline``; None when undefined."""
    if baseline == 0:
        return 0.0 if value == 0 else None
    return 100.0 * (baseline - value) / baseline


def _mean(values: Sequence[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


@dataclass
class ComparisonMatrix:
    baseline: str
    seeds: list[int]
    algorithms: list[str]
    # algorithm -> metric -> per-seed values, in ``seeds`` order
    values: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    savings: dict[str, dict[str, list[float | None]]] = field(default_factory=dict)

    @classmethod
    def from_reports(
        cls, reports: dict[tuple[str, int], SimulationReport], baseline: str, seeds: Sequence[int]
    ) -> ComparisonMatrix:
        algorithms = list(dict.fromkeys(a for a, _ in reports))
        m = cls(baseline, list(seeds), algorithms)
        for alg in algorithms:
            m.values[alg] = {name: [f(reports[alg, s]) for s in seeds] for name, f in METRICS.items()}
        base = m.values[baseline]
        for alg in algorithms:
            m.savings[alg] = {
                name: [saving_percent(b, v) for b, v in zip(base[name], m.values[alg][name])]
                for name in METRICS
            }
        return m

    def mean(self, algorithm: str, metric: str) -> float:
        vals = self.values[algorithm][metric]
        return sum(vals) / len(vals)

    def mean_saving(self, algorithm: str, metric: str) -> float | None:
        return _mean(self.savings[algorithm][metric])

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "baseline": self.baseline,
            "seeds": self.seeds,
            "algorithms": {
                alg: {
                    metric: {
                        "per_seed": self.values[alg][metric],
                        "mean": self.mean(alg, metric),
                        "saving_per_seed": self.savings[alg][metric],
                        "mean_saving": self.mean_saving(alg, metric),
                    }
                    for metric in METRICS
                }
                for alg in self.algorithms
            },
        }

    def table_csv(self) -> str:
        """Mean savings per algorithm, one row each, in the layout of a results table."""
        out = io.StringIO()
        out.write(f"# schema={REPORT_SCHEMA}\n")
        out.write(f"# baseline={self.baseline} seeds={' '.join(map(str, self.seeds))}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(
            [
                "algorithm",
                "servers_improvement",
                "racks_improvement",
                "servers_energy_saving",
                "network_energy_saving",
                "cooling_energy_saving",
                "total_energy_saving",
                "migrations_improvement",
                "sla_improvement",
            ]
        )
        for alg in self.algorithms:
            w.writerow(
                [alg]
                + [
                    _fmt(self.mean_saving(alg, m))
                    for m in (
                        "servers", "racks", "energy_servers", "energy_network",
                        "energy_cooling", "energy_total", "migrations", "sla_violation_rate",
                    )
                ]
            )
        return out.getvalue()


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(v)


def epoch_csv(report: SimulationReport) -> str:
    out = io.StringIO()
    out.write(f"# schema={REPORT_SCHEMA}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(EPOCH_COLUMNS)
    for r in report.rows:
        w.writerow(
            [
                r.epoch, repr(r.servers_watts), repr(r.network_watts), repr(r.cooling_watts),
                repr(r.total_watts), r.active_servers, r.active_racks, r.migrations, r.sla_events,
            ]
        )
    return out.getvalue()


def migration_log_csv(report: SimulationReport) -> str:
    out = io.StringIO()
    out.write(f"# schema={REPORT_SCHEMA}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("epoch", "vm_id", "from", "to", "reason", "modeled_seconds"))
    for m in report.migrations:
        w.writerow((m.epoch, m.vm_id, m.from_server, m.to_server, m.reason, repr(m.modeled_seconds)))
    return out.getvalue()


def report_json(report: SimulationReport) -> str:
    return json.dumps({"schema": REPORT_SCHEMA, **report.to_dict()}, indent=1, sort_keys=True) + "\n"


def write_run(report: SimulationReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.algorithm}_seed{report.seed}"
    files = {
        out / f"{stem}.json": report_json(report),
        out / f"{stem}_epochs.csv": epoch_csv(report),
        out / f"{stem}_migrations.csv": migration_log_csv(report),
    }
    for path, text in files.items():
        path.write_text(text)
    return list(files)


def emit_plot_series(reports: Iterable[SimulationReport], path: str | Path) -> list[Path]:
    """One CSV per metric with columns (seed, algorithm, value)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    written = []
    for stem, f in PLOT_SERIES.items():
        buf = io.StringIO()
        buf.write(f"# schema={REPORT_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("seed", "algorithm", "value"))
        for r in reports:
            w.writerow((r.seed, r.algorithm, repr(f(r))))
        target = out / f"{stem}.csv"
        target.write_text(buf.getvalue())
        written.append(target)
    return written


# -- running -----------------------------------------------------------------


def trace_for(config: ScenarioConfig, seed: int) -> list[EpochEvents]:
    if config.trace:
        return replay_from_file(config.trace)
    return generate_benchmark(config.build_workload(seed))


def run_one(config: ScenarioConfig, algorithm: str, seed: int) -> SimulationReport:
    return run_simulation(
        config.build_topology(),
        trace_for(config, seed),
        algorithm,
        thresholds=config.build_thresholds(),
        epoch_seconds=config.workload.epoch_seconds,
        evacuation=config.migration.evacuation,
        cost_model=config.build_cost_model(),
        debug=config.debug_invariants,
        seed=seed,
    )


def _run_job(args):
    config, algorithm, seed = args
    try:
        return algorithm, seed, run_one(config, algorithm, seed), None
    except Exception as err:  # reported per run, aborts the matrix
        return algorithm, seed, None, f"{type(err).__name__}: {err}"


class ComparisonFailed(RuntimeError):
    pass


def run_comparison(
    config: ScenarioConfig, out_dir: str | Path | None = None, jobs: int = 1
) -> tuple[ComparisonMatrix, dict[tuple[str, int], SimulationReport]]:
    """Run every (algorithm, seed) pair and write all artifacts under ``out_dir``.

    The baseline is run even if it is not among the configured algorithms.
    """
    out = Path(out_dir or config.output_dir)
    algorithms = list(config.algorithms)
    if config.baseline not in algorithms:
        algorithms.insert(0, config.baseline)
    work = [(config, a, s) for a in algorithms for s in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_job, work))
    else:
        results = [_run_job(w) for w in work]

    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(dump_scenario(config))
    reports, errors = {}, {}
    for alg, seed, report, err in results:
        if err is not None:
            errors[f"{alg}/seed{seed}"] = err
            continue
        reports[alg, seed] = report
        write_run(report, out / "runs")
    if errors:
        (out / "INCOMPLETE").write_text(
            json.dumps({"schema": REPORT_SCHEMA, "errors": errors}, indent=1, sort_keys=True) + "\n"
        )
        raise ComparisonFailed(f"{len(errors)} run(s) failed: " + "; ".join(f"{k}: {v}" for k, v in errors.items()))
    stale = out / "INCOMPLETE"
    if stale.exists():
        stale.unlink()

    matrix = ComparisonMatrix.from_reports(reports, config.baseline, config.seeds)
    (out / "matrix.json").write_text(json.dumps(matrix.to_dict(), indent=1, sort_keys=True) + "\n")
    (out / "matrix.csv").write_text(matrix.table_csv())
    emit_plot_series([reports[k] for k in sorted(reports)], out / "series")
    return matrix, reports
