"""``hlfspn`` command-line front end.

    hlfspn metrics  [CONFIG] [--set hlf.block_size=20] [-o DIR]
    hlfspn sweep    [CONFIG] --factor "Block Size" [--metric mrt] [--points 8]
    hlfspn rank     [CONFIG] [--metric mrt]
    hlfspn validate [CONFIG] [--csv FILE] [--declared-rate 20]
    hlfspn describe [CONFIG]
    hlfspn run      CONFIG            # runs the experiment the config selects

Without CONFIG the baseline parameters and default engine settings are used.
Exit status is 0 on success, 1 for configuration or input errors and 2 when
the solver or simulator fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .hlf import BASELINE, FACTORS, build
from .metrics import CSV_COLUMNS, evaluate
from .reachability import SolverError, StateSpaceError, VanishingLoopError
from .sensitivity import DEFAULT_POINTS, SweepError, index, ranked, report_key, sweep
from .simulation import SimulationError
from .validation import MeasurementError, ingest_csv, validate

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND = 0, 1, 2
BACKEND_ERRORS = (StateSpaceError, SolverError, VanishingLoopError, SimulationError, SweepError)
PACKAGED_MEASUREMENTS = Path(__file__).parent / "data" / "validation_rt.csv"


def baseline_dict() -> dict:
    return {"hlf": {attr: getattr(BASELINE, attr) for attr in FACTORS.values()}}


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


class Run:
    """Collects emitted files so the manifest can list them."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.files: dict[str, str] = {}

    def emit(self, name: str, text: str) -> Path:
        path = self.config.outputs / name
        write_atomic(path, text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def finish(self, command: str) -> None:
        cfg = self.config
        manifest = {
            "tool": "hlfspn",
            "version": __version__,
            "command": command,
            "config_sha256": cfg.digest(),
            "backend": cfg.backend,
            "seed": cfg.engine["base_seed"],
            "hlf": asdict(cfg.hlf),
            "files": dict(sorted(self.files.items())),
        }
        write_atomic(cfg.outputs / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _evaluator(cfg: ExperimentConfig):
    def run(params):
        return evaluate(params, cfg.backend, effective=bool(cfg.engine["effective_rate"]),
                        solver=cfg.solver, sim=cfg.sim, workers=cfg.engine["workers"])
    return run


def _slug(factor: str) -> str:
    return FACTORS[factor]


def cmd_metrics(cfg: ExperimentConfig, run: Run) -> None:
    report = _evaluator(cfg)(cfg.hlf)
    row = report.row()
    factor_cols = list(FACTORS.values())
    header = factor_cols + list(CSV_COLUMNS) + ["backend", "mrt_rate"]
    values = [getattr(cfg.hlf, a) for a in factor_cols] + [row[c] for c in CSV_COLUMNS]
    values += [report.backend, report.mrt_rate]
    if report.half_widths:
        header += [f"{c}_hw" for c in CSV_COLUMNS]
        values += [report.half_widths[c] for c in CSV_COLUMNS]
    run.emit("metrics.csv", csv_text(header, [values]))
    for c in CSV_COLUMNS:
        print(f"{c:<13} {row[c]:.6g}")


def _sweep_csv(factor: str, metric: str, points) -> str:
    return csv_text([_slug(factor), report_key(metric), "half_width"],
                    [[p.value, p.metric, p.half_width] for p in points])


def cmd_sweep(cfg: ExperimentConfig, run: Run) -> None:
    opts = cfg.options
    factor, metric = opts["factor"], opts.get("metric", "mrt")
    points = sweep(factor, opts.get("range"), int(opts.get("points", DEFAULT_POINTS)), metric,
                   cfg.backend, cfg.hlf, _evaluator(cfg))
    run.emit(f"sweep_{_slug(factor)}_{metric}.csv", _sweep_csv(factor, metric, points))
    s = index(points, factor, metric)
    print(f"{factor}: {metric} from {s.min:.6g} to {s.max:.6g}, index {s.index:.4f}")


def cmd_rank(cfg: ExperimentConfig, run: Run) -> None:
    metric = cfg.options.get("metric", "mrt")
    n = int(cfg.options.get("points", DEFAULT_POINTS))
    evaluator = _evaluator(cfg)
    indices = []
    for factor in FACTORS:
        pts = sweep(factor, None, n, metric, cfg.backend, cfg.hlf, evaluator)
        run.emit(f"sweep_{_slug(factor)}_{metric}.csv", _sweep_csv(factor, metric, pts))
        indices.append(index(pts, factor, metric))
    rows = [[i + 1, s.factor, s.index, s.min, s.max, s.argmin, s.argmax]
            for i, s in enumerate(ranked(indices))]
    run.emit(f"sensitivity_{metric}.csv",
             csv_text(["rank", "factor", "index", "min", "max", "argmin", "argmax"], rows))
    for r in rows:
        print(f"{r[0]}. {r[1]:<22} {r[2]:.4f}")


def cmd_validate(cfg: ExperimentConfig, run: Run) -> None:
    opts = cfg.options
    path = opts.get("csv") or PACKAGED_MEASUREMENTS
    measured = ingest_csv(path)
    if opts.get("declared_rate") is not None:
        measured.arrival_rate = float(opts["declared_rate"])
    report = validate(measured, cfg.hlf, cfg.sim, opts.get("samples", "transactions"),
                      float(opts.get("alpha", 0.05)), cfg.engine["workers"])
    row = report.row()
    run.emit("validation.csv", csv_text(list(row), [list(row.values())]))
    run.emit("validation.txt", report.text())
    print(report.text(), end="")


COMMANDS = {"metrics": cmd_metrics, "sweep": cmd_sweep, "rank": cmd_rank, "validate": cmd_validate}


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hlfspn", description="Hyperledger Fabric SPN performance model")
    ap.add_argument("--version", action="version", version=f"hlfspn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        if config_required:
            p.add_argument("config", help="YAML experiment config")
        else:
            p.add_argument("config", nargs="?", help="YAML experiment config (default: baseline)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. hlf.block_size=20 or engine.backend=simulation")
        p.add_argument("-o", "--outputs", help="output directory")
        p.add_argument("--backend", choices=("solver", "simulation"))
        p.add_argument("--workers", type=int, help="parallel replications")

    common(sub.add_parser("run", help="run the experiment selected in the config"), True)
    common(sub.add_parser("metrics", help="the five metrics for one parameter set"))
    p = sub.add_parser("sweep", help="one metric over one factor's range")
    common(p)
    p.add_argument("--factor", choices=list(FACTORS))
    p.add_argument("--metric")
    p.add_argument("--points", type=int)
    p.add_argument("--range", nargs=2, type=float, metavar=("MIN", "MAX"))
    p = sub.add_parser("rank", help="sensitivity ranking of all factors")
    common(p)
    p.add_argument("--metric")
    p.add_argument("--points", type=int)
    p = sub.add_parser("validate", help="t-test measured against simulated response times")
    common(p)
    p.add_argument("--csv", help="measured response times (default: packaged sample)")
    p.add_argument("--declared-rate", type=float, help="arrival rate of the measurement, per second")
    p.add_argument("--samples", choices=("transactions", "replications"))
    p = sub.add_parser("describe", help="print the constructed net")
    common(p)
    return ap


def _overrides(args) -> list[str]:
    out = list(args.overrides)
    if args.outputs:
        out.append(f"outputs={json.dumps(args.outputs)}")
    if args.backend:
        out.append(f"engine.backend={args.backend}")
    if args.workers is not None:
        out.append(f"engine.workers={args.workers}")
    if args.command in ("sweep", "rank", "validate"):
        for flag, key in (("factor", "factor"), ("metric", "metric"), ("points", "points"),
                          ("range", "range"), ("csv", "csv"), ("declared_rate", "declared_rate"),
                          ("samples", "samples")):
            value = getattr(args, flag, None)
            if value is not None:
                out.append(f"experiment.{args.command}.{key}={json.dumps(value)}")
    return out


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    command = None if args.command == "run" else args.command
    try:
        overrides = _overrides(args)
        if args.config:
            cfg = load_config(args.config, overrides, command)
        else:
            cfg = parse_config(baseline_dict(), overrides, command)
    except ConfigError as exc:
        print(f"hlfspn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if cfg.experiment == "describe" or args.command == "describe":
        sys.stdout.write(build(cfg.hlf).describe())
        return EXIT_OK
    run = Run(cfg)
    try:
        COMMANDS[cfg.experiment](cfg, run)
    except (MeasurementError, OSError) as exc:
        print(f"hlfspn: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BACKEND_ERRORS as exc:
        print(f"hlfspn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    run.finish(cfg.experiment)
    print(f"wrote {len(run.files)} file(s) to {cfg.outputs}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
