"""Command-line front door: simulate, serve, report, replay."""

from __future__ import annotations

import argparse
import csv
import json
import socket
import sys
from pathlib import Path

from .config import RunConfig

DEFAULT_CELLS = [
    ["active_tmosh", "native"],
    ["active_mosh", "native"],
    ["pairwise", "info_gain"],
    ["full_ranking", "info_gain"],
    ["partial_ranking", "info_gain"],
    ["random", "random"],
]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="paretonav")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run simulated decision-maker benchmarks")
    sim.add_argument("--config", type=Path, default=None, help="JSON run/matrix file")
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--problems", nargs="*", default=None)
    sim.add_argument("--seeds", type=int, nargs="*", default=None)

    srv = sub.add_parser("serve", help="start the HTTP session API")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--log-dir", type=Path, default=None)

    rep = sub.add_parser("report", help="aggregate a finished run directory")
    rep.add_argument("run_dir", type=Path)
    rep.add_argument("--out", type=Path, default=None)

    rpl = sub.add_parser("replay", help="re-execute a session log and diff")
    rpl.add_argument("log_file", type=Path)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "replay":
            return _cmd_replay(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _load_matrix(args) -> tuple[RunConfig, list[str], list[list[str]], list[int]]:
    cfg = RunConfig()
    problems = ["branin_currin"]
    cells = DEFAULT_CELLS
    seeds = list(range(10))
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
        cfg = RunConfig.from_dict(data.get("run", {}))
        matrix = data.get("matrix", {})
        problems = matrix.get("problems", problems)
        cells = matrix.get("cells", cells)
        seeds = matrix.get("seeds", seeds)
    if args.problems:
        problems = args.problems
    if args.seeds:
        seeds = args.seeds
    return cfg, problems, cells, seeds


def _cmd_simulate(args) -> int:
    from .metrics import ise as ise_metric
    from .problems import get_problem
    from .session import write_session_log
    from .simulate import run_session

    cfg, problems, cells, seeds = _load_matrix(args)
    out_root = Path(args.out)
    for problem_name in problems:
        problem = get_problem(problem_name)
        run_dir = out_root / problem_name
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(
            json.dumps(
                {"run": cfg.to_dict(), "matrix": {"problems": [problem_name], "cells": cells, "seeds": seeds}},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        rows = []
        ise_rows = []
        for mechanism, querying in cells:
            for seed in seeds:
                result = run_session(problem, mechanism, querying, cfg, seed)
                label = f"{mechanism}[{querying}]"
                write_session_log(
                    result.log_records,
                    run_dir / "logs" / f"{mechanism}_{querying}_seed{seed}.jsonl",
                )
                for unit, ratio in result.trace:
                    rows.append((label, seed, unit, ratio))
                value = ise_metric(
                    len(result.good_rounds), result.good_rounds, cfg.metrics.good_delta
                ) if result.good_rounds else None
                ise_rows.append((label, seed, value))
                print(f"{problem_name} {label} seed={seed}: "
                      f"final={result.final_ratio():.4f} events={result.num_events}")
        _write_raw_traces(run_dir, cfg, rows, ise_rows)
        _report_run_dir(run_dir, out_dir=run_dir)
    return 0


def _write_raw_traces(run_dir: Path, cfg: RunConfig, rows, ise_rows) -> None:
    h = cfg.config_hash()
    with open(run_dir / f"raw_trace_{h}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "seed", "unit", "utility_ratio"])
        for mech, seed, unit, ratio in rows:
            w.writerow([mech, seed, unit, repr(float(ratio))])
    with open(run_dir / f"ise_{h}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "seed", "ise"])
        for mech, seed, value in ise_rows:
            w.writerow([mech, seed, "" if value is None else repr(float(value))])


def _report_run_dir(run_dir: Path, out_dir: Path) -> None:
    from .metrics import MetricTrace, RunReport

    config_file = run_dir / "config.json"
    cfg = RunConfig.from_dict(json.loads(config_file.read_text())["run"])
    h = cfg.config_hash()
    raw = run_dir / f"raw_trace_{h}.csv"
    if not raw.exists():
        raise FileNotFoundError(f"no raw trace file for config hash {h} in {run_dir}")
    by_key: dict[tuple[str, int], list[tuple[int, float]]] = {}
    with open(raw, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["mechanism"], int(row["seed"]))
            by_key.setdefault(key, []).append((int(row["unit"]), float(row["utility_ratio"])))
    traces = [
        MetricTrace(mechanism=mech, seed=seed, points=sorted(points))
        for (mech, seed), points in sorted(by_key.items())
    ]
    ise_values: dict[tuple[str, int], float | None] = {}
    ise_file = run_dir / f"ise_{h}.csv"
    if ise_file.exists():
        with open(ise_file, newline="") as fh:
            for row in csv.DictReader(fh):
                ise_values[(row["mechanism"], int(row["seed"]))] = (
                    float(row["ise"]) if row["ise"] else None
                )
    report = RunReport(
        traces=traces,
        total_units=cfg.budget.total_units,
        ise_values=ise_values,
        config_hash=h,
    )
    written = report.emit(out_dir)
    for name, path in written.items():
        print(f"{name}: {path}")


def _cmd_report(args) -> int:
    _report_run_dir(Path(args.run_dir), Path(args.out) if args.out else Path(args.run_dir))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, port = args.host, args.port
    if port == 0:
        probe = socket.socket()
        probe.bind((host, 0))
        port = probe.getsockname()[1]
        probe.close()
    print(f"serving on http://{host}:{port}", flush=True)
    app = create_app(log_dir=str(args.log_dir) if args.log_dir else None)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _cmd_replay(args) -> int:
    from .session import replay_session_log

    diffs = replay_session_log(args.log_file)
    if diffs:
        for d in diffs:
            print(d, file=sys.stderr)
        return 1
    print("replay ok: no diffs")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
