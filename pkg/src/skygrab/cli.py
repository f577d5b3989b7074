"""Command-line front end.

Subcommands: ``analyze`` (design report), ``simulate`` (single traced trial),
``montecarlo`` (seeded batch), ``sweep`` (parameter grid).  Exit codes
partition outcomes: 0 success/pass, 2 invalid input, 3 design check failed,
4 simulation diverged.

Every output directory receives exactly one ``manifest.json`` holding the
tool version, the argv, the fully resolved configuration and the master
seed; a run can be reproduced from its manifest alone (pass the manifest as
``--config``).  Result and trace files contain no wall-clock data, so reruns
are byte-identical; the manifest's ``timestamps`` entry is the one
deliberately non-reproducible field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .config import (
    ConfigError,
    build_run_config,
    load_document,
    merge_documents,
    normalize_document,
)
from .design import evaluate_design
from .experiments import (
    load_scenario,
    run_batch,
    run_trial,
    scenario_library,
    sweep as run_sweep,
)
from .mission import CAUSE_DIVERGED

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_DESIGN_FAIL = 3
EXIT_DIVERGED = 4

OUTPUT_ROOT_ENV = "SKYGRAB_OUT"

_NUM = lambda x: "" if x is None else format(x, ".10g")  # noqa: E731


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="skygrab",
        description="Design analysis and capture-encounter simulation for a "
                    "drone-mounted passive basket manipulator.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--config", help="JSON config document (or a manifest)")
        if scenario:
            sp.add_argument("--scenario",
                            help="named scenario: " + ", ".join(sorted(scenario_library())))
        sp.add_argument("--quiet", action="store_true",
                        help="suppress informational output")

    a = sub.add_parser("analyze", help="evaluate a design against requirements")
    common(a)
    a.add_argument("--out", help="directory for report.json/report.txt")

    s = sub.add_parser("simulate", help="run one traced capture attempt")
    common(s)
    s.add_argument("--seed", type=int, default=None, help="trial seed")
    s.add_argument("--trace", help="trace CSV path")
    s.add_argument("--out", help="directory for trace, outcome and manifest")

    m = sub.add_parser("montecarlo", help="run a seeded Monte Carlo batch")
    common(m)
    m.add_argument("--trials", type=int, default=None)
    m.add_argument("--seed", type=int, default=None, help="master seed")
    m.add_argument("--out", help="output directory")
    m.add_argument("--keep-traces", action="store_true",
                   help="retain per-trial traces under the output directory")

    w = sub.add_parser("sweep", help="grid sweep over numeric config fields")
    common(w)
    w.add_argument("--spec", required=True,
                   help="sweep spec JSON: parameters/values/trials_per_cell")
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--out", help="output directory")
    return p


def _resolve_document(args) -> dict:
    doc: dict = {}
    if getattr(args, "scenario", None):
        try:
            doc = load_scenario(args.scenario)
        except KeyError as exc:
            raise ConfigError("/", str(exc)) from exc
    if args.config:
        doc = merge_documents(doc, load_document(args.config))
    if not doc:
        raise ConfigError("/", "provide --config and/or --scenario")
    return doc


def _out_dir(args, default_name: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    out = getattr(args, "out", None)
    if out is None:
        out = os.path.join(root, default_name)
    elif not os.path.isabs(out) and os.environ.get(OUTPUT_ROOT_ENV):
        out = os.path.join(root, out)
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out_dir: str, argv, doc: dict, master_seed, outputs,
              started: float):
    payload = {
        "tool_version": __version__,
        "command": list(argv),
        "resolved_config": doc,
        "master_seed": master_seed,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "timestamps": {
            "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
        },
    }
    path = os.path.join(out_dir, "manifest.json")
    _write_json(path, payload)
    return path


def _say(args, *message):
    if not args.quiet:
        print(*message)


def cmd_analyze(args, argv) -> int:
    started = time.time()
    doc = _resolve_document(args)
    run = build_run_config(doc, need_encounter=False)
    report = evaluate_design(run.design, run.target, run.requirements)
    _say(args, report.render_table())
    if args.out:
        out = _out_dir(args, "analyze")
        jpath = os.path.join(out, "report.json")
        tpath = os.path.join(out, "report.txt")
        _write_json(jpath, report.to_dict())
        with open(tpath, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.render_table() + "\n")
        _manifest(out, argv, run.doc, None, [jpath, tpath], started)
    return EXIT_OK if report.overall_pass else EXIT_DESIGN_FAIL


def cmd_simulate(args, argv) -> int:
    started = time.time()
    doc = _resolve_document(args)
    run = build_run_config(doc)
    seed = args.seed if args.seed is not None else run.experiments.master_seed

    out = None
    outputs = []
    trace_path = args.trace
    if args.out or trace_path is None:
        out = _out_dir(args, f"simulate-s{seed}")
        if trace_path is None:
            trace_path = os.path.join(out, "trace.csv")
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        # reference by basename so reruns into different directories stay
        # byte-identical
        outcome = run_trial(run, master_seed=seed, index=0, trace_fh=fh,
                            trace_ref=os.path.basename(trace_path))
    outputs.append(trace_path)
    _say(args, f"outcome: {'success' if outcome.success else 'failure'}"
               f" (phase {outcome.terminal_phase}"
               + (f", cause {outcome.failure_cause}" if not outcome.success else "")
               + ")")
    if outcome.detach_time is not None:
        _say(args, f"detach at {outcome.detach_time:.3f} s")
    if outcome.capture_time is not None:
        _say(args, f"capture at {outcome.capture_time:.3f} s")
    if out:
        opath = os.path.join(out, "outcome.json")
        _write_json(opath, outcome.to_dict())
        outputs.append(opath)
        _manifest(out, argv, run.doc, seed, outputs, started)
    if outcome.failure_cause == CAUSE_DIVERGED:
        return EXIT_DIVERGED
    return EXIT_OK


def _trials_csv(path: str, outcomes):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=v1\n")
        fh.write("index,success,terminal_phase,failure_cause,"
                 "detach_time,capture_time\n")
        for o in outcomes:
            fh.write(",".join([
                str(o.index),
                "1" if o.success else "0",
                o.terminal_phase,
                o.failure_cause or "",
                _NUM(o.detach_time),
                _NUM(o.capture_time),
            ]) + "\n")


def cmd_montecarlo(args, argv) -> int:
    started = time.time()
    doc = _resolve_document(args)
    run = build_run_config(doc)
    trials = args.trials if args.trials is not None else run.experiments.trials
    seed = args.seed if args.seed is not None else run.experiments.master_seed
    if trials < 1:
        raise ConfigError("/experiments/trials", "must be at least 1")
    out = _out_dir(args, f"montecarlo-s{seed}-n{trials}")
    trace_dir = out if (args.keep_traces or run.experiments.keep_traces) else None
    result = run_batch(run, trials, master_seed=seed, trace_dir=trace_dir)
    bpath = os.path.join(out, "batch.json")
    cpath = os.path.join(out, "trials.csv")
    _write_json(bpath, result.to_dict())
    _trials_csv(cpath, result.outcomes)
    _manifest(out, argv, run.doc, seed, [bpath, cpath], started)
    _say(args, f"{result.successes}/{result.trials} captures "
               f"(estimate {result.estimate:.3f}, "
               f"95% CI [{result.ci95[0]:.3f}, {result.ci95[1]:.3f}])")
    for cause, count in sorted(result.failure_histogram.items()):
        _say(args, f"  {cause}: {count}")
    _say(args, f"results in {out}")
    return EXIT_OK


def _load_sweep_spec(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("/", f"cannot read sweep spec {path}: {exc}") from exc
    if not isinstance(spec, dict) or "parameters" not in spec:
        raise ConfigError("/parameters", "sweep spec needs a parameters list")
    params = spec["parameters"]
    if (not isinstance(params, list) or not params
            or any(not isinstance(p, dict) or "path" not in p
                   or "values" not in p for p in params)):
        raise ConfigError("/parameters",
                          "each parameter needs 'path' and 'values'")
    paths = [p["path"] for p in params]
    grids = [p["values"] for p in params]
    for i, grid in enumerate(grids):
        if not isinstance(grid, list) or not grid:
            raise ConfigError(f"/parameters/{i}/values",
                              "expected a non-empty array of values")
    trials = spec.get("trials_per_cell", 50)
    matched = spec.get("matched_seeds", True)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("/trials_per_cell", "must be a positive integer")
    if not isinstance(matched, bool):
        raise ConfigError("/matched_seeds", "must be true or false")
    return paths, grids, trials, matched


def cmd_sweep(args, argv) -> int:
    started = time.time()
    doc = _resolve_document(args)
    base = normalize_document(doc)
    paths, grids, trials, matched = _load_sweep_spec(args.spec)
    seed = args.seed if args.seed is not None else \
        base["experiments"]["master_seed"]
    result = run_sweep(base, paths, grids, trials, seed, matched_seeds=matched)
    out = _out_dir(args, f"sweep-s{seed}")
    jpath = os.path.join(out, "sweep.json")
    cpath = os.path.join(out, "sweep.csv")
    tpath = os.path.join(out, "sweep.txt")
    _write_json(jpath, result.to_dict())
    with open(cpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=v1\n")
        fh.write(",".join(list(result.parameter_paths)
                          + ["trials", "successes", "estimate",
                             "ci95_low", "ci95_high"]) + "\n")
        for cell in result.cells:
            r = cell.result
            fh.write(",".join(
                [_NUM(cell.parameters[p]) for p in result.parameter_paths]
                + [str(r.trials), str(r.successes), _NUM(r.estimate),
                   _NUM(r.ci95[0]), _NUM(r.ci95[1])]) + "\n")
    with open(tpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.render_table() + "\n")
    _manifest(out, argv, base, seed, [jpath, cpath, tpath], started)
    _say(args, result.render_table())
    _say(args, f"results in {out}")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, matching the invalid-input code
        return EXIT_INVALID_INPUT if exc.code not in (0,) else 0
    handlers = {
        "analyze": cmd_analyze,
        "simulate": cmd_simulate,
        "montecarlo": cmd_montecarlo,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](args, argv)
    except ConfigError as exc:
        print(f"error: invalid input at {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
