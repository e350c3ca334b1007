"""Command-line front end: ``symflow run`` and ``symflow list-invariants``.

Exit codes: 0 all thresholds pass, 1 a threshold failed, 2 the scenario could
not be parsed, 3 the integration failed.  With several scenarios the largest
code is returned.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .integrator import IntegrationError
from .scenario import KINDS, ScenarioError, format_csv, list_invariants, load_scenario, run_scenario

EXIT_OK, EXIT_THRESHOLD, EXIT_PARSE, EXIT_INTEGRATION = 0, 1, 2, 3


def _run_one(path: str, out: str, dt, t_end, seed) -> tuple[int, str]:
    try:
        sc = load_scenario(path).with_overrides(dt=dt, t_end=t_end, seed=seed)
    except OSError as exc:
        return EXIT_PARSE, f"{path}: {exc.strerror}"
    except ScenarioError as exc:
        return EXIT_PARSE, str(exc)
    try:
        # overflow is reported through IntegrationError and exit code 3
        with np.errstate(over="ignore", invalid="ignore"):
            res = run_scenario(sc)
    except ScenarioError as exc:
        return EXIT_PARSE, str(exc)
    except (IntegrationError, ValueError, ArithmeticError) as exc:
        return EXIT_INTEGRATION, f"{path}: integration failed: {exc}"
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = Path(path).stem
    (outdir / f"{stem}.csv").write_text(format_csv(res.header, res.rows), encoding="utf-8")
    (outdir / f"{stem}.json").write_text(json.dumps(res.report, indent=2) + "\n", encoding="utf-8")
    failed = [k for k, e in {**res.report["invariants"], **res.report["checks"]}.items() if not e["pass"]]
    if failed:
        return EXIT_THRESHOLD, f"{path}: threshold exceeded for {', '.join(failed)}"
    return EXIT_OK, f"{path}: ok"


def _cmd_run(args) -> int:
    jobs = max(1, args.jobs)
    calls = [(p, args.out, args.dt, args.t_end, args.seed) for p in args.scenarios]
    if jobs == 1 or len(calls) == 1:
        results = [_run_one(*c) for c in calls]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, *zip(*calls)))
    code = EXIT_OK
    for rc, msg in results:
        print(msg, file=sys.stderr if rc else sys.stdout)
        code = max(code, rc)
    return code


def _cmd_list(args) -> int:
    try:
        names = list_invariants(args.kind, args.n, args.eps)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    for name in names:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symflow", description="Integrate scenario flows and report invariant drift.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more scenario files")
    run.add_argument("scenarios", nargs="+", help="scenario config files")
    run.add_argument("--out", required=True, help="output directory for <name>.csv and <name>.json")
    run.add_argument("--dt", type=float, help="override the step size")
    run.add_argument("--t-end", type=float, dest="t_end", help="override the final time")
    run.add_argument("--seed", type=int, help="override the random seed")
    run.add_argument("--jobs", type=int, default=1, help="run scenarios in parallel processes")
    run.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list-invariants", help="list invariant names for a scenario kind")
    ls.add_argument("kind", help=f"one of {', '.join(KINDS)}")
    ls.add_argument("--n", type=int, default=3)
    ls.add_argument("--eps", type=int, default=1, choices=(1, -1))
    ls.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
