"""Command-line entry point: ``cylch {run,probe,verify,sweep,resume}``.

``--config`` takes a path or the name of a shipped preset.  The exit status is
0 only when every requested check passes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ParseError, ValidationError
from .experiment import (CHECKS, PRESET_DIR, ExperimentConfig, load_config, preset_path, resume,
                         run_scenario, run_sweep)


def _config(arg: str, seed: int | None) -> ExperimentConfig:
    path = Path(arg)
    cfg = load_config(path if path.exists() else preset_path(arg))
    if seed is not None:
        cfg = cfg.with_values(scenario__seed=seed)
    return cfg


def _summary(out: Path) -> None:
    report = json.loads((out / "report.json").read_text())
    for entry in report["checks"]:
        flag = "PASS" if entry["pass"] else "FAIL"
        print(f"{flag}  {entry['name']}")
    if report["error"]:
        print(f"ERROR {report['error']}")


def _cmd_run(args) -> int:
    cfg = _config(args.config, args.seed)
    out = Path(args.out)
    status = resume(args.resume, cfg, out) if args.resume else run_scenario(cfg, out)
    _summary(out)
    return status


def _cmd_probe(args) -> int:
    cfg = _config(args.config, args.seed).with_values(scenario__checks=(args.check,))
    out = Path(args.out)
    status = run_scenario(cfg, out)
    _summary(out)
    return status


def _cmd_verify(args) -> int:
    names = args.presets or sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
    worst = 0
    for name in names:
        cfg = _config(name, args.seed)
        status = run_scenario(cfg, Path(args.out) / name)
        print(f"{'PASS' if status == 0 else 'FAIL'}  {name}")
        worst = max(worst, status)
    return worst


def _cmd_sweep(args) -> int:
    summary = run_sweep(_config(args.config, args.seed), Path(args.out), args.parallel)
    print(f"{summary['runs']} runs, complete={summary['complete']}, pass={summary['pass']}")
    return 0 if summary["pass"] else 1


def _cmd_resume(args) -> int:
    cfg = _config(args.config, args.seed)
    out = Path(args.out)
    status = resume(args.resume, cfg, out)
    _summary(out)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cylch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="config file or preset name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override [scenario] seed")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.add_argument("--resume", default=None, help="continue from this checkpoint")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("probe", help="run a scenario with a single check")
    p.add_argument("check", choices=CHECKS)
    common(p)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("verify", help="run shipped presets and report pass/fail")
    p.add_argument("presets", nargs="*")
    common(p, config_required=False)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep", help="run the cross product of sweep lists")
    common(p)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("resume", help="continue from a checkpoint")
    common(p)
    p.add_argument("--resume", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_resume)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
