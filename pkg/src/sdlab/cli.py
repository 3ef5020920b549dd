"""Command line entry point ``sdl``.

Exit codes: 0 all hard checks pass, 1 a hard check failed, 2 the
configuration did not validate, 3 a stage raised at run time.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

import tomli
from pydantic import ValidationError

from .config import ExperimentConfig, apply_override, format_validation_error, load_config_dict, parse_mollify
from .presets import PRESETS, preset_dict, preset_table
from .runner import RunError, run_config

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()


def stored_schema() -> dict:
    """The documented schema shipped with the package."""
    return json.loads(resources.files("sdlab").joinpath("config_schema.json").read_text())


def _build(data: dict, args) -> ExperimentConfig:
    for spec in getattr(args, "override", None) or ():
        apply_override(data, spec)
    if getattr(args, "mollify_n", None) is not None:
        data["mollify_n"] = parse_mollify(args.mollify_n)
    if getattr(args, "output_dir", None):
        data["output_dir"] = args.output_dir
    return ExperimentConfig.model_validate(data)


def _load(args) -> ExperimentConfig:
    if args.command == "preset":
        data = preset_dict(args.name)
    else:
        data = load_config_dict(args.config)
    return _build(data, args)


def _print_reports(result, stream) -> None:
    for r in result.reports:
        se = "" if r.standard_error is None else f" se={r.standard_error:.3g}"
        hard = "" if r.hard else " (advisory)"
        case = r.metadata.get("case", "")
        print(f"{r.verdict.upper():12s} {case:28s} {r.name:24s} stat={r.statistic:.6g} "
              f"target={r.target:.6g}{se}{hard}", file=stream)


def _run(args) -> int:
    cfg = _load(args)
    if getattr(args, "dump", False):
        print(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        result = run_config(cfg, threads=args.threads)
    except RunError as exc:
        print(f"runtime error in stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _print_reports(result, sys.stdout)
    print(f"{len(result.reports)} report(s) written to {result.output_dir}", file=sys.stdout)
    return result.exit_code


def _validate(args) -> int:
    cfg = _load(args)
    n_cases = 1
    if cfg.sim is not None:
        n_cases *= len(cfg.sim.dt_list)
    n_cases *= sum(len(cfg.mollify_list) if d.mollify_n == "inherit" else 1 for d in cfg.drift_list)
    print(f"ok: experiment {cfg.experiment!r}, {n_cases} case(s), {len(cfg.diagnostics)} diagnostic(s)")
    return EXIT_OK


def _list(args) -> int:
    rows = preset_table()
    width = max(len(n) for n, _ in rows)
    for name, desc in rows:
        print(f"{name:{width}s}  {desc}")
    return EXIT_OK


def _schema(args) -> int:
    print(json.dumps(config_schema(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdl", description="Distributional-drift SDE laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                        help="set a nested key, e.g. sim.n_paths=5000 or drift.params.alpha=2")
        sp.add_argument("--mollify-n", default=None, help="mollification level(s): 16, 4,8,16 or none")
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: SDL_THREADS or all cores)")

    r = sub.add_parser("run", help="run an experiment from a TOML or JSON config")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=_run)

    pr = sub.add_parser("preset", help="run a built-in preset")
    pr.add_argument("name", choices=sorted(PRESETS))
    common(pr)
    pr.add_argument("--dump", action="store_true", help="print the resolved config and exit")
    pr.set_defaults(func=_run)

    ls = sub.add_parser("list", help="list built-in presets")
    ls.set_defaults(func=_list)

    v = sub.add_parser("validate", help="validate a config without running it")
    v.add_argument("config")
    common(v)
    v.set_defaults(func=_validate)

    s = sub.add_parser("schema", help="print the JSON schema of the config format")
    s.set_defaults(func=_schema)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print("invalid configuration:\n" + format_validation_error(exc), file=sys.stderr)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        print(f"invalid configuration file: {exc}", file=sys.stderr)
    except (ValueError, KeyError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
