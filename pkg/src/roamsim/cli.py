"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 calibration or acceptance
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import yaml

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_USAGE = 0, 2, 3, 64
OUTPUT_ENV = "ROAMSIM_OUTPUT_DIR"
DEFAULT_OUTPUT = "roamsim-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationFailure(f"{out}: output directory not writable ({e.strerror})") from None
    if not os.access(out, os.W_OK):
        raise ValidationFailure(f"{out}: output directory not writable")
    return out


class ValidationFailure(Exception):
    pass


def _scenario(args):
    from .sim.scenario import default_scenario_path, load_scenario

    return load_scenario(args.scenario or default_scenario_path())


def _seeds(args, scenario) -> list[int]:
    if args.seed is not None:
        return list(args.seed)
    if getattr(args, "seeds", None) is not None:
        return list(range(1, args.seeds + 1))
    return [scenario.seed]


def _emit(report, fmt: str, flow: str) -> str:
    if fmt == "csv":
        return report.to_csv()
    if fmt == "jsonl":
        lines = []
        for r in report.rows:
            lines.append(json.dumps({
                "device": r.device, "model": r.model, "mode": r.mode.value, "flow": r.flow,
                "direction": r.direction, "runs": r.runs, "gap_mean": r.gap.mean, "gap_min": r.gap.min,
                "gap_max": r.gap.max, "switch_mean": r.switch.mean, "seamless": r.seamless,
            }, separators=(",", ":")))
        return "".join(l + "\n" for l in lines)
    return report.table(flow)


def _default_flow(scenario, cls) -> Optional[str]:
    for d in scenario.devices:
        for f in d.flows:
            if f.cls is cls:
                return f.id
    return scenario.devices[0].flows[0].id if scenario.devices and scenario.devices[0].flows else None


def _write_report(out: Path, report, flow: Optional[str]):
    write_atomic(out / "report.csv", report.to_csv())
    write_atomic(out / "rebuffer.csv", report.rebuffer_csv())
    write_atomic(out / "throughput.csv", report.throughput_csv())
    if flow:
        write_atomic(out / "report.txt", report.table(flow))


# -- subcommands -------------------------------------------------------------------

def cmd_run(args) -> int:
    from .sim.report import build_report
    from .sim.runner import iter_logs
    from .traffic import FlowClass

    scenario = _scenario(args)
    out = _output_dir(args)
    seeds = _seeds(args, scenario)

    def logs():
        for log in iter_logs(scenario, seeds, args.jobs):
            write_atomic(out / f"events-seed{log.seed}.jsonl", log.dumps())
            yield log

    report = build_report(logs())
    flow = args.flow or _default_flow(scenario, FlowClass.INTERACTIVE)
    _write_report(out, report, flow)
    sys.stdout.write(_emit(report, args.format, flow))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .sim.runner import compare
    from .traffic import FlowClass

    scenario = _scenario(args)
    out = _output_dir(args)
    seeds = _seeds(args, scenario) if args.seed is not None else list(range(1, (args.seeds or scenario.seeds) + 1))

    def sink(mode, log):
        if args.save_logs:
            write_atomic(out / f"events-{mode.value.lower()}-seed{log.seed}.jsonl", log.dumps())

    report = compare(scenario, seeds, args.jobs, sink)
    flow = args.flow or _default_flow(scenario, FlowClass.LIVE)
    _write_report(out, report, flow)
    write_atomic(out / "compare.csv", report.four_mode_csv(flow))
    if args.format == "csv":
        sys.stdout.write(report.four_mode_csv(flow))
    else:
        sys.stdout.write(_emit(report, args.format, flow))
    return EXIT_OK


def _load_targets(path: Optional[str]):
    from .sim.calibrate import CalibrationTarget, default_targets

    if path is None:
        return default_targets()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValidationFailure(f"{path}:1: targets must map model name to switch times")
    targets = []
    for model, t in data.items():
        try:
            targets.append(CalibrationTarget(str(model), float(t["wifi_to_cbrs"]), float(t["cbrs_to_wifi"]),
                                             None if t.get("zoom_wifi_to_cbrs") is None
                                             else float(t["zoom_wifi_to_cbrs"]),
                                             bool(t.get("supports_tunnel", True))))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationFailure(f"{path}: target {model!r}: {e}") from None
    return targets


def cmd_calibrate(args) -> int:
    from .sim.calibrate import calibrate_all, residual_report
    from .sim.scenario import dump_profile_library

    scenario = _scenario(args)
    out = _output_dir(args)
    targets = _load_targets(args.targets)
    seeds = _seeds(args, scenario) if args.seed is not None else list(range(1, (args.seeds or scenario.seeds) + 1))
    library, results = calibrate_all(targets, scenario, args.tolerance, seeds)
    dest = Path(args.library) if args.library else out / "profiles.yaml"
    write_atomic(dest, dump_profile_library(library))
    text = residual_report(results)
    write_atomic(out / "calibration.txt", text)
    sys.stdout.write(text)
    failed = [r for r in results if not r.ok]
    if failed:
        print(f"calibration failed for {len(failed)} model(s)", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_report(args) -> int:
    from .sim.eventlog import EventLog
    from .sim.report import build_report
    from .traffic import FlowClass

    out = _output_dir(args)

    def logs():
        for p in args.logs:
            with open(p) as fh:
                try:
                    yield EventLog.from_lines(fh)
                except (ValueError, KeyError) as e:
                    raise ValidationFailure(f"{p}: not an event log ({e})") from None

    report = build_report(logs())
    flow = args.flow
    if flow is None and report.rows:
        inter = [r.flow for r in report.rows if r.flow_class is FlowClass.INTERACTIVE]
        flow = inter[0] if inter else report.rows[0].flow
    _write_report(out, report, flow)
    sys.stdout.write(_emit(report, args.format, flow or ""))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .sim.scenario import default_scenario_path, load_scenario

    path = args.scenario or default_scenario_path()
    sc = load_scenario(path)
    print(f"{path}: ok ({len(sc.devices)} devices, {len(sc.environment.nodes)} nodes, {len(sc.profiles)} profiles)")
    return EXIT_OK


def cmd_gen_profile(args) -> int:
    from .policy.profile import emit_profile_payload, emit_profile_text, parse_profile

    src = args.input
    text = sys.stdin.read() if src == "-" else Path(src).read_text()
    profile = parse_profile(text)
    result = emit_profile_payload(profile) + "\n" if args.payload else emit_profile_text(profile)
    if args.output:
        write_atomic(Path(args.output), result)
    else:
        sys.stdout.write(result)
    return EXIT_OK


def _parse_point(s: str):
    try:
        x, y = (float(v) for v in s.split(","))
    except ValueError:
        raise ValidationFailure(f"--point {s!r}: expected x,y") from None
    return x, y


def _parse_cell(s: str):
    parts = s.split(":")
    try:
        cell = int(parts[0])
        sinr = float(parts[1]) if len(parts) > 1 else float("inf")
        cqi = int(parts[2]) if len(parts) > 2 else 15
    except (ValueError, IndexError):
        raise ValidationFailure(f"--cell {s!r}: expected id[:sinr[:cqi]]") from None
    return cell, sinr, cqi


def cmd_geofence_check(args) -> int:
    from .policy.geofence import GeofenceError, footprint_trigger, geofence_contains, geofence_from_dict

    if args.geofence:
        data = yaml.safe_load(Path(args.geofence).read_text()) or {}
        try:
            spec = geofence_from_dict(data.get("geofence", data))
        except (GeofenceError, KeyError, TypeError, ValueError) as e:
            raise ValidationFailure(f"{args.geofence}: {e}") from None
    else:
        scenario = _scenario(args)
        if scenario.policy is None or scenario.policy.geofence is None:
            raise ValidationFailure("scenario has no policy.geofence section")
        spec = scenario.policy.geofence
    for p in args.point or []:
        pt = _parse_point(p)
        print(f"{pt[0]:g},{pt[1]:g}\t{'inside' if geofence_contains(spec, pt) else 'outside'}")
    if args.cell:
        cells = [_parse_cell(c) for c in args.cell]
        print(f"footprint\t{'triggered' if footprint_trigger(spec, cells) else 'not triggered'}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="roamsim", description="Wi-Fi / CBRS roaming simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds=True):
        sp.add_argument("--scenario", help="scenario YAML (default: shipped scenario)")
        sp.add_argument("--output-dir", help=f"artifact directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        sp.add_argument("--format", choices=("table", "csv", "jsonl"), default="table")
        if seeds:
            sp.add_argument("--seed", type=int, action="append", help="seed to run (repeatable)")
            sp.add_argument("--seeds", type=int, help="run seeds 1..N")
            sp.add_argument("--jobs", type=int, default=1, help="parallel runs")

    sp = sub.add_parser("run", help="simulate a scenario")
    common(sp)
    sp.add_argument("--flow", help="flow shown in the table")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="traditional vs tunnel over many seeds")
    common(sp)
    sp.add_argument("--flow", help="flow for the four-mode table (default: first LIVE flow)")
    sp.add_argument("--save-logs", action="store_true", help="keep every event log")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("calibrate", help="fit the device profile library")
    common(sp)
    sp.add_argument("--targets", help="YAML of per-model targets (default: built-in table)")
    sp.add_argument("--tolerance", type=float, default=0.5)
    sp.add_argument("--library", help="profile library to write (default: <output-dir>/profiles.yaml)")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("report", help="rebuild a report from stored event logs")
    sp.add_argument("logs", nargs="+", help="event log files (.jsonl)")
    sp.add_argument("--output-dir")
    sp.add_argument("--format", choices=("table", "csv", "jsonl"), default="table")
    sp.add_argument("--flow")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("validate-config", help="check a scenario file")
    sp.add_argument("scenario", nargs="?", help="scenario YAML (default: shipped scenario)")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gen-profile", help="validate a radio preference profile and emit it")
    sp.add_argument("input", help="profile text file, or - for stdin")
    sp.add_argument("--payload", action="store_true", help="emit the single-line payload form")
    sp.add_argument("--output", help="write here instead of stdout")
    sp.set_defaults(func=cmd_gen_profile)

    sp = sub.add_parser("geofence-check", help="test points and macro cells against a geofence")
    sp.add_argument("--scenario", help="take the geofence from this scenario's policy section")
    sp.add_argument("--geofence", help="YAML file holding a geofence mapping")
    sp.add_argument("--point", action="append", help="x,y in metres (repeatable)")
    sp.add_argument("--cell", action="append", help="visible macro cell id[:sinr[:cqi]] (repeatable)")
    sp.set_defaults(func=cmd_geofence_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .policy.profile import ProfileError
    from .sim.scenario import ConfigError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ProfileError as e:
        src = getattr(args, "input", "<profile>")
        print(f"{src}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, ValidationFailure) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as e:
        print(f"error: {e.filename}: no such file", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
