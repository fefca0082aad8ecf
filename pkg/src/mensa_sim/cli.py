"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 invalid input file, 3 internal
invariant failure. Every run appends one JSON line (a run manifest) to the
manifest file; data artifacts never carry timestamps.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, ir
from .accel import (ACCEL_B_DF, ConfigError, Platform, TechnologyTable,
                    load_platform)
from .characterize import CSV_HEADER, layer_profile, profile_row
from .cluster import classify_all
from .dataflow import COST_FIELDS, dataflow_cost, supports
from .energy import roofline_sweep
from .scheduler import phase1_map, phase2_adjust
from .sim import TRACE_HEADER, compare, run_pipeline, trace_rows
from .synth import ARCHETYPES, SyntheticSpec, generate_synthetic

log = logging.getLogger("mensa_sim")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_MANIFEST = "mensa_runs.jsonl"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _style(text: str, code: str) -> str:
    if os.environ.get("MENSA_SIM_NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


# -- inputs -----------------------------------------------------------------


def _read_model(path: str) -> ir.LayerGraph:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc.strerror}") from exc
    try:
        return ir.parse_model(data)
    except ir.ModelFileError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _tech(args) -> TechnologyTable | None:
    if not getattr(args, "tech", None):
        return None
    try:
        return TechnologyTable.from_json(json.loads(Path(args.tech).read_text()))
    except (OSError, json.JSONDecodeError, ConfigError, TypeError, ValueError) as exc:
        raise InputError(f"bad technology table {args.tech}: {exc}") from exc


def _platform(spec: str, args) -> Platform:
    try:
        p = load_platform(spec, _tech(args))
    except (OSError, json.JSONDecodeError, ConfigError, KeyError, TypeError) as exc:
        raise InputError(f"bad platform {spec}: {exc}") from exc
    if getattr(args, "hidden_refetch", False):
        p = replace(p, accelerators=tuple(
            replace(a, hidden_refetch=True) if a.dataflow == ACCEL_B_DF else a
            for a in p.accelerators))
    return p


# -- outputs ----------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _table(args, header, rows) -> str:
    if args.format == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
    return _csv(header, rows)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# -- subcommands ------------------------------------------------------------


def cmd_synth(args) -> dict[str, str]:
    try:
        spec = SyntheticSpec(args.archetype, args.depth, args.seed, args.scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return {"model": ir.serialize(generate_synthetic(spec)).decode()}


def cmd_characterize(args):
    g = ir.lower_lstm(_read_model(args.model))
    rows = [profile_row(layer_profile(l)) for l in g.layers]
    return {"profiles": _table(args, CSV_HEADER, rows)}


def _profiles(g):
    return {l.id: layer_profile(l) for l in g.layers}


def cmd_cluster(args):
    g = ir.lower_lstm(_read_model(args.model))
    p = _platform(args.platform, args)
    assign = classify_all(_profiles(g).values(), p.cluster_ranges)
    rows = [(a.unit_id, a.cluster, a.matched, repr(a.distance))
            for a in assign.values()]
    return {"clusters": _table(args, ("unit_id", "cluster", "matched", "distance"), rows)}


def cmd_cost(args):
    g = ir.lower_lstm(_read_model(args.model))
    p = _platform(args.platform, args)
    rows = []
    for prof in _profiles(g).values():
        for a in p.accelerators:
            if supports(a, prof.kind):
                c = dataflow_cost(prof, a, psum_width=p.tech.psum_width)
                rows.append((prof.unit_id, a.name) + tuple(getattr(c, f) for f in COST_FIELDS))
    return {"costs": _table(args, ("unit_id", "accel") + COST_FIELDS, rows)}


def cmd_schedule(args):
    g = ir.lower_lstm(_read_model(args.model))
    p = _platform(args.platform, args)
    profiles = _profiles(g)
    assign = classify_all(profiles.values(), p.cluster_ranges)
    p1 = phase1_map(profiles, assign, p)
    final = phase2_adjust(p1, g, profiles, p, args.lam)
    m1, mf, ph = p1.as_dict(), final.as_dict(), final.phases()
    rows = [(u, assign[u].cluster, m1[u], mf[u], str(ph[u] == "remapped").lower())
            for u in g.ids]
    header = ("unit_id", "cluster", "phase1_accel", "final_accel", "remapped")
    return {"schedule": _table(args, header, rows)}


def cmd_simulate(args):
    g = _read_model(args.model)
    p = _platform(args.platform, args)
    res = run_pipeline(g, p, args.lam)
    _check_report(res.report)
    out = {"report": _json(res.report.to_json())}
    if args.trace:
        out["trace"] = _csv(TRACE_HEADER, trace_rows(res.report))
    return out


def cmd_compare(args):
    g = _read_model(args.model)
    names = [n.strip() for n in args.platforms.split(",") if n.strip()]
    if len(names) < 2:
        raise UsageError("--platforms needs at least two entries")
    cmp = compare(g, [_platform(n, args) for n in names], args.lam)
    for r in cmp.reports:
        _check_report(r)
    ratios = cmp.ratios()
    header = ("model", "platform", "energy_reduction", "throughput_gain",
              "utilization_gain", "latency_s", "energy_j", "throughput_flops",
              "utilization", "area_mm2")
    rows = [(g.name,) + tuple(_num(r[h]) for h in header[1:]) for r in ratios]
    return {"comparison": _table(args, header, rows)}


def cmd_roofline(args):
    p = _platform(args.platform, args)
    rows = []
    for a in p.accelerators:
        for ai, flops, fpj in roofline_sweep(a, p.tech, args.ai_min, args.ai_max,
                                             args.points_per_octave):
            rows.append((a.name, repr(ai), repr(flops), repr(fpj)))
    return {"roofline": _table(args, ("accel", "ai", "attainable_flops", "flop_per_joule"),
                               rows)}


def _num(x):
    return repr(x) if isinstance(x, float) else x


def _check_report(r):
    """Raise AssertionError (exit 3) when a report breaks a model invariant."""
    for a in r.accels:
        assert 0.0 <= a.utilization <= 1.0 + 1e-12, f"{a.name} utilization {a.utilization}"
    for t in r.trace:
        assert t.end <= r.latency, f"unit {t.unit_id} ends after total latency"


COMMANDS = {
    "synth": cmd_synth,
    "characterize": cmd_characterize,
    "cluster": cmd_cluster,
    "cost": cmd_cost,
    "schedule": cmd_schedule,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "roofline": cmd_roofline,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-o", "--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--tech", help="technology-table JSON override")
    common.add_argument("--manifest", default=os.environ.get("MENSA_SIM_MANIFEST",
                                                             DEFAULT_MANIFEST),
                        help="run-manifest JSONL file to append to")
    common.add_argument("--hidden-refetch", action="store_true",
                        help="stream W_h from DRAM every timestep on AccelB-DF")
    common.add_argument("--lambda", dest="lam", type=float, default=0.0,
                        help="scheduler energy weight (cost = latency + lambda*energy)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mensa-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic model")
    s.add_argument("--archetype", choices=ARCHETYPES, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=1.0)

    for name, helptext in (("characterize", "per-unit metrics"),
                           ("cluster", "cluster assignment"),
                           ("cost", "dataflow cost per unit and accelerator"),
                           ("schedule", "two-phase mapping"),
                           ("simulate", "simulate on one platform")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("model")
        s.add_argument("--platform", default="mensa")
        if name == "simulate":
            s.add_argument("--trace", action="store_true",
                           help="also write a per-unit trace CSV (<out>.trace.csv)")

    s = sub.add_parser("compare", parents=[common], help="compare platforms")
    s.add_argument("model")
    s.add_argument("--platforms", default="baseline,base-hb,mensa")

    s = sub.add_parser("roofline", parents=[common], help="roofline sweep")
    s.add_argument("--platform", default="baseline")
    s.add_argument("--ai-min", type=float, default=1 / 16)
    s.add_argument("--ai-max", type=float, default=4096.0)
    s.add_argument("--points-per-octave", type=int, default=4)
    return parser


def _write(args, artifacts: dict[str, str]) -> dict[str, str]:
    """Write artifacts; return {path-or-stream: sha256}."""
    digests = {}
    items = list(artifacts.items())
    for i, (kind, text) in enumerate(items):
        data = text.encode()
        if args.out:
            path = Path(args.out) if i == 0 else Path(f"{args.out}.{kind}.csv")
            path.write_bytes(data)
            target = str(path)
        else:
            sys.stdout.write(text)
            target = f"<stdout:{kind}>"
        digests[target] = hashlib.sha256(data).hexdigest()
    return digests


def _manifest(args, argv, digests, status):
    inputs = {}
    for attr in ("model", "tech"):
        path = getattr(args, attr, None)
        if path and Path(path).is_file():
            inputs[path] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    platforms = getattr(args, "platforms", None) or getattr(args, "platform", None)
    entry = {
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "platforms": platforms.split(",") if platforms else [],
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": digests,
        "exit": status,
        "time": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    try:
        with open(args.manifest, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    except OSError as exc:
        log.warning("could not append run manifest to %s: %s", args.manifest, exc)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand")
    except UsageError as exc:
        print(f"mensa-sim: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    digests: dict[str, str] = {}
    try:
        artifacts = COMMANDS[args.command](args)
        digests = _write(args, artifacts)
        status = EXIT_OK
    except UsageError as exc:
        print(f"mensa-sim: error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except (InputError, OSError) as exc:
        print(_style(f"mensa-sim: invalid input: {exc}", "31"), file=sys.stderr)
        status = EXIT_INPUT
    except (AssertionError, ArithmeticError, KeyError, ValueError) as exc:
        print(_style(f"mensa-sim: internal invariant failure: {exc!r}", "31;1"),
              file=sys.stderr)
        status = EXIT_INTERNAL
    if status == EXIT_OK and args.out:
        print(_style(f"wrote {', '.join(digests)}", "32"), file=sys.stderr)
    _manifest(args, argv, digests, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
