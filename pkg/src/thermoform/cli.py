"""Command-line front end.

Every command writes one report (CSV or JSON-like structured text) to
``--output`` or stdout.  Exit status: 0 success, 2 bad input, 3 budget
exceeded, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np
import yaml

from .convex import diagram
from .errors import BudgetError, InputError, NumericalError
from .gibbs import convergence_table
from .nonlinear_pressure import NonlinearEnergy, nl_pressure
from .shift_model import builtin_model, solve_batch, validate_model
from .transitions import (
    detect_freezing,
    potts_critical_beta,
    potts_magnetization,
    potts_ordered_value,
    scan,
)

EXIT_INPUT, EXIT_BUDGET, EXIT_NUMERICAL = 2, 3, 4
COMMANDS = ("pressure", "entropy-diagram", "equilibria", "gibbs", "scan", "freezing", "potts")


# ---------------------------------------------------------------------------
# Formatting


def fmt(x: Any) -> str:
    """17 significant digits, locale independent."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x + 0.0, ".17g")


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_text(obj: Any, indent: int = 0) -> str:
    """JSON with sorted keys and ``.17g`` floats; non-finite floats as strings."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dump_text(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dump_text(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dump_text(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else json.dumps(fmt(obj))
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(str(obj))


def write_csv(out: io.TextIOBase, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Input parsing


def load_structured(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def load_model(source: str):
    if source.startswith("builtin:"):
        return builtin_model(source.split(":", 1)[1])
    if not os.path.exists(source):
        raise InputError(f"model file {source!r} does not exist")
    return validate_model(load_structured(source))


def load_energy(source: str) -> NonlinearEnergy:
    if os.path.exists(source):
        return NonlinearEnergy.from_spec(load_structured(source))
    return NonlinearEnergy.from_spec(source)


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive of ``hi`` up to rounding) or comma-separated values."""
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError("need lo <= hi and step > 0")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return lo + step * np.arange(n)
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError as exc:
        raise InputError(f"bad range {text!r}: {exc}") from None


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise InputError(f"bad vector {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Commands


def cmd_pressure(args, out) -> None:
    model = load_model(args.model)
    if args.y:
        Y = np.array([parse_vector(t) for t in args.y])
    else:
        Y = parse_range(args.y_range)[:, None]
    if Y.shape[1] != model.d:
        raise InputError(f"dual parameters need {model.d} components")
    b = solve_batch(model, Y)
    d = model.d
    if args.format == "csv":
        header = [f"y_{j + 1}" for j in range(d)] + ["pressure"] + [f"z_{j + 1}" for j in range(d)] + ["entropy"]
        rows = [list(Y[i]) + [b.pressure[i]] + list(b.z[i]) + [b.entropy[i]] for i in range(len(Y))]
        write_csv(out, header, rows)
    else:
        out.write(dump_text([
            {"y": Y[i], "pressure": b.pressure[i], "z": b.z[i], "entropy": b.entropy[i]} for i in range(len(Y))
        ]) + "\n")


def cmd_diagram(args, out) -> None:
    model = load_model(args.model)
    points = [int(t) for t in str(args.grid).split(",")]
    grid: dict = {"points": points[0] if len(points) == 1 else points}
    if args.range:
        grid["ranges"] = [tuple(float(v) for v in r.split(":")) for r in args.range]
    table = diagram(model, grid)
    d = model.d
    if args.format == "csv":
        header = [f"z_{j + 1}" for j in range(d)] + ["h"] + [f"grad_{j + 1}" for j in range(d)] + ["status"]
        write_csv(out, header, [list(r.z) + [r.h] + list(r.grad_h) + [r.status] for r in table.rows])
    else:
        out.write(dump_text({
            "grid": table.grid_spec,
            "rows": [{"z": r.z, "h": r.h, "grad_h": r.grad_h, "status": r.status} for r in table.rows],
        }) + "\n")


def cmd_equilibria(args, out) -> None:
    model = load_model(args.model)
    report = nl_pressure(model, load_energy(args.energy), starts_per_axis=args.starts_per_axis)
    if args.format == "csv":
        d = model.d
        header = (["index"] + [f"z_{j + 1}" for j in range(d)] + [f"y_{j + 1}" for j in range(d)]
                  + ["entropy", "pressure", "on_boundary"])
        boundary = {tuple(v) for v in (b.tolist() for b in report.boundary_values)}
        rows = [[i] + list(z) + list(y) + [m.entropy, report.pressure, "true" if tuple(z.tolist()) in boundary else "false"]
                for i, (z, y, m) in enumerate(zip(report.values, report.duals, report.measures))]
        write_csv(out, header, rows)
    else:
        out.write(dump_text(report.to_dict()) + "\n")


def cmd_gibbs(args, out) -> None:
    model = load_model(args.model)
    ns = [int(v) for v in parse_range(args.n)]
    rows = convergence_table(model, load_energy(args.energy), ns)
    d = model.d
    if args.format == "csv":
        header = ["n", "log_zeta_over_n", "gap"] + [f"ensemble_mean_{j + 1}" for j in range(d)] + ["dist_to_hull_V"]
        write_csv(out, header, [[r.n, r.log_zeta_over_n, r.gap] + list(r.ensemble_mean) + [r.dist_to_hull_V]
                                for r in rows])
    else:
        out.write(dump_text([vars(r) for r in rows]) + "\n")


def _event_records(result) -> list[dict]:
    return [{"kind": e.kind, "beta": e.beta, "evidence": e.evidence} for e in result.events]


def cmd_scan(args, out) -> None:
    model = load_model(args.model)
    betas = parse_range(args.beta_range)
    result = scan(model, load_energy(args.energy), betas, refine=not args.no_refine,
                  starts_per_axis=args.starts_per_axis)
    ids = result.branch_ids
    if args.format == "csv":
        header = (["beta", "pressure", "count"] + [f"branch_z_{b}" for b in ids]
                  + [f"branch_g_{b}" for b in ids] + ["global_branch_index"])
        rows = []
        for i, beta in enumerate(result.betas):
            by_id = {p.branch: p for p in result.value_branches[i]}
            zs = [";".join(fmt(v) for v in by_id[b].z) if b in by_id else "" for b in ids]
            gs = [fmt(by_id[b].g) if b in by_id else "" for b in ids]
            rows.append([beta, result.pressures[i], result.counts[i]] + zs + gs + [int(result.global_branch[i])])
        write_csv(out, header, rows)
        events = dump_text(_event_records(result)) + "\n"
        if args.events:
            with open(args.events, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(events)
        else:
            sys.stderr.write(events)
    else:
        out.write(dump_text({
            "betas": result.betas,
            "pressures": result.pressures,
            "counts": result.counts,
            "global_branch": result.global_branch,
            "branches": [[{"branch": p.branch, "z": p.z, "g": p.g, "is_global": p.is_global}
                          for p in row] for row in result.value_branches],
            "events": _event_records(result),
        }) + "\n")


def cmd_freezing(args, out) -> None:
    model = load_model(args.model)
    beta0, ground, verdict = detect_freezing(model, load_energy(args.energy), args.beta_max)
    if args.format == "csv":
        write_csv(out, ["beta_0", "ground_value", "frozen"], [[beta0, ground[0], "true" if verdict["frozen"] else "false"]])
    else:
        out.write(dump_text({"beta_0": beta0, "ground_value": ground, "verdict": verdict}) + "\n")


def cmd_potts(args, out) -> None:
    s = potts_magnetization(args.n, args.beta)
    z = potts_ordered_value(args.n, s)
    if args.format == "csv":
        write_csv(out, ["n", "beta", "beta_c", "s"] + [f"z_{j + 1}" for j in range(args.n)],
                  [[args.n, args.beta, potts_critical_beta(args.n), s] + list(z)])
    else:
        out.write(dump_text({"n": args.n, "beta": args.beta, "beta_c": potts_critical_beta(args.n),
                             "s": s, "value": z}) + "\n")


HANDLERS = {
    "pressure": cmd_pressure,
    "entropy-diagram": cmd_diagram,
    "equilibria": cmd_equilibria,
    "gibbs": cmd_gibbs,
    "scan": cmd_scan,
    "freezing": cmd_freezing,
    "potts": cmd_potts,
}
DEFAULT_FORMAT = {"equilibria": "text", "freezing": "text"}


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermoform", description="Nonlinear thermodynamic formalism on shifts of finite type.")
    parser.add_argument("--config", help="YAML or JSON file with option values (flags override it)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, model=True, energy=False):
        p.add_argument("--output", "-o", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "text"), help="report format")
        if model:
            p.add_argument("--model", help="model file or builtin:<name>")
            p.add_argument("--export-model", help="also write the model as JSON to this path")
        if energy:
            p.add_argument("--energy", help="inline energy (e.g. quadratic:2), JSON text, or a file")

    p = sub.add_parser("pressure", help="linear pressure and equilibrium statistics")
    common(p)
    p.add_argument("--y", action="append", help="dual parameter, comma separated; repeatable")
    p.add_argument("--y-range", default="-3:3:0.5", help="lo:hi:step grid for one potential")

    p = sub.add_parser("entropy-diagram", help="entropy function on a grid")
    common(p)
    p.add_argument("--grid", default="101", help="points per axis, e.g. 101 or 41,41")
    p.add_argument("--range", action="append", help="lo:hi for one axis; repeat per axis")

    p = sub.add_parser("equilibria", help="nonlinear pressure and equilibrium values")
    common(p, energy=True)
    p.add_argument("--starts-per-axis", type=int, help="multi-start grid density")

    p = sub.add_parser("gibbs", help="exact partition functions and Gibbs ensembles")
    common(p, energy=True)
    p.add_argument("--n", default="100,500,2000", help="word lengths, comma separated or lo:hi:step")

    p = sub.add_parser("scan", help="transitions along beta * energy")
    common(p, energy=True)
    p.add_argument("--beta-range", help="lo:hi:step or comma-separated betas")
    p.add_argument("--events", help="write event records here (default: stderr) in CSV mode")
    p.add_argument("--no-refine", action="store_true", help="skip bisection refinement of events")
    p.add_argument("--starts-per-axis", type=int, help="multi-start grid density")

    p = sub.add_parser("freezing", help="freezing threshold of a family")
    common(p, energy=True)
    p.add_argument("--beta-max", type=float, help="largest beta used in the verdict")

    p = sub.add_parser("potts", help="ordered-phase magnetisation of the Potts example")
    common(p, model=False)
    p.add_argument("--n", type=int, default=3, help="number of letters")
    p.add_argument("--beta", type=float, help="inverse temperature")
    return parser


REQUIRED = {
    "pressure": ("model",),
    "entropy-diagram": ("model",),
    "equilibria": ("model", "energy"),
    "gibbs": ("model", "energy"),
    "scan": ("model", "energy", "beta_range"),
    "freezing": ("model", "energy", "beta_max"),
    "potts": ("beta",),
}


NUMERIC_OPTIONS = {"beta": float, "beta_max": float, "starts_per_axis": int}


def _merge_config(args: argparse.Namespace, config: dict) -> None:
    """Fill options not given on the command line from the config mapping."""
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "command":
            continue
        if not hasattr(args, dest):
            raise InputError(f"unknown config key {key!r} for command {args.command}")
        if getattr(args, dest) not in (None, False):
            continue
        if dest in ("y", "range"):
            value = [str(v) for v in (value if isinstance(value, list) else [value])]
        elif dest in NUMERIC_OPTIONS or (dest == "n" and args.command == "potts"):
            value = NUMERIC_OPTIONS.get(dest, int)(value)
        elif isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif not isinstance(value, bool):
            value = str(value)
        setattr(args, dest, value)


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    """Parse ``argv``, run the command and return the exit status."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    try:
        config: dict = {}
        if "--config" in argv:
            i = argv.index("--config")
            if i + 1 >= len(argv):
                raise InputError("--config needs a path")
            path = argv[i + 1]
            if not os.path.exists(path):
                raise InputError(f"config file {path!r} does not exist")
            config = load_structured(path) or {}
            if not isinstance(config, dict):
                raise InputError("config file must hold a mapping")
            argv = argv[:i] + argv[i + 2:]
            if not any(a in COMMANDS for a in argv) and "command" in config:
                argv = [str(config["command"])] + argv
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.command is None:
            parser.print_usage(sys.stderr)
            sys.stderr.write("thermoform: error: a command is required\n")
            return EXIT_INPUT
        _merge_config(args, config)
        for name in REQUIRED[args.command]:
            if getattr(args, name, None) is None:
                raise InputError(f"--{name.replace('_', '-')} is required for {args.command}")
        if args.format is None:
            args.format = DEFAULT_FORMAT.get(args.command, "csv")
        if getattr(args, "export_model", None):
            model = load_model(args.model)
            with open(args.export_model, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(dump_text(model.to_dict()) + "\n")
        buf = io.StringIO()
        HANDLERS[args.command](args, buf)
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(buf.getvalue())
        else:
            stdout.write(buf.getvalue())
        return 0
    except (InputError, FileNotFoundError, json.JSONDecodeError, yaml.YAMLError) as exc:
        sys.stderr.write(f"thermoform: input error: {exc}\n")
        return EXIT_INPUT
    except BudgetError as exc:
        sys.stderr.write(f"thermoform: budget exceeded: {exc}\n")
        return EXIT_BUDGET
    except NumericalError as exc:
        sys.stderr.write(f"thermoform: numerical failure: {exc}\n")
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
