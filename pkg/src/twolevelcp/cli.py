"""Command-line front end.

Every subcommand writes one output (stdout or ``--out``) that starts with a
header carrying the tool version, the resolved configuration and the seed.
Output is a pure function of the flags: no timestamps, replicate order fixed,
progress only on stderr.

Exit codes: 0 success, 2 invalid input, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import secrets
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .events import Rates, generate_log
from .lattice import Configuration, Site, Window

TOOL = "twolevelcp"


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_sites(text: str, dim: int) -> list[Site]:
    """"x1,..,xd;x1,..,xd" -> list of sites; an empty string is the empty set."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            site = tuple(int(v) for v in chunk.split(","))
        except ValueError as e:
            raise ValidationError(f"bad site {chunk!r}") from e
        if len(site) != dim:
            raise ValidationError(f"site {chunk!r} has {len(site)} coordinates, expected {dim}")
        out.append(site)
    return out


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as e:
        raise ValidationError(f"bad number list {text!r}") from e


def _positive(name: str, v: float, allow_zero: bool = False) -> None:
    if not math.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        raise ValidationError(f"--{name} must be {'nonnegative' if allow_zero else 'positive'}, got {v}")


def _seed_arg(text: str) -> str:
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer or 'auto', got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return text


def _common(p: argparse.ArgumentParser, seed: bool = True, fmt: str = "json") -> None:
    if seed:
        p.add_argument("--seed", type=_seed_arg, required=True, help="integer seed, or 'auto' for system entropy")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=fmt)
    p.add_argument("--config", type=Path, default=None, help="key=value file; flags override it")


def _rates(p: argparse.ArgumentParser, lam=None, mu=None, delta=None) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=lam is None, default=lam)
    p.add_argument("--mu", type=float, required=mu is None, default=mu)
    p.add_argument("--delta", type=float, required=delta is None, default=delta)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=TOOL, description="Two-level contact process toolkit")
    ap.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward run from burned-in animals and a flea set")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--truncation", type=int, default=None)
    _rates(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--burn-in", type=float, default=10.0)
    p.add_argument("--fleas", default=None, help="flea sites 'x,..;x,..' (default: the origin)")
    _common(p, fmt="csv")

    p = sub.add_parser("dual-check", help="Monte Carlo check of the duality identity")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--radius", type=int, required=True)
    _rates(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--C", required=True)
    p.add_argument("--D", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--burn-in", type=float, default=10.0)
    _common(p)

    p = sub.add_parser("block-estimate", help="block events, boundary counts and path diagnostics")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=1)
    _rates(p)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--burn-in", type=float, default=10.0)
    p.add_argument("--dual-anchor", type=float, default=None, help="also estimate the dual block events")
    _common(p)

    p = sub.add_parser("op-compare", help="oriented percolation edges and densities")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--log-rows", default=None, help="rows to report (default: the last)")
    _common(p, fmt="csv")

    p = sub.add_parser("oracle-check", help="exact transient law on a k-site line")
    p.add_argument("--k", type=int, required=True)
    _rates(p, lam=1.0, mu=1.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--init", default=None, help="site states as digits, e.g. 313 (default all 3)")
    p.add_argument("--reps", type=int, default=0, help="also compare a Monte Carlo histogram")
    p.add_argument("--seed", type=_seed_arg, default=None)
    _common(p, seed=False, fmt="csv")

    p = sub.add_parser("converge", help="factorization test for complete convergence")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--radius", type=int, required=True)
    _rates(p)
    p.add_argument("--B", required=True)
    p.add_argument("--D", required=True)
    p.add_argument("--t-grid", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--burn-in", type=float, default=10.0)
    p.add_argument("--speed", type=float, default=2.0, help="padding speed c in radius >= diam/2 + c t_max")
    p.add_argument("--csv-out", type=Path, default=None, help="also write the CSV table here")
    _common(p)

    p = sub.add_parser("scan", help="thinning-coupled survival curve in mu")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--mu-grid", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--cube", type=int, default=0)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--burn-in", type=float, default=10.0)
    _common(p)
    return ap


def read_config(path: Path) -> list[str]:
    """Flat key=value file -> argv tokens (placed before the real flags)."""
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ValidationError(f"cannot read config file {path}: {e}") from e
    argv = []
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() == "true":
            argv.append(flag)
        elif value.lower() != "false":
            argv += [flag, value]
    return argv


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a path")
        cfg = read_config(Path(argv[i + 1]))
        argv = argv[:1] + cfg + argv[1:]
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# output


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"out", "config", "format", "csv_out"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip or k == "threads":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def header(args: argparse.Namespace) -> dict:
    return {"tool": TOOL, "version": __version__, "command": args.command, "seed": args.seed, "config": _config_dict(args)}


def render_csv(args: argparse.Namespace, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# {TOOL} {__version__}\n")
    buf.write(f"# config={json.dumps(header(args)['config'], separators=(',', ':'))}\n")
    buf.write(f"# seed={args.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def render_json(args: argparse.Namespace, result) -> str:
    return json.dumps(_jsonable({"header": header(args), "result": result}), indent=2) + "\n"


def emit(args: argparse.Namespace, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def _window(args) -> Window:
    if args.dim < 1:
        raise ValidationError("--dim must be >= 1")
    if args.radius < 0:
        raise ValidationError("--radius must be >= 0")
    trunc = getattr(args, "truncation", None)
    return Window.centered(args.dim, args.radius, trunc)


def _reps(args) -> None:
    if args.reps < 1:
        raise ValidationError("--reps must be >= 1")


def cmd_simulate(args) -> str:
    from .simulate import burn_in_animals, run_forward

    w = _window(args)
    _positive("horizon", args.horizon)
    _positive("burn-in", args.burn_in)
    rates = Rates(args.lam, args.mu, args.delta)
    fleas = parse_sites(args.fleas, args.dim) if args.fleas is not None else [(0,) * args.dim]
    for s in fleas:
        if not w.contains(s):
            raise ValidationError(f"flea site {s} outside the window")
    log = generate_log(w, (-args.burn_in, args.horizon), rates, args.seed)
    start = burn_in_animals(log).with_fleas_on(fleas)
    traj = run_forward(log, start, 0.0, args.horizon)
    if args.format == "json":
        res = traj.summary()
        res["initial_animals"] = int(start.animal_mask.sum())
        return render_json(args, res)
    rows = [r.split(",") for r in traj.to_csv().splitlines()[1:]]
    return render_csv(args, ["time", "site", "old_state", "new_state", "direction"], rows)


def cmd_dual_check(args) -> str:
    from .dual import check_duality_distributional

    w = _window(args)
    _reps(args)
    _positive("t", args.t, allow_zero=True)
    rates = Rates(args.lam, args.mu, args.delta)
    sets = [parse_sites(getattr(args, k), args.dim) for k in ("B", "C", "D")]
    lhs, rhs = check_duality_distributional(w, rates, *sets, args.t, args.reps, args.seed, args.burn_in)
    res = {"lhs": lhs.to_dict(), "rhs": rhs.to_dict(), "overlap": lhs.overlaps(rhs)}
    if args.format == "csv":
        return render_csv(args, ["side", "p", "ci_low", "ci_high", "reps"],
                          [[s, e.point, e.ci_low, e.ci_high, e.reps] for s, e in (("lhs", lhs), ("rhs", rhs))])
    return render_json(args, res)


def cmd_block_estimate(args) -> str:
    from .blocks import BlockSpec, estimate_blocks
    from .experiments import dual_block_estimate

    _reps(args)
    spec = BlockSpec(args.n, args.L, args.T, args.epsilon)
    rates = Rates(args.lam, args.mu, args.delta)
    res = estimate_blocks(spec, rates, args.dim, args.reps, args.seed, args.burn_in, args.threads)
    if args.dual_anchor is not None:
        a, b = dual_block_estimate(spec, rates, args.dim, args.dual_anchor, args.reps, args.seed, None,
                                   args.burn_in, args.threads)
        res["dual"] = {"event_A": a.to_dict(), "event_B": b.to_dict()}
    if args.format == "csv":
        rows = [[k, res[k]["p"], res[k]["ci"][0], res[k]["ci"][1]] for k in ("event_A", "event_B")]
        return render_csv(args, ["event", "p", "ci_low", "ci_high"], rows)
    return render_json(args, res)


def cmd_op_compare(args) -> str:
    from .opercolation import compare_rows

    _reps(args)
    if not 0 <= args.p <= 1:
        raise ValidationError("--p must lie in [0, 1]")
    if args.rows < 1:
        raise ValidationError("--rows must be >= 1")
    log_rows = [int(v) for v in parse_floats(args.log_rows)] if args.log_rows else [args.rows]
    if any(not 0 <= n <= args.rows for n in log_rows):
        raise ValidationError("--log-rows must lie in [0, rows]")
    recs = compare_rows(args.p, args.rows, args.reps, args.seed, log_rows, args.threads)
    if args.format == "json":
        return render_json(args, recs)
    rows = [[r["rep"], r["died_at"], q["row"], q["l_n"], q["r_n"], q["density"]] for r in recs for q in r["rows"]]
    return render_csv(args, ["rep", "died_at", "row", "l_n", "r_n", "density"], rows)


def cmd_oracle_check(args) -> str:
    from .oracle import build_generator, total_variation, transient_distribution
    from .simulate import empirical_distribution

    if not 1 <= args.k <= 8:
        raise ValidationError("--k must lie in 1..8")
    _positive("t", args.t, allow_zero=True)
    w = Window.line(args.k)
    rates = Rates(args.lam, args.mu, args.delta)
    init = args.init if args.init is not None else "3" * args.k
    if len(init) != args.k or any(c not in "0123" for c in init):
        raise ValidationError(f"--init must be {args.k} digits in 0..3")
    start = Configuration(w, [int(c) for c in init])
    gen = build_generator(w, rates)
    exact = transient_distribution(gen, start, args.t)
    emp = None
    if args.reps:
        if args.seed is None:
            raise ValidationError("--seed is required with --reps")
        emp = empirical_distribution(w, rates, start, [args.t], args.reps, args.seed)[0]
    labels = ["".join(str(int(d)) for d in gen.digits[c]) for c in range(gen.n_states)]
    if args.format == "json":
        res = {"states": labels, "exact": exact.tolist()}
        if emp is not None:
            res["empirical"] = emp.tolist()
            res["tv"] = total_variation(exact, emp)
        return render_json(args, res)
    cols = ["code", "state", "exact"] + (["empirical"] if emp is not None else [])
    rows = [[c, labels[c], float(exact[c])] + ([float(emp[c])] if emp is not None else []) for c in range(gen.n_states)]
    return render_csv(args, cols, rows)


def cmd_converge(args) -> str:
    from .experiments import convergence_test

    w = _window(args)
    _reps(args)
    rates = Rates(args.lam, args.mu, args.delta)
    t_grid = parse_floats(args.t_grid)
    rep = convergence_test(w, rates, parse_sites(args.B, args.dim), parse_sites(args.D, args.dim),
                           t_grid, args.reps, args.seed, args.burn_in, args.speed, args.threads)
    table = [row.split(",") for row in rep.to_csv().splitlines()]
    csv_text = render_csv(args, table[0], table[1:])
    if args.csv_out is not None:
        args.csv_out.write_text(csv_text)
    if args.format == "csv":
        return csv_text
    return render_json(args, rep.to_dict())


def cmd_scan(args) -> str:
    from .experiments import survival_scan

    w = _window(args)
    _reps(args)
    _positive("horizon", args.horizon)
    curve = survival_scan(parse_floats(args.mu_grid), args.lam, args.delta, w, args.horizon, args.reps,
                          args.seed, args.cube, args.burn_in, args.threads)
    if args.format == "csv":
        rows = [[m, e.point, e.ci_low, e.ci_high, e.reps] for m, e in zip(curve.mu_grid, curve.estimates)]
        return render_csv(args, ["mu", "p", "ci_low", "ci_high", "reps"], rows)
    return render_json(args, curve.to_dict())


COMMANDS = {
    "simulate": cmd_simulate,
    "dual-check": cmd_dual_check,
    "block-estimate": cmd_block_estimate,
    "op-compare": cmd_op_compare,
    "oracle-check": cmd_oracle_check,
    "converge": cmd_converge,
    "scan": cmd_scan,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except ValidationError as e:
        print(f"{TOOL}: error: {e}", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) == "auto":
        args.seed = secrets.randbits(63)
        print(f"{TOOL}: seed={args.seed}", file=sys.stderr)
    elif getattr(args, "seed", None) is not None:
        args.seed = int(args.seed)
    if args.threads < 1:
        print(f"{TOOL}: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        text = COMMANDS[args.command](args)
    except ValueError as e:
        print(f"{TOOL}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"{TOOL}: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    emit(args, text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
