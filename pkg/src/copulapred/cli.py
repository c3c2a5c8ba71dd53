"""Command-line interface.

Subcommands: ``fit``, ``quantiles``, ``simulate``, ``verify``.

Exit codes: 0 success, 1 domain or validation error, 2 verification failure.

Snapshot format (univariate), CSV with a commented header::

    # copulapred-snapshot 1
    # rho=<float>
    # weight_a=<float>
    # count=<int>
    # clamp_eps=<float>
    # init=<init spec>
    # tail_hits=<int>
    # grid=<lo>,<hi>,<m>
    grid_point,cdf,density
    <17 significant digits per field>

Bivariate snapshots carry ``grid_y`` and ``grid_x`` instead of ``grid`` and
the columns ``y,x,cdf,density``. Files written with ``--out`` are
accompanied by ``<out>.manifest.json`` recording the command, the fully
resolved configuration, the seed, a SHA-256 digest of the input and the
tool version.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import estimator as est
from .eval import DEFAULT_QS, SimulationDesign, run_batch_study, run_sequential_study, summarize
from .verify import SUITES, run_suite

EXIT_OK, EXIT_ERROR, EXIT_VERIFY = 0, 1, 2

SNAPSHOT_MAGIC = "copulapred-snapshot 1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(x) -> str:
    return repr(float(x))


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> est.GridSpec:
    try:
        return est.GridSpec.parse(text)
    except (ValueError, est.ConfigurationError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _init(text: str) -> str:
    # a bare "eb-normal" takes its variance from --init-var
    if text.strip() == "eb-normal":
        return "eb-normal"
    try:
        return str(est.InitSpec.parse(text))
    except est.ConfigurationError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _resolve_init(args) -> est.InitSpec:
    if args.init == "eb-normal":
        return est.InitSpec.eb_normal(args.init_var if args.init_var is not None else 1.0)
    if args.init_var is not None:
        raise UsageError("--init-var applies only to a bare '--init eb-normal'")
    return est.InitSpec.parse(args.init)


def _add_estimator_flags(p: argparse.ArgumentParser, default_init: str = "normal:0,1") -> None:
    p.add_argument("--rho", type=float, default=0.95, help="copula correlation (default: %(default)s)")
    p.add_argument("--weight-a", type=float, default=1.0,
                   help="weight constant a in alpha_n = a/(n+1) (default: %(default)s)")
    p.add_argument("--clamp-eps", type=float, default=1e-10,
                   help="cdf clamp before the normal quantile (default: %(default)s)")
    p.add_argument("--init", type=_init, default=default_init,
                   help="initial guess normal:m,v | cauchy:l,s | eb-normal:v (default: %(default)s)")
    p.add_argument("--init-var", type=float, default=None,
                   help="variance for a bare '--init eb-normal' (default: 1)")
    p.add_argument("--coverage", type=float, default=None,
                   help="allowed P0 mass outside the grid (default: 1e-6, or 1e-3 for cauchy)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")


def _config(args) -> est.EstimatorConfig:
    return est.EstimatorConfig(rho=args.rho, weight_a=args.weight_a, clamp_eps=args.clamp_eps,
                               init=_resolve_init(args), coverage=args.coverage)


def _config_dict(cfg: est.EstimatorConfig) -> dict:
    return dict(rho=cfg.rho, weight_a=cfg.weight_a, clamp_eps=cfg.clamp_eps, init=str(cfg.init),
                coverage=cfg.coverage_bound)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="copulapred", description=__doc__.split("\n")[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fold a data stream into a predictive snapshot")
    p.add_argument("input", nargs="?", default="-", help="data file, one value per line ('-' = stdin)")
    p.add_argument("-o", "--out", required=True, help="snapshot path")
    p.add_argument("--grid", type=_grid, default=None,
                   help="lo,hi,m (default: data mean +/- 10 sd, 1024 points)")
    p.add_argument("--grid-x", type=_grid, default=None, help="x-margin grid for --bivariate")
    p.add_argument("--permutations", type=int, default=0,
                   help="average over this many random orderings (0 = input order)")
    p.add_argument("--q", type=_float_list, default=list(DEFAULT_QS), help="quantiles for the summary")
    p.add_argument("--bivariate", action="store_true", help="input lines are 'y,x' pairs")
    _add_estimator_flags(p)

    p = sub.add_parser("quantiles", help="quantiles of a univariate snapshot")
    p.add_argument("snapshot")
    p.add_argument("--q", type=_float_list, default=list(DEFAULT_QS))

    p = sub.add_parser("simulate", help="replicate the check-loss simulation studies")
    p.add_argument("--mode", choices=("batch", "sequential"), default="batch")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--n", type=int, default=50, help="observations per trial")
    p.add_argument("--q", type=_float_list, default=None,
                   help="quantile levels (default: full vector for batch, 0.1 for sequential)")
    p.add_argument("--prime", type=int, default=4, help="priming observations (sequential)")
    p.add_argument("--oracle-mc", type=int, default=100_000, help="Monte Carlo draws (batch)")
    p.add_argument("--weight-on", choices=("fixed", "random"), default="fixed",
                   help="which mixture component the Beta(2,2) weight applies to")
    p.add_argument("--grid", type=_grid, default=None, help="lo,hi,m (default: -500,500,20001)")
    p.add_argument("-o", "--out", default=None, help="per-trial CSV path")
    _add_estimator_flags(p, default_init="cauchy:0,1")

    p = sub.add_parser("verify", help="run identity checks")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# io helpers

def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def parse_observations(raw: bytes, width: int = 1) -> np.ndarray:
    """One value (or ``width`` comma-separated values) per line; '#' starts a comment."""
    rows = []
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            if len(fields) != width:
                raise ValueError
            vals = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"line {lineno}: cannot parse {line!r}") from None
        if not all(np.isfinite(vals)):
            raise ValueError(f"line {lineno}: non-finite value {line!r}")
        rows.append(vals)
    if not rows:
        raise UsageError("no observations in input")
    arr = np.array(rows, dtype=np.float64)
    return arr[:, 0] if width == 1 else arr


def write_manifest(out: str | Path, command: str, config: dict, seed, digest: str | None) -> None:
    manifest = dict(command=command, config=config, seed=seed, input_sha256=digest,
                    version=__version__)
    Path(f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_snapshot(path: str | Path, state: est.GridDistribution, cfg: est.EstimatorConfig) -> None:
    dens = est.density(state)
    buf = io.StringIO()
    buf.write(f"# {SNAPSHOT_MAGIC}\n")
    for key, val in (("rho", cfg.rho), ("weight_a", cfg.weight_a), ("count", state.count),
                     ("clamp_eps", cfg.clamp_eps), ("init", cfg.init),
                     ("tail_hits", state.tail_hits), ("grid", state.grid)):
        buf.write(f"# {key}={val}\n")
    buf.write("grid_point,cdf,density\n")
    for y, c, d in zip(state.points, state.cdf, dens):
        buf.write(f"{fmt(y)},{fmt(c)},{fmt(d)}\n")
    Path(path).write_text(buf.getvalue())


def write_bivariate_snapshot(path, state: est.BivariateGridDistribution, cfg) -> None:
    dens = est.bivariate_density(state)
    buf = io.StringIO()
    buf.write(f"# {SNAPSHOT_MAGIC}\n")
    for key, val in (("rho", cfg.rho), ("weight_a", cfg.weight_a), ("count", state.count),
                     ("clamp_eps", cfg.clamp_eps), ("init", cfg.init),
                     ("tail_hits", state.tail_hits), ("grid_y", state.grid_y),
                     ("grid_x", state.grid_x)):
        buf.write(f"# {key}={val}\n")
    buf.write("y,x,cdf,density\n")
    ys, xs = state.grid_y.points, state.grid_x.points
    for j, y in enumerate(ys):
        for k, x in enumerate(xs):
            buf.write(f"{fmt(y)},{fmt(x)},{fmt(state.cdf[j, k])},{fmt(dens[j, k])}\n")
    Path(path).write_text(buf.getvalue())


def read_snapshot(path: str | Path) -> tuple[est.GridDistribution, dict]:
    header: dict[str, str] = {}
    lines = Path(path).read_text().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                header[key.strip()] = val.strip()
            continue
        body_start = i
        break
    if "grid" not in header:
        raise ValueError(f"{path}: not a univariate snapshot (no grid header)")
    grid = est.GridSpec.parse(header["grid"])
    rows = list(csv.reader(lines[body_start + 1:]))
    cdf = np.array([float(r[1]) for r in rows if r])
    state = est.GridDistribution(grid, cdf, int(header.get("count", 0)),
                                 int(header.get("tail_hits", 0)))
    return state, header


def _write_rows(stream, fieldnames, rows) -> None:
    w = csv.DictWriter(stream, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (fmt(v) if isinstance(v, float) else v) for k, v in r.items()})


_VALUE_FLAGS = ("--grid", "--grid-x", "--q", "--init")


def _join_negative_values(argv):
    """Rewrite ``--grid -8,8,1001`` as ``--grid=-8,8,1001``.

    argparse otherwise reads a value that starts with '-' as an option.
    """
    argv = list(argv)
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and len(argv[i + 1]) > 1 and (argv[i + 1][1].isdigit() or argv[i + 1][1] == "."):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_fit(args, out) -> int:
    cfg = _config(args)
    if args.permutations < 0:
        raise ValueError("--permutations must be >= 0")
    raw = _read_input(args.input)
    digest = hashlib.sha256(raw).hexdigest()
    if args.bivariate:
        return _fit_bivariate(args, cfg, raw, digest, out)
    streaming = (args.grid is not None and args.permutations == 0
                 and cfg.init.kind != "eb-normal")
    if streaming:
        # O(grid) memory: parse and absorb line by line
        state = est.init(args.grid, cfg)
        for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                y = float(text)
            except ValueError:
                raise ValueError(f"line {lineno}: cannot parse {line!r}") from None
            state = est.update(state, y, cfg)
        if state.count == 0:
            raise UsageError("no observations in input")
    else:
        ys = parse_observations(raw)
        grid = args.grid or est.default_grid(cfg, ys)
        state = est.fit_sequence(ys, grid, cfg, args.permutations, args.seed)
    write_snapshot(args.out, state, cfg)
    write_manifest(args.out, "fit", dict(_config_dict(cfg), grid=str(state.grid),
                                         permutations=args.permutations, q=args.q),
                   args.seed, digest)
    rows = [dict(statistic="count", q="", value=state.count),
            dict(statistic="tail_hits", q="", value=state.tail_hits),
            dict(statistic="mean", q="", value=est.mean(state))]
    status = EXIT_OK
    for q in args.q:
        try:
            rows.append(dict(statistic="quantile", q=fmt(q), value=est.quantile(state, q)))
        except est.QuantileRangeError as e:
            rows.append(dict(statistic="quantile", q=fmt(q), value=f"error: {e}"))
            status = EXIT_ERROR
    _write_rows(out, ["statistic", "q", "value"], rows)
    return status


def _fit_bivariate(args, cfg, raw, digest, out) -> int:
    data = parse_observations(raw, width=2)
    ys, xs = data[:, 0], data[:, 1]
    grid_y = args.grid or est.default_grid(cfg, ys, m=128)
    grid_x = args.grid_x or est.default_grid(cfg, xs, m=128)
    state = est.bivariate_fit_sequence(ys, xs, grid_y, grid_x, cfg, args.permutations, args.seed)
    write_bivariate_snapshot(args.out, state, cfg)
    write_manifest(args.out, "fit", dict(_config_dict(cfg), grid_y=str(grid_y), grid_x=str(grid_x),
                                         permutations=args.permutations, bivariate=True),
                   args.seed, digest)
    rows = [dict(statistic="count", value=state.count),
            dict(statistic="tail_hits", value=state.tail_hits),
            dict(statistic="monotonicity_violations", value=est.monotonicity_violations(state))]
    _write_rows(out, ["statistic", "value"], rows)
    return EXIT_OK


def cmd_quantiles(args, out) -> int:
    state, _ = read_snapshot(args.snapshot)
    rows, status = [], EXIT_OK
    for q in args.q:
        try:
            rows.append(dict(q=fmt(q), action=est.quantile(state, q), error=""))
        except est.QuantileRangeError as e:
            rows.append(dict(q=fmt(q), action="", error=str(e)))
            status = EXIT_ERROR
    _write_rows(out, ["q", "action", "error"], rows)
    return status


def cmd_simulate(args, out) -> int:
    cfg = _config(args)
    grid = args.grid or est.GridSpec(-500.0, 500.0, 20001)
    design = SimulationDesign(n_obs=args.n, n_trials=args.trials, oracle_mc=args.oracle_mc,
                              seed=args.seed, w_on_fixed=args.weight_on == "fixed")
    sequential = args.mode == "sequential"
    if sequential:
        qs = args.q or [0.1]
        if design.n_obs <= args.prime:
            raise ValueError(f"--n must exceed --prime ({args.prime})")
        rows = [r for q in qs for r in run_sequential_study(design, q, args.prime, grid, cfg)]
    else:
        qs = args.q or list(DEFAULT_QS)
        rows = run_batch_study(design, qs, grid, cfg)
    fields = ["trial", "q", "delta_q", "loss_rec", "loss_base", "loss_truth"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _write_rows(fh, fields, rows)
        write_manifest(args.out, f"simulate --mode {args.mode}",
                       dict(_config_dict(cfg), grid=str(grid), trials=args.trials, n=args.n,
                            q=qs, prime=args.prime, oracle_mc=args.oracle_mc,
                            weight_on=args.weight_on),
                       args.seed, None)
    agg = summarize(rows, sequential=sequential)
    agg_fields = ["q", "n", "mean", "median", "sd"] + (["pr_negative"] if sequential else [])
    _write_rows(out, agg_fields, agg)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    rows, ok = [], True
    for s in suites:
        for c in run_suite(s, args.seed):
            ok &= c.passed
            rows.append(dict(suite=s, check=c.name, measured=c.measured,
                             comparison=c.comparison, tolerance=c.tolerance,
                             status="pass" if c.passed else "FAIL"))
    _write_rows(out, ["suite", "check", "measured", "comparison", "tolerance", "status"], rows)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = dict(fit=cmd_fit, quantiles=cmd_quantiles, simulate=cmd_simulate, verify=cmd_verify)


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(sys.argv[1:] if argv is None else argv))
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(f"copulapred: usage error: {e}", file=err)
        return EXIT_ERROR
    except (ValueError, OSError) as e:
        print(f"copulapred: error: {e}", file=err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
