"""Command-line driver.

Subcommands::

    coalval generate   synthetic owner datasets to CSV
    coalval distance   coalition distance matrix (sw, ssw, otdd)
    coalval kernel     coalition kernel matrix with an eigenvalue report
    coalval value      hybrid semivalue report
    coalval metrics    MSE / Pearson / Kendall tau between two reports

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from .datasets import Coalition, all_coalitions, load_csv, make_blobs, make_moons, make_moons_validation, save_csv
from .exceptions import CoalvalError, ConfigError, NumericalError
from .kernel import KernelSpec, psd_check
from .pipeline import (
    RunConfig,
    compare_reports,
    make_kernel,
    read_report,
    report_json,
    run_valuation,
)
from .transport import CoalitionDistances, SWParams

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--csv", required=required, help="owner data, one row per point")
    p.add_argument("--target-column", default="target")
    p.add_argument("--owner-column", default="owner")
    p.add_argument("--task", choices=("classification", "regression"), default="classification")


def _load_owners(args):
    return load_csv(args.csv, args.target_column, args.task, args.owner_column)


def _read_coalitions(path: str | None, n: int) -> list[Coalition]:
    """Coalitions from a JSON list of bit patterns or member lists; all non-empty ones if absent."""
    if path is None:
        return all_coalitions(n)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"coalition file {path} is not valid JSON: {exc}") from None
    out = []
    for item in raw:
        c = Coalition(int(item)) if isinstance(item, int) else Coalition.of(item)
        if not c:
            raise ConfigError("coalition list contains the empty coalition")
        if c.bits >> n:
            raise ConfigError(f"coalition {c.bits} names an owner beyond {n - 1}")
        out.append(c)
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# ----------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.generator == "moons":
        owners = make_moons(args.owners, args.points, args.noise, args.seed, args.label_skew)
    else:
        if not args.centers:
            raise ConfigError("blobs need --centers")
        centers = [_floats(c) for c in args.centers.split(";")]
        if args.assignment:
            assignment = [[int(x) for x in a.split(",")] for a in args.assignment.split(";")]
        else:
            assignment = [list(range(len(centers)))] * args.owners
        owners = make_blobs(args.owners, centers, args.spread, assignment, args.points, args.seed)
    save_csv(owners, args.out, args.target_column, args.owner_column)
    if args.validation_out:
        if args.generator != "moons":
            raise ConfigError("--validation-out is only available for moons")
        X, y = make_moons_validation(args.validation_points, args.noise, args.seed + 10_007)
        with open(args.validation_out, "w", encoding="utf-8") as fh:
            fh.write(f"x0,x1,{args.target_column},{args.owner_column}\n")
            for (a, b), t in zip(X.tolist(), y.tolist()):
                fh.write(f"{a!r},{b!r},{int(t)},0\n")
    return 0


def cmd_distance(args) -> int:
    owners = _load_owners(args)
    coalitions = _read_coalitions(args.coalitions, len(owners))
    p = args.p if args.p is not None else (1 if args.metric == "otdd" else 2)
    dist = CoalitionDistances(owners, SWParams(p=p, n_projections=args.projections, seed=args.seed))
    D = dist.distance_matrix(coalitions, coalitions, args.metric, eta=args.eta, p=p)
    keys = [str(c.bits) for c in coalitions]
    _emit(
        {
            "metric": args.metric,
            "p": p,
            "eta": args.eta if args.metric == "ssw" else None,
            "projections": args.projections,
            "seed": args.seed,
            "coalitions": [c.bits for c in coalitions],
            "distances": {a: {b: float(D[i, j]) for j, b in enumerate(keys)} for i, a in enumerate(keys)},
        },
        args.out,
    )
    return 0


def cmd_kernel(args) -> int:
    owners = _load_owners(args) if args.csv else None
    n = len(owners) if owners is not None else args.n_owners
    if n is None:
        raise ConfigError("give --csv or --n-owners")
    coalitions = _read_coalitions(args.coalitions, n)
    spec = KernelSpec(args.family, args.gamma, args.eta, args.rho)
    kern = make_kernel(args.family, owners, n, args.projections, args.seed)
    K = kern(spec, coalitions, coalitions)
    rep = psd_check(K)
    _emit(
        {
            "family": spec.family,
            "gamma": spec.gamma,
            "eta": spec.eta,
            "rho": spec.rho,
            "coalitions": [c.bits for c in coalitions],
            "matrix": K.tolist(),
            "psd": {
                "min_eigenvalue": rep.min_eigenvalue,
                "max_eigenvalue": rep.max_eigenvalue,
                "passed": rep.passed,
            },
        },
        args.out,
    )
    return 0


_VALUE_FLAGS = {
    "utility": "utility",
    "kernel": "kernel",
    "method": "method",
    "semivalue": "semivalue",
    "budget": "budget",
    "actual_fraction": "actual_fraction",
    "active_fraction": "active_fraction",
    "seed": "seed",
    "projections": "n_projections",
    "projection_seed": "projection_seed",
    "n_owners": "n_owners",
    "threads": "threads",
    "out": "output",
    "curve_csv": "curve_csv",
    "curve_steps": "curve_steps",
}


def build_config(args) -> RunConfig:
    """Config file (if any) overlaid with explicitly given flags."""
    d: dict = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    for flag, key in _VALUE_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            d[key] = v
    if args.csv:
        ds = {
            "csv": args.csv,
            "target_column": args.target_column or "target",
            "owner_column": args.owner_column or "owner",
            "task": args.task or "classification",
        }
        if args.validation_csv:
            ds["validation_csv"] = args.validation_csv
        d["dataset"] = ds
    elif any(getattr(args, k) for k in ("target_column", "owner_column", "task", "validation_csv")):
        ds = dict(d.get("dataset", {}))
        for k in ("target_column", "owner_column", "task", "validation_csv"):
            if getattr(args, k):
                ds[k] = getattr(args, k)
        d["dataset"] = ds
    return RunConfig.from_dict(d)


def cmd_value(args) -> int:
    config = build_config(args)
    report = run_valuation(config)
    if not config.output:
        sys.stdout.write(report_json(report))
    return 0


def cmd_metrics(args) -> int:
    a, b = read_report(args.report), read_report(args.reference)
    _emit(compare_reports(a, b), args.out)
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalval", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic owner datasets to CSV")
    g.add_argument("--generator", choices=("moons", "blobs"), default="moons")
    g.add_argument("--owners", type=int, default=6)
    g.add_argument("--points", type=int, default=50, help="points per owner")
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--label-skew", type=float, default=0.0)
    g.add_argument("--centers", help="blobs: class centers as 'x,y;x,y;...'")
    g.add_argument("--spread", type=float, default=0.5)
    g.add_argument("--assignment", help="blobs: classes per owner as '0;1;0,1'")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--target-column", default="target")
    g.add_argument("--owner-column", default="owner")
    g.add_argument("--out", required=True)
    g.add_argument("--validation-out")
    g.add_argument("--validation-points", type=int, default=500)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("distance", help="coalition distance matrix as JSON")
    _add_data_args(d)
    d.add_argument("--metric", choices=("sw", "ssw", "otdd"), default="ssw")
    d.add_argument("--p", type=int, choices=(1, 2))
    d.add_argument("--eta", type=float, default=0.5)
    d.add_argument("--projections", type=int, default=100)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--coalitions", help="JSON list of bit patterns or member lists")
    d.add_argument("--out")
    d.set_defaults(func=cmd_distance)

    k = sub.add_parser("kernel", help="coalition kernel matrix and eigenvalue report")
    _add_data_args(k, required=False)
    k.add_argument("--n-owners", type=int, help="owner count when no --csv is given (binary_rbf)")
    k.add_argument("--coalitions", required=True)
    k.add_argument("--family", choices=("ssw_sq_exp", "ssw_l1_exp", "binary_rbf", "otdd_exp"), default="ssw_sq_exp")
    k.add_argument("--gamma", type=float, default=1.0)
    k.add_argument("--eta", type=float, default=0.5)
    k.add_argument("--rho", type=float, default=1.0)
    k.add_argument("--projections", type=int, default=100)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out")
    k.set_defaults(func=cmd_kernel)

    v = sub.add_parser("value", help="hybrid semivalue report")
    v.add_argument("--config", help="JSON run config; flags override its keys")
    v.add_argument("--csv")
    v.add_argument("--validation-csv")
    v.add_argument("--target-column")
    v.add_argument("--owner-column")
    v.add_argument("--task", choices=("classification", "regression"))
    v.add_argument("--utility", help="knn:K | ridge:LAMBDA | logistic[:STEPS,LR] | table:PATH")
    v.add_argument("--kernel", help="ssw | sw | ssw_sq_exp | ssw_l1_exp | binary_rbf | otdd_exp")
    v.add_argument("--method", choices=("exact", "permutation"))
    v.add_argument("--semivalue", choices=("shapley", "banzhaf"))
    v.add_argument("--budget", type=int, help="coalition budget for permutation sampling")
    v.add_argument("--actual-fraction", type=float)
    v.add_argument("--active-fraction", type=float)
    v.add_argument("--seed", type=int)
    v.add_argument("--projections", type=int)
    v.add_argument("--projection-seed", type=int)
    v.add_argument("--n-owners", type=int)
    v.add_argument("--threads", type=int, help="utility evaluation workers (default: CPU count)")
    v.add_argument("--out")
    v.add_argument("--curve-csv", help="write mean and one-sigma band per owner vs evaluations")
    v.add_argument("--curve-steps", type=int)
    v.set_defaults(func=cmd_value)

    m = sub.add_parser("metrics", help="compare a report against a reference report")
    m.add_argument("report")
    m.add_argument("reference")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"coalval: numerical failure{_where(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CoalvalError, OSError, ValueError, KeyError) as exc:
        print(f"coalval: error{_where(exc)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _where(exc) -> str:
    st = getattr(exc, "stage", None)
    return f" in stage {st}" if st else ""


if __name__ == "__main__":
    sys.exit(main())
