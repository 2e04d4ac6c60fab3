"""Command-line entry point: ``addrate <subcommand> [options]``.

Options come from flags and optionally a config file of ``key = value``
lines under ``[global]`` and per-subcommand sections such as ``[fit]``;
flags win.  Exit status is 0 on success, 1 on invalid input and 2 on an
internal failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
import traceback
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import substream
from .eigenbasis import DomainError, EigenSystem

OUT_DIR_ENV = "ADDRATE_OUT_DIR"


class UsageError(Exception):
    """Bad flags, config or input files; exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _strs(text: str) -> list[str]:
    return [v for v in str(text).replace(" ", "").split(",") if v]


# -- parser ------------------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file with per-subcommand sections")
    common.add_argument("--seed", type=int, default=0, help="base seed for all substreams")
    common.add_argument("--threads", type=int, default=1, help="worker cap")
    common.add_argument("--out-dir", default=None,
                        help=f"output directory (default ${OUT_DIR_ENV} or ./addrate-out)")

    p = _Parser(prog="addrate", description="Sparse additive model laboratory.")
    p.add_argument("--version", action="version", version=f"addrate {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[common], help="draw a truth and a dataset")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--d", type=int, default=20)
    g.add_argument("--q", type=float, default=0.5)
    g.add_argument("--R", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--s-active", type=int, default=1)
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--k-max", type=int, default=64)
    g.add_argument("--name", default="data", help="output basename")

    f = sub.add_parser("fit", parents=[common], help="fit an estimator to a dataset CSV")
    f.add_argument("--data", help="dataset CSV written by gen-data")
    f.add_argument("--estimator", default="lq_constrained",
                   choices=["lq_constrained", "mixed_penalty", "oracle", "brute_force"])
    f.add_argument("--q", type=float, default=0.5)
    f.add_argument("--R", type=float, default=1.0)
    f.add_argument("--alpha", type=float, default=None,
                   help="smoothness; needed when the dataset has no stored truth")
    f.add_argument("--k-max", type=int, default=None)
    f.add_argument("--restarts", type=int, default=5)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--a-n", type=float, default=None)
    f.add_argument("--a-mult", type=float, default=1.0)
    f.add_argument("--coord", type=int, default=0, help="coordinate for the oracle ridge")
    f.add_argument("--ridge", type=float, default=None,
                   help="oracle ridge (default n^(-2 alpha / (2 alpha + 1)))")
    f.add_argument("--grid-step", type=float, default=0.02)
    f.add_argument("--name", default="fit")

    c = sub.add_parser("complexity", parents=[common], help="Monte-Carlo complexity curves")
    c.add_argument("--n", type=int, default=200)
    c.add_argument("--d", type=int, default=20)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--k-max", type=int, default=64)
    c.add_argument("--replicates", type=int, default=2000)
    c.add_argument("--u-min", type=float, default=0.01)
    c.add_argument("--u-max", type=float, default=1.0)
    c.add_argument("--u-points", type=int, default=12)
    c.add_argument("--beta", type=float, default=1.0)
    c.add_argument("--which", default="both", choices=["rademacher", "gaussian", "both"])

    k = sub.add_parser("packing-check", parents=[common], help="build and verify a packing set")
    k.add_argument("--d", type=int, default=32)
    k.add_argument("--s", type=int, default=4)
    k.add_argument("--N", type=int, default=2)
    k.add_argument("--q", type=float, default=0.5)
    k.add_argument("--alpha", type=float, default=1.0)
    k.add_argument("--k-max", type=int, default=64)
    k.add_argument("--n", type=int, default=1000, help="sample size for the Fano bound")
    k.add_argument("--sigma", type=float, default=1.0)
    k.add_argument("--C1", type=float, default=0.25)

    r = sub.add_parser("rate-sweep", parents=[common], help="error rates over a parameter grid")
    _sweep_flags(r)
    r.add_argument("--estimator", default="lq_constrained",
                   choices=["lq_constrained", "mixed_penalty", "oracle"])
    r.add_argument("--ridge-const", type=float, default=1.0)
    r.add_argument("--a-mult", type=float, default=1.0)
    r.add_argument("--name", default="rates")

    ph = sub.add_parser("phase-diagram", parents=[common], help="sparse/smooth regime map")
    ph.add_argument("--alpha-grid", type=_floats, default=_floats("0.6,0.75,1,1.25,1.5,2,2.5"))
    ph.add_argument("--dim-grid", type=_floats,
                    default=_floats(",".join(f"{v:.2f}" for v in np.linspace(0.0, 1.0, 21))))
    ph.add_argument("--n", type=int, default=1000)
    ph.add_argument("--q", type=float, default=0.5)
    ph.add_argument("--name", default="phase")

    s = sub.add_parser("subopt-exp", parents=[common],
                       help="mixed penalty against the constrained fit in smooth cells")
    _sweep_flags(s)
    s.add_argument("--multipliers", type=_floats, default=_floats("0.25,0.5,1,2,4"))
    s.add_argument("--truth-modes", type=_strs, default=_strs("single,many"))
    s.add_argument("--name", default="subopt")

    v = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    v.add_argument("--quick", action="store_true", help="smaller Monte-Carlo sizes")
    return p


def _sweep_flags(p):
    p.add_argument("--n-grid", type=_ints, default=_ints("100,200,400,800"))
    p.add_argument("--d-grid", type=_ints, default=_ints("20"))
    p.add_argument("--q-grid", type=_floats, default=_floats("0.5"))
    p.add_argument("--alpha-grid", type=_floats, default=_floats("1"))
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--s-active", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--k-max", type=int, default=64)
    p.add_argument("--restarts", type=int, default=5)


# -- config -------------------------------------------------------------------------


def _apply_config(parser: _Parser, argv: list[str]) -> None:
    """Load ``--config`` sections as string defaults of the chosen subparser."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}")
    sub = _subparsers(parser).get(known.command)
    if sub is None:
        return
    dests = {a.dest: a for a in sub._actions}
    values = {}
    for section in ("global", known.command):
        if not cp.has_section(section):
            continue
        for key, val in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in dests or dest in ("help", "config"):
                raise UsageError(f"unknown config key {key!r} in section [{section}]")
            values[dest] = val
    # string defaults go through each option's type conversion
    sub.set_defaults(**values)


def _subparsers(parser) -> dict:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices
    return {}


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "addrate-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _manifest(out: Path, name: str, args, outputs, started, inputs=(), failures=()):
    from .ratelab import write_manifest

    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(out / f"{name}.manifest.json", args.command, cfg, args.seed,
                   [Path(p).name for p in outputs], started, _now(), failures, inputs)


# -- subcommands ------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    from .synthgen import GenConfig, generate, save_dataset

    started = _now()
    cfg = GenConfig(n=args.n, d=args.d, q=args.q, R=args.R, alpha=args.alpha,
                    s_active=args.s_active, sigma=args.sigma, seed=args.seed, k_max=args.k_max)
    out = _out_dir(args)
    ds = generate(cfg)
    csv_path = out / f"{args.name}.csv"
    truth_path = out / f"{args.name}.truth.json"
    sidecar = save_dataset(ds, csv_path, cfg, truth_path)
    _manifest(out, args.name, args, [csv_path, sidecar, truth_path], started)
    print(f"wrote {csv_path} (n={ds.n}, d={ds.d})")
    return 0


def cmd_fit(args) -> int:
    from .estimators import (
        FitConfig,
        basic_inequality_check,
        brute_force_lse,
        fit_lq_constrained,
        fit_mixed_penalty,
        fit_oracle_single,
    )
    from .synthgen import load_dataset

    started = _now()
    cfg = FitConfig(q=args.q, R=args.R, restarts=args.restarts, tol=args.tol, a_n=args.a_n,
                    a_mult=args.a_mult, seed=args.seed, alpha=args.alpha, k_max=args.k_max)
    if not args.data:
        raise UsageError("fit needs --data")
    data = Path(args.data)
    if not data.is_file():
        raise UsageError(f"data file not found: {data}")
    ds = load_dataset(data)
    es = None
    if args.alpha is not None:
        es = EigenSystem(args.alpha, args.k_max or (ds.truth.es.k_max if ds.truth else 64))
    if args.estimator == "lq_constrained":
        fit = fit_lq_constrained(ds, cfg, es)
    elif args.estimator == "mixed_penalty":
        fit = fit_mixed_penalty(ds, cfg, es)
    elif args.estimator == "brute_force":
        fit = brute_force_lse(ds, args.grid_step, args.q, args.R, es=es)
    else:
        alpha = es.alpha if es is not None else (ds.truth.es.alpha if ds.truth else None)
        if alpha is None:
            raise UsageError("oracle fit needs --alpha when the dataset has no truth")
        ridge = args.ridge if args.ridge is not None else ds.n ** (-2 * alpha / (2 * alpha + 1))
        fit = fit_oracle_single(ds, args.coord, ridge, es)
    record = fit.to_record()
    record["theta"] = fit.fhat.to_record()
    if ds.truth is not None and args.estimator == "lq_constrained":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            record["basic_inequality"] = basic_inequality_check(fit, ds)
    out = _out_dir(args)
    path = out / f"{args.name}.json"
    path.write_text(json.dumps(record, indent=2))
    _manifest(out, args.name, args, [path], started, inputs=[data])
    print(f"{fit.estimator}: risk={fit.empirical_risk:.6g} active={fit.active_set} "
          f"error_sq={fit.population_error_sq}")
    return 0


def cmd_complexity(args) -> int:
    from .complexity import gaussian_curve, lemma_envelope_check, rademacher_curve

    started = _now()
    if not 0 < args.u_min < args.u_max <= 1:
        raise DomainError("need 0 < u-min < u-max <= 1")
    es = EigenSystem(args.alpha, args.k_max)
    u = np.geomspace(args.u_min, args.u_max, args.u_points)
    out = _out_dir(args)
    outputs = []
    kinds = ["rademacher", "gaussian"] if args.which == "both" else [args.which]
    for kind in kinds:
        fn = rademacher_curve if kind == "rademacher" else gaussian_curve
        curve = fn(args.n, args.d, es, u, args.replicates, args.seed)
        csv_path = out / f"complexity_{kind}.csv"
        curve.to_csv(csv_path, args.beta)
        rep = lemma_envelope_check(curve, args.beta)
        json_path = out / f"complexity_{kind}.envelope.json"
        json_path.write_text(rep.to_json())
        outputs += [csv_path, json_path]
        print(f"{kind}: monotone={curve.is_monotone()} c_hat={rep.c_hat:.4g} "
              f"(at u={rep.u_at_max:.3g})")
    _manifest(out, "complexity", args, outputs, started)
    return 0


def cmd_packing_check(args) -> int:
    from .lowerbound import (
        build_packing_set,
        fano_bound,
        lower_rate_witness,
        pairwise_separation,
        verify_packing_set,
        write_separation_report,
    )

    started = _now()
    es = EigenSystem(args.alpha, args.k_max)
    ps = build_packing_set(args.d, args.s, args.N, args.q, es,
                           substream(args.seed, "lowerbound:packing"))
    props = verify_packing_set(ps)
    min_sep, bound = pairwise_separation(ps)
    out = _out_dir(args)
    ps_path = out / "packing.json"
    ps.save(ps_path)
    sep_path = out / "separation.csv"
    write_separation_report(ps, sep_path)
    w = lower_rate_witness(args.n, args.d, args.q, args.alpha, args.C1)
    fano = fano_bound(ps, args.n, args.sigma)
    report = {"M": ps.M, "properties": props, "min_separation": min_sep,
              "separation_bound": bound, "n": args.n, "fano_bound": fano,
              "witness": asdict(w)}
    rep_path = out / "packing_report.json"
    rep_path.write_text(json.dumps(report, indent=2, default=float))
    _manifest(out, "packing", args, [ps_path, sep_path, rep_path], started)
    print(f"M={ps.M} properties={props} min_sep={min_sep:.4g} >= {bound:.4g} fano={fano:.4g}")
    return 0


def _sweep_spec(args, out_path):
    from .ratelab import SweepSpec

    return SweepSpec(n_grid=tuple(args.n_grid), d_grid=tuple(args.d_grid),
                     q_grid=tuple(args.q_grid), alpha_grid=tuple(args.alpha_grid),
                     replicates=args.replicates,
                     estimator=getattr(args, "estimator", "lq_constrained"),
                     seed=args.seed, out_path=str(out_path) if out_path else None,
                     s_active=args.s_active, sigma=args.sigma, R=args.R, k_max=args.k_max,
                     ridge_const=getattr(args, "ridge_const", 1.0), restarts=args.restarts,
                     a_mult=getattr(args, "a_mult", 1.0), threads=args.threads)


def cmd_rate_sweep(args) -> int:
    from .ratelab import run_rate_sweep

    out = _out_dir(args)
    path = out / f"{args.name}.csv"
    records = run_rate_sweep(_sweep_spec(args, path))
    failed = sum(r.n_failed for r in records)
    print(f"wrote {path} ({len(records)} cells, {failed} failed fits)")
    return 0


def cmd_phase_diagram(args) -> int:
    from .ratelab import phase_diagram

    started = _now()
    out = _out_dir(args)
    path = out / f"{args.name}.csv"
    labels = phase_diagram(args.alpha_grid, args.dim_grid, args.n, args.q, path)
    _manifest(out, args.name, args, [path, path.with_suffix(".plot.py")], started)
    print(f"wrote {path} ({labels.shape[0]}x{labels.shape[1]} cells, "
          f"{int(np.sum(labels == 'Sparse'))} sparse)")
    return 0


def cmd_subopt_exp(args) -> int:
    from .ratelab import suboptimality_experiment

    started = _now()
    out = _out_dir(args)
    path = out / f"{args.name}.csv"
    spec = _sweep_spec(args, None)
    rows = suboptimality_experiment(spec, tuple(args.multipliers), tuple(args.truth_modes), path)
    _manifest(out, args.name, args, [path], started)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_suite

    started = _now()
    out = _out_dir(args)
    results = run_suite(quick=args.quick, seed=args.seed)
    for r in results:
        print(r.line())
    path = out / "verify.json"
    path.write_text(json.dumps([r.to_record() for r in results], indent=2))
    _manifest(out, "verify", args, [path], started,
              failures=[r.name for r in results if not r.passed])
    return 0 if all(r.passed or r.soft for r in results) else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "complexity": cmd_complexity,
    "packing-check": cmd_packing_check,
    "rate-sweep": cmd_rate_sweep,
    "phase-diagram": cmd_phase_diagram,
    "subopt-exp": cmd_subopt_exp,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return COMMANDS[args.command](args)
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception:
        traceback.print_exc()
        print("internal error", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
