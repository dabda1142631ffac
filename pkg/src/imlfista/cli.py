"""Command line entry point: ``imlfista {degrade,solve,compare,gridsearch}``.

Every verb reads an optional flat ``key = value`` scenario file
(``--config``), applies any ``--<field>`` flags on top and writes its
outputs to ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path

from .harness import (STANDARD_VARIANTS, Scenario, build_instance, compare, degrade,
                      format_config, grid_search_lambda, load_image, parse_config,
                      scenario_from, variant_configs, write_report)
from .imgcore import ConfigError, snr, write_image
from .solver import run


def _scenario_args(parser: argparse.ArgumentParser) -> None:
    grp = parser.add_argument_group("scenario overrides")
    for f in fields(Scenario):
        grp.add_argument("--" + f.name.replace("_", "-"), dest="sc_" + f.name, default=None,
                         metavar=f.name.upper())


def _scenario(args) -> Scenario:
    over = {}
    if args.config:
        over.update(parse_config(Path(args.config).read_text()))
    for f in fields(Scenario):
        val = getattr(args, "sc_" + f.name)
        if val is not None:
            over.update(parse_config(f"{f.name} = {val}"))
    return scenario_from(over)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_degrade(args) -> int:
    sc = _scenario(args)
    out = _outdir(args)
    x_true = load_image(sc.image, sc.size)
    z, _ = degrade(x_true, sc)
    write_image(out / f"observed.{args.format}", z)
    write_image(out / f"truth.{args.format}", x_true)
    (out / "scenario.cfg").write_text(format_config(sc))
    print(f"SNR(z) = {snr(x_true, z):.3f} dB")
    return 0


def cmd_solve(args) -> int:
    sc = _scenario(args)
    out = _outdir(args)
    inst = build_instance(sc)
    cfg = variant_configs(sc, [args.variant])[args.variant]
    trace = run(inst.hierarchy, cfg, inst.x0, reference=inst.x_true)
    trace.to_csv(out / f"trace_{args.variant}.csv")
    write_image(out / f"restored_{args.variant}.{args.format}", trace.x)
    (out / "scenario.cfg").write_text(format_config(sc))
    rec = trace.records[-1]
    print(f"{args.variant}: {rec.k} iterations ({trace.status}), F = {rec.objective:.10g}, "
          f"SNR = {rec.snr:.3f} dB, {rec.seconds:.2f} s")
    return 0


def cmd_compare(args) -> int:
    sc = _scenario(args)
    out = _outdir(args)
    inst = build_instance(sc)
    traces, rows, f_best = compare(sc, variant_configs(sc, args.variants), args.workers, inst)
    write_report(out, sc, traces, rows, f_best)
    for name, tr in traces.items():
        write_image(out / f"restored_{name}.{args.format}", tr.x)
    for row in rows:
        print(f"{row['variant']:>10}: F_2 = {row['F_2']:.8g}  F_final = {row['F_final']:.8g}  "
              f"SNR_2 = {row['SNR_2']:.3f}  SNR_final = {row['SNR_final']:.3f}  "
              f"{row['seconds']:.2f} s")
    return 0


def cmd_gridsearch(args) -> int:
    sc = _scenario(args)
    out = _outdir(args)
    cands = [float(s) for s in args.lambdas.split(",") if s.strip()]
    best, table = grid_search_lambda(sc, cands, iters=args.iters)
    with open(out / "gridsearch.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lam", "snr"])
        for lam, val in table:
            w.writerow([repr(lam), repr(val)])
    (out / "scenario.cfg").write_text(format_config(sc))
    for lam, val in table:
        print(f"lam = {lam:<10.4g} SNR = {val:.3f} dB{'  <- best' if lam == best else ''}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imlfista", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value scenario file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--format", default="pgm", choices=["pgm", "png"],
                        help="image output format (default: pgm)")
    _scenario_args(common)

    p = sub.add_parser("degrade", parents=[common], help="simulate the observation z")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("solve", parents=[common], help="run one solver variant")
    p.add_argument("--variant", default="IML_FISTA", choices=list(STANDARD_VARIANTS))
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", parents=[common], help="run several variants from one x0")
    p.add_argument("--variants", nargs="+", default=list(STANDARD_VARIANTS),
                   choices=list(STANDARD_VARIANTS))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gridsearch", parents=[common], help="choose lambda by FISTA SNR")
    p.add_argument("--lambdas", default="1e-4,3e-4,1e-3,3e-3,1e-2,3e-2,1e-1",
                   help="comma separated candidates")
    p.add_argument("--iters", type=int, default=200)
    p.set_defaults(func=cmd_gridsearch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"imlfista: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
