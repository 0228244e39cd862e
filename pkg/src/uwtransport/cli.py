"""Command line entry point: ``python -m uwtransport <subcommand> [flags]``.

Subcommands: ``solve``, ``convergence``, ``condition``, ``voxelize``.
Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

from .study import (
    ConfigError,
    SolverFailure,
    load_config,
    run_condition_study,
    run_convergence,
    run_single,
    run_voxelize,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uwtransport", description="Ultraweak transport solver and studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (
        ("solve", "full pipeline on one grid, VTK fields and summary.json"),
        ("convergence", "h-convergence study, convergence.csv"),
        ("condition", "Gram matrix condition estimates, condition.csv"),
        ("voxelize", "solve on one grid and write the voxelized solution"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--preset", help="catalytic_filter, channel, manufactured_1d or custom")
        p.add_argument("--grid", help="cells per axis, comma separated for studies")
        p.add_argument("--order", help="test space order (1 or 2)")
        p.add_argument("--tol", help="relative residual tolerance of the transport solve")
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE", help="any other setting, repeatable"
        )
        if name == "voxelize":
            p.add_argument("--factor", type=int, help="voxels per cell and axis")
    return parser


def _settings(args) -> dict[str, str]:
    settings = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        settings[key.strip()] = value.strip()
    for key, flag in (("preset", "preset"), ("grids", "grid"), ("order", "order"), ("tol", "tol"), ("out", "out")):
        value = getattr(args, flag)
        if value is not None:
            settings[key] = value
    return settings


def _single_grid(cfg, command):
    if len(cfg.grids) != 1:
        raise ConfigError(f"{command} takes a single grid, got {list(cfg.grids)}")
    return cfg.grids[0]


def _fmt(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


def run(args) -> int:
    cfg = load_config(args.config, **_settings(args))
    if args.command == "solve":
        s = run_single(cfg, _single_grid(cfg, "solve"))
        print(f"grid {s['grid'][0]}x{s['grid'][1]}, order {s['order']}, {s['dofs']} dofs")
        print(f"CG iterations {s['solver']['iterations']}, residual {s['solver']['residual']:.3e}")
        print(f"outflow flux {s['outflow_flux']:.6g}, inflow loading {s['inflow_loading']:.6g}")
        print(f"L2 distance to DG on the same grid {s['l2_distance_to_dg']:.4e}")
        if "l2_error_exact" in s:
            print(f"L2 error against exact solution {s['l2_error_exact']:.4e}")
        print(f"wrote {cfg.out}")
        return EXIT_OK
    if args.command == "convergence":
        rep = run_convergence(cfg)
        print(f"reference: {rep.reference}")
        print("gridwidth  l2error  dofs  iterations  kappa")
        for r in rep.rows:
            print(f"{r.gridwidth:.6g}  {_fmt(r.l2error)}  {r.dofs}  {r.iterations}  {_fmt(r.kappa)}")
        print(f"fitted rate {_fmt(rep.rate)}")
        print(f"wrote {cfg.out / 'convergence.csv'}")
        return EXIT_SOLVER if rep.failed else EXIT_OK
    if args.command == "condition":
        rows = run_condition_study(cfg)
        for r in rows:
            flag = " (Lanczos breakdown)" if r.breakdown else ""
            print(f"h={r.gridwidth:.6g}  kappa={r.kappa:.6g}  ratio={_fmt(r.ratio)}{flag}")
        print(f"wrote {cfg.out / 'condition.csv'}")
        return EXIT_OK
    vox = run_voxelize(cfg, _single_grid(cfg, "voxelize"), args.factor)
    print(f"{vox.mx}x{vox.my} voxels, u in [{vox.values.min():.4g}, {vox.values.max():.4g}]")
    print(f"wrote {cfg.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
