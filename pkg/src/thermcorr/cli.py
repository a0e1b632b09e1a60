"""Command-line entry point: ``thermcorr <command> [options]``.

Exit codes: 0 success, 2 a validation check failed, 3 bad input,
4 numerical failure (non-convergent integral, broken sub-unitarity).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import cavity, core, photosim, rmt, waveguide
from .io import csv_text, dumps_json, emit, parse_grid, parse_ints
from .quadrature import IntegrationError

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4

COMMANDS = ("waveguide-sweep", "cavity-table", "cavity-sweep", "rmt-validate", "photosim",
            "fig2", "fig3", "geometry")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of option values (command-line flags win)")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--out", default=None, help="output path (default: standard output)")


def _detector_args(p):
    p.add_argument("--alpha-k", type=float, default=1.0)
    p.add_argument("--alpha-l", type=float, default=1.0)
    p.add_argument("--occupation", type=float, default=1.0, help="Bose-Einstein f at line centre")


def _table_args(p):
    p.add_argument("--table", default=None, help="moment-table CSV; built on the fly if absent")
    p.add_argument("--N-list", default="30,60", help="channel numbers for the table (default 30,60)")
    p.add_argument("--gamma", default="1e-3:1e4:43:log", help="absorption grid of the table")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--resonance-factor", type=int, default=10)
    p.add_argument("--ensemble", choices=cavity.ENSEMBLES, default="goe")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> _Parser:
    ap = _Parser(prog="thermcorr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = sub.add_parser("geometry", help="coherence length, mode count and crossover distance")
    _common(p)
    p.add_argument("--wavelength", type=float, default=None, help="metres")
    p.add_argument("--diameter", type=float, default=None, help="source diameter a, metres")
    p.add_argument("--distance", type=float, default=None, help="source-detector distance r, metres")
    p.add_argument("--area", type=float, default=None, help="waveguide cross-section A, m^2")
    subs["geometry"] = p

    for name, helptext in (("waveguide-sweep", "waveguide correlators over s0, with ratios"),
                           ("fig2", "waveguide curves in reduced units")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--s0", default="1e-2:1e4:61:log", help="grid of L/xi0")
        p.add_argument("--lr", type=float, default=0.01, help="l/xi0")
        p.add_argument("--N", type=int, default=10000, help="number of modes")
        _detector_args(p)
        p.add_argument("--tolerance", type=float, default=core.DEFAULT_RTOL,
                       help="relative quadrature tolerance")
        subs[name] = p

    p = sub.add_parser("cavity-table", help="Monte Carlo moment table of the absorbing cavity")
    _common(p)
    _table_args(p)
    p.add_argument("--tolerance", type=float, default=None,
                   help="flag standard errors above this value")
    subs["cavity-table"] = p

    for name, helptext in (("cavity-sweep", "cavity correlators over gamma0, with errors"),
                           ("fig3", "cavity curves in reduced units and ratios")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _table_args(p)
        p.add_argument("--gamma0", default="1e-2:1e4:37:log", help="grid of line-centre absorption")
        p.add_argument("--N", type=int, default=30, help="modes (enters the absolute units only)")
        _detector_args(p)
        p.add_argument("--tolerance", type=float, default=core.DEFAULT_RTOL,
                       help="relative quadrature tolerance")
        subs[name] = p

    p = sub.add_parser("rmt-validate", help="check the equivalent-channel and large-N approximations")
    _common(p)
    p.add_argument("--N-list", default="8,16,32")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10000,
                   help="samples for the equivalent-channel check")
    p.add_argument("--scaling-samples", type=int, default=2000,
                   help="samples per N for the factorisation and covariance checks")
    p.add_argument("--resonance-factor", type=int, default=10)
    p.add_argument("--ensemble", choices=cavity.ENSEMBLES, default="goe")
    p.add_argument("--tolerance", type=float, default=0.3,
                   help="allowed |p - 1| for the factorisation exponent")
    subs["rmt-validate"] = p

    p = sub.add_parser("photosim", help="simulate photodetection and compare with the master formula")
    _common(p)
    p.add_argument("--qq", default="0.5,0.45;0.45,0.5",
                   help="real symmetric QQ^+ rows separated by ';' (flat band)")
    p.add_argument("--bandwidth", type=float, default=2 * math.pi)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--periods", type=int, default=4, help="window length in units of 2 pi / bin width")
    p.add_argument("--samples", "--windows", dest="samples", type=int, default=10000,
                   help="number of counting windows")
    p.add_argument("--frozen", action="store_true", help="reuse one field realisation")
    p.add_argument("--counts-out", default=None, help="write the photocount record CSV here")
    p.add_argument("--alpha-k", type=float, default=1.0)
    p.add_argument("--alpha-l", type=float, default=1.0)
    p.add_argument("--occupation", type=float, default=10.0)
    p.add_argument("--tolerance", type=float, default=None,
                   help="fail (exit 2) if a relative deviation from the analytic value exceeds this")
    subs["photosim"] = p
    ap._subs = subs
    return ap


def _resolve(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        sp = ap._subs[args.command]
        known = {a.dest for a in sp._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise InputError(f"unknown config keys for {args.command}: {unknown}")
        sp.set_defaults(**cfg)
        args = ap.parse_args(argv)
    return args


def _config_of(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "config")}


def _detectors(args) -> core.DetectorPair:
    return core.DetectorPair(args.alpha_k, args.alpha_l, args.occupation)


# --------------------------------------------------------------------------


def cmd_geometry(args):
    # checked here rather than by argparse so that --config can supply them
    missing = [n for n in ("wavelength", "diameter", "distance") if getattr(args, n) is None]
    if missing:
        raise InputError("missing required options: " + ", ".join("--" + n for n in missing))
    area = args.area if args.area is not None else args.wavelength**2 / (2 * math.pi)
    g = core.coherence_geometry(args.wavelength, args.diameter, args.distance, area)
    out = {"config": _config_of(args), "seed": args.seed, "d_c": g.d_c, "N": g.N,
           "crossover_distance": g.crossover_distance}
    emit(dumps_json(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_waveguide(args, fig2: bool):
    grid = parse_grid(args.s0)
    if grid.size and (np.any(grid <= 0) or np.any(np.diff(grid) <= 0)):
        raise InputError("s0 grid must be positive and ascending")
    det = _detectors(args)
    rows = []
    for s0 in grid:
        p = waveguide.WaveguideParams(args.N, float(s0), args.lr)
        r = waveguide.waveguide_correlators(p, det, rtol=args.tolerance)
        if fig2:
            rows.append((s0, r.cross, r.short_range, r.current))
        else:
            rows.append((s0, r.cross, r.short_range, r.current, r.cross_ratio(), p.regime))
    cols = ["s0", "C_kl_reduced", "C_kk_minus_I_reduced", "I_k_reduced"]
    if not fig2:
        cols += ["cross_ratio", "regime"]
    emit(csv_text(cols, rows, _config_of(args), args.seed), args.out)
    return EXIT_OK


def _table(args) -> cavity.MomentTable:
    if args.table:
        try:
            return cavity.MomentTable.from_csv(args.table)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read moment table {args.table}: {exc}") from None
    return cavity.build_moment_table(
        parse_ints(args.N_list), parse_grid(args.gamma), args.samples, args.seed,
        M_res_factor=args.resonance_factor, ensemble=args.ensemble, workers=args.workers,
        tolerance=getattr(args, "tolerance", None) if args.command == "cavity-table" else None,
    )


def cmd_cavity_table(args):
    if args.samples < 100:
        raise InputError("at least 100 samples are required")
    if args.resonance_factor < 5:
        raise InputError("resonance factor must be at least 5")
    table = _table(args)
    table.config.update({"command": "cavity-table"})
    table.seed = args.seed
    emit(table.to_csv(), args.out)
    return EXIT_OK


def cmd_cavity(args, fig3: bool):
    grid = parse_grid(args.gamma0)
    if grid.size and (np.any(grid < 0) or np.any(np.diff(grid) <= 0)):
        raise InputError("gamma0 grid must be nonnegative and ascending")
    table = _table(args)
    det = _detectors(args)
    rows = []
    for g0 in grid:
        p = cavity.CavityParams(args.N, float(g0), max(5, args.resonance_factor))
        try:
            r = cavity.cavity_correlators(p, det, table, rtol=args.tolerance)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        row = [g0, r.cross, r.short_range, r.current, r.cross_ratio(), r.short_ratio()]
        if not fig3:
            row += [";".join(r.flags) or "-"]
        rows.append(row)
    cols = ["gamma0", "C_kl_reduced", "C_kk_minus_I_reduced", "I_k_reduced", "cross_ratio",
            "short_ratio"]
    if not fig3:
        cols += ["flags"]
    cfg = _config_of(args)
    cfg["table_config"] = table.config
    emit(csv_text(cols, rows, cfg, args.seed), args.out)
    return EXIT_OK


def cmd_rmt(args):
    Ns = parse_ints(args.N_list)
    if not Ns or min(Ns) < 1:
        raise InputError("N list must contain positive integers")
    if args.samples < 2 or args.scaling_samples < 2:
        raise InputError("need at least two samples")
    if args.gamma < 0:
        raise InputError("gamma must be nonnegative")
    sampler = rmt.memoized(cavity.cavity_sampler(args.gamma, resonance_factor=args.resonance_factor,
                                                 ensemble=args.ensemble))
    reports = [rmt.equivalent_channel_check(sampler, Ns[0], args.samples, args.seed)]
    if len(Ns) >= 2:
        reports.append(rmt.factorization_check(sampler, Ns, args.scaling_samples, args.seed,
                                               tolerance=args.tolerance))
    if max(Ns) >= 2:
        reports.append(rmt.covariance_identity_check(sampler, max(Ns), args.scaling_samples,
                                                     args.seed))
    verdicts = [r.verdict for r in reports]
    if all(v == "degenerate" for v in verdicts):
        overall = "degenerate"
    elif all(r.passed for r in reports):
        overall = "pass"
    else:
        overall = "fail"
    out = {"config": _config_of(args), "seed": args.seed, "verdict": overall,
           "reports": [r.to_dict() for r in reports]}
    emit(dumps_json(out, indent=2) + "\n", args.out)
    return EXIT_OK if overall != "fail" else EXIT_VALIDATION


def _parse_qq(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in r.split(",")] for r in text.split(";")]
        q = np.array(rows, dtype=float)
    except ValueError:
        raise InputError(f"cannot parse QQ matrix {text!r}") from None
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
        raise InputError("QQ must be a square matrix with at least two modes")
    return q


def cmd_photosim(args):
    qq = _parse_qq(args.qq)
    if args.samples < 2 or args.bins < 1 or args.periods < 1:
        raise InputError("windows, bins and periods must be positive")
    try:
        spec = photosim.EmissionSpectrum.flat_band(qq, args.bandwidth, args.bins, args.occupation)
        det = core.DetectorPair(args.alpha_k, args.alpha_l, args.occupation)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    window = args.periods * spec.period
    rec = photosim.simulate_photocounts(spec, det, window, args.samples, args.seed,
                                        frozen=args.frozen)
    rec.config.update(_config_of(args))
    if args.counts_out:
        rec.to_csv(args.counts_out)
    emp = photosim.estimate_correlators(rec, seed=args.seed)
    ana = photosim.analytic_correlators(spec, det)
    summ = photosim.summary(emp, None if args.frozen else ana)
    summ.update({"config": _config_of(args), "seed": args.seed, "window": window})
    code = EXIT_OK
    if args.tolerance is not None and not args.frozen:
        worst = max(abs(v) for v in summ["relative_deviation"].values() if v is not None)
        summ["verdict"] = "pass" if worst <= args.tolerance else "fail"
        code = EXIT_OK if worst <= args.tolerance else EXIT_VALIDATION
    emit(dumps_json(summ, indent=2) + "\n", args.out)
    return code


def main(argv=None) -> int:
    try:
        args = _resolve(argv)
        cmd = args.command
        if cmd == "geometry":
            return cmd_geometry(args)
        if cmd in ("waveguide-sweep", "fig2"):
            return cmd_waveguide(args, cmd == "fig2")
        if cmd == "cavity-table":
            return cmd_cavity_table(args)
        if cmd in ("cavity-sweep", "fig3"):
            return cmd_cavity(args, cmd == "fig3")
        if cmd == "rmt-validate":
            return cmd_rmt(args)
        if cmd == "photosim":
            return cmd_photosim(args)
        raise InputError(f"unknown command {cmd}")
    except InputError as exc:
        print(f"thermcorr: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, cavity.SamplingError, rmt.SubunitarityError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"thermcorr: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"thermcorr: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
