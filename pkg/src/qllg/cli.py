"""Command-line entry point: ``qllg sweep|excited|scaling|overlaps|spectrum``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .dynamics import QLLGParams
from .experiments import (ScalingConfig, SweepConfig, load_config, run_excited_target,
                          run_scaling_study, run_sweep)

log = logging.getLogger("qllg")


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--integrator", choices=("euler", "rk4"))
    p.add_argument("--dt", type=float, help="fixed step size (default: stability rule)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--strict", action="store_true",
                   help="exit with status 1 if any row did not converge")
    p.add_argument("--no-png", action="store_true", help="skip matplotlib figures")


def _qllg_overrides(args, base: QLLGParams) -> QLLGParams:
    kw = {k: getattr(args, k) for k in ("integrator", "dt", "kappa")
          if getattr(args, k) is not None}
    if getattr(args, "residual_tol", None) is not None:
        kw["residual_tol"] = args.residual_tol
    return base.with_(**kw)


def _sweep_config(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    changes = {"qllg": _qllg_overrides(args, cfg.qllg)}
    if args.out:
        changes["outputs"] = args.out
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.seeds:
        changes["seeds"] = _int_list(args.seeds)
    if args.t_cap is not None:
        changes["t_cap"] = args.t_cap
    if args.workers is not None:
        changes["workers"] = args.workers
    return replace(cfg, **changes)


def _figures(out, kind: str, png: bool) -> None:
    from .plotting import render_pngs, write_gnuplot_scripts
    write_gnuplot_scripts(out, kind)
    if png:
        render_pngs(out, kind)


def _report(rows, strict: bool) -> int:
    bad = [r for r in rows if not r.get("converged", True)]
    for r in bad:
        log.warning("unconverged: h=%g seed=%d", r["h"], r["seed"])
    print(f"{len(rows)} rows, {len(bad)} unconverged")
    return 1 if strict and bad else 0


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    rows = run_sweep(cfg)
    _figures(cfg.outputs, "sweep", not args.no_png)
    return _report(rows, args.strict)


def cmd_excited(args) -> int:
    cfg = _sweep_config(args)
    rows = run_excited_target(cfg)
    _figures(cfg.outputs, "excited", not args.no_png)
    return _report(rows, args.strict)


def cmd_scaling(args) -> int:
    cfg = ScalingConfig(
        n_list=_int_list(args.n), trials=args.trials,
        seed=args.seed if args.seed is not None else 42,
        J=args.J, h=args.h, eps=args.eps,
        qllg=_qllg_overrides(args, QLLGParams()),
        outputs=args.out or "qllg_scaling",
    )
    rows = run_scaling_study(cfg)
    for r in rows:
        print(f"N={r['n_sites']:3d}  gap={r['gap']:.6g}  t={r['mean_t_converged']:.4g}  "
              f"formula={r['mean_t_formula']:.4g}  tau={r['tau_predicted']:.4g}")
    _figures(cfg.outputs, "scaling", not args.no_png)
    missing = any(t["t_measured"] != t["t_measured"] for r in rows for t in r["per_trial"])
    return 1 if args.strict and missing else 0


def cmd_overlaps(args) -> int:
    from .hamiltonian import heisenberg_chain
    from .sampling import SeededSource, overlap_statistics
    from .spectral import diagonalize, ground_projector

    spec = diagonalize(heisenberg_chain(args.n, args.J, args.h))
    src = SeededSource(args.seed if args.seed is not None else 0)
    stats = overlap_statistics(ground_projector(spec), args.samples, src)
    out = Path(args.out or "qllg_overlaps")
    out.mkdir(parents=True, exist_ok=True)
    stats.to_csv(out / "overlap_stats.csv")
    print(f"D={stats.dim} rank={stats.rank} mean p0={stats.mean_overlap:.6g} "
          f"+/- {stats.stderr:.2g} (expected {stats.expected_mean:.6g})")
    return 0


def cmd_spectrum(args) -> int:
    from .hamiltonian import from_dict
    from .spectral import diagonalize, spectral_gap

    ham = from_dict({"model": args.model, "n_sites": args.n, "J": args.J, "h": args.h})
    spec = diagonalize(ham)
    levels = spec.levels
    print(f"E0={levels[0]:.12g}  degeneracy={len(spec.level_indices(0))}  "
          f"gap={spectral_gap(spec):.12g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        spec.to_csv(out / "spectrum.csv")
    else:
        spec.to_csv(sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qllg", description="Dissipative ground-state preparation")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)

    for name, fn, helptext in (("sweep", cmd_sweep, "field sweep at fixed N"),
                               ("excited", cmd_excited, "first-excited-state targeting")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="TOML/JSON config or a previous manifest.json")
        p.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
        p.add_argument("--t-cap", type=float, help="upper bound on evolution time")
        p.add_argument("--residual-tol", type=float)
        p.add_argument("--workers", type=int)
        _common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("scaling", help="convergence time against chain length")
    p.add_argument("--n", default="4,6,8,10")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--J", type=float, default=-2.0)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-4)
    _common(p)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("overlaps", help="Haar initial-overlap statistics")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--J", type=float, default=2.0)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_overlaps)

    p = sub.add_parser("spectrum", help="exact spectrum of a model")
    p.add_argument("--model", default="heisenberg_chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--J", type=float, default=2.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
