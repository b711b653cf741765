"""Field sweeps, excited-state targeting and N-scaling studies.

Every run writes plain CSV tables plus a ``manifest.json`` holding the full
config, so a run can be repeated from its manifest alone. Rows are sorted by
``(h, seed)`` before writing, which keeps files byte-identical regardless of
how many worker processes were used.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compare_to_exact, first_crossing, predicted_tau, time_to_epsilon, \
    trace_norm_pure
from .dynamics import QLLGParams, default_t_max, evolve
from .hamiltonian import heisenberg_chain, load_toml
from .sampling import SeededSource, haar_random_state
from .spectral import diagonalize, ground_projector, level_projector, project_out, spectral_gap

log = logging.getLogger(__name__)

DEFAULT_H_GRID = tuple(round(0.1 * k, 10) for k in range(51))

OVERLAP_COLUMNS = ["h", "seed", "ground_overlap", "excited_overlap"]
ENERGY_COLUMNS = ["h", "seed", "E0_exact", "E1_exact", "E_sim"]
SWEEP_COLUMNS = ["h", "seed", "p0", "E_exact", "E_sim", "energy_error", "infidelity",
                 "subspace_infidelity", "fitted_rate", "predicted_rate", "tau_predicted",
                 "t_converged", "converged"]
GAP_COLUMNS = ["h", "seed", "gap", "tau_predicted", "t_converged"]
EXCITED_COLUMNS = ["h", "seed", "E0_exact", "E1_exact", "E_sim", "energy_error", "infidelity",
                   "subspace_infidelity", "t_converged", "converged"]
SCALING_COLUMNS = ["n_sites", "gap", "mean_t_converged", "tau_predicted", "mean_t_formula",
                   "mean_p0", "mean_t_absolute", "trials"]


@dataclass
class SweepConfig:
    n_sites: int = 12
    J: float = 2.0
    h_grid: tuple = DEFAULT_H_GRID
    qllg: QLLGParams = field(default_factory=QLLGParams)
    seeds: tuple = (0,)
    outputs: str = "qllg_out"
    record_stride: int = 1
    t_cap: float | None = None
    workers: int | None = None

    def __post_init__(self):
        self.h_grid = tuple(float(h) for h in self.h_grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.h_grid or not all(math.isfinite(h) for h in self.h_grid):
            raise ValueError("h_grid must be a non-empty list of finite numbers")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["h_grid"] = list(self.h_grid)
        d["seeds"] = list(self.seeds)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        doc = dict(doc.get("config", doc))
        model = doc.pop("model", {})
        run = doc.pop("run", {})
        flat = {**doc, **model, **run}
        grid = flat.get("h_grid", DEFAULT_H_GRID)
        if isinstance(grid, dict):
            start, stop, step = grid["start"], grid["stop"], grid["step"]
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            grid = [round(start + k * step, 10) for k in range(n)]
        flat["h_grid"] = grid
        flat["qllg"] = QLLGParams(**flat.get("qllg", {}))
        known = set(cls.__dataclass_fields__)
        unknown = set(flat) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**flat)


def load_config(path) -> SweepConfig:
    """Read a TOML or JSON config (or a previous run's manifest)."""
    path = str(path)
    if path.endswith(".toml"):
        return SweepConfig.from_dict(load_toml(path))
    with open(path) as fh:
        return SweepConfig.from_dict(json.load(fh))


def state_stream(h: float) -> int:
    """Stream id tied to the field value so each h gets its own initial state."""
    return zlib.crc32(repr(float(h)).encode())


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _n_workers(requested: int | None) -> int:
    env = os.environ.get("QLLG_THREADS")
    n = requested or (int(env) if env else os.cpu_count() or 1)
    if env:
        n = min(n, int(env))
    return max(1, n)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _t_max(cfg: SweepConfig, gap: float) -> float:
    p = cfg.qllg
    t = p.t_max if p.t_max is not None else default_t_max(p, cfg.n_sites, gap)
    if cfg.t_cap is not None:
        t = min(t, cfg.t_cap)
    return t


def _sweep_point(cfg: SweepConfig, h: float) -> list[dict]:
    ham = heisenberg_chain(cfg.n_sites, cfg.J, h)
    spec = diagonalize(ham)
    gap = spectral_gap(spec)
    ground = ground_projector(spec)
    first = level_projector(spec, 1)
    levels = spec.levels
    params = cfg.qllg.with_(t_max=_t_max(cfg, gap))
    tau = predicted_tau(params.kappa, params.hbar, gap, cfg.n_sites)
    rows = []
    for seed in cfg.seeds:
        psi0 = haar_random_state(cfg.n_sites, SeededSource(seed, state_stream(h)))
        traj = evolve(psi0, ham, params, spec, target=ground, stride=cfg.record_stride)
        rep = compare_to_exact(traj, spec, params.kappa, params.hbar, target_level=0)
        log.info("h=%g seed=%d gap=%.4g converged=%s t=%.4g err=%.3g", h, seed, gap,
                 traj.converged, traj.t_final, rep.energy_error)
        rows.append({
            "h": h, "seed": seed, "p0": rep.p0,
            "ground_overlap": ground.weight(psi0), "excited_overlap": first.weight(psi0),
            "E0_exact": levels[0], "E1_exact": levels[1], "E_exact": rep.energy_exact,
            "E_sim": rep.energy_sim, "energy_error": rep.energy_error,
            "infidelity": rep.infidelity, "subspace_infidelity": rep.subspace_infidelity,
            "fitted_rate": rep.fitted_rate, "predicted_rate": rep.predicted_rate,
            "tau_predicted": tau, "gap": gap, "t_converged": rep.t_converged,
            "converged": traj.converged, "degenerate_target": rep.degenerate_target,
        })
    return rows


def manifest(kind: str, config: dict) -> dict:
    return {
        "kind": kind,
        "config": config,
        "qllg_version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "created": datetime.now(timezone.utc).isoformat(),
    }


def _write_manifest(out: Path, kind: str, config: dict) -> None:
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest(kind, config), fh, indent=2)


def run_sweep(cfg: SweepConfig) -> list[dict]:
    """Diagonalize, sample, evolve and compare for every ``(h, seed)``.

    Writes ``fig1_overlaps.csv``, ``fig2_energies.csv``, ``fig3_errors.csv``,
    ``fig4_gap_tau.csv`` and ``manifest.json`` into ``cfg.outputs`` and
    returns the merged rows.
    """
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, h) for h in cfg.h_grid]
    rows = [r for chunk in _map(_sweep_point, jobs, _n_workers(cfg.workers)) for r in chunk]
    rows.sort(key=lambda r: (r["h"], r["seed"]))
    write_csv(out / "fig1_overlaps.csv", OVERLAP_COLUMNS, rows)
    write_csv(out / "fig2_energies.csv", ENERGY_COLUMNS, rows)
    write_csv(out / "fig3_errors.csv", SWEEP_COLUMNS, rows)
    write_csv(out / "fig4_gap_tau.csv", GAP_COLUMNS, rows)
    _write_manifest(out, "sweep", cfg.to_dict())
    return rows


def _excited_point(cfg: SweepConfig, h: float) -> list[dict]:
    ham = heisenberg_chain(cfg.n_sites, cfg.J, h)
    spec = diagonalize(ham)
    ground = ground_projector(spec)
    first = level_projector(spec, 1)
    levels = spec.levels
    params = cfg.qllg.with_(t_max=_t_max(cfg, float(levels[2] - levels[1])))
    rows = []
    for seed in cfg.seeds:
        psi0 = haar_random_state(cfg.n_sites, SeededSource(seed, state_stream(h)))
        psi0 = project_out(psi0, ground)
        traj = evolve(psi0, ham, params, spec, target=first, deflate=ground,
                      stride=cfg.record_stride)
        rep = compare_to_exact(traj, spec, params.kappa, params.hbar, target_level=1)
        rows.append({
            "h": h, "seed": seed, "E0_exact": levels[0], "E1_exact": levels[1],
            "E_sim": rep.energy_sim, "energy_error": rep.energy_error,
            "infidelity": rep.infidelity, "subspace_infidelity": rep.subspace_infidelity,
            "t_converged": rep.t_converged, "converged": traj.converged,
        })
    return rows


def run_excited_target(cfg: SweepConfig) -> list[dict]:
    """Steer random states to the first excited level by removing their ground weight.

    Writes ``excited.csv`` and ``manifest.json``.
    """
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, h) for h in cfg.h_grid]
    rows = [r for chunk in _map(_excited_point, jobs, _n_workers(cfg.workers)) for r in chunk]
    rows.sort(key=lambda r: (r["h"], r["seed"]))
    write_csv(out / "excited.csv", EXCITED_COLUMNS, rows)
    _write_manifest(out, "excited", cfg.to_dict())
    return rows


@dataclass
class ScalingConfig:
    n_list: tuple = (4, 6, 8, 10)
    trials: int = 5
    seed: int = 42
    J: float = -2.0
    h: float = 1.0
    qllg: QLLGParams = field(default_factory=QLLGParams)
    eps: float = 1e-4
    outputs: str | None = None


def measure_time_to_epsilon(n_sites: int, J: float, h: float, params: QLLGParams,
                            src: SeededSource, eps: float) -> dict:
    """Evolve one Haar state and time its approach to the ground space.

    The error surrogate is the trace norm ``||rho(t) - rho_target||_1``
    between the evolving state and the normalized ground projection of the
    initial state, ``2 sqrt(w)`` with ``w`` the weight outside the ground space. ``t_measured`` is the first
    time it falls to ``eps * p0``, the threshold relative to the initial
    overlap floor; ``t_absolute`` is the first time it falls to ``eps``.
    """
    ham = heisenberg_chain(n_sites, J, h)
    spec = diagonalize(ham)
    gap = spectral_gap(spec)
    ground = ground_projector(spec)
    psi0 = haar_random_state(n_sites, src)
    p0 = ground.weight(psi0)
    t_formula = time_to_epsilon(params.kappa, params.hbar, gap, p0, eps)
    horizon = params.t_max or 1.5 * t_formula + 10 * params.step_size(ham)
    while True:
        traj = evolve(psi0, ham, params.with_(t_max=horizon), spec, target=ground,
                      stop_on_residual=False)
        dist = trace_norm_pure(traj.excited_weights)
        t_rel = first_crossing(traj.times, dist, eps * p0)
        if t_rel is not None or params.t_max is not None or horizon > 10 * t_formula:
            break
        horizon *= 2
    t_abs = first_crossing(traj.times, dist, eps)
    return {"n_sites": n_sites, "gap": gap, "p0": p0, "t_formula": t_formula,
            "t_measured": math.nan if t_rel is None else t_rel,
            "t_absolute": math.nan if t_abs is None else t_abs,
            "tau_predicted": predicted_tau(params.kappa, params.hbar, gap, n_sites)}


def run_scaling_study(cfg: ScalingConfig) -> list[dict]:
    """Mean measured time-to-epsilon against the predicted N/gap law for each N."""
    rows = []
    for n in cfg.n_list:
        trials = [measure_time_to_epsilon(n, cfg.J, cfg.h, cfg.qllg,
                                          SeededSource(cfg.seed, 1000 * n + k), cfg.eps)
                  for k in range(cfg.trials)]
        rows.append({
            "n_sites": n, "gap": trials[0]["gap"],
            "mean_t_converged": float(np.mean([t["t_measured"] for t in trials])),
            "tau_predicted": trials[0]["tau_predicted"],
            "mean_t_formula": float(np.mean([t["t_formula"] for t in trials])),
            "mean_p0": float(np.mean([t["p0"] for t in trials])),
            "mean_t_absolute": float(np.mean([t["t_absolute"] for t in trials])),
            "trials": cfg.trials,
            "per_trial": trials,
        })
    if cfg.outputs:
        out = Path(cfg.outputs)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "scaling.csv", SCALING_COLUMNS, rows)
        conf = asdict(cfg)
        conf["n_list"] = list(cfg.n_list)
        _write_manifest(out, "scaling", conf)
    return rows
