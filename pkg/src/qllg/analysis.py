"""Convergence diagnostics against exact diagonalization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .spectral import EnergyProjector, Spectrum, level_projector


class FitError(ValueError):
    pass


@dataclass
class ConvergenceReport:
    energy_exact: float
    energy_sim: float
    energy_error: float
    infidelity: float
    subspace_infidelity: float
    degenerate_target: bool
    fitted_rate: float | None
    predicted_rate: float
    tau_predicted: float
    t_converged: float | None
    p0: float
    gap: float
    target_level: int = 0

    @property
    def gated_infidelity(self) -> float:
        """Subspace infidelity for degenerate targets, per-state otherwise."""
        return self.subspace_infidelity if self.degenerate_target else self.infidelity

    def as_dict(self) -> dict:
        return asdict(self)


def infidelity(a: np.ndarray, b: np.ndarray) -> float:
    """``1 - |<a|b>|``, insensitive to global phases."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, max(0.0, 1.0 - abs(np.vdot(a, b)))))


def excited_weight(psi: np.ndarray, p: EnergyProjector) -> float:
    """Probability outside the range of ``p``."""
    return float(min(1.0, max(0.0, 1.0 - p.weight(psi))))


def trace_norm_pure(weight_outside: np.ndarray | float) -> np.ndarray | float:
    """Trace norm ``|| |psi><psi| - |phi><phi| ||_1`` for pure states with
    ``|<phi|psi>|^2 = 1 - weight_outside``.

    This is twice the trace distance ``0.5 ||.||_1``.
    """
    return 2.0 * np.sqrt(np.clip(weight_outside, 0.0, 1.0))


def fit_decay_rate(traj, lo: float = 1e-10, hi: float = 1e-1, min_points: int = 10,
                   t_min: float = 0.0) -> float:
    """Slope of ``-log(excited_weight)`` against time inside ``[lo, hi]``.

    ``t_min`` additionally drops early samples, e.g. the multi-mode
    transient reported by ``slow_mode_time``.
    """
    t = np.asarray(traj.times)
    w = np.asarray(traj.excited_weights)
    sel = np.isfinite(w) & (w >= lo) & (w <= hi) & (t >= t_min)
    if sel.sum() < min_points:
        raise FitError(f"only {int(sel.sum())} points with weight in [{lo:g}, {hi:g}]")
    slope, _ = np.polyfit(t[sel], np.log(w[sel]), 1)
    if not slope < 0:
        raise FitError(f"excited weight is not decaying (slope {slope:.3g})")
    return float(-slope)


def slow_mode_time(s: Spectrum, psi0: np.ndarray, kappa: float, hbar: float = 1.0,
                   target_level: int = 0, rel: float = 0.01) -> float:
    """Time after which the lowest excited level dominates the excited weight.

    Returns the first ``t`` at which all higher levels together carry at most
    ``rel`` times the weight of the level just above the target, under the
    closed-form decay ``|c_k|^2 exp(-2 gamma (E_k - E_target) t)``. Returns
    ``inf`` when that level is not populated.
    """
    gamma = kappa / (hbar * (1 + kappa * kappa))
    w = np.bincount(s.groups, weights=np.abs(s.coefficients(psi0)) ** 2)
    levels = s.levels
    k1 = target_level + 1
    if k1 >= len(levels) or w[k1] <= 0:
        return math.inf
    rest = slice(k1 + 1, None)
    ratio = w[rest] / w[k1]
    rate = 2 * gamma * (levels[rest] - levels[k1])
    live = ratio > 0
    ratio, rate = ratio[live], rate[live]

    def excess(t):
        return float(np.sum(ratio * np.exp(-rate * t))) - rel

    if excess(0.0) <= 0:
        return 0.0
    if gamma == 0:
        return math.inf
    hi = 1.0
    while excess(hi) > 0:
        hi *= 2
    return float(brentq(excess, 0.0, hi, xtol=1e-12))


def predicted_tau(kappa: float, hbar: float, gap: float, n_sites: int) -> float:
    """``log(2) hbar (1 + kappa^2) N / (kappa gap)``."""
    if min(kappa, hbar, gap, n_sites) <= 0:
        raise ValueError("kappa, hbar, gap and n_sites must be positive")
    return math.log(2) * hbar * (1 + kappa * kappa) / (kappa * gap) * n_sites


def time_to_epsilon(kappa: float, hbar: float, gap: float, p0: float, eps: float) -> float:
    """Time for the ``exp(-gamma gap t) / p0`` error estimate to reach ``eps``."""
    if min(kappa, hbar, gap) <= 0:
        raise ValueError("kappa, hbar and gap must be positive")
    if not 0 < p0 <= 1:
        raise ValueError(f"p0 must lie in (0, 1], got {p0}")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return hbar * (1 + kappa * kappa) / (kappa * gap) * (-math.log(eps) - math.log(p0))


def first_crossing(times: np.ndarray, values: np.ndarray, threshold: float) -> float | None:
    """First time ``values`` drops to ``threshold``, log-interpolated between samples."""
    values = np.asarray(values)
    below = np.flatnonzero(values <= threshold)
    if len(below) == 0:
        return None
    k = below[0]
    if k == 0:
        return float(times[0])
    v0, v1 = values[k - 1], values[k]
    t0, t1 = times[k - 1], times[k]
    if v1 <= 0 or v0 <= 0:
        return float(t1)
    frac = (math.log(v0) - math.log(threshold)) / (math.log(v0) - math.log(v1))
    return float(t0 + frac * (t1 - t0))


def lowest_populated_level(s: Spectrum, psi: np.ndarray, tol: float = 1e-20) -> int:
    """Index of the lowest degeneracy group with weight above ``tol`` in ``psi``."""
    c2 = np.abs(s.coefficients(psi)) ** 2
    g = s.groups
    per_level = np.bincount(g, weights=c2)
    hits = np.flatnonzero(per_level > tol)
    if len(hits) == 0:
        raise ValueError("state has no weight on any level")
    return int(hits[0])


def compare_to_exact(traj, spectrum: Spectrum, kappa: float, hbar: float = 1.0,
                     target_level: int | None = None) -> ConvergenceReport:
    """Fill a report comparing the final state of ``traj`` to the target level.

    The target defaults to the lowest level populated by the initial state.
    """
    if target_level is None:
        target_level = lowest_populated_level(spectrum, traj.initial_state)
    proj = level_projector(spectrum, target_level)
    levels = spectrum.levels
    psi = traj.final_state
    e_exact = float(levels[target_level])
    e_sim = float(traj.energies[-1])
    # next distinct level above the merged target space
    above = levels[levels > proj.energy + 10 * spectrum.degeneracy_tol]
    gap = float(above[0] - e_exact) if len(above) else math.nan
    try:
        t0 = slow_mode_time(spectrum, traj.initial_state, kappa, hbar, target_level)
        rate = fit_decay_rate(traj, t_min=t0)
    except FitError:
        rate = None
    gamma = kappa / (hbar * (1 + kappa * kappa))
    n_sites = int(round(math.log2(spectrum.dim)))
    tau = predicted_tau(kappa, hbar, gap, n_sites) if gap > 0 and kappa > 0 else math.nan
    return ConvergenceReport(
        energy_exact=e_exact,
        energy_sim=e_sim,
        energy_error=abs(e_exact - e_sim),
        infidelity=infidelity(proj.basis[:, 0], psi),
        subspace_infidelity=excited_weight(psi, proj),
        degenerate_target=proj.rank > 1,
        fitted_rate=rate,
        predicted_rate=2 * gamma * gap,
        tau_predicted=tau,
        t_converged=traj.t_final if traj.converged else None,
        p0=proj.weight(traj.initial_state),
        gap=gap,
        target_level=target_level,
    )
