"""Real-time QLLG flow for pure states.

The pure-state flow is

    d|psi>/dt = -i (1 - i kappa) / (hbar (1 + kappa^2)) (H - <H>) |psi>

integrated with Euler or RK4 and renormalized after each step. A closed-form
propagator in the eigenbasis serves as an independent check.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hamiltonian import HamiltonianOp
from .spectral import EnergyProjector, Spectrum, ground_projector, spectral_gap

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "rk4")


@dataclass(frozen=True)
class QLLGParams:
    """Damping, units and stepping controls.

    ``dt=None`` selects the stability rule; ``t_max=None`` selects ten times
    the predicted convergence time of the spectrum being targeted.
    ``kappa=0`` is accepted and gives plain Schroedinger dynamics.
    """

    kappa: float = 0.3
    hbar: float = 1.0
    dt: float | None = None
    t_max: float | None = None
    residual_tol: float = 1e-8
    integrator: str = "rk4"

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be > 0, got {self.hbar}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_max is not None and self.dt is not None and self.t_max < self.dt:
            raise ValueError("t_max must be >= dt")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")

    @property
    def prefactor(self) -> complex:
        """Coefficient multiplying ``(H - <H>)|psi>`` in the flow."""
        k = self.kappa
        return -1j * (1 - 1j * k) / (self.hbar * (1 + k * k))

    @property
    def gamma(self) -> float:
        """Amplitude damping rate per unit energy, ``kappa / (hbar (1 + kappa^2))``."""
        return self.kappa / (self.hbar * (1 + self.kappa ** 2))

    def stable_dt(self, h: HamiltonianOp) -> float:
        k = self.kappa
        return 0.1 * self.hbar * (1 + k * k) / ((1 + k) * max(h.norm_bound, 1e-300))

    def step_size(self, h: HamiltonianOp) -> float:
        return self.dt if self.dt is not None else self.stable_dt(h)

    def with_(self, **kw) -> "QLLGParams":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    coeffs: np.ndarray
    spectrum: Spectrum

    def __post_init__(self):
        norm2 = float(np.vdot(self.coeffs, self.coeffs).real)
        if abs(norm2 - 1) > 1e-12:
            raise ValueError(f"coefficients not normalized (sum |c|^2 = {norm2!r})")

    @classmethod
    def from_state(cls, spectrum: Spectrum, psi: np.ndarray) -> "SpectralCoefficients":
        return cls(spectrum.coefficients(psi), spectrum)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    energies: np.ndarray
    norm_residuals: np.ndarray
    excited_weights: np.ndarray
    infidelities: np.ndarray
    converged: bool
    final_state: np.ndarray
    initial_state: np.ndarray
    dt: float
    residual: float = math.nan
    meta: dict = field(default_factory=dict)
    states: np.ndarray | None = None

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def rows(self):
        for row in zip(self.times, self.energies, self.norm_residuals,
                       self.excited_weights, self.infidelities):
            yield [repr(float(x)) for x in row]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "energy", "norm_residual", "excited_weight", "infidelity"])
            w.writerows(self.rows())


def qllg_rhs(h: HamiltonianOp, psi: np.ndarray, p: QLLGParams) -> np.ndarray:
    """Time derivative of a normalized state under the pure-state flow."""
    hpsi = h.apply(psi)
    e = np.vdot(psi, hpsi).real
    return p.prefactor * (hpsi - e * psi)


def gap_above(spectrum: Spectrum, target: EnergyProjector | None = None) -> float:
    """Distance from the target level to the next distinct level above it."""
    if target is None:
        return spectral_gap(spectrum)
    levels = spectrum.levels
    above = levels[levels > target.energy + 10 * spectrum.degeneracy_tol]
    if len(above) == 0:
        raise ValueError("target is the top level; no gap above it")
    return float(above[0] - target.energy)


def default_t_max(p: QLLGParams, n_sites: int, gap: float) -> float:
    """Ten predicted convergence times."""
    from .analysis import predicted_tau
    return 10 * predicted_tau(p.kappa, p.hbar, gap, n_sites) if p.kappa > 0 else 10.0


def evolve(psi0: np.ndarray, h: HamiltonianOp, p: QLLGParams,
           spectrum: Spectrum | None = None, *, target: EnergyProjector | None = None,
           deflate: EnergyProjector | None = None, stride: int = 1,
           stop_on_residual: bool = True, keep_states: bool = False) -> TrajectoryRecord:
    """Integrate the flow from ``psi0`` until convergence or ``t_max``.

    Convergence means ``||(H - <H>) psi|| <= residual_tol * norm_bound``.
    With a spectrum, each record also carries the weight outside ``target``
    (default: the ground eigenspace) and the infidelity against its first
    basis vector; otherwise those columns are NaN.

    ``deflate`` removes the range of a projector after every step. The flow
    never creates weight in an eigenspace the state starts orthogonal to, so
    this only strips rounding leakage, which the flow would otherwise amplify
    when targeting an excited level.

    ``keep_states`` stores a copy of the state at every recorded time.
    """
    psi = np.array(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("initial state must be normalized")
    dt = p.step_size(h)
    if target is None and spectrum is not None:
        target = ground_projector(spectrum)
    if p.t_max is not None:
        t_max = p.t_max
    elif spectrum is not None:
        t_max = default_t_max(p, h.n_sites, gap_above(spectrum, target))
    else:
        raise ValueError("t_max must be given when no spectrum is supplied")
    ref = None if target is None else target.basis[:, 0]
    pref = p.prefactor
    scale = p.hbar * math.sqrt(1 + p.kappa ** 2)  # ||rhs|| -> residual
    tol = p.residual_tol * h.norm_bound
    rk4 = p.integrator == "rk4"
    apply = h.apply

    times, energies, norm_res, weights, infid, states = [], [], [], [], [], []

    def record(t, e, nr):
        if keep_states:
            states.append(psi.copy())
        times.append(t)
        energies.append(e)
        norm_res.append(nr)
        if target is None:
            weights.append(math.nan)
            infid.append(math.nan)
        else:
            weights.append(max(0.0, 1.0 - target.weight(psi)))
            infid.append(1.0 - abs(np.vdot(ref, psi)))

    def f(y):
        hy = apply(y)
        return pref * (hy - np.vdot(y, hy).real * y)

    n_steps = int(math.ceil(t_max / dt - 1e-9))
    converged = False
    nr = 0.0
    step = 0
    t = 0.0
    residual = math.nan
    while True:
        hpsi = apply(psi)
        e = np.vdot(psi, hpsi).real
        k1 = pref * (hpsi - e * psi)
        residual = float(np.linalg.norm(k1)) * scale
        done = stop_on_residual and residual <= tol
        if done or step >= n_steps:
            record(t, e, nr)
            converged = done
            break
        if step % stride == 0:
            record(t, e, nr)
        if rk4:
            k2 = f(psi + (0.5 * dt) * k1)
            k3 = f(psi + (0.5 * dt) * k2)
            k4 = f(psi + dt * k3)
            psi = psi + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        else:
            psi = psi + dt * k1
        norm = np.linalg.norm(psi)
        if not math.isfinite(norm) or norm == 0:
            raise FloatingPointError(
                f"non-finite state at t={t:.6g} (dt={dt:.3g}); step size too large")
        nr = abs(norm - 1.0)
        psi /= norm
        if deflate is not None:
            psi -= deflate.apply(psi)
            psi /= np.linalg.norm(psi)
        step += 1
        t = step * dt

    return TrajectoryRecord(
        times=np.array(times), energies=np.array(energies),
        norm_residuals=np.array(norm_res), excited_weights=np.array(weights),
        infidelities=np.array(infid), converged=converged, final_state=psi,
        initial_state=np.array(psi0, dtype=complex), dt=dt, residual=residual,
        states=np.array(states) if keep_states else None,
    )


def spectral_propagate(c0: SpectralCoefficients, t: float, p: QLLGParams) -> np.ndarray:
    """Closed-form QLLG state at time ``t`` from eigenbasis coefficients.

    Amplitudes scale as ``exp(-gamma (E_i - E_ref) t)`` with an energy phase,
    where ``E_ref`` is the lowest energy carrying weight; working with log
    magnitudes keeps the factors bounded for any ``t``.
    """
    s = c0.spectrum
    c = np.asarray(c0.coeffs)
    mag = np.abs(c)
    live = mag > 0
    if not np.any(live):
        raise ValueError("all coefficients vanish")
    e_ref = s.energies[live].min()
    de = s.energies - e_ref
    logw = np.full(len(c), -np.inf)
    logw[live] = np.log(mag[live]) - p.gamma * de[live] * t
    logw -= logw.max()
    phase = np.exp(1j * (np.angle(c) - de * t / (p.hbar * (1 + p.kappa ** 2))))
    ct = np.exp(logw) * phase
    norm = np.linalg.norm(ct)
    if norm == 0 or not math.isfinite(norm):
        raise FloatingPointError("propagated weights underflowed")
    return s.vectors @ (ct / norm)


def save_state(path, psi: np.ndarray, n_sites: int, t_final: float, seed: int | None) -> None:
    """Write amplitudes as ``re,im`` rows after a JSON header line."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps({"n_sites": n_sites, "t_final": t_final, "seed": seed}) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for a in psi:
            w.writerow([repr(float(a.real)), repr(float(a.imag))])


def load_state(path) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        header = json.loads(fh.readline()[2:])
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    psi = data[:, 0] + 1j * data[:, 1]
    if len(psi) != 1 << int(header["n_sites"]):
        raise ValueError("amplitude count does not match n_sites")
    return psi, header
