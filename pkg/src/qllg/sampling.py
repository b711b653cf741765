"""Seeded Haar-random states and initial-overlap statistics.

Generators are PCG64 streams keyed by ``SeedSequence(seed, spawn_key=(stream,))``.
Gaussian amplitudes come from a Box-Muller transform of uniform doubles, so
the output depends only on the PCG64 uniform stream and not on numpy's
normal sampler.
"""

from __future__ import annotations

import csv
import logging
import math
import secrets
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .spectral import EnergyProjector

log = logging.getLogger(__name__)

DEFAULT_WINDOWS = ((0.01, 0.1), (0.1, 1.0), (1.0, 4.0))


@dataclass(frozen=True)
class SeededSource:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_entropy(cls, stream: int = 0) -> "SeededSource":
        seed = secrets.randbits(64)
        log.info("master seed %d", seed)
        return cls(seed, stream)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "SeededSource":
        return SeededSource(self.seed, stream)


def complex_gaussians(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex normals (E|z|^2 = 1) via Box-Muller.

    Each output consumes two consecutive uniforms, so a batch of rows draws
    exactly the same numbers as the rows drawn one after another.
    """
    u = rng.random(tuple(np.atleast_1d(shape)) + (2,))
    r = np.sqrt(-np.log1p(-u[..., 0]))  # radius for variance 1/2 per component
    theta = 2 * np.pi * u[..., 1]
    return r * (np.cos(theta) + 1j * np.sin(theta))


def haar_random_state(n_sites: int, src: SeededSource) -> np.ndarray:
    """Uniformly random unit vector in the 2^N dimensional Hilbert space."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    z = complex_gaussians(src.generator(), 1 << n_sites)
    return z / np.linalg.norm(z)


def haar_random_states(dim: int, n_samples: int, src: SeededSource) -> np.ndarray:
    """``n_samples`` Haar states as rows, drawn from one stream."""
    z = complex_gaussians(src.generator(), (n_samples, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class WindowProbability(NamedTuple):
    literal: float
    corrected: float
    haar: float


def window_probability(eps1: float, eps2: float) -> WindowProbability:
    """Probability that ``D * p0`` lies in ``(eps1, eps2)``.

    ``literal`` evaluates ``2 * int_{sqrt eps1}^{sqrt eps2} exp(-z^2/2) / (2 pi) dz``
    with the 1/(2 pi) prefactor taken at face value; ``corrected`` uses the
    normal density ``1/sqrt(2 pi)``;
    ``haar`` is the large-D exponential law ``exp(-eps1) - exp(-eps2)`` that
    a rank-1 projector actually follows.
    """
    if not 0 <= eps1 < eps2 and not (eps1 == eps2 and eps1 >= 0):
        raise ValueError(f"need 0 <= eps1 < eps2, got ({eps1}, {eps2})")
    if eps1 == eps2:
        return WindowProbability(0.0, 0.0, 0.0)
    mass = float(ndtr(math.sqrt(eps2)) - ndtr(math.sqrt(eps1)))
    corrected = 2.0 * mass
    literal = corrected / math.sqrt(2 * math.pi)
    haar = math.exp(-eps1) - math.exp(-eps2)
    return WindowProbability(literal, corrected, haar)


@dataclass
class OverlapStats:
    n_samples: int
    dim: int
    rank: int
    mean_overlap: float
    stderr: float
    frac_positive: float
    windows: list = field(default_factory=list)  # (lo, hi, empirical, WindowProbability)

    @property
    def expected_mean(self) -> float:
        return self.rank / self.dim

    def rows(self):
        for lo, hi, emp, ana in self.windows:
            yield [self.dim, self.n_samples, repr(self.mean_overlap), repr(self.stderr),
                   lo, hi, repr(emp), repr(ana.corrected), repr(ana.literal)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dim", "n_samples", "mean_p0", "stderr", "window_lo", "window_hi",
                        "empirical_frac", "analytic_frac", "analytic_frac_literal"])
            w.writerows(self.rows())


def overlap_from_samples(p0: np.ndarray, dim: int, rank: int,
                         windows=DEFAULT_WINDOWS) -> OverlapStats:
    n = len(p0)
    scaled = p0 * dim
    win = [(lo, hi, float(np.mean((scaled > lo) & (scaled < hi))), window_probability(lo, hi))
           for lo, hi in windows]
    return OverlapStats(
        n_samples=n, dim=dim, rank=rank,
        mean_overlap=float(p0.mean()),
        stderr=float(p0.std(ddof=1) / math.sqrt(n)),
        frac_positive=float(np.mean(p0 > 0)),
        windows=win,
    )


def overlap_statistics(proj: EnergyProjector, n_samples: int, src: SeededSource,
                       windows=DEFAULT_WINDOWS, batch: int = 2048) -> OverlapStats:
    """Sample Haar states and collect ``p0 = ||P psi||^2`` statistics.

    ``proj`` is the target eigenspace projector, usually
    ``ground_projector(spectrum)``.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    dim = proj.basis.shape[0]
    rng = src.generator()
    p0 = np.empty(n_samples)
    basis_h = proj.basis.conj().T
    for start in range(0, n_samples, batch):
        k = min(batch, n_samples - start)
        z = complex_gaussians(rng, (k, dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        c = z @ basis_h.T
        p0[start:start + k] = np.sum(np.abs(c) ** 2, axis=1)
    return overlap_from_samples(p0, dim, proj.rank, windows)
