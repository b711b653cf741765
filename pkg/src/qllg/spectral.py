"""Exact diagonalization: spectrum, gap, degeneracy groups, eigenspace projectors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.csgraph import connected_components

from .hamiltonian import DENSE_CAP, HamiltonianOp


class DegenerateSpectrumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with eigenvectors stored as columns."""

    energies: np.ndarray
    vectors: np.ndarray
    degeneracy_tol: float

    @cached_property
    def groups(self) -> np.ndarray:
        """Degeneracy group label of every eigenvalue (0 = ground level)."""
        gaps = np.diff(self.energies) > self.degeneracy_tol
        return np.concatenate([[0], np.cumsum(gaps)]).astype(int)

    @cached_property
    def levels(self) -> np.ndarray:
        """Mean energy of each degeneracy group."""
        g = self.groups
        return np.bincount(g, weights=self.energies) / np.bincount(g)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def level_indices(self, level: int) -> np.ndarray:
        return np.flatnonzero(self.groups == level)

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``c_i = <E_i|psi>``."""
        return self.vectors.conj().T @ psi

    def to_csv(self, path_or_file) -> None:
        rows = zip(range(self.dim), self.energies, self.groups)
        if hasattr(path_or_file, "write"):
            _write_spectrum(path_or_file, rows)
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_spectrum(fh, rows)


def _write_spectrum(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "energy", "degeneracy_group"])
    for i, e, g in rows:
        w.writerow([i, repr(float(e)), int(g)])


@dataclass(frozen=True, eq=False)
class EnergyProjector:
    """Orthogonal projector onto span(basis columns)."""

    basis: np.ndarray
    energy: float

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.conj().T @ psi)

    def weight(self, psi: np.ndarray) -> float:
        """``||P psi||^2``."""
        c = self.basis.conj().T @ psi
        return float(np.vdot(c, c).real)

    def dense(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T


def _blocks(mat: np.ndarray) -> list[np.ndarray]:
    # exact permutation to block-diagonal form via the sparsity graph
    n_comp, labels = connected_components(scipy.sparse.csr_matrix(mat != 0), directed=False)
    return [np.flatnonzero(labels == k) for k in range(n_comp)]


def diagonalize(h: HamiltonianOp, degeneracy_tol: float | None = None,
                cap: int = DENSE_CAP) -> Spectrum:
    """Full dense eigendecomposition of ``h``.

    Decoupled blocks of the dense matrix are diagonalized separately; the
    result is the same full spectrum, just cheaper when H conserves a
    quantum number.
    """
    mat = h.to_dense(cap=cap)
    if not np.any(mat.imag):
        mat = mat.real
    dim = mat.shape[0]
    energies = np.empty(dim)
    vectors = np.zeros((dim, dim), dtype=mat.dtype)
    pos = 0
    for idx in _blocks(mat):
        try:
            w, v = scipy.linalg.eigh(mat[np.ix_(idx, idx)])
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"eigensolver failed: {exc}") from exc
        k = len(idx)
        energies[pos:pos + k] = w
        vectors[idx, pos:pos + k] = v
        pos += k
    order = np.argsort(energies, kind="stable")
    if degeneracy_tol is None:
        degeneracy_tol = 1e-9 * h.norm_bound
    return Spectrum(energies[order], np.ascontiguousarray(vectors[:, order]), degeneracy_tol)


def spectral_gap(s: Spectrum) -> float:
    """Spacing between the ground level and the next distinct level."""
    levels = s.levels
    if len(levels) < 2:
        raise DegenerateSpectrumError("all eigenvalues coincide; no gap")
    return float(levels[1] - levels[0])


def level_projector(s: Spectrum, level: int, merge_tol: float | None = None) -> EnergyProjector:
    """Projector onto a degeneracy group, merged with levels closer than ``merge_tol``.

    ``merge_tol`` defaults to ten times the degeneracy tolerance so that
    near-degenerate pairs are treated as one target space.
    """
    if merge_tol is None:
        merge_tol = 10 * s.degeneracy_tol
    idx = s.level_indices(level)
    e = s.energies[idx[0]]
    sel = np.flatnonzero(np.abs(s.energies - e) <= merge_tol)
    sel = np.union1d(sel, idx)
    return EnergyProjector(s.vectors[:, sel], float(s.energies[sel].mean()))


def ground_projector(s: Spectrum, merge_tol: float | None = None) -> EnergyProjector:
    return level_projector(s, 0, merge_tol)


def project_out(psi: np.ndarray, p: EnergyProjector, tol: float = 1e-12) -> np.ndarray:
    """Normalized ``(1 - P) psi``; raises when ``psi`` lies inside the projected space."""
    rest = psi - p.apply(psi)
    rest = rest - p.apply(rest)  # second pass removes rounding leakage
    norm = np.linalg.norm(rest)
    if norm < tol:
        raise ValueError(f"state lies in the projected subspace (residual {norm:.2e})")
    return rest / norm
