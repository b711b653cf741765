"""Matrix-free spin Hamiltonians built from weighted Pauli strings.

Basis convention: site 0 is the least-significant bit of the basis index and
``sigma^z |0> = +|0>``, so ``|00...0>`` is the all-up state.

A Pauli string acts on a basis state as a bit flip times a phase, which lets
``apply`` run in O(2^N) per distinct flip mask without storing a matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numba import njit

AXES = ("X", "Y", "Z")
DENSE_CAP = 14


class ResourceError(RuntimeError):
    """Requested dense object exceeds the configured size cap."""


@dataclass(frozen=True)
class PauliString:
    """Product of single-site Pauli operators with a real coefficient.

    ``sites`` is a tuple of ``(site, axis)`` pairs with strictly increasing
    site indices. An empty tuple is the identity.
    """

    sites: tuple[tuple[int, str], ...]
    coeff: float

    def __post_init__(self):
        sites = tuple((int(i), str(a).upper()) for i, a in self.sites)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "coeff", float(self.coeff))
        if not math.isfinite(self.coeff):
            raise ValueError(f"coefficient must be finite, got {self.coeff}")
        prev = -1
        for i, a in sites:
            if a not in AXES:
                raise ValueError(f"unknown Pauli axis {a!r}")
            if i <= prev:
                raise ValueError(f"site indices must be strictly increasing: {sites}")
            prev = i

    @property
    def max_site(self) -> int:
        return self.sites[-1][0] if self.sites else -1

    def masks(self) -> tuple[int, int, int]:
        """Return (flip mask, sign mask, number of Y factors)."""
        flip = sign = 0
        n_y = 0
        for i, a in self.sites:
            bit = 1 << i
            if a in ("X", "Y"):
                flip |= bit
            if a in ("Y", "Z"):
                sign |= bit
            if a == "Y":
                n_y += 1
        return flip, sign, n_y

    def label(self) -> str:
        if not self.sites:
            return f"{self.coeff:g}*I"
        return f"{self.coeff:g}*" + "".join(f"{a}{i}" for i, a in self.sites)


@dataclass(frozen=True)
class SpinChainParams:
    n_sites: int
    J: float
    h: float

    def __post_init__(self):
        if int(self.n_sites) < 2:
            raise ValueError(f"spin chain needs n_sites >= 2, got {self.n_sites}")
        if not (math.isfinite(self.J) and math.isfinite(self.h)):
            raise ValueError("J and h must be finite")


@njit(cache=True)
def _apply_groups(masks, diags, psi, out):
    dim = psi.shape[0]
    m = masks[0]
    for k in range(dim):
        out[k] = diags[0, k] * psi[k ^ m]
    for g in range(1, masks.shape[0]):
        m = masks[g]
        for k in range(dim):
            out[k] += diags[g, k] * psi[k ^ m]


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    parity = np.zeros_like(x)
    while np.any(x):
        parity ^= x & 1
        x >>= 1
    return parity


class HamiltonianOp:
    """Hermitian operator ``sum_k c_k P_k`` over ``n_sites`` qubits.

    Immutable after construction. Terms sharing a flip mask are fused into a
    single diagonal table, so a matvec costs one gather per distinct mask.
    """

    def __init__(self, n_sites: int, terms: Iterable[PauliString]):
        self._n_sites = int(n_sites)
        self._terms = tuple(terms)
        if self._n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        for t in self._terms:
            if t.max_site >= self._n_sites:
                raise ValueError(f"term {t.label()} acts outside {self._n_sites} sites")
        self._norm_bound = float(sum(abs(t.coeff) for t in self._terms))

    @property
    def n_sites(self) -> int:
        return self._n_sites

    @property
    def dim(self) -> int:
        return 1 << self._n_sites

    @property
    def terms(self) -> tuple[PauliString, ...]:
        return self._terms

    @property
    def norm_bound(self) -> float:
        """Upper bound on the spectral radius: sum of |coefficients|."""
        return self._norm_bound

    def __repr__(self):
        return f"HamiltonianOp(n_sites={self._n_sites}, n_terms={len(self._terms)})"

    @cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.dim, dtype=np.int64)
        groups: dict[int, np.ndarray] = {}
        for t in self._terms:
            flip, sign, n_y = t.masks()
            # <k|P|k^flip> = i^nY * (-1)^popcount((k^flip) & sign)
            phase = (1j) ** n_y * (1 - 2 * _popcount_parity((idx ^ flip) & sign))
            groups[flip] = groups.get(flip, 0) + t.coeff * phase
        if not groups:
            groups[0] = np.zeros(self.dim, dtype=complex)
        masks = np.array(sorted(groups), dtype=np.int64)
        diags = np.array([np.broadcast_to(groups[m], (self.dim,)) for m in masks])
        if np.all(diags.imag == 0):
            diags = np.ascontiguousarray(diags.real)
        else:
            diags = np.ascontiguousarray(diags, dtype=complex)
        return masks, diags

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Return ``H @ psi`` without materializing H."""
        psi = np.asarray(psi)
        if psi.shape != (self.dim,):
            raise ValueError(f"state has shape {psi.shape}, expected ({self.dim},)")
        psi = np.ascontiguousarray(psi, dtype=complex)
        if out is None:
            out = np.empty(self.dim, dtype=complex)
        masks, diags = self._tables
        _apply_groups(masks, diags, psi, out)
        return out

    def expectation(self, psi: np.ndarray, tol: float = 1e-10) -> float:
        """Real part of <psi|H|psi>; raises if the imaginary residual exceeds ``tol``."""
        val = np.vdot(psi, self.apply(psi))
        if abs(val.imag) > tol * max(1.0, self._norm_bound):
            raise RuntimeError(f"non-Hermitian expectation residual {val.imag:.3e}")
        return float(val.real)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self._n_sites > cap:
            raise ResourceError(
                f"dense realization of {self._n_sites} sites exceeds cap of {cap}")
        masks, diags = self._tables
        idx = np.arange(self.dim)
        mat = np.zeros((self.dim, self.dim), dtype=complex)
        for m, d in zip(masks, diags):
            mat[idx, idx ^ m] += d
        return mat

    def to_dict(self) -> dict:
        return {
            "n_sites": self._n_sites,
            "terms": [{"sites": [[i, a] for i, a in t.sites], "coeff": t.coeff}
                      for t in self._terms],
        }


def build_spin_chain(params: SpinChainParams) -> HamiltonianOp:
    """Open Heisenberg chain ``J sum sigma_i . sigma_{i+1} - h sum sigma_i^z``.

    Uses Pauli matrices, not spin-1/2 operators.
    """
    n = int(params.n_sites)
    terms = []
    for i in range(n - 1):
        for a in AXES:
            terms.append(PauliString(((i, a), (i + 1, a)), params.J))
    for i in range(n):
        terms.append(PauliString(((i, "Z"),), -params.h))
    return HamiltonianOp(n, terms)


def heisenberg_chain(n_sites: int, J: float, h: float) -> HamiltonianOp:
    return build_spin_chain(SpinChainParams(n_sites, J, h))


def down_spin_counts(n_sites: int) -> np.ndarray:
    """Number of down spins (set bits) of every basis index."""
    idx = np.arange(1 << n_sites)
    return np.array([bin(k).count("1") for k in idx])


def from_dict(doc: dict) -> HamiltonianOp:
    """Build from ``{n_sites, terms: [...]}`` or the ``heisenberg_chain`` shorthand."""
    if doc.get("model") is not None:
        if doc["model"] != "heisenberg_chain":
            raise ValueError(f"unknown model {doc['model']!r}")
        return heisenberg_chain(int(doc["n_sites"]), float(doc["J"]), float(doc["h"]))
    terms = [PauliString(tuple((int(i), a) for i, a in t["sites"]), t["coeff"])
             for t in doc["terms"]]
    return HamiltonianOp(int(doc["n_sites"]), terms)


def load_toml(path) -> dict:
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load(path) -> HamiltonianOp:
    """Read a Hamiltonian document from a ``.json`` or ``.toml`` file."""
    path = str(path)
    if path.endswith(".toml"):
        return from_dict(load_toml(path))
    with open(path) as fh:
        return from_dict(json.load(fh))


def dump_json(h: HamiltonianOp, path) -> None:
    with open(path, "w") as fh:
        json.dump(h.to_dict(), fh, indent=2)


def pauli_sum(n_sites: int, spec: Sequence[tuple[str, float]]) -> HamiltonianOp:
    """Convenience constructor from labels like ``"X0 Z2"``."""
    terms = []
    for label, coeff in spec:
        sites = []
        for tok in label.split():
            sites.append((int(tok[1:]), tok[0]))
        terms.append(PauliString(tuple(sorted(sites)), coeff))
    return HamiltonianOp(n_sites, terms)
