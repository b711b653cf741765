"""Shared oracles: dense Pauli strings built from explicit Kronecker products."""

import numpy as np
import pytest

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_string(n_sites, sites):
    """Dense operator for ``{site: axis}``; site 0 is the least-significant bit,
    so it is the rightmost Kronecker factor."""
    out = np.eye(1, dtype=complex)
    for i in reversed(range(n_sites)):
        out = np.kron(out, PAULI[sites.get(i, "I")])
    return out


def dense_oracle(h):
    """Reference matrix of a HamiltonianOp, independent of its own ``to_dense``."""
    mat = np.zeros((h.dim, h.dim), dtype=complex)
    for t in h.terms:
        mat += t.coeff * kron_string(h.n_sites, dict(t.sites))
    return mat


def heisenberg_oracle(n, J, h):
    mat = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n - 1):
        for a in "XYZ":
            mat += J * kron_string(n, {i: a, i + 1: a})
    for i in range(n):
        mat -= h * kron_string(n, {i: "Z"})
    return mat


def random_state(rng, dim):
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return z / np.linalg.norm(z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
