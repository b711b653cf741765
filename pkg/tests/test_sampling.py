import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from qllg.hamiltonian import heisenberg_chain
from qllg.sampling import (DEFAULT_WINDOWS, OverlapStats, SeededSource, complex_gaussians,
                           haar_random_state, haar_random_states, overlap_from_samples,
                           overlap_statistics, window_probability)
from qllg.spectral import EnergyProjector, diagonalize, ground_projector

# Frozen outputs of the documented PCG64 + Box-Muller pipeline.
GOLDEN_42_0 = np.array([0.36557653183659955 - 0.2288352211537132j,
                        -0.1440819882510921 + 0.3685126499110471j,
                        0.2181711606643977 + 0.4288147903844155j,
                        0.00833844261628358 - 0.6525923222224265j])
GOLDEN_42_1 = np.array([0.2868954294905622 + 0.08619067406989993j,
                        0.2805071363902206 + 0.22407896853748338j,
                        -0.7077436107038647 + 0.15436602612981468j,
                        0.43918825913737763 + 0.25248827112316197j])


def test_golden_states():
    np.testing.assert_allclose(haar_random_state(2, SeededSource(42, 0)), GOLDEN_42_0,
                               rtol=0, atol=1e-15)
    np.testing.assert_allclose(haar_random_state(2, SeededSource(42, 1)), GOLDEN_42_1,
                               rtol=0, atol=1e-15)


def test_batch_rows_equal_single_draws():
    rows = haar_random_states(4, 3, SeededSource(42, 0))
    np.testing.assert_array_equal(rows[0], haar_random_state(2, SeededSource(42, 0)))


def test_determinism_and_streams():
    a = haar_random_state(6, SeededSource(123, 4))
    b = haar_random_state(6, SeededSource(123, 4))
    c = haar_random_state(6, SeededSource(123, 5))
    assert a.tobytes() == b.tobytes()
    assert not np.allclose(a, c)
    assert SeededSource(123).child(5) == SeededSource(123, 5)


def test_seed_validation_and_entropy(caplog):
    with pytest.raises(ValueError):
        SeededSource(-1)
    with pytest.raises(ValueError):
        SeededSource(2 ** 64)
    with caplog.at_level("INFO"):
        src = SeededSource.from_entropy()
    assert str(src.seed) in caplog.text
    with pytest.raises(ValueError):
        haar_random_state(0, SeededSource(1))


def test_gaussian_moments():
    z = complex_gaussians(SeededSource(9).generator(), 200_000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.var(z.real) == pytest.approx(0.5, abs=0.01)
    assert abs(np.mean(z)) < 0.01


def test_states_are_normalized():
    states = haar_random_states(64, 500, SeededSource(3))
    np.testing.assert_allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-12)


def test_first_moment_of_basis_overlap():
    states = haar_random_states(256, 10_000, SeededSource(8))
    p = np.abs(states[:, 0]) ** 2
    se = p.std(ddof=1) / math.sqrt(len(p))
    assert abs(p.mean() - 1 / 256) <= 3 * se


def test_unitary_invariance_ks():
    dim = 32
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    a = np.abs(haar_random_states(dim, 10_000, SeededSource(1, 0))[:, 0]) ** 2
    b = np.abs(haar_random_states(dim, 10_000, SeededSource(1, 1)) @ q.conj()[:, 3]) ** 2
    assert ks_2samp(a, b).pvalue > 0.01


# --- window integrals -------------------------------------------------------

def test_window_examples():
    assert window_probability(0.5, 0.5) == (0.0, 0.0, 0.0)
    full = window_probability(0.0, 1e6)
    assert full.corrected == pytest.approx(1.0)
    assert full.haar == pytest.approx(1.0)
    assert full.literal == pytest.approx(1 / math.sqrt(2 * math.pi))
    w = window_probability(0.1, 4.0)
    assert w.corrected == pytest.approx(0.7063293701494908, rel=1e-12)
    assert w.literal == pytest.approx(0.28178464964194555, rel=1e-12)
    assert w.haar == pytest.approx(math.exp(-0.1) - math.exp(-4.0))


@pytest.mark.parametrize("lo,hi", [(1.0, 0.5), (-0.1, 1.0)])
def test_window_rejects(lo, hi):
    with pytest.raises(ValueError):
        window_probability(lo, hi)


def test_window_fractions_against_monte_carlo():
    # rank-1 target in D=4096: D*p0 is close to Exp(1)
    dim = 4096
    proj = EnergyProjector(np.eye(dim, 1, dtype=complex), 0.0)
    stats = overlap_statistics(proj, 20_000, SeededSource(11), windows=[(0.1, 4.0)])
    lo, hi, emp, ana = stats.windows[0]
    se = math.sqrt(ana.haar * (1 - ana.haar) / stats.n_samples)
    assert abs(emp - ana.haar) < 5 * se
    # neither Gaussian-integral reading describes the sampled law
    assert abs(emp - ana.corrected) > 10 * se
    assert abs(emp - ana.literal) > 10 * se


# --- overlap statistics -----------------------------------------------------

def test_overlap_statistics_nondegenerate():
    s = diagonalize(heisenberg_chain(8, 2.0, 0.5))
    g = ground_projector(s)
    assert g.rank == 1
    stats = overlap_statistics(g, 10_000, SeededSource(2024))
    assert stats.dim == 256
    assert abs(stats.mean_overlap - 1 / 256) <= 4 * stats.stderr
    assert stats.frac_positive == 1.0
    assert 0 <= stats.mean_overlap <= 1
    assert [w[:2] for w in stats.windows] == list(DEFAULT_WINDOWS)


def test_overlap_statistics_degenerate_rank():
    s = diagonalize(heisenberg_chain(2, 2.0, 4.0))
    g = ground_projector(s)
    assert g.rank == 2
    stats = overlap_statistics(g, 10_000, SeededSource(6))
    assert stats.expected_mean == 0.5
    assert abs(stats.mean_overlap - 0.5) <= 4 * stats.stderr


def test_overlap_statistics_reproducible_and_csv(tmp_path):
    proj = EnergyProjector(np.eye(16, 1, dtype=complex), 0.0)
    a = overlap_statistics(proj, 500, SeededSource(77), batch=128)
    b = overlap_statistics(proj, 500, SeededSource(77), batch=500)
    assert a.mean_overlap == b.mean_overlap
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header.startswith("dim,n_samples,mean_p0,stderr,window_lo,window_hi,empirical_frac,"
                             "analytic_frac")
    with pytest.raises(ValueError):
        overlap_statistics(proj, 99, SeededSource(1))


def test_overlap_from_samples_is_order_independent():
    p0 = np.random.default_rng(0).exponential(1 / 64, size=1000)
    a = overlap_from_samples(p0, 64, 1)
    b = overlap_from_samples(p0[::-1].copy(), 64, 1)
    assert a.windows == b.windows
    assert a.mean_overlap == pytest.approx(b.mean_overlap, rel=1e-14)
    assert isinstance(a, OverlapStats)
