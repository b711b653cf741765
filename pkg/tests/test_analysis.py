import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qllg.analysis import (ConvergenceReport, FitError, compare_to_exact, excited_weight,
                           first_crossing, fit_decay_rate, infidelity, lowest_populated_level,
                           predicted_tau, slow_mode_time, time_to_epsilon,
                           trace_norm_pure)
from qllg.dynamics import QLLGParams, evolve
from qllg.hamiltonian import heisenberg_chain, pauli_sum
from qllg.sampling import SeededSource, haar_random_state
from qllg.spectral import Spectrum, diagonalize, ground_projector

from conftest import random_state


def test_infidelity_examples(rng):
    a = random_state(rng, 8)
    assert infidelity(a, a) == pytest.approx(0.0, abs=1e-15)
    e0, e1 = np.eye(2)[0].astype(complex), np.eye(2)[1].astype(complex)
    assert infidelity(e0, e1) == 1.0
    for theta in (0.3, 2.0, -1.1):
        assert infidelity(a, np.exp(1j * theta) * a) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        infidelity(a, a[:4])


def test_excited_weight_examples(rng):
    s = diagonalize(heisenberg_chain(3, 1.0, 0.2))
    g = ground_projector(s)
    assert excited_weight(s.vectors[:, 0], g) == pytest.approx(0.0, abs=1e-15)
    assert excited_weight(s.vectors[:, 1], g) == pytest.approx(1.0)
    c0, c1 = 0.6, 0.8j
    psi = c0 * s.vectors[:, 0] + c1 * s.vectors[:, 1]
    assert excited_weight(psi, g) == pytest.approx(abs(c1) ** 2)
    psi2 = random_state(rng, 8)
    assert excited_weight(np.exp(0.7j) * psi2, g) == excited_weight(psi2, g)


def test_trace_norm_pure():
    assert trace_norm_pure(0.0) == 0.0
    assert trace_norm_pure(0.25) == pytest.approx(1.0)
    np.testing.assert_allclose(trace_norm_pure(np.array([1e-8, 2.0])), [2e-4, 2.0])


# --- decay fits -------------------------------------------------------------

def test_fit_synthetic_exponential():
    t = np.linspace(0, 5, 400)
    traj = SimpleNamespace(times=t, excited_weights=np.exp(-5 * t))
    assert fit_decay_rate(traj) == pytest.approx(5.0, abs=1e-6)


def test_fit_errors():
    t = np.linspace(0, 1, 5)
    with pytest.raises(FitError):
        fit_decay_rate(SimpleNamespace(times=t, excited_weights=np.exp(-5 * t)))
    t = np.linspace(0, 1, 50)
    with pytest.raises(FitError):
        fit_decay_rate(SimpleNamespace(times=t, excited_weights=0.01 * np.exp(t)))


def test_two_level_decay_rate():
    delta = 1.5
    h = pauli_sum(1, [("Z0", delta / 2)])
    s = diagonalize(h)
    p = QLLGParams(kappa=0.3, residual_tol=1e-12)
    r = evolve(np.array([1, 1]) / np.sqrt(2), h, p, s)
    rate = fit_decay_rate(r)
    assert rate == pytest.approx(2 * 0.3 * delta / 1.09, rel=0.01)


@pytest.mark.parametrize("hz", [0.0, 0.5, 1.0])
def test_rate_invariant_past_transients(hz):
    h = heisenberg_chain(6, 2.0, hz)
    s = diagonalize(h)
    p = QLLGParams()
    gap = s.levels[1] - s.levels[0]
    fitted = 0
    for seed in range(6):
        r = evolve(haar_random_state(6, SeededSource(seed, 100)), h, p, s)
        assert r.converged
        t0 = slow_mode_time(s, r.initial_state, p.kappa)
        try:
            rate = fit_decay_rate(r, t_min=t0)
        except FitError:
            continue  # transient outlasts the usable window
        fitted += 1
        assert rate / (2 * p.gamma * gap) == pytest.approx(1.0, abs=0.05)
    assert fitted >= 4


def test_slow_mode_time():
    s = Spectrum(np.array([0.0, 1.0, 2.0]), np.eye(3), 1e-12)
    psi = np.sqrt([0.5, 0.25, 0.25])
    # ratio exp(-2 gamma t) reaches 0.01 at t = log(100) / (2 gamma)
    gamma = 0.3 / 1.09
    assert slow_mode_time(s, psi, 0.3) == pytest.approx(math.log(100) / (2 * gamma))
    assert slow_mode_time(s, np.sqrt([0.5, 0.5, 0.0]), 0.3) == 0.0
    assert slow_mode_time(s, np.sqrt([0.5, 0.0, 0.5]), 0.3) == math.inf


def test_chain_decay_rate_within_five_percent():
    h = heisenberg_chain(6, 2.0, 1.0)
    s = diagonalize(h)
    p = QLLGParams(residual_tol=1e-10)
    r = evolve(haar_random_state(6, SeededSource(7, 0)), h, p, s)
    gap = s.levels[1] - s.levels[0]
    t0 = slow_mode_time(s, r.initial_state, p.kappa)
    assert fit_decay_rate(r, t_min=t0) / (2 * p.gamma * gap) == pytest.approx(1.0, abs=0.05)
    # excited weight is monotone once inside the fit window
    w = r.excited_weights
    sel = (w <= 1e-1) & (w >= 1e-10) & (r.times >= t0)
    assert np.diff(w[sel]).max() <= 1e-10


# --- closed-form times ------------------------------------------------------

def test_predicted_tau_values():
    assert predicted_tau(0.3, 1.0, 1.0, 12) == pytest.approx(math.log(2) * 1.09 / 0.3 * 12)
    assert predicted_tau(0.3, 1.0, 1.0, 12) == pytest.approx(30.2212, abs=1e-4)
    assert predicted_tau(0.3, 1, 1, 24) == pytest.approx(2 * predicted_tau(0.3, 1, 1, 12))
    assert predicted_tau(0.3, 1, 2, 12) == pytest.approx(0.5 * predicted_tau(0.3, 1, 1, 12))
    for bad in [(0, 1, 1, 4), (0.3, -1, 1, 4), (0.3, 1, 0, 4), (0.3, 1, 1, 0)]:
        with pytest.raises(ValueError):
            predicted_tau(*bad)


@settings(max_examples=50)
@given(kappa=st.floats(0.01, 5), hbar=st.floats(0.1, 10), gap=st.floats(1e-3, 10),
       n=st.integers(1, 20))
def test_time_to_epsilon_reduces_to_tau(kappa, hbar, gap, n):
    assert time_to_epsilon(kappa, hbar, gap, 2.0 ** -n, 1.0) == \
        pytest.approx(predicted_tau(kappa, hbar, gap, n), rel=1e-14)


def test_time_to_epsilon_edges():
    assert time_to_epsilon(0.3, 1, 1, 1.0, 1.0) == 0.0
    for p0, eps in [(0.0, 0.1), (1.5, 0.1), (0.1, 0.0), (0.1, 2.0)]:
        with pytest.raises(ValueError):
            time_to_epsilon(0.3, 1, 1, p0, eps)


def test_first_crossing():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    v = np.array([1.0, 1e-1, 1e-3, 1e-5])
    assert first_crossing(t, v, 1e-2) == pytest.approx(1.5)
    assert first_crossing(t, v, 2.0) == 0.0
    assert first_crossing(t, v, 1e-9) is None


# --- reports ----------------------------------------------------------------

def test_lowest_populated_level():
    s = diagonalize(heisenberg_chain(3, 2.0, 0.3))
    assert lowest_populated_level(s, s.vectors[:, 0]) == 0
    psi = (s.vectors[:, 1] + s.vectors[:, -1]) / math.sqrt(2)
    assert lowest_populated_level(s, psi) == s.groups[1]
    with pytest.raises(ValueError):
        lowest_populated_level(s, np.zeros(8))


def test_report_for_ground_start():
    h = heisenberg_chain(3, 2.0, 0.5)
    s = diagonalize(h)
    r = evolve(s.vectors[:, 0], h, QLLGParams(), s)
    rep = compare_to_exact(r, s, 0.3)
    assert rep.energy_error == pytest.approx(0.0, abs=1e-12)
    assert rep.infidelity == pytest.approx(0.0, abs=1e-12)
    assert rep.t_converged == 0.0
    assert rep.p0 == pytest.approx(1.0)


def test_report_two_sites(rng):
    h = heisenberg_chain(2, 2.0, 1.0)
    s = diagonalize(h)
    r = evolve(random_state(rng, 4), h, QLLGParams(), s)
    rep = compare_to_exact(r, s, 0.3)
    assert rep.energy_exact == pytest.approx(-6.0)
    assert rep.energy_error < 1e-6
    assert rep.gap == pytest.approx(6.0)
    assert rep.predicted_rate == pytest.approx(2 * 0.3 / 1.09 * 6)
    assert rep.tau_predicted == pytest.approx(predicted_tau(0.3, 1, 6, 2))
    assert not rep.degenerate_target
    assert rep.gated_infidelity == rep.infidelity
    d = rep.as_dict()
    assert all(math.isfinite(v) for v in d.values() if isinstance(v, float))
    assert 0 <= rep.infidelity <= 1 and 0 <= rep.subspace_infidelity <= 1


def test_report_degenerate_target_uses_subspace(rng):
    h = heisenberg_chain(2, 2.0, 4.0)
    s = diagonalize(h)
    r = evolve(random_state(rng, 4), h, QLLGParams(), s)
    rep = compare_to_exact(r, s, 0.3)
    assert rep.degenerate_target
    assert rep.gated_infidelity == rep.subspace_infidelity
    assert rep.subspace_infidelity < 1e-8
    assert rep.energy_error < 1e-6
    assert isinstance(rep, ConvergenceReport)
