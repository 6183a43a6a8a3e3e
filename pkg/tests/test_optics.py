import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnetsim import optics


@pytest.mark.parametrize("n_max", [0, 1, 2, 3, 5])
def test_fock_basis_layout(n_max):
    basis = optics.fock_basis(n_max)
    assert len(basis) == optics.fock_dim(n_max) == (n_max + 1) * (n_max + 2) // 2
    assert basis[0] == (0, 0)
    if n_max:
        assert basis[1] == (1, 0) and basis[2] == (0, 1)
    assert all(ne + nl <= n_max for ne, nl in basis)


@given(st.integers(1, 4), st.integers(0, 1), st.floats(0, 1))
def test_bin_loss_is_complete(n_max, b, t):
    ks = optics.bin_loss_kraus(n_max, b, np.sqrt(t) * np.exp(0.3j))
    s = sum(k.conj().T @ k for k in ks)
    np.testing.assert_allclose(s, np.eye(optics.fock_dim(n_max)), atol=1e-12)


@given(st.integers(1, 4), st.floats(0, 1))
def test_mode_loss_keeps_photon_number_binomial(n_max, t):
    ks = optics.mode_loss_kraus(n_max, t)
    n = n_max
    v = optics.symmetric_number_state(n, n_max)
    rho = sum(k @ np.outer(v, v.conj()) @ k.conj().T for k in ks)
    tot = optics.total_number(n_max)
    for m in range(n + 1):
        p = np.real(np.trace(rho[np.ix_(tot == m, tot == m)]))
        assert p == pytest.approx(math.comb(n, m) * t**m * (1 - t) ** (n - m), abs=1e-12)


@given(st.integers(1, 4), st.floats(0, 1), st.floats(0, 0.5))
def test_tdi_effects_form_povm(n_max, eff, vis):
    e = optics.tdi_effects(n_max, eff, vis)
    np.testing.assert_allclose(sum(e.values()), np.eye(optics.fock_dim(n_max)), atol=1e-12)
    for m in e.values():
        assert np.linalg.eigvalsh(m)[0] > -1e-12


def test_tdi_single_photon_outcomes():
    e = optics.tdi_effects(1, 1.0)
    plus = np.array([0, 1, 1]) / np.sqrt(2)
    minus = np.array([0, 1, -1]) / np.sqrt(2)
    # half of each bin exits through a side slot
    assert np.vdot(plus, e["plus"] @ plus).real == pytest.approx(0.5)
    assert np.vdot(plus, e["minus"] @ plus).real == pytest.approx(0.0)
    assert np.vdot(minus, e["minus"] @ minus).real == pytest.approx(0.5)
    e = optics.tdi_effects(1, 1.0, 0.02)
    assert np.vdot(plus, e["minus"] @ plus).real == pytest.approx(0.01)


def test_threshold_detectors():
    p = optics.threshold_click_probabilities(2, 0, 0.5)
    assert p["plus"] == pytest.approx(0.75) and p["minus"] == 0
    assert sum(optics.threshold_click_probabilities(1, 1, 0.3).values()) == pytest.approx(1)


def test_poisson_weights_against_scipy():
    from scipy.stats import poisson

    w, tail = optics.poisson_weights(0.16, 3)
    ref = poisson.pmf(np.arange(4), 0.16)
    np.testing.assert_allclose(w, ref / ref.sum(), rtol=1e-12)
    assert tail == pytest.approx(poisson.sf(3, 0.16), rel=1e-6)


def test_symmetric_number_state_normalised():
    for n in range(4):
        v = optics.symmetric_number_state(n, 3)
        assert np.vdot(v, v).real == pytest.approx(1)
