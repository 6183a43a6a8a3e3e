import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnetsim.cavity import (
    NODE_A,
    NODE_B,
    SCAN_WINDOW_HZ,
    CavityParams,
    SpinReflectivities,
    bare_cavity_amplitude,
    cooperativity,
    max_contrast_frequency,
    reflection_amplitude,
    spin_reflectivities,
)


def oracle_r(g, ki, kt, gam, wc, wa, w):
    # input-output reflection written from the Heisenberg-Langevin steady state
    a_over_ain = -np.sqrt(ki) / (1j * (w - wc) + kt / 2 + g**2 / (1j * (w - wa) + gam / 2))
    return 1 + np.sqrt(ki) * a_over_ain


def test_matches_independent_formula():
    w = np.linspace(-50e9, 50e9, 101)
    for p in (NODE_A, NODE_B):
        for spin, wa in (("up", p.omega_siv_up), ("down", p.omega_siv_down)):
            ref = oracle_r(p.g, p.kappa_in, p.kappa_tot, p.gamma, p.omega_c, wa, w)
            np.testing.assert_allclose(reflection_amplitude(p, w, spin), ref, rtol=1e-12, atol=1e-12)


def test_no_coupling_reduces_to_bare_cavity():
    p = CavityParams(0.0, 10e9, 20e9, 1e9, 0.0, 0.0, 5e9)
    w = np.linspace(-30e9, 30e9, 31)
    np.testing.assert_allclose(reflection_amplitude(p, w, "up"), bare_cavity_amplitude(p, w))
    # critically coupled cavity on resonance absorbs everything
    crit = CavityParams(0.0, 10e9, 20e9, 1e9, 0.0, 0.0, 0.0)
    assert abs(bare_cavity_amplitude(crit, 0.0)) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(-1e11, 1e11))
def test_passive(w):
    for p in (NODE_A, NODE_B):
        assert abs(reflection_amplitude(p, w, "up")) <= 1 + 1e-12
        assert abs(reflection_amplitude(p, w, "down")) <= 1 + 1e-12


def test_cooperativities_of_shipped_nodes():
    assert cooperativity(NODE_A) == pytest.approx(12.4, rel=2e-3)
    assert cooperativity(NODE_B) == pytest.approx(1.5, rel=2e-3)


def test_shipped_nodes_reflectance_and_contrast_error():
    a = spin_reflectivities(NODE_A, *SCAN_WINDOW_HZ)
    b = spin_reflectivities(NODE_B, *SCAN_WINDOW_HZ)
    assert abs(a.r_high) ** 2 == pytest.approx(0.70, abs=0.005)
    assert abs(b.r_high) ** 2 == pytest.approx(0.60, abs=0.005)
    assert abs(a.relative_low) ** 2 == pytest.approx(0.043, abs=0.001)
    assert abs(b.relative_low) ** 2 == pytest.approx(0.082, abs=0.001)


def test_max_contrast_frequency_beats_dense_grid():
    w, c = max_contrast_frequency(NODE_A, *SCAN_WINDOW_HZ)
    grid = np.linspace(*SCAN_WINDOW_HZ, 200001)
    hi = np.abs(reflection_amplitude(NODE_A, grid, "up")) ** 2
    lo = np.abs(reflection_amplitude(NODE_A, grid, "down")) ** 2
    assert np.log(c) >= np.max(np.log(hi) - np.log(lo)) - 1e-9


def test_from_contrast_and_validation():
    r = SpinReflectivities.from_contrast(0.64, 0.04)
    assert abs(r.r_high) == pytest.approx(0.8)
    assert r.relative_low == pytest.approx(-0.2)
    assert r.contrast == pytest.approx(25.0)
    assert SpinReflectivities(1.0, 0.0).contrast == np.inf
    with pytest.raises(ValueError):
        SpinReflectivities(1.2, 0.0)
    with pytest.raises(ValueError):
        CavityParams(1e9, 2e9, 1e9, 1e9, 0, 0, 0)
    with pytest.raises(ValueError):
        max_contrast_frequency(NODE_A, 1.0, 0.0)
