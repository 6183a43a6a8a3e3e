import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import jv

from qnetsim.photonlink import (
    SNSPD_EFFICIENCY,
    TELECOM_LINK,
    VISIBLE_LINK,
    BudgetEntry,
    ControllerParams,
    DriftModel,
    FiberSegment,
    FrequencyShifter,
    LinkBudget,
    LinkConfig,
    PolarizationState,
    QfcChain,
    bessel_j,
    conversion_polarization_penalty,
    dop_cost,
    fiber_transmission,
    link_success_probability,
    shifter_efficiency,
    sideband_occupancy,
    stabilize_polarization,
)


@given(st.integers(-12, 12), st.floats(-40, 40))
def test_bessel_matches_scipy(k, x):
    assert bessel_j(k, x) == pytest.approx(jv(k, x), abs=1e-12)


def test_bessel_sum_rule():
    total = sum(bessel_j(k, 1.0) ** 2 for k in range(-40, 41))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_sideband_occupancy_limits():
    assert sideband_occupancy(FrequencyShifter(modulation_index=0.0, harmonic=0)) == 1.0
    assert sideband_occupancy(FrequencyShifter(modulation_index=0.0, harmonic=1)) == 0.0
    # first sideband maximum sits at the first zero of J1'
    grid = np.linspace(1.0, 3.0, 20001)
    best = grid[np.argmax(jv(1, grid) ** 2)]
    assert best == pytest.approx(1.8412, abs=1e-3)


def test_shifter_efficiency_products():
    s = FrequencyShifter(modulation_index=1.0)
    assert shifter_efficiency(s) == pytest.approx(jv(1, 1.0) ** 2 * 0.5 * 0.4)
    assert shifter_efficiency(FrequencyShifter(filter_transmission=0.0)) == 0.0
    assert shifter_efficiency(FrequencyShifter(total_override=0.074)) == 0.074


def test_qfc_efficiency():
    assert QfcChain().efficiency == 0.054
    assert QfcChain(total_override=None).efficiency == pytest.approx(0.33 * 0.30 * 0.545)


def test_fiber_transmission_examples():
    assert fiber_transmission(FiberSegment(0.0)) == 1.0
    assert fiber_transmission(FiberSegment(40.0, 0.3)) == pytest.approx(10**-1.2)
    assert fiber_transmission(FiberSegment(35.0, 11 / 35, 6.0)) == pytest.approx(0.0200, abs=5e-5)
    with pytest.raises(ValueError):
        FiberSegment(-1.0)


def test_budget_rows_and_product():
    b = LinkBudget((BudgetEntry("x", 0.5), BudgetEntry("y", 0.5, squared=True)))
    assert b.efficiency == pytest.approx(0.125)
    assert link_success_probability(b, gates=2, mu=0.1) == pytest.approx(0.125 * 0.25 * 0.5 * 0.1)
    with pytest.raises(ValueError):
        BudgetEntry("z", 0.0)


def test_shipped_links():
    assert SNSPD_EFFICIENCY == pytest.approx(0.875)
    assert VISIBLE_LINK.budget().efficiency == pytest.approx(0.002015, rel=1e-3)
    assert TELECOM_LINK.budget().efficiency == pytest.approx(0.00147, rel=1e-3)
    with pytest.raises(ValueError):
        LinkConfig(converter="magic")


def jones_penalty(chi, psi):
    # field along the lock axis for an ellipse rotated by psi
    e = np.array([np.cos(chi), 1j * np.sin(chi)])
    rot = np.array([[np.cos(psi), -np.sin(psi)], [np.sin(psi), np.cos(psi)]])
    return abs((rot @ e)[0]) ** 2


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_polarization_wraps_and_matches_jones(chi, psi):
    p = PolarizationState(chi, psi)
    assert -np.pi / 4 - 1e-12 <= p.chi <= np.pi / 4 + 1e-12
    assert -np.pi / 2 - 1e-12 <= p.psi < np.pi / 2 + 1e-12
    np.testing.assert_allclose(p.stokes, PolarizationState(p.chi, p.psi).stokes, atol=1e-12)
    assert conversion_polarization_penalty(p) == pytest.approx(jones_penalty(chi, psi), abs=1e-12)
    assert dop_cost(p) >= 0


def test_dop_cost_zero_only_at_lock():
    assert dop_cost(PolarizationState(0, 0)) == 0
    assert dop_cost(PolarizationState(0.1, 0)) > 0


@given(st.floats(-0.7, 0.7), st.floats(-1.4, 1.4))
def test_stabilizer_converges_without_drift(chi, psi):
    tr = stabilize_polarization(PolarizationState(chi, psi))
    assert tr.converged and tr.costs[-1] < 1e-3 and tr.iterations <= 200


def test_stabilizer_tracks_drift():
    tr = stabilize_polarization(PolarizationState(0.3, 0.8), DriftModel(), rng_seed=1, steps=500)
    assert np.mean(tr.costs[50:]) < 0.05
    again = stabilize_polarization(PolarizationState(0.3, 0.8), DriftModel(), rng_seed=1, steps=500)
    assert again.costs == tr.costs


def test_controller_params_respected():
    tr = stabilize_polarization(PolarizationState(0.5, 1.0), controller=ControllerParams(max_iterations=1))
    assert tr.iterations == 1


def test_carrier_is_not_a_shift():
    with pytest.raises(ValueError):
        shifter_efficiency(FrequencyShifter(harmonic=0))
