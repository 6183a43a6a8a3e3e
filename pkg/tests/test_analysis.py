from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnetsim.analysis import (
    CorrelatorCounts,
    SnrModel,
    bell_fidelity,
    contrast_error,
    contrast_error_from_nodes,
    counts_from_csv,
    counts_from_json,
    counts_to_csv,
    counts_to_json,
    error_budget,
    exact_fidelity,
    fidelity_stddev,
    fidelity_stddev_bootstrap,
    isolate_source,
    mu_extraction,
    population_after_x_gate,
    snr_fidelity,
)
from qnetsim.cavity import SpinReflectivities
from qnetsim.protocol import BASIS_ROTATION, ProtocolConfig
from qnetsim.spinphoton import NodeConfig

from conftest import random_density

BELL = {"plus": np.array([1, 0, 0, 1]) / np.sqrt(2), "minus": np.array([1, 0, 0, -1]) / np.sqrt(2)}


def analytic_counts(rho):
    out = {}
    for b, u in BASIS_ROTATION.items():
        uu = np.kron(u, u)
        out[b] = np.real(np.diag(uu @ rho @ uu.conj().T)).reshape(2, 2)
    return CorrelatorCounts(out)


def test_perfect_and_uniform_counts():
    perfect = CorrelatorCounts({"zz": [[50, 0], [0, 50]], "xx": [[0, 50], [50, 0]], "yy": [[50, 0], [0, 50]]})
    assert bell_fidelity(perfect, "minus").fidelity == pytest.approx(1.0)
    assert bell_fidelity(perfect, "plus").fidelity == pytest.approx(0.0)
    uniform = CorrelatorCounts({b: [[25, 25], [25, 25]] for b in ("zz", "xx", "yy")})
    assert bell_fidelity(uniform, "minus").fidelity == pytest.approx(0.25)


def test_empty_basis_raises():
    with pytest.raises(ValueError):
        bell_fidelity(CorrelatorCounts({"zz": [[0, 0], [0, 0]], "xx": [[1, 0], [0, 1]], "yy": [[1, 0], [0, 1]]}),
                      "minus")


@given(st.integers(0, 2**32 - 1))
def test_formula_equals_trace_overlap(seed):
    rho = random_density(np.random.default_rng(seed), 4)
    cc = analytic_counts(rho)
    for t, ket in BELL.items():
        assert bell_fidelity(cc, t).raw_fidelity == pytest.approx(np.vdot(ket, rho @ ket).real, abs=1e-10)


def test_stddev_matches_bootstrap():
    rng = np.random.default_rng(4)
    p = {"zz": [0.45, 0.05, 0.05, 0.45], "xx": [0.05, 0.45, 0.45, 0.05], "yy": [0.45, 0.05, 0.05, 0.45]}
    cc = CorrelatorCounts({b: rng.multinomial(300, v).reshape(2, 2) for b, v in p.items()})
    sig = fidelity_stddev(cc, "minus")
    assert fidelity_stddev_bootstrap(cc, "minus", 4000, rng_seed=1) == pytest.approx(sig, rel=0.1)
    with pytest.raises(ValueError):
        fidelity_stddev_bootstrap(cc, "minus", 10)


def test_near_deterministic_counts_have_tiny_sigma():
    cc = CorrelatorCounts({"zz": [[5e5, 0], [0, 5e5]], "xx": [[0, 5e5], [5e5, 0]], "yy": [[5e5, 0], [0, 5e5]]})
    assert fidelity_stddev(cc, "minus") == pytest.approx(0.0, abs=1e-6)
    assert fidelity_stddev_bootstrap(cc, "minus", 1000, rng_seed=0) == pytest.approx(0.0, abs=1e-6)


def test_contrast_error_examples():
    assert contrast_error(0.1, 0.1, "minus") == 0
    assert contrast_error(-0.1, -0.1, "plus") == pytest.approx(0.04 / (0.04 + 1.0201))


@given(st.floats(0, 0.3), st.floats(0, 0.3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_contrast_error_matches_pipeline(ma, mb, pa, pb):
    ra, rb = ma * np.exp(1j * (np.pi + pa)), mb * np.exp(1j * (np.pi + pb))
    cfg = ProtocolConfig(node_a=NodeConfig(SpinReflectivities(0.8, 0.8 * ra)),
                         node_b=NodeConfig(SpinReflectivities(0.7, 0.7 * rb)), single_photon=True)
    for h in ("plus", "minus"):
        assert 1 - exact_fidelity(cfg, h) == pytest.approx(contrast_error(ra, rb, h), abs=1e-6)
    assert contrast_error_from_nodes(cfg.node_a.reflectivities, cfg.node_b.reflectivities, "plus") == \
        pytest.approx(contrast_error(ra, rb, "plus"))


def test_budget_all_off_is_zero():
    b = error_budget(ProtocolConfig(single_photon=True), sources=["mw", "contrast", "tdi"])
    for _, vals in b.rows:
        assert all(v == pytest.approx(0, abs=1e-12) for v in vals.values())


def test_budget_rows_nonnegative_and_bounded(ee_config, nn_config):
    for cfg in (ee_config, nn_config):
        b = error_budget(cfg)
        for c in b.columns:
            rows = [vals[c] for _, vals in b.rows]
            assert min(rows) >= 0
            assert b.total[c] >= max(rows) - 1e-12


def test_isolate_source_validation(ee_config):
    with pytest.raises(ValueError):
        isolate_source(ee_config, "gremlins")
    off = isolate_source(ee_config, None)
    assert exact_fidelity(off, "minus") == pytest.approx(1.0, abs=1e-9)


def test_snr_properties():
    m = SnrModel(0.8, 60.0, 5.2, 0.184)
    lengths = np.linspace(0, 500, 101)
    f = snr_fidelity(m, lengths)
    assert np.all(np.diff(f) <= 1e-15)
    assert f[-1] == pytest.approx(0.25, abs=1e-3)
    assert snr_fidelity(SnrModel(0.77, 60.0, 0.0), 40.0) == pytest.approx(0.77)


def test_mu_round_trip():
    assert mu_extraction(0.0).mu_eta == 0
    p = population_after_x_gate(0.017, 0.01)
    assert mu_extraction(p, 0.01).mu_eta == pytest.approx(0.017, rel=0.05)
    assert not mu_extraction(0.6).invertible


def test_counts_io_round_trip():
    cc = CorrelatorCounts({"zz": [[1, 2], [3, 4]], "xx": [[5, 6], [7, 8]], "yy": [[9, 10], [11, 12]]})
    for back in (counts_from_json(counts_to_json(cc)), counts_from_csv(counts_to_csv(cc))):
        for b in ("zz", "xx", "yy"):
            np.testing.assert_array_equal(back.counts[b], cc.counts[b])


def test_flag_detection_beats_raw(nn_config):
    assert exact_fidelity(nn_config, "minus", True) > exact_fidelity(nn_config, "minus", False)
    assert exact_fidelity(replace(nn_config, single_photon=True), "minus", True) > 0.8
