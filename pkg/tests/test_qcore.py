import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnetsim.qcore import (
    H,
    P0,
    P1,
    X,
    LayoutError,
    MixedState,
    PureState,
    QuantumChannel,
    RegisterLayout,
    ShapeError,
    apply_channel,
    apply_unitary,
    basis_state,
    bit_flip,
    dephasing,
    depolarizing,
    expectation,
    maximally_mixed,
    measure_projective,
    partial_trace,
    reorder,
    tensor,
    trace_out_with_effect,
)

from conftest import random_density, random_unitary

seeds = st.integers(0, 2**32 - 1)


def two_qubits(rho=None):
    lay = RegisterLayout((("a", 2), ("b", 2)))
    return MixedState(lay, np.eye(4) / 4 if rho is None else rho)


def brute_partial_trace(rho, dims, keep):
    # index-by-index loop oracle
    n = len(dims)
    dk = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((dk, dk), dtype=complex)
    for i in np.ndindex(*dims):
        for j in np.ndindex(*dims):
            if any(i[k] != j[k] for k in range(n) if k not in keep):
                continue
            a = np.ravel_multi_index([i[k] for k in keep], [dims[k] for k in keep])
            b = np.ravel_multi_index([j[k] for k in keep], [dims[k] for k in keep])
            out[a, b] += rho[np.ravel_multi_index(i, dims), np.ravel_multi_index(j, dims)]
    return out


def test_layout_rejects_duplicates_and_oversize():
    with pytest.raises(LayoutError):
        RegisterLayout((("a", 2), ("a", 2)))
    with pytest.raises(LayoutError):
        RegisterLayout((("a", 16), ("b", 17)))
    with pytest.raises(LayoutError):
        RegisterLayout((("a", 2),)).index("b")


def test_mixed_state_validation():
    lay = RegisterLayout((("a", 2),))
    with pytest.raises(ShapeError):
        MixedState(lay, np.eye(3) / 3)
    with pytest.raises(ValueError):
        MixedState(lay, np.eye(2))
    with pytest.raises(ValueError):
        MixedState(lay, np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        MixedState(lay, np.array([[0.5, 0.5], [0.1, 0.5]]))
    # branch states may be sub-normalised
    assert MixedState(lay, np.eye(2) / 4, check=False).trace == pytest.approx(0.5)


def test_pure_state_normalisation():
    lay = RegisterLayout((("a", 2),))
    with pytest.raises(ValueError):
        PureState(lay, [1, 1])
    assert PureState(lay, np.array([1, 1]) / np.sqrt(2)).density().fidelity_pure([1, 1] / np.sqrt(2)) == pytest.approx(1)


@given(seeds)
def test_partial_trace_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    dims = (2, 3, 2)
    lay = RegisterLayout((("a", 2), ("b", 3), ("c", 2)))
    rho = random_density(rng, 12)
    st_ = MixedState(lay, rho)
    for keep_labels, keep in ((["a"], [0]), (["b", "c"], [1, 2]), (["a", "c"], [0, 2])):
        red = partial_trace(st_, keep_labels)
        np.testing.assert_allclose(red.matrix, brute_partial_trace(rho, dims, keep), atol=1e-12)


@given(seeds)
def test_tensor_then_trace_recovers_factors(seed):
    rng = np.random.default_rng(seed)
    a = MixedState(RegisterLayout((("a", 2),)), random_density(rng, 2))
    b = MixedState(RegisterLayout((("b", 3),)), random_density(rng, 3))
    ab = tensor(a, b)
    np.testing.assert_allclose(partial_trace(ab, ["a"]).matrix, a.matrix, atol=1e-12)
    np.testing.assert_allclose(partial_trace(ab, ["b"]).matrix, b.matrix, atol=1e-12)


@given(seeds)
def test_reorder_round_trip(seed):
    rng = np.random.default_rng(seed)
    lay = RegisterLayout((("a", 2), ("b", 3)))
    s = MixedState(lay, random_density(rng, 6))
    back = reorder(reorder(s, ["b", "a"]), ["a", "b"])
    np.testing.assert_allclose(back.matrix, s.matrix, atol=1e-13)
    # reordered operator placement agrees with explicit kron
    sw = reorder(s, ["b", "a"])
    op = np.diag([1.0, 2.0, 3.0])
    assert expectation(s, op, ["b"]) == pytest.approx(expectation(sw, op, ["b"]))


@given(seeds, st.integers(1, 4))
def test_random_channel_keeps_trace_and_positivity(seed, n_kraus):
    rng = np.random.default_rng(seed)
    # Stinespring: columns of an isometry give a complete Kraus set
    u = random_unitary(rng, 2 * n_kraus)
    kraus = [u[k * 2:(k + 1) * 2, :2] for k in range(n_kraus)]
    chan = QuantumChannel(tuple(kraus))
    s = two_qubits(random_density(rng, 4))
    out = apply_channel(s, chan, ["b"])
    assert out.trace == pytest.approx(1.0, abs=1e-10)
    assert out.min_eigenvalue() > -1e-10
    # acting on b never changes the marginal of a
    np.testing.assert_allclose(partial_trace(out, ["a"]).matrix, partial_trace(s, ["a"]).matrix, atol=1e-12)


def test_channel_rejects_incomplete_kraus():
    with pytest.raises(ValueError):
        QuantumChannel((0.5 * np.eye(2),))
    QuantumChannel((0.5 * np.eye(2),), trace_preserving=False)
    with pytest.raises(ValueError):
        QuantumChannel((2 * np.eye(2),), trace_preserving=False)


def test_apply_unitary_matches_kron():
    s = basis_state(RegisterLayout((("a", 2), ("b", 2))), {"a": 0, "b": 0})
    out = apply_unitary(s, H, ["b"])
    ket = np.kron([1, 0], H @ [1, 0])
    assert out.fidelity_pure(ket) == pytest.approx(1.0)


def test_standard_channels():
    plus = MixedState(RegisterLayout((("q", 2),)), np.full((2, 2), 0.5))
    assert apply_channel(plus, dephasing(0.3), ["q"]).matrix[0, 1] == pytest.approx(0.15)
    assert apply_channel(plus, depolarizing(1.0), ["q"]).matrix[0, 1] == pytest.approx(0.0)
    zero = basis_state(RegisterLayout((("q", 2),)), {"q": 0})
    assert apply_channel(zero, bit_flip(0.2), ["q"]).matrix[1, 1].real == pytest.approx(0.2)


def test_measure_projective_branches():
    s = two_qubits(np.diag([0.5, 0.5, 0, 0]).astype(complex))
    br = measure_projective(s, "a", [P0, P1])
    assert br[0].probability == pytest.approx(1.0)
    assert br[1].empty and br[1].probability == 0.0
    br = measure_projective(s, "b", [P0, P1])
    assert sum(b.probability for b in br) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        measure_projective(s, "a", [P0])


def test_trace_out_with_effect_gives_conditional_state():
    lay = RegisterLayout((("a", 2), ("b", 2)))
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    s = PureState(lay, bell).density()
    cond = trace_out_with_effect(s, "a", P1)
    assert cond.trace == pytest.approx(0.5)
    np.testing.assert_allclose(cond.normalized().matrix, P1, atol=1e-12)


def test_maximally_mixed_and_x_expectation():
    m = maximally_mixed(RegisterLayout((("a", 2), ("b", 2))))
    assert expectation(m, X, ["a"]) == pytest.approx(0)
