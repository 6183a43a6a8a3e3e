"""Truncated two-mode Fock space for time-bin photons and linear-optics maps on it."""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial, sqrt

import numpy as np


@lru_cache(maxsize=None)
def fock_basis(n_max: int) -> tuple[tuple[int, int], ...]:
    """(n_early, n_late) occupations with total <= n_max.

    Ordered by total photon number, then by decreasing early occupation, so
    index 0 is vacuum, 1 is |e>, 2 is |l>.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    return tuple((ne, n - ne) for n in range(n_max + 1) for ne in range(n, -1, -1))


def fock_dim(n_max: int) -> int:
    return (n_max + 1) * (n_max + 2) // 2


@lru_cache(maxsize=None)
def fock_index(n_max: int) -> dict:
    return {occ: i for i, occ in enumerate(fock_basis(n_max))}


def total_number(n_max: int) -> np.ndarray:
    return np.array([ne + nl for ne, nl in fock_basis(n_max)])


def bin_loss_kraus(n_max: int, bin_index: int, amplitude: complex) -> list[np.ndarray]:
    """Kraus operators for one bin passing a beam splitter with transmitted amplitude a.

    K_m removes m photons into an unobserved environment:
    K_m|n> = sqrt(C(n,m)) a^(n-m) t^m |n-m>, with t = sqrt(1-|a|^2).
    """
    a = complex(amplitude)
    t = sqrt(max(0.0, 1.0 - abs(a) ** 2))
    basis = fock_basis(n_max)
    idx = fock_index(n_max)
    ops = []
    for m in range(n_max + 1):
        k = np.zeros((len(basis), len(basis)), dtype=complex)
        for j, occ in enumerate(basis):
            n = occ[bin_index]
            if n < m:
                continue
            out = list(occ)
            out[bin_index] = n - m
            k[idx[tuple(out)], j] = sqrt(comb(n, m)) * a ** (n - m) * t**m
        ops.append(k)
    return ops


def mode_loss_kraus(n_max: int, transmission: float) -> list[np.ndarray]:
    """Same loss on both bins (a fibre or a lossy optic seen by the whole photon)."""
    amp = sqrt(transmission)
    early = bin_loss_kraus(n_max, 0, amp)
    late = bin_loss_kraus(n_max, 1, amp)
    return [a @ b for a in early for b in late if np.any(a) and np.any(b)]


def _expand(occ: tuple[int, ...], transfer: np.ndarray) -> dict[tuple[int, ...], complex]:
    """Output Fock amplitudes of prod_i (sum_j M_ij b_j^dag)^{n_i}/sqrt(n_i!) |0>."""
    n_out = transfer.shape[1]
    poly = {(0,) * n_out: 1.0 + 0j}
    for i, n in enumerate(occ):
        for _ in range(n):
            nxt: dict = {}
            for mono, c in poly.items():
                for j in range(n_out):
                    if transfer[i, j] == 0:
                        continue
                    m = list(mono)
                    m[j] += 1
                    m = tuple(m)
                    nxt[m] = nxt.get(m, 0) + c * transfer[i, j]
            poly = nxt
    norm = 1.0 / sqrt(np.prod([factorial(n) for n in occ]))
    return {
        m: c * norm * sqrt(np.prod([factorial(k) for k in m]))
        for m, c in poly.items()
        if abs(c) > 0
    }


# TDI as a linear network. Inputs (early, late); outputs (side_e, c_plus, c_minus, side_l).
# The early bin takes the long arm and the late bin the short arm, so only half of
# each bin reaches the central time slot where the two interfere.
TDI_TRANSFER = np.array(
    [
        [1 / sqrt(2), 0.5, 0.5, 0.0],
        [0.0, 0.5, -0.5, 1 / sqrt(2)],
    ],
    dtype=complex,
)


@lru_cache(maxsize=None)
def tdi_output_vectors(n_max: int) -> dict[tuple[int, ...], np.ndarray]:
    """Map output occupation -> row vector v with amplitude <out|U|in> = v[in]."""
    basis = fock_basis(n_max)
    out: dict[tuple[int, ...], np.ndarray] = {}
    for j, occ in enumerate(basis):
        for o, amp in _expand(occ, TDI_TRANSFER).items():
            vec = out.setdefault(o, np.zeros(len(basis), dtype=complex))
            vec[j] += amp
    return out


def threshold_click_probabilities(k_plus: int, k_minus: int, efficiency: float) -> dict[str, float]:
    """Outcome probabilities for two threshold detectors seeing k_+ and k_- photons."""
    miss_p = (1 - efficiency) ** k_plus
    miss_m = (1 - efficiency) ** k_minus
    return {
        "plus": (1 - miss_p) * miss_m,
        "minus": (1 - miss_m) * miss_p,
        "both": (1 - miss_p) * (1 - miss_m),
        "none": miss_p * miss_m,
    }


def tdi_effects(n_max: int, efficiency: float, visibility_error: float = 0.0) -> dict[str, np.ndarray]:
    """POVM elements {plus, minus, none} on the photon register.

    Double clicks are discarded (folded into none), as are photons leaving
    through the side time slots. The visibility error swaps plus and minus.
    """
    dim = fock_dim(n_max)
    eff = {k: np.zeros((dim, dim), dtype=complex) for k in ("plus", "minus", "none")}
    for occ, v in tdi_output_vectors(n_max).items():
        probs = threshold_click_probabilities(occ[1], occ[2], efficiency)
        proj = np.outer(v.conj(), v)
        eff["plus"] += probs["plus"] * proj
        eff["minus"] += probs["minus"] * proj
        eff["none"] += (probs["none"] + probs["both"]) * proj
    if visibility_error:
        p, m = eff["plus"], eff["minus"]
        eff["plus"] = (1 - visibility_error) * p + visibility_error * m
        eff["minus"] = (1 - visibility_error) * m + visibility_error * p
    return eff


def poisson_weights(mu: float, n_max: int) -> tuple[np.ndarray, float]:
    """Renormalised Poisson weights on 0..n_max and the discarded tail mass."""
    n = np.arange(n_max + 1)
    w = np.exp(-mu) * mu**n / np.array([factorial(k) for k in n], dtype=float)
    tail = max(0.0, 1.0 - w.sum())
    return w / w.sum(), tail


def symmetric_number_state(n: int, n_max: int) -> np.ndarray:
    """|n_+>: n photons all in (|e>+|l>)/sqrt(2)."""
    vec = np.zeros(fock_dim(n_max), dtype=complex)
    idx = fock_index(n_max)
    for k in range(n + 1):
        vec[idx[(k, n - k)]] = sqrt(comb(n, k)) / 2 ** (n / 2)
    return vec

