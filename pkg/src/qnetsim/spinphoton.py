"""Spin-photon gates, the weak-coherent time-bin source and the TDI herald."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import optics
from .cavity import SpinReflectivities
from .qcore import (
    P0,
    P1,
    X,
    MixedState,
    QuantumChannel,
    RegisterLayout,
    apply_channel,
    bit_flip,
    maximally_mixed,
    partial_trace,
    reorder,
    tensor,
    trace_out_with_effect,
)

HERALDS = ("plus", "minus", "none")


@dataclass(frozen=True)
class TimeBinPhoton:
    n_max: int = 2
    bin_separation_s: float = 142e-9
    carrier_frequency_hz: float = 406.7e12

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def dim(self) -> int:
        return optics.fock_dim(self.n_max)

    @property
    def basis(self):
        return optics.fock_basis(self.n_max)


@dataclass(frozen=True)
class WcsSource:
    """Phase-randomised coherent state; ``single_photon`` swaps in an ideal |1_+>."""

    mu: float
    single_photon: bool = False

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")

    def number_weights(self, n_max: int) -> np.ndarray:
        if self.single_photon:
            w = np.zeros(n_max + 1)
            w[1] = 1.0
            return w
        return optics.poisson_weights(self.mu, n_max)[0]

    def truncation_error(self, n_max: int) -> float:
        if self.single_photon:
            return 0.0
        return optics.poisson_weights(self.mu, n_max)[1]


@dataclass(frozen=True)
class NodeConfig:
    reflectivities: SpinReflectivities
    mw_error: float = 0.0
    readout_error: float = 0.0
    nuclear_assignment_error: float = 0.0
    readout_duration_s: float = 67e-6
    t2_electron_s: dict = field(default_factory=lambda: {"XY8-1": 125e-6})
    t2_nuclear_s: dict = field(default_factory=lambda: {"XY8-1": 0.339, "XY8-128": 2.11})
    decay_exponent: float = 2.0

    def __post_init__(self):
        for name in ("mw_error", "readout_error", "nuclear_assignment_error"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.readout_duration_s <= 0:
            raise ValueError("readout_duration_s must be positive")
        for table in (self.t2_electron_s, self.t2_nuclear_s):
            if any(t <= 0 for t in table.values()):
                raise ValueError("T2 values must be positive")
        if self.decay_exponent < 1:
            raise ValueError("decay_exponent must be >= 1")


@dataclass(frozen=True)
class TdiModel:
    visibility_error: float = 0.02
    detector_efficiency: float = 1.0
    dark_count_rate_hz: float = 0.0
    noise_photon_rate_hz: float = 0.0
    detection_window_s: float = 400e-9

    def __post_init__(self):
        for name in ("visibility_error", "detector_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("dark_count_rate_hz", "noise_photon_rate_hz", "detection_window_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def noise_click_probability(self) -> float:
        rate = self.dark_count_rate_hz + self.noise_photon_rate_hz
        return float(-np.expm1(-rate * self.detection_window_s))


def photon_layout(label: str = "photon", n_max: int = 2) -> RegisterLayout:
    return RegisterLayout(((label, optics.fock_dim(n_max)),))


def prepare_photonic_qubit(source: WcsSource, n_max: int = 2, label: str = "photon") -> MixedState:
    """Photon-number mixture of |n_+> states (the phase-randomised coherent state)."""
    w = source.number_weights(n_max)
    rho = np.zeros((optics.fock_dim(n_max),) * 2, dtype=complex)
    for n, wn in enumerate(w):
        if wn:
            v = optics.symmetric_number_state(n, n_max)
            rho += wn * np.outer(v, v.conj())
    return MixedState(photon_layout(label, n_max), rho)


def _n_max_of(state: MixedState, photon: str) -> int:
    d = state.layout.dim_of([photon])
    n = 0
    while optics.fock_dim(n) < d:
        n += 1
    if optics.fock_dim(n) != d:
        raise ValueError(f"register {photon!r} (dim {d}) is not a truncated two-mode Fock space")
    return n


def reflection_channel(n_max: int, bin_index: int, refl: SpinReflectivities) -> QuantumChannel:
    """Reflection of one time bin off the cavity, acting on (photon, electron).

    Photons that are not reflected leave through a port that reveals the spin
    state, so the leak branches are spin-diagonal; the reflected part keeps
    full coherence between spin states.
    """
    amps = {0: refl.r_low, 1: refl.r_high}
    projs = {0: P0, 1: P1}
    per_spin = {s: optics.bin_loss_kraus(n_max, bin_index, amps[s]) for s in (0, 1)}
    kraus = [sum(np.kron(per_spin[s][0], projs[s]) for s in (0, 1))]
    for s in (0, 1):
        for k in per_spin[s][1:]:
            if np.any(k):
                kraus.append(np.kron(k, projs[s]))
    return QuantumChannel(tuple(kraus))


def _noisy_x(state: MixedState, target: str, p: float) -> MixedState:
    state = apply_channel(state, QuantumChannel.unitary(X), [target])
    return apply_channel(state, bit_flip(p), [target]) if p else state


def _noisy_cnot(state: MixedState, control: str, target: str, p: float, on: int) -> MixedState:
    """Flip `target` when `control` is in |on>, then a bit-flip error on `target`."""
    proj_on = P1 if on == 1 else P0
    u = np.kron(proj_on, X) + np.kron(np.eye(2) - proj_on, np.eye(2))
    state = apply_channel(state, QuantumChannel.unitary(u), [control, target])
    return apply_channel(state, bit_flip(p), [target]) if p else state


def _reflect(state, photon, electron, bin_index, refl):
    chan = reflection_channel(_n_max_of(state, photon), bin_index, refl)
    return apply_channel(state, chan, [photon, electron])


def e_gamma_gate(
    state: MixedState, photon: str, electron: str, refl: SpinReflectivities, mw_error: float = 0.0
) -> MixedState:
    """Early reflection, NOT on the electron, late reflection."""
    for lab in (photon, electron):
        state.layout.index(lab)
    state = _reflect(state, photon, electron, 0, refl)
    state = _noisy_x(state, electron, mw_error)
    return _reflect(state, photon, electron, 1, refl)


def phone_gate(
    state: MixedState,
    photon: str,
    electron: str,
    nucleus: str,
    refl: SpinReflectivities,
    mw_error: float = 0.0,
) -> MixedState:
    """Photon-nucleus gate; the electron ends in |down> when no fault occurred."""
    for lab in (photon, electron, nucleus):
        state.layout.index(lab)
    state = _noisy_cnot(state, nucleus, electron, mw_error, on=1)
    state = _reflect(state, photon, electron, 0, refl)
    state = _noisy_x(state, electron, mw_error)
    state = _reflect(state, photon, electron, 1, refl)
    return _noisy_cnot(state, nucleus, electron, mw_error, on=0)


def apply_photon_loss(state: MixedState, photon: str, transmission: float) -> MixedState:
    """Bin-independent loss (fibres, couplers, converters)."""
    if not 0 <= transmission <= 1:
        raise ValueError("transmission must be in [0, 1]")
    if transmission == 1:
        return state
    kraus = optics.mode_loss_kraus(_n_max_of(state, photon), transmission)
    return apply_channel(state, QuantumChannel(tuple(kraus)), [photon])


@dataclass(frozen=True)
class TdiBranch:
    """Unnormalised post-measurement states for one herald outcome."""

    real: MixedState
    noise: MixedState | None

    @property
    def probability(self) -> float:
        return self.real.trace + (self.noise.trace if self.noise is not None else 0.0)


def tdi_branches(
    state: MixedState, photon: str, tdi: TdiModel, memory: Sequence[str] | None = None
) -> dict[str, TdiBranch]:
    """All TDI outcomes with their unnormalised spin states.

    A noise click only matters when no photon was detected; it then heralds
    plus or minus with equal odds and leaves the `memory` registers maximally
    mixed (all non-photon registers when ``memory`` is None).
    """
    n_max = _n_max_of(state, photon)
    eff = optics.tdi_effects(n_max, tdi.detector_efficiency, tdi.visibility_error)
    real = {h: trace_out_with_effect(state, photon, eff[h]) for h in HERALDS}
    pn = tdi.noise_click_probability
    out = {}
    if pn > 0:
        dark = real["none"]
        labels = dark.layout.labels
        mem = list(labels) if memory is None else [lab for lab in labels if lab in memory]
        rest = [lab for lab in labels if lab not in mem]
        mixed = maximally_mixed(dark.layout.subset(mem))
        if rest:
            base = reorder(tensor(partial_trace(dark, rest), mixed), labels)
        else:
            base = mixed.scaled(dark.trace)
        noise = base.scaled(pn / 2)
        for h in ("plus", "minus"):
            out[h] = TdiBranch(real[h], noise)
        out["none"] = TdiBranch(dark.scaled(1 - pn), None)
    else:
        for h in HERALDS:
            out[h] = TdiBranch(real[h], None)
    return out


@dataclass(frozen=True)
class TdiResult:
    herald: str
    post_state: MixedState | None
    was_noise: bool


def tdi_measure(
    state: MixedState, photon: str, tdi: TdiModel, rng_seed=None, memory: Sequence[str] | None = None
) -> TdiResult:
    """Sample a TDI outcome and return the normalised post-measurement state."""
    rng = np.random.default_rng(rng_seed)
    branches = tdi_branches(state, photon, tdi, memory)
    probs = np.array([branches[h].probability for h in HERALDS])
    probs = np.clip(probs, 0, None)
    h = HERALDS[rng.choice(3, p=probs / probs.sum())]
    b = branches[h]
    was_noise = False
    if b.noise is not None and rng.random() < b.noise.trace / b.probability:
        was_noise = True
        post = b.noise
    else:
        post = b.real
    if post.trace <= 0:
        return TdiResult(h, None, was_noise)
    return TdiResult(h, post.normalized(), was_noise)
