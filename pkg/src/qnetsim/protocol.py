"""Heralded entanglement trials between two nodes, memory decay and rate bookkeeping.

Each configuration is solved once exactly: the density-matrix pipeline gives
the joint probability of every (source, herald, flags, readout bits) record
for each tomography basis. Monte Carlo trials then sample that table with a
counter-based hash, which keeps sharded and sequential runs identical.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .cavity import SpinReflectivities
from .photonlink import LinkConfig
from .qcore import (
    H,
    P0,
    P1,
    MixedState,
    QuantumChannel,
    RegisterLayout,
    apply_channel,
    bit_flip,
    dephasing,
    partial_trace,
    tensor,
)
from .spinphoton import (
    NodeConfig,
    TdiModel,
    WcsSource,
    apply_photon_loss,
    e_gamma_gate,
    phone_gate,
    prepare_photonic_qubit,
    tdi_branches,
)

SPEED_OF_LIGHT = 299_792_458.0
BASES = ("zz", "xx", "yy")
SOURCES = ("real", "noise")
SIGNED_HERALDS = ("plus", "minus")
SDG = np.diag([1, -1j])
# maps the +1 eigenstate of the measured Pauli onto |0>
BASIS_ROTATION = {"zz": np.eye(2, dtype=complex), "xx": H, "yy": H @ SDG}
XY8_SHORT_LIMIT_S = 10e-3


@dataclass(frozen=True)
class Decoupling:
    sequence: str = "auto"
    duration_s: float = 0.0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("decoupling duration must be >= 0")

    def resolve(self) -> str:
        """XY8-1 for short holds (<= 10 ms), XY8-128 otherwise."""
        if self.sequence != "auto":
            return self.sequence
        return "XY8-1" if self.duration_s <= XY8_SHORT_LIMIT_S else "XY8-128"


@dataclass(frozen=True)
class ClassicalChannel:
    fiber_length_km: float = 0.0
    group_index: float = 1.468

    def __post_init__(self):
        if self.fiber_length_km < 0:
            raise ValueError("fiber length must be >= 0")


@dataclass(frozen=True)
class MemoryDecoherence:
    t2_s: float
    exponent: float = 2.0

    def __post_init__(self):
        if self.t2_s <= 0:
            raise ValueError("t2 must be positive")
        if self.exponent < 1:
            raise ValueError("exponent must be >= 1")

    def coherence(self, duration_s: float) -> float:
        return float(np.exp(-((duration_s / self.t2_s) ** self.exponent)))


def _ideal_node(**kw) -> NodeConfig:
    return NodeConfig(SpinReflectivities(1.0, 0.0), **kw)


@dataclass(frozen=True)
class ProtocolConfig:
    scheme: str = "ee"
    mu: float = 0.017
    node_a: NodeConfig = field(default_factory=_ideal_node)
    node_b: NodeConfig = field(default_factory=_ideal_node)
    link: LinkConfig = field(default_factory=lambda: LinkConfig(converter="none", fiber_coupling_a=1.0,
                                                                 fiber_coupling_b=1.0, free_space_a=1.0,
                                                                 circulator=1.0, detector_efficiency=1.0))
    tdi: TdiModel = field(default_factory=lambda: TdiModel(visibility_error=0.0))
    decoupling: Decoupling = Decoupling()
    error_detection: bool = True
    trials: int = 1000
    rng_seed: int = 0
    n_max: int = 2
    single_photon: bool = False
    # tomography pulses carry the node MW error (bit flip after the XX/YY rotation)
    rotation_mw_error: bool = False
    # a flag left in |up> detunes the memory decoupling and erases its coherence
    flag_dephasing: bool = False
    contrast_rejection_probability: float = 0.0
    classical: ClassicalChannel = ClassicalChannel()
    mode: str = "attempt"

    def __post_init__(self):
        if self.scheme not in ("ee", "nn"):
            raise ValueError("scheme must be 'ee' or 'nn'")
        if self.mode not in ("attempt", "heralded"):
            raise ValueError("mode must be 'attempt' or 'heralded'")
        if self.trials <= 0:
            raise ValueError("trials must be > 0")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if not 0 <= self.contrast_rejection_probability <= 1:
            raise ValueError("contrast_rejection_probability must be in [0, 1]")

    @property
    def source(self) -> WcsSource:
        return WcsSource(self.mu, self.single_photon)

    def cache_key(self) -> str:
        # trials, seed, mode and the rejection filter do not change the outcome table
        return repr(replace(self, trials=1, rng_seed=0, mode="attempt", contrast_rejection_probability=0.0))


# ---------------------------------------------------------------- exact pipeline


def _memory_labels(scheme: str) -> tuple[str, str]:
    return ("eA", "eB") if scheme == "ee" else ("nA", "nB")


def _initial_state(config: ProtocolConfig) -> MixedState:
    photon = prepare_photonic_qubit(config.source, config.n_max)
    plus = np.full((2, 2), 0.5, dtype=complex)
    down = np.diag([1.0, 0.0]).astype(complex)
    if config.scheme == "ee":
        regs = [("eA", plus), ("eB", plus)]
    else:
        regs = [("eA", down), ("nA", plus), ("eB", down), ("nB", plus)]
    state = MixedState(photon.layout, photon.matrix, check=False)
    for lab, rho in regs:
        state = tensor(state, MixedState(RegisterLayout(((lab, 2),)), rho, check=False))
    return state


def apply_decoupling_decay(
    state: MixedState, duration_s: float, decoherence: dict[str, MemoryDecoherence]
) -> MixedState:
    """Dephase each listed register with coherence exp(-(t/T2)^p); populations untouched."""
    if duration_s < 0:
        raise ValueError("duration must be >= 0")
    if duration_s == 0:
        return state
    for lab, model in decoherence.items():
        state = apply_channel(state, dephasing(model.coherence(duration_s)), [lab])
    return state


def _flag_dephasing_channel() -> QuantumChannel:
    # acts on (flag, memory): flag up fully dephases the memory
    return QuantumChannel(
        (np.kron(P0, np.eye(2)), np.kron(P1, P0), np.kron(P1, P1))
    )


def memory_decoherence(config: ProtocolConfig) -> dict[str, MemoryDecoherence]:
    seq = config.decoupling.resolve()
    out = {}
    for node, suffix in ((config.node_a, "A"), (config.node_b, "B")):
        table = node.t2_electron_s if config.scheme == "ee" else node.t2_nuclear_s
        if seq not in table:
            raise ValueError(f"no T2 entry for {seq} in node {suffix}")
        out[("e" if config.scheme == "ee" else "n") + suffix] = MemoryDecoherence(table[seq], node.decay_exponent)
    return out


def _post_herald(config: ProtocolConfig, state: MixedState) -> MixedState:
    t = config.decoupling.duration_s
    if t > 0:
        if config.scheme == "nn" and config.flag_dephasing:
            for f, m in (("eA", "nA"), ("eB", "nB")):
                state = apply_channel(state, _flag_dephasing_channel(), [f, m])
        state = apply_decoupling_decay(state, t, memory_decoherence(config))
    return state


def heralded_states(config: ProtocolConfig) -> dict[str, dict[str, MixedState]]:
    """Unnormalised spin states (photon traced out) per herald and source.

    Includes the post-herald decoupling decay; readout is not applied.
    """
    state = _initial_state(config)
    nodes = (("A", config.node_a), ("B", config.node_b))
    for i, (suffix, node) in enumerate(nodes):
        if config.scheme == "ee":
            state = e_gamma_gate(state, "photon", "e" + suffix, node.reflectivities, node.mw_error)
        else:
            state = phone_gate(state, "photon", "e" + suffix, "n" + suffix, node.reflectivities, node.mw_error)
        trans = config.link.transmission_a_to_b() if i == 0 else config.link.transmission_b_to_tdi()
        state = apply_photon_loss(state, "photon", trans)
    tdi = replace(config.tdi, detector_efficiency=config.tdi.detector_efficiency * config.link.detector_efficiency)
    branches = tdi_branches(state, "photon", tdi, memory=_memory_labels(config.scheme))
    out = {}
    for h in SIGNED_HERALDS:
        b = branches[h]
        out[h] = {"real": _post_herald(config, b.real)}
        out[h]["noise"] = _post_herald(config, b.noise) if b.noise is not None else None
    out["none"] = {"real": branches["none"].real, "noise": None}
    return out


def _readout_matrix(p01: float, p10: float) -> np.ndarray:
    # M[read, true]; p01 = P(read 1 | true 0), p10 = P(read 0 | true 1)
    return np.array([[1 - p01, p10], [p01, 1 - p10]])


def _bit_probabilities(config: ProtocolConfig, state: MixedState, basis: str) -> np.ndarray:
    """P[fA, fB, bA, bB] (unnormalised) after rotation and noisy readout."""
    mem = _memory_labels(config.scheme)
    u = BASIS_ROTATION[basis]
    for lab, node in zip(mem, (config.node_a, config.node_b)):
        state = apply_channel(state, QuantumChannel.unitary(u), [lab])
        if config.rotation_mw_error and basis != "zz" and node.mw_error:
            state = apply_channel(state, bit_flip(node.mw_error), [lab])
    if config.scheme == "ee":
        red = partial_trace(state, mem)
        p = np.real(np.diag(red.matrix)).reshape(2, 2)
        joint = np.zeros((2, 2, 2, 2))
        joint[0, 0] = p
    else:
        red = partial_trace(state, ["eA", "nA", "eB", "nB"])
        p = np.real(np.diag(red.matrix)).reshape(2, 2, 2, 2)  # eA nA eB nB
        joint = p.transpose(0, 2, 1, 3)
    joint = np.clip(joint, 0, None)
    na, nb = config.node_a, config.node_b
    if config.scheme == "ee":
        ma = _readout_matrix(na.readout_error, na.readout_error)
        mb = _readout_matrix(nb.readout_error, nb.readout_error)
        fa = fb = np.eye(2)
    else:
        fa = _readout_matrix(na.readout_error, na.readout_error)
        fb = _readout_matrix(nb.readout_error, nb.readout_error)
        # nuclear readout maps the nucleus onto the electron with a conditional flip;
        # when that flip fails an up nucleus reads as down
        ma = _readout_matrix(0.0, na.nuclear_assignment_error)
        mb = _readout_matrix(0.0, nb.nuclear_assignment_error)
    return np.einsum("ai,bj,ck,dl,ijkl->abcd", fa, fb, ma, mb, joint)


@dataclass(frozen=True)
class OutcomeTable:
    """probs[basis] has shape (source, herald, flagA, flagB, bitA, bitB)."""

    probs: dict
    p_none: float
    truncation_error: float

    @property
    def p_herald(self) -> float:
        return 1.0 - self.p_none

    def flat(self, basis: str) -> np.ndarray:
        return np.concatenate([[self.p_none], self.probs[basis].reshape(-1)])


_TABLE_CACHE: dict[str, OutcomeTable] = {}


def outcome_table(config: ProtocolConfig) -> OutcomeTable:
    key = config.cache_key()
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    states = heralded_states(config)
    probs = {}
    for basis in BASES:
        arr = np.zeros((2, 2, 2, 2, 2, 2))
        for hi, h in enumerate(SIGNED_HERALDS):
            for si, s in enumerate(SOURCES):
                st = states[h][s]
                if st is not None:
                    arr[si, hi] = _bit_probabilities(config, st, basis)
        probs[basis] = arr
    p_herald = float(probs["zz"].sum())
    table = OutcomeTable(probs, 1.0 - p_herald, config.source.truncation_error(config.n_max))
    if len(_TABLE_CACHE) > 256:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[key] = table
    return table


# ---------------------------------------------------------------- trials


@dataclass(frozen=True)
class TrialOutcome:
    herald: str
    flag_a: int | None
    flag_b: int | None
    measurement_basis: str
    outcomes: tuple[int, int] | None
    rejected_by_contrast: bool = False
    was_noise: bool = False
    attempts: int = 1

    def __post_init__(self):
        if (self.outcomes is None) != (self.herald == "none"):
            raise ValueError("outcomes present iff herald != none")


# draw slots of the counter-based generator
_DRAW_OUTCOME, _DRAW_GAP, _DRAW_REJECT = 0, 1, 2
_IDX_SHAPE = (2, 2, 2, 2, 2, 2)


def _sample_range(config: ProtocolConfig, start: int, stop: int):
    """Vectorised sampling of trials [start, stop). Returns (basis, code, attempts, rejected).

    code -1 is no herald, otherwise a flat index into the (source, herald, fA, fB, bA, bB) table.
    """
    table = outcome_table(config)
    idx = np.arange(start, stop, dtype=np.int64)
    basis_idx = idx % 3
    u = rng.uniforms(config.rng_seed, idx, _DRAW_OUTCOME)
    code = np.full(idx.size, -1, dtype=np.int64)
    attempts = np.ones(idx.size, dtype=np.int64)
    for b, basis in enumerate(BASES):
        sel = basis_idx == b
        if not sel.any():
            continue
        flat = table.flat(basis)
        if config.mode == "attempt":
            cdf = np.cumsum(flat)
            k = np.searchsorted(cdf / cdf[-1], u[sel], side="right")
            code[sel] = np.minimum(k, flat.size - 1) - 1
        else:
            cond = flat[1:]
            if cond.sum() <= 0:
                raise FloatingPointError("herald probability is zero; heralded mode impossible")
            cdf = np.cumsum(cond)
            k = np.searchsorted(cdf / cdf[-1], u[sel], side="right")
            code[sel] = np.minimum(k, cond.size - 1)
    if config.mode == "heralded":
        p = table.p_herald
        g = rng.uniforms(config.rng_seed, idx, _DRAW_GAP)
        # failures before the herald: geometric on {0, 1, ...}
        fails = np.floor(np.log1p(-g) / np.log1p(-p)) if p < 1 else np.zeros(idx.size)
        attempts = fails.astype(np.int64) + 1
    rej = np.zeros(idx.size, dtype=bool)
    if config.contrast_rejection_probability > 0:
        r = rng.uniforms(config.rng_seed, idx, _DRAW_REJECT)
        rej = r < config.contrast_rejection_probability
    return basis_idx, code, attempts, rej


@dataclass
class EnsembleCounts:
    """Aggregate counts; ``counts[basis]`` has shape (source, herald, fA, fB, bA, bB)."""

    counts: dict = field(default_factory=lambda: {b: np.zeros(_IDX_SHAPE, dtype=np.int64) for b in BASES})
    heralds: dict = field(default_factory=lambda: {"plus": 0, "minus": 0, "none": 0})
    trials: int = 0
    attempts: int = 0
    rejected: int = 0

    def __add__(self, other: "EnsembleCounts") -> "EnsembleCounts":
        out = EnsembleCounts()
        for b in BASES:
            out.counts[b] = self.counts[b] + other.counts[b]
        for h in out.heralds:
            out.heralds[h] = self.heralds[h] + other.heralds[h]
        out.trials = self.trials + other.trials
        out.attempts = self.attempts + other.attempts
        out.rejected = self.rejected + other.rejected
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EnsembleCounts)
            and all(np.array_equal(self.counts[b], other.counts[b]) for b in BASES)
            and self.heralds == other.heralds
            and (self.trials, self.attempts, self.rejected) == (other.trials, other.attempts, other.rejected)
        )

    def correlators(self, herald: str, error_detection: bool, source: str | None = None) -> dict:
        """Per-basis 2x2 count tables c[i, j] for one herald outcome."""
        hi = SIGNED_HERALDS.index(herald)
        out = {}
        for b in BASES:
            arr = self.counts[b][:, hi]
            if source is not None:
                arr = arr[SOURCES.index(source)][None]
            arr = arr.sum(axis=0)
            out[b] = arr[0, 0] if error_detection else arr.sum(axis=(0, 1))
        return out

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "attempts": self.attempts,
            "rejected": self.rejected,
            "heralds": dict(self.heralds),
            "counts": {b: self.counts[b].tolist() for b in BASES},
        }


def count_range(config: ProtocolConfig, start: int, stop: int) -> EnsembleCounts:
    basis_idx, code, attempts, rej = _sample_range(config, start, stop)
    out = EnsembleCounts()
    out.trials = stop - start
    out.attempts = int(attempts.sum())
    heralded = code >= 0
    herald_of = np.where(heralded, (code // 16) % 2, -1)
    out.heralds["plus"] = int(np.sum(herald_of == 0))
    out.heralds["minus"] = int(np.sum(herald_of == 1))
    out.heralds["none"] = int(np.sum(~heralded)) + int(attempts.sum() - attempts.size)
    keep = heralded & ~rej
    out.rejected = int(np.sum(heralded & rej))
    for b in range(3):
        sel = keep & (basis_idx == b)
        out.counts[BASES[b]] = np.bincount(code[sel], minlength=64).reshape(_IDX_SHAPE).astype(np.int64)
    return out


def _decode(code: int) -> tuple[int, int, int, int, int, int]:
    return tuple(int(v) for v in np.unravel_index(code, _IDX_SHAPE))


def simulate_trials(config: ProtocolConfig, start: int = 0, stop: int | None = None) -> list[TrialOutcome]:
    """Per-trial records (use ``count_range``/``run_ensemble`` for large runs)."""
    stop = config.trials if stop is None else stop
    basis_idx, code, attempts, rej = _sample_range(config, start, stop)
    out = []
    for b, c, a, r in zip(basis_idx, code, attempts, rej):
        basis = BASES[int(b)]
        if c < 0:
            out.append(TrialOutcome("none", None, None, basis, None, False, False, int(a)))
            continue
        s, h, fa, fb, ba, bb = _decode(int(c))
        out.append(TrialOutcome(SIGNED_HERALDS[h], fa, fb, basis, (ba, bb), bool(r), s == 1, int(a)))
    return out


def run_trial(config: ProtocolConfig, basis: str, rng_seed: int) -> TrialOutcome:
    """One attempt in the requested basis."""
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    cfg = replace(config, rng_seed=rng_seed, mode="attempt")
    return simulate_trials(cfg, BASES.index(basis), BASES.index(basis) + 1)[0]


def _count_shard(args):
    config, start, stop = args
    return count_range(config, start, stop)


def run_ensemble(config: ProtocolConfig, shards: int = 1, workers: int | None = None) -> EnsembleCounts:
    """Aggregate counts over all trials; identical for any shard count or worker pool."""
    edges = np.linspace(0, config.trials, max(1, shards) + 1).astype(int)
    jobs = [(config, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_count_shard, jobs))
    else:
        parts = [_count_shard(j) for j in jobs]
    total = EnsembleCounts()
    for p in parts:
        total = total + p
    return total


# ---------------------------------------------------------------- timing and rates


def classical_latency(channel: ClassicalChannel) -> float:
    return channel.fiber_length_km * 1e3 * channel.group_index / SPEED_OF_LIGHT


def is_usable(config: ProtocolConfig) -> bool:
    """Entanglement counts as usable only once the heralding signal could have arrived both ways."""
    return config.decoupling.duration_s >= 2 * classical_latency(config.classical)


@dataclass(frozen=True)
class RateModel:
    repetition_rate_hz: float
    success_probability: float
    duty_cycle: float

    def __post_init__(self):
        if min(self.repetition_rate_hz, self.success_probability, self.duty_cycle) < 0:
            raise ValueError("rate model factors must be >= 0")
        if self.duty_cycle > 1 or self.success_probability > 1:
            raise ValueError("duty cycle and success probability must be <= 1")


def success_rate(model: RateModel) -> float:
    return model.success_probability * model.repetition_rate_hz * model.duty_cycle


def repetition_rate(readout_a_s: float = 67e-6, readout_b_s: float = 17e-6, overhead_s: float = 16e-6) -> float:
    """Attempts per second when each attempt ends with both electron readouts."""
    return 1.0 / (readout_a_s + readout_b_s + overhead_s)


def overhead_for_rate(rate_hz: float, readout_a_s: float = 67e-6, readout_b_s: float = 17e-6) -> float:
    return 1.0 / rate_hz - readout_a_s - readout_b_s


@dataclass(frozen=True)
class FilterResult:
    kept: list
    retained_fraction: float
    duty_factor: float


def contrast_rejection_filter(trials: list, rejection_probability: float, rng_seed: int = 0) -> FilterResult:
    """Drop each trial independently with the given probability."""
    if not 0 <= rejection_probability <= 1:
        raise ValueError("rejection_probability must be in [0, 1]")
    n = len(trials)
    if n == 0:
        return FilterResult([], 1.0, 1.0)
    u = rng.uniforms(rng_seed, np.arange(n), _DRAW_REJECT)
    mask = u >= rejection_probability
    kept = [t for t, m in zip(trials, mask) if m]
    frac = len(kept) / n
    return FilterResult(kept, frac, frac)
