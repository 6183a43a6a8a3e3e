"""Dense density-matrix engine for small labeled registers.

Every state carries a :class:`RegisterLayout`; operators are always embedded
by label, never by position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
KRAUS_TOL = 1e-9
MAX_DIM = 256


class LayoutError(ValueError):
    """Raised on duplicate, unknown or oversized register labels."""


class ShapeError(ValueError):
    """Raised when an operator does not match its target subsystems."""


@dataclass(frozen=True)
class RegisterLayout:
    subsystems: tuple[tuple[str, int], ...]
    max_dim: int = MAX_DIM

    def __post_init__(self):
        subs = tuple((str(lab), int(d)) for lab, d in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        labels = [lab for lab, _ in subs]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in {labels}")
        if any(d < 1 for _, d in subs):
            raise LayoutError("subsystem dimensions must be positive")
        if self.dim > self.max_dim:
            raise LayoutError(f"register dimension {self.dim} exceeds cap {self.max_dim}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.subsystems else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def dim_of(self, labels: Sequence[str]) -> int:
        return int(np.prod([self.dims[self.index(lab)] for lab in labels], dtype=np.int64))

    def subset(self, keep: Sequence[str]) -> "RegisterLayout":
        keep_set = set(keep)
        for lab in keep:
            self.index(lab)
        return RegisterLayout(tuple(s for s in self.subsystems if s[0] in keep_set), self.max_dim)

    def __add__(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.subsystems + other.subsystems, max(self.max_dim, other.max_dim))


@dataclass(frozen=True)
class PureState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise ShapeError(f"expected {self.layout.dim} amplitudes, got {amps.size}")
        if abs(np.vdot(amps, amps).real - 1.0) > TRACE_TOL:
            raise ValueError("pure state is not normalized")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def density(self) -> "MixedState":
        return MixedState(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class MixedState:
    """Density matrix over a labeled register.

    Construct with ``check=False`` for unnormalized branch states (heralded
    sub-ensembles); every other path validates Hermiticity, unit trace and
    positivity.
    """

    layout: RegisterLayout
    matrix: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if m.shape != (d, d):
            raise ShapeError(f"matrix shape {m.shape} does not match layout dimension {d}")
        if self.check:
            if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > TRACE_TOL:
                raise ValueError(f"density matrix trace {np.trace(m).real!r} != 1")
            if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
                raise ValueError("density matrix is not positive semidefinite")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> "MixedState":
        t = self.trace
        if t <= 0:
            raise ZeroDivisionError("cannot normalize a zero-trace branch")
        return MixedState(self.layout, self.matrix / t)

    def scaled(self, weight: float) -> "MixedState":
        return MixedState(self.layout, self.matrix * weight, check=False)

    def __add__(self, other: "MixedState") -> "MixedState":
        if other.layout.labels != self.layout.labels:
            raise LayoutError("cannot add states over different layouts")
        return MixedState(self.layout, self.matrix + other.matrix, check=False)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def fidelity_pure(self, ket: np.ndarray) -> float:
        """<psi| rho |psi> for a ket over the full layout."""
        ket = np.asarray(ket, dtype=complex).reshape(-1)
        return float(np.vdot(ket, self.matrix @ ket).real)


def basis_state(layout: RegisterLayout, values: dict[str, int]) -> MixedState:
    ket = np.zeros(layout.dim, dtype=complex)
    idx = np.ravel_multi_index(tuple(values[lab] for lab in layout.labels), layout.dims)
    ket[idx] = 1.0
    return PureState(layout, ket).density()


def maximally_mixed(layout: RegisterLayout) -> MixedState:
    return MixedState(layout, np.eye(layout.dim) / layout.dim)


def tensor(a: MixedState, b: MixedState) -> MixedState:
    layout = a.layout + b.layout
    return MixedState(layout, np.kron(a.matrix, b.matrix), check=a.check and b.check)


def reorder(state: MixedState, labels: Sequence[str]) -> MixedState:
    """Permute subsystems into the given label order."""
    lay = state.layout
    if sorted(labels) != sorted(lay.labels):
        raise LayoutError(f"reorder needs a permutation of {lay.labels}")
    perm = [lay.index(lab) for lab in labels]
    n = len(perm)
    t = state.matrix.reshape(lay.dims + lay.dims)
    t = t.transpose(perm + [p + n for p in perm])
    new = RegisterLayout(tuple(lay.subsystems[p] for p in perm), lay.max_dim)
    return MixedState(new, t.reshape(new.dim, new.dim), check=False)


@dataclass(frozen=True)
class QuantumChannel:
    """Kraus channel acting on a fixed list of subsystem dimensions.

    ``trace_preserving=False`` admits trace-non-increasing sets (heralded
    branches); the deficit is the probability of the discarded outcome.
    """

    kraus: tuple[np.ndarray, ...]
    trace_preserving: bool = True

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise ShapeError("channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        for k in ops:
            if k.shape != (d, d):
                raise ShapeError("Kraus operators must be square and equally sized")
        s = sum(k.conj().T @ k for k in ops)
        if self.trace_preserving:
            if np.max(np.abs(s - np.eye(d))) > KRAUS_TOL:
                raise ValueError("Kraus operators are not complete (sum K^dag K != I)")
        elif np.linalg.eigvalsh(np.eye(d) - s)[0] < -KRAUS_TOL:
            raise ValueError("Kraus operators increase trace")
        object.__setattr__(self, "kraus", ops)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @classmethod
    def unitary(cls, u: np.ndarray) -> "QuantumChannel":
        return cls((np.asarray(u, dtype=complex),))


def _contract(t: np.ndarray, op: np.ndarray, axes: list[int], tdims: list[int]) -> np.ndarray:
    # op acts on the tensor axes listed in `axes`; result keeps axis order
    k = len(axes)
    op_t = op.reshape(tdims + tdims)
    out = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply_operator(state: MixedState, op: np.ndarray, targets: Sequence[str]) -> np.ndarray:
    """Return K rho K^dag (as a matrix) with K embedded on `targets`."""
    lay = state.layout
    idx = [lay.index(t) for t in targets]
    tdims = [lay.dims[i] for i in idx]
    d = int(np.prod(tdims))
    if op.shape != (d, d):
        raise ShapeError(f"operator shape {op.shape} does not match targets {list(targets)} (dim {d})")
    n = len(lay.dims)
    t = state.matrix.reshape(lay.dims + lay.dims)
    t = _contract(t, op, idx, tdims)
    t = _contract(t, op.conj(), [i + n for i in idx], tdims)
    return t.reshape(lay.dim, lay.dim)


def apply_channel(state: MixedState, channel: QuantumChannel, targets: Sequence[str]) -> MixedState:
    out = np.zeros_like(state.matrix)
    for k in channel.kraus:
        out = out + apply_operator(state, k, targets)
    return MixedState(state.layout, out, check=state.check and channel.trace_preserving)


def apply_unitary(state: MixedState, u: np.ndarray, targets: Sequence[str]) -> MixedState:
    return apply_channel(state, QuantumChannel.unitary(u), targets)


def partial_trace(state: MixedState, keep: Sequence[str]) -> MixedState:
    lay = state.layout
    keep_idx = sorted(lay.index(lab) for lab in keep)
    drop_idx = [i for i in range(len(lay.dims)) if i not in keep_idx]
    n = len(lay.dims)
    t = state.matrix.reshape(lay.dims + lay.dims)
    perm = keep_idx + drop_idx + [i + n for i in keep_idx] + [i + n for i in drop_idx]
    t = t.transpose(perm)
    dk = int(np.prod([lay.dims[i] for i in keep_idx], dtype=np.int64))
    dd = int(np.prod([lay.dims[i] for i in drop_idx], dtype=np.int64))
    t = t.reshape(dk, dd, dk, dd)
    reduced = np.einsum("ajbj->ab", t)
    new = RegisterLayout(tuple(lay.subsystems[i] for i in keep_idx), lay.max_dim)
    return MixedState(new, reduced, check=state.check)


def trace_out_with_effect(state: MixedState, target: str, effect: np.ndarray) -> MixedState:
    """Tr_target[(E (x) I) rho]: unnormalized state left after POVM effect E on `target`."""
    lay = state.layout
    i = lay.index(target)
    d = lay.dims[i]
    if effect.shape != (d, d):
        raise ShapeError(f"effect shape {effect.shape} does not match {target!r} (dim {d})")
    n = len(lay.dims)
    t = state.matrix.reshape(lay.dims + lay.dims)
    # contract E_{ji} rho_{i..., j...}
    t = np.tensordot(effect, t, axes=([1, 0], [i, i + n]))
    keep = [lab for lab in lay.labels if lab != target]
    new = lay.subset(keep)
    return MixedState(new, t.reshape(new.dim, new.dim), check=False)


@dataclass(frozen=True)
class Branch:
    probability: float
    state: MixedState | None

    @property
    def empty(self) -> bool:
        return self.state is None


def measure_projective(
    state: MixedState, target: str, projectors: Sequence[np.ndarray], tol: float = KRAUS_TOL
) -> list[Branch]:
    """Projective measurement of one subsystem.

    Zero-probability outcomes come back as empty branches instead of NaN states.
    """
    projs = [np.asarray(p, dtype=complex) for p in projectors]
    d = state.layout.dims[state.layout.index(target)]
    total = sum(projs)
    if total.shape != (d, d) or np.max(np.abs(total - np.eye(d))) > tol:
        raise ValueError("projectors are not complete on target")
    out = []
    norm = state.trace
    for p in projs:
        m = apply_operator(state, p, [target])
        prob = float(np.trace(m).real) / norm
        if prob <= tol:
            out.append(Branch(max(prob, 0.0), None))
        else:
            out.append(Branch(prob, MixedState(state.layout, m / np.trace(m).real)))
    return out


def expectation(state: MixedState, op: np.ndarray, targets: Sequence[str]) -> complex:
    lay = state.layout
    rest = [lab for lab in lay.labels if lab not in targets]
    ordered = reorder(state, list(targets) + rest)
    d = lay.dim_of(targets)
    full = np.kron(op, np.eye(lay.dim // d))
    return complex(np.trace(full @ ordered.matrix))


# single-qubit helpers; basis index 0 is spin-down / |0>
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def bit_flip(p: float) -> QuantumChannel:
    return QuantumChannel((np.sqrt(1 - p) * I2, np.sqrt(p) * X))


def dephasing(coherence: float) -> QuantumChannel:
    """Phase channel that multiplies the off-diagonal element by `coherence`."""
    c = float(coherence)
    return QuantumChannel((np.sqrt((1 + c) / 2) * I2, np.sqrt((1 - c) / 2) * Z))


def depolarizing(p: float) -> QuantumChannel:
    """With probability p replace the qubit by I/2."""
    return QuantumChannel(
        (np.sqrt(1 - 3 * p / 4) * I2, np.sqrt(p / 4) * X, np.sqrt(p / 4) * Y, np.sqrt(p / 4) * Z)
    )
