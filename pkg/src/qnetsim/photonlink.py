"""Photonic channel: frequency shifting, frequency conversion, fibre loss, budget, polarization."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

# ---------------------------------------------------------------- Bessel functions


def _bessel_series(k: int, x: float, terms: int = 60) -> float:
    half = x / 2
    total = 0.0
    term = half**k / factorial(k)
    for m in range(terms):
        total += term
        term *= -(half * half) / ((m + 1) * (m + 1 + k))
        if abs(term) < 1e-18 * max(abs(total), 1e-300):
            break
    return total


def _bessel_miller(k: int, x: float) -> float:
    # downward recurrence from well above max(k, x), normalised by J0 + 2*sum J_2m = 1
    top = max(k, int(x)) + 30 + int(np.sqrt(40 * (max(k, x) + 1)))
    top += top % 2
    j_next, j_cur = 0.0, 1e-30
    norm = 0.0
    want = 0.0
    for n in range(top, 0, -1):
        j_prev = (2 * n / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if abs(j_cur) > 1e250:
            j_cur *= 1e-250
            j_next *= 1e-250
            norm *= 1e-250
            want *= 1e-250
        if n - 1 == k:
            want = j_cur
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2 * j_cur
    norm += j_cur  # J0 term
    return want / norm


def bessel_j(k: int, x: float) -> float:
    """Bessel function of the first kind J_k(x) for integer order, accurate to ~1e-12."""
    k = int(k)
    x = float(x)
    sign = 1.0
    if k < 0:
        k = -k
        sign = -1.0 if k % 2 else 1.0
    if x < 0:
        x = -x
        sign *= -1.0 if k % 2 else 1.0
    if x == 0:
        return sign * (1.0 if k == 0 else 0.0)
    if x < 1.0:
        return sign * _bessel_series(k, x)
    return sign * _bessel_miller(k, x)


# ---------------------------------------------------------------- frequency stages


def _check_fraction(obj, *names):
    for name in names:
        v = getattr(obj, name)
        if v is not None and not 0 <= v <= 1:
            raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class FrequencyShifter:
    modulation_index: float = 1.8412
    harmonic: int = 1
    eom_insertion_loss: float = 0.5
    filter_transmission: float = 0.4
    total_override: float | None = None

    def __post_init__(self):
        _check_fraction(self, "eom_insertion_loss", "filter_transmission", "total_override")


def sideband_occupancy(shifter: FrequencyShifter) -> float:
    return bessel_j(shifter.harmonic, shifter.modulation_index) ** 2


def shifter_efficiency(shifter: FrequencyShifter) -> float:
    if shifter.harmonic == 0:
        raise ValueError("harmonic 0 is the carrier; shifting needs a non-zero harmonic")
    if shifter.total_override is not None:
        return shifter.total_override
    return sideband_occupancy(shifter) * shifter.eom_insertion_loss * shifter.filter_transmission


@dataclass(frozen=True)
class QfcChain:
    """Down-conversion to telecom and back up; the measured total is used when given."""

    dfg_efficiency: float = 0.33
    sfg_efficiency: float = 0.30
    filter_transmission: float = 0.545
    total_override: float | None = 0.054
    pump_detuning_hz: float = 13e9

    def __post_init__(self):
        _check_fraction(self, "dfg_efficiency", "sfg_efficiency", "filter_transmission", "total_override")

    @property
    def efficiency(self) -> float:
        if self.total_override is not None:
            return self.total_override
        return self.dfg_efficiency * self.sfg_efficiency * self.filter_transmission


@dataclass(frozen=True)
class FiberSegment:
    length_km: float = 0.0
    attenuation_db_per_km: float = 0.3
    excess_loss_db: float = 0.0

    def __post_init__(self):
        if min(self.length_km, self.attenuation_db_per_km, self.excess_loss_db) < 0:
            raise ValueError("fibre parameters must be >= 0")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km + self.excess_loss_db


def fiber_transmission(segment: FiberSegment) -> float:
    return 10 ** (-segment.loss_db / 10)


# ---------------------------------------------------------------- budget


@dataclass(frozen=True)
class BudgetEntry:
    name: str
    efficiency: float
    squared: bool = False

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"budget entry {self.name!r} must be in (0, 1]")

    @property
    def factor(self) -> float:
        return self.efficiency**2 if self.squared else self.efficiency


@dataclass(frozen=True)
class LinkBudget:
    entries: tuple[BudgetEntry, ...]

    @property
    def efficiency(self) -> float:
        return float(np.prod([e.factor for e in self.entries]))

    def rows(self) -> list[dict]:
        return [
            {"entry": e.name, "efficiency": e.efficiency, "squared": e.squared, "factor": e.factor}
            for e in self.entries
        ]


def link_success_probability(budget: LinkBudget, gates: int = 1, mu: float = 0.1) -> float:
    """Budget product x 1/2 per carving gate x 1/2 for the +/- detection x mu."""
    return budget.efficiency * 0.5**gates * 0.5 * mu


# ---------------------------------------------------------------- polarization


def _stokes(chi: float, psi: float) -> np.ndarray:
    return np.array(
        [np.cos(2 * chi) * np.cos(2 * psi), np.cos(2 * chi) * np.sin(2 * psi), np.sin(2 * chi)]
    )


@dataclass(frozen=True)
class PolarizationState:
    """Ellipticity chi and azimuth psi, wrapped onto the Poincare sphere at construction."""

    chi: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        s = _stokes(self.chi, self.psi)
        chi = 0.5 * np.arcsin(np.clip(s[2], -1, 1))
        psi = 0.5 * np.arctan2(s[1], s[0]) if abs(np.cos(2 * chi)) > 1e-15 else 0.0
        # arctan2 returns +pi for the antipode of the lock point; keep psi in [-pi/2, pi/2)
        if psi >= np.pi / 2:
            psi -= np.pi
        object.__setattr__(self, "chi", float(chi))
        object.__setattr__(self, "psi", float(psi))

    @property
    def stokes(self) -> np.ndarray:
        return _stokes(self.chi, self.psi)


def dop_cost(p: PolarizationState) -> float:
    return float(np.hypot(np.cos(p.chi) - 1, np.cos(p.psi) - 1))


def conversion_polarization_penalty(p: PolarizationState) -> float:
    """Power fraction projected onto the lock polarization (horizontal linear)."""
    return float((1 + p.stokes[0]) / 2)


@dataclass(frozen=True)
class DriftModel:
    step_std_rad: float = 0.005
    enabled: bool = True


@dataclass(frozen=True)
class ControllerParams:
    learning_rate: float = 1.0
    fd_step: float = 1e-5
    tolerance: float = 1e-3
    max_iterations: int = 200
    backtracking: int = 20


@dataclass
class StabilizationTrace:
    states: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _reflect(x: float, lim: float) -> float:
    # reflecting boundary on [-lim, lim]
    period = 4 * lim
    y = (x + lim) % period
    return (y if y <= 2 * lim else period - y) - lim


def _controller_step(drift: np.ndarray, offset: np.ndarray, ctl: ControllerParams) -> np.ndarray:
    def cost(o):
        return dop_cost(PolarizationState(drift[0] + o[0], drift[1] + o[1]))

    c0 = cost(offset)
    grad = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = ctl.fd_step
        grad[i] = (cost(offset + e) - cost(offset - e)) / (2 * ctl.fd_step)
    lr = ctl.learning_rate
    for _ in range(ctl.backtracking):
        trial = offset - lr * grad
        if cost(trial) < c0:
            return trial
        lr /= 2
    return offset


def stabilize_polarization(
    initial: PolarizationState,
    drift: DriftModel = DriftModel(enabled=False),
    controller: ControllerParams = ControllerParams(),
    rng_seed=None,
    steps: int | None = None,
) -> StabilizationTrace:
    """Gradient-descent polarization lock on additive controller offsets.

    Without drift the loop stops at ``tolerance`` or ``max_iterations``; with
    drift it runs ``steps`` iterations (one random-walk step, one controller
    step each) and reports the cost trace.
    """
    rng = np.random.default_rng(rng_seed)
    d = np.array([initial.chi, initial.psi])
    offset = np.zeros(2)
    trace = StabilizationTrace()

    def record():
        p = PolarizationState(d[0] + offset[0], d[1] + offset[1])
        trace.states.append(p)
        trace.costs.append(dop_cost(p))

    record()
    if not drift.enabled:
        while trace.costs[-1] >= controller.tolerance and trace.iterations < controller.max_iterations:
            offset = _controller_step(d, offset, controller)
            trace.iterations += 1
            record()
        trace.converged = trace.costs[-1] < controller.tolerance
        return trace
    n = steps if steps is not None else controller.max_iterations
    for _ in range(n):
        step = rng.normal(0.0, drift.step_std_rad, 2)
        d = np.array([_reflect(d[0] + step[0], np.pi / 4), _reflect(d[1] + step[1], np.pi / 2)])
        offset = _controller_step(d, offset, controller)
        trace.iterations += 1
        record()
    trace.converged = trace.costs[-1] < controller.tolerance
    return trace


# ---------------------------------------------------------------- physical link


@dataclass(frozen=True)
class LinkConfig:
    """Transmission stages between the two nodes and on to the TDI detectors.

    Cavity reflectance lives in the node reflectivities, not here.
    """

    converter: str = "shifter"
    shifter: FrequencyShifter = FrequencyShifter(total_override=0.074)
    qfc: QfcChain = QfcChain()
    fiber_coupling_a: float = 0.6
    fiber_coupling_b: float = 0.6
    free_space_a: float = 0.7
    circulator: float = 0.7
    fibers: tuple[FiberSegment, ...] = ()
    polarization: PolarizationState | None = None
    stabilization_loss_db: float = 0.0
    detector_efficiency: float = 0.875

    def __post_init__(self):
        if self.converter not in ("shifter", "qfc", "none"):
            raise ValueError("converter must be 'shifter', 'qfc' or 'none'")
        _check_fraction(
            self, "fiber_coupling_a", "fiber_coupling_b", "free_space_a", "circulator", "detector_efficiency"
        )

    @property
    def converter_efficiency(self) -> float:
        if self.converter == "shifter":
            return shifter_efficiency(self.shifter)
        if self.converter == "qfc":
            return self.qfc.efficiency
        return 1.0

    @property
    def fiber_efficiency(self) -> float:
        t = float(np.prod([fiber_transmission(f) for f in self.fibers])) if self.fibers else 1.0
        return t * 10 ** (-self.stabilization_loss_db / 10)

    @property
    def polarization_efficiency(self) -> float:
        return 1.0 if self.polarization is None else conversion_polarization_penalty(self.polarization)

    def transmission_a_to_b(self) -> float:
        return (
            self.fiber_coupling_a
            * self.free_space_a
            * self.circulator
            * self.converter_efficiency
            * self.fiber_efficiency
            * self.polarization_efficiency
            * self.fiber_coupling_b
        )

    def transmission_b_to_tdi(self) -> float:
        return self.fiber_coupling_b * self.circulator

    def budget(self, reflectance_a: float = 0.7, reflectance_b: float = 0.6) -> LinkBudget:
        entries = [
            BudgetEntry("fiber coupling A", self.fiber_coupling_a),
            BudgetEntry("fiber coupling B", self.fiber_coupling_b, squared=True),
            BudgetEntry("cavity reflectance A", reflectance_a),
            BudgetEntry("cavity reflectance B", reflectance_b),
            BudgetEntry("node A free space", self.free_space_a),
        ]
        if self.converter != "none":
            entries.append(BudgetEntry(f"frequency {self.converter}", self.converter_efficiency))
        entries.append(BudgetEntry("circulator", self.circulator, squared=True))
        if self.fibers or self.stabilization_loss_db:
            entries.append(BudgetEntry("fiber", self.fiber_efficiency))
        if self.polarization is not None:
            entries.append(BudgetEntry("polarization", self.polarization_efficiency))
        entries.append(BudgetEntry("detector", self.detector_efficiency))
        return LinkBudget(tuple(entries))


SNSPD_EFFICIENCY = (0.80 + 0.95) / 2
VISIBLE_LINK = LinkConfig(converter="shifter", detector_efficiency=SNSPD_EFFICIENCY)
TELECOM_LINK = LinkConfig(converter="qfc", detector_efficiency=SNSPD_EFFICIENCY)
