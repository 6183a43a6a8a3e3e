"""Bell-state tomography statistics, contrast-error formulas, budgets and the SNR model."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .cavity import SpinReflectivities
from .protocol import (
    BASES,
    SIGNED_HERALDS,
    SOURCES,
    EnsembleCounts,
    ProtocolConfig,
    outcome_table,
    run_ensemble,
)

# sign of <XX> and <YY> for each target Bell state
_TARGET_SIGNS = {"plus": (1, -1), "minus": (-1, 1)}
FALSE_HERALD_FIDELITY = 0.25


def _target(target: str) -> str:
    t = target.lower().replace("phi", "").replace("^", "").strip("_ ")
    aliases = {"+": "plus", "-": "minus", "plus": "plus", "minus": "minus"}
    if t not in aliases:
        raise ValueError(f"unknown Bell target {target!r}")
    return aliases[t]


@dataclass
class CorrelatorCounts:
    """c[basis][i, j]: occurrences of outcome (i, j) in each of the zz, xx, yy bases."""

    counts: dict

    def __post_init__(self):
        clean = {}
        for b in BASES:
            if b not in self.counts:
                raise ValueError(f"missing basis {b}")
            c = np.asarray(self.counts[b], dtype=float).reshape(2, 2)
            if np.any(c < 0):
                raise ValueError("counts must be non-negative")
            clean[b] = c
        self.counts = clean

    def total(self, basis: str) -> float:
        return float(self.counts[basis].sum())

    def probabilities(self, basis: str) -> np.ndarray:
        n = self.total(basis)
        if n <= 0:
            raise ValueError(f"basis {basis} has no counts")
        return self.counts[basis] / n

    def to_dict(self) -> dict:
        return {b: self.counts[b].tolist() for b in BASES}

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelatorCounts":
        return cls({b: d[b] for b in BASES})


@dataclass(frozen=True)
class FidelityEstimate:
    target: str
    fidelity: float
    stddev: float
    clamped: bool = False
    raw_fidelity: float | None = None


def correlator_values(counts: CorrelatorCounts, target: str) -> dict[str, float]:
    """P_zz, P_xx, P_yy with the target-dependent signs."""
    t = _target(target)
    sx, sy = _TARGET_SIGNS[t]
    out = {}
    for b in BASES:
        p = counts.probabilities(b)
        same = p[0, 0] + p[1, 1]
        if b == "zz":
            out[b] = same
        else:
            corr = 2 * same - 1
            out[b] = (sx if b == "xx" else sy) * corr
    return out


def fidelity_stddev(counts: CorrelatorCounts, target: str) -> float:
    """Binomial error propagation for F = P_zz/2 + P_xx/4 + P_yy/4."""
    p = correlator_values(counts, target)
    var = 0.25 * p["zz"] * (1 - p["zz"]) / counts.total("zz")
    for b in ("xx", "yy"):
        var += (1 + p[b]) * (1 - p[b]) / (16 * counts.total(b))
    return float(np.sqrt(max(var, 0.0)))


def bell_fidelity(counts: CorrelatorCounts, target: str) -> FidelityEstimate:
    t = _target(target)
    p = correlator_values(counts, t)
    f = 0.5 * p["zz"] + 0.25 * p["xx"] + 0.25 * p["yy"]
    clamped = not 0 <= f <= 1
    return FidelityEstimate(t, float(np.clip(f, 0, 1)), fidelity_stddev(counts, t), clamped, float(f))


def fidelity_stddev_bootstrap(
    counts: CorrelatorCounts, target: str, resamples: int = 2000, rng_seed=None
) -> float:
    """Multinomial bootstrap of the fidelity estimator (validation for the closed form)."""
    if resamples < 1000:
        raise ValueError("use at least 1000 resamples")
    rng = np.random.default_rng(rng_seed)
    t = _target(target)
    sx, sy = _TARGET_SIGNS[t]
    f = np.zeros(resamples)
    for b in BASES:
        n = int(round(counts.total(b)))
        draws = rng.multinomial(n, counts.probabilities(b).reshape(-1), size=resamples) / n
        same = draws[:, 0] + draws[:, 3]
        if b == "zz":
            f += 0.5 * same
        else:
            f += 0.25 * (sx if b == "xx" else sy) * (2 * same - 1)
    return float(np.std(f, ddof=1))


def contrast_error(r_a: complex, r_b: complex, branch: str) -> float:
    """Heralded infidelity from residual dark-state reflection (relative amplitudes r = r_low/r_high)."""
    t = _target(branch)
    if abs(r_a) > 1 or abs(r_b) > 1:
        raise ValueError("|r| must be <= 1")
    if t == "plus":
        bad, good = abs(r_a + r_b) ** 2, abs(1 + r_a * r_b) ** 2
    else:
        bad, good = abs(r_a - r_b) ** 2, abs(1 - r_a * r_b) ** 2
    return float(bad / (bad + good))


def contrast_error_from_nodes(a: SpinReflectivities, b: SpinReflectivities, branch: str) -> float:
    return contrast_error(a.relative_low, b.relative_low, branch)


# ---------------------------------------------------------------- protocol-level estimates


def counts_from_ensemble(
    result: EnsembleCounts, herald: str, error_detection: bool, source: str | None = None
) -> CorrelatorCounts:
    return CorrelatorCounts(result.correlators(herald, error_detection, source))


def exact_correlators(
    config: ProtocolConfig, herald: str, error_detection: bool, source: str | None = None
) -> CorrelatorCounts:
    """Outcome probabilities in place of counts (the infinite-trial limit)."""
    table = outcome_table(config)
    hi = SIGNED_HERALDS.index(_target(herald))
    out = {}
    for b in BASES:
        arr = table.probs[b][:, hi]
        if source is not None:
            arr = arr[SOURCES.index(source)][None]
        arr = arr.sum(axis=0)
        out[b] = arr[0, 0] if error_detection else arr.sum(axis=(0, 1))
    return CorrelatorCounts(out)


def exact_fidelity(config: ProtocolConfig, herald: str, error_detection: bool | None = None) -> float:
    ed = config.error_detection if error_detection is None else error_detection
    return bell_fidelity(exact_correlators(config, herald, ed), herald).raw_fidelity


def herald_probability(config: ProtocolConfig, herald: str | None = None,
                       error_detection: bool = False, source: str | None = None) -> float:
    """Per-attempt probability of a (kept) herald; both signs when ``herald`` is None."""
    heralds = SIGNED_HERALDS if herald is None else (_target(herald),)
    return float(sum(exact_correlators(config, h, error_detection, source).total("zz") for h in heralds))


# ---------------------------------------------------------------- error budget


ERROR_SOURCES = ("mw", "contrast", "multi_photon", "tdi", "nuclear_readout", "readout", "decoherence", "noise")


def isolate_source(config: ProtocolConfig, source: str | None) -> ProtocolConfig:
    """Copy of ``config`` with every modelled error off except ``source`` (None: all off)."""
    if source is not None and source not in ERROR_SOURCES:
        raise ValueError(f"unknown error source {source!r}")

    def node(n, a_or_b):
        refl = n.reflectivities
        if source != "contrast":
            refl = SpinReflectivities(refl.r_high, 0.0, refl.operating_frequency)
        return replace(
            n,
            reflectivities=refl,
            mw_error=n.mw_error if source == "mw" else 0.0,
            readout_error=n.readout_error if source == "readout" else 0.0,
            nuclear_assignment_error=n.nuclear_assignment_error if source == "nuclear_readout" else 0.0,
        )

    tdi = replace(
        config.tdi,
        visibility_error=config.tdi.visibility_error if source == "tdi" else 0.0,
        dark_count_rate_hz=config.tdi.dark_count_rate_hz if source == "noise" else 0.0,
        noise_photon_rate_hz=config.tdi.noise_photon_rate_hz if source == "noise" else 0.0,
    )
    dec = config.decoupling if source == "decoherence" else replace(config.decoupling, duration_s=0.0)
    return replace(
        config,
        node_a=node(config.node_a, "A"),
        node_b=node(config.node_b, "B"),
        tdi=tdi,
        decoupling=dec,
        single_photon=config.single_photon or source != "multi_photon",
    )


@dataclass
class ErrorBudget:
    columns: list
    rows: list = field(default_factory=list)  # (source, {column: infidelity})
    total: dict = field(default_factory=dict)
    total_mc: dict = field(default_factory=dict)  # column -> (infidelity, stddev)

    def as_table(self) -> list[dict]:
        out = []
        for name, vals in self.rows + [("total", self.total)]:
            row = {"source": name}
            row.update({_col_name(c): vals[c] for c in self.columns})
            out.append(row)
        if self.total_mc:
            row = {"source": "total_mc"}
            row.update({_col_name(c): self.total_mc[c][0] for c in self.columns})
            out.append(row)
        return out


def _col_name(col) -> str:
    herald, ed = col
    return f"{herald}_{'ed' if ed else 'raw'}"


def default_columns(config: ProtocolConfig) -> list:
    if config.scheme == "ee":
        return [("minus", True), ("plus", True)]
    return [("minus", True), ("minus", False)]


def _active_sources(config: ProtocolConfig) -> list[str]:
    na, nb = config.node_a, config.node_b
    active = []
    if na.mw_error or nb.mw_error:
        active.append("mw")
    if abs(na.reflectivities.r_low) or abs(nb.reflectivities.r_low):
        active.append("contrast")
    if not config.single_photon and config.mu > 0:
        active.append("multi_photon")
    if config.tdi.visibility_error:
        active.append("tdi")
    if config.scheme == "nn" and (na.nuclear_assignment_error or nb.nuclear_assignment_error):
        active.append("nuclear_readout")
    if na.readout_error or nb.readout_error:
        active.append("readout")
    if config.decoupling.duration_s > 0:
        active.append("decoherence")
    if config.tdi.noise_click_probability > 0:
        active.append("noise")
    return active


def error_budget(
    config: ProtocolConfig, mc_trials: int = 0, columns: list | None = None, sources: list | None = None
) -> ErrorBudget:
    """One row per error source switched on alone; the total is the joint model, not a row sum."""
    cols = columns or default_columns(config)
    budget = ErrorBudget(cols)
    for src in sources or _active_sources(config):
        cfg = isolate_source(config, src)
        budget.rows.append((src, {c: max(0.0, 1 - exact_fidelity(cfg, c[0], c[1])) for c in cols}))
    budget.total = {c: 1 - exact_fidelity(config, c[0], c[1]) for c in cols}
    if mc_trials:
        res = run_ensemble(replace(config, trials=mc_trials, mode="heralded"))
        for c in cols:
            est = bell_fidelity(counts_from_ensemble(res, c[0], c[1]), c[0])
            budget.total_mc[c] = (1 - est.raw_fidelity, est.stddev)
    return budget


# ---------------------------------------------------------------- SNR versus fibre length


@dataclass(frozen=True)
class SnrModel:
    baseline_fidelity: float
    signal_rate_at_zero_km_hz: float
    noise_rate_hz: float = 2.7 + 2.5
    attenuation_db_per_km: float = 0.184
    false_herald_fidelity: float = FALSE_HERALD_FIDELITY

    def __post_init__(self):
        if self.signal_rate_at_zero_km_hz < 0 or self.noise_rate_hz < 0:
            raise ValueError("rates must be >= 0")


def snr_fidelity(model: SnrModel, length_km) -> np.ndarray | float:
    length_km = np.asarray(length_km, dtype=float)
    s = model.signal_rate_at_zero_km_hz * 10 ** (-model.attenuation_db_per_km * length_km / 10)
    n = model.noise_rate_hz
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(s + n > 0, (s * model.baseline_fidelity + n * model.false_herald_fidelity) / (s + n),
                     model.baseline_fidelity)
    return float(f) if f.ndim == 0 else f


def calibrate_snr_model(
    config: ProtocolConfig, herald: str = "minus", error_detection: bool = True,
    attenuation_db_per_km: float = 0.184,
) -> SnrModel:
    """Signal rate at 0 km expressed in detector-count units, so S/N matches the simulated herald ratio.

    ``config`` is the zero-length link with the TDI noise rates switched on.
    """
    n = config.tdi.dark_count_rate_hz + config.tdi.noise_photon_rate_hz
    p_real = herald_probability(config, herald, error_detection, "real")
    p_noise = herald_probability(config, herald, error_detection, "noise")
    signal = n * p_real / p_noise if p_noise > 0 else np.inf
    baseline = bell_fidelity(exact_correlators(config, herald, error_detection, "real"), herald).raw_fidelity
    return SnrModel(baseline, signal, n, attenuation_db_per_km)


def signal_rate_from_success_rate(success_rate_hz: float, repetition_rate_hz: float, duty_cycle: float,
                                  detection_window_s: float = 400e-9) -> float:
    """Convert a measured heralding rate into the detector-count rate during the window."""
    return success_rate_hz / (repetition_rate_hz * duty_cycle * detection_window_s)


# ---------------------------------------------------------------- photon-number extraction


@dataclass(frozen=True)
class MuEstimate:
    mu_eta: float
    invertible: bool


def mu_extraction(population_up: float, mw_offset: float = 0.0) -> MuEstimate:
    """Invert P(up) = (1 - exp(-mu*eta))/2 after removing the MW-error offset."""
    p = population_up - mw_offset
    if p < 0:
        p = 0.0
    if p >= 0.5:
        return MuEstimate(float("inf"), False)
    return MuEstimate(float(-np.log1p(-2 * p)), True)


def population_after_x_gate(mu_eta: float, mw_offset: float = 0.0) -> float:
    return 0.5 * (1 - np.exp(-mu_eta)) + mw_offset


# ---------------------------------------------------------------- IO


def counts_to_json(counts: CorrelatorCounts) -> str:
    return json.dumps(counts.to_dict())


def counts_from_json(text: str) -> CorrelatorCounts:
    return CorrelatorCounts.from_dict(json.loads(text))


def counts_to_csv(counts: CorrelatorCounts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["basis", "c00", "c01", "c10", "c11"])
    for b in BASES:
        c = counts.counts[b]
        w.writerow([b, *(int(v) if float(v).is_integer() else v for v in c.reshape(-1))])
    return buf.getvalue()


def counts_from_csv(text: str) -> CorrelatorCounts:
    rows = list(csv.DictReader(io.StringIO(text)))
    return CorrelatorCounts(
        {r["basis"]: [[float(r["c00"]), float(r["c01"])], [float(r["c10"]), float(r["c11"])]] for r in rows}
    )


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("nothing to write")
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
