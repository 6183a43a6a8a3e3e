"""Experiment configuration: a TOML document mapped onto strict dataclasses.

Unknown keys are rejected, physical quantities carry their unit in the key
name, and every document round-trips through ``dumps``/``loads`` unchanged.
"""

from __future__ import annotations

import dataclasses
import re
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .cavity import NAMED_CAVITIES, SCAN_WINDOW_HZ, CavityParams, SpinReflectivities, spin_reflectivities
from .photonlink import FiberSegment, FrequencyShifter, LinkConfig, PolarizationState, QfcChain
from .protocol import ClassicalChannel, Decoupling, ProtocolConfig, RateModel, repetition_rate
from .spinphoton import NodeConfig, TdiModel


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key and ``line`` the source line if known."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<document>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- schema


@dataclass
class CavitySection:
    g_hz: float
    kappa_in_hz: float
    kappa_tot_hz: float
    gamma_hz: float
    omega_c_hz: float = 0.0
    omega_siv_up_hz: float = 0.0
    omega_siv_down_hz: float = 0.0
    scan_min_hz: float = SCAN_WINDOW_HZ[0]
    scan_max_hz: float = SCAN_WINDOW_HZ[1]
    scan_points: int = 2001


@dataclass
class NodeSection:
    # either a cavity name (derived reflectivities) or explicit reflectance + contrast error
    cavity: str | None = None
    reflectance_high: float | None = None
    contrast_error: float = 0.0
    low_phase_rad: float = float(np.pi)
    mw_error: float = 0.0
    readout_error: float = 0.0
    nuclear_assignment_error: float = 0.0
    readout_duration_s: float = 67e-6
    decay_exponent: float = 2.0
    t2_electron_s: dict[str, float] = field(default_factory=lambda: {"XY8-1": 125e-6})
    t2_nuclear_s: dict[str, float] = field(default_factory=lambda: {"XY8-1": 0.339, "XY8-128": 2.11})


@dataclass
class NodesSection:
    a: NodeSection = field(default_factory=lambda: NodeSection(reflectance_high=1.0))
    b: NodeSection = field(default_factory=lambda: NodeSection(reflectance_high=1.0, readout_duration_s=17e-6))


@dataclass
class ShifterSection:
    modulation_index: float = 1.8412
    harmonic: int = 1
    eom_insertion_loss: float = 0.5
    filter_transmission: float = 0.4
    total_override: float | None = None


@dataclass
class QfcSection:
    dfg_efficiency: float = 0.33
    sfg_efficiency: float = 0.30
    filter_transmission: float = 0.545
    total_override: float | None = 0.054
    pump_detuning_hz: float = 13e9


@dataclass
class FiberSection:
    length_km: float = 0.0
    attenuation_db_per_km: float = 0.3
    excess_loss_db: float = 0.0


@dataclass
class PolarizationSection:
    chi_rad: float = 0.0
    psi_rad: float = 0.0


@dataclass
class LinkSection:
    converter: str = "none"
    fiber_coupling_a: float = 1.0
    fiber_coupling_b: float = 1.0
    free_space_a: float = 1.0
    circulator: float = 1.0
    detector_efficiency: float = 1.0
    stabilization_loss_db: float = 0.0
    shifter: ShifterSection = field(default_factory=ShifterSection)
    qfc: QfcSection = field(default_factory=QfcSection)
    fibers: list[FiberSection] = field(default_factory=list)
    polarization: PolarizationSection | None = None


@dataclass
class TdiSection:
    visibility_error: float = 0.0
    detector_efficiency: float = 1.0
    dark_count_rate_hz: float = 0.0
    noise_photon_rate_hz: float = 0.0
    detection_window_s: float = 400e-9


@dataclass
class DecouplingSection:
    sequence: str = "auto"
    duration_s: float = 0.0


@dataclass
class ClassicalSection:
    fiber_length_km: float = 0.0
    group_index: float = 1.468


@dataclass
class ProtocolSection:
    scheme: str = "ee"
    mu: float = 0.017
    trials: int = 1000
    mode: str = "heralded"
    n_max: int = 2
    single_photon: bool = False
    error_detection: bool = True
    rotation_mw_error: bool = False
    flag_dephasing: bool = False
    contrast_rejection_probability: float = 0.0
    shards: int = 1
    workers: int = 1
    decoupling: DecouplingSection = field(default_factory=DecouplingSection)
    classical: ClassicalSection = field(default_factory=ClassicalSection)


@dataclass
class RatesSection:
    repetition_rate_hz: float | None = None
    overhead_s: float = 16e-6
    duty_cycle: float = 1.0


@dataclass
class RateRow:
    name: str
    success_probability: float
    repetition_rate_hz: float
    duty_cycle: float
    reported_mhz: float | None = None


@dataclass
class SweepSection:
    variable: str
    values: list[float]
    fiber_attenuation_db_per_km: float = 0.184
    rate_model_gates: int = 1


@dataclass
class BudgetSection:
    error_budget: bool = True
    mc_trials: int = 0
    link_variants: list[str] = field(default_factory=list)
    rate_rows: list[RateRow] = field(default_factory=list)


@dataclass
class OutputSection:
    dir: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json", "txt"])


@dataclass
class ExperimentConfig:
    seed: int = 0
    description: str = ""
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    nodes: NodesSection = field(default_factory=NodesSection)
    cavity: dict[str, CavitySection] = field(default_factory=dict)
    link: LinkSection = field(default_factory=LinkSection)
    tdi: TdiSection = field(default_factory=TdiSection)
    rates: RatesSection = field(default_factory=RatesSection)
    sweep: SweepSection | None = None
    budget: BudgetSection = field(default_factory=BudgetSection)
    output: OutputSection = field(default_factory=OutputSection)


# ---------------------------------------------------------------- generic strict loader


class _Lines:
    """Best-effort key -> line lookup for diagnostics (tomli keeps no positions)."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, path: str) -> int | None:
        key = path.split(".")[-1].split("[")[0]
        pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
        head = re.compile(rf"^\s*\[+\s*{re.escape(path.split('[')[0])}\s*\]+")
        for i, ln in enumerate(self.lines, 1):
            if pat.match(ln) or head.match(ln):
                return i
        return None


def _origin(tp):
    return typing.get_origin(tp), typing.get_args(tp)


def _convert(tp, value, path: str, lines: _Lines):
    origin, args = _origin(tp)
    if origin is typing.Union or origin is types.UnionType:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(inner[0], value, path, lines)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError("expected a table", path, lines.find(path))
        return _build(tp, value, path, lines)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError("expected an array", path, lines.find(path))
        return [_convert(args[0], v, f"{path}[{i}]", lines) for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError("expected a table", path, lines.find(path))
        return {str(k): _convert(args[1], v, f"{path}.{k}", lines) for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path, lines.find(path))
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path, lines.find(path))
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path, lines.find(path))
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path, lines.find(path))
        return value
    raise ConfigError(f"unsupported schema type {tp}", path)


def _build(cls, data: dict, path: str, lines: _Lines):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            p = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(names))})", p, lines.find(p))
    kwargs = {}
    for f in dataclasses.fields(cls):
        p = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], p, lines)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError("missing required key", p, lines.find(path) if path else None)
    return cls(**kwargs)


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue
            out[f.name] = _to_dict(v)
        return out
    if isinstance(obj, list):
        return [_to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_dict(v) for k, v in obj.items()}
    return obj


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", "", int(m.group(1)) if m else None) from exc
    cfg = _build(ExperimentConfig, data, "", _Lines(text))
    validate(cfg, _Lines(text))
    return cfg


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def to_dict(cfg: ExperimentConfig) -> dict:
    return _to_dict(cfg)


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("qnetsim.presets").iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    f = resources.files("qnetsim.presets") / f"{name}.toml"
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(preset_names())})", "preset")
    return f.read_text()


def load_preset(name: str) -> ExperimentConfig:
    return loads(preset_text(name))


# ---------------------------------------------------------------- builders


def _cavities(cfg: ExperimentConfig) -> dict[str, tuple[CavityParams, tuple[float, float], int]]:
    out = {k: (v, SCAN_WINDOW_HZ, 2001) for k, v in NAMED_CAVITIES.items()}
    for name, c in cfg.cavity.items():
        params = CavityParams(
            c.g_hz, c.kappa_in_hz, c.kappa_tot_hz, c.gamma_hz, c.omega_c_hz, c.omega_siv_up_hz, c.omega_siv_down_hz
        )
        out[name] = (params, (c.scan_min_hz, c.scan_max_hz), c.scan_points)
    return out


def build_node(cfg: ExperimentConfig, which: str) -> NodeConfig:
    n: NodeSection = getattr(cfg.nodes, which)
    if n.cavity is not None:
        if n.reflectance_high is not None:
            raise ConfigError("give either cavity or reflectance_high, not both", f"nodes.{which}")
        cavs = _cavities(cfg)
        if n.cavity not in cavs:
            raise ConfigError(f"unknown cavity {n.cavity!r}", f"nodes.{which}.cavity")
        params, (lo, hi), pts = cavs[n.cavity]
        refl = spin_reflectivities(params, lo, hi, pts)
    else:
        if n.reflectance_high is None:
            raise ConfigError("needs cavity or reflectance_high", f"nodes.{which}")
        refl = SpinReflectivities.from_contrast(n.reflectance_high, n.contrast_error, n.low_phase_rad)
    return NodeConfig(
        refl,
        mw_error=n.mw_error,
        readout_error=n.readout_error,
        nuclear_assignment_error=n.nuclear_assignment_error,
        readout_duration_s=n.readout_duration_s,
        t2_electron_s=dict(n.t2_electron_s),
        t2_nuclear_s=dict(n.t2_nuclear_s),
        decay_exponent=n.decay_exponent,
    )


def build_link(cfg: ExperimentConfig, converter: str | None = None) -> LinkConfig:
    ln = cfg.link
    s, q = ln.shifter, ln.qfc
    pol = None if ln.polarization is None else PolarizationState(ln.polarization.chi_rad, ln.polarization.psi_rad)
    return LinkConfig(
        converter=converter or ln.converter,
        shifter=FrequencyShifter(s.modulation_index, s.harmonic, s.eom_insertion_loss, s.filter_transmission,
                                 s.total_override),
        qfc=QfcChain(q.dfg_efficiency, q.sfg_efficiency, q.filter_transmission, q.total_override, q.pump_detuning_hz),
        fiber_coupling_a=ln.fiber_coupling_a,
        fiber_coupling_b=ln.fiber_coupling_b,
        free_space_a=ln.free_space_a,
        circulator=ln.circulator,
        fibers=tuple(FiberSegment(f.length_km, f.attenuation_db_per_km, f.excess_loss_db) for f in ln.fibers),
        polarization=pol,
        stabilization_loss_db=ln.stabilization_loss_db,
        detector_efficiency=ln.detector_efficiency,
    )


def build_tdi(cfg: ExperimentConfig) -> TdiModel:
    t = cfg.tdi
    return TdiModel(t.visibility_error, t.detector_efficiency, t.dark_count_rate_hz, t.noise_photon_rate_hz,
                    t.detection_window_s)


def build_protocol(cfg: ExperimentConfig) -> ProtocolConfig:
    p = cfg.protocol
    return ProtocolConfig(
        scheme=p.scheme,
        mu=p.mu,
        node_a=build_node(cfg, "a"),
        node_b=build_node(cfg, "b"),
        link=build_link(cfg),
        tdi=build_tdi(cfg),
        decoupling=Decoupling(p.decoupling.sequence, p.decoupling.duration_s),
        error_detection=p.error_detection,
        trials=p.trials,
        rng_seed=cfg.seed,
        n_max=p.n_max,
        single_photon=p.single_photon,
        rotation_mw_error=p.rotation_mw_error,
        flag_dephasing=p.flag_dephasing,
        contrast_rejection_probability=p.contrast_rejection_probability,
        classical=ClassicalChannel(p.classical.fiber_length_km, p.classical.group_index),
        mode=p.mode,
    )


def build_repetition_rate(cfg: ExperimentConfig) -> float:
    r = cfg.rates
    if r.repetition_rate_hz is not None:
        return r.repetition_rate_hz
    return repetition_rate(cfg.nodes.a.readout_duration_s, cfg.nodes.b.readout_duration_s, r.overhead_s)


def build_rate_model(cfg: ExperimentConfig, success_probability: float) -> RateModel:
    return RateModel(build_repetition_rate(cfg), success_probability, cfg.rates.duty_cycle)


SWEEP_VARIABLES = ("mu", "decoupling_s", "fiber_km")


def validate(cfg: ExperimentConfig, lines: _Lines | None = None) -> None:
    """Semantic checks beyond the schema; raises ConfigError with the offending key."""
    lines = lines or _Lines("")

    def fail(msg, path):
        raise ConfigError(msg, path, lines.find(path))

    p = cfg.protocol
    if p.trials <= 0:
        fail("trials must be > 0", "protocol.trials")
    if p.shards <= 0 or p.workers <= 0:
        fail("shards and workers must be >= 1", "protocol.shards")
    if not 1 <= p.n_max <= 6:
        fail("n_max must be between 1 and 6", "protocol.n_max")
    if cfg.sweep is not None:
        if cfg.sweep.variable not in SWEEP_VARIABLES:
            fail(f"variable must be one of {SWEEP_VARIABLES}", "sweep.variable")
        if not cfg.sweep.values:
            fail("values must not be empty", "sweep.values")
    for f in cfg.output.formats:
        if f not in ("csv", "json", "txt"):
            fail(f"unknown output format {f!r}", "output.formats")
    for v in cfg.budget.link_variants:
        if v not in ("shifter", "qfc", "none"):
            fail(f"unknown link variant {v!r}", "budget.link_variants")
    if not 0 < cfg.rates.duty_cycle <= 1:
        fail("duty_cycle must be in (0, 1]", "rates.duty_cycle")
    # the physical builders raise ValueError on out-of-range values
    for section, builder in (
        ("nodes.a", lambda: build_node(cfg, "a")),
        ("nodes.b", lambda: build_node(cfg, "b")),
        ("link", lambda: build_link(cfg)),
        ("tdi", lambda: build_tdi(cfg)),
        ("protocol", lambda: build_protocol(cfg)),
    ):
        try:
            builder()
        except ConfigError:
            raise
        except ValueError as exc:
            m = re.match(r"\|?(\w+)", str(exc))
            key = f"{section}.{m.group(1)}" if m else section
            raise ConfigError(str(exc), key, lines.find(key) or lines.find(section)) from exc
