"""Command-line runner: ``qnetsim simulate|sweep|budget``.

Each command reads one TOML config (file or shipped preset), writes CSV data,
a JSON report and a plain-text summary into the output directory.
Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import (
    ERROR_SOURCES,
    bell_fidelity,
    calibrate_snr_model,
    counts_from_ensemble,
    error_budget,
    exact_fidelity,
    herald_probability,
    snr_fidelity,
)
from .photonlink import FiberSegment, link_success_probability
from .protocol import (
    BASES,
    SIGNED_HERALDS,
    ClassicalChannel,
    Decoupling,
    ProtocolConfig,
    RateModel,
    classical_latency,
    is_usable,
    run_ensemble,
    success_rate,
)

log = logging.getLogger("qnetsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------- output helpers


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Stable CSV: fixed column order, 10 significant digits, LF line endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _table_text(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


class _Emitter:
    def __init__(self, out_dir: Path, formats: list[str]):
        self.dir = out_dir
        self.formats = set(formats)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            write_csv(self.dir / name, header, rows)
            self.written.append(self.dir / name)

    def json(self, name, data):
        if "json" in self.formats:
            write_json(self.dir / name, data)
            self.written.append(self.dir / name)

    def text(self, name, text):
        if "txt" in self.formats:
            (self.dir / name).write_text(text.rstrip() + "\n")
            self.written.append(self.dir / name)


# ---------------------------------------------------------------- shared pieces


def _herald_columns(pc: ProtocolConfig) -> list[tuple[str, bool]]:
    # ee flags are always clean, so the raw column equals the ED column
    if pc.scheme == "ee":
        return [(h, True) for h in ("minus", "plus")]
    return [(h, ed) for h in ("minus", "plus") for ed in (True, False)]


def _success_probability(pc: ProtocolConfig) -> float:
    """Kept heralds per attempt (both signs) under the configured error detection."""
    return herald_probability(pc, None, pc.error_detection and pc.scheme == "nn")


def _fidelity_rows(pc: ProtocolConfig, result) -> list[dict]:
    rows = []
    for h, ed in _herald_columns(pc):
        cc = counts_from_ensemble(result, h, ed)
        n = min(cc.total(b) for b in BASES)
        est = bell_fidelity(cc, h) if n > 0 else None
        rows.append({
            "herald": h,
            "error_detection": ed,
            "fidelity_exact": exact_fidelity(pc, h, ed),
            "fidelity_mc": None if est is None else est.fidelity,
            "stddev": None if est is None else est.stddev,
            "clamped": None if est is None else est.clamped,
            "n_zz": cc.total("zz"),
            "n_xx": cc.total("xx"),
            "n_yy": cc.total("yy"),
        })
    return rows


def _rates(ec: cfgmod.ExperimentConfig, pc: ProtocolConfig, result) -> dict:
    rep = cfgmod.build_repetition_rate(ec)
    duty = ec.rates.duty_cycle
    p_model = _success_probability(pc)
    ed = pc.error_detection and pc.scheme == "nn"
    kept = sum(counts_from_ensemble(result, h, ed).total(b) for h in SIGNED_HERALDS for b in BASES)
    p_sim = kept / result.attempts if result.attempts else 0.0
    dup = 1 - pc.contrast_rejection_probability
    return {
        "repetition_rate_hz": rep,
        "duty_cycle": duty,
        "success_probability_model": p_model,
        "success_probability_sim": p_sim,
        "success_rate_model_hz": success_rate(RateModel(rep, p_model, duty)) * dup,
        "success_rate_sim_hz": success_rate(RateModel(rep, min(p_sim, 1.0), duty)),
        "classical_latency_s": classical_latency(pc.classical),
        "usable": is_usable(pc),
    }


def _run(pc: ProtocolConfig, ec: cfgmod.ExperimentConfig):
    return run_ensemble(pc, shards=ec.protocol.shards, workers=ec.protocol.workers)


# ---------------------------------------------------------------- commands


def cmd_simulate(ec: cfgmod.ExperimentConfig, out: _Emitter) -> dict:
    pc = cfgmod.build_protocol(ec)
    result = _run(pc, ec)
    fid = _fidelity_rows(pc, result)
    rates = _rates(ec, pc, result)

    count_rows = []
    for h, ed in _herald_columns(pc):
        cc = counts_from_ensemble(result, h, ed)
        for b in BASES:
            c = cc.counts[b].reshape(-1)
            count_rows.append([h, ed, b, *(int(v) for v in c)])
    out.csv("counts.csv", ["herald", "error_detection", "basis", "c00", "c01", "c10", "c11"], count_rows)
    keys = list(fid[0])
    out.csv("fidelity.csv", keys, [[r[k] for k in keys] for r in fid])
    report = {
        "command": "simulate",
        "scheme": pc.scheme,
        "mode": pc.mode,
        "seed": pc.rng_seed,
        "trials": result.trials,
        "attempts": result.attempts,
        "heralds": result.heralds,
        "rejected": result.rejected,
        "fidelity": fid,
        "rates": rates,
        "ensemble": result.to_dict(),
    }
    out.json("report.json", report)
    lines = [f"simulate: scheme={pc.scheme} mode={pc.mode} trials={result.trials} seed={pc.rng_seed}", ""]
    lines.append(_table_text(["herald", "ED", "F exact", "F MC", "sigma"],
                             [[r["herald"], r["error_detection"], r["fidelity_exact"], r["fidelity_mc"], r["stddev"]]
                              for r in fid]))
    lines += ["", f"success probability (model) {rates['success_probability_model']:.4g}",
              f"success rate (model) {rates['success_rate_model_hz'] * 1e3:.4g} mHz",
              f"usable after classical latency: {rates['usable']}"]
    out.text("summary.txt", "\n".join(lines))
    return report


def apply_sweep_value(pc: ProtocolConfig, variable: str, value: float, attenuation_db_per_km: float) -> ProtocolConfig:
    if variable == "mu":
        return replace(pc, mu=value)
    if variable == "decoupling_s":
        return replace(pc, decoupling=Decoupling(pc.decoupling.sequence, value))
    if variable == "fiber_km":
        # the spool sits between the nodes and the heralding signal travels back along it
        link = replace(pc.link, fibers=(FiberSegment(value, attenuation_db_per_km),))
        return replace(pc, link=link, classical=ClassicalChannel(value, pc.classical.group_index))
    raise ValueError(f"unknown sweep variable {variable!r}")


SWEEP_HEADER = ["value", "herald", "error_detection", "fidelity_exact", "fidelity_mc", "stddev",
                "success_probability", "success_rate_model_hz", "success_rate_sim_hz", "usable", "fidelity_snr"]


def cmd_sweep(ec: cfgmod.ExperimentConfig, out: _Emitter) -> dict:
    if ec.sweep is None:
        raise cfgmod.ConfigError("sweep command needs a [sweep] section", "sweep")
    sw = ec.sweep
    base = cfgmod.build_protocol(ec)
    snr = None
    if sw.variable == "fiber_km":
        zero = apply_sweep_value(base, "fiber_km", 0.0, sw.fiber_attenuation_db_per_km)
        snr = calibrate_snr_model(zero, "minus", True, sw.fiber_attenuation_db_per_km)
    ed_cols = [(h, base.error_detection and base.scheme == "nn") for h in ("minus", "plus")]
    rows = []
    for v in sw.values:
        pc = apply_sweep_value(base, sw.variable, float(v), sw.fiber_attenuation_db_per_km)
        result = _run(pc, ec)
        rates = _rates(ec, pc, result)
        for h, ed in ed_cols:
            cc = counts_from_ensemble(result, h, ed)
            est = bell_fidelity(cc, h) if min(cc.total(b) for b in BASES) > 0 else None
            f_snr = snr_fidelity(snr, v) if (snr is not None and h == "minus") else None
            rows.append([v, h, ed, exact_fidelity(pc, h, ed),
                         None if est is None else est.fidelity, None if est is None else est.stddev,
                         rates["success_probability_model"], rates["success_rate_model_hz"],
                         rates["success_rate_sim_hz"], rates["usable"], f_snr])
    out.csv("sweep.csv", SWEEP_HEADER, rows)
    report = {"command": "sweep", "variable": sw.variable, "rows": [dict(zip(SWEEP_HEADER, r)) for r in rows]}
    if snr is not None:
        report["snr_model"] = {"baseline_fidelity": snr.baseline_fidelity,
                               "signal_rate_at_zero_km_hz": snr.signal_rate_at_zero_km_hz,
                               "noise_rate_hz": snr.noise_rate_hz,
                               "attenuation_db_per_km": snr.attenuation_db_per_km}
    if sw.variable == "mu":
        xs = np.array([r[0] for r in rows if r[1] == "minus"], dtype=float)
        ys = np.array([r[7] for r in rows if r[1] == "minus"], dtype=float)
        report["rate_linear_r2"] = linear_r2(xs, ys)
    out.json("report.json", report)
    # plot data: one series per herald, x against exact and sampled fidelity
    plot = {"x_label": sw.variable, "series": {}}
    for h, _ in ed_cols:
        sel = [r for r in rows if r[1] == h]
        plot["series"][h] = {"x": [r[0] for r in sel], "fidelity_exact": [r[3] for r in sel],
                             "fidelity_mc": [r[4] for r in sel], "stddev": [r[5] for r in sel]}
    out.json("plot_data.json", plot)
    head = ["value", "herald", "F exact", "F MC", "sigma", "rate model [Hz]"]
    body = [[r[0], r[1], r[3], r[4], r[5], r[7]] for r in rows]
    if snr is not None:
        head.append("F snr")
        body = [b + [r[10]] for b, r in zip(body, rows)]
    text = [f"sweep over {sw.variable}", "", _table_text(head, body)]
    if "rate_linear_r2" in report:
        text.append(f"\nsuccess rate vs mu: R^2 = {report['rate_linear_r2']:.5f}")
    out.text("summary.txt", "\n".join(text))
    return report


def linear_r2(x: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of determination of a least-squares straight line."""
    if x.size < 3:
        return float("nan")
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0


def significant_figures(x: float) -> int:
    digits = format(abs(x), ".12g").replace(".", "").lstrip("0")
    if "e" in digits:
        digits = digits.split("e")[0]
    return max(1, len(digits.rstrip("0")))


def round_sig(x: float, sig: int) -> float:
    if x == 0:
        return 0.0
    return round(x, sig - 1 - int(math.floor(math.log10(abs(x)))))


def rate_row_check(row: cfgmod.RateRow) -> dict:
    """r = eta R D against a reported value, compared at the reported precision."""
    r_mhz = success_rate(RateModel(row.repetition_rate_hz, row.success_probability, row.duty_cycle)) * 1e3
    out = {"name": row.name, "success_probability": row.success_probability,
           "repetition_rate_hz": row.repetition_rate_hz, "duty_cycle": row.duty_cycle,
           "computed_mhz": r_mhz, "reported_mhz": row.reported_mhz, "agrees": None, "note": ""}
    if row.reported_mhz is not None:
        sig = significant_figures(row.reported_mhz)
        agrees = round_sig(r_mhz, sig) == round_sig(row.reported_mhz, sig)
        out["agrees"] = agrees
        if not agrees:
            out["note"] = (f"eta*R*D = {r_mhz:.3g} mHz differs from the reported {row.reported_mhz:g} mHz; "
                           "reported factors are averages and are not refitted")
    return out


BUDGET_HEADER_PREFIX = ["source"]
LINK_HEADER = ["variant", "stage", "efficiency", "passes", "contribution"]
RATE_HEADER = ["name", "success_probability", "repetition_rate_hz", "duty_cycle", "computed_mhz",
               "reported_mhz", "agrees", "note"]


def cmd_budget(ec: cfgmod.ExperimentConfig, out: _Emitter) -> dict:
    report: dict = {"command": "budget"}
    text = []

    # error budget in the fixed source order
    b_header = ["source"]
    b_rows: list[list] = []
    if ec.budget.error_budget:
        pc = cfgmod.build_protocol(ec)
        budget = error_budget(pc, mc_trials=ec.budget.mc_trials)
        cols = [f"{h}_{'ed' if ed else 'raw'}" for h, ed in budget.columns]
        b_header += cols
        if budget.total_mc:
            b_header += [c + "_stddev" for c in cols]
        order = {s: i for i, s in enumerate(ERROR_SOURCES)}
        for name, vals in sorted(budget.rows, key=lambda r: order[r[0]]):
            row = [name] + [vals[c] for c in budget.columns]
            b_rows.append(row + ([None] * len(cols) if budget.total_mc else []))
        row = ["total"] + [budget.total[c] for c in budget.columns]
        b_rows.append(row + ([None] * len(cols) if budget.total_mc else []))
        if budget.total_mc:
            b_rows.append(["total_mc"] + [budget.total_mc[c][0] for c in budget.columns]
                          + [budget.total_mc[c][1] for c in budget.columns])
        report["error_budget"] = [dict(zip(b_header, r)) for r in b_rows]
        text += ["error budget (infidelity)", _table_text(b_header, b_rows), ""]
    out.csv("budget.csv", b_header, b_rows)

    # photonic link efficiency per converter variant
    l_rows = []
    link_report = {}
    for variant in ec.budget.link_variants:
        link = cfgmod.build_link(ec, variant)
        refl_a = abs(cfgmod.build_node(ec, "a").reflectivities.r_high) ** 2
        refl_b = abs(cfgmod.build_node(ec, "b").reflectivities.r_high) ** 2
        lb = link.budget(refl_a, refl_b)
        for r in lb.rows():
            l_rows.append([variant, r["entry"], r["efficiency"], 2 if r["squared"] else 1, r["factor"]])
        eta = link_success_probability(lb, gates=1, mu=ec.protocol.mu)
        l_rows.append([variant, "photonic link efficiency", lb.efficiency, None, lb.efficiency])
        l_rows.append([variant, f"success probability (mu={ec.protocol.mu:g})", eta, None, eta])
        link_report[variant] = {"link_efficiency": lb.efficiency, "success_probability": eta}
    if link_report:
        report["link_budget"] = link_report
        text += ["photonic link", _table_text(LINK_HEADER, l_rows), ""]
    out.csv("link_budget.csv", LINK_HEADER, l_rows)

    # success-rate rows
    r_rows = [rate_row_check(r) for r in ec.budget.rate_rows]
    if r_rows:
        report["rates"] = r_rows
        text += ["success rates r = eta R D", _table_text(RATE_HEADER[:-1],
                                                           [[r[k] for k in RATE_HEADER[:-1]] for r in r_rows])]
        text += [f"note ({r['name']}): {r['note']}" for r in r_rows if r["note"]]
    out.csv("rates.csv", RATE_HEADER, [[r[k] for k in RATE_HEADER] for r in r_rows])

    out.json("report.json", report)
    out.text("summary.txt", "\n".join(text) if text else "empty budget")
    return report


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "budget": cmd_budget}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnetsim", description="Two-node heralded entanglement simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="TOML config file")
        src.add_argument("--preset", help=f"shipped config ({', '.join(cfgmod.preset_names())})")
        s.add_argument("--seed", type=int, help="override the base seed (u64)")
        s.add_argument("--trials", type=int, help="override protocol.trials")
        s.add_argument("--workers", type=int, help="override protocol.workers")
        s.add_argument("--out", type=Path, help="output directory (default: output.dir)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def load_experiment(args) -> cfgmod.ExperimentConfig:
    ec = cfgmod.load(args.config) if args.config is not None else cfgmod.load_preset(args.preset)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise cfgmod.ConfigError("seed must be an unsigned 64-bit integer", "seed")
        ec.seed = args.seed
    if args.trials is not None:
        ec.protocol.trials = args.trials
    if args.workers is not None:
        ec.protocol.workers = args.workers
    cfgmod.validate(ec)
    return ec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        ec = load_experiment(args)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _Emitter(args.out or Path(ec.output.dir), ec.output.formats)
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            COMMANDS[args.command](ec, out)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in out.written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
