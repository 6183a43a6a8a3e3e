import csv
import json

import pytest

from qnetsim import cli


def run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path)])


def test_simulate_writes_reports(tmp_path):
    assert run(tmp_path, "simulate", "--preset", "ee_fig2b", "--trials", "3000") == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["trials"] == 3000
    rows = list(csv.DictReader(open(tmp_path / "fidelity.csv")))
    assert {r["herald"] for r in rows} == {"plus", "minus"}
    assert (tmp_path / "counts.csv").exists() and (tmp_path / "summary.txt").exists()


def test_csv_is_byte_identical_across_runs_and_workers(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "simulate", "--preset", "nn_fig3b", "--trials", "4000", "--seed", "42") == 0
    assert run(b, "simulate", "--preset", "nn_fig3b", "--trials", "4000", "--seed", "42", "--workers", "2") == 0
    for name in ("counts.csv", "fidelity.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sharded_config_gives_identical_csv(tmp_path):
    text = (tmp_path / "x").parent.joinpath("c.toml")
    from qnetsim import config as cfgmod

    cfg = cfgmod.load_preset("ee_fig2b")
    cfg.protocol.trials = 5000
    text.write_text(cfgmod.dumps(cfg))
    cfg.protocol.shards = 5
    cfg.protocol.workers = 3
    sharded = tmp_path / "s.toml"
    sharded.write_text(cfgmod.dumps(cfg))
    assert run(tmp_path / "o1", "simulate", "--config", str(text)) == 0
    assert run(tmp_path / "o2", "simulate", "--config", str(sharded)) == 0
    assert (tmp_path / "o1" / "counts.csv").read_bytes() == (tmp_path / "o2" / "counts.csv").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--preset", "ee_fig2b", "--trials", "0") == 2
    assert "protocol.trials" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol]\nbogus_s = 1\n")
    assert run(tmp_path, "simulate", "--config", str(bad)) == 2
    assert "line 2" in capsys.readouterr().err
    assert run(tmp_path, "sweep", "--preset", "ee_fig2b") == 2
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "missing.toml")) == 2


def test_numerical_error_exit_3(tmp_path):
    cfg = tmp_path / "dark.toml"
    # a perfectly dark node never heralds, so heralded sampling is impossible
    cfg.write_text('[protocol]\nmode = "heralded"\n\n[nodes.a]\nreflectance_high = 0.0\n')
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 3


def test_sweep_rows(tmp_path):
    assert run(tmp_path, "sweep", "--preset", "decoupling_sweep", "--trials", "3000") == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 2 * 5
    assert (tmp_path / "plot_data.json").exists()


def test_budget_tables(tmp_path):
    assert run(tmp_path, "budget", "--preset", "table_s3") == 0
    rows = list(csv.DictReader(open(tmp_path / "link_budget.csv")))
    eff = {r["variant"]: float(r["efficiency"]) for r in rows if r["stage"] == "photonic link efficiency"}
    assert eff["shifter"] == pytest.approx(0.0020, rel=0.1)
    assert eff["qfc"] == pytest.approx(0.0015, rel=0.1)


def test_empty_budget_gives_header_only_csv(tmp_path):
    cfg = tmp_path / "empty.toml"
    cfg.write_text("[budget]\nerror_budget = false\n")
    assert run(tmp_path, "budget", "--config", str(cfg)) == 0
    for name in ("budget.csv", "link_budget.csv", "rates.csv"):
        assert len((tmp_path / name).read_text().splitlines()) == 1


def test_rate_row_notes(tmp_path):
    assert run(tmp_path, "budget", "--preset", "ext_rates") == 0
    rows = {r["name"]: r for r in csv.DictReader(open(tmp_path / "rates.csv"))}
    assert rows["nn_ed"]["agrees"] == "true"
    assert rows["ee_low_mu"]["agrees"] == "false" and rows["ee_low_mu"]["note"]


def test_significant_figure_helpers():
    assert cli.significant_figures(6.0) == 1
    assert cli.significant_figures(1050.0) == 3
    assert cli.significant_figures(0.23) == 2
    assert cli.round_sig(5.6, 1) == 6
