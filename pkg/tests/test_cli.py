import csv

import pytest
import yaml

from neurosplit.cli import EXIT_CONFIG, EXIT_INVARIANT, main
from neurosplit.data import load_event_dataset

SMALL = ["--seed", "3", "--sizes", "16,32,16,4", "--split", "2", "--n-samples", "120", "--n-train", "80",
         "--epochs", "1", "--n-ofdm", "1"]


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump({"seed": 3, "dataset": {"n_inputs": 16}, "trials": 4}))
    return ["--config", str(p)] + SMALL


def test_gen_data(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--seed", "1", "--samples", "8", "--inputs", "6"]) == 0
    ds = load_event_dataset(tmp_path / "d")
    assert len(ds) == 8 and ds.n_inputs == 6
    assert "wrote 8" in capsys.readouterr().out


def test_train_writes_checkpoint(tmp_path, small_config):
    out = tmp_path / "net.mlif"
    assert main(["train", *small_config, "--out", str(out)]) == 0
    assert out.exists()
    assert yaml.safe_load(open(str(out) + ".config.yaml"))["network"]["sizes"] == [16, 32, 16, 4]
    assert len(list(csv.DictReader(open(str(out) + ".history.csv")))) == 2


def test_run_and_checkpoint_reuse(tmp_path, small_config, capsys):
    ck = tmp_path / "net.mlif"
    main(["train", *small_config, "--out", str(ck)])
    out = tmp_path / "run.csv"
    assert main(["run", *small_config, "--checkpoint", str(ck), "--modulation", "analog", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["row"] for r in rows] == ["trial"] * 4 + ["aggregate"]
    assert "accuracy" in capsys.readouterr().out


def test_sweep(tmp_path, small_config, capsys):
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump({"snr_db": [0.0, 30.0], "decay_b": [1.4]}))
    out = tmp_path / "sweep.csv"
    code = main(["sweep", *small_config, "--grid", str(grid), "--out", str(out), "--aggregate-only",
                 "--cache-dir", str(tmp_path / "cache")])
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2 and {r["decay_b"] for r in rows} == {"1.4"}
    assert len(capsys.readouterr().out.strip().splitlines()) == 2


def test_missing_seed_is_config_error(capsys):
    assert main(["run", "--trials", "1"]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_inconsistent_config(small_config):
    assert main(["run", *small_config, "--split", "3"]) == EXIT_CONFIG


def test_invariant_exit_code(tmp_path, small_config, monkeypatch):
    from neurosplit import harness
    from neurosplit.power import check_power

    def bad(self, S, power, rng, stats):
        check_power([9.0], "peak", power)

    monkeypatch.setattr(harness.Link, "send", bad)
    assert main(["run", *small_config]) == EXIT_INVARIANT


def test_subcommand_required():
    with pytest.raises(SystemExit):
        main([])
