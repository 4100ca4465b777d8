import csv
import math

import numpy as np
import pytest

from neurosplit.harness import (
    E_AC_PJ,
    ConfigError,
    EnergyReport,
    ExperimentConfig,
    Link,
    TrialResult,
    aggregate_row,
    build_network,
    energy_estimate,
    energy_per_mac,
    expand_grid,
    load_dataset,
    run_trial,
    run_trials,
    sweep,
)

SMALL = {
    "seed": 5,
    "trials": 40,
    "network": {"sizes": [16, 32, 16, 4], "split": 2},
    "dataset": {"n_inputs": 16, "n_samples": 240, "n_train": 160},
    "training": {"epochs": 3, "lr": 1e-2},
    "link": {"n_ofdm": 1, "snr_db": 40.0},
}


@pytest.fixture(scope="module")
def small():
    cfg = ExperimentConfig.from_dict(SMALL)
    train, test = load_dataset(cfg)
    net, history = build_network(cfg, train)
    return cfg, net, test, history


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL).replace(**{"link.snr_db": -math.inf, "power.decay_b": 1.4})
        cfg.save(tmp_path / "c.yaml")
        assert ExperimentConfig.load(tmp_path / "c.yaml") == cfg

    def test_seed_mandatory(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"m": 2})

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 1, "snr": 3})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 1, "link": {"snr": 3}})
        with pytest.raises(ConfigError):
            ExperimentConfig(seed=1).replace(**{"link.snr": 3})

    def test_capacity(self):
        cfg = ExperimentConfig(seed=0).replace(**{"link.n_ofdm": 5})
        assert cfg.capacity_bits == 2560

    @pytest.mark.parametrize("override", [
        {"network.sizes": [10, 32, 16, 4]},
        {"network.split": 3},
        {"power.p_max": 2.0},
        {"modulation": "analog", "link.n_data": 4, "link.n_pilot": 1, "link.n_ofdm": 1},
        {"m": 500},
    ])
    def test_validate_rejects(self, override):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(SMALL).replace(**override).validate()

    def test_bad_fields(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 1, "modulation": "fm"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 1, "gamma_energy": 2})


class TestEnergy:
    @pytest.mark.parametrize("m", range(0, 9))
    def test_endpoints(self, m):
        assert energy_per_mac(m, 0.0) == E_AC_PJ
        assert energy_per_mac(m, 1.0) == m * E_AC_PJ

    def test_zero_spikes(self):
        assert energy_estimate([0, 0], [10, 4], [2, 2], 1.0).energy == 0.0

    def test_sum(self):
        rep = energy_estimate([3, 2], [10, 4], [2, 4], 0.5, e_ac=1.0)
        assert rep.total_ops == 38
        assert rep.energy == pytest.approx(30 * 1.5 + 8 * 2.5)
        assert isinstance(rep, EnergyReport)


class TestTrials:
    def test_training_history(self, small):
        hist = small[3]
        assert [h["epoch"] for h in hist] == [0, 1, 2, 3]
        assert hist[-1]["loss"] < hist[0]["loss"]

    def test_lossless_link_matches_centralized(self, small):
        cfg, net, test, _ = small
        for mod in ("digital", "analog"):
            res = run_trials(cfg.replace(modulation=mod), net, test, trials=30)
            assert all(r.prediction == r.centralized for r in res)
            assert all(np.array_equal(r.sent, r.received) for r in res)

    def test_timeline_shapes(self, small):
        cfg, net, test, _ = small
        r = run_trial(cfg, net, test.X[0], test.y[0], np.random.default_rng(0))
        T = test.n_slots
        assert r.sent.shape == (T, 16) and r.received.shape == (T, 16)
        # the decoder also integrates the empty first slot
        assert r.potentials.shape == (T + 1, 4)

    def test_determinism(self, small):
        cfg, net, test, _ = small
        c = cfg.replace(**{"link.snr_db": 5.0})
        a = run_trials(c, net, test, trials=10)
        b = run_trials(c, net, test, trials=10)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.potentials, y.potentials)
            assert x.stats == y.stats

    def test_workers_give_same_results(self, small):
        cfg, net, test, _ = small
        c = cfg.replace(**{"link.snr_db": 5.0})
        a = run_trials(c, net, test, trials=6)
        b = run_trials(c.replace(workers=2), net, test, trials=6)
        assert [r.trial for r in b] == list(range(6))
        assert [r.prediction for r in a] == [r.prediction for r in b]

    @pytest.mark.parametrize("mod", ["digital", "analog"])
    def test_muted_link_is_chance(self, small, mod):
        cfg, net, test, _ = small
        c = cfg.replace(modulation=mod, **{"link.snr_db": -math.inf})
        res = run_trials(c, net, test, trials=400)
        acc = np.mean([r.correct for r in res])
        assert abs(acc - 0.25) < 0.08

    def test_drop_accounting(self, small):
        cfg, net, test, _ = small
        c = cfg.replace(**{"link.n_data": 16, "link.n_pilot": 2, "link.n_ofdm": 2})
        res = run_trials(c, net, test, trials=20)
        row = aggregate_row(res)
        assert 0 <= row["drop_rate"] <= 1
        assert sum(r.stats["dropped"] for r in res) > 0

    def test_power_violation_becomes_invariant_row(self, small, monkeypatch):
        cfg, net, test, _ = small

        def bad(self, S, power, rng, stats):
            from neurosplit.power import check_power
            check_power(np.full(4, 2.0), "peak", power)

        monkeypatch.setattr(Link, "send", bad)
        res = run_trials(cfg, net, test, trials=2)
        assert [r[1] for r in res] == ["invariant", "invariant"]


class TestSweep:
    def test_grid(self):
        pts = expand_grid({"snr_db": [0, 10], "m": 2})
        assert pts == [{"snr_db": 0, "m": 2}, {"snr_db": 10, "m": 2}]
        with pytest.raises(ConfigError):
            expand_grid({"alpha": [1]})

    def test_single_point_csv(self, small, tmp_path):
        cfg, net, _, _ = small
        out = tmp_path / "s.csv"
        rows = sweep(cfg.replace(trials=5), {"snr_db": [40.0]}, out, networks={2: net})
        agg = [r for r in rows if r["row"] == "aggregate"]
        assert len(agg) == 1 and len(rows) == 6
        assert agg[0]["capacity_bits"] == 512
        with open(out) as fh:
            lines = list(csv.DictReader(fh))
        assert lines[-1]["row"] == "aggregate" and lines[-1]["n_trials"] == "5"
        assert (tmp_path / "s.csv.config.yaml").exists() and (tmp_path / "s.csv.grid.yaml").exists()

    def test_failing_trial_gives_error_row(self, small, monkeypatch):
        cfg, net, _, _ = small

        def boom(self, S, power, rng, stats):
            raise RuntimeError("decoder exploded")

        monkeypatch.setattr(Link, "send", boom)
        rows = sweep(cfg.replace(trials=3), {"m": [2]}, networks={2: net})
        assert [r["status"] for r in rows] == ["error"] * 3 + ["partial"]
        assert "decoder exploded" in rows[0]["message"]

    def test_network_cache(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**SMALL, "training": {"epochs": 1}})
        train, _ = load_dataset(cfg)
        a, hist = build_network(cfg, train, cache_dir=tmp_path)
        b, hist2 = build_network(cfg, train, cache_dir=tmp_path)
        assert hist and not hist2
        np.testing.assert_array_equal(a.layers[0].weights, b.layers[0].weights)
        assert len(list(tmp_path.iterdir())) == 1


def test_trial_result_correct():
    r = TrialResult(0, 2, 2, 1, None, None, None, {}, None)
    assert r.correct
