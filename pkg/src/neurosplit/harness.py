"""Experiment orchestration: configs, the split-inference timeline, sweeps.

Timeline of one trial with ``T`` sensing slots (``T + 1`` slots in total):

* slot ``t <= T``: the encoder consumes input ``x_t`` and emits ``S_t``;
* slot ``t + 1``: ``S_t`` crosses the link with budget ``P_t``;
* the decoder consumes zeros in slot 1 and ``Ŝ_t`` in slot ``t + 1``;
* the class is read out after slot ``T + 1``.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analog import SubcarrierMap, rx_analog, tx_analog
from .channel import LinkConfig, draw_channel, pilot_symbols, transmit
from .data import EventDataset, generate_synthetic_dataset, load_event_dataset
from .digital import BitBudget, DigitalModem, packet_width
from .power import PowerConstraintViolation, PowerPolicy, check_power
from .rx import estimate_data_channel, zf_equalize
from .snn import SplitNetwork, classify, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

__all__ = [
    "E_AC_PJ",
    "NetworkConfig",
    "DatasetConfig",
    "TrainingConfig",
    "ExperimentConfig",
    "Link",
    "EnergyReport",
    "TrialResult",
    "ConfigError",
    "energy_per_mac",
    "energy_estimate",
    "load_dataset",
    "build_network",
    "run_trial",
    "run_trials",
    "expand_grid",
    "sweep",
    "trial_row",
    "aggregate_row",
    "point_columns",
    "write_rows",
    "SWEEP_FIELDS",
]

E_AC_PJ = 0.1


class ConfigError(ValueError):
    """Inconsistent experiment configuration."""


@dataclass
class NetworkConfig:
    sizes: list = field(default_factory=lambda: [64, 256, 64, 128, 4])
    split: int = 2
    delta: float = 0.5
    alpha: float = 0.5
    checkpoint: str | None = None


@dataclass
class DatasetConfig:
    n_classes: int = 4
    n_inputs: int = 64
    n_slots: int = 4
    n_samples: int = 2500
    n_train: int = 1500
    m_in: int = 2
    seed: int = 123
    path: str | None = None
    background: float = 0.1
    peak: float = 0.2


@dataclass
class TrainingConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    gamma: float = 1.0
    optimizer: str = "adam"
    seed: int = 0
    # info bits per slot of the digital link emulated during training
    # (random packet dropping at the split); None trains over an ideal link
    drop_capacity_bits: int | None = None


_SECTIONS = {
    "network": NetworkConfig,
    "dataset": DatasetConfig,
    "training": TrainingConfig,
    "link": LinkConfig,
    "power": PowerPolicy,
}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run; serialised as nested YAML."""

    seed: int
    m: int = 2
    modulation: str = "digital"
    trials: int = 500
    workers: int = 1
    ldpc_seed: int = 0
    max_iter: int = 50
    drop_priority: str = "uniform"
    gamma_energy: float = 0.0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    power: PowerPolicy = field(default_factory=PowerPolicy)

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        if self.modulation not in ("digital", "analog"):
            raise ConfigError(f"modulation must be 'digital' or 'analog', got {self.modulation!r}")
        if self.m < 0 or self.trials < 1 or self.workers < 1:
            raise ConfigError("need m >= 0, trials >= 1, workers >= 1")
        if not 0 <= self.gamma_energy <= 1:
            raise ConfigError("gamma_energy must lie in [0, 1]")
        if self.drop_priority not in ("uniform", "magnitude"):
            raise ConfigError("drop_priority must be 'uniform' or 'magnitude'")

    def validate(self) -> None:
        """Cross-section checks, run before any simulation."""
        sizes = self.network.sizes
        if self.dataset.path is None:
            if sizes[0] != self.dataset.n_inputs:
                raise ConfigError(f"network input width {sizes[0]} != dataset inputs {self.dataset.n_inputs}")
            if sizes[-1] != self.dataset.n_classes:
                raise ConfigError(f"network output width {sizes[-1]} != classes {self.dataset.n_classes}")
        if not 0 < self.network.split < len(sizes) - 1:
            raise ConfigError("split must leave at least one layer on each side and keep the output layer in the decoder")
        if self.power.p_max != self.link.p_max:
            raise ConfigError("power.p_max and link.p_max must agree (SNR is defined against P^max)")
        M = sizes[self.network.split]
        if self.modulation == "analog" and self.link.n_data * self.link.n_ofdm < M:
            raise ConfigError(f"analog link has {self.link.n_data * self.link.n_ofdm} slots for {M} neurons")
        if self.modulation == "digital" and packet_width(M, self.m) > self.capacity_bits - 16:
            raise ConfigError("digital capacity cannot hold a single packet")

    @property
    def capacity_bits(self) -> int:
        """``N^OFDM * N^D * B * r`` with QPSK (B=2) and rate-1/2 coding."""
        return self.link.n_ofdm * self.link.n_data

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for name, typ in _SECTIONS.items():
            if name in d:
                sub = d[name] or {}
                sub_known = {f.name for f in dataclasses.fields(typ)}
                if set(sub) - sub_known:
                    raise ConfigError(f"unknown keys in [{name}]: {sorted(set(sub) - sub_known)}")
                if name == "link" and isinstance(sub.get("snr_db"), str):
                    sub["snr_db"] = float(sub["snr_db"])
                d[name] = typ(**sub)
        if "seed" not in d:
            raise ConfigError("seed is mandatory")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def replace(self, **overrides) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``{"link.snr_db": 10}``."""
        d = self.to_dict()
        for key, value in overrides.items():
            node = d
            *path, leaf = key.split(".")
            for p in path:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------- energy


def energy_per_mac(m: int, gamma: float, e_ac: float = E_AC_PJ) -> float:
    """``E_mac(m) = (1 + gamma (m - 1)) E_ac``."""
    return (1 + gamma * (m - 1)) * e_ac


@dataclass
class EnergyReport:
    ops: list
    payload_bits: list
    e_ac: float
    gamma: float

    @property
    def total_ops(self) -> int:
        return int(sum(self.ops))

    @property
    def energy(self) -> float:
        """Energy per inference in the units of ``e_ac`` (pJ by default)."""
        return float(sum(n * energy_per_mac(m, self.gamma, self.e_ac) for n, m in zip(self.ops, self.payload_bits)))


def energy_estimate(spike_counts, fan_outs, payload_bits, gamma: float, e_ac: float = E_AC_PJ) -> EnergyReport:
    """Each incoming spike of layer ``i`` costs ``fan_outs[i]`` operations at ``E_mac(payload_bits[i])``."""
    ops = [int(c) * int(f) for c, f in zip(spike_counts, fan_outs)]
    return EnergyReport(ops, [int(m) for m in payload_bits], e_ac, gamma)


# ---------------------------------------------------------------- data / network


def load_dataset(cfg: ExperimentConfig) -> tuple[EventDataset, EventDataset]:
    d = cfg.dataset
    if d.path is not None:
        ds = load_event_dataset(d.path, d.m_in)
    else:
        ds = generate_synthetic_dataset(
            d.n_classes, d.n_inputs, d.n_slots, d.n_samples, rng=d.seed, m_in=d.m_in,
            background=d.background, peak=d.peak,
        )
    if not 0 < d.n_train < len(ds):
        raise ConfigError(f"n_train={d.n_train} must leave samples for testing (have {len(ds)})")
    return ds.split(d.n_train)


def _network_key(cfg: ExperimentConfig, m: int) -> str:
    blob = yaml.safe_dump(
        {"net": dataclasses.asdict(cfg.network), "data": dataclasses.asdict(cfg.dataset),
         "train": dataclasses.asdict(cfg.training), "m": m},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_network(cfg: ExperimentConfig, train_set: EventDataset | None = None, m: int | None = None,
                  cache_dir=None) -> tuple[SplitNetwork, list]:
    """Load the configured checkpoint, a cached one, or train from scratch."""
    m = cfg.m if m is None else m
    if cfg.network.checkpoint:
        return load_checkpoint(cfg.network.checkpoint), []
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"net_m{m}_{_network_key(cfg, m)}.mlif"
        if path.exists():
            return load_checkpoint(path), []
    from .training import DropTrainingChannel, SurrogateConfig, calibrate_weights, train_split_network

    if train_set is None:
        train_set, _ = load_dataset(cfg)
    n = cfg.network
    net = SplitNetwork.random(n.sizes, n.split, m=m, delta=n.delta, alpha=n.alpha, rng=cfg.training.seed)
    net = calibrate_weights(net, train_set.X[:256].transpose(1, 0, 2))
    t = cfg.training
    sc = SurrogateConfig(gamma=t.gamma, lr=t.lr, epochs=t.epochs, batch_size=t.batch_size, optimizer=t.optimizer)
    channel = None
    if t.drop_capacity_bits is not None:
        M = n.sizes[n.split]
        channel = DropTrainingChannel(BitBudget(t.drop_capacity_bits, packet_width(M, m)).max_packets)
    net, history = train_split_network(net, train_set, sc, channel=channel, seed=t.seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(net, path)
    return net, history


# ---------------------------------------------------------------- link


class Link:
    """One modulation chain over the OFDM link, reused across slots."""

    def __init__(self, cfg: ExperimentConfig, M: int, m: int):
        self.cfg, self.M, self.m = cfg, M, m
        self.lc = cfg.link
        self.layout = self.lc.layout
        self.pilots = pilot_symbols(self.lc.n_pilot, self.lc.p_max)
        if cfg.modulation == "digital":
            self.modem = DigitalModem(M, m, self.lc.n_ofdm, self.lc.n_data, cfg.ldpc_seed, cfg.drop_priority)
        else:
            self.smap = SubcarrierMap(M, self.lc.n_data, self.lc.n_ofdm)

    def _channel_pass(self, data: np.ndarray, power: float, rng):
        """Send ``(n_ofdm, n_data)`` data symbols; returns equalized symbols,
        erasure flags and the post-equalization noise variance."""
        lc = self.lc
        mode = self.cfg.power.mode
        n0 = lc.noise_var
        eq = np.empty_like(data)
        erased = np.zeros(data.shape, dtype=bool)
        nvar = np.empty(data.shape)
        ch = None
        for n in range(lc.n_ofdm):
            check_power(data[n], mode, power)
            if ch is None or lc.coherence == "symbol":
                ch = draw_channel(lc.n_paths, self.layout.n_sub, rng)
            if lc.silent:
                frame = self.layout.frame(np.zeros(lc.n_data), np.zeros(lc.n_pilot))
            else:
                frame = self.layout.frame(data[n], self.pilots)
            rx = transmit(frame, ch, n0, rng)
            h = estimate_data_channel(rx, self.layout, self.pilots)
            eq[n], erased[n] = zf_equalize(rx.symbols[self.layout.data_idx], h)
            with np.errstate(divide="ignore"):
                nvar[n] = np.where(erased[n], np.inf, n0 / np.abs(h) ** 2)
        return eq, erased, nvar

    def send(self, S, power: float, rng, stats: dict) -> np.ndarray:
        if self.cfg.modulation == "digital":
            symbols, info, n_pk, dropped = self.modem.transmit(S, power, rng)
            eq, erased, nvar = self._channel_pass(symbols, power, rng)
            out = self.modem.receive(eq, nvar, power, sent_info=info, max_iter=self.cfg.max_iter)
            stats["packets"] += n_pk
            stats["dropped"] += dropped
            stats["uncoded_errors"] += out.uncoded_errors
            stats["coded_errors"] += out.coded_errors
            stats["bits"] += out.n_bits
            stats["slot_erasures"] += int(out.erased)
            stats["subcarrier_erasures"] += int(erased.sum())
            return out.spikes
        frame = tx_analog(S, self.smap, self.m, self.cfg.power.mode, power)
        eq, erased, _ = self._channel_pass(frame.symbols, power, rng)
        stats["packets"] += int(np.count_nonzero(S))
        stats["subcarrier_erasures"] += int(erased.sum())
        return rx_analog(eq, erased, self.smap, self.m, frame.steps)


# ---------------------------------------------------------------- trials


@dataclass
class TrialResult:
    trial: int
    label: int
    prediction: int
    centralized: int
    potentials: np.ndarray
    sent: np.ndarray
    received: np.ndarray
    stats: dict
    energy: EnergyReport

    @property
    def correct(self) -> bool:
        return self.prediction == self.label


def _stats() -> dict:
    return dict.fromkeys(
        ["packets", "dropped", "uncoded_errors", "coded_errors", "bits", "slot_erasures",
         "subcarrier_erasures", "spike_errors"], 0)


def run_trial(cfg: ExperimentConfig, net: SplitNetwork, x, label: int, rng: np.random.Generator,
              trial: int = 0, link: Link | None = None) -> TrialResult:
    """Simulate one inference over the split link. ``x`` is ``(T, D)``."""
    x = np.asarray(x)
    T = x.shape[0]
    M, m = net.n_encoder_out, net.encoder_m
    link = link or Link(cfg, M, m)
    powers = cfg.power.slot_powers(T)

    state = net.initial_state()
    sent = np.zeros((T, M), dtype=np.int64)
    for t in range(T):
        sent[t] = net.forward_slot(state, x[t], "encoder")

    stats = _stats()
    received = np.zeros((T + 1, M), dtype=np.int64)
    for t in range(T):
        received[t + 1] = link.send(sent[t], powers[t], rng, stats)
        stats["spike_errors"] += int(np.count_nonzero(received[t + 1] != sent[t]))

    history = np.stack([net.forward_slot(state, s, "decoder") for s in received])
    central = classify(net.run_centralized(x[:, None, :])[:, 0])

    fan_outs = [layer.n_out for layer in net.layers]
    payload = [cfg.dataset.m_in] + [layer.m for layer in net.layers[:-1]]
    energy = energy_estimate(state.spike_counts, fan_outs, payload, cfg.gamma_energy)
    return TrialResult(trial, int(label), classify(history), central, history, sent, received[1:], stats, energy)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # independent of the grid point, so every point sees the same draws per trial
    return np.random.default_rng([seed, trial])


def _run_chunk(args):
    cfg, net, X, y, trials = args
    link = Link(cfg, net.n_encoder_out, net.encoder_m)
    out = []
    for i in trials:
        j = i % len(y)
        try:
            out.append(run_trial(cfg, net, X[j], y[j], _trial_rng(cfg.seed, i), i, link))
        except PowerConstraintViolation as exc:
            out.append((i, "invariant", str(exc)))
        except Exception as exc:  # noqa: BLE001 - recorded as an error row, sweep goes on
            log.exception("trial %d failed", i)
            out.append((i, "error", f"{type(exc).__name__}: {exc}"))
    return out


def run_trials(cfg: ExperimentConfig, net: SplitNetwork, test_set: EventDataset, trials: int | None = None):
    """Run trials ``0..trials-1`` (trial ``i`` uses test sample ``i mod N``).

    Returns a list ordered by trial index; failed trials appear as
    ``(trial, kind, message)`` tuples with kind ``"invariant"`` or ``"error"``.
    """
    cfg.validate()
    n = cfg.trials if trials is None else trials
    idx = list(range(n))
    if cfg.workers == 1:
        return _run_chunk((cfg, net, test_set.X, test_set.y, idx))
    chunks = [idx[w::cfg.workers] for w in range(cfg.workers)]
    with ProcessPoolExecutor(cfg.workers) as pool:
        parts = pool.map(_run_chunk, [(cfg, net, test_set.X, test_set.y, c) for c in chunks])
        results = [r for part in parts for r in part]
    return sorted(results, key=lambda r: r.trial if isinstance(r, TrialResult) else r[0])


# ---------------------------------------------------------------- sweeps

SWEEP_KEYS = {
    "snr_db": "link.snr_db",
    "m": "m",
    "n_ofdm": "link.n_ofdm",
    "power_mode": "power.mode",
    "decay_b": "power.decay_b",
    "modulation": "modulation",
}

SWEEP_FIELDS = [
    "row", "status", "trial", "modulation", "snr_db", "m", "n_ofdm", "power_mode", "decay_b",
    "capacity_bits", "accuracy", "accuracy_stderr", "agreement", "drop_rate", "drop_rate_stderr",
    "ber_uncoded", "ber_coded", "slot_erasures", "subcarrier_erasures", "spike_errors",
    "energy_pj", "energy_pj_stderr", "n_trials", "message",
]


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of ``{name: [values]}`` in key order, names from ``SWEEP_KEYS``."""
    unknown = set(grid) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"cannot sweep over {sorted(unknown)}; choose from {sorted(SWEEP_KEYS)}")
    names = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]


def point_columns(cfg: ExperimentConfig) -> dict:
    return {
        "modulation": cfg.modulation, "snr_db": cfg.link.snr_db, "m": cfg.m, "n_ofdm": cfg.link.n_ofdm,
        "power_mode": cfg.power.mode, "decay_b": cfg.power.decay_b,
        "capacity_bits": cfg.capacity_bits if cfg.modulation == "digital" else "",
    }


def trial_row(r: TrialResult) -> dict:
    s = r.stats
    return {
        "accuracy": int(r.correct), "agreement": int(r.prediction == r.centralized),
        "drop_rate": s["dropped"] / s["packets"] if s["packets"] else 0.0,
        "ber_uncoded": s["uncoded_errors"] / s["bits"] if s["bits"] else "",
        "ber_coded": s["coded_errors"] / s["bits"] if s["bits"] else "",
        "slot_erasures": s["slot_erasures"], "subcarrier_erasures": s["subcarrier_erasures"],
        "spike_errors": s["spike_errors"], "energy_pj": r.energy.energy,
    }


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return math.nan, math.nan
    se = v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0
    return float(v.mean()), float(se)


def aggregate_row(results: list[TrialResult]) -> dict:
    rows = [trial_row(r) for r in results]
    out = {"n_trials": len(rows)}
    for key in ("accuracy", "drop_rate", "energy_pj"):
        out[key], out[key + "_stderr"] = _mean_stderr([r[key] for r in rows])
    out["agreement"] = _mean_stderr([r["agreement"] for r in rows])[0]
    bits = sum(r.stats["bits"] for r in results)
    if bits:
        out["ber_uncoded"] = sum(r.stats["uncoded_errors"] for r in results) / bits
        out["ber_coded"] = sum(r.stats["coded_errors"] for r in results) / bits
    for key in ("slot_erasures", "subcarrier_erasures", "spike_errors"):
        out[key] = sum(r.stats[key] for r in results)
    return out


def sweep(cfg: ExperimentConfig, grid: dict, out_csv=None, networks: dict | None = None,
          cache_dir=None, per_trial: bool = True) -> list[dict]:
    """Evaluate every grid point; returns (and optionally writes) the CSV rows.

    Networks are trained once per payload width ``m`` (or taken from
    ``networks``).  A failing trial yields a ``status=error`` (or
    ``invariant``) row and the sweep continues.
    """
    points = expand_grid(grid)
    train_set, test_set = load_dataset(cfg)
    networks = {} if networks is None else networks
    rows: list[dict] = []
    for point in points:
        pc = cfg.replace(**{SWEEP_KEYS[k]: v for k, v in point.items()})
        pc.validate()
        if pc.m not in networks:
            networks[pc.m], _ = build_network(pc, train_set, cache_dir=cache_dir)
        results = run_trials(pc, networks[pc.m], test_set)
        cols = point_columns(pc)
        good = [r for r in results if isinstance(r, TrialResult)]
        for r in results:
            if isinstance(r, TrialResult):
                if per_trial:
                    rows.append({"row": "trial", "status": "ok", "trial": r.trial, **cols, **trial_row(r)})
            else:
                rows.append({"row": "trial", "status": r[1], "trial": r[0], **cols, "message": r[2]})
        status = "ok" if len(good) == len(results) else "partial"
        rows.append({"row": "aggregate", "status": status, **cols, **aggregate_row(good)})
        log.info("point %s: accuracy %.4f", point, rows[-1]["accuracy"])
    if out_csv is not None:
        write_rows(rows, out_csv)
        cfg.save(Path(str(out_csv) + ".config.yaml"))
        Path(str(out_csv) + ".grid.yaml").write_text(yaml.safe_dump(grid, sort_keys=False))
    return rows


def write_rows(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
