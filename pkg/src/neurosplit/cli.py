"""Command line entry point: ``neurosplit {gen-data,train,run,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .data import generate_synthetic_dataset, save_event_file
from .harness import (
    ConfigError,
    ExperimentConfig,
    TrialResult,
    build_network,
    load_dataset,
    run_trials,
    sweep,
    aggregate_row,
    point_columns,
    trial_row,
    write_rows,
)
from .power import PowerConstraintViolation
from .snn import save_checkpoint
from .training import write_history_csv

log = logging.getLogger("neurosplit")

EXIT_INVARIANT = 3
EXIT_CONFIG = 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment config (override the --config file)")
    g.add_argument("--config", type=Path, help="YAML experiment config")
    g.add_argument("--seed", type=int)
    g.add_argument("--m", type=int, help="spike payload bits")
    g.add_argument("--modulation", choices=["digital", "analog"])
    g.add_argument("--trials", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--snr-db", type=float, dest="link.snr_db", help="P^max/N0 in dB; -inf mutes the link")
    g.add_argument("--n-ofdm", type=int, dest="link.n_ofdm")
    g.add_argument("--n-data", type=int, dest="link.n_data")
    g.add_argument("--n-pilot", type=int, dest="link.n_pilot")
    g.add_argument("--n-paths", type=int, dest="link.n_paths")
    g.add_argument("--coherence", choices=["slot", "symbol"], dest="link.coherence")
    g.add_argument("--power-mode", choices=["block", "peak"], dest="power.mode")
    g.add_argument("--decay-b", type=float, dest="power.decay_b")
    g.add_argument("--p-max", type=float, dest="p_max")
    g.add_argument("--checkpoint", dest="network.checkpoint")
    g.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")], dest="network.sizes",
                   help="comma separated layer widths, e.g. 64,256,64,128,4")
    g.add_argument("--split", type=int, dest="network.split")
    g.add_argument("--data-dir", dest="dataset.path", help="directory of event files")
    g.add_argument("--n-samples", type=int, dest="dataset.n_samples")
    g.add_argument("--n-train", type=int, dest="dataset.n_train")
    g.add_argument("--slots", type=int, dest="dataset.n_slots", help="sensing slots T")
    g.add_argument("--epochs", type=int, dest="training.epochs")
    g.add_argument("--lr", type=float, dest="training.lr")
    g.add_argument("--drop-capacity-bits", type=int, dest="training.drop_capacity_bits")
    g.add_argument("--gamma-energy", type=float, dest="gamma_energy")
    g.add_argument("--drop-priority", choices=["uniform", "magnitude"], dest="drop_priority")


def _resolve_config(args) -> ExperimentConfig:
    d = yaml.safe_load(args.config.read_text()) if args.config else {}
    d = d or {}
    over = {}
    for key, value in vars(args).items():
        if value is None or key in ("config", "command", "func", "out", "grid", "verbose", "cache_dir", "per_trial"):
            continue
        if key == "p_max":
            over["link.p_max"] = over["power.p_max"] = value
        elif key in ("seed", "m", "modulation", "trials", "workers", "gamma_energy", "drop_priority") or "." in key:
            over[key] = value
    if args.seed is None and "seed" not in d:
        raise ConfigError("a seed is required (--seed or in the config file)")
    d.setdefault("seed", args.seed)
    cfg = ExperimentConfig.from_dict(d)
    cfg = cfg.replace(**over) if over else cfg
    cfg.validate()
    return cfg


def cmd_gen_data(args) -> int:
    rng = np.random.default_rng(args.seed)
    ds = generate_synthetic_dataset(args.classes, args.inputs, args.slots, args.samples, rng, m_in=args.m_in)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (x, y) in enumerate(zip(ds.X, ds.y)):
        save_event_file(out / f"sample_{i:05d}.csv", x, int(y))
    print(f"wrote {len(ds)} event files to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    train_set, test_set = load_dataset(cfg)
    net, history = build_network(cfg, train_set)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out)
    cfg.save(Path(str(out) + ".config.yaml"))
    if history:
        write_history_csv(history, Path(str(out) + ".history.csv"))
    acc = float(np.mean(net.predict(test_set.X.transpose(1, 0, 2)) == test_set.y))
    print(f"saved {out}; centralized test accuracy {acc:.4f}")
    return 0


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    train_set, test_set = load_dataset(cfg)
    net, _ = build_network(cfg, train_set, cache_dir=args.cache_dir)
    results = run_trials(cfg, net, test_set)
    cols = point_columns(cfg)
    rows, good, violations = [], [], 0
    for r in results:
        if isinstance(r, TrialResult):
            good.append(r)
            rows.append({"row": "trial", "status": "ok", "trial": r.trial, **cols, **trial_row(r)})
        else:
            violations += r[1] == "invariant"
            rows.append({"row": "trial", "status": r[1], "trial": r[0], **cols, "message": r[2]})
    agg = aggregate_row(good)
    rows.append({"row": "aggregate", "status": "ok" if len(good) == len(results) else "partial", **cols, **agg})
    if args.out:
        write_rows(rows, args.out)
        cfg.save(Path(str(args.out) + ".config.yaml"))
    print(f"accuracy {agg['accuracy']:.4f} ± {agg['accuracy_stderr']:.4f} over {agg['n_trials']} trials"
          f" (agreement with centralized {agg['agreement']:.4f})")
    return EXIT_INVARIANT if violations else 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    grid = yaml.safe_load(Path(args.grid).read_text())
    rows = sweep(cfg, grid, args.out, cache_dir=args.cache_dir, per_trial=args.per_trial)
    agg = [r for r in rows if r["row"] == "aggregate"]
    for r in agg:
        print(f"{r['modulation']:7s} snr={r['snr_db']:>6} m={r['m']} n_ofdm={r['n_ofdm']} "
              f"power={r['power_mode']} b={r['decay_b']}  acc={r['accuracy']:.4f}")
    bad = sum(r["status"] == "invariant" for r in rows)
    return EXIT_INVARIANT if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurosplit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic event dataset as event files")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--inputs", type=int, default=64)
    g.add_argument("--slots", type=int, default=4)
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--m-in", type=int, default=2)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a split network and save a checkpoint")
    _add_config_flags(t)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="simulate trials at one operating point")
    _add_config_flags(r)
    r.add_argument("--out", help="CSV path")
    r.add_argument("--cache-dir", help="directory for trained-network checkpoints")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="grid sweep, one CSV row per trial plus aggregates")
    _add_config_flags(s)
    s.add_argument("--grid", required=True, help="YAML mapping of swept keys to value lists")
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--cache-dir", help="directory for trained-network checkpoints")
    s.add_argument("--aggregate-only", dest="per_trial", action="store_false")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PowerConstraintViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
