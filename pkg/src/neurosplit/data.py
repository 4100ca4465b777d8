"""Event datasets: synthetic spatiotemporal rate-map classes and event-file replay."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EventDataset",
    "generate_synthetic_dataset",
    "class_rate_maps",
    "oracle_accuracy",
    "load_event_file",
    "load_event_dataset",
    "save_event_file",
]


@dataclass
class EventDataset:
    """Per-slot accumulated event counts ``X`` (N, T, D) with labels ``y`` (N,)."""

    X: np.ndarray
    y: np.ndarray
    m_in: int = 2
    rate_maps: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 3 or len(self.X) != len(self.y):
            raise ValueError("X must be (N, T, D) with one label per sequence")
        if self.X.size and (self.X.min() < 0 or self.X.max() > 2**self.m_in):
            raise ValueError(f"event counts must lie in [0, {2**self.m_in}]")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_slots(self) -> int:
        return self.X.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.X.shape[2]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1

    def split(self, n_train: int) -> tuple["EventDataset", "EventDataset"]:
        a = EventDataset(self.X[:n_train], self.y[:n_train], self.m_in, self.rate_maps)
        b = EventDataset(self.X[n_train:], self.y[n_train:], self.m_in, self.rate_maps)
        return a, b


def class_rate_maps(
    n_classes: int,
    n_inputs: int,
    n_slots: int,
    rng: np.random.Generator,
    background: float = 0.1,
    peak: float = 0.2,
    n_blobs: int = 3,
    width: float = 1.5,
) -> np.ndarray:
    """Random per-class event-rate maps, shape (C, T, D), values in [0, 1].

    Pixels sit on a square-ish grid.  Each class is a sum of Gaussian blobs
    whose centres drift linearly across the sensing window and whose
    intensities are graded, so the class identity lives both in where and in
    how strongly pixels fire.
    """
    side = int(np.ceil(np.sqrt(n_inputs)))
    coords = np.stack(np.unravel_index(np.arange(n_inputs), (side, side)), axis=1).astype(float)
    maps = np.full((n_classes, n_slots, n_inputs), background)
    for c in range(n_classes):
        start = rng.uniform(0, side - 1, size=(n_blobs, 2))
        drift = rng.normal(0, 1.0, size=(n_blobs, 2))
        gain = rng.uniform(0.3, 1.0, size=n_blobs) * peak
        for t in range(n_slots):
            centres = np.clip(start + drift * t, 0, side - 1)
            d2 = ((coords[None, :, :] - centres[:, None, :]) ** 2).sum(-1)
            maps[c, t] += (gain[:, None] * np.exp(-d2 / (2 * width**2))).sum(0)
    return np.clip(maps, 0.0, 1.0)


def _check_distinct(maps: np.ndarray, min_gap: float = 1e-3) -> None:
    summed = maps.sum(axis=1)
    for i in range(len(summed)):
        for j in range(i + 1, len(summed)):
            if np.abs(summed[i] - summed[j]).max() < min_gap:
                raise ValueError(f"classes {i} and {j} have indistinguishable rate profiles")


def generate_synthetic_dataset(
    n_classes: int,
    n_inputs: int,
    n_slots: int,
    n_samples: int,
    rng=None,
    m_in: int = 2,
    rate_maps: np.ndarray | None = None,
    **profile,
) -> EventDataset:
    """Draw ``n_samples`` labelled sequences, classes balanced and shuffled.

    Each slot's count at pixel ``d`` is Binomial(2**m_in, rate) independently.
    Pass ``rate_maps`` (C, T, D) to use custom profiles; otherwise
    :func:`class_rate_maps` draws them from ``rng`` with ``**profile``.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(rng)
    if rate_maps is None:
        rate_maps = class_rate_maps(n_classes, n_inputs, n_slots, rng, **profile)
    rate_maps = np.asarray(rate_maps, dtype=float)
    if rate_maps.shape != (n_classes, n_slots, n_inputs):
        raise ValueError(f"rate_maps shape {rate_maps.shape} != {(n_classes, n_slots, n_inputs)}")
    _check_distinct(rate_maps)
    y = np.arange(n_samples) % n_classes
    rng.shuffle(y)
    X = rng.binomial(2**m_in, rate_maps[y])
    return EventDataset(X, y, m_in, rate_maps)


def oracle_accuracy(ds: EventDataset, rate_maps: np.ndarray | None = None) -> float:
    """Accuracy of nearest time-summed rate map matching, using the true maps."""
    maps = ds.rate_maps if rate_maps is None else rate_maps
    means = 2**ds.m_in * np.asarray(maps).sum(axis=1)  # (C, D)
    summed = ds.X.sum(axis=1)
    d2 = ((summed[:, None, :] - means[None]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d2, axis=1) == ds.y))


# Event file format: text, '#' header lines carrying key=value metadata
# (label, pixels, slots), then one "t_slot,pixel,polarity" record per line.
# Slots are 0-based; polarity is 0/1 (or -1/+1, negative meaning OFF).
# Input feature index is 2 * pixel + (polarity > 0).


def load_event_file(path, m_in: int = 2) -> tuple[np.ndarray, int]:
    """Accumulate one recording into a (T, 2 * pixels) count matrix plus label."""
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = int(v)
            continue
        t, pix, pol = (int(float(v)) for v in line.split(","))
        rows.append((t, pix, pol))
    for key in ("label", "pixels", "slots"):
        if key not in meta:
            raise ValueError(f"{path}: missing '# {key}=...' header")
    X = np.zeros((meta["slots"], 2 * meta["pixels"]), dtype=np.int64)
    for t, pix, pol in rows:
        if not (0 <= t < meta["slots"] and 0 <= pix < meta["pixels"]):
            raise ValueError(f"{path}: event ({t}, {pix}) outside declared geometry")
        X[t, 2 * pix + (pol > 0)] += 1
    return np.minimum(X, 2**m_in), meta["label"]


def load_event_dataset(directory, m_in: int = 2) -> EventDataset:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no *.csv event files in {directory}")
    seqs, labels = zip(*(load_event_file(f, m_in) for f in files))
    return EventDataset(np.stack(seqs), np.array(labels), m_in)


def save_event_file(path, X: np.ndarray, label: int) -> None:
    """Inverse of :func:`load_event_file` for a (T, 2 * pixels) count matrix."""
    T, F = X.shape
    lines = [f"# label={label} pixels={F // 2} slots={T}"]
    for t in range(T):
        for f in np.flatnonzero(X[t]):
            lines.extend([f"{t},{f // 2},{f % 2}"] * int(X[t, f]))
    Path(path).write_text("\n".join(lines) + "\n")
