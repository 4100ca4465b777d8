"""Analog transport: each neuron owns fixed subcarrier slots and sends its
payload level as a real PAM amplitude on all of them (repetition), silence
as an idle subcarrier."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .power import block_gain

__all__ = ["SubcarrierMap", "PamConstellation", "AnalogFrame", "build_map", "tx_analog", "rx_analog"]


@dataclass(frozen=True)
class SubcarrierMap:
    """Round-robin assignment of the ``n_ofdm * n_data`` slots to ``M`` neurons.

    Slot ``s = symbol * n_data + subcarrier`` belongs to neuron ``s % M``, so
    with ``n_data`` a multiple of ``M`` each neuron gets the same subcarriers
    in every symbol.  Neurons get ``floor`` or ``ceil`` of the mean count.
    """

    M: int
    n_data: int
    n_ofdm: int

    def __post_init__(self):
        if self.M < 1 or self.n_data < 1 or self.n_ofdm < 1:
            raise ValueError("M, n_data and n_ofdm must be positive")
        if self.n_data * self.n_ofdm < self.M:
            raise ValueError(
                f"{self.n_data * self.n_ofdm} subcarrier slots cannot serve {self.M} neurons"
            )

    @property
    def n_slots(self) -> int:
        return self.n_data * self.n_ofdm

    @property
    def owner(self) -> np.ndarray:
        """Neuron index of every slot, shape ``(n_ofdm, n_data)``."""
        return (np.arange(self.n_slots) % self.M).reshape(self.n_ofdm, self.n_data)

    @property
    def repetitions(self) -> np.ndarray:
        return np.bincount(self.owner.ravel(), minlength=self.M)

    def slots_of(self, neuron: int) -> list[tuple[int, int]]:
        s = np.arange(neuron, self.n_slots, self.M)
        return [(int(i // self.n_data), int(i % self.n_data)) for i in s]

    def export_csv(self, path, data_indices=None) -> None:
        """Rows ``(neuron, symbol, subcarrier)``; ``data_indices`` maps data slots
        to physical subcarrier numbers."""
        own = self.owner
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["neuron", "symbol", "subcarrier"])
            for n in range(self.n_ofdm):
                for d in range(self.n_data):
                    sub = d if data_indices is None else int(data_indices[d])
                    w.writerow([int(own[n, d]), n, sub])


def build_map(M: int, n_data: int, n_ofdm: int) -> SubcarrierMap:
    return SubcarrierMap(M, n_data, n_ofdm)


@dataclass(frozen=True)
class PamConstellation:
    """Levels ``a_k = k * step`` for payload ``k`` in 1..2^m, idle level 0."""

    m: int
    step: float

    @classmethod
    def for_peak(cls, m: int, power: float) -> "PamConstellation":
        """Largest level exactly at the peak amplitude ``sqrt(power)``."""
        return cls(m, math.sqrt(power) / 2**m)

    @property
    def levels(self) -> np.ndarray:
        return self.step * np.arange(2**self.m + 1)

    def detect(self, amplitude) -> np.ndarray:
        """Nearest level among ``{0, a_1, ..., a_2^m}`` (ties go up)."""
        k = np.floor(np.asarray(amplitude, dtype=np.float64) / self.step + 0.5)
        return np.clip(k, 0, 2**self.m).astype(np.int64)


@dataclass
class AnalogFrame:
    """Data-subcarrier symbols ``(n_ofdm, n_data)`` and the PAM step of each symbol."""

    symbols: np.ndarray
    steps: np.ndarray


def tx_analog(S, smap: SubcarrierMap, m: int, mode: str, power: float) -> AnalogFrame:
    """Map spikes onto their slots and scale each OFDM symbol to its budget.

    Peak mode uses the fixed step ``sqrt(P)/2^m``.  Block mode rescales every
    symbol so its average power is exactly ``P`` (idle slots included), which
    boosts sparse symbols; the resulting per-symbol step is side information
    for the receiver.  An all-idle symbol keeps the peak step.
    """
    S = np.asarray(S, dtype=np.int64)
    if S.shape != (smap.M,):
        raise ValueError(f"spike vector must have shape ({smap.M},)")
    base = PamConstellation.for_peak(m, power).step
    levels = S[smap.owner].astype(np.float64)
    x = base * levels
    steps = np.full(smap.n_ofdm, base)
    if mode == "block":
        for n in range(smap.n_ofdm):
            g = block_gain(x[n], "block", power)
            x[n] *= g
            steps[n] *= g
    elif mode != "peak":
        raise ValueError(f"unknown power mode {mode!r}")
    return AnalogFrame(x.astype(np.complex128), steps)


def rx_analog(equalized, erased, smap: SubcarrierMap, m: int, steps) -> np.ndarray:
    """Average ``Re(x) / step`` over each neuron's surviving slots, then detect.

    A neuron with all slots erased decodes as 0.
    """
    z = np.real(np.asarray(equalized)) / np.asarray(steps, dtype=np.float64)[:, None]
    keep = ~np.asarray(erased, dtype=bool)
    owner = smap.owner[keep]
    sums = np.bincount(owner, weights=z[keep], minlength=smap.M)
    counts = np.bincount(owner, minlength=smap.M)
    mean = np.divide(sums, counts, out=np.zeros(smap.M), where=counts > 0)
    return PamConstellation(m, 1.0).detect(mean)
