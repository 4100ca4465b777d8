"""Frequency-domain OFDM link: multipath Rayleigh channels, pilots and AWGN.

The cyclic prefix is assumed to cover the delay spread, so each subcarrier
sees a single complex gain (``y = H x + w``); nothing is simulated in the
time domain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "LinkConfig",
    "OfdmLayout",
    "OfdmFrame",
    "ChannelRealization",
    "pilot_layout",
    "pilot_symbols",
    "draw_channel",
    "transmit",
    "export_channel_csv",
]


@dataclass
class LinkConfig:
    """OFDM link parameters. ``snr_db`` is P^max / N0; ``-inf`` means no signal."""

    n_data: int = 512
    n_pilot: int = 75
    n_ofdm: int = 5
    snr_db: float = 25.0
    n_paths: int = 5
    p_max: float = 1.0
    pilot_spacing: int = 8
    coherence: str = "slot"  # "slot": one channel per sensing slot, "symbol": redraw per OFDM symbol

    def __post_init__(self):
        if self.n_data < 1 or self.n_pilot < 0 or self.n_ofdm < 1:
            raise ValueError("need n_data >= 1, n_pilot >= 0, n_ofdm >= 1")
        if self.n_paths < 1:
            raise ValueError("need at least one channel path")
        if self.p_max <= 0:
            raise ValueError("p_max must be > 0")
        if self.coherence not in ("slot", "symbol"):
            raise ValueError(f"coherence must be 'slot' or 'symbol', got {self.coherence!r}")

    @property
    def silent(self) -> bool:
        return self.snr_db == -math.inf

    @property
    def noise_var(self) -> float:
        """N0. With ``snr_db=-inf`` the transmitter is muted and N0 = P^max."""
        if self.silent:
            return self.p_max
        return self.p_max / 10 ** (self.snr_db / 10)

    @property
    def layout(self) -> "OfdmLayout":
        return OfdmLayout(self.n_data, self.n_pilot, self.pilot_spacing)


def pilot_layout(n_data: int, n_pilot: int, spacing: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Interleave one pilot before every ``spacing`` data subcarriers from index 0.

    Pilots left over once the data run out are appended at the band edge.
    Returns ``(pilot_indices, data_indices)`` over ``n_data + n_pilot`` subcarriers.
    """
    is_pilot = []
    pilots_left, data_left = n_pilot, n_data
    while data_left:
        if pilots_left:
            is_pilot.append(True)
            pilots_left -= 1
            take = min(spacing, data_left)
        else:
            take = data_left
        is_pilot.extend([False] * take)
        data_left -= take
    is_pilot.extend([True] * pilots_left)
    mask = np.array(is_pilot, dtype=bool)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def pilot_symbols(n_pilot: int, p_max: float, seed: int = 7) -> np.ndarray:
    """Known unit-modulus QPSK pilots scaled to power ``p_max``."""
    rng = np.random.default_rng(seed)
    phase = rng.integers(0, 4, n_pilot)
    return math.sqrt(p_max) * np.exp(1j * (np.pi / 4 + np.pi / 2 * phase))


@dataclass(frozen=True)
class OfdmLayout:
    n_data: int
    n_pilot: int
    spacing: int = 8

    @property
    def n_sub(self) -> int:
        return self.n_data + self.n_pilot

    @cached_property
    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        return pilot_layout(self.n_data, self.n_pilot, self.spacing)

    @property
    def pilot_idx(self) -> np.ndarray:
        return self.indices[0]

    @property
    def data_idx(self) -> np.ndarray:
        return self.indices[1]

    @property
    def pilot_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_sub, dtype=bool)
        mask[self.pilot_idx] = True
        return mask

    def frame(self, data: np.ndarray, pilots: np.ndarray) -> "OfdmFrame":
        """Assemble one OFDM symbol from data and pilot values."""
        x = np.zeros(self.n_sub, dtype=np.complex128)
        x[self.data_idx] = data
        x[self.pilot_idx] = pilots
        return OfdmFrame(x, self.pilot_mask)


@dataclass
class OfdmFrame:
    symbols: np.ndarray
    pilot_mask: np.ndarray

    def __post_init__(self):
        if self.symbols.shape != self.pilot_mask.shape:
            raise ValueError("symbols and pilot mask differ in length")

    @property
    def pilots(self) -> np.ndarray:
        return self.symbols[self.pilot_mask]

    @property
    def data(self) -> np.ndarray:
        return self.symbols[~self.pilot_mask]


@dataclass
class ChannelRealization:
    taps: np.ndarray
    freq_response: np.ndarray


def draw_channel(n_paths: int, n_sub: int, rng: np.random.Generator) -> ChannelRealization:
    """``n_paths`` i.i.d. CN(0, 1/n_paths) taps and their ``n_sub``-point DFT."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    scale = math.sqrt(0.5 / n_paths)
    taps = scale * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
    return ChannelRealization(taps, np.fft.fft(taps, n=n_sub))


def transmit(
    frame: OfdmFrame, ch: ChannelRealization, noise_var: float, rng: np.random.Generator
) -> OfdmFrame:
    """Per-subcarrier ``y = H x + w`` with ``w ~ CN(0, noise_var)``."""
    if frame.symbols.shape != ch.freq_response.shape:
        raise ValueError("frame length does not match channel response length")
    n = frame.symbols.shape
    w = math.sqrt(noise_var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return OfdmFrame(ch.freq_response * frame.symbols + w, frame.pilot_mask)


def export_channel_csv(ch: ChannelRealization, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tap", "re", "im"])
        for i, h in enumerate(ch.taps):
            w.writerow([i, repr(float(h.real)), repr(float(h.imag))])
