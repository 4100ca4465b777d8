"""Transmit power constraints: per-block average, peak, and decaying schedules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PowerPolicy",
    "PowerConstraintViolation",
    "dynamic_schedule",
    "block_gain",
    "enforce",
    "check_power",
]

_MODES = {"block": "block", "per_block_average": "block", "peak": "peak"}


class PowerConstraintViolation(AssertionError):
    """A transmitted block broke its active power constraint."""


def _mode(mode: str) -> str:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown power mode {mode!r}; use 'block' or 'peak'") from None


@dataclass
class PowerPolicy:
    mode: str = "block"
    p_max: float = 1.0
    decay_b: float | None = None

    def __post_init__(self):
        self.mode = _mode(self.mode)
        if self.p_max <= 0:
            raise ValueError("p_max must be > 0")
        if self.decay_b is not None and self.decay_b < 1:
            raise ValueError("decay rate b must be >= 1")

    def slot_powers(self, T: int) -> np.ndarray:
        """Per-slot budgets P_1..P_T (uniform unless a decay is set)."""
        if self.decay_b is None:
            return np.full(T, self.p_max)
        return dynamic_schedule(self.p_max, T, self.decay_b)


def dynamic_schedule(p_max: float, T: int, b: float) -> np.ndarray:
    """``P_t = a * b**(T - t)`` for t = 1..T, scaled so the mean is exactly ``p_max``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if b < 1:
        raise ValueError("b must be >= 1")
    w = b ** np.arange(T - 1, -1, -1, dtype=np.float64)
    return p_max * T * w / w.sum()


def block_gain(symbols, mode: str, p_t: float) -> float:
    """Amplitude factor that makes ``symbols`` meet the constraint.

    ``block``: scale to average power exactly ``p_t`` over all entries
    (idle entries count in the average).  ``peak``: shrink only if the
    strongest entry exceeds ``p_t``.  An all-zero block gets gain 1.
    """
    x = np.asarray(symbols)
    power = np.abs(x) ** 2
    if not power.any():
        return 1.0
    if _mode(mode) == "block":
        return float(np.sqrt(p_t * x.size / power.sum()))
    peak = power.max()
    return float(np.sqrt(p_t / peak)) if peak > p_t else 1.0


def enforce(symbols, mode: str, p_t: float) -> np.ndarray:
    if p_t <= 0:
        raise ValueError("slot power must be > 0")
    return np.asarray(symbols) * block_gain(symbols, mode, p_t)


def check_power(symbols, mode: str, p_t: float, rtol: float = 1e-9) -> None:
    """Raise :class:`PowerConstraintViolation` if the block exceeds its budget."""
    power = np.abs(np.asarray(symbols)) ** 2
    if _mode(mode) == "block":
        value = power.mean() if power.size else 0.0
    else:
        value = power.max() if power.size else 0.0
    if value > p_t * (1 + rtol):
        raise PowerConstraintViolation(f"{mode} power {value:.6g} exceeds budget {p_t:.6g}")
