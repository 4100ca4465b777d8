"""Pilot-aided receiver: LS channel estimation, linear interpolation, ZF."""

from __future__ import annotations

import csv

import numpy as np

__all__ = ["ZF_FLOOR", "ls_estimate", "interpolate", "zf_equalize", "estimate_data_channel", "export_estimate_csv"]

ZF_FLOOR = 1e-9


def ls_estimate(received_pilots, known_pilots) -> np.ndarray:
    """Least-squares gains on the pilot subcarriers, ``y_p / x_p``."""
    y = np.asarray(received_pilots, dtype=np.complex128)
    x = np.asarray(known_pilots, dtype=np.complex128)
    if y.shape != x.shape:
        raise ValueError("received and known pilots differ in length")
    if np.any(x == 0):
        raise ValueError("pilot symbols must be nonzero")
    return y / x


def interpolate(pilot_estimates, pilot_indices, data_indices) -> np.ndarray:
    """Linear interpolation of pilot gains onto data subcarriers.

    Outside the pilot span the nearest pilot's value is held, which is
    exactly what ``np.interp`` does at the ends.
    """
    h = np.asarray(pilot_estimates, dtype=np.complex128)
    xp = np.asarray(pilot_indices)
    if len(xp) < 2:
        raise ValueError("need at least two pilots to interpolate")
    if np.any(np.diff(xp) <= 0):
        raise ValueError("pilot indices must be strictly increasing")
    x = np.asarray(data_indices)
    return np.interp(x, xp, h.real) + 1j * np.interp(x, xp, h.imag)


def zf_equalize(received_data, estimate, floor: float = ZF_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Zero-forcing ``y / h``. Returns ``(symbols, erased)``.

    Subcarriers whose estimated gain is below ``floor`` in magnitude are
    flagged as erased and their symbol set to 0 instead of blowing up.
    """
    y = np.asarray(received_data, dtype=np.complex128)
    h = np.asarray(estimate, dtype=np.complex128)
    erased = np.abs(h) < floor
    safe = np.where(erased, 1.0, h)
    return np.where(erased, 0.0, y / safe), erased


def estimate_data_channel(frame, layout, known_pilots) -> np.ndarray:
    """LS on pilots then interpolation to every data subcarrier of ``layout``."""
    h_p = ls_estimate(frame.symbols[layout.pilot_idx], known_pilots)
    return interpolate(h_p, layout.pilot_idx, layout.data_idx)


def export_estimate_csv(path, data_indices, true_h, est_h) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subcarrier", "true_re", "true_im", "est_re", "est_im"])
        for i, a, b in zip(data_indices, true_h, est_h):
            w.writerow([int(i), a.real, a.imag, b.real, b.imag])
