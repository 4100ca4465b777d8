"""Multi-level LIF (M-LIF) neurons and the split encoder/decoder network.

Spikes are integer arrays: 0 means silence, ``k >= 1`` a spike carrying
payload level ``k`` (at most ``2**m``).  Arrays may carry leading batch
dimensions; the last axis is always the neuron axis.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "MLifLayer",
    "LayerState",
    "NetworkState",
    "SplitNetwork",
    "quantize",
    "threshold",
    "mlif_step",
    "synaptic_current",
    "classify",
    "save_checkpoint",
    "load_checkpoint",
]


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def threshold(alpha: float, m: int) -> float:
    """Firing threshold tied to the quantizer scale: ``1 / (alpha * 2**m)``."""
    _check_alpha(alpha)
    return 1.0 / (alpha * 2**m)


def quantize(V, alpha: float, m: int):
    """Clipped uniform quantizer ``min(floor(alpha * V * 2**m), 2**m)``.

    Only meaningful above threshold, where the result is in ``{1, ..., 2**m}``.
    The lower clip at 1 absorbs floating-point rounding right at threshold.
    """
    _check_alpha(alpha)
    if m < 0:
        raise ValueError("payload width m must be >= 0")
    levels = 2**m
    q = np.floor(alpha * np.asarray(V, dtype=np.float64) * levels)
    q = np.clip(q, 1, levels).astype(np.int64)
    return int(q) if q.ndim == 0 else q


@dataclass
class LayerState:
    """Membrane potentials plus the previous slot's spike indicator."""

    V: np.ndarray
    spiked: np.ndarray


def mlif_step(
    state: LayerState, Z, delta: float, alpha: float, m: int, spiking: bool = True
) -> tuple[np.ndarray, LayerState]:
    """Advance one slot. Returns ``(spikes, new_state)``.

    The reset uses the indicator of the previous output, so a graded spike
    of any level zeroes the leak term exactly like a binary one.  With
    ``spiking=False`` the layer is a pure leaky integrator (decoder readout).
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[-1] != state.V.shape[-1]:
        raise ValueError(f"input width {Z.shape[-1]} != layer width {state.V.shape[-1]}")
    keep = np.where(state.spiked, 0.0, 1.0)
    V = delta * state.V * keep + Z
    if not spiking:
        out = np.zeros(V.shape, dtype=np.int64)
        return out, LayerState(V, np.zeros(V.shape, dtype=bool))
    fired = V > threshold(alpha, m)
    out = np.where(fired, quantize(V, alpha, m), 0).astype(np.int64)
    return out, LayerState(V, fired)


def synaptic_current(W: np.ndarray, S) -> np.ndarray:
    """Input current ``W @ S`` with spike payloads taken as integers."""
    S = np.asarray(S)
    if S.shape[-1] != W.shape[1]:
        raise ValueError(f"spike width {S.shape[-1]} != weight fan-in {W.shape[1]}")
    return S.astype(np.float64) @ W.astype(np.float64).T


def classify(potential_history) -> int:
    """Index of the output neuron with the largest time-summed potential.

    ``np.argmax`` returns the first maximum, which is the lowest-index
    tie-break.
    """
    hist = np.asarray(potential_history, dtype=np.float64)
    if hist.ndim != 2 or hist.shape[0] == 0:
        raise ValueError("potential history must be a non-empty (T, C) matrix")
    return int(np.argmax(hist.sum(axis=0)))


@dataclass
class MLifLayer:
    """Dense layer of M-LIF neurons. Weights are stored as float32 (post x pre)."""

    weights: np.ndarray
    delta: float = 0.5
    alpha: float = 0.5
    m: int = 0
    spiking: bool = True

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-D (post, pre) matrix")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        _check_alpha(self.alpha)
        if self.m < 0:
            raise ValueError("m must be >= 0")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def threshold(self) -> float:
        return threshold(self.alpha, self.m)

    def initial_state(self, batch: tuple[int, ...] = ()) -> LayerState:
        shape = (*batch, self.n_out)
        return LayerState(np.zeros(shape), np.zeros(shape, dtype=bool))


@dataclass
class NetworkState:
    layers: list[LayerState] = field(default_factory=list)
    # per-layer spike count accumulated for energy accounting
    spike_counts: np.ndarray | None = None


class SplitNetwork:
    """Layered M-LIF network cut into an encoder (layers[:split]) and a decoder.

    The last layer must be a non-spiking integrator; its potentials are the
    class scores read out by :func:`classify`.
    """

    def __init__(self, layers: Sequence[MLifLayer], split: int):
        layers = list(layers)
        if not 0 < split < len(layers):
            raise ValueError("split index must fall strictly between first and last layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")
        if layers[-1].spiking:
            raise ValueError("output layer must be a non-spiking integrator")
        if not all(layer.spiking for layer in layers[:-1]):
            raise ValueError("hidden layers must be spiking")
        self.layers = layers
        self.split = split

    @classmethod
    def random(
        cls,
        sizes: Sequence[int],
        split: int,
        m: int = 0,
        delta: float = 0.5,
        alpha: float = 0.5,
        rng: np.random.Generator | None = None,
    ) -> "SplitNetwork":
        """Glorot-uniform initialised network with layer widths ``sizes``."""
        rng = np.random.default_rng(rng)
        layers = []
        n = len(sizes) - 1
        for i, (pre, post) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = np.sqrt(6.0 / (pre + post))
            W = rng.uniform(-bound, bound, size=(post, pre))
            layers.append(MLifLayer(W, delta=delta, alpha=alpha, m=m, spiking=i < n - 1))
        return cls(layers, split)

    @property
    def encoder(self) -> list[MLifLayer]:
        return self.layers[: self.split]

    @property
    def decoder(self) -> list[MLifLayer]:
        return self.layers[self.split :]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_encoder_out(self) -> int:
        """Width M of the transmitted spike vector."""
        return self.encoder[-1].n_out

    @property
    def encoder_m(self) -> int:
        """Payload width of the transmitted spikes."""
        return self.encoder[-1].m

    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_out

    def initial_state(self, batch: tuple[int, ...] = ()) -> NetworkState:
        return NetworkState(
            [layer.initial_state(batch) for layer in self.layers],
            np.zeros(len(self.layers), dtype=np.int64),
        )

    def forward_slot(self, state: NetworkState | None, x, side: str) -> np.ndarray:
        """Run one sensing slot through one half of the network, in place.

        Returns the encoder's output spikes for ``side="encoder"`` and the
        output-layer potentials for ``side="decoder"``.
        """
        if state is None or not state.layers:
            raise RuntimeError("network state is not initialised; call initial_state()")
        if side == "encoder":
            idx = range(0, self.split)
        elif side == "decoder":
            idx = range(self.split, len(self.layers))
        else:
            raise ValueError(f"side must be 'encoder' or 'decoder', got {side!r}")
        S = np.asarray(x)
        for i in idx:
            layer = self.layers[i]
            if state.spike_counts is not None:
                state.spike_counts[i] += int(np.count_nonzero(S))
            Z = synaptic_current(layer.weights, S)
            S, state.layers[i] = mlif_step(
                state.layers[i], Z, layer.delta, layer.alpha, layer.m, layer.spiking
            )
        if side == "decoder":
            return state.layers[-1].V.copy()
        return S

    def run_centralized(self, X) -> np.ndarray:
        """Feed a (T, ..., D) input sequence straight through; returns (T, ..., C) potentials."""
        X = np.asarray(X)
        state = self.initial_state(X.shape[1:-1])
        out = []
        for x in X:
            S = self.forward_slot(state, x, "encoder")
            out.append(self.forward_slot(state, S, "decoder"))
        return np.stack(out)

    def predict(self, X) -> np.ndarray:
        """Class decisions for a batch shaped (T, B, D)."""
        return np.argmax(self.run_centralized(X).sum(axis=0), axis=-1)


# Checkpoint byte layout (little-endian):
#   header: magic b"MLIF", u16 version, u16 n_layers, u16 split, u16 reserved
#   per layer: u32 n_out, u32 n_in, f64 delta, f64 alpha, u16 m, u8 spiking, u8 pad
#              then n_out * n_in float32 weights, row-major
_MAGIC = b"MLIF"
_VERSION = 1
_HEADER = struct.Struct("<4sHHHH")
_LAYER = struct.Struct("<IIddHBx")


def save_checkpoint(net: SplitNetwork, path) -> None:
    parts = [_HEADER.pack(_MAGIC, _VERSION, len(net.layers), net.split, 0)]
    for layer in net.layers:
        parts.append(
            _LAYER.pack(
                layer.n_out, layer.n_in, layer.delta, layer.alpha, layer.m, int(layer.spiking)
            )
        )
        parts.append(layer.weights.astype("<f4").tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> SplitNetwork:
    buf = Path(path).read_bytes()
    magic, version, n_layers, split, _ = _HEADER.unpack_from(buf, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not an M-LIF checkpoint (magic={magic!r}, version={version})")
    off = _HEADER.size
    layers = []
    for _ in range(n_layers):
        n_out, n_in, delta, alpha, m, spiking = _LAYER.unpack_from(buf, off)
        off += _LAYER.size
        count = n_out * n_in
        W = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(n_out, n_in)
        off += 4 * count
        layers.append(MLifLayer(W.copy(), delta=delta, alpha=alpha, m=m, spiking=bool(spiking)))
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    return SplitNetwork(layers, split)
