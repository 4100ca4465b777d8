"""Surrogate-gradient BPTT for :class:`~neurosplit.snn.SplitNetwork`.

The numpy functions here (:func:`surrogate_derivative`, :func:`soft_quantize`)
are the reference definitions; the torch autograd functions mirror them for
training.  Training runs in float64 so the learned network behaves the same
under the numpy inference engine.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import EventDataset
from .snn import MLifLayer, SplitNetwork, mlif_step, threshold

log = logging.getLogger(__name__)

__all__ = [
    "SurrogateConfig",
    "SoftQuantizerConfig",
    "AnalogTrainingChannel",
    "DropTrainingChannel",
    "TrainingDiverged",
    "surrogate_derivative",
    "surrogate_primitive",
    "soft_quantize",
    "train_split_network",
    "calibrate_weights",
    "write_history_csv",
]


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class SurrogateConfig:
    gamma: float = 1.0
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    optimizer: str = "adam"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("surrogate height gamma must be > 0")


@dataclass
class SoftQuantizerConfig:
    tau: float = 0.1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature tau must be > 0")


def surrogate_derivative(V, alpha: float, m: int, gamma: float):
    """Piecewise stand-in for dS/dV of the M-LIF output.

    Branches are taken in order: rising triangle below the threshold
    ``1/(alpha 2^m)``, constant 1 up to the saturation point ``1/alpha``,
    falling triangle beyond it.
    """
    V = np.asarray(V, dtype=np.float64)
    levels = 2**m
    u = alpha * V * levels
    lo = 1.0 / (alpha * levels)
    hi = 1.0 / alpha
    rise = gamma * np.maximum(0.0, 1.0 - np.abs(u - 1.0))
    fall = gamma * np.maximum(0.0, 1.0 - np.abs(u - levels))
    out = np.where(V < lo, rise, np.where(V <= hi, 1.0, fall))
    return float(out) if out.ndim == 0 else out


def surrogate_primitive(V, alpha: float, m: int, gamma: float):
    """Antiderivative of :func:`surrogate_derivative`, zero for V <= 0.

    This is the smooth "forward surrogate" whose slope the backward pass uses.
    """
    V = np.asarray(V, dtype=np.float64)
    levels = 2**m
    scale = alpha * levels
    u = V * scale
    lo = 1.0 / scale
    hi = 1.0 / alpha
    ramp = gamma * np.clip(u, 0.0, 1.0) ** 2 / (2 * scale)
    at_lo = gamma / (2 * scale)
    flat = at_lo + (np.clip(V, lo, hi) - lo)
    w = np.clip(u - levels, 0.0, 1.0)
    tail = gamma * (w - w**2 / 2) / scale
    out = np.where(V < lo, ramp, np.where(V <= hi, flat, flat + tail))
    return float(out) if out.ndim == 0 else out


def soft_quantize(V, alpha: float, m: int, tau: float, levels=None):
    """Temperature-softmax relaxation of the quantizer.

    Returns ``sum_k k * softmax_k(-(alpha V 2^m - k)^2 / tau)`` over
    ``k in {1, ..., 2^m}`` (or the supplied ``levels``).
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    k = np.arange(1, 2**m + 1, dtype=np.float64) if levels is None else np.asarray(levels, float)
    u = alpha * np.asarray(V, dtype=np.float64) * 2**m
    logits = -((u[..., None] - k) ** 2) / tau
    logits -= logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=-1, keepdims=True)
    out = (p * k).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


# -- torch side --------------------------------------------------------------


def _surrogate_torch(V: torch.Tensor, alpha: float, m: int, gamma: float) -> torch.Tensor:
    levels = 2**m
    u = alpha * V * levels
    rise = gamma * torch.clamp(1.0 - torch.abs(u - 1.0), min=0.0)
    fall = gamma * torch.clamp(1.0 - torch.abs(u - levels), min=0.0)
    ones = torch.ones_like(V)
    return torch.where(
        V < 1.0 / (alpha * levels), rise, torch.where(V <= 1.0 / alpha, ones, fall)
    )


class _MLifSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, V, alpha, m, gamma):
        ctx.save_for_backward(V)
        ctx.params = (alpha, m, gamma)
        levels = 2**m
        q = torch.clamp(torch.floor(alpha * V * levels), 1, levels)
        return torch.where(V > threshold(alpha, m), q, torch.zeros_like(V))

    @staticmethod
    def backward(ctx, grad):
        (V,) = ctx.saved_tensors
        return grad * _surrogate_torch(V, *ctx.params), None, None, None


class _SoftDetect(torch.autograd.Function):
    """Hard nearest-level decision forward, softmax relaxation backward."""

    @staticmethod
    def forward(ctx, u, n_levels, tau):
        ctx.save_for_backward(u)
        ctx.params = (n_levels, tau)
        return torch.clamp(torch.round(u), 0, n_levels)

    @staticmethod
    def backward(ctx, grad):
        (u,) = ctx.saved_tensors
        n_levels, tau = ctx.params
        with torch.enable_grad():
            x = u.detach().requires_grad_(True)
            k = torch.arange(0, n_levels + 1, dtype=u.dtype)
            p = torch.softmax(-((x[..., None] - k) ** 2) / tau, dim=-1)
            soft = (p * k).sum(-1)
            (g,) = torch.autograd.grad(soft, x, grad)
        return g, None, None


@dataclass
class AnalogTrainingChannel:
    """Differentiable stand-in for the analog PAM link used in fine-tuning.

    Models the post-equalization, post-averaging received level of each
    neuron as ``S + noise`` in units of the PAM step, with per-neuron
    Rayleigh power gain ``|h|^2 ~ Exp(1)`` and peak-power level spacing.
    """

    snr_db: float
    repetitions: int = 1
    soft: SoftQuantizerConfig = field(default_factory=SoftQuantizerConfig)

    def __call__(self, S: torch.Tensor, m: int, gen: torch.Generator) -> torch.Tensor:
        n_levels = 2**m
        snr = 10 ** (self.snr_db / 10)
        gain = -torch.log(torch.rand(S.shape, generator=gen, dtype=S.dtype))
        # peak mode: top level sits at sqrt(P), step = sqrt(P) / 2^m
        var = n_levels**2 / (2 * snr * gain * self.repetitions)
        u = S + torch.sqrt(var) * torch.randn(S.shape, generator=gen, dtype=S.dtype)
        return _SoftDetect.apply(u, n_levels, self.soft.tau)


@dataclass
class DropTrainingChannel:
    """Capacity-limited digital link model: per sample, at most ``max_packets``
    spikes survive, chosen uniformly at random.  Survivors pass unchanged."""

    max_packets: int

    def __post_init__(self):
        if self.max_packets < 0:
            raise ValueError("max_packets must be >= 0")

    def __call__(self, S: torch.Tensor, m: int, gen: torch.Generator) -> torch.Tensor:
        active = S > 0
        if self.max_packets >= S.shape[-1]:
            return S
        if self.max_packets == 0:
            return S * 0
        # random scores for active entries; inactive ones can never be kept
        score = torch.where(active, torch.rand(S.shape, generator=gen, dtype=S.dtype), -1.0)
        kth = torch.topk(score, self.max_packets, dim=-1).values[..., -1:]
        keep = active & (score >= kth)
        return S * keep.to(S.dtype)


class _TorchNet(torch.nn.Module):
    # Weights are trained as W' = W * 2**m_pre, with m_pre the payload width of
    # the layer's input, so every layer sees inputs in [0, 1].  Power-of-two
    # scaling is exact, so the exported W computes the same currents.
    def __init__(self, net: SplitNetwork, m_in: int):
        super().__init__()
        self.spec = [(l.delta, l.alpha, l.m, l.spiking) for l in net.layers]
        self.split = net.split
        self.in_scale = [2.0**m_in] + [2.0 ** l.m for l in net.layers[:-1]]
        self.weights = torch.nn.ParameterList(
            torch.nn.Parameter(torch.tensor(l.weights, dtype=torch.float64) * s)
            for l, s in zip(net.layers, self.in_scale)
        )

    def forward(self, X, gamma, channel=None, gen=None):
        """X: (T, B, D) -> integrated output potentials (B, C)."""
        T, B, _ = X.shape
        V = [torch.zeros(B, w.shape[0], dtype=X.dtype) for w in self.weights]
        fired = [torch.zeros(B, w.shape[0], dtype=X.dtype) for w in self.weights]
        total = 0.0
        for t in range(T):
            S = X[t]
            for i, (W, (delta, alpha, m, spiking)) in enumerate(zip(self.weights, self.spec)):
                if i == self.split and channel is not None:
                    S = channel(S, self.spec[i - 1][2], gen)
                Z = (S / self.in_scale[i]) @ W.T
                # reset indicator is a stop-gradient
                V[i] = delta * V[i] * (1.0 - fired[i]) + Z
                if spiking:
                    S = _MLifSpike.apply(V[i], alpha, m, gamma)
                    fired[i] = (S > 0).to(X.dtype).detach()
            total = total + V[-1]
        return total

    def to_network(self, template: SplitNetwork) -> SplitNetwork:
        layers = [
            MLifLayer(w.detach().numpy() / s, l.delta, l.alpha, l.m, l.spiking)
            for w, l, s in zip(self.weights, template.layers, self.in_scale)
        ]
        return SplitNetwork(layers, template.split)


def train_split_network(
    net: SplitNetwork,
    dataset: EventDataset,
    config: SurrogateConfig | None = None,
    channel: AnalogTrainingChannel | DropTrainingChannel | None = None,
    seed: int = 0,
) -> tuple[SplitNetwork, list[dict]]:
    """Train the whole split network end to end by surrogate-gradient BPTT.

    Loss is cross-entropy over the time-integrated output potentials.  The
    history has one row per epoch, row 0 being the untrained network.
    With ``channel`` set, encoder spikes pass through the analog link model
    and the receiver's level decision is relaxed by a temperature softmax in
    the backward pass.
    """
    config = config or SurrogateConfig()
    gen = torch.Generator().manual_seed(seed)
    model = _TorchNet(net, dataset.m_in)
    if config.optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=config.lr)
    elif config.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=config.lr, eps=1e-30)
    else:
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    X = torch.tensor(dataset.X, dtype=torch.float64).transpose(0, 1)  # (T, N, D)
    y = torch.tensor(dataset.y)
    n = len(y)
    history = []

    def evaluate(epoch):
        with torch.no_grad():
            out = model(X, config.gamma, channel, gen)
            loss = torch.nn.functional.cross_entropy(out, y).item()
            acc = (out.argmax(1) == y).double().mean().item()
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        history.append({"epoch": epoch, "loss": loss, "train_accuracy": acc})
        log.debug("epoch %d loss %.4f acc %.3f", epoch, loss, acc)

    evaluate(0)
    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            out = model(X[:, idx], config.gamma, channel, gen)
            loss = torch.nn.functional.cross_entropy(out, y[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        evaluate(epoch)
    return model.to_network(net), history


def calibrate_weights(net: SplitNetwork, X, target: float = 0.5) -> SplitNetwork:
    """Rescale each layer so its input current has std ``target / alpha``.

    ``X`` is a (T, B, D) sample.  Layers are calibrated in order, each one
    seeing the spikes of the already-calibrated layers below it.  The output
    integrator is scaled so the time-summed potentials have unit std.
    """
    X = np.asarray(X, dtype=np.float64)
    layers = [MLifLayer(l.weights, l.delta, l.alpha, l.m, l.spiking) for l in net.layers]
    inputs = X
    for layer in layers:
        Z = inputs @ layer.weights.astype(np.float64).T
        if layer.spiking:
            std = Z.std()
            if std > 0:
                layer.weights = (layer.weights * (target / layer.alpha / std)).astype(np.float32)
            Z = inputs @ layer.weights.astype(np.float64).T
            state = layer.initial_state(Z.shape[1:-1])
            outs = []
            for z in Z:
                s, state = mlif_step(state, z, layer.delta, layer.alpha, layer.m)
                outs.append(s)
            inputs = np.stack(outs).astype(np.float64)
        else:
            V = np.zeros(Z.shape[1:])
            total = np.zeros(Z.shape[1:])
            for z in Z:
                V = layer.delta * V + z
                total += V
            std = total.std()
            if std > 0:
                layer.weights = (layer.weights / std).astype(np.float32)
    return SplitNetwork(layers, net.split)


def write_history_csv(history: list[dict], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "loss", "train_accuracy"])
        w.writeheader()
        w.writerows(history)
