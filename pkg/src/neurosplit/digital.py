"""Digital transport of graded spikes: AER packets, LDPC-coded Gray QPSK.

Bitstream of one sensing slot, MSB first::

    [packet count: 16 bits][address: ceil(log2 M) bits | payload - 1: m bits]...[zero padding]

The stream fills ``N^OFDM`` LDPC information blocks of ``k`` bits; each
codeword occupies the data subcarriers of one OFDM symbol.

QPSK Gray map (bit pair ``b0 b1`` -> symbol), ``A = sqrt(P/2)``::

    00 -> +A + jA    01 -> +A - jA    10 -> -A + jA    11 -> -A - jA
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ldpc import LdpcCode

__all__ = [
    "HEADER_BITS",
    "BITS_PER_SYMBOL",
    "AerPacket",
    "BitBudget",
    "DigitalRx",
    "address_bits",
    "packet_width",
    "packetize",
    "select_packets",
    "expected_drop_rate",
    "serialize",
    "parse",
    "qpsk_map",
    "qpsk_soft_demap",
    "qpsk_hard_demap",
    "DigitalModem",
]

HEADER_BITS = 16
BITS_PER_SYMBOL = 2


def address_bits(M: int) -> int:
    if M < 1:
        raise ValueError("M must be >= 1")
    return max(0, math.ceil(math.log2(M)))


def packet_width(M: int, m: int) -> int:
    return address_bits(M) + m


@dataclass(frozen=True)
class AerPacket:
    address: int
    payload: int


def packetize(S, m: int) -> tuple[list[AerPacket], int]:
    """One packet per nonzero entry of ``S``. Returns ``(packets, B_tot)``."""
    S = np.asarray(S)
    if S.ndim != 1:
        raise ValueError("spike vector must be 1-D")
    idx = np.flatnonzero(S)
    if len(idx) and (S[idx].min() < 1 or S[idx].max() > 2**m):
        raise ValueError(f"payloads must lie in 1..{2 ** m}")
    packets = [AerPacket(int(i), int(S[i])) for i in idx]
    return packets, packet_width(len(S), m) * len(packets)


@dataclass(frozen=True)
class BitBudget:
    """Information bits available in one slot, ``B^OFDM = N^OFDM * N^D * B * r``."""

    total_bits: int
    packet_width: int
    header_bits: int = HEADER_BITS

    @classmethod
    def for_link(cls, n_ofdm: int, n_data: int, M: int, m: int, rate: float = 0.5) -> "BitBudget":
        total = n_ofdm * n_data * BITS_PER_SYMBOL * rate
        if total != int(total):
            raise ValueError("capacity is not an integer number of bits")
        return cls(int(total), packet_width(M, m))

    @property
    def packet_bits(self) -> int:
        return max(0, self.total_bits - self.header_bits)

    @property
    def max_packets(self) -> int:
        # a header-less budget has no count field to overflow
        limit = 2**self.header_bits - 1 if self.header_bits else math.inf
        if self.packet_width == 0:
            return limit
        return min(self.packet_bits // self.packet_width, limit)


def select_packets(packets, budget: BitBudget, rng: np.random.Generator, priority: str = "uniform"):
    """Keep as many packets as fit, chosen uniformly at random.

    ``priority="magnitude"`` keeps the largest payloads instead (ties at
    random); it is an extension, not the default.  Survivors keep their
    original address order.  Returns ``(survivors, n_dropped)``.
    """
    n, cap = len(packets), budget.max_packets
    if n <= cap:
        return list(packets), 0
    if priority == "uniform":
        keep = rng.choice(n, size=cap, replace=False)
    elif priority == "magnitude":
        payload = np.array([p.payload for p in packets])
        keep = np.lexsort((rng.random(n), -payload))[:cap]
    else:
        raise ValueError(f"unknown drop priority {priority!r}")
    return [packets[i] for i in np.sort(keep)], n - cap


def expected_drop_rate(n_packets: int, budget: BitBudget) -> float:
    if n_packets == 0:
        return 0.0
    return max(0.0, 1.0 - budget.max_packets / n_packets)


def _to_bits(values, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def _from_bits(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width).astype(np.int64) @ weights


def serialize(packets, M: int, m: int, n_bits: int) -> np.ndarray:
    """Header + packets + zero padding to exactly ``n_bits``."""
    a = address_bits(M)
    width = a + m
    used = HEADER_BITS + width * len(packets)
    if len(packets) >= 2**HEADER_BITS or used > n_bits:
        raise ValueError(f"{len(packets)} packets need {used} bits, only {n_bits} available")
    out = np.zeros(n_bits, dtype=np.uint8)
    out[:HEADER_BITS] = _to_bits([len(packets)], HEADER_BITS)
    if packets:
        addr = np.array([p.address for p in packets])
        pay = np.array([p.payload for p in packets]) - 1
        n = len(packets)
        fields = np.concatenate([_to_bits(addr, a).reshape(n, a), _to_bits(pay, m).reshape(n, m)], axis=1)
        out[HEADER_BITS:used] = fields.ravel()
    return out


def parse(bits, M: int, m: int) -> np.ndarray | None:
    """Rebuild the width-``M`` spike vector; ``None`` if the frame is malformed.

    Malformed means the header claims more packets than fit.  Addresses
    outside ``[0, M)`` are skipped; for repeated addresses the first wins.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    a = address_bits(M)
    width = a + m
    count = int(_from_bits(bits[:HEADER_BITS], HEADER_BITS)[0])
    if HEADER_BITS + count * width > len(bits):
        return None
    S = np.zeros(M, dtype=np.int64)
    if count == 0:
        return S
    body = bits[HEADER_BITS:HEADER_BITS + count * width].reshape(count, width)
    addr = _from_bits(body[:, :a].ravel(), a) if a else np.zeros(count, dtype=np.int64)
    pay = (_from_bits(body[:, a:].ravel(), m) if m else np.zeros(count, dtype=np.int64)) + 1
    valid = addr < M
    addr, pay = addr[valid], pay[valid]
    uniq, first = np.unique(addr, return_index=True)
    S[uniq] = pay[first]
    return S


def qpsk_map(bits, power: float) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    A = math.sqrt(power / 2)
    pairs = bits.reshape(-1, 2).astype(np.float64)
    return A * ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1]))


def qpsk_soft_demap(symbols, noise_var, power: float) -> np.ndarray:
    """Per-bit LLRs log P(0)/P(1) for equalized symbols.

    ``noise_var`` is the complex noise variance after equalization (scalar
    or per symbol); infinite variance yields LLR 0.
    """
    z = np.asarray(symbols, dtype=np.complex128)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), z.shape)
    scale = np.where(np.isfinite(nv), 4 * math.sqrt(power / 2) / nv, 0.0)
    return np.stack([scale * z.real, scale * z.imag], axis=-1).reshape(-1)


def qpsk_hard_demap(symbols) -> np.ndarray:
    z = np.asarray(symbols, dtype=np.complex128)
    return np.stack([z.real < 0, z.imag < 0], axis=-1).reshape(-1).astype(np.uint8)


@dataclass
class DigitalRx:
    """Receiver output of one slot."""

    spikes: np.ndarray
    erased: bool
    converged: int
    uncoded_errors: int
    coded_errors: int
    n_bits: int


class DigitalModem:
    """LDPC + QPSK transport of one spike vector per slot over ``n_ofdm`` symbols."""

    def __init__(self, M: int, m: int, n_ofdm: int, n_data: int, seed: int = 0, drop_priority: str = "uniform"):
        self.M, self.m, self.n_ofdm, self.n_data = M, m, n_ofdm, n_data
        self.code = LdpcCode.regular(n_data * BITS_PER_SYMBOL, 3, 6, seed)
        self.budget = BitBudget(n_ofdm * self.code.k, packet_width(M, m))
        self.drop_priority = drop_priority

    @property
    def capacity_bits(self) -> int:
        return self.budget.total_bits

    def transmit(self, S, power: float, rng: np.random.Generator):
        """Symbols ``(n_ofdm, n_data)``, the sent info bits, and the drop count."""
        packets, _ = packetize(S, self.m)
        kept, dropped = select_packets(packets, self.budget, rng, self.drop_priority)
        info = serialize(kept, self.M, self.m, self.budget.total_bits).reshape(self.n_ofdm, self.code.k)
        codewords = self.code.encode(info)
        symbols = qpsk_map(codewords.ravel(), power).reshape(self.n_ofdm, self.n_data)
        return symbols, info, len(packets), dropped

    def receive(self, equalized, noise_var, power: float, sent_info=None, max_iter: int = 50) -> DigitalRx:
        """Demap, decode every block and parse; any failed block erases the slot."""
        blocks, n_conv, unc_err, cod_err = [], 0, 0, 0
        for n in range(self.n_ofdm):
            llr = qpsk_soft_demap(equalized[n], noise_var[n], power)
            bits, ok = self.code.decode(llr, max_iter)
            n_conv += bool(ok)
            blocks.append(bits)
            if sent_info is not None:
                hard = (llr < 0).astype(np.uint8)[self.code.info_cols]
                unc_err += int(np.count_nonzero(hard != sent_info[n]))
                cod_err += int(np.count_nonzero(bits != sent_info[n]))
        S = None
        if n_conv == self.n_ofdm:
            S = parse(np.concatenate(blocks), self.M, self.m)
        erased = S is None
        if erased:
            S = np.zeros(self.M, dtype=np.int64)
        return DigitalRx(S, erased, n_conv, unc_err, cod_err, self.budget.total_bits)
