"""Multi-level spiking networks split between a sensor and a receiver over a
simulated OFDM link, with digital (AER + LDPC + QPSK) and analog (PAM)
transport."""

__version__ = "0.1.0"
