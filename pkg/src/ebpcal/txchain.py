"""Transmit side: QAM symbols, pulse shaping, 2x2 MIMO channel and AWGN.

Lanes are ordered (H,I), (H,Q), (V,I), (V,Q) and indexed 0..3. All signals
are produced at two samples per symbol.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, log_ndtr

OVERSAMPLING = 2
MODULATIONS = (4, 16, 64, 256)
LANE_NAMES = ("H/I", "H/Q", "V/I", "V/Q")


def pam_order(modulation: int) -> int:
    if modulation not in MODULATIONS:
        raise ValueError(f"unsupported modulation {modulation}-QAM; use one of {MODULATIONS}")
    return int(round(np.sqrt(modulation)))


def pam_scale(modulation: int) -> float:
    """Divisor mapping odd-integer PAM levels to unit average QAM energy."""
    n = pam_order(modulation)
    return float(np.sqrt(2.0 * (n * n - 1) / 3.0))


def pam_levels(modulation: int) -> np.ndarray:
    n = pam_order(modulation)
    return (2.0 * np.arange(n) - (n - 1)) / pam_scale(modulation)


def gray_bits(indices, bits_per_component: int) -> np.ndarray:
    """Gray-coded bits (MSB first) of PAM level indices; adds a trailing axis."""
    idx = np.asarray(indices, dtype=np.int64)
    gray = idx ^ (idx >> 1)
    shifts = np.arange(bits_per_component - 1, -1, -1)
    return ((gray[..., None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class SymbolStream:
    """Dual-polarisation QAM symbols.

    ``indices`` holds the PAM level index per lane, shape (4, n); the complex
    symbols of polarisation p are built from lanes 2p and 2p+1.
    """

    indices: np.ndarray
    modulation: int
    seed: int | None = None

    @property
    def n_symbols(self) -> int:
        return self.indices.shape[1]

    @property
    def lane_values(self) -> np.ndarray:
        return pam_levels(self.modulation)[self.indices]

    @property
    def symbols(self) -> np.ndarray:
        v = self.lane_values
        return np.stack([v[0] + 1j * v[1], v[2] + 1j * v[3]])

    @property
    def bits(self) -> np.ndarray:
        """Gray bits per lane, shape (4, n, log2(pam_order))."""
        k = int(np.log2(pam_order(self.modulation)))
        return gray_bits(self.indices, k)


def generate_symbols(modulation: int, count: int, seed=None) -> SymbolStream:
    """Uniform i.i.d. Gray-mapped QAM symbols, reproducible for a fixed seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = pam_order(modulation)
    rng = np.random.default_rng(seed)
    return SymbolStream(rng.integers(0, n, size=(4, count)), modulation, seed)


def prbs_bits(order: int, n: int, seed: int = 1) -> np.ndarray:
    """Fibonacci LFSR pseudo-random binary sequence (PRBS7/9/15/23/31)."""
    taps = {7: 6, 9: 5, 15: 14, 23: 18, 31: 28}
    if order not in taps:
        raise ValueError(f"unsupported PRBS order {order}")
    state = seed & ((1 << order) - 1) or 1
    out = np.empty(n, dtype=np.uint8)
    t = taps[order]
    for i in range(n):
        bit = ((state >> (order - 1)) ^ (state >> (t - 1))) & 1
        out[i] = bit
        state = ((state << 1) | bit) & ((1 << order) - 1)
    return out


def raised_cosine(rolloff: float, span: int = 32, sps: int = OVERSAMPLING) -> np.ndarray:
    """Raised-cosine pulse sampled at ``sps``, unit value at the centre tap."""
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must be in [0, 1]")
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    h = np.sinc(t)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * t) ** 2
        sing = np.isclose(denom, 0.0)
        h = np.where(sing, np.pi / 4 * np.sinc(1.0 / (2 * rolloff)),
                     h * np.cos(np.pi * rolloff * t) / np.where(sing, 1.0, denom))
    return h


@dataclass(frozen=True)
class ChannelModel:
    """Static 2x2 complex MIMO channel, taps shape (2, 2, L) at rate 2/T.

    ``taps[m, n]`` carries polarisation n into received polarisation m.
    """

    taps: np.ndarray

    def __post_init__(self):
        h = np.array(self.taps, dtype=complex)
        if h.ndim != 3 or h.shape[:2] != (2, 2) or h.shape[2] < 1:
            raise ValueError("channel taps must have shape (2, 2, L)")
        energy = np.sum(np.abs(h) ** 2)
        if energy == 0:
            raise ValueError("at least one channel response must be nonzero")
        h = h * np.sqrt(2.0 / energy)
        h.setflags(write=False)
        object.__setattr__(self, "taps", h)

    @classmethod
    def identity(cls) -> ChannelModel:
        return cls(np.eye(2)[:, :, None])

    @classmethod
    def rotation(cls, theta: float, phase: float = 0.0) -> ChannelModel:
        c, s = np.cos(theta), np.sin(theta)
        u = np.array([[c, -s * np.exp(-1j * phase)], [s * np.exp(1j * phase), c]])
        return cls(u[:, :, None])

    @classmethod
    def from_file(cls, path) -> ChannelModel:
        """Load ``{"h11": [[re, im], ...], "h12": ..., "h21": ..., "h22": ...}``."""
        data = json.loads(Path(path).read_text())
        resp = [[np.array([complex(re, im) for re, im in data[f"h{m}{n}"]]) for n in (1, 2)] for m in (1, 2)]
        length = max(len(r) for row in resp for r in row)
        taps = np.zeros((2, 2, length), dtype=complex)
        for m in range(2):
            for n in range(2):
                taps[m, n, : len(resp[m][n])] = resp[m][n]
        return cls(taps)

    def to_file(self, path):
        data = {f"h{m + 1}{n + 1}": [[float(z.real), float(z.imag)] for z in self.taps[m, n]]
                for m in range(2) for n in range(2)}
        Path(path).write_text(json.dumps(data, indent=2))

    @property
    def delay(self) -> int:
        """Index of the strongest tap, used as the channel's bulk delay."""
        return int(np.argmax(np.sum(np.abs(self.taps) ** 2, axis=(0, 1))))


def shape(symbols: np.ndarray, pulse: np.ndarray, sps: int = OVERSAMPLING) -> np.ndarray:
    """Upsample and filter; output sample ``sps*k + len(pulse)//2`` is centred on symbol k."""
    symbols = np.atleast_2d(symbols)
    up = np.zeros((symbols.shape[0], symbols.shape[1] * sps), dtype=symbols.dtype)
    up[:, ::sps] = symbols
    return np.stack([np.convolve(row, pulse)[: up.shape[1]] for row in up])


def apply_channel(stream: SymbolStream, channel: ChannelModel, pulse: np.ndarray,
                  noise_var: float = 0.0, rng=None) -> np.ndarray:
    """Four received lanes (4, 2n) at rate 2/T.

    Noise is white Gaussian with variance ``noise_var`` per lane, added after
    shaping and channel mixing.
    """
    tx = shape(stream.symbols, pulse)
    h = channel.taps
    n = tx.shape[1]
    rx = np.zeros_like(tx)
    for m in range(2):
        for p in range(2):
            rx[m] += np.convolve(tx[p], h[m, p])[:n]
    lanes = np.stack([rx[0].real, rx[0].imag, rx[1].real, rx[1].imag])
    if noise_var > 0:
        rng = np.random.default_rng(rng)
        lanes = lanes + rng.normal(scale=np.sqrt(noise_var), size=lanes.shape)
    return lanes


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def qam_ber(modulation: int, snr) -> np.ndarray:
    """Nearest-neighbour Gray QAM bit error rate at symbol SNR ``Es/N0`` (linear)."""
    n = pam_order(modulation)
    k = np.log2(n)
    return (1.0 - 1.0 / n) / k * 2.0 * qfunc(np.sqrt(3.0 * np.asarray(snr, dtype=float) / (modulation - 1)))


def snr_for_target_ber(modulation: int, target_ber: float) -> float:
    """Linear ``Es/N0`` at which :func:`qam_ber` equals ``target_ber``."""
    ceiling = float(qam_ber(modulation, 0.0))
    if not 0.0 < target_ber < ceiling:
        raise ValueError(f"target BER {target_ber} unreachable for {modulation}-QAM (must be in (0, {ceiling:.3g}))")
    n = pam_order(modulation)
    log_coef = np.log(2.0 * (1.0 - 1.0 / n) / np.log2(n))
    # log Q(x) = log_ndtr(-x) stays finite where Q underflows
    f = lambda snr_db: (log_coef + log_ndtr(-np.sqrt(3.0 * 10 ** (snr_db / 10) / (modulation - 1)))
                        - np.log(target_ber))
    return 10 ** (brentq(f, -30.0, 80.0, xtol=1e-10) / 10)


def set_noise_for_target_ber(modulation: int, target_ber: float) -> float:
    """Per-lane noise variance (unit-energy symbols) for an ideal receiver to hit ``target_ber``.

    With Nyquist shaping at two samples per symbol, white noise of variance
    ``s`` per lane leaves ``Es/N0 = 1/s`` after an in-band receive filter.
    A target of 0 means noiseless.
    """
    if target_ber == 0:
        return 0.0
    return 1.0 / snr_for_target_ber(modulation, target_ber)


@dataclass(frozen=True)
class BlockSource:
    """Deterministic per-block lane generator.

    Block ``b`` covers absolute samples ``[b*N, (b+1)*N)``. Each block is
    synthesised independently from ``(seed, b)`` with enough lead-in and
    tail symbols that filter start-up never reaches the returned window, so
    any block can be produced without simulating the ones before it.
    """

    modulation: int
    channel: ChannelModel
    pulse: np.ndarray
    block_size: int
    history: int
    future: int
    noise_var: float = 0.0
    drive: float = 1.0
    seed: int = 0

    def block(self, b: int):
        """Return ``(lanes, symbols)``.

        ``lanes`` has shape (4, history + block_size + future) and its column
        ``history + t`` is absolute sample ``b*N + t``. ``symbols`` is the
        :class:`SymbolStream` whose symbol ``j`` is centred on absolute sample
        ``2*(j - lead) + b*N + pulse_delay + channel.delay``, see :meth:`symbol_offset`.
        """
        rng = np.random.default_rng([self.seed, b])
        lead = self.lead_symbols
        total = lead + (self.block_size + self.future) // 2 + 1
        stream = generate_symbols(self.modulation, total, rng)
        lanes = apply_channel(stream, self.channel, self.pulse, self.noise_var, rng)
        start = 2 * lead - self.history
        lanes = lanes[:, start: start + self.history + self.block_size + self.future]
        return self.drive * lanes, stream

    @property
    def pulse_delay(self) -> int:
        return len(self.pulse) // 2 + self.channel.delay

    @property
    def lead_symbols(self) -> int:
        need = self.history + len(self.pulse) + self.channel.taps.shape[2]
        return (need + 1) // 2 + 1

    def symbol_offset(self) -> int:
        """Sample index (block-relative, history-stripped) of symbol 0's centre."""
        return self.pulse_delay - 2 * self.lead_symbols
