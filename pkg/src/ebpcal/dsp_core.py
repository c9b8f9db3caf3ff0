"""Shared numerical primitives.

FIR convolution, Lagrange fractional-delay design, discrete first-order
lowpass responses, windowed dBFS spectra and a midrise quantizer. Every
function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import windows

DB_FLOOR = -400.0
SUPPORTED_LAGRANGE_ORDERS = (1, 3, 5, 7)


@dataclass(frozen=True)
class RealFir:
    """Real FIR response. ``taps[0]`` multiplies the newest sample."""

    taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float).ravel()
        if taps.size == 0:
            raise ValueError("FIR needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("FIR taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return self.taps.size

    @property
    def transient(self) -> int:
        """Number of leading output samples that depend on pre-signal zeros."""
        return self.taps.size - 1

    def response(self, freqs, sample_rate=1.0):
        """Complex DTFT at ``freqs`` (same units as ``sample_rate``)."""
        w = 2 * np.pi * np.asarray(freqs, dtype=float) / sample_rate
        n = np.arange(self.taps.size)
        return np.exp(-1j * np.outer(w, n)) @ self.taps


@dataclass(frozen=True)
class Spectrum:
    bin_magnitudes_dbfs: np.ndarray
    bin_freqs: np.ndarray
    n_fft: int


def _as_fir(fir) -> RealFir:
    return fir if isinstance(fir, RealFir) else RealFir(fir)


def convolve(signal, fir) -> np.ndarray:
    """Causal linear convolution truncated to the input length.

    ``y[n] = sum_l h[l] x[n - l]`` with ``x[n] = 0`` for ``n < 0``; the first
    ``len(fir) - 1`` outputs are the start-up transient.
    """
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    h = _as_fir(fir).taps
    return np.convolve(x, h)[: x.size]


def design_fractional_delay(delay: float, order: int = 3) -> RealFir:
    """Lagrange interpolator delaying by ``order // 2 + delay`` samples.

    ``delay`` is measured from the filter's integer group-delay centre, so
    ``delay=0`` yields a unit impulse at tap ``order // 2``.
    """
    if order not in SUPPORTED_LAGRANGE_ORDERS:
        raise ValueError(f"unsupported Lagrange order {order}; use one of {SUPPORTED_LAGRANGE_ORDERS}")
    if not -1.0 < delay < 1.0:
        raise ValueError(f"fractional delay must lie in (-1, 1), got {delay}")
    d = order // 2 + delay
    n = np.arange(order + 1)
    taps = np.ones(order + 1)
    for k in range(order + 1):
        mask = n != k
        taps[mask] *= (d - k) / (n[mask] - k)
    return RealFir(taps)


def lowpass_pole(bandwidth_3db: float, sample_rate: float) -> float:
    """Pole of the one-pole section whose -3 dB point sits at ``bandwidth_3db``."""
    c = np.cos(2 * np.pi * bandwidth_3db / sample_rate)
    b = 2.0 - c
    return float(b - np.sqrt(b * b - 1.0))


def sample_first_order_lowpass(bandwidth_3db: float, sample_rate: float, n_taps: int = 16) -> RealFir:
    """Exponentially decaying impulse response of a first-order lowpass.

    Taps follow ``(1 - a) a**n``, the sampled ``exp(-2 pi B t) u(t)`` shape.
    The decay ``a`` is matched to the discrete -3 dB frequency instead of
    ``exp(-2 pi B Ts)``: near Nyquist plain impulse invariance aliases and
    would land the -3 dB point far above ``B``. For ``B << fs`` the two agree.
    Truncated to ``n_taps`` and renormalised to unit DC gain.
    """
    if not 0.0 < bandwidth_3db < sample_rate / 2:
        raise ValueError(f"bandwidth {bandwidth_3db} outside (0, {sample_rate / 2})")
    if n_taps < 1:
        raise ValueError("n_taps must be >= 1")
    a = lowpass_pole(bandwidth_3db, sample_rate)
    taps = (1.0 - a) * a ** np.arange(n_taps)
    return RealFir(taps / taps.sum())


def spectrum_dbfs(signal, n_fft: int, full_scale: float, sample_rate: float = 1.0) -> Spectrum:
    """Blackman-Harris windowed single-sided magnitude spectrum in dBFS.

    Uses the last ``n_fft`` samples. A bin-centred sine of amplitude
    ``full_scale`` reads 0 dBFS at its bin.
    """
    x = np.asarray(signal, dtype=float)
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ValueError("n_fft must be a power of two")
    if x.size < n_fft:
        raise ValueError(f"need {n_fft} samples, got {x.size}")
    if full_scale <= 0:
        raise ValueError("full_scale must be positive")
    win = windows.blackmanharris(n_fft, sym=False)
    spec = np.abs(np.fft.rfft(x[-n_fft:] * win)) / win.sum()
    spec[1:] *= 2.0
    if n_fft % 2 == 0:
        spec[-1] /= 2.0
    with np.errstate(divide="ignore"):
        mags = 20 * np.log10(spec / full_scale)
    mags = np.maximum(mags, DB_FLOOR)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    return Spectrum(mags, freqs, n_fft)


def quantize_uniform(signal, n_bits: int, full_scale: float) -> np.ndarray:
    """Midrise uniform quantizer with saturation at ``+-full_scale``."""
    if not 2 <= n_bits <= 16:
        raise ValueError("n_bits must be in [2, 16]")
    lsb = 2.0 * full_scale / 2**n_bits
    half = 2 ** (n_bits - 1)
    codes = np.clip(np.floor(np.asarray(signal, dtype=float) / lsb), -half, half - 1)
    return (codes + 0.5) * lsb
