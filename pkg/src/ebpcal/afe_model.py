"""AFE and TI-ADC impairment model.

Each lane passes through an analog path ``c`` (nominal lowpass plus half
the polarisation's I/Q skew), an interleave-dependent track-and-hold
``f_m`` (lowpass at ``B0 + dB_m``) and an interpolation filter ``p_m``
(fractional delay ``delta_m`` scaled by ``gamma_m``). The composite
``h_m = c * f_m * p_m`` is applied M-periodically, followed by the
interleave offset and the quantizer.

Conventions: sampling-phase errors and skews are fractions of the symbol
period T (one T is two samples); a positive phase error delays interleave
m. In hierarchical mode (``m1 * m2 = M``) sample n is taken by rank-1
switch ``n % m1`` and converted by sub-ADC ``n % M``; phase errors and
bandwidth offsets belong to the switches, gain and offset to sub-ADCs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp_core import (RealFir, design_fractional_delay, quantize_uniform,
                       sample_first_order_lowpass)

N_LANES = 4
COMPOSITE_TAPS = 33
LOWPASS_TAPS = 14
LAGRANGE_ORDER = 3


@dataclass(frozen=True)
class ImpairmentSet:
    """Per-lane, per-interleave error parameters.

    Shapes: ``gain_error``/``offset`` (4, M); ``phase_error``/``bw_offset``
    (4, m1); ``iq_skew`` (2,) for H and V. Phase errors and skews are in
    units of T, bandwidth offsets in Hz, offsets in units of full scale.
    """

    m: int
    gain_error: np.ndarray
    phase_error: np.ndarray
    bw_offset: np.ndarray
    offset: np.ndarray
    iq_skew: np.ndarray = field(default_factory=lambda: np.zeros(2))
    m1: int | None = None

    def __post_init__(self):
        m1 = self.m if self.m1 is None else self.m1
        if self.m < 1 or m1 < 1 or self.m % m1:
            raise ValueError(f"invalid interleave structure M={self.m}, M1={m1}")
        object.__setattr__(self, "m1", m1)
        shapes = {"gain_error": (N_LANES, self.m), "offset": (N_LANES, self.m),
                  "phase_error": (N_LANES, m1), "bw_offset": (N_LANES, m1), "iq_skew": (2,)}
        for name, shp in shapes.items():
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shp).copy()
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(1.0 + self.gain_error <= 0):
            raise ValueError("gain 1 + gain_error must be positive")
        if np.any(np.abs(self.phase_error) >= 0.5):
            raise ValueError("sampling phase errors must satisfy |delta| < 0.5 T")

    @property
    def m2(self) -> int:
        return self.m // self.m1

    @classmethod
    def zeros(cls, m: int, m1: int | None = None) -> ImpairmentSet:
        m1 = m if m1 is None else m1
        z = np.zeros((N_LANES, m))
        z1 = np.zeros((N_LANES, m1))
        return cls(m, z, z1, z1, z, np.zeros(2), m1)

    def per_interleave(self, name: str) -> np.ndarray:
        """Expand a switch-level parameter to shape (4, M)."""
        arr = getattr(self, name)
        return arr[:, np.arange(self.m) % self.m1] if arr.shape[1] != self.m else arr

    def to_dict(self) -> dict:
        return {"m": self.m, "m1": self.m1,
                **{k: getattr(self, k).tolist() for k in
                   ("gain_error", "phase_error", "bw_offset", "offset", "iq_skew")}}

    @classmethod
    def from_dict(cls, d: dict) -> ImpairmentSet:
        return cls(int(d["m"]), np.array(d["gain_error"]), np.array(d["phase_error"]),
                   np.array(d["bw_offset"]), np.array(d["offset"]), np.array(d["iq_skew"]),
                   int(d.get("m1") or d["m"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> ImpairmentSet:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ImpairmentRanges:
    """Half-widths of the uniform draws ; 0 disables a parameter."""

    gain_error: float = 0.0
    phase_error: float = 0.0
    bw_offset: float = 0.0
    offset: float = 0.0
    iq_skew: float = 0.0


def sample_impairments(ranges: ImpairmentRanges, m: int, seed=None, m1: int | None = None) -> ImpairmentSet:
    """Independent uniform draws in ``[-r, r]`` for every parameter."""
    for name, r in vars(ranges).items():
        if r < 0:
            raise ValueError(f"range {name} must be non-negative")
    m1 = m if m1 is None else m1
    rng = np.random.default_rng(seed)
    u = lambda r, shape: rng.uniform(-r, r, size=shape) if r > 0 else np.zeros(shape)
    return ImpairmentSet(
        m,
        gain_error=u(ranges.gain_error, (N_LANES, m)),
        phase_error=u(ranges.phase_error, (N_LANES, m1)),
        bw_offset=u(ranges.bw_offset, (N_LANES, m1)),
        offset=u(ranges.offset, (N_LANES, m)),
        iq_skew=u(ranges.iq_skew, (2,)),
        m1=m1,
    )


@dataclass(frozen=True)
class TiAdcModel:
    """M-periodic discrete model of one lane.

    ``responses[m]`` is the composite response used at samples ``n % M == m``.
    """

    responses: np.ndarray
    offsets: np.ndarray
    n_bits: int | None = 8
    full_scale: float = 1.0
    jitter_rms: float = 0.0

    @property
    def m(self) -> int:
        return self.responses.shape[0]

    def fir(self, m: int) -> RealFir:
        return RealFir(self.responses[m])


def _compose(*firs: np.ndarray, length: int) -> np.ndarray:
    h = np.array([1.0])
    for f in firs:
        h = np.convolve(h, f)
    if h.size > length and np.max(np.abs(h[length:])) > 1e-6 * np.max(np.abs(h)):
        raise ValueError("composite response exceeds filter support")
    out = np.zeros(length)
    out[: min(length, h.size)] = h[:length]
    return out


def build_tiadc_model(imp: ImpairmentSet, lane: int, nominal_bw: float, sample_rate: float,
                      n_bits: int | None = 8, full_scale: float = 1.0,
                      jitter_rms: float = 0.0) -> TiAdcModel:
    """Discrete per-interleave responses for ``lane`` (0..3).

    ``jitter_rms`` is in units of T and models white sampling-clock noise.
    """
    if not 0 <= lane < N_LANES:
        raise ValueError("lane must be in 0..3")
    skew = imp.iq_skew[lane // 2] / 2.0 * (1.0 if lane % 2 == 0 else -1.0)
    c = np.convolve(sample_first_order_lowpass(nominal_bw, sample_rate, LOWPASS_TAPS).taps,
                    design_fractional_delay(2.0 * skew, LAGRANGE_ORDER).taps)
    gain = 1.0 + imp.gain_error[lane]
    phase = imp.per_interleave("phase_error")[lane]
    bw = imp.per_interleave("bw_offset")[lane]
    responses = np.empty((imp.m, COMPOSITE_TAPS))
    for m in range(imp.m):
        f_m = sample_first_order_lowpass(nominal_bw + bw[m], sample_rate, LOWPASS_TAPS).taps
        p_m = gain[m] * design_fractional_delay(2.0 * phase[m], LAGRANGE_ORDER).taps
        responses[m] = _compose(c, f_m, p_m, length=COMPOSITE_TAPS)
    return TiAdcModel(responses, imp.offset[lane] * full_scale, n_bits, full_scale, jitter_rms)


def periodic_filter(signal: np.ndarray, responses: np.ndarray, phase0: int = 0) -> np.ndarray:
    """``y[n] = sum_l responses[(n + phase0) % M][l] * x[n - l]`` with zero pre-history."""
    x = np.asarray(signal, dtype=float)
    m, length = responses.shape
    padded = np.concatenate([np.zeros(length - 1), x])
    win = sliding_window_view(padded, length)[:, ::-1]
    idx = (np.arange(x.size) + phase0) % m
    return np.einsum("nl,nl->n", win, responses[idx])


def digitize(lane_signal, model: TiAdcModel, phase0: int = 0, rng=None) -> np.ndarray:
    """TI-ADC output of one lane.

    ``phase0`` is the absolute index of the first sample, so interleave
    ``(phase0 + n) % M`` converts sample n. ``n_bits=None`` skips quantization.
    """
    y = periodic_filter(lane_signal, model.responses, phase0)
    if model.jitter_rms > 0:
        # first-order: y(t + dt) ~ y + dt * y'; dt in samples = 2 * jitter (T units)
        rng = np.random.default_rng(rng)
        slope = np.gradient(y)
        y = y + rng.normal(scale=2.0 * model.jitter_rms, size=y.size) * slope
    y = y + model.offsets[(np.arange(y.size) + phase0) % model.m]
    if model.n_bits is not None:
        y = quantize_uniform(y, model.n_bits, model.full_scale)
    return y


def build_lane_models(imp: ImpairmentSet, nominal_bw: float, sample_rate: float, **kw) -> list[TiAdcModel]:
    return [build_tiadc_model(imp, lane, nominal_bw, sample_rate, **kw) for lane in range(N_LANES)]


def digitize_lanes(lanes: np.ndarray, models: list[TiAdcModel], phase0: int = 0, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng) if any(m.jitter_rms > 0 for m in models) else None
    return np.stack([digitize(lanes[i], models[i], phase0, rng) for i in range(len(models))])


def with_impairments(imp: ImpairmentSet, **changes) -> ImpairmentSet:
    return replace(imp, **changes)
