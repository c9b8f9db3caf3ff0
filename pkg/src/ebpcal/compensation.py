"""Compensation Equalizer (CE) and mixed-signal actuator model.

The CE subtracts an M-periodic offset estimate from each lane and filters
the result with an M-periodic time-varying FIR. One of the 4M coefficient
sets is pinned to a pure delay so the CE cannot trade gain with the
downstream equalizer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .afe_model import N_LANES, ImpairmentSet, periodic_filter

DELAY_STEP_S = 260e-15
DELAY_RANGE_S = 50e-12


@dataclass(frozen=True)
class PeriodicFir:
    """Bank of M-periodic real FIRs, ``taps`` shape (lanes, M, L_g).

    The set used for absolute sample n is ``taps[lane, (n - n0) % M]``.
    ``pinned`` is ``(lane, interleave, centre)`` or None.
    """

    taps: np.ndarray
    n0: int = 0
    pinned: tuple[int, int, int] | None = None

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float)
        if taps.ndim != 3:
            raise ValueError("taps must have shape (lanes, M, L_g)")
        if taps.shape[2] % 2 == 0:
            raise ValueError("L_g must be odd")
        if self.n0 % taps.shape[1]:
            raise ValueError("n0 must be a multiple of M")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def identity(cls, m: int, length: int, lanes: int = N_LANES) -> PeriodicFir:
        taps = np.zeros((lanes, m, length))
        taps[:, :, (length - 1) // 2] = 1.0
        return cls(taps)

    @property
    def m(self) -> int:
        return self.taps.shape[1]

    @property
    def length(self) -> int:
        return self.taps.shape[2]

    @property
    def center(self) -> int:
        return (self.length - 1) // 2

    def adaptable_mask(self) -> np.ndarray:
        """Boolean (lanes, M) mask, False on the pinned set."""
        mask = np.ones(self.taps.shape[:2], dtype=bool)
        if self.pinned is not None:
            mask[self.pinned[0], self.pinned[1]] = False
        return mask

    def dc_gains(self) -> np.ndarray:
        return self.taps.sum(axis=2)


@dataclass(frozen=True)
class OffsetEstimate:
    """M-periodic offset estimate per lane, shape (lanes, M), units of full scale."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("offset estimate must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, m: int, lanes: int = N_LANES) -> OffsetEstimate:
        return cls(np.zeros((lanes, m)))


def ce_apply(w: np.ndarray, ce: PeriodicFir, phase0: int = 0, lane: int | None = None) -> np.ndarray:
    """``x[n] = sum_l g[(n - n0) % M][l] w[n - l]``.

    ``w`` is (lanes, n) for the whole bank or 1-D with ``lane`` given.
    ``phase0`` is the absolute index of ``w[..., 0]``.
    """
    w = np.asarray(w, dtype=float)
    start = phase0 - ce.n0
    if w.ndim == 1:
        if lane is None:
            raise ValueError("lane is required for a single-lane input")
        return periodic_filter(w, ce.taps[lane], start)
    return np.stack([periodic_filter(w[i], ce.taps[i], start) for i in range(w.shape[0])])


def offset_subtract(y: np.ndarray, est: OffsetEstimate, phase0: int = 0, lane: int | None = None) -> np.ndarray:
    """``w[n] = y[n] - o_hat[n % M]``."""
    y = np.asarray(y, dtype=float)
    m = est.values.shape[1]
    idx = (np.arange(y.shape[-1]) + phase0) % m
    if y.ndim == 1:
        if lane is None:
            raise ValueError("lane is required for a single-lane input")
        return y - est.values[lane, idx]
    return y - est.values[:, idx]


def pin_constraint(ce: PeriodicFir, lane: int = 0, interleave: int = 0, center: int | None = None) -> PeriodicFir:
    """Force one coefficient set to a unit impulse and mark it non-adaptable."""
    center = ce.center if center is None else center
    if not 0 <= center < ce.length:
        raise ValueError(f"pin centre {center} outside [0, {ce.length})")
    if not (0 <= lane < ce.taps.shape[0] and 0 <= interleave < ce.m):
        raise ValueError("pinned lane/interleave out of range")
    taps = ce.taps.copy()
    taps[lane, interleave] = 0.0
    taps[lane, interleave, center] = 1.0
    return replace(ce, taps=taps, pinned=(lane, interleave, center))


@dataclass
class ActuatorState:
    """Analog calibration knobs.

    ``tau`` is the continuous timing estimate per rank-1 switch (units of T);
    the applied delay is ``code * step``. ``step`` and ``max_code`` are in
    units of T and codes. Gain trims multiply the sub-ADC gain, offset trims
    subtract from the sub-ADC offset (units of full scale).
    """

    tau: np.ndarray
    gain_trim: np.ndarray
    offset_trim: np.ndarray
    step: float
    max_code: int
    pinned: tuple[int, int] | None = (0, 0)
    codes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.tau = np.array(self.tau, dtype=float)
        self.gain_trim = np.array(self.gain_trim, dtype=float)
        self.offset_trim = np.array(self.offset_trim, dtype=float)
        self.codes = np.zeros(self.tau.shape, dtype=np.int64)
        self.quantize()

    @classmethod
    def initial(cls, m: int, m1: int, symbol_rate: float, step_s: float = DELAY_STEP_S,
                range_s: float = DELAY_RANGE_S, pinned=(0, 0)) -> ActuatorState:
        step = step_s * symbol_rate
        return cls(np.zeros((N_LANES, m1)), np.ones((N_LANES, m)), np.zeros((N_LANES, m)),
                   step, int(np.floor(range_s / step_s)), pinned)

    def quantize(self):
        raw = np.rint(self.tau / self.step).astype(np.int64)
        self.codes = np.clip(raw, -self.max_code, self.max_code)
        return self.codes

    @property
    def saturated(self) -> bool:
        return bool(np.any(np.abs(np.rint(self.tau / self.step)) > self.max_code))

    @property
    def applied_delay(self) -> np.ndarray:
        return self.codes * self.step

    def copy(self) -> ActuatorState:
        new = ActuatorState(self.tau.copy(), self.gain_trim.copy(), self.offset_trim.copy(),
                            self.step, self.max_code, self.pinned)
        return new

    def to_dict(self) -> dict:
        return {"codes": self.codes.tolist(), "tau": self.tau.tolist(),
                "gain_trim": self.gain_trim.tolist(), "offset_trim": self.offset_trim.tolist(),
                "step": self.step, "max_code": self.max_code}


def actuator_apply(afe: ImpairmentSet, act: ActuatorState) -> ImpairmentSet:
    """Impairments seen by the converter after the analog trims act."""
    gain = (1.0 + afe.gain_error) * act.gain_trim - 1.0
    return replace(afe, phase_error=afe.phase_error - act.applied_delay,
                   gain_error=gain, offset=afe.offset - act.offset_trim)


def dump_state(path, ce: PeriodicFir | None = None, offsets: OffsetEstimate | None = None,
               act: ActuatorState | None = None):
    """Write CE taps, offset estimates and actuator codes as JSON."""
    data = {}
    if ce is not None:
        data["ce_taps"] = ce.taps.tolist()
        data["pinned"] = list(ce.pinned) if ce.pinned else None
    if offsets is not None:
        data["offsets"] = offsets.values.tolist()
    if act is not None:
        data["actuator"] = act.to_dict()
    Path(path).write_text(json.dumps(data, indent=1))
