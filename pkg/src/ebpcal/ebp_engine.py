"""Error backpropagation and the background calibration loop.

Slicer errors are upsampled to the T/2 grid, correlated backwards through
the FFE to produce an error at every CE output, and that error drives
stochastic-gradient updates of the CE taps and offset estimates (digital
mode) or of the analog gain, offset and delay trims (mixed mode).

Within a block of N samples the FFE and CE are frozen and the gradient is
the mean of the per-sample instantaneous gradients; one update is applied
per block. Only every ``decimation``-th block drives the calibration; the
FFE adapts on every block.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import afe_model, txchain
from .afe_model import COMPOSITE_TAPS, ImpairmentRanges, ImpairmentSet
from .compensation import (ActuatorState, OffsetEstimate, PeriodicFir, actuator_apply,
                           ce_apply, offset_subtract, pin_constraint)
from .config import ScenarioConfig
from .rx_dsp import (DIVERGENCE_NORM, DivergenceError, MimoFir, _even_windows,
                     slice_indices)


# -- gradient primitives ---------------------------------------------------

def oversample_error(e: np.ndarray, n_samples: int | None = None) -> np.ndarray:
    """Baud-rate errors (lanes, K) -> T/2 grid with zeros at odd indices."""
    e = np.atleast_2d(e)
    n = 2 * e.shape[1] if n_samples is None else n_samples
    out = np.zeros((e.shape[0], n))
    k = min(e.shape[1], (n + 1) // 2)
    out[:, : 2 * k: 2] = e[:, :k]
    return out


def backpropagate(e: np.ndarray, gamma: MimoFir) -> np.ndarray:
    """``ehat[i, n] = sum_j sum_l taps[j, i, l] e[j, n + l]``, zero past the end of ``e``."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    length = gamma.length
    padded = np.concatenate([e, np.zeros((e.shape[0], length - 1))], axis=1)
    win = sliding_window_view(padded, length, axis=1)
    return np.einsum("jnl,jil->in", win, gamma.taps, optimize=True)


def ce_gradient(ebp: np.ndarray, w: np.ndarray, n: int, length: int) -> np.ndarray:
    """Instantaneous CE gradient at sample n: ``ehat[n] * [w[n], ..., w[n-L_g+1]]``.

    ``ebp`` and ``w`` are single-lane arrays on the same index grid.
    """
    if n - length + 1 < 0:
        raise ValueError("insufficient CE input history")
    return ebp[n] * w[n - length + 1: n + 1][::-1]


def _lagged(w: np.ndarray, start: int, count: int, length: int) -> np.ndarray:
    """(lanes, count, length) with ``[i, t, l] = w[i, start + t - l]``."""
    seg = w[:, start - length + 1: start + count]
    return sliding_window_view(seg, length, axis=1)[:, :count, ::-1]


def block_ce_gradient(ebp: np.ndarray, w: np.ndarray, start: int, m: int, length: int,
                      mask: np.ndarray) -> np.ndarray:
    """Mean instantaneous gradient per (lane, interleave), shape (lanes, M, L_g).

    ``ebp[:, t]`` pairs with ``w[:, start + t]``; sample t uses set ``t % M``
    (blocks start on a multiple of M). ``mask`` selects the samples used.
    """
    count = ebp.shape[1]
    lag = _lagged(w, start, count, length)
    weighted = (ebp * mask)[:, :, None] * lag
    sums = weighted.reshape(w.shape[0], count // m, m, length).sum(axis=1)
    counts = mask.reshape(count // m, m).sum(axis=0)
    return sums / np.maximum(counts, 1)[None, :, None]


def backprop_through_ce(ebp: np.ndarray, ce: PeriodicFir) -> np.ndarray:
    """Error referred to the CE input: ``ew[n] = sum_l g_{(n+l)%M}[l] ehat[n+l]``."""
    lanes, count = ebp.shape
    length, m = ce.length, ce.m
    padded = np.concatenate([ebp, np.zeros((lanes, length - 1))], axis=1)
    win = sliding_window_view(padded, length, axis=1)
    idx = (np.arange(count)[:, None] + np.arange(length)[None, :]) % m
    coef = ce.taps[:, idx, np.arange(length)[None, :]]
    return np.einsum("inl,inl->in", win, coef)


def phase_means(values: np.ndarray, period: int, mask: np.ndarray) -> np.ndarray:
    """Masked mean of ``values[:, t]`` grouped by ``t % period``."""
    lanes, count = values.shape
    sums = (values * mask).reshape(lanes, count // period, period).sum(axis=1)
    counts = mask.reshape(count // period, period).sum(axis=0)
    return sums / np.maximum(counts, 1)


def update_ce(ce: PeriodicFir, grad: np.ndarray, mu: float) -> PeriodicFir:
    """SGD step on every set except the pinned one."""
    if mu == 0:
        return ce
    taps = ce.taps - mu * grad * ce.adaptable_mask()[:, :, None]
    if not np.all(np.isfinite(taps)) or np.linalg.norm(taps) > DIVERGENCE_NORM:
        raise DivergenceError("CE coefficient norm exploded")
    return replace(ce, taps=taps)


def update_offsets(est: OffsetEstimate, ew: np.ndarray, mu_o: float, mask: np.ndarray) -> OffsetEstimate:
    """Descend on the offset estimate using the error at the CE input.

    ``dE/do_hat[m] = -mean ew[n]`` over ``n % M == m``, hence the plus sign.
    """
    m = est.values.shape[1]
    return OffsetEstimate(est.values + mu_o * phase_means(ew, m, mask))


def update_gain_ms(act: ActuatorState, ebp: np.ndarray, w_block: np.ndarray, mu: float,
                   mask: np.ndarray) -> ActuatorState:
    """``gamma_hat[m] -= mu * mean(ehat[n] w[n])`` per sub-ADC."""
    m = act.gain_trim.shape[1]
    grad = phase_means(ebp * w_block, m, mask)
    new = act.copy()
    new.gain_trim = act.gain_trim - mu * grad
    if act.pinned is not None:
        new.gain_trim[act.pinned[0], act.pinned[1]] = act.gain_trim[act.pinned[0], act.pinned[1]]
    new.quantize()
    return new


def update_offsets_ms(act: ActuatorState, ebp: np.ndarray, mu: float, mask: np.ndarray) -> ActuatorState:
    m = act.offset_trim.shape[1]
    new = act.copy()
    new.offset_trim = act.offset_trim + mu * phase_means(ebp, m, mask)
    new.quantize()
    return new


def update_timing_ms(act: ActuatorState, ebp: np.ndarray, w_next: np.ndarray, w_prev: np.ndarray,
                     mu: float, mask: np.ndarray) -> ActuatorState:
    """MMSE timing step ``tau[j] -= mu * mean(ehat[n] (w[n+1] - w[n-1]))`` per rank-1 switch.

    ``tau`` is the delay applied to the sampling clock; the resulting
    interleave delay is ``delta - code * step``.
    """
    m1 = act.tau.shape[1]
    grad = phase_means(ebp * (w_next - w_prev), m1, mask)
    new = act.copy()
    new.tau = act.tau - mu * grad
    if act.pinned is not None:
        new.tau[act.pinned[0], act.pinned[1]] = act.tau[act.pinned[0], act.pinned[1]]
    new.quantize()
    return new


# -- scenario construction -------------------------------------------------

def gear_scale(iteration: int, n_iterations: int, stages) -> float:
    scale = 1.0
    for frac, s in stages:
        if iteration >= frac * n_iterations:
            scale = s
    return float(scale)


def scenario_impairments(cfg: ScenarioConfig, seed=None) -> ImpairmentSet:
    imp = cfg.impairments
    if imp.file:
        return ImpairmentSet.load(imp.file)
    ranges = ImpairmentRanges(imp.gain_error, imp.phase_error, imp.bw_offset * cfg.afe.nominal_bw,
                              imp.offset, imp.iq_skew)
    seed = imp.seed if imp.seed is not None else (cfg.run.seed if seed is None else seed)
    return afe_model.sample_impairments(ranges, cfg.afe.m, [seed, 0xADC], cfg.afe.m1)


def scenario_channel(cfg: ScenarioConfig) -> txchain.ChannelModel:
    ch = cfg.signal.channel
    if ch == "identity":
        return txchain.ChannelModel.identity()
    if ch == "rotation":
        return txchain.ChannelModel.rotation(cfg.signal.channel_theta, cfg.signal.channel_phase)
    return txchain.ChannelModel.from_file(ch)


def scenario_noise_var(cfg: ScenarioConfig) -> float:
    s = cfg.signal
    if s.snr_db is not None:
        return 10 ** (-s.snr_db / 10)
    if s.target_ber == 0:
        return 0.0
    return txchain.set_noise_for_target_ber(s.modulation, s.target_ber) * 10 ** (-s.snr_margin_db / 10)


def lane_drive(cfg: ScenarioConfig, pulse: np.ndarray) -> float:
    """Scale putting each lane's signal RMS at ``drive_rms * full_scale``."""
    lane_power = 0.5 * np.sum(pulse ** 2) / 2.0
    return cfg.signal.drive_rms * cfg.afe.full_scale / np.sqrt(lane_power)


def nominal_delay(cfg: ScenarioConfig) -> int:
    """Integer DC group delay (samples) of the mismatch-free lane response."""
    model = afe_model.build_tiadc_model(ImpairmentSet.zeros(1), 0, cfg.afe.nominal_bw, cfg.sample_rate)
    h = model.responses[0]
    return int(round(np.sum(np.arange(h.size) * h) / np.sum(h)))


def jitter_in_t(cfg: ScenarioConfig) -> float:
    return cfg.afe.jitter_rms_s * cfg.signal.symbol_rate


# -- calibration loop ------------------------------------------------------

@dataclass
class TraceRecord:
    block: int
    iteration: int
    adapted: bool
    bit_errors: int
    bits: int
    mse: float
    ber_ma: float = 0.0
    gamma_norm: float = 0.0
    dc_gains: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    codes: list = field(default_factory=list)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0


@dataclass
class CalibrationResult:
    trace: list
    ce: PeriodicFir
    offsets: OffsetEstimate
    gamma: MimoFir
    actuator: ActuatorState | None
    impairments: ImpairmentSet
    pinned_initial: np.ndarray | None = None
    saturated: bool = False

    def final_counts(self, fraction: float = 0.25):
        n = max(1, int(round(len(self.trace) * fraction)))
        tail = self.trace[-n:]
        return sum(r.bit_errors for r in tail), sum(r.bits for r in tail)

    def final_ber(self, fraction: float = 0.25) -> float:
        err, bits = self.final_counts(fraction)
        return err / bits if bits else 0.0

    def effective_impairments(self) -> ImpairmentSet:
        if self.actuator is None:
            return self.impairments
        return actuator_apply(self.impairments, self.actuator)


class Calibrator:
    """Stateful background-calibration loop for one scenario."""

    def __init__(self, cfg: ScenarioConfig, imp: ImpairmentSet | None = None, seed: int | None = None):
        self.cfg = cfg.validate()
        self.seed = cfg.run.seed if seed is None else seed
        self.imp = scenario_impairments(cfg, self.seed) if imp is None else imp
        if self.imp.m != cfg.afe.m:
            raise ValueError("impairment set interleave count does not match afe.m")
        eq, sch = cfg.equalizer, cfg.schedule
        self.mode = cfg.run.mode
        self.m = cfg.afe.m
        self.l_g = eq.l_g if self.mode == "digital" else 1
        self.l_gamma = eq.l_gamma
        self.n = sch.block_size
        self.pulse = txchain.raised_cosine(cfg.signal.rolloff, cfg.signal.pulse_span)
        # history: ADC composite filter, CE, FFE, one extra sample for timing neighbours;
        # sized from the configured L_g in every mode so paired arms draw identical data
        hist = (COMPOSITE_TAPS - 1) + (eq.l_g - 1) + (self.l_gamma - 1) + 2
        self.history = hist + hist % 2
        self.source = txchain.BlockSource(
            cfg.signal.modulation, scenario_channel(cfg), self.pulse, self.n, self.history, 2,
            scenario_noise_var(cfg), lane_drive(cfg, self.pulse), self.seed)
        ce_center = (self.l_g - 1) // 2
        base = self.source.symbol_offset() + nominal_delay(cfg) + ce_center
        c = (self.l_gamma - 1) // 2
        if (base + c) % 2:
            c = c + 1 if c + 1 < self.l_gamma else c - 1
        self.ffe_center = c
        self.sys_delay = base + c  # block-relative sample of symbol 0 at the slicer
        gain = 1.0 / lane_drive(cfg, self.pulse)
        self.gamma = MimoFir.identity(self.l_gamma, c, gain=gain, step=sch.mu_ffe)
        ce = PeriodicFir.identity(self.m, self.l_g)
        if eq.pin and self.mode == "digital":
            ce = pin_constraint(ce, eq.pin_lane, eq.pin_interleave)
        self.ce = ce
        self.offsets = OffsetEstimate.zeros(self.m)
        self.actuator = None
        if self.mode == "mixed":
            self.actuator = ActuatorState.initial(self.m, self.imp.m1, cfg.signal.symbol_rate,
                                                  pinned=(eq.pin_lane, eq.pin_interleave % self.imp.m1) if eq.pin else None)
        self._models = None
        self._model_key = None
        self.iteration = 0
        self.trace: list[TraceRecord] = []

    # models are rebuilt only when actuator codes or trims change
    def models(self):
        if self.actuator is None:
            key = None
            imp = self.imp
        else:
            key = (self.actuator.codes.tobytes(), self.actuator.gain_trim.tobytes(),
                   self.actuator.offset_trim.tobytes())
            imp = actuator_apply(self.imp, self.actuator)
        if self._models is None or key != self._model_key:
            a = self.cfg.afe
            self._models = afe_model.build_lane_models(
                imp, a.nominal_bw, self.cfg.sample_rate, n_bits=a.n_bits,
                full_scale=a.full_scale, jitter_rms=jitter_in_t(self.cfg))
            self._model_key = key
        return self._models

    @property
    def total_blocks(self) -> int:
        sch = self.cfg.schedule
        return sch.training_blocks + sch.n_iterations * sch.decimation

    def run(self, n_blocks: int | None = None) -> CalibrationResult:
        pinned0 = None
        if self.ce.pinned is not None:
            pinned0 = self.ce.taps[self.ce.pinned[0], self.ce.pinned[1]].copy()
        n_blocks = self.total_blocks if n_blocks is None else n_blocks
        for b in range(n_blocks):
            self.step(b)
        return CalibrationResult(self.trace, self.ce, self.offsets, self.gamma,
                                 self.actuator, self.imp, pinned0,
                                 bool(self.actuator is not None and self.actuator.saturated))

    def step(self, b: int) -> TraceRecord:
        cfg, sch = self.cfg, self.cfg.schedule
        n, h, m = self.n, self.history, self.m
        phase0 = b * n - h
        lanes, stream = self.source.block(b)
        y = afe_model.digitize_lanes(lanes, self.models(), phase0, rng=[self.seed, b, 1])
        w = offset_subtract(y, self.offsets, phase0) if self.mode == "digital" else y
        x = ce_apply(w, self.ce, phase0) if self.mode == "digital" else w

        win = _even_windows(x, self.l_gamma)[:, h // 2: (h + n) // 2]
        u = np.einsum("ikl,jil->jk", win, self.gamma.taps, optimize=True)
        k_count = u.shape[1]
        # slicer output k sits at block time 2k and carries stream symbol (2k - sys_delay) / 2
        j = np.arange(k_count) - self.sys_delay // 2
        valid = (j >= 0) & (j < stream.n_symbols)
        tx_idx = stream.indices[:, np.clip(j, 0, stream.n_symbols - 1)]
        det_idx = slice_indices(u, cfg.signal.modulation)
        levels = txchain.pam_levels(cfg.signal.modulation)
        training = b < sch.training_blocks
        ref = levels[tx_idx] if training else levels[det_idx]
        e = (u - ref) * valid
        kbits = int(np.log2(txchain.pam_order(cfg.signal.modulation)))
        bit_err = int(np.sum((txchain.gray_bits(det_idx, kbits) != txchain.gray_bits(tx_idx, kbits))
                             * valid[None, :, None]))
        bits = int(np.sum(valid)) * 4 * kbits
        mse = float(np.sum(e * e) / max(np.sum(valid), 1) / 4)
        if not np.isfinite(mse) or mse > 1e6:
            raise DivergenceError(f"slicer MSE diverged at block {b} (mse={mse:.3g})")

        calibrate = (not training and self.mode != "none"
                     and (b - sch.training_blocks) % sch.decimation == 0
                     and self.iteration < sch.n_iterations)
        scale = gear_scale(self.iteration, sch.n_iterations, sch.gear)
        if calibrate:
            self._calibrate(e, w, h, scale, valid)
            self.iteration += 1
        ffe_step = sch.mu_ffe * (1.0 if training else gear_scale(self.iteration, sch.n_iterations, sch.gear))
        grad = np.einsum("jk,ikl->jil", e, win, optimize=True) / max(float(np.sum(valid)), 1.0)
        taps = self.gamma.taps - ffe_step * grad
        if not np.all(np.isfinite(taps)) or np.linalg.norm(taps) > DIVERGENCE_NORM:
            raise DivergenceError(f"FFE diverged at block {b}")
        self.gamma = replace(self.gamma, taps=taps)

        rec = TraceRecord(b, self.iteration, calibrate, bit_err, bits, mse, gamma_norm=float(np.linalg.norm(taps)),
                          dc_gains=np.round(self.ce.dc_gains(), 12).ravel().tolist() if self.mode == "digital" else [],
                          offsets=(self.offsets.values if self.actuator is None else self.actuator.offset_trim).ravel().tolist(),
                          codes=self.actuator.codes.ravel().tolist() if self.actuator is not None else [])
        self.trace.append(rec)
        window = self.trace[-sch.ma_window:]
        rec.ber_ma = float(np.mean([r.ber for r in window]))
        return rec

    def _calibrate(self, e, w, h, scale, valid_sym):
        sch = self.cfg.schedule
        n, m, lg, lgam = self.n, self.m, self.l_g, self.l_gamma
        e_os = oversample_error(e, n)
        ebp = backpropagate(e_os, self.gamma)
        edge = lgam + lg
        mask = np.zeros(n)
        mask[edge: n - edge] = 1.0
        if self.mode == "digital":
            grad = block_ce_gradient(ebp, w, h, m, lg, mask)
            ew = backprop_through_ce(ebp, self.ce)
            self.ce = update_ce(self.ce, grad, sch.mu_ce * scale)
            self.offsets = update_offsets(self.offsets, ew, sch.mu_offset * scale, mask)
        else:
            wb = w[:, h: h + n]
            act = update_offsets_ms(self.actuator, ebp, sch.mu_offset * scale, mask)
            act = update_gain_ms(act, ebp, wb, sch.mu_gain * scale, mask)
            act = update_timing_ms(act, ebp, w[:, h + 1: h + n + 1], w[:, h - 1: h + n - 1],
                                   sch.mu_timing * scale, mask)
            self.actuator = act


def run_calibration(cfg: ScenarioConfig, imp: ImpairmentSet | None = None, seed: int | None = None,
                    n_blocks: int | None = None) -> CalibrationResult:
    """Run the full background calibration for ``cfg.run.mode``.

    Modes: ``digital`` (CE + offsets), ``mixed`` (analog trims, CE bypassed)
    and ``none`` (FFE only, the uncalibrated reference arm).
    """
    return Calibrator(cfg, imp, seed).run(n_blocks)


# -- sine-wave test of the calibrated converter ---------------------------

def sine_capture(cfg: ScenarioConfig, result: CalibrationResult | None, freq_bin: int,
                 n_fft: int = 8192, amplitude_dbfs: float = -1.0, lane: int = 0,
                 imp: ImpairmentSet | None = None, seed: int = 0) -> np.ndarray:
    """Coherent sine through the (calibrated) TI-ADC, returning ``n_fft`` samples.

    The tone sits on FFT bin ``freq_bin`` and its level at the nominal lane
    output is ``amplitude_dbfs``. Digital mode reads the CE output, mixed
    mode the converter output with the actuator trims applied; with
    ``result=None`` the raw uncalibrated converter is measured.
    """
    a = cfg.afe
    imp = (result.impairments if result is not None else scenario_impairments(cfg)) if imp is None else imp
    mode = cfg.run.mode if result is not None else "none"
    eff = actuator_apply(imp, result.actuator) if (mode == "mixed" and result.actuator is not None) else imp
    model = afe_model.build_tiadc_model(eff, lane, a.nominal_bw, cfg.sample_rate, a.n_bits,
                                        a.full_scale, jitter_in_t(cfg))
    nominal = afe_model.build_tiadc_model(ImpairmentSet.zeros(1), lane, a.nominal_bw, cfg.sample_rate)
    f = freq_bin / n_fft
    mag = abs(nominal.fir(0).response([f])[0])
    amp = a.full_scale * 10 ** (amplitude_dbfs / 20) / mag
    hist = COMPOSITE_TAPS + cfg.equalizer.l_g
    hist += (-hist) % (a.m * 2)
    t = np.arange(-hist, n_fft)
    s = amp * np.sin(2 * np.pi * f * t + 0.3)
    y = afe_model.digitize(s, model, phase0=-hist, rng=[seed, 7])
    if mode == "digital":
        w = offset_subtract(y, result.offsets, -hist, lane=lane)
        y = ce_apply(w, result.ce, -hist, lane=lane)
    return y[hist:]
