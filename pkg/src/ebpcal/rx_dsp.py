"""Receiver DSP block: real 4x4 MIMO T/2-spaced FFE, slicer and LMS update."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .txchain import pam_order, pam_scale

DIVERGENCE_NORM = 1e4


class DivergenceError(RuntimeError):
    """Adaptive coefficients blew up; the trial is aborted."""


@dataclass(frozen=True)
class MimoFir:
    """``taps[j, i, l]`` maps input lane i to output lane j; ``step`` is the LMS step."""

    taps: np.ndarray
    step: float = 0.0

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float)
        if taps.ndim != 3 or taps.shape[2] < 1:
            raise ValueError("taps must have shape (out, in, L)")
        if not np.all(np.isfinite(taps)):
            raise DivergenceError("FFE coefficients are not finite")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def identity(cls, length: int, center: int = 0, lanes: int = 4, gain: float = 1.0, step: float = 0.0) -> MimoFir:
        taps = np.zeros((lanes, lanes, length))
        taps[np.arange(lanes), np.arange(lanes), center] = gain
        return cls(taps, step)

    @property
    def length(self) -> int:
        return self.taps.shape[2]

    @property
    def adaptive(self) -> bool:
        return self.step > 0


def _even_windows(x: np.ndarray, length: int) -> np.ndarray:
    """(lanes, K, L) array with ``[i, k, l] = x[i, 2k - l]`` (zero before index 0)."""
    padded = np.concatenate([np.zeros((x.shape[0], length - 1)), x], axis=1)
    win = sliding_window_view(padded, length, axis=1)[:, ::2, ::-1]
    return win


def ffe_forward(x: np.ndarray, gamma: MimoFir) -> np.ndarray:
    """Baud-rate output ``u[j, k] = sum_i sum_l taps[j, i, l] x[i, 2k - l]``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    win = _even_windows(x, gamma.length)
    return np.einsum("ikl,jil->jk", win, gamma.taps, optimize=True)


def ffe_gradient(x: np.ndarray, e: np.ndarray, length: int, weights=None) -> np.ndarray:
    """Block-averaged LMS gradient ``mean_k e[j,k] x[i, 2k-l]``; ``weights`` masks symbols."""
    win = _even_windows(np.atleast_2d(x), length)
    k = e.shape[1]
    win = win[:, :k]
    if weights is not None:
        e = e * weights
        count = max(float(np.sum(weights)), 1.0)
    else:
        count = float(k)
    return np.einsum("jk,ikl->jil", e, win, optimize=True) / count


def ffe_adapt(gamma: MimoFir, x: np.ndarray, e: np.ndarray, step: float | None = None, weights=None) -> MimoFir:
    """One block LMS step ``taps -= step * mean_k e_k x_k``."""
    step = gamma.step if step is None else step
    if step == 0 or not np.any(e):
        return gamma
    taps = gamma.taps - step * ffe_gradient(x, e, gamma.length, weights)
    if not np.all(np.isfinite(taps)) or np.linalg.norm(taps) > DIVERGENCE_NORM:
        raise DivergenceError(f"FFE coefficient norm exploded ({np.linalg.norm(taps):.3g})")
    return replace(gamma, taps=taps)


def slice_indices(u, modulation: int) -> np.ndarray:
    """Nearest PAM level index; exact midpoints go to the lower level."""
    n = pam_order(modulation)
    pos = (np.asarray(u, dtype=float) * pam_scale(modulation) + (n - 1)) / 2.0
    return np.clip(np.ceil(pos - 0.5), 0, n - 1).astype(np.int64)


def slice(u, modulation: int):
    """Return ``(a_hat, e)`` with ``e = u - a_hat``."""
    u = np.asarray(u, dtype=float)
    n = pam_order(modulation)
    a_hat = (2.0 * slice_indices(u, modulation) - (n - 1)) / pam_scale(modulation)
    return a_hat, u - a_hat


def total_squared_error(e) -> np.ndarray:
    """``E_k = sum_j e_k^(j)**2`` over the lane axis (axis 0)."""
    e = np.asarray(e, dtype=float)
    return np.sum(e * e, axis=0)
