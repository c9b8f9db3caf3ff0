"""Brute-force reference implementations used to check the fast paths.

Everything here is written as literal loops over the defining sums and is
deliberately slow. The finite-difference gradient runs the whole
CE -> FFE -> slicer chain with the decisions frozen at their unperturbed
values, so the squared-error surface is an exact quadratic in the CE taps
and the central difference carries no truncation error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compensation import PeriodicFir, ce_apply
from .ebp_engine import backpropagate, block_ce_gradient, oversample_error
from .rx_dsp import MimoFir, ffe_forward, slice


class CancellationError(ArithmeticError):
    """Finite-difference step too small for the function's magnitude."""


def direct_ce_apply(w: np.ndarray, taps: np.ndarray, phase0: int = 0) -> np.ndarray:
    """``x[i, n] = sum_l taps[i, (n + phase0) % M, l] * w[i, n - l]`` by explicit loops."""
    lanes, n_samples = w.shape
    _, m, length = taps.shape
    x = np.zeros((lanes, n_samples))
    for i in range(lanes):
        for n in range(n_samples):
            acc = 0.0
            for l in range(length):
                if n - l >= 0:
                    acc += taps[i, (n + phase0) % m, l] * w[i, n - l]
            x[i, n] = acc
    return x


def direct_ffe_forward(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """``u[j, k] = sum_i sum_l taps[j, i, l] x[i, 2k - l]`` by explicit loops."""
    n_out, n_in, length = taps.shape
    k_count = (x.shape[1] + 1) // 2
    u = np.zeros((n_out, k_count))
    for j in range(n_out):
        for k in range(k_count):
            acc = 0.0
            for i in range(n_in):
                for l in range(length):
                    if 0 <= 2 * k - l < x.shape[1]:
                        acc += taps[j, i, l] * x[i, 2 * k - l]
            u[j, k] = acc
    return u


def direct_backprop(e: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """``ehat[i, n] = sum_j sum_l taps[j, i, l] e[j, n + l]`` (zero past the end)."""
    n_out, n_in, length = taps.shape
    n_samples = e.shape[1]
    out = np.zeros((n_in, n_samples))
    for i in range(n_in):
        for n in range(n_samples):
            acc = 0.0
            for j in range(n_out):
                for l in range(length):
                    if n + l < n_samples:
                        acc += taps[j, i, l] * e[j, n + l]
            out[i, n] = acc
    return out


def batch_gradient(ebp: np.ndarray, w: np.ndarray, m: int, length: int) -> np.ndarray:
    """Windowed batch gradient ``sum_k ehat[m + kM] w[m + kM - l] / K`` per (lane, m, l).

    ``w`` carries ``length - 1`` samples of history ahead of ``ebp``; the
    window covers every full period of ``ebp``.
    """
    lanes, count = ebp.shape
    periods = count // m
    out = np.zeros((lanes, m, length))
    for i in range(lanes):
        for mm in range(m):
            for l in range(length):
                acc = 0.0
                for k in range(periods):
                    n = mm + k * m
                    acc += ebp[i, n] * w[i, length - 1 + n - l]
                out[i, mm, l] = acc / periods
    return out


@dataclass(frozen=True)
class ChainSnapshot:
    """Frozen CE -> FFE -> slicer problem.

    ``w`` (lanes, hist + N) is the CE input with ``hist = L_g - 1`` samples of
    history; ``decisions`` are the slicer outputs of the unperturbed chain.
    """

    w: np.ndarray
    ce: PeriodicFir
    gamma: MimoFir
    decisions: np.ndarray
    modulation: int = 64

    @property
    def history(self) -> int:
        return self.ce.length - 1

    def ce_output(self, taps: np.ndarray | None = None) -> np.ndarray:
        # vectorized forward pass; the direct forms above are checked against it separately
        taps = self.ce.taps if taps is None else taps
        return ce_apply(self.w, PeriodicFir(taps), phase0=-self.history)[:, self.history:]

    def errors(self, taps: np.ndarray | None = None) -> np.ndarray:
        u = ffe_forward(self.ce_output(taps), self.gamma)
        return u - self.decisions

    def total_error(self, taps: np.ndarray | None = None) -> float:
        e = self.errors(taps)
        return float(np.sum(e * e))


def random_snapshot(rng, m: int = 4, l_g: int = 3, l_gamma: int = 5, n_symbols: int = 64,
                    modulation: int = 64, lanes: int = 4) -> ChainSnapshot:
    """Random small instance; decisions come from slicing the unperturbed output."""
    rng = np.random.default_rng(rng)
    n = 2 * n_symbols
    n -= n % m
    w = rng.normal(scale=0.3, size=(lanes, l_g - 1 + n))
    taps = rng.normal(scale=0.2, size=(lanes, m, l_g))
    taps[:, :, (l_g - 1) // 2] += 1.0
    gtaps = rng.normal(scale=0.3, size=(lanes, lanes, l_gamma))
    snap = ChainSnapshot(w, PeriodicFir(taps), MimoFir(gtaps), np.zeros((lanes, n // 2)), modulation)
    u = ffe_forward(snap.ce_output(), snap.gamma)
    decisions, _ = slice(u, modulation)
    return ChainSnapshot(w, snap.ce, snap.gamma, decisions, modulation)


def fd_gradient(snap: ChainSnapshot, index: tuple[int, int, int], eps: float = 1e-6,
                atol: float = 1e-6) -> float:
    """Central difference of the total squared error w.r.t. ``taps[index]``.

    Raises :class:`CancellationError` when the result is dominated by
    rounding: the estimate is repeated with ``eps/2`` and ``2*eps`` and the
    spread must stay below 10% of its magnitude. Gradients that are zero
    up to ``atol * max(E, 1)`` (E the unperturbed total error) are accepted
    with an absolute spread bound instead; the bound does not grow as
    ``eps`` shrinks, so a too-small step is still caught.
    """
    def diff(h):
        plus = snap.ce.taps.copy()
        minus = snap.ce.taps.copy()
        plus[index] += h
        minus[index] -= h
        return (snap.total_error(plus) - snap.total_error(minus)) / (2 * h)

    est = [diff(eps * s) for s in (0.5, 1.0, 2.0)]
    value = est[1]
    floor = atol * max(snap.total_error(), 1.0)
    spread = max(est) - min(est)
    if spread > max(0.1 * abs(value), floor):
        raise CancellationError(f"finite difference unstable at eps={eps:g} (spread {spread:.3g}, value {value:.3g})")
    return value


def analytic_gradient(snap: ChainSnapshot) -> np.ndarray:
    """Gradient of the total squared error from the backpropagation path.

    ``2 * K_m * block_ce_gradient``: the block routine returns means of the
    instantaneous gradients, the total error is their sum times two.
    """
    e = snap.errors()
    n = snap.w.shape[1] - snap.history
    ebp = backpropagate(oversample_error(e, n), snap.gamma)
    mask = np.ones(n)
    mean_grad = block_ce_gradient(ebp, snap.w, snap.history, snap.ce.m, snap.ce.length, mask)
    return 2.0 * (n // snap.ce.m) * mean_grad


@dataclass(frozen=True)
class GradientCheck:
    worst_relative_error: float
    checked: int
    failures: int
    instances: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def check_gradients(n_instances: int = 100, seed: int = 0, tol: float = 1e-6, eps: float = 1e-6) -> GradientCheck:
    """Compare analytic and finite-difference gradients on random small chains.

    Each instance draws M=4, L_g in {3, 5}, L_Gamma in {1, 5, 9} and 64-256
    symbols. The relative error of the full gradient array is
    ``|g_fd - g| / max(|g_fd|, tiny)`` in the max norm.
    """
    rng = np.random.default_rng(seed)
    worst, checked, failures = 0.0, 0, 0
    for _ in range(n_instances):
        l_g = int(rng.choice([3, 5]))
        l_gamma = int(rng.choice([1, 5, 9]))
        n_sym = int(rng.integers(64, 257))
        snap = random_snapshot(rng, 4, l_g, l_gamma, n_sym)
        g = analytic_gradient(snap)
        fd = np.zeros_like(g)
        for idx in np.ndindex(*g.shape):
            fd[idx] = fd_gradient(snap, idx, eps)
        rel = float(np.max(np.abs(fd - g)) / max(np.max(np.abs(fd)), np.finfo(float).tiny))
        worst = max(worst, rel)
        checked += g.size
        failures += int(rel >= tol)
    return GradientCheck(worst, checked, failures, n_instances)
