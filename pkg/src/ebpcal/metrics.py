"""Receiver and converter metrics: BER traces, SNDR/SFDR/ENOB, histograms.

Spectral figures are in dBFS with 0 dBFS defined as a sine whose peak
amplitude equals the converter full scale. Captures are expected to be
coherent (integer number of cycles in ``n_fft`` samples), so a
rectangular window keeps every tone in a single bin.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import beta

ENOB_OFFSET_DB = 1.76
DB_PER_BIT = 6.02
CONFIDENCE_ERRORS = 100


class AlignmentError(ValueError):
    """Detected and reference bit streams could not be lined up."""


@dataclass(frozen=True)
class BerTrace:
    """Per-block BER, its moving average and the lag applied to the detected stream."""

    instantaneous: np.ndarray
    moving_average: np.ndarray
    lag: int
    errors: int
    bits: int

    @property
    def overall(self) -> float:
        return self.errors / self.bits if self.bits else 0.0


def moving_average(values, window: int = 10) -> np.ndarray:
    """Causal moving average; the first ``window - 1`` outputs average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    n = np.arange(1, x.size + 1)
    lo = np.maximum(n - window, 0)
    return (c[n] - c[lo]) / (n - lo)


def align_bits(detected, reference, max_lag: int = 64, min_agreement: float = 0.75) -> int:
    """Lag ``d`` such that ``detected[k + d]`` matches ``reference[k]`` best.

    Agreement is measured by correlating the bipolar streams over the
    overlap. Raises :class:`AlignmentError` if even the best lag agrees
    on fewer than ``min_agreement`` of the bits.
    """
    det = 2.0 * np.asarray(detected, dtype=float) - 1.0
    ref = 2.0 * np.asarray(reference, dtype=float) - 1.0
    best, best_lag = -np.inf, 0
    for d in range(-max_lag, max_lag + 1):
        a = det[max(d, 0):]
        b = ref[max(-d, 0):]
        n = min(a.size, b.size)
        if n == 0:
            continue
        score = float(np.dot(a[:n], b[:n])) / n
        if score > best:
            best, best_lag = score, d
    if (best + 1.0) / 2.0 < min_agreement:
        raise AlignmentError(f"best bit agreement {(best + 1) / 2:.3f} below {min_agreement}")
    return best_lag


def ber(detected, reference, block_bits: int | None = None, window: int = 10, align: bool = True,
        max_lag: int = 64) -> BerTrace:
    """Bit error rate trace of ``detected`` against ``reference``.

    ``block_bits`` splits the aligned streams into blocks (one BER sample
    each); by default the whole stream is one block.
    """
    det = np.asarray(detected).astype(np.int8).ravel()
    ref = np.asarray(reference).astype(np.int8).ravel()
    if det.size == 0 or ref.size == 0:
        raise AlignmentError("empty bit stream")
    lag = align_bits(det, ref, max_lag) if align else 0
    det = det[max(lag, 0):]
    ref = ref[max(-lag, 0):]
    n = min(det.size, ref.size)
    wrong = det[:n] != ref[:n]
    block_bits = n if block_bits is None else int(block_bits)
    n_blocks = max(n // block_bits, 1)
    counts = [wrong[i * block_bits:(i + 1) * block_bits] for i in range(n_blocks)]
    inst = np.array([c.mean() if c.size else 0.0 for c in counts])
    return BerTrace(inst, moving_average(inst, window), lag, int(wrong.sum()), int(n))


def ber_confidence(errors: int, bits: int, confidence: float = 0.95) -> tuple[float, bool]:
    """Point estimate or one-sided upper bound.

    Returns ``(value, is_bound)``. With at least 100 errors the estimate
    ``errors / bits`` is reported; otherwise the Clopper-Pearson upper
    bound at ``confidence``.
    """
    if bits <= 0:
        raise ValueError("bits must be positive")
    if errors >= CONFIDENCE_ERRORS:
        return errors / bits, False
    return float(beta.ppf(confidence, errors + 1, bits - errors)), True


@dataclass(frozen=True)
class SndrReport:
    """Single-tone figures of merit.

    ``spurs`` lists ``(frequency, level_dbfs)`` of the strongest non-signal
    bins, largest first. ``noise_floor_dbfs`` is the median bin level.
    """

    sndr_dbfs: float
    sfdr_dbfs: float
    enob_bits: float
    fundamental_bin: int
    fundamental_dbfs: float
    noise_floor_dbfs: float
    spurs: list = field(default_factory=list)


def _power_spectrum(samples, n_fft: int, full_scale: float) -> np.ndarray:
    """One-sided bin powers normalized so a full-scale sine reads 1.0 (0 dBFS)."""
    x = np.asarray(samples, dtype=float)
    if x.size < n_fft:
        raise ValueError(f"capture has {x.size} samples, need {n_fft}")
    x = x[-n_fft:]
    spec = np.fft.rfft(x) / (n_fft / 2.0)
    p = np.abs(spec) ** 2 / full_scale ** 2
    p[0] /= 4.0
    if n_fft % 2 == 0:
        p[-1] /= 4.0
    return p


def sndr_sfdr(samples, n_fft: int = 8192, fundamental: int | None = None, full_scale: float = 1.0,
              sample_rate: float = 1.0, n_spurs: int = 16) -> SndrReport:
    """SNDR, SFDR and ENOB of a coherent single-tone capture.

    The DC bin and the fundamental +-1 bin are excluded from the noise and
    distortion power. SNDR and SFDR are referenced to full scale.
    """
    p = _power_spectrum(samples, n_fft, full_scale)
    if fundamental is None:
        fundamental = int(np.argmax(p[1:]) + 1)
    if not 0 < fundamental < p.size - 1:
        raise ValueError(f"fundamental bin {fundamental} outside (0, {p.size - 1})")
    excluded = np.zeros(p.size, dtype=bool)
    excluded[0] = True
    excluded[fundamental - 1:fundamental + 2] = True
    fund = p[fundamental - 1:fundamental + 2].sum()
    others = p[~excluded]
    if fund <= others.max(initial=0.0):
        raise ValueError(f"fundamental not found at bin {fundamental}")
    floor = np.finfo(float).tiny
    nd = max(others.sum(), floor)
    sndr = -10 * np.log10(nd)
    sfdr = -10 * np.log10(max(others.max(), floor))
    idx = np.flatnonzero(~excluded)
    order = idx[np.argsort(p[idx])[::-1][:n_spurs]]
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    spurs = [(float(freqs[k]), float(10 * np.log10(max(p[k], floor)))) for k in order]
    return SndrReport(
        sndr_dbfs=float(sndr),
        sfdr_dbfs=float(sfdr),
        enob_bits=float((sndr - ENOB_OFFSET_DB) / DB_PER_BIT),
        fundamental_bin=fundamental,
        fundamental_dbfs=float(10 * np.log10(fund)),
        noise_floor_dbfs=float(10 * np.log10(max(np.median(others), floor))),
        spurs=spurs,
    )


def dominant_spurs(report: SndrReport, margin_db: float = 20.0) -> list:
    """Spurs rising more than ``margin_db`` above the median noise floor."""
    return [s for s in report.spurs if s[1] > report.noise_floor_dbfs + margin_db]


def image_frequencies(f_in: float, sample_rate: float, m: int) -> np.ndarray:
    """Interleaving images ``|k fs/m +- f_in|`` folded into ``[0, fs/2]``, k = 1..m-1."""
    out = []
    for k in range(1, m):
        for f in (k * sample_rate / m + f_in, k * sample_rate / m - f_in):
            f = np.mod(f, sample_rate)
            out.append(min(f, sample_rate - f))
    return np.unique(np.round(out, 9))


def log_bins(lo: float = 1e-5, hi: float = 1e-1, per_decade: int = 10) -> np.ndarray:
    n = int(round(np.log10(hi / lo) * per_decade))
    return np.logspace(np.log10(lo), np.log10(hi), n + 1)


def histogram(values, bins=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts over log-spaced BER bins; out-of-range values land in the end bins.

    Returns ``(counts, edges)`` with ``counts.sum() == len(values)``.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("histogram needs at least one value")
    edges = log_bins() if bins is None else np.asarray(bins, dtype=float)
    if np.isscalar(bins) or edges.ndim == 0:
        edges = log_bins(per_decade=int(bins))
    clipped = np.clip(v, edges[0], np.nextafter(edges[-1], -np.inf))
    counts, _ = np.histogram(clipped, edges)
    return counts, edges


def write_rows(path, rows: list[dict], columns: list[str] | None = None):
    """Write dict rows as CSV with a fixed column order (first row's keys by default)."""
    columns = list(rows[0]) if columns is None and rows else (columns or [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                        for x in np.ravel(v))
    return v


def report_row(report: SndrReport, **extra) -> dict:
    """Flat CSV row for an :class:`SndrReport`; spurs are omitted."""
    row = {k: v for k, v in asdict(report).items() if k != "spurs"}
    return {**extra, **row}
