"""Spectral diagnostics linking signal shape to merge-friendliness.

Smooth, periodic series concentrate their spectrum (low entropy, low
distortion) and their neighbouring tokens look alike, which is exactly
when aggressive merging is cheap.  These helpers quantify that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TokenMatrix, partition
from .errors import ParameterError, ShapeError, UndefinedThdError
from .merge import similarity_banded

# harmonic amplitudes below this fraction of the fundamental are treated
# as FFT leakage, not real distortion
_THD_LEAKAGE_FLOOR = 1e-9


def _check_1d(series: np.ndarray) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise ShapeError(f"series must be 1-d, got shape {s.shape}")
    if len(s) < 2:
        raise ShapeError("series must contain at least two samples")
    if not np.isfinite(s).all():
        raise ShapeError("series contains non-finite values")
    return s


def spectral_entropy(series: np.ndarray) -> float:
    """Shannon entropy (nats) of the normalized positive-frequency power.

    The DC bin is excluded, so an affine trendless constant scores 0; so
    does any pure sinusoid landing on a single bin.  Higher values mean
    power spread over many frequencies.
    """
    s = _check_1d(series)
    power = np.abs(np.fft.rfft(s)[1:]) ** 2
    total = power.sum()
    if total == 0.0:
        return 0.0
    p = power / total
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def thd(series: np.ndarray, fundamental_bin: int) -> float:
    """Total harmonic distortion in percent over harmonics 2..5.

    Amplitudes are read at the exact DFT bins h * fundamental_bin; the
    series length must keep the fifth harmonic at or below Nyquist.
    Amplitudes under a 1e-9 relative floor count as spectral leakage:
    leaked harmonics contribute zero (so an exact-bin sinusoid reports
    exactly 0.0), and a fundamental that is itself leakage-level next to
    the spectrum's peak is undefined.
    """
    s = _check_1d(series)
    m = len(s)
    if fundamental_bin < 1:
        raise ParameterError(f"fundamental bin must be >= 1, got {fundamental_bin}")
    if 5 * fundamental_bin > m // 2:
        raise ParameterError(
            f"fifth harmonic of bin {fundamental_bin} exceeds Nyquist for m={m}"
        )
    amp = np.abs(np.fft.rfft(s))
    a1 = amp[fundamental_bin]
    if a1 <= _THD_LEAKAGE_FLOOR * amp[1:].max():
        raise UndefinedThdError(
            f"no real power at fundamental bin {fundamental_bin}; THD undefined"
        )
    harm = amp[[h * fundamental_bin for h in range(2, 6)]]
    harm = np.where(harm / a1 > _THD_LEAKAGE_FLOOR, harm, 0.0)
    return float(100.0 * np.sqrt((harm**2).sum()) / a1)


def gaussian_lowpass(series: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing with a radius-4*sigma truncated kernel.

    The kernel is renormalized to sum to one and the series is padded by
    reflection, so constants pass through unchanged (up to float error).
    sigma = 0 returns the input as-is.
    """
    s = _check_1d(series)
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return s.copy()
    radius = max(1, int(np.ceil(4.0 * sigma)))
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offs / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(s, radius, mode="reflect")
    return np.convolve(padded, kernel, mode="valid")


def redundancy_profile(
    x: TokenMatrix,
    thresholds: Sequence[float],
    k: int = 1,
    metric: str = "cosine",
) -> list[tuple[float, float]]:
    """Fraction of merge candidates at or above each threshold.

    Candidates are each A token's best in-band partner (floor(t/2) of
    them).  thresholds must be strictly increasing; the fractions are
    therefore non-increasing.  Returns (threshold, fraction) pairs.
    """
    taus = [float(v) for v in thresholds]
    if not taus:
        raise ParameterError("at least one threshold is required")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ParameterError("thresholds must be strictly increasing")
    part = partition(x)
    if len(part.a) == 0:
        raise ShapeError("sequence too short for a redundancy profile (t < 2)")
    scores = similarity_banded(x, part.a, part.b, min(k, len(part.a)), metric)
    _, best_s = scores.best_per_a()
    n = len(best_s)
    return [(tau, float((best_s >= tau).sum()) / n) for tau in taus]


@dataclass(frozen=True)
class SignalReport:
    """Per-variate diagnostic bundle, JSON-friendly via to_dict."""

    name: str
    length: int
    entropy: float
    entropy_lowpassed: float
    thd_percent: float | None
    fundamental_bin: int | None
    redundancy: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "length": self.length,
            "entropy": self.entropy,
            "entropy_lowpassed": self.entropy_lowpassed,
            "thd_percent": self.thd_percent,
            "fundamental_bin": self.fundamental_bin,
            "redundancy": [[tau, frac] for tau, frac in self.redundancy],
        }


def dominant_bin(series: np.ndarray) -> int | None:
    """Strongest non-DC bin whose fifth harmonic stays below Nyquist."""
    s = _check_1d(series)
    limit = (len(s) // 2) // 5
    if limit < 1:
        return None
    amp = np.abs(np.fft.rfft(s)[1 : limit + 1])
    if amp.max() == 0.0:
        return None
    return int(np.argmax(amp)) + 1


def analyze_series(
    name: str,
    series: np.ndarray,
    *,
    d: int = 16,
    seed: int = 0,
    k: int = 1,
    metric: str = "cosine",
    sigma: float = 2.0,
    thresholds: Sequence[float] = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99),
) -> SignalReport:
    """Full diagnostic pass over one variate.

    THD uses the dominant low bin when one exists, else reports None.
    Redundancy tokenizes the variate with the seeded timestep lift.
    """
    from .models import tokenize_timestep

    s = _check_1d(series)
    bin_ = dominant_bin(s)
    thd_val: float | None = None
    if bin_ is not None:
        try:
            thd_val = thd(s, bin_)
        except UndefinedThdError:
            thd_val = None
    x = tokenize_timestep(s[:, None], d, seed)
    profile = redundancy_profile(x, thresholds, k=k, metric=metric)
    return SignalReport(
        name=name,
        length=len(s),
        entropy=spectral_entropy(s),
        entropy_lowpassed=spectral_entropy(gaussian_lowpass(s, sigma)),
        thd_percent=thd_val,
        fundamental_bin=bin_,
        redundancy=tuple(profile),
    )
