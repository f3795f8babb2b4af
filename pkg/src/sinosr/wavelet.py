"""Maximal-overlap discrete wavelet transform (MODWT) denoising.

The MODWT is non-decimated: every level keeps N coefficients for a length-N
signal, any N is allowed (no dyadic padding), circular shifts commute with
the transform, and the energy identity ||x||^2 = sum_j ||W_j||^2 + ||V_J||^2
holds. Level j filters are the base filters upsampled by 2^(j-1) and scaled
by 1/sqrt(2) per level; analysis uses

    W_j[t] = sum_l h_l V_{j-1}[(t - 2^(j-1) l) mod N]

and synthesis runs the adjoint recursion.

Denoising soft-thresholds every detail level at the universal threshold
sigma_hat * sqrt(2 ln N) with sigma_hat = median(|W_1|) / 0.6745.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .grids import Sinogram

# scaling (low-pass) filters; wavelet filters follow by quadrature mirror
WAVELETS = {
    "haar": (0.7071067811865476, 0.7071067811865476),
    "db4": (
        -0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
        -0.18703481171888114, -0.02798376941698385, 0.6308807679295904,
        0.7148465705525415, 0.23037781330885523,
    ),
    "sym4": (
        -0.07576571478927333, -0.02963552764599851, 0.49761866763201545,
        0.8037387518059161, 0.29785779560527736, -0.09921954357684722,
        -0.012603967262037833, 0.0322231006040427,
    ),
}

DEFAULT_WAVELET = "sym4"
MAX_LEVELS = 5


@dataclass(frozen=True)
class ModwtCoeffs:
    """details[j] is W_{j+1}; approx is V_J. All length N (axis 0)."""

    details: tuple[np.ndarray, ...]
    approx: np.ndarray
    wavelet_id: str

    @property
    def levels(self) -> int:
        return len(self.details)


def _filters(wavelet_id):
    if wavelet_id not in WAVELETS:
        raise ValidationError(
            f"unknown wavelet {wavelet_id!r}; choose from {sorted(WAVELETS)}"
        )
    g = np.asarray(WAVELETS[wavelet_id], dtype=np.float64)
    h = ((-1.0) ** np.arange(len(g))) * g[::-1]
    # MODWT rescaling
    return g / math.sqrt(2.0), h / math.sqrt(2.0)


def default_levels(n: int) -> int:
    return min(MAX_LEVELS, int(math.floor(math.log2(n))))


def _circ_filter(v, filt, stride):
    """sum_l filt[l] * v[(t - stride*l) mod N] along axis 0."""
    out = np.zeros_like(v)
    for l, coef in enumerate(filt):
        out += coef * np.roll(v, stride * l, axis=0)
    return out


def _circ_filter_adjoint(v, filt, stride):
    """sum_l filt[l] * v[(t + stride*l) mod N] along axis 0."""
    out = np.zeros_like(v)
    for l, coef in enumerate(filt):
        out += coef * np.roll(v, -stride * l, axis=0)
    return out


def modwt(x, wavelet_id: str = DEFAULT_WAVELET, levels: int | None = None) -> ModwtCoeffs:
    """Decompose a length-N signal (or the columns of an N x D matrix)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    g, h = _filters(wavelet_id)
    if n < len(g):
        raise DimensionError(f"signal length {n} is below the filter length {len(g)}")
    if levels is None:
        levels = default_levels(n)
    if levels < 1 or levels > math.floor(math.log2(n)):
        raise ValidationError(
            f"levels must be in [1, floor(log2 N)] = [1, {int(math.log2(n))}], "
            f"got {levels}"
        )
    details = []
    v = x
    for j in range(1, levels + 1):
        stride = 2 ** (j - 1)
        details.append(_circ_filter(v, h, stride))
        v = _circ_filter(v, g, stride)
    return ModwtCoeffs(tuple(details), v, wavelet_id)


def imodwt(c: ModwtCoeffs) -> np.ndarray:
    """Perfect-reconstruction inverse."""
    n = c.approx.shape[0]
    for w in c.details:
        if w.shape != c.approx.shape:
            raise DimensionError("inconsistent coefficient lengths")
    g, h = _filters(c.wavelet_id)
    v = c.approx
    for j in range(c.levels, 0, -1):
        stride = 2 ** (j - 1)
        v = (_circ_filter_adjoint(c.details[j - 1], h, stride)
             + _circ_filter_adjoint(v, g, stride))
    return v


def universal_threshold(c: ModwtCoeffs) -> float:
    """sigma_hat * sqrt(2 ln N), sigma_hat = median(|W_1|) / 0.6745."""
    w1 = c.details[0]
    n = w1.shape[0]
    if n < 8:
        raise ValidationError(f"universal threshold needs N >= 8, got {n}")
    sigma = float(np.median(np.abs(w1))) / 0.6745
    return sigma * math.sqrt(2.0 * math.log(n))


def _soft(w, lam):
    return np.sign(w) * np.maximum(np.abs(w) - lam, 0.0)


def denoise_signal(x, wavelet_id: str = DEFAULT_WAVELET,
                   levels: int | None = None,
                   threshold: float | None = None) -> np.ndarray:
    """Soft-threshold all detail levels at the universal threshold (or an
    explicit override), keep the approximation, reconstruct."""
    c = modwt(x, wavelet_id, levels)
    lam = universal_threshold(c) if threshold is None else float(threshold)
    thresholded = ModwtCoeffs(
        tuple(_soft(w, lam) for w in c.details), c.approx, c.wavelet_id
    )
    return imodwt(thresholded)


def denoise_sinogram(s: Sinogram, wavelet_id: str = DEFAULT_WAVELET,
                     levels: int | None = None,
                     threshold: float | None = None) -> Sinogram:
    """Denoise every detector column independently (per-column thresholds)."""
    if s.n_samples < 8:
        raise ValidationError("sinogram too short to denoise (T < 8)")
    c = modwt(s.data, wavelet_id, levels)
    if threshold is None:
        n = s.n_samples
        sigma = np.median(np.abs(c.details[0]), axis=0) / 0.6745
        lam = sigma * math.sqrt(2.0 * math.log(n))  # one threshold per column
    else:
        lam = float(threshold)
    thresholded = ModwtCoeffs(
        tuple(_soft(w, lam) for w in c.details), c.approx, c.wavelet_id
    )
    return Sinogram(imodwt(thresholded), s.dt, s.t0)
