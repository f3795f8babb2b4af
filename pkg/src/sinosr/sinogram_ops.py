"""Sinogram degradation and restoration plumbing: noise injection, detector
subsampling, nearest-neighbor angular upsampling, residuals, and patch
extraction for training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .grids import Sinogram

_MASK64 = (1 << 64) - 1


def mix_seed(master: int, index: int) -> int:
    """Derive an independent per-stage seed from a master seed.

    Splitmix64 finalizer over master + (index+1) * golden-gamma; documented
    so any stage can be rerun in isolation.
    """
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def add_gaussian_noise(s: Sinogram, snr_db: float, seed: int) -> Sinogram:
    """Add i.i.d. zero-mean Gaussian noise so that the whole-sinogram SNR is
    ``snr_db``: noise variance = mean(s^2) * 10^(-snr_db/10)."""
    signal_power = float(np.mean(s.data**2))
    if signal_power == 0.0:
        raise ValidationError("SNR is undefined for an all-zero sinogram")
    sigma = np.sqrt(signal_power * 10.0 ** (-snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noisy = s.data + rng.normal(0.0, sigma, size=s.data.shape)
    return Sinogram(noisy, s.dt, s.t0)


def subsample_detectors(s: Sinogram, factor: int) -> Sinogram:
    """Keep detector columns 0, factor, 2*factor, ..."""
    if factor < 1:
        raise ValidationError(f"subsampling factor must be >= 1, got {factor}")
    if s.n_detectors % factor != 0:
        raise DimensionError(
            f"detector count {s.n_detectors} not divisible by factor {factor}"
        )
    return Sinogram(s.data[:, ::factor].copy(), s.dt, s.t0)


def nn_interpolate(s: Sinogram, target_cols: int) -> Sinogram:
    """Angular nearest-neighbor upsampling between equiangular detector sets.

    Output column j copies the input column whose angle 2*pi*i/D_in is
    nearest to 2*pi*j/D_out; exact ties resolve to the lower angle, so
    doubling duplicates each column: out[:, 2i] = out[:, 2i+1] = in[:, i].
    """
    d_in = s.n_detectors
    if target_cols < d_in:
        raise DimensionError(
            f"target column count {target_cols} is below the input's {d_in}"
        )
    source = np.empty(target_cols, dtype=int)
    for j in range(target_cols):
        num = j * d_in  # input index as the fraction num / target_cols
        i = num // target_cols
        rem = num - i * target_cols
        if 2 * rem > target_cols:
            i += 1
        source[j] = i % d_in
    return Sinogram(s.data[:, source].copy(), s.dt, s.t0)


def _check_compatible(a: Sinogram, b: Sinogram):
    if a.data.shape != b.data.shape:
        raise DimensionError(
            f"sinogram shapes differ: {a.data.shape} vs {b.data.shape}"
        )
    if a.dt != b.dt:
        raise ValidationError(f"sample intervals differ: {a.dt} vs {b.dt}")


def compute_residual(s_in: Sinogram, s_f: Sinogram) -> Sinogram:
    """Residual target for training: degraded-interpolated minus clean."""
    _check_compatible(s_in, s_f)
    return Sinogram(s_in.data - s_f.data, s_in.dt, s_in.t0)


def apply_restoration(t_in: Sinogram, t_r: Sinogram) -> Sinogram:
    """Subtract a predicted residual from the degraded-interpolated input."""
    _check_compatible(t_in, t_r)
    return Sinogram(t_in.data - t_r.data, t_in.dt, t_in.t0)


@dataclass(frozen=True)
class PatchPair:
    """Co-located input/target patches cut from a sinogram pair."""

    input_patch: np.ndarray
    target_patch: np.ndarray
    source_id: str
    row_offset: int
    col_offset: int


def extract_patches(s_in: Sinogram, s_r: Sinogram, n: int, size: int,
                    seed: int, source_id: str = "") -> list[PatchPair]:
    """Cut ``n`` random size x size patch pairs at identical offsets,
    uniformly with replacement."""
    _check_compatible(s_in, s_r)
    t, d = s_in.data.shape
    if size > t or size > d:
        raise DimensionError(
            f"patch size {size} exceeds sinogram dimensions {t}x{d}"
        )
    if n < 1:
        raise ValidationError(f"patch count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, t - size + 1, size=n)
    cols = rng.integers(0, d - size + 1, size=n)
    pairs = []
    for r, c in zip(rows, cols):
        pairs.append(PatchPair(
            input_patch=s_in.data[r:r + size, c:c + size].copy(),
            target_patch=s_r.data[r:r + size, c:c + size].copy(),
            source_id=source_id,
            row_offset=int(r),
            col_offset=int(c),
        ))
    return pairs
