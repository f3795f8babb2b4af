"""Figures of merit (RMSE, PSNR, measured SNR) and the CSV report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .grids import PressureField, Sinogram

CSV_HEADER = "method,snr_db,rmse,psnr_db"


def _values(x) -> np.ndarray:
    if isinstance(x, PressureField):
        return x.values
    if isinstance(x, Sinogram):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _pair(target, recon):
    t = _values(target)
    r = _values(recon)
    if t.shape != r.shape:
        raise DimensionError(f"shape mismatch: {t.shape} vs {r.shape}")
    return t, r


def rmse(target, recon) -> float:
    """Root-mean-square error over all pixels."""
    t, r = _pair(target, recon)
    return float(np.sqrt(np.sum((t - r) ** 2) / t.size))


def psnr(target, recon) -> float:
    """10 log10(peak^2 / MSE) with peak = max(target).

    Returns +inf when the images are identical; an all-zero (or negative
    peak) target has no defined peak value and raises.
    """
    t, r = _pair(target, recon)
    peak = float(t.max())
    if peak <= 0.0:
        raise ValidationError("PSNR peak value undefined: target maximum is <= 0")
    mse = float(np.mean((t - r) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def measured_snr(clean, noisy) -> float:
    """10 log10(mean(clean^2) / mean((noisy - clean)^2))."""
    c, n = _pair(clean, noisy)
    signal_power = float(np.mean(c**2))
    if signal_power == 0.0:
        raise ValidationError("measured SNR undefined for an all-zero clean signal")
    noise_power = float(np.mean((n - c) ** 2))
    if noise_power == 0.0:
        return math.inf
    return 10.0 * math.log10(signal_power / noise_power)


@dataclass
class MetricsReport:
    """Rows of (method, snr_db, rmse, psnr_db), keyed uniquely."""

    reference: str = ""
    rows: list[tuple[str, float, float, float]] = field(default_factory=list)

    def add(self, method: str, snr_db: float, rmse_value: float, psnr_db: float):
        if rmse_value < 0:
            raise ValidationError("rmse must be non-negative")
        if any(m == method and s == snr_db for m, s, _, _ in self.rows):
            raise ValidationError(f"duplicate report row ({method}, {snr_db})")
        self.rows.append((method, float(snr_db), float(rmse_value), float(psnr_db)))

    def get(self, method: str, snr_db: float):
        for m, s, r, p in self.rows:
            if m == method and s == snr_db:
                return r, p
        raise KeyError((method, snr_db))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for m, s, r, p in self.rows:
                fh.write(f"{m},{s!r},{r!r},{p!r}\n")

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        report = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValidationError(f"unexpected CSV header {header!r}")
            for line in fh:
                m, s, r, p = line.strip().split(",")
                report.add(m, float(s), float(r), float(p))
        return report
