"""Scikit-learn style wrappers around the restoration operators.

Each transformer accepts either a raw (T, D) array or a
:class:`~sinosr.grids.Sinogram` and returns the same kind, so the
operators compose with sklearn pipelines and the rest of the ecosystem
(``get_params``/``set_params`` come from ``BaseEstimator``).
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .grids import Sinogram
from .nn.srcn import TrainConfig, build_srcn, infer_sinogram, train_srcn
from .sinogram_ops import (
    add_gaussian_noise,
    nn_interpolate,
    subsample_detectors,
)
from .wavelet import DEFAULT_WAVELET, denoise_sinogram

_NOMINAL_DT = 5e-8


def _as_sinogram(x):
    if isinstance(x, Sinogram):
        return x, True
    return Sinogram(np.asarray(x, dtype=np.float64), _NOMINAL_DT), False


def _unwrap(s, was_sinogram):
    return s if was_sinogram else s.data


class DetectorSubsampler(BaseEstimator, TransformerMixin):
    """Keep every ``factor``-th detector column."""

    def __init__(self, factor=2):
        self.factor = factor

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        s, wrapped = _as_sinogram(X)
        return _unwrap(subsample_detectors(s, self.factor), wrapped)


class NearestNeighborUpsampler(BaseEstimator, TransformerMixin):
    """Angular nearest-neighbor upsampling to ``target_columns`` detectors
    (or by ``factor`` when ``target_columns`` is None)."""

    def __init__(self, target_columns=None, factor=2):
        self.target_columns = target_columns
        self.factor = factor

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        s, wrapped = _as_sinogram(X)
        cols = (self.target_columns if self.target_columns is not None
                else s.n_detectors * self.factor)
        return _unwrap(nn_interpolate(s, cols), wrapped)


class GaussianNoiseInjector(BaseEstimator, TransformerMixin):
    """Add white Gaussian noise at a whole-sinogram SNR level."""

    def __init__(self, snr_db=40.0, seed=0):
        self.snr_db = snr_db
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        s, wrapped = _as_sinogram(X)
        return _unwrap(add_gaussian_noise(s, self.snr_db, self.seed), wrapped)


class ModwtDenoiser(BaseEstimator, TransformerMixin):
    """Per-column MODWT denoising with the universal threshold."""

    def __init__(self, wavelet=DEFAULT_WAVELET, levels=None, threshold=None):
        self.wavelet = wavelet
        self.levels = levels
        self.threshold = threshold

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        s, wrapped = _as_sinogram(X)
        out = denoise_sinogram(s, self.wavelet, self.levels, self.threshold)
        return _unwrap(out, wrapped)


class SrcnDenoiser(BaseEstimator, TransformerMixin):
    """Residual-CNN restoration.

    ``fit`` trains on patch pairs: X is an (n, size, size) stack of
    degraded-interpolated patches, y the matching residual patches.
    ``transform`` restores whole sinograms; ``predict`` returns the raw
    residual prediction instead.

    ``bn_momentum`` defaults to 0.9 here (not the engine's 0.99): short
    interactive fits see few batches, and the running statistics must
    converge before ``transform`` can use them.
    """

    def __init__(self, lr=1e-4, epochs=1, batch_size=100, seed=0,
                 val_fraction=0.13, bn_momentum=0.9):
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.val_fraction = val_fraction
        self.bn_momentum = bn_momentum

    def fit(self, X, y):
        if y is None:
            raise ValidationError("SrcnDenoiser.fit requires residual targets")
        cfg = TrainConfig(lr=self.lr, epochs=self.epochs,
                          batch_size=self.batch_size, seed=self.seed,
                          val_fraction=self.val_fraction)
        self.model_ = build_srcn(self.seed, self.bn_momentum)
        self.log_ = train_srcn(self.model_, X, y, cfg)
        return self

    def _ensure_model(self):
        if not hasattr(self, "model_"):
            warnings.warn("SrcnDenoiser used before fit; building a fresh "
                          "initialization", stacklevel=2)
            self.model_ = build_srcn(self.seed, self.bn_momentum)

    def transform(self, X):
        self._ensure_model()
        s, wrapped = _as_sinogram(X)
        _, restored = infer_sinogram(self.model_, s)
        return _unwrap(restored, wrapped)

    def predict(self, X):
        self._ensure_model()
        s, wrapped = _as_sinogram(X)
        residual, _ = infer_sinogram(self.model_, s)
        return _unwrap(residual, wrapped)
