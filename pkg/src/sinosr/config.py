"""Flat key-value pipeline configuration with file parsing and CLI
overrides. Every experiment default lives here, never hard-coded in a
stage."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class PipelineConfig:
    # geometry
    forward_nx: int = 501
    forward_dx: float = 1e-4
    recon_nx: int = 251
    recon_dx: float = 2e-4
    detector_count: int = 100
    detector_radius: float = 22e-3
    # medium
    sound_speed: float = 1500.0
    density: float = 1000.0
    # transducer
    transducer_center_frequency: float = 2.25e6
    transducer_fractional_bandwidth: float = 0.7
    transducer_enabled: bool = True
    # solver
    time_steps: int = 512
    dt: float = 5e-8
    pml_width: int = 20
    pml_attenuation: float = 2.0
    smooth_p0: bool = True
    detector_sampling: str = "spectral"
    # degradation
    subsample_factor: int = 2
    snr_levels: tuple[float, ...] = (20.0, 40.0, 60.0)
    # dataset
    train_phantoms: int = 40
    eval_phantoms: int = 5
    patches_per_sinogram: int = 50
    patch_size: int = 32
    master_seed: int = 20200806
    # radial extent of generated phantom content (m); the full 20.1 mm
    # region corresponds to 10.05e-3
    phantom_radius: float = 10.05e-3
    # wavelet baseline
    wavelet: str = "sym4"
    wavelet_levels: int = 5
    # training
    lr: float = 1e-4
    epochs: int = 6
    batch_size: int = 100
    val_fraction: float = 0.13
    bn_momentum: float = 0.99
    # output
    outdir: str = "runs/experiment"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> "PipelineConfig":
        """Check every module precondition up front; names the bad key."""
        if self.forward_nx < 3:
            raise ConfigError("forward_nx", "grid must be at least 3 nodes")
        if self.recon_nx < 3:
            raise ConfigError("recon_nx", "grid must be at least 3 nodes")
        if not self.forward_dx > 0:
            raise ConfigError("forward_dx", "grid spacing must be positive")
        if not self.recon_dx > 0:
            raise ConfigError("recon_dx", "grid spacing must be positive")
        if self.detector_count < 1:
            raise ConfigError("detector_count", "need at least one detector")
        if self.detector_count % self.subsample_factor != 0:
            raise ConfigError(
                "subsample_factor",
                f"must divide detector_count={self.detector_count}",
            )
        for key in ("sound_speed", "density", "dt",
                    "transducer_center_frequency", "detector_radius"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if not 0 < self.transducer_fractional_bandwidth < 2:
            raise ConfigError("transducer_fractional_bandwidth",
                              "must be in (0, 2)")
        for key, dx in (("forward_dx", self.forward_dx),
                        ("recon_dx", self.recon_dx)):
            cfl = self.sound_speed * self.dt / dx
            if cfl > 1.0:
                raise ConfigError(key, f"CFL number c*dt/dx = {cfl:.3f} exceeds 1")
        for key, nx, dx in (("forward_nx", self.forward_nx, self.forward_dx),
                            ("recon_nx", self.recon_nx, self.recon_dx)):
            interior_half = (nx - 1) / 2 * dx
            if self.detector_radius >= interior_half - dx:
                raise ConfigError(
                    key, f"detector ring (r={self.detector_radius}) does not "
                         f"fit the grid interior (half extent {interior_half:.4f})")
        if self.pml_width < 10:
            raise ConfigError("pml_width", "must be >= 10 grid points")
        if self.time_steps < 1:
            raise ConfigError("time_steps", "must be >= 1")
        if not self.snr_levels:
            raise ConfigError("snr_levels", "need at least one SNR level")
        if self.patch_size > self.time_steps:
            raise ConfigError("patch_size", "exceeds the time-sample count")
        if self.patch_size > self.detector_count:
            raise ConfigError("patch_size", "exceeds the detector count")
        if self.patches_per_sinogram < 1:
            raise ConfigError("patches_per_sinogram", "must be >= 1")
        if self.train_phantoms < 1:
            raise ConfigError("train_phantoms", "must be >= 1")
        if self.eval_phantoms < 1:
            raise ConfigError("eval_phantoms", "must be >= 1")
        if self.detector_sampling not in ("spectral", "nearest"):
            raise ConfigError("detector_sampling", "must be spectral or nearest")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction", "must be in [0, 1)")
        if not 0 < self.bn_momentum < 1:
            raise ConfigError("bn_momentum", "must be in (0, 1)")
        if not 1e-3 <= self.phantom_radius <= 10.05e-3:
            raise ConfigError("phantom_radius",
                              "must be in [1 mm, 10.05 mm]")
        return self


def _coerce(key: str, text: str, target):
    text = text.strip()
    try:
        if target is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
        if target is str:
            return text
        # tuple of floats, comma separated
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(key, f"cannot parse value {text!r}") from None


def _field_types():
    hints = {
        f.name: f.type for f in fields(PipelineConfig)
    }
    mapping = {}
    for name, hint in hints.items():
        if hint in ("int",):
            mapping[name] = int
        elif hint in ("float",):
            mapping[name] = float
        elif hint in ("bool",):
            mapping[name] = bool
        elif hint in ("str",):
            mapping[name] = str
        else:
            mapping[name] = tuple
    return mapping


_TYPES = _field_types()


def apply_overrides(cfg: PipelineConfig, pairs) -> PipelineConfig:
    """Apply ``key=value`` strings on top of a config."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "overrides take the form key=value")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(key, "unknown configuration key")
        updates[key] = _coerce(key, value, _TYPES[key])
    return replace(cfg, **updates)


def load_config(path) -> PipelineConfig:
    """Parse a flat ``key = value`` text file ('#' starts a comment)."""
    pairs = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(line, "expected key = value")
            pairs.append(line)
    return apply_overrides(PipelineConfig(), pairs)


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
