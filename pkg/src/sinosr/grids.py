"""Physical-domain value types and their binary file formats.

Conventions used throughout the package:

* fields are ``values[ix, iy]`` on a square grid centered at ``origin``;
  node ``i`` along an axis sits at ``origin + (i - (n - 1) / 2) * dx``
* sinograms are ``data[time_sample, detector]``
* all persisted floats are little-endian float64
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FileFormatError, ValidationError

SINOGRAM_MAGIC = b"PASG"
FIELD_MAGIC = b"PAFD"
FORMAT_VERSION = 1

# side of the central square that carries phantom content (20.1 mm)
PHANTOM_HALF_EXTENT = 10.05e-3


@dataclass(frozen=True)
class Grid2D:
    """Square-cell grid: ``nx`` x ``ny`` nodes, spacing ``dx`` meters."""

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValidationError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not self.dx > 0:
            raise ValidationError(f"grid spacing must be positive, got {self.dx}")

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dx)

    def x_coords(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) - (self.nx - 1) / 2) * self.dx

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) - (self.ny - 1) / 2) * self.dx

    def meshgrid(self):
        return np.meshgrid(self.x_coords(), self.y_coords(), indexing="ij")

    def region_slices(self, half_extent: float = PHANTOM_HALF_EXTENT):
        """Index slices of the centered square region |coord| <= half_extent."""
        tol = 1e-9 * self.dx
        xs = np.nonzero(np.abs(self.x_coords() - self.origin[0]) <= half_extent + tol)[0]
        ys = np.nonzero(np.abs(self.y_coords() - self.origin[1]) <= half_extent + tol)[0]
        return slice(xs[0], xs[-1] + 1), slice(ys[0], ys[-1] + 1)


@dataclass(frozen=True)
class PressureField:
    """Pressure values (Pa) on a :class:`Grid2D`."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.nx, self.grid.ny):
            raise DimensionError(
                f"field shape {values.shape} does not match grid "
                f"{(self.grid.nx, self.grid.ny)}"
            )
        if not np.isfinite(values).all():
            raise ValidationError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def crop(self, half_extent: float = PHANTOM_HALF_EXTENT) -> "PressureField":
        sx, sy = self.grid.region_slices(half_extent)
        sub = self.values[sx, sy]
        grid = Grid2D(sub.shape[0], sub.shape[1], self.grid.dx, self.grid.origin)
        return PressureField(grid, sub.copy())


@dataclass(frozen=True)
class AcousticMedium:
    """Homogeneous medium: sound speed (m/s) and density (kg/m^3)."""

    sound_speed: float = 1500.0
    density: float = 1000.0

    def __post_init__(self):
        if not self.sound_speed > 0:
            raise ValidationError(f"sound speed must be positive, got {self.sound_speed}")
        if not self.density > 0:
            raise ValidationError(f"density must be positive, got {self.density}")


@dataclass(frozen=True)
class SourceModel:
    """Record of the photoacoustic source semantics.

    The simulation itself uses the equivalent initial-value formulation
    (instantaneous heating, p(0)=p0, u(0)=0), so these fields are
    documentation-only metadata, never solver inputs.
    """

    thermal_expansion: float | None = None  # 1/K
    specific_heat: float | None = None  # J/(kg K)
    heating_description: str = "instantaneous energy deposition at t=0"

    def __post_init__(self):
        if self.thermal_expansion is not None and not self.thermal_expansion > 0:
            raise ValidationError("thermal expansion coefficient must be positive")
        if self.specific_heat is not None and not self.specific_heat > 0:
            raise ValidationError("specific heat must be positive")


@dataclass(frozen=True)
class TransducerResponse:
    """Gaussian band-pass amplitude response of the detectors."""

    center_frequency: float = 2.25e6
    fractional_bandwidth: float = 0.7
    enabled: bool = True

    def __post_init__(self):
        if not self.center_frequency > 0:
            raise ValidationError("center frequency must be positive")
        if not 0 < self.fractional_bandwidth < 2:
            raise ValidationError(
                f"fractional bandwidth must be in (0, 2), got {self.fractional_bandwidth}"
            )


@dataclass(frozen=True)
class DetectorArray:
    """Equiangular point detectors on a circle.

    Detector ``i`` sits at angle ``phase + 2*pi*i/count``.
    """

    count: int
    radius: float
    center: tuple[float, float] = (0.0, 0.0)
    phase: float = 0.0
    response: TransducerResponse = field(default_factory=TransducerResponse)

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError(f"detector count must be >= 1, got {self.count}")
        if not self.radius > 0:
            raise ValidationError(f"detector radius must be positive, got {self.radius}")

    @property
    def angles(self) -> np.ndarray:
        return self.phase + 2.0 * np.pi * np.arange(self.count) / self.count

    @property
    def positions(self) -> np.ndarray:
        a = self.angles
        return np.stack(
            [self.center[0] + self.radius * np.cos(a),
             self.center[1] + self.radius * np.sin(a)],
            axis=1,
        )

    def thin(self, factor: int) -> "DetectorArray":
        """Keep every ``factor``-th detector (same circle, same phase)."""
        if self.count % factor != 0:
            raise DimensionError(
                f"detector count {self.count} not divisible by factor {factor}"
            )
        return DetectorArray(self.count // factor, self.radius, self.center,
                             self.phase, self.response)


@dataclass(frozen=True)
class Sinogram:
    """Boundary pressure record: rows are time samples, columns detectors."""

    data: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"sinogram must be a T x D matrix, got shape {data.shape}")
        if not self.dt > 0:
            raise ValidationError(f"sample interval must be positive, got {self.dt}")
        if not np.isfinite(data).all():
            raise ValidationError("sinogram contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_detectors(self) -> int:
        return self.data.shape[1]

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)


# ---------------------------------------------------------------------------
# binary formats


def _read_exact(fh, n, offset, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FileFormatError(f"truncated file while reading {what}", offset + len(buf))
    return buf


def write_sinogram(s: Sinogram, path) -> None:
    """Write the "PASG" format: magic, u32 version, u32 T, u32 D, f64 dt,
    f64 t0, then T*D little-endian f64 values, time-major."""
    header = SINOGRAM_MAGIC + struct.pack(
        "<IIIdd", FORMAT_VERSION, s.n_samples, s.n_detectors, s.dt, s.t0
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(s.data, dtype="<f8").tobytes())


def read_sinogram(path) -> Sinogram:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, 0, "magic")
        if magic != SINOGRAM_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}, expected {SINOGRAM_MAGIC!r}", 0)
        version, = struct.unpack("<I", _read_exact(fh, 4, 4, "version"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"unsupported version {version}", 4)
        t, d = struct.unpack("<II", _read_exact(fh, 8, 8, "dimensions"))
        dt, t0 = struct.unpack("<dd", _read_exact(fh, 16, 16, "time metadata"))
        payload = _read_exact(fh, 8 * t * d, 32, "payload")
    data = np.frombuffer(payload, dtype="<f8").reshape(t, d)
    return Sinogram(data.copy(), dt, t0)


def write_field(f: PressureField, path) -> None:
    """Write the "PAFD" format: magic, u32 version, u32 nx, u32 ny, f64 dx,
    f64 origin_x, f64 origin_y, then nx*ny little-endian f64, row-major."""
    if not np.isfinite(f.values).all():
        raise ValidationError("refusing to write a field with non-finite values")
    header = FIELD_MAGIC + struct.pack(
        "<IIIddd", FORMAT_VERSION, f.grid.nx, f.grid.ny, f.grid.dx,
        f.grid.origin[0], f.grid.origin[1]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path) -> PressureField:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, 0, "magic")
        if magic != FIELD_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}, expected {FIELD_MAGIC!r}", 0)
        version, = struct.unpack("<I", _read_exact(fh, 4, 4, "version"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"unsupported version {version}", 4)
        nx, ny = struct.unpack("<II", _read_exact(fh, 8, 8, "dimensions"))
        dx, ox, oy = struct.unpack("<ddd", _read_exact(fh, 24, 16, "grid metadata"))
        payload = _read_exact(fh, 8 * nx * ny, 40, "payload")
    values = np.frombuffer(payload, dtype="<f8").reshape(nx, ny)
    return PressureField(Grid2D(nx, ny, dx, (ox, oy)), values.copy())


# ---------------------------------------------------------------------------
# portable graymap (P5), for previews and phantom import


def write_pgm(path, values: np.ndarray, bits: int = 8) -> None:
    """Min-max normalized binary graymap. A constant image maps to all zeros.

    Image row 0 is the top of the picture; for fields use
    :func:`field_to_image` first so that +y points up.
    """
    if bits not in (8, 16):
        raise ValidationError(f"graymap depth must be 8 or 16 bits, got {bits}")
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValidationError("refusing to export non-finite values to a graymap")
    lo, hi = values.min(), values.max()
    maxval = (1 << bits) - 1
    if hi > lo:
        scaled = np.round((values - lo) / (hi - lo) * maxval)
    else:
        scaled = np.zeros_like(values)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode())
        if bits == 8:
            fh.write(scaled.astype(np.uint8).tobytes())
        else:
            fh.write(scaled.astype(">u2").tobytes())  # 2-byte graymaps are MSB first


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) graymap into a (rows, cols) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise FileFormatError(f"not a binary graymap (starts with {raw[:2]!r})", 0)
    # header: P5, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise FileFormatError("truncated graymap header", pos)
        ch = raw[pos:pos + 1]
        if ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FileFormatError("non-numeric graymap header", 2) from None
    if maxval > 255:
        raise FileFormatError(f"only 8-bit graymaps accepted, maxval={maxval}", 2)
    pos += 1  # single whitespace byte after maxval
    pixels = raw[pos:pos + width * height]
    if len(pixels) != width * height:
        raise FileFormatError("truncated graymap payload", pos + len(pixels))
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def field_to_image(values: np.ndarray) -> np.ndarray:
    """Field ``values[ix, iy]`` to image rows top-down (+y up): row r = iy
    ``ny-1-r``, column c = ix ``c``."""
    return values.T[::-1, :]


def image_to_field(image: np.ndarray) -> np.ndarray:
    """Inverse of :func:`field_to_image`."""
    return image[::-1, :].T
