"""Numerical phantoms: disks, Derenzo sector patterns, branching vessel
trees, and grayscale-image import.

All generators produce unipolar fields (values exactly 0 or ``amplitude``)
confined to the central 20.1 mm x 20.1 mm phantom region, and are pure
functions of (spec, grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError
from .grids import PHANTOM_HALF_EXTENT, Grid2D, PressureField, image_to_field, read_pgm

DEFAULT_AMPLITUDE = 1000.0  # Pa

DERENZO_RADII = (1.2e-3, 1.0e-3, 0.8e-3, 0.6e-3, 0.45e-3, 0.3e-3)


@dataclass(frozen=True)
class DiskSpec:
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 2.0e-3
    amplitude: float = DEFAULT_AMPLITUDE


@dataclass(frozen=True)
class DerenzoSpec:
    """Six 60-degree sectors of circles; spacing is twice the diameter.

    ``outer_radius`` bounds how far the sectors extend from the center
    (compact variants keep the sources well inside the detector ring's
    angular sampling limit).
    """

    radii: tuple[float, ...] = DERENZO_RADII
    rotation: float = 0.0
    inner_radius: float = 2.5e-3
    outer_radius: float = PHANTOM_HALF_EXTENT
    amplitude: float = DEFAULT_AMPLITUDE


@dataclass(frozen=True)
class VesselSpec:
    """Seeded biased random walk with branching.

    The walk lives in physical units (0.1 mm steps, widths 0.2-0.6 mm,
    i.e. 2-6 pixels on the reference 0.1 mm grid) so the same spec draws
    the same vasculature on any grid. ``branch_budget`` bounds the total
    number of spawned branches; without it the 0.1/step branching rate
    compounds exponentially and floods the region.
    """

    seed: int = 0
    amplitude: float = DEFAULT_AMPLITUDE
    n_roots: int = 3
    root_steps: int = 150
    step_length: float = 1e-4
    min_width: float = 2e-4
    max_width: float = 6e-4
    branch_probability: float = 0.1
    branch_budget: int = 8
    max_generations: int = 3
    turn_sigma: float = 0.16
    max_radius: float | None = None  # radial confinement; None = full region


@dataclass(frozen=True)
class ImageImportSpec:
    path: str = ""
    threshold: int = 128
    amplitude: float = DEFAULT_AMPLITUDE


PhantomSpec = DiskSpec | DerenzoSpec | VesselSpec | ImageImportSpec


def _empty(grid: Grid2D) -> np.ndarray:
    return np.zeros((grid.nx, grid.ny))


def _rasterize_circle(out, grid, cx, cy, radius, amplitude):
    """Pixel belongs to the circle iff its center is inside; a positive-radius
    circle always lights the pixel nearest its center."""
    xs = grid.x_coords()
    ys = grid.y_coords()
    inside = (xs[:, None] - cx) ** 2 + (ys[None, :] - cy) ** 2 <= radius**2
    out[inside] = amplitude
    if radius > 0:
        ix = int(np.argmin(np.abs(xs - cx)))
        iy = int(np.argmin(np.abs(ys - cy)))
        out[ix, iy] = amplitude


def make_disk(center, radius, amplitude, grid: Grid2D) -> PressureField:
    """Uniform disk. The disk must fit inside the phantom region."""
    if radius < 0:
        raise ValidationError(f"disk radius must be non-negative, got {radius}")
    if not amplitude > 0:
        raise ValidationError(f"amplitude must be positive, got {amplitude}")
    cx, cy = center
    half = PHANTOM_HALF_EXTENT
    if abs(cx) + radius > half or abs(cy) + radius > half:
        raise GeometryError(
            f"disk (center {center}, radius {radius}) exceeds the "
            f"{2 * half * 1e3:.1f} mm phantom region"
        )
    out = _empty(grid)
    if radius > 0:
        _rasterize_circle(out, grid, grid.origin[0] + cx, grid.origin[1] + cy,
                          radius, amplitude)
    return PressureField(grid, out)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def derenzo_circle_layout(spec: DerenzoSpec, dx: float | None = None):
    """Circle centers and radii for the sector pattern, in meters relative
    to the phantom center. Returned as a list of (x, y, radius).

    When ``dx`` is given, centers carry a deterministic sub-pixel dither
    (golden-ratio sequence, at most dx/2 per axis). The nominal spacings are
    exact integer pixel multiples, so without the dither the rasterization
    error of every circle in a sector is coherent and the total lit-pixel
    count drifts by >1% under rotation.
    """
    radii = tuple(spec.radii)
    if len(radii) != 6:
        raise ValidationError(f"expected 6 sector radii, got {len(radii)}")
    if any(not r > 0 for r in radii):
        raise ValidationError("sector radii must be positive")
    if not all(radii[i] > radii[i + 1] for i in range(5)):
        raise ValidationError("sector radii must be strictly decreasing")
    half = min(spec.outer_radius, PHANTOM_HALF_EXTENT)
    largest = radii[0]
    if spec.inner_radius + 2 * largest > half:
        raise GeometryError("largest sector circles cannot fit the phantom region")

    dither = dx / 2 if dx else 0.0
    wedge = math.pi / 6  # half-angle of each 60 degree sector
    circles = []
    for sector, r in enumerate(radii):
        spacing = 4.0 * r  # center-to-center = 2 x diameter
        theta = spec.rotation + sector * math.pi / 3 + wedge  # sector center line
        ct, st = math.cos(theta), math.sin(theta)
        row = 0
        while True:
            d = spec.inner_radius + row * spacing * math.sqrt(3) / 2
            if d + r > half - r - dither:
                break
            for m in range(row + 1):
                t = (m - row / 2) * spacing
                hyp = math.hypot(d, t)
                if hyp + r > half - r - dither:
                    continue
                # circle must sit fully inside the wedge
                if abs(math.atan2(t, d)) + math.asin(min(1.0, r / hyp)) > wedge:
                    continue
                x = d * ct - t * st
                y = d * st + t * ct
                if dither:
                    i = len(circles)
                    x += ((i * _GOLDEN) % 1.0 - 0.5) * dx
                    y += ((i * _GOLDEN * _GOLDEN) % 1.0 - 0.5) * dx
                circles.append((x, y, r))
            row += 1
    return circles


def make_derenzo(spec: DerenzoSpec, grid: Grid2D) -> PressureField:
    if not spec.amplitude > 0:
        raise ValidationError("amplitude must be positive")
    out = _empty(grid)
    for x, y, r in derenzo_circle_layout(spec, grid.dx):
        _rasterize_circle(out, grid, grid.origin[0] + x, grid.origin[1] + y,
                          r, spec.amplitude)
    return PressureField(grid, out)


def make_vessel(spec: VesselSpec, grid: Grid2D) -> PressureField:
    """Branching curvilinear structures painted on the phantom region."""
    if not spec.amplitude > 0:
        raise ValidationError("amplitude must be positive")
    rng = np.random.default_rng(spec.seed)
    sx, sy = grid.region_slices()
    nrx = sx.stop - sx.start
    nry = sy.stop - sy.start
    canvas = np.zeros((nrx, nry), dtype=bool)
    dx = grid.dx
    half = PHANTOM_HALF_EXTENT

    # offsets reused to stamp a disk of a given pixel radius, cached
    stamp_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def stamp(x, y, width):
        r = max(1, int(round(width / 2 / dx)))
        if r not in stamp_cache:
            o = np.arange(-r, r + 1)
            ox, oy = np.meshgrid(o, o, indexing="ij")
            keep = ox**2 + oy**2 <= r**2
            stamp_cache[r] = (ox[keep], oy[keep])
        ox, oy = stamp_cache[r]
        cx = int(round(x / dx + (nrx - 1) / 2))
        cy = int(round(y / dx + (nry - 1) / 2))
        ix = np.clip(cx + ox, 0, nrx - 1)
        iy = np.clip(cy + oy, 0, nry - 1)
        canvas[ix, iy] = True

    # walk in physical units; branches processed in creation order
    reach = min(spec.max_radius or half, half)
    walks = []
    for _ in range(spec.n_roots):
        pos = rng.uniform(-0.35, 0.35, size=2) * 2 * reach
        direction = rng.uniform(0.0, 2.0 * math.pi)
        width = rng.uniform(0.7 * spec.max_width, spec.max_width)
        walks.append((pos, direction, width, 0, spec.root_steps))

    budget = spec.branch_budget
    margin = half - spec.max_width
    radial_bound = reach - spec.max_width if spec.max_radius else None
    qi = 0
    while qi < len(walks):
        pos, direction, width, gen, steps = walks[qi]
        qi += 1
        x, y = pos
        for _ in range(steps):
            direction += rng.normal(0.0, spec.turn_sigma)
            x += spec.step_length * math.cos(direction)
            y += spec.step_length * math.sin(direction)
            if abs(x) > margin or abs(y) > margin:
                break
            if radial_bound is not None and math.hypot(x, y) > radial_bound:
                break
            stamp(x, y, width)
            if (gen < spec.max_generations and budget > 0
                    and rng.uniform() < spec.branch_probability):
                budget -= 1
                sign = 1.0 if rng.uniform() < 0.5 else -1.0
                child_dir = direction + sign * rng.uniform(0.5, 1.0)
                child_w = max(spec.min_width, width * 0.72)
                walks.append((np.array([x, y]), child_dir, child_w,
                              gen + 1, max(20, int(steps * 0.6))))

    out = _empty(grid)
    out[sx, sy] = np.where(canvas, spec.amplitude, 0.0)
    return PressureField(grid, out)


def import_image(path, threshold, amplitude, grid: Grid2D) -> PressureField:
    """Binarize an 8-bit graymap and place it on the phantom region using
    nearest-neighbor resampling."""
    if not amplitude > 0:
        raise ValidationError("amplitude must be positive")
    image = read_pgm(path)
    region = image_to_field(image)  # (nx_img, ny_img), +y up
    sx, sy = grid.region_slices()
    nrx = sx.stop - sx.start
    nry = sy.stop - sy.start
    src_x = np.minimum((np.arange(nrx) + 0.5) * region.shape[0] // nrx,
                       region.shape[0] - 1)
    src_y = np.minimum((np.arange(nry) + 0.5) * region.shape[1] // nry,
                       region.shape[1] - 1)
    resampled = region[np.ix_(src_x.astype(int), src_y.astype(int))]
    out = _empty(grid)
    out[sx, sy] = np.where(resampled >= threshold, amplitude, 0.0)
    return PressureField(grid, out)


def make_phantom(spec: PhantomSpec, grid: Grid2D) -> PressureField:
    if isinstance(spec, DiskSpec):
        return make_disk(spec.center, spec.radius, spec.amplitude, grid)
    if isinstance(spec, DerenzoSpec):
        return make_derenzo(spec, grid)
    if isinstance(spec, VesselSpec):
        return make_vessel(spec, grid)
    if isinstance(spec, ImageImportSpec):
        return import_image(spec.path, spec.threshold, spec.amplitude, grid)
    raise ValidationError(f"unknown phantom spec {type(spec).__name__}")
