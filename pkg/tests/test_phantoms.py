import numpy as np
import pytest

from sinosr.errors import GeometryError, ValidationError
from sinosr.grids import Grid2D, write_pgm
from sinosr.phantoms import (
    DerenzoSpec,
    DiskSpec,
    ImageImportSpec,
    VesselSpec,
    derenzo_circle_layout,
    import_image,
    make_derenzo,
    make_disk,
    make_phantom,
    make_vessel,
)

GRID = Grid2D(501, 501, 1e-4)


def region(values, grid=GRID):
    sx, sy = grid.region_slices()
    return values[sx, sy]


def outside_region(values, grid=GRID):
    sx, sy = grid.region_slices()
    mask = np.ones_like(values, dtype=bool)
    mask[sx, sy] = False
    return values[mask]


def test_disk_pixel_count_matches_area():
    f = make_disk((0.0, 0.0), 2e-3, 1000.0, GRID)
    count = int((f.values > 0).sum())
    expected = np.pi * (2e-3 / 1e-4) ** 2  # ~1257 pixels
    assert abs(count - expected) / expected < 0.05


def test_disk_values_binary():
    f = make_disk((1e-3, -2e-3), 1.5e-3, 1000.0, GRID)
    assert set(np.unique(f.values)) == {0.0, 1000.0}


def test_disk_zero_radius_empty():
    f = make_disk((0.0, 0.0), 0.0, 1000.0, GRID)
    assert not f.values.any()


def test_disk_geometry_error():
    with pytest.raises(GeometryError):
        make_disk((9e-3, 0.0), 2e-3, 1000.0, GRID)


def test_disk_confined_to_region():
    f = make_disk((5e-3, 5e-3), 3e-3, 1000.0, GRID)
    assert not outside_region(f.values).any()


def test_derenzo_binary_and_confined():
    f = make_derenzo(DerenzoSpec(), GRID)
    assert set(np.unique(f.values)) == {0.0, 1000.0}
    assert not outside_region(f.values).any()
    assert (f.values > 0).sum() > 100


def test_derenzo_rotation_preserves_pixel_count():
    base = make_derenzo(DerenzoSpec(), GRID)
    rotated = make_derenzo(DerenzoSpec(rotation=np.pi / 3), GRID)
    n0 = (base.values > 0).sum()
    n1 = (rotated.values > 0).sum()
    assert abs(n1 - n0) / n0 < 0.01


def test_derenzo_deterministic():
    a = make_derenzo(DerenzoSpec(rotation=0.3), GRID)
    b = make_derenzo(DerenzoSpec(rotation=0.3), GRID)
    assert np.array_equal(a.values, b.values)


def test_derenzo_tiny_circles_light_center_pixels():
    # radii below dx/2 still light at least the pixel nearest each center
    spec = DerenzoSpec(radii=(2e-4, 1.5e-4, 1e-4, 7e-5, 5e-5, 4e-5))
    f = make_derenzo(spec, GRID)
    xs = GRID.x_coords()
    ys = GRID.y_coords()
    for x, y, _ in derenzo_circle_layout(spec, GRID.dx):
        ix = int(np.argmin(np.abs(xs - x)))
        iy = int(np.argmin(np.abs(ys - y)))
        assert f.values[ix, iy] == 1000.0


def test_derenzo_validates_radii():
    with pytest.raises(ValidationError):
        make_derenzo(DerenzoSpec(radii=(1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3)), GRID)
    with pytest.raises(GeometryError):
        make_derenzo(DerenzoSpec(radii=(6e-3, 5e-3, 4e-3, 3e-3, 2e-3, 1e-3)), GRID)


def test_vessel_deterministic():
    a = make_vessel(VesselSpec(seed=11), GRID)
    b = make_vessel(VesselSpec(seed=11), GRID)
    assert np.array_equal(a.values, b.values)


def test_vessel_seeds_differ():
    diffs = []
    for seed in range(10):
        a = make_vessel(VesselSpec(seed=2 * seed), GRID)
        b = make_vessel(VesselSpec(seed=2 * seed + 1), GRID)
        ra = region(a.values) > 0
        rb = region(b.values) > 0
        diffs.append((ra != rb).mean())
    assert min(diffs) >= 0.01


def test_vessel_occupancy_within_band():
    for seed in range(8):
        f = make_vessel(VesselSpec(seed=seed), GRID)
        occupancy = (region(f.values) > 0).mean()
        assert 0.005 <= occupancy <= 0.15, occupancy


def test_vessel_binary_and_confined():
    f = make_vessel(VesselSpec(seed=3), GRID)
    assert set(np.unique(f.values)) == {0.0, 1000.0}
    assert not outside_region(f.values).any()


def _write_gray(tmp_path, array):
    path = tmp_path / "img.pgm"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{array.shape[1]} {array.shape[0]}\n255\n".encode())
        fh.write(array.astype(np.uint8).tobytes())
    return path


def test_import_image_all_white(tmp_path):
    path = _write_gray(tmp_path, np.full((201, 201), 255))
    f = import_image(path, 128, 1000.0, GRID)
    assert (region(f.values) == 1000.0).all()
    assert not outside_region(f.values).any()


def test_import_image_all_black(tmp_path):
    path = _write_gray(tmp_path, np.zeros((201, 201)))
    f = import_image(path, 128, 1000.0, GRID)
    assert not f.values.any()


def test_import_image_checkerboard_preserved(tmp_path):
    board = np.indices((201, 201)).sum(axis=0) % 2 * 255
    path = _write_gray(tmp_path, board)
    f = import_image(path, 128, 1000.0, GRID)
    got = region(f.values)
    assert set(np.unique(got)) == {0.0, 1000.0}
    assert int((got > 0).sum()) == int((board > 0).sum())
    # exact alternation: no two horizontally adjacent pixels equal
    assert (got[:, 1:] != got[:, :-1]).all()


def test_import_image_bad_file(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"not a graymap")
    with pytest.raises(Exception):
        import_image(path, 128, 1000.0, GRID)


def test_make_phantom_dispatch(tmp_path):
    assert make_phantom(DiskSpec(), GRID).values.any()
    assert make_phantom(DerenzoSpec(), GRID).values.any()
    assert make_phantom(VesselSpec(seed=1), GRID).values.any()
    path = _write_gray(tmp_path, np.full((64, 64), 255))
    assert make_phantom(ImageImportSpec(path=str(path)), GRID).values.any()
