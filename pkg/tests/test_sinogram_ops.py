import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinosr.errors import DimensionError, ValidationError
from sinosr.grids import Sinogram
from sinosr.metrics import measured_snr
from sinosr.sinogram_ops import (
    add_gaussian_noise,
    apply_restoration,
    compute_residual,
    extract_patches,
    mix_seed,
    nn_interpolate,
    subsample_detectors,
)


def _random_sinogram(t=512, d=100, seed=0, dt=5e-8):
    rng = np.random.default_rng(seed)
    return Sinogram(rng.normal(size=(t, d)), dt)


def test_noise_std_matches_formula():
    # unit-power sinogram at 20 dB -> noise std 0.1
    s = Sinogram(np.ones((512, 100)), 5e-8)
    noisy = add_gaussian_noise(s, 20.0, seed=1)
    noise = noisy.data - s.data
    assert abs(noise.std() - 0.1) < 0.002


def test_noise_measured_snr_within_tenth_db():
    s = _random_sinogram(seed=2)
    for snr in (20.0, 40.0, 60.0):
        noisy = add_gaussian_noise(s, snr, seed=3)
        assert abs(measured_snr(s, noisy) - snr) < 0.1


def test_noise_zero_sinogram_rejected():
    s = Sinogram(np.zeros((16, 4)), 5e-8)
    with pytest.raises(ValidationError):
        add_gaussian_noise(s, 20.0, seed=0)


def test_noise_deterministic_and_zero_mean():
    s = _random_sinogram(seed=4)
    a = add_gaussian_noise(s, 20.0, seed=5)
    b = add_gaussian_noise(s, 20.0, seed=5)
    assert np.array_equal(a.data, b.data)
    noise = a.data - s.data
    sigma = noise.std()
    assert abs(noise.mean()) <= 3 * sigma / np.sqrt(noise.size)


def test_subsample_definition():
    s = _random_sinogram()
    half = subsample_detectors(s, 2)
    assert half.data.shape == (512, 50)
    assert np.array_equal(half.data, s.data[:, ::2])


def test_subsample_identity_and_errors():
    s = _random_sinogram()
    assert np.array_equal(subsample_detectors(s, 1).data, s.data)
    with pytest.raises(DimensionError):
        subsample_detectors(s, 3)


def test_interpolate_duplication_pattern():
    s = _random_sinogram(d=50)
    up = nn_interpolate(s, 100)
    assert up.data.shape == (512, 100)
    assert np.array_equal(up.data[:, 0::2], s.data)
    assert np.array_equal(up.data[:, 1::2], s.data)


def test_interpolate_single_input_column():
    s = _random_sinogram(d=1)
    up = nn_interpolate(s, 7)
    for j in range(7):
        assert np.array_equal(up.data[:, j], s.data[:, 0])


def test_interpolate_rejects_shrink():
    with pytest.raises(DimensionError):
        nn_interpolate(_random_sinogram(d=50), 25)


def test_piecewise_constant_recovered_exactly():
    rng = np.random.default_rng(8)
    base = rng.normal(size=(64, 25))
    full = np.repeat(base, 2, axis=1)  # constant over angle pairs
    s = Sinogram(full, 5e-8)
    recovered = nn_interpolate(subsample_detectors(s, 2), 50)
    assert np.array_equal(recovered.data, full)


@settings(max_examples=25, deadline=None)
@given(d=st.integers(min_value=1, max_value=40),
       factor=st.integers(min_value=1, max_value=4),
       seed=st.integers(min_value=0, max_value=2**31))
def test_subsample_after_interpolate_is_identity(d, factor, seed):
    rng = np.random.default_rng(seed)
    s = Sinogram(rng.normal(size=(16, d)), 5e-8)
    round_trip = subsample_detectors(nn_interpolate(s, d * factor), factor)
    assert np.array_equal(round_trip.data, s.data)


def _dyadic_sinogram(t=512, d=100, seed=0):
    # values on a 2^-10 lattice: differences are exact in float64, so the
    # algebraic restoration identity holds bitwise
    rng = np.random.default_rng(seed)
    data = rng.integers(-(2**20), 2**20, size=(t, d)) * 2.0**-10
    return Sinogram(data, 5e-8)


def test_residual_and_restoration_identities():
    s_in = _dyadic_sinogram(seed=10)
    s_f = _dyadic_sinogram(seed=11)
    res = compute_residual(s_in, s_f)
    assert np.array_equal(res.data, s_in.data - s_f.data)
    assert not compute_residual(s_in, s_in).data.any()
    assert np.array_equal(compute_residual(s_in, Sinogram(np.zeros_like(s_in.data), s_in.dt)).data,
                          s_in.data)
    # restoration of the ground-truth residual recovers s_f exactly
    recovered = apply_restoration(s_in, res)
    assert np.array_equal(recovered.data, s_f.data)
    assert np.array_equal(apply_restoration(s_in, Sinogram(np.zeros_like(s_in.data), s_in.dt)).data,
                          s_in.data)
    assert not apply_restoration(s_in, s_in).data.any()


def test_residual_spot_checks():
    s_in = _random_sinogram(seed=12)
    s_f = _random_sinogram(seed=13)
    res = compute_residual(s_in, s_f)
    rng = np.random.default_rng(14)
    for _ in range(5):
        i = rng.integers(0, 512)
        j = rng.integers(0, 100)
        assert res.data[i, j] == s_in.data[i, j] - s_f.data[i, j]


def test_residual_shape_and_dt_mismatch():
    a = _random_sinogram()
    with pytest.raises(DimensionError):
        compute_residual(a, _random_sinogram(d=50))
    with pytest.raises(ValidationError):
        compute_residual(a, _random_sinogram(dt=1e-7))


def test_extract_patches_bounds_and_determinism():
    s_in = _random_sinogram(seed=20)
    s_r = _random_sinogram(seed=21)
    pairs = extract_patches(s_in, s_r, 50, 32, seed=22)
    assert len(pairs) == 50
    for p in pairs:
        assert 0 <= p.row_offset <= 480
        assert 0 <= p.col_offset <= 68
        assert p.input_patch.shape == (32, 32)
    again = extract_patches(s_in, s_r, 50, 32, seed=22)
    assert [(p.row_offset, p.col_offset) for p in pairs] == \
           [(p.row_offset, p.col_offset) for p in again]


def test_extract_patches_consistent_with_residual():
    s_in = _random_sinogram(seed=23)
    s_f = _random_sinogram(seed=24)
    s_r = compute_residual(s_in, s_f)
    for p in extract_patches(s_in, s_r, 20, 16, seed=25):
        expected = (p.input_patch
                    - s_f.data[p.row_offset:p.row_offset + 16,
                               p.col_offset:p.col_offset + 16])
        assert np.array_equal(p.target_patch, expected)


def test_extract_patches_size_too_large():
    s = _random_sinogram(d=20)
    with pytest.raises(DimensionError):
        extract_patches(s, s, 5, 32, seed=0)


def test_mix_seed_documented_properties():
    assert mix_seed(1, 0) != mix_seed(1, 1)
    assert mix_seed(1, 0) != mix_seed(2, 0)
    assert mix_seed(123, 45) == mix_seed(123, 45)
    assert 0 <= mix_seed(2**63, 2**31) < 2**64
