import math

import numpy as np
import pytest

from polarformer.polar_grid import (
    MultiScaleGridSpec,
    PolarGridSpec,
    RayGridSpec,
    default_multiscale_spec,
    generate_cylindrical_points,
    normalize_indices,
    with_height_samples,
)


def test_default_levels():
    spec = default_multiscale_spec()
    assert [(lv.radial_bins, lv.azimuth_bins) for lv in spec.levels] == [(64, 256), (32, 128), (16, 64)]
    assert spec[0].shape == (64, 256) and spec[2].shape == (16, 64)
    for a, b in zip(spec.levels, spec.levels[1:]):
        assert b.azimuth_bins * 2 == a.azimuth_bins


def test_spec_validation():
    with pytest.raises(ValueError):
        PolarGridSpec(radial_bins=0, azimuth_bins=4)
    with pytest.raises(ValueError):
        PolarGridSpec(radial_bins=2, azimuth_bins=4, r_min=5, r_max=5)
    with pytest.raises(ValueError):
        PolarGridSpec(radial_bins=2, azimuth_bins=4, r_min=-1, r_max=5)
    with pytest.raises(ValueError):
        PolarGridSpec(radial_bins=2, azimuth_bins=4, z_min=1, z_max=0)
    with pytest.raises(ValueError):
        RayGridSpec(range_bins=0, width=3)


def test_multiscale_validation():
    a = PolarGridSpec(8, 16)
    with pytest.raises(ValueError):
        MultiScaleGridSpec(levels=(PolarGridSpec(4, 8), a))
    with pytest.raises(ValueError):
        MultiScaleGridSpec(levels=(a, PolarGridSpec(4, 8, r_max=40)))


def test_spec_dict_round_trip():
    spec = with_height_samples(default_multiscale_spec(feature_dim=16), 3)
    back = MultiScaleGridSpec.from_dict(spec.to_dict())
    assert back == spec and back[1].height_samples == 3


def test_single_bin_center():
    pts = generate_cylindrical_points(PolarGridSpec(1, 1, 1, r_min=0, r_max=2, z_min=-1, z_max=1))
    assert pts.shape == (1, 1, 1, 3)
    assert tuple(pts[0, 0, 0]) == (1.0, 0.0, 0.0)


def test_two_by_four_centers():
    pts = generate_cylindrical_points(PolarGridSpec(2, 4, 1, r_min=0, r_max=4))
    assert sorted(set(pts[..., 0].ravel())) == [1.0, 3.0]
    expected = np.array([-3, -1, 1, 3]) * math.pi / 4
    assert np.allclose(pts[0, :, 0, 1], expected, atol=1e-15)


@pytest.mark.parametrize("r,n,z", [(64, 256, 8), (3, 5, 2), (7, 1, 3)])
def test_lattice_properties(r, n, z):
    spec = PolarGridSpec(r, n, z, r_min=1.0, r_max=51.0, z_min=-3.0, z_max=5.0)
    pts = generate_cylindrical_points(spec)
    assert pts.size // 3 == r * n * z
    dr = (spec.r_max - spec.r_min) / r
    assert pts[..., 0].min() == pytest.approx(spec.r_min + dr / 2, abs=1e-12)
    assert pts[..., 0].max() == pytest.approx(spec.r_max - dr / 2, abs=1e-12)
    assert np.all((pts[..., 1] >= -math.pi) & (pts[..., 1] < math.pi))
    assert np.all((pts[..., 0] > spec.r_min) & (pts[..., 0] < spec.r_max))
    assert np.all((pts[..., 2] > spec.z_min) & (pts[..., 2] < spec.z_max))
    if n > 1:
        assert np.allclose(np.diff(pts[0, :, 0, 1]), 2 * math.pi / n, atol=1e-12)
    # lexicographic (i, j, k): i drives rho, j drives phi, k drives z
    assert np.all(np.diff(pts[:, 0, 0, 0]) > 0) if r > 1 else True
    assert np.all(np.diff(pts[0, 0, :, 2]) > 0) if z > 1 else True


def test_normalize_indices_examples(k):
    ray = RayGridSpec(range_bins=64, width=100, r_min=1.0, r_max=51.0)
    assert normalize_indices(0.0, 1.0, k, ray) == (0.0, 0.0, True)
    assert normalize_indices(k.width, 51.0, k, ray) == (1.0, 1.0, True)
    assert normalize_indices(800.0, 52.0, k, ray)[2] is False
    assert normalize_indices(-1.0, 10.0, k, ray)[2] is False


def test_normalize_indices_affine_monotone(k):
    ray = RayGridSpec(range_bins=8, width=10, r_min=1.0, r_max=51.0)
    x = np.linspace(0, k.width, 50)
    r = np.linspace(1, 51, 50)
    xb, rb, ok = normalize_indices(x, r, k, ray)
    assert ok.all()
    assert np.all(np.diff(xb) > 0) and np.all(np.diff(rb) > 0)
    assert np.allclose(np.diff(xb, 2), 0, atol=1e-15) and np.allclose(np.diff(rb, 2), 0, atol=1e-15)
