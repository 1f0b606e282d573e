import numpy as np
import pytest

from artgenre.image import Image
from artgenre.pyramid import (
    LaplacianPyramid,
    _upsample,
    build_laplacian_pyramid,
    max_levels,
    read_pyramid,
    reconstruct,
    write_pyramid,
)


def test_dimension_law_224_7_levels():
    img = Image(np.random.default_rng(0).random((1, 224, 224)))
    pyr = build_laplacian_pyramid(img, 7)
    dims = [b.width for b in pyr.bands] + [pyr.residual.width]
    assert dims == [224, 112, 56, 28, 14, 7, 4]


def test_dimension_law_general():
    rng = np.random.default_rng(1)
    for w, h, levels in ((17, 33, 4), (100, 50, 5), (64, 64, 6)):
        pyr = build_laplacian_pyramid(Image(rng.random((1, h, w))), levels)
        for k, band in enumerate(pyr.bands):
            assert (band.width, band.height) == (-(-w // 2**k), -(-h // 2**k))


def test_constant_image_bands_are_zero():
    pyr = build_laplacian_pyramid(Image(np.full((3, 31, 47), 0.7)), 4)
    for band in pyr.bands:
        assert np.abs(band.data).max() <= 1e-9
    np.testing.assert_allclose(pyr.residual.data, 0.7, atol=1e-9)


def test_reconstruction_identity_random():
    rng = np.random.default_rng(2)
    for _ in range(10):
        w = int(rng.integers(16, 120))
        h = int(rng.integers(16, 120))
        levels = int(rng.integers(2, min(5, max_levels(w, h)) + 1))
        img = Image(rng.random((3, h, w)))
        rec = reconstruct(build_laplacian_pyramid(img, levels))
        assert np.abs(rec.data - img.data).max() <= 1e-6


def test_impulse_reconstruction():
    data = np.zeros((1, 8, 8))
    data[0, 3, 4] = 1.0
    img = Image(data)
    rec = reconstruct(build_laplacian_pyramid(img, 3))
    assert np.abs(rec.data - img.data).max() <= 1e-6


def test_zeroed_bands_reconstruct_as_repeated_upsample():
    rng = np.random.default_rng(3)
    img = Image(rng.random((1, 32, 32)))
    pyr = build_laplacian_pyramid(img, 4)
    zeroed = LaplacianPyramid(
        bands=tuple(Image(np.zeros_like(b.data)) for b in pyr.bands),
        residual=pyr.residual,
    )
    rec = reconstruct(zeroed)
    cur = pyr.residual.data
    for band in reversed(pyr.bands):
        cur = _upsample(cur, band.height, band.width)
    np.testing.assert_allclose(rec.data, cur)


def test_levels_validation():
    img = Image(np.zeros((1, 16, 16)))
    with pytest.raises(ValueError):
        build_laplacian_pyramid(img, 1)
    assert max_levels(16, 16) == 5
    build_laplacian_pyramid(img, 5)  # at the cap
    with pytest.raises(ValueError):
        build_laplacian_pyramid(img, 6)


def test_reconstruct_rejects_inconsistent_dims():
    rng = np.random.default_rng(4)
    pyr = build_laplacian_pyramid(Image(rng.random((1, 32, 32))), 3)
    broken = LaplacianPyramid(bands=pyr.bands, residual=Image(rng.random((1, 5, 5))))
    with pytest.raises(ValueError):
        reconstruct(broken)


def test_container_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    pyr = build_laplacian_pyramid(Image(rng.random((3, 40, 24))), 4)
    path = tmp_path / "pyr.bin"
    write_pyramid(pyr, path)
    back = read_pyramid(path)
    assert back.levels == pyr.levels
    for a, b in zip(back.bands, pyr.bands):
        np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(back.residual.data, pyr.residual.data)
