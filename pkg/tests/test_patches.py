from importlib import resources

import numpy as np
import pytest

from boca.errors import DomainError
from boca.io import read_pgm
from boca.patches import (
    PatchLayout,
    extract_patches,
    fit_image,
    from_unit,
    reassemble_patches,
    synthetic_texture,
    tile_atlas,
    to_unit,
)
from boca.sampler import SamplerSettings


def bundled():
    return read_pgm(resources.files("boca") / "data" / "test_image.pgm")


def test_bundled_image_is_the_generator_output():
    img = bundled()
    assert img.shape == (256, 256) and img.dtype == np.uint8
    assert np.array_equal(img, synthetic_texture())


def test_round_trip_lossless():
    img = bundled()
    cols, lay = extract_patches(img)
    assert cols.shape == (256, 256) and lay.T == 256 and lay.M == 256
    assert np.array_equal(reassemble_patches(cols, lay), img)
    # first column is the top-left patch, flattened row-major
    assert np.array_equal(cols[:, 0], img[:16, :16].ravel())
    assert np.array_equal(cols[:, 1], img[:16, 16:32].ravel())
    small = np.arange(8 * 12).reshape(8, 12)
    c, lay = extract_patches(small, patch=4)
    assert np.array_equal(reassemble_patches(c, lay), small)


def test_layout_errors():
    with pytest.raises(DomainError):
        PatchLayout(250, 256)
    with pytest.raises(DomainError):
        extract_patches(np.zeros((20, 32)))
    with pytest.raises(DomainError):
        reassemble_patches(np.zeros((256, 3)), PatchLayout(32, 32))


def test_scaling():
    x = np.array([[0, 128, 255]], dtype=np.uint8)
    assert np.array_equal(from_unit(to_unit(x)), x)
    assert from_unit(np.array([-0.5, 1.7])).tolist() == [0, 255]


def test_atlas_geometry():
    psi = np.linalg.qr(np.random.default_rng(0).standard_normal((256, 5)))[0]
    a = tile_atlas(psi)
    assert a.shape == (2 * 17 + 1, 3 * 17 + 1) and a.dtype == np.uint8
    with pytest.raises(DomainError):
        tile_atlas(np.ones((10, 2)))


def test_flat_image_is_rank_one():
    flat = np.full((64, 64), 100, dtype=np.uint8)
    fit = fit_image(flat, 2, SamplerSettings(120, 20))
    assert fit.rmse < 1e-2
    # the constant patch lies along a single atom
    const = np.full(256, 1 / 16)
    assert np.max(np.abs(fit.psi.T @ const)) > 0.99


def test_centering_option():
    img = bundled()[:64, :64]
    fit = fit_image(img, 4, SamplerSettings(40, 10), center=True)
    assert fit.center and fit.recon.shape == (64, 64)
    assert "rmse" in fit.report() and "recon" not in fit.report()
    with pytest.raises(DomainError):
        fit_image(img, 256, SamplerSettings(2, 1))
