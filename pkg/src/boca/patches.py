"""Image-patch sparse coding: tiling, scaling, fitting and atlases."""
from dataclasses import asdict, dataclass

import numpy as np

from .distributions import rng_stream
from .errors import DomainError
from .metrics import sparsity_score
from .model import ModelConfig, ObservationSet
from .sampler import SamplerSettings, run_chain

PATCH = 16


@dataclass(frozen=True)
class PatchLayout:
    rows: int
    cols: int
    patch: int = PATCH

    def __post_init__(self):
        if self.patch < 1 or self.rows % self.patch or self.cols % self.patch:
            raise DomainError(f"image {self.rows}x{self.cols} is not divisible into {self.patch}x{self.patch} patches")

    @property
    def grid(self):
        return self.rows // self.patch, self.cols // self.patch

    @property
    def M(self):
        return self.patch * self.patch

    @property
    def T(self):
        gr, gc = self.grid
        return gr * gc


def extract_patches(img, patch=PATCH):
    """Non-overlapping patches as columns (M = patch^2, T = number of patches).

    Patches are taken row-major over the grid and each is flattened row-major.
    """
    img = np.asarray(img)
    lay = PatchLayout(img.shape[0], img.shape[1], patch)
    gr, gc = lay.grid
    blocks = img.reshape(gr, patch, gc, patch).transpose(0, 2, 1, 3)
    return blocks.reshape(gr * gc, patch * patch).T.copy(), lay


def reassemble_patches(cols, layout):
    gr, gc = layout.grid
    p = layout.patch
    cols = np.asarray(cols)
    if cols.shape != (layout.M, layout.T):
        raise DomainError(f"expected {layout.M}x{layout.T} patch matrix, got {cols.shape}")
    blocks = cols.T.reshape(gr, gc, p, p).transpose(0, 2, 1, 3)
    return blocks.reshape(layout.rows, layout.cols)


def to_unit(img):
    return np.asarray(img, dtype=float) / 255.0


def from_unit(x):
    return np.clip(np.rint(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)


def tile_atlas(psi, patch=PATCH, pad=1, ncols=None):
    """Arrange the atoms as patch images on a grid, each min-max scaled to 0..255."""
    psi = np.asarray(psi, dtype=float)
    M, N = psi.shape
    if M != patch * patch:
        raise DomainError(f"atoms of length {M} are not {patch}x{patch} patches")
    ncols = ncols or int(np.ceil(np.sqrt(N)))
    nrows = int(np.ceil(N / ncols))
    step = patch + pad
    out = np.full((nrows * step + pad, ncols * step + pad), 255, dtype=np.uint8)
    for n in range(N):
        a = psi[:, n].reshape(patch, patch)
        lo, hi = a.min(), a.max()
        a = (a - lo) / (hi - lo) if hi > lo else np.full_like(a, 0.5)
        r, c = divmod(n, ncols)
        out[pad + r * step: pad + r * step + patch, pad + c * step: pad + c * step + patch] = from_unit(a)
    return out


def synthetic_texture(size=256, seed=2008):
    """Deterministic textured grayscale test image (uint8, size x size).

    Four quadrants hold a vertical grating, an oblique grating, a
    checkerboard and a smooth shaded blob field; a faint global gradient
    and mild noise tie them together.
    """
    rng = rng_stream(seed, 0)
    y, x = np.mgrid[0:size, 0:size].astype(float)
    h = size // 2
    img = np.empty((size, size))
    img[:h, :h] = 0.5 + 0.35 * np.sin(2 * np.pi * x[:h, :h] / 8.0)
    img[:h, h:] = 0.5 + 0.35 * np.sin(2 * np.pi * (x[:h, h:] + y[:h, h:]) / 11.0)
    img[h:, :h] = 0.25 + 0.5 * (((x[h:, :h] // 6) + (y[h:, :h] // 6)) % 2)
    blobs = np.zeros((h, h))
    yy, xx = y[h:, h:] - h, x[h:, h:] - h
    for cy, cx, r in rng.uniform([0, 0, 6], [h, h, 22], size=(12, 3)):
        blobs += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
    img[h:, h:] = 0.2 + 0.6 * blobs / blobs.max()
    img += 0.1 * (x + y) / (2 * size) - 0.05
    img += 0.02 * rng.standard_normal(img.shape)
    return from_unit(np.clip(img, 0.0, 1.0))


@dataclass
class PatchFit:
    recon: np.ndarray  # uint8 image
    psi: np.ndarray
    s: np.ndarray
    rmse: float  # on the [0, 1] intensity scale
    sparsity: float
    elapsed: float
    center: bool

    def report(self):
        d = asdict(self)
        for k in ("recon", "psi", "s"):
            d.pop(k)
        return d


def fit_image(img, N, settings=None, center=False, patch=PATCH, cfg_overrides=None):
    """Sparse-code the patches of ``img`` with an N-atom orthonormal dictionary.

    Intensities are scaled to [0, 1].  With ``center`` each patch mean is
    removed before fitting and added back afterwards.  The reconstruction
    is the posterior mean of Psi S over the retained samples; ``psi``/``s``
    are the last retained sample.
    """
    settings = settings or SamplerSettings(300, 50)
    Y, layout = extract_patches(to_unit(img), patch)
    means = Y.mean(axis=0) if center else np.zeros(Y.shape[1])
    X = Y - means
    if not 1 <= N < layout.M:
        raise DomainError(f"need 1 <= N < {layout.M}, got N={N}")
    cfg = ModelConfig(layout.M, N, layout.T, **(cfg_overrides or {}))
    trace = run_chain(ObservationSet(X), cfg, settings)
    recon = np.zeros_like(X)
    for h in range(trace.n_retained):
        recon += trace.psi[h] @ trace.S[h]
    recon = recon / trace.n_retained + means
    err = float(np.sqrt(np.mean((recon - Y) ** 2)))
    q = trace.Q[-1]
    return PatchFit(
        recon=from_unit(reassemble_patches(recon, layout)),
        psi=trace.psi[-1].copy(),
        s=trace.S[-1].copy(),
        rmse=err,
        sparsity=sparsity_score(q),
        elapsed=trace.elapsed,
        center=center,
    )
