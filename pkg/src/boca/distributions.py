"""Seedable random variates used by the Gibbs sampler.

Every sampler takes a :class:`numpy.random.Generator`.  Reproducible,
independent streams come from :func:`rng_stream`, which keys numpy's
counter-based Philox bit generator with a ``(seed, stream_id)`` pair.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

__all__ = [
    "ORTHONORMAL_TOL",
    "VmfParams",
    "log_stiefel_volume",
    "null_space_basis",
    "rng_stream",
    "sample_beta",
    "sample_gaussian",
    "sample_inverse_gamma",
    "sample_uniform_sphere",
    "sample_uniform_stiefel",
    "sample_vmf",
]

ORTHONORMAL_TOL = 1e-8

_U64 = (1 << 64) - 1


def rng_stream(seed, stream_id=0):
    """Return a Philox-backed generator for the stream ``(seed, stream_id)``.

    The 128-bit Philox key is ``seed`` in the low word and ``stream_id`` in
    the high word, so distinct stream ids give non-overlapping sequences and
    the same pair always replays the same draws.
    """
    seed = int(seed)
    stream_id = int(stream_id)
    if not (0 <= seed <= _U64 and 0 <= stream_id <= _U64):
        raise DomainError("seed and stream_id must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=seed | (stream_id << 64)))


def sample_gaussian(mean, variance, rng, size=None):
    if variance < 0:
        raise DomainError(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return float(mean) if size is None else np.full(size, float(mean))
    return rng.normal(mean, np.sqrt(variance), size=size)


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Draw from IG(shape, scale), density proportional to x**(-shape-1) * exp(-scale/x)."""
    if not (shape > 0 and scale > 0):
        raise DomainError(f"inverse-gamma needs shape > 0 and scale > 0, got ({shape}, {scale})")
    return scale / rng.standard_gamma(shape, size=size)


def sample_beta(a, b, rng, size=None):
    if not (a > 0 and b > 0):
        raise DomainError(f"beta needs a > 0 and b > 0, got ({a}, {b})")
    return rng.beta(a, b, size=size)


def sample_uniform_sphere(d, rng, size=None):
    """Uniform draw on the unit sphere of R^d (normal-deviate method).

    Returns shape ``(d,)``, or ``(size, d)`` when ``size`` is given.
    """
    d = int(d)
    if d < 1:
        raise DomainError(f"sphere dimension must be >= 1, got {d}")
    n = 1 if size is None else int(size)
    v = rng.standard_normal((n, d))
    norms = np.linalg.norm(v, axis=1)
    # an all-zero deviate has probability zero but would divide by zero
    while np.any(norms == 0):
        bad = norms == 0
        v[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(v, axis=1)
    v /= norms[:, None]
    return v[0] if size is None else v


@dataclass(frozen=True)
class VmfParams:
    """von Mises-Fisher law with density proportional to exp(natural_parameter . v)."""

    natural_parameter: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.natural_parameter, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise DomainError("natural parameter must be a finite vector")
        object.__setattr__(self, "natural_parameter", c)

    @property
    def dim(self):
        return self.natural_parameter.shape[0]

    @cached_property
    def kappa(self):
        return float(np.linalg.norm(self.natural_parameter))

    @cached_property
    def mean_direction(self):
        if self.kappa == 0:
            e = np.zeros(self.dim)
            e[0] = 1.0
            return e
        return self.natural_parameter / self.kappa


def _vmf_cosines(kappa, d, rng, n):
    """Wood's rejection sampler for t = mu . v.

    Returns ``(t, sqrt(1 - t**2))`` evaluated through 1 - t and 1 + t so that
    concentrations up to ~1e150 keep full relative accuracy.
    """
    m = d - 1.0
    b = m / (2.0 * kappa + np.sqrt(4.0 * kappa * kappa + m * m))
    x0 = (1.0 - b) / (1.0 + b)
    one_minus_x0 = 2.0 * b / (1.0 + b)
    log_one_minus_x0sq = np.log(4.0 * b) - 2.0 * np.log1p(b)

    t = np.empty(n)
    sin_t = np.empty(n)
    filled = 0
    while filled < n:
        k = n - filled
        z = rng.beta(m / 2.0, m / 2.0, size=k)
        u = rng.random(size=k)
        den = 1.0 - (1.0 - b) * z
        omw = 2.0 * b * z / den  # 1 - w
        opw = 2.0 * (1.0 - z) / den  # 1 + w
        log_ratio = kappa * (one_minus_x0 - omw) + m * (
            np.log(one_minus_x0 + x0 * omw) - log_one_minus_x0sq
        )
        ok = log_ratio >= np.log(u)
        j = int(ok.sum())
        t[filled:filled + j] = 1.0 - omw[ok]
        sin_t[filled:filled + j] = np.sqrt(np.clip(omw[ok] * opw[ok], 0.0, None))
        filled += j
    return t, sin_t


def _householder_to(mu, x):
    """Apply the reflection mapping e_1 onto ``mu`` to the rows of ``x``."""
    u = -mu.copy()
    u[0] += 1.0
    uu = u @ u
    if uu < 1e-30:
        return x
    return x - np.outer(x @ u, u) * (2.0 / uu)


def sample_vmf(params, rng, size=None):
    """Draw from a von Mises-Fisher distribution on the unit sphere.

    Cosines to the mean direction come from Wood's envelope; a uniform
    tangent direction completes the point in a frame where the mean is
    e_1, and a Householder reflection carries it to the mean direction.
    Zero concentration falls through to :func:`sample_uniform_sphere`.
    """
    if not isinstance(params, VmfParams):
        params = VmfParams(params)
    d = params.dim
    if d < 2:
        raise DomainError(f"vMF sampling needs dimension >= 2, got {d}")
    if params.kappa == 0:
        return sample_uniform_sphere(d, rng, size=size)

    n = 1 if size is None else int(size)
    t, sin_t = _vmf_cosines(params.kappa, d, rng, n)
    tangent = sample_uniform_sphere(d - 1, rng, size=n)
    x = np.empty((n, d))
    x[:, 0] = t
    x[:, 1:] = tangent * sin_t[:, None]
    x = _householder_to(params.mean_direction, x)
    # keep exact unit norm against rounding in the reflection
    x /= np.linalg.norm(x, axis=1)[:, None]
    return x[0] if size is None else x


def null_space_basis(partial):
    """Orthonormal basis of the orthogonal complement of ``partial``'s columns.

    ``partial`` is M x k with orthonormal columns (k < M).  The basis is
    the trailing M - k columns of a complete Householder QR, so the output
    is a deterministic function of the input.
    """
    a = np.asarray(partial, dtype=float)
    if a.ndim != 2:
        raise DomainError("partial basis must be a 2-D array")
    m, k = a.shape
    if k >= m:
        raise DomainError(f"need fewer columns than rows, got {m}x{k}")
    if k == 0:
        return np.eye(m)
    dev = np.abs(a.T @ a - np.eye(k)).max()
    if not dev <= ORTHONORMAL_TOL:
        raise DomainError(f"columns are not orthonormal (max deviation {dev:.3g})")
    q, _ = np.linalg.qr(a, mode="complete")
    return q[:, k:]


def sample_uniform_stiefel(M, N, rng, method="sequential"):
    """Haar-uniform M x N matrix with orthonormal columns.

    ``method="sequential"`` draws column k uniformly on the unit sphere of
    the complement of the previous columns; ``method="direct"`` takes the
    polar factor V (V^T V)^(-1/2) of a Gaussian matrix V.
    """
    M, N = int(M), int(N)
    if not 1 <= N <= M:
        raise DomainError(f"need 1 <= N <= M, got M={M}, N={N}")
    if method == "direct":
        v = rng.standard_normal((M, N))
        u, _, wt = np.linalg.svd(v, full_matrices=False)
        return u @ wt
    if method != "sequential":
        raise DomainError(f"unknown method {method!r}")
    psi = np.empty((M, N))
    psi[:, 0] = sample_uniform_sphere(M, rng)
    for k in range(1, N):
        psi[:, k] = null_space_basis(psi[:, :k]) @ sample_uniform_sphere(M - k, rng)
    return psi


def log_stiefel_volume(M, N):
    """Log volume of the Stiefel manifold of M x N orthonormal frames.

    Uses vol = prod_{i<N} vol(S^{M-1-i}) with vol(S^{k-1}) = 2 pi^{k/2} / Gamma(k/2).
    """
    if int(M) != M or int(N) != N or not 1 <= N <= M:
        raise DomainError(f"need integers 1 <= N <= M, got M={M}, N={N}")
    k = np.arange(M - N + 1, M + 1, dtype=float)
    return float(np.sum(np.log(2.0) + 0.5 * k * np.log(np.pi) - gammaln(0.5 * k)))
