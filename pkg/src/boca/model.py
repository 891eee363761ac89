"""Data, parameter and hyperparameter types plus the model's log densities.

Observations follow X = Psi S + noise with X of shape (M, T), an M x N
dictionary Psi with orthonormal columns and Bernoulli-Gaussian sources S
of shape (N, T).  All densities are evaluated in the log domain.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from .distributions import ORTHONORMAL_TOL
from .errors import DomainError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


def _as_matrix(a, name, dtype=float):
    a = np.array(a, dtype=dtype)
    if a.ndim != 2:
        raise DomainError(f"{name} must be a 2-D array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ObservationSet:
    """Observation matrix with one observed vector y(t) per column."""

    X: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X, "X")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DomainError("X must have at least one row and one column")
        if not np.all(np.isfinite(X)):
            raise DomainError("X contains non-finite entries")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def M(self):
        return self.X.shape[0]

    @property
    def T(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class Dictionary:
    """M x N matrix whose columns (atoms) are orthonormal."""

    psi: np.ndarray

    def __post_init__(self):
        psi = _as_matrix(self.psi, "psi")
        m, n = psi.shape
        if not 1 <= n <= m:
            raise DomainError(f"dictionary must have 1 <= N <= M, got {m}x{n}")
        dev = orthonormality_error(psi)
        if not dev <= ORTHONORMAL_TOL:
            raise DomainError(f"dictionary columns not orthonormal (max |psi^T psi - I| = {dev:.3g})")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def M(self):
        return self.psi.shape[0]

    @property
    def N(self):
        return self.psi.shape[1]


def orthonormality_error(psi):
    return float(np.abs(psi.T @ psi - np.eye(psi.shape[1])).max())


def reorthonormalize(psi):
    """Nearest matrix with orthonormal columns (polar factor)."""
    u, _, wt = np.linalg.svd(psi, full_matrices=False)
    return u @ wt


@dataclass(frozen=True)
class SourceState:
    """Source amplitudes ``S`` with their activity indicators ``Q``.

    ``Q[n, t] == 0`` forces ``S[n, t] == 0``.  An active entry may carry a
    zero amplitude, since the indicator is the primary variable.
    """

    S: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        S = _as_matrix(self.S, "S")
        Q = _as_matrix(self.Q, "Q")
        if S.shape != Q.shape:
            raise DomainError(f"S and Q shapes differ: {S.shape} vs {Q.shape}")
        if not np.all((Q == 0) | (Q == 1)):
            raise DomainError("Q must be binary")
        Q = Q.astype(np.int8)
        if np.any((Q == 0) & (S != 0)):
            raise DomainError("inactive entries (Q == 0) must have zero amplitude")
        if not np.all(np.isfinite(S)):
            raise DomainError("S contains non-finite entries")
        S.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def zeros(cls, N, T):
        return cls(np.zeros((N, T)), np.zeros((N, T), dtype=np.int8))

    @classmethod
    def from_amplitudes(cls, S):
        """Indicators set wherever the amplitude is non-zero."""
        S = np.asarray(S, dtype=float)
        return cls(S, (S != 0).astype(np.int8))

    @property
    def N(self):
        return self.S.shape[0]

    @property
    def T(self):
        return self.S.shape[1]

    @property
    def m1(self):
        """Active count per source."""
        return self.Q.sum(axis=1, dtype=np.int64)

    @property
    def m0(self):
        return self.T - self.m1


@dataclass(frozen=True)
class HyperState:
    sigma2: float
    lam: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float)).copy()
        a2 = np.atleast_1d(np.asarray(self.a2, dtype=float)).copy()
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if lam.shape != a2.shape or lam.ndim != 1:
            raise DomainError("lam and a2 must be vectors of equal length")
        if np.any((lam < 0) | (lam > 1)):
            raise DomainError("activation probabilities must lie in [0, 1]")
        if not np.all(a2 > 0):
            raise DomainError("active variances must be positive")
        lam.setflags(write=False)
        a2.setflags(write=False)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "a2", a2)


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and fixed hyper-hyperparameters.

    ``nu`` is the shape of the conjugate noise prior and is fixed at 2;
    ``alpha0``/``alpha1`` parameterize the inverse-gamma prior on each
    active variance.
    """

    M: int
    N: int
    T: int
    nu: float = 2.0
    alpha0: float = 2.0
    alpha1: float = 1.0

    def __post_init__(self):
        for name in ("M", "N", "T"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.N >= self.M:
            raise DomainError(f"dictionary must be under-complete (N < M), got M={self.M}, N={self.N}")
        if self.nu != 2:
            raise DomainError("nu is fixed at 2")
        if not (self.alpha0 > 0 and self.alpha1 > 0):
            raise DomainError("alpha0 and alpha1 must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        keys = {"M", "N", "T", "nu", "alpha0", "alpha1"}
        return cls(**{k: d[k] for k in keys if k in d})


def residual_energy(X, psi, S):
    """Sum over t of ||y(t) - Psi s(t)||^2."""
    r = X - psi @ S
    return float(np.einsum("ij,ij->", r, r))


def log_likelihood(obs, dictionary, src, sigma2):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    _check_dims(obs, dictionary, src)
    mt = obs.M * obs.T
    return -0.5 * mt * np.log(2.0 * np.pi * sigma2) - residual_energy(obs.X, dictionary.psi, src.S) / (2.0 * sigma2)


def bg_log_prior(s_row, q_row, lambda_n, a2_n):
    """Log Bernoulli-Gaussian prior of one source row (slab N(0, a2_n))."""
    s_row = np.asarray(s_row, dtype=float)
    q_row = np.asarray(q_row)
    if not 0 <= lambda_n <= 1:
        raise DomainError(f"lambda must be in [0, 1], got {lambda_n}")
    if not a2_n > 0:
        raise DomainError(f"a2 must be positive, got {a2_n}")
    active = q_row == 1
    if np.any(~active & (s_row != 0)):
        raise DomainError("inactive entries must have zero amplitude")
    m1 = int(active.sum())
    m0 = q_row.size - m1
    s = s_row[active]
    slab = -0.5 * m1 * (LOG_2PI + np.log(a2_n)) - float(s @ s) / (2.0 * a2_n)
    return float(xlogy(m0, 1.0 - lambda_n) + xlogy(m1, lambda_n) + slab)


def log_marginal_posterior(src, dictionary, obs, cfg):
    """Log f(S, Psi | X) with sigma2, lambda, a2 (and gamma) integrated out.

    Defined up to an additive constant that depends only on (M, N, T,
    alpha0, alpha1).  Includes the -(m_n(1)/2) log(2 pi) factor of the
    Gaussian slab so that states with different active counts are
    compared on the same reference measure.  A zero residual makes the
    density unbounded; it is reported as ``-inf`` so that such states never
    win an argmax.
    """
    _check_dims(obs, dictionary, src)
    return log_marginal_posterior_arrays(src.S, src.Q, dictionary.psi, obs.X, cfg.alpha0, cfg.alpha1)


def log_marginal_posterior_arrays(S, Q, psi, X, alpha0, alpha1):
    M, T = X.shape
    r = residual_energy(X, psi, S)
    if r <= 0:
        logger.warning("zero residual energy: marginal posterior reported as -inf")
        return float("-inf")
    m1 = Q.sum(axis=1, dtype=np.int64).astype(float)
    m0 = T - m1
    s2 = np.einsum("ij,ij->i", S, S)
    shape = alpha0 + 0.5 * m1
    val = (
        np.sum(betaln(1.0 + m1, 1.0 + m0))
        - 0.5 * M * T * np.log(r)
        + np.sum(gammaln(shape) - shape * np.log(alpha1 + 0.5 * s2))
        - 0.5 * LOG_2PI * m1.sum()
    )
    return float(val)


def snr_db(obs_clean, sigma2):
    """10 log10( sum_t ||x0(t)||^2 / (M T sigma2) ) for noise-free data x0."""
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    X = obs_clean.X if isinstance(obs_clean, ObservationSet) else np.asarray(obs_clean, dtype=float)
    energy = float(np.einsum("ij,ij->", X, X))
    if energy == 0:
        return float("-inf")
    return float(10.0 * np.log10(energy / (X.size * sigma2)))


def _check_dims(obs, dictionary, src):
    if dictionary.M != obs.M:
        raise DomainError(f"dictionary has {dictionary.M} rows but X has {obs.M}")
    if src.N != dictionary.N or src.T != obs.T:
        raise DomainError(f"sources shape {src.S.shape} incompatible with ({dictionary.N}, {obs.T})")
