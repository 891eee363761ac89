"""Synthetic data for the toy example and the Monte-Carlo benchmark."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .model import Dictionary, ObservationSet, SourceState


@dataclass(frozen=True)
class ToyConfig:
    """Two sparse sources mixed by two orthonormalized cosines at 15 dB.

    ``active_counts`` optionally fixes the number of active entries per
    source (positions still uniform at random); ``None`` draws them from
    the Bernoulli prior.
    """

    M: int = 50
    N: int = 2
    T: int = 100
    lam: tuple = (0.05, 0.1)
    a2: tuple = (100.0, 10.0)
    frequencies: tuple = (0.02, 0.04)
    snr_db: float = 15.0
    sigma2: float = 1.3e-3
    active_counts: tuple = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BenchConfig:
    M: int = 128
    T: int = 256
    lam: float = 0.05
    a2: float = 10.0
    n_sources: tuple = (4, 8, 16)
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)

    def to_dict(self):
        return asdict(self)


@dataclass
class SyntheticDataset:
    obs: ObservationSet
    clean: ObservationSet
    src: SourceState
    dictionary: Dictionary
    sigma2: float
    config: dict = field(default_factory=dict)


def generate_bg_sources(N, T, lam, a2, rng, active_counts=None):
    """Bernoulli-Gaussian source matrix: q ~ Bernoulli(lam_n), s | q=1 ~ N(0, a2_n)."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (N,))
    a2 = np.broadcast_to(np.asarray(a2, dtype=float), (N,))
    if np.any((lam < 0) | (lam > 1)) or np.any(a2 <= 0):
        raise DomainError("need lam in [0, 1] and a2 > 0")
    if active_counts is None:
        Q = (rng.random((N, T)) < lam[:, None]).astype(np.int8)
    else:
        Q = np.zeros((N, T), dtype=np.int8)
        for n, k in enumerate(active_counts):
            if not 0 <= k <= T:
                raise DomainError(f"active count {k} outside [0, {T}]")
            Q[n, rng.choice(T, size=int(k), replace=False)] = 1
    S = np.sqrt(a2)[:, None] * rng.standard_normal((N, T))
    # a Gaussian draw of exactly 0 would break S/Q coupling; probability zero
    S = np.where(Q != 0, S, 0.0)
    return SourceState(S, Q)


def sinusoidal_dictionary(M, frequencies):
    """Atoms proportional to cos(2 pi f_n m + pi), m = 1..M, made orthonormal.

    The raw cosines are normalized and replaced by their polar factor, the
    orthonormal matrix closest to them, so each atom stays as aligned as
    possible with its own sinusoid.
    """
    f = np.asarray(frequencies, dtype=float)
    if len(np.unique(f)) != len(f):
        raise DomainError("frequencies must be distinct")
    m = np.arange(1, M + 1)[:, None]
    raw = np.cos(2.0 * np.pi * f[None, :] * m + np.pi)
    norms = np.linalg.norm(raw, axis=0)
    if np.any(norms == 0):
        raise DomainError("a frequency yields an all-zero atom")
    raw /= norms
    u, s, wt = np.linalg.svd(raw, full_matrices=False)
    if s[-1] < 1e-10:
        raise DomainError("sinusoidal atoms are linearly dependent")
    return Dictionary(u @ wt)


def random_orthogonal_dictionary(M, N, rng):
    """First N left singular vectors of an M x M standard-normal matrix."""
    if not 1 <= N <= M:
        raise DomainError(f"need 1 <= N <= M, got M={M}, N={N}")
    u, _, _ = np.linalg.svd(rng.standard_normal((M, M)))
    return Dictionary(u[:, :N])


def noise_variance_for_snr(clean, snr_db):
    X = clean.X if isinstance(clean, ObservationSet) else np.asarray(clean)
    energy = float(np.einsum("ij,ij->", X, X))
    if energy == 0:
        raise DomainError("clean signal has zero energy; SNR undefined")
    return energy / (X.size * 10.0 ** (snr_db / 10.0))


def add_noise_at_snr(clean, snr_db, rng):
    """Add white Gaussian noise whose variance realizes ``snr_db`` exactly."""
    sigma2 = noise_variance_for_snr(clean, snr_db)
    X = clean.X + np.sqrt(sigma2) * rng.standard_normal(clean.X.shape)
    return ObservationSet(X), sigma2


def _mix(src, dictionary, snr_db, rng, config):
    clean = ObservationSet(dictionary.psi @ src.S)
    obs, sigma2 = add_noise_at_snr(clean, snr_db, rng)
    return SyntheticDataset(obs, clean, src, dictionary, sigma2, config)


def make_toy(rng, config=None):
    config = config or ToyConfig()
    src = generate_bg_sources(config.N, config.T, config.lam, config.a2, rng, config.active_counts)
    dictionary = sinusoidal_dictionary(config.M, config.frequencies)
    return _mix(src, dictionary, config.snr_db, rng, {"kind": "toy", **config.to_dict()})


def make_bench_trial(N, snr_db, rng, config=None):
    config = config or BenchConfig()
    src = generate_bg_sources(N, config.T, config.lam, config.a2, rng)
    dictionary = random_orthogonal_dictionary(config.M, N, rng)
    meta = {"kind": "bench", "M": config.M, "N": N, "T": config.T, "lam": config.lam,
            "a2": config.a2, "snr_db": snr_db}
    return _mix(src, dictionary, snr_db, rng, meta)
