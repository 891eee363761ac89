"""Point estimates and posterior summaries computed from a chain trace."""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, DomainError
from .model import Dictionary, reorthonormalize


@dataclass
class PosteriorSummary:
    s_mmse: np.ndarray
    psi_mmse: np.ndarray
    q_prob: np.ndarray
    s_map: np.ndarray
    psi_map: np.ndarray
    log_map: float
    map_iteration: int
    k_histograms: list

    @property
    def psi_mmse_projected(self):
        """Raw posterior-mean dictionary moved back onto the manifold (polar factor)."""
        return reorthonormalize(self.psi_mmse)

    @property
    def q_map(self):
        return (self.s_map != 0).astype(np.int8)


def _require_samples(trace):
    if trace.n_retained < 1:
        raise DomainError("trace has no retained samples")


def mmse_estimates(trace):
    """Posterior means of S, Psi and Q over the retained samples.

    The mean of Q is the posterior activation probability of each entry.
    The mean of Psi is returned as is and generally has non-orthonormal
    columns.
    """
    _require_samples(trace)
    return trace.S.mean(axis=0), trace.psi.mean(axis=0), trace.Q.mean(axis=0, dtype=float)


def _map_index(trace):
    _require_samples(trace)
    vals = trace.log_map_values
    if np.all(np.isneginf(vals) | np.isnan(vals)):
        raise DegenerateStateError("every retained sample has -inf marginal posterior")
    # NaN never wins
    return int(np.argmax(np.where(np.isnan(vals), -np.inf, vals)))


def map_estimate(trace, obs=None, cfg=None):
    """Retained (S, Psi) pair with the largest marginal log-posterior.

    Ties go to the earliest iteration.  The log values recorded during the
    run are used; ``obs``/``cfg`` are accepted for call-site symmetry with
    the log-posterior evaluator.
    """
    i = _map_index(trace)
    return trace.S[i].copy(), trace.psi[i].copy(), float(trace.log_map_values[i])


def running_map_values(trace):
    """Best marginal log-posterior seen so far, per retained sample."""
    vals = np.where(np.isnan(trace.log_map_values), -np.inf, trace.log_map_values)
    return np.maximum.accumulate(vals)


def active_count_histogram(trace, n):
    """Posterior pmf of K_n = sum_t q_n(t) on 0..T."""
    _require_samples(trace)
    T = trace.Q.shape[2]
    k = trace.Q[:, n, :].sum(axis=1, dtype=np.int64)
    return np.bincount(k, minlength=T + 1) / trace.n_retained


def summarize(trace, obs=None, cfg=None):
    s_mmse, psi_mmse, q_prob = mmse_estimates(trace)
    s_map, psi_map, log_map = map_estimate(trace, obs, cfg)
    it = trace.n_bi + _map_index(trace) + 1
    T = trace.Q.shape[2]
    hist = [np.bincount(trace.Q[:, n, :].sum(axis=1, dtype=np.int64), minlength=T + 1)
            for n in range(trace.Q.shape[1])]
    return PosteriorSummary(s_mmse, psi_mmse, q_prob, s_map, psi_map, log_map, it, hist)


def align_dictionary(estimate, truth):
    """Match estimated atoms to true atoms up to permutation and sign.

    Greedy: repeatedly take the unused (estimate, truth) pair with the
    largest |inner product|.  Returns ``(perm, signs, aligned)`` where
    ``aligned[:, j] = signs[j] * estimate[:, perm[j]]`` and every matched
    inner product with the truth is non-negative.
    """
    est = estimate.psi if isinstance(estimate, Dictionary) else np.asarray(estimate, dtype=float)
    tru = truth.psi if isinstance(truth, Dictionary) else np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise DomainError(f"shape mismatch: {est.shape} vs {tru.shape}")
    N = est.shape[1]
    corr = est.T @ tru  # rows: estimate atoms, cols: true atoms
    score = np.abs(corr)
    perm = np.full(N, -1)
    signs = np.ones(N)
    free_est = np.ones(N, dtype=bool)
    free_tru = np.ones(N, dtype=bool)
    for _ in range(N):
        masked = np.where(free_est[:, None] & free_tru[None, :], score, -1.0)
        i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
        perm[j] = i
        signs[j] = -1.0 if corr[i, j] < 0 else 1.0
        free_est[i] = False
        free_tru[j] = False
    aligned = est[:, perm] * signs
    return perm, signs, aligned


def align_sources(S, perm, signs):
    """Apply an atom alignment to the matching source rows."""
    return np.asarray(S)[perm] * signs[:, None]
