"""Evaluation metrics: reconstruction RMSE, sparsity, support recovery."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .estimators import align_dictionary, align_sources
from .model import Dictionary, ObservationSet


def _mat(a):
    if isinstance(a, ObservationSet):
        return a.X
    if isinstance(a, Dictionary):
        return a.psi
    return np.asarray(a, dtype=float)


def rmse(truth_clean, est_dict, est_src):
    """sqrt( (1 / (M T)) sum_t ||Psi s(t) - Psi_hat s_hat(t)||^2 ).

    ``truth_clean`` is the noise-free data Psi S; ``est_src`` may be a
    :class:`~boca.model.SourceState` or an amplitude matrix.
    """
    X0 = _mat(truth_clean)
    S = est_src.S if hasattr(est_src, "S") else np.asarray(est_src, dtype=float)
    recon = _mat(est_dict) @ S
    if recon.shape != X0.shape:
        raise DomainError(f"reconstruction shape {recon.shape} differs from {X0.shape}")
    d = X0 - recon
    return float(np.sqrt(np.mean(d * d)))


def sparsity_score(q_est):
    """1 - (number of active entries) / (N T)."""
    q = np.asarray(q_est)
    return float(1.0 - np.count_nonzero(q) / q.size)


def support_f1(q_est, q_true):
    q_est = np.asarray(q_est) != 0
    q_true = np.asarray(q_true) != 0
    if q_est.shape != q_true.shape:
        raise DomainError(f"shape mismatch: {q_est.shape} vs {q_true.shape}")
    tp = np.count_nonzero(q_est & q_true)
    denom = np.count_nonzero(q_est) + np.count_nonzero(q_true)
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def reconstruction_error_trace(trace, obs):
    """e(h) = ||X - Psi_hat^(h) S_hat^(h)||_F over retained iterations h.

    Psi_hat^(h) and S_hat^(h) are running means of the first h retained
    samples, accumulated incrementally.
    """
    X = _mat(obs)
    R = trace.n_retained
    if R < 1:
        raise DomainError("trace has no retained samples")
    sum_s = np.zeros_like(trace.S[0])
    sum_psi = np.zeros_like(trace.psi[0])
    out = np.empty(R)
    for h in range(R):
        sum_s += trace.S[h]
        sum_psi += trace.psi[h]
        k = h + 1
        r = X - (sum_psi / k) @ (sum_s / k)
        out[h] = np.sqrt(np.einsum("ij,ij->", r, r))
    return out


@dataclass
class EvalReport:
    rmse: float
    sparsity_score: float
    support_f1: float
    permutation: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    atom_correlations: list = field(default_factory=list)
    error_trace: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def evaluate(truth_clean, psi_true, q_true, psi_est, s_est, error_trace=None):
    """Align the estimate to the truth, then score it."""
    psi_true = _mat(psi_true)
    psi_est = _mat(psi_est)
    perm, signs, aligned = align_dictionary(psi_est, psi_true)
    s_aligned = align_sources(s_est, perm, signs)
    q_est = (s_aligned != 0).astype(np.int8)
    corr = np.einsum("ij,ij->j", aligned, psi_true)
    return EvalReport(
        rmse=rmse(truth_clean, aligned, s_aligned),
        sparsity_score=sparsity_score(q_est),
        support_f1=support_f1(q_est, q_true),
        permutation=[int(p) for p in perm],
        signs=[int(s) for s in signs],
        atom_correlations=[float(c) for c in corr],
        error_trace=[] if error_trace is None else [float(e) for e in error_trace],
    )
