"""Partially collapsed Gibbs sampler for orthogonal component analysis.

One sweep, in this fixed order:

1. every indicator q_n(t), drawn with the amplitudes integrated out
   (recursive log-odds update, see :mod:`boca.kernels`);
2. the active amplitudes of every column, drawn jointly given q(t);
3. each dictionary column psi_n from its von Mises-Fisher conditional on
   the complement of the other columns;
4. the noise variance, then every lambda_n, then every a_n^2.

Steps 1 and 2 must stay adjacent: drawing Q from the S-marginalized
conditional is only valid because S is refreshed immediately after.
Columns t are conditionally independent given (Psi, sigma^2, lambda, a^2),
so sweeping all indicators before all amplitudes is the same draw as the
column-by-column order.
"""
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._accel import backend
from .distributions import (
    VmfParams,
    null_space_basis,
    rng_stream,
    sample_beta,
    sample_inverse_gamma,
    sample_vmf,
)
from .errors import DegenerateStateError, DomainError
from .model import (
    Dictionary,
    HyperState,
    ObservationSet,
    SourceState,
    log_marginal_posterior_arrays,
    orthonormality_error,
    reorthonormalize,
    residual_energy,
)

logger = logging.getLogger(__name__)

REORTHO_TOL = 1e-8


@dataclass(frozen=True)
class GibbsState:
    src: SourceState
    dictionary: Dictionary
    hyp: HyperState
    iteration: int = 0

    @property
    def psi(self):
        return self.dictionary.psi


@dataclass(frozen=True)
class SamplerSettings:
    n_mc: int = 1000
    n_bi: int = 100
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.n_mc < 1 or self.n_bi < 0:
            raise DomainError("n_mc must be >= 1 and n_bi >= 0")
        if self.n_bi >= self.n_mc:
            raise DomainError(f"burn-in ({self.n_bi}) must be shorter than the chain ({self.n_mc})")


@dataclass
class ChainTrace:
    """Samples of a chain run.

    Matrices (``S``, ``Q``, ``psi``) are kept for the retained iterations
    ``n_bi + 1 .. n_mc`` only; scalar traces (``sigma2``, ``lam``, ``a2``,
    ``log_post``) cover every iteration.
    """

    n_mc: int
    n_bi: int
    S: np.ndarray
    Q: np.ndarray
    psi: np.ndarray
    sigma2: np.ndarray
    lam: np.ndarray
    a2: np.ndarray
    log_post: np.ndarray
    elapsed: float = 0.0
    reorthonormalizations: int = 0
    backend: str = field(default_factory=backend)

    @property
    def n_retained(self):
        return self.n_mc - self.n_bi

    @property
    def log_map_values(self):
        """Marginal log-posterior of each retained sample."""
        return self.log_post[self.n_bi:]

    @property
    def retained_iterations(self):
        return np.arange(self.n_bi + 1, self.n_mc + 1)


def sparse_rotation(Z, max_sweeps=20, n_angles=180):
    """Orthogonal R (N x N) approximately minimizing sum |R^T Z|.

    Coordinate descent over Givens rotations: every atom pair is turned by
    the grid angle in [0, pi/2) with the smallest L1 norm of the two
    rotated rows (the L1 norm is pi/2-periodic up to sign and order).
    Stops after a sweep without changes.
    """
    Y = np.array(Z, dtype=float)
    N = Y.shape[0]
    theta = np.linspace(0.0, 0.5 * np.pi, n_angles, endpoint=False)
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    R = np.eye(N)
    for _ in range(max_sweeps):
        changed = False
        for i in range(N):
            for j in range(i + 1, N):
                A = c * Y[i] + s * Y[j]
                B = c * Y[j] - s * Y[i]
                k = int(np.argmin(np.abs(A).sum(1) + np.abs(B).sum(1)))
                if k == 0:
                    continue
                changed = True
                Y[i], Y[j] = A[k], B[k]
                G = np.array([[c[k, 0], -s[k, 0]], [s[k, 0], c[k, 0]]])
                R[:, [i, j]] = R[:, [i, j]] @ G
        if not changed:
            break
    return R


def initial_state(obs, cfg, rotate=True):
    """Data-driven starting point.

    Psi spans the leading left singular subspace of X, all sources are
    inactive, sigma^2 is the mean squared entry of X, lambda_n = 0.1 and
    a_n^2 = alpha1 / alpha0.  With ``rotate`` the singular basis is turned
    inside its span towards maximally sparse projections: single-column
    von Mises-Fisher moves cannot rotate atoms within an N-dimensional
    signal subspace, so a poorly rotated start is never repaired at high
    SNR.
    """
    u, _, _ = np.linalg.svd(obs.X, full_matrices=False)
    psi = u[:, : cfg.N]
    if psi.shape[1] < cfg.N:
        # fewer samples than atoms: complete with an orthonormal complement
        psi = np.hstack([psi, null_space_basis(psi)[:, : cfg.N - psi.shape[1]]])
    if rotate:
        psi = psi @ sparse_rotation(psi.T @ obs.X)
    sigma2 = float(np.mean(obs.X ** 2)) or 1.0
    hyp = HyperState(sigma2, np.full(cfg.N, 0.1), np.full(cfg.N, cfg.alpha1 / cfg.alpha0))
    return GibbsState(SourceState.zeros(cfg.N, obs.T), Dictionary(reorthonormalize(psi)), hyp)


# ---------------------------------------------------------------------------
# indicators


def _indicator_inputs(state, obs):
    psi = state.psi
    hyp = state.hyp
    proj = psi.T @ obs.X
    gram = psi.T @ psi
    mu = hyp.a2 / hyp.sigma2
    return proj, gram, mu, kernels.prior_logits(hyp.lam)


def indicator_flip_logodds(t, n, state, obs):
    """Recursive increment u_new - u_old for flipping q_n(t) from its current value."""
    psi = state.psi
    q = state.src.Q[:, t]
    y = obs.X[:, t]
    proj = psi.T @ y
    c = psi.T @ psi[:, n]
    others = (q != 0) & (np.arange(len(q)) != n)
    gg = float(np.sum(c[others] ** 2))
    yg = float(np.sum(proj[others] * c[others]))
    mu = state.hyp.a2[n] / state.hyp.sigma2
    return float(kernels.delta_u(int(q[n]), float(proj[n]), gg, yg, float(mu), state.hyp.sigma2,
                                 float(kernels.prior_logits(state.hyp.lam[n]))))


def indicator_logodds_oracle(t, n, state, obs):
    """u_0 - u_1 by explicit inverse and determinant of the marginal covariance.

    B_eps = a_n^2 Psi diag(q^[eps]) Psi^T + sigma^2 I, and
    u_eps = y^T B_eps^{-1} y + log|B_eps| + 2 eps log(1/lambda_n - 1).
    P(q_n(t) = 1 | rest) is the logistic of (u_0 - u_1) / 2.  Meant for small
    instances.
    """
    psi = state.psi
    hyp = state.hyp
    y = obs.X[:, t]
    M = psi.shape[0]
    lam = min(max(hyp.lam[n], kernels.LAMBDA_EPS), 1.0 - kernels.LAMBDA_EPS)
    u = []
    for eps in (0, 1):
        q = state.src.Q[:, t].astype(float)
        q[n] = eps
        B = (psi * (q * hyp.a2)) @ psi.T + hyp.sigma2 * np.eye(M)
        _, logdet = np.linalg.slogdet(B)
        u.append(y @ np.linalg.solve(B, y) + logdet + 2 * eps * np.log(1.0 / lam - 1.0))
    return float(u[0] - u[1])


def sample_indicators(state, obs, rng, sweep=None):
    """Redraw all of Q (amplitudes marginalized); returns a new int8 array."""
    N, T = state.src.Q.shape
    proj, gram, mu, logits = _indicator_inputs(state, obs)
    uniforms = rng.random((T, N))
    Q = np.array(state.src.Q, dtype=np.int8)
    (sweep or kernels.sweep_indicators)(proj, gram, Q, mu, state.hyp.sigma2, logits, uniforms)
    return Q


def sweep_indicators_column(t, state, obs, rng):
    """Redraw the indicator column q(t) in order n = 1..N."""
    N = state.src.N
    proj, gram, mu, logits = _indicator_inputs(state, obs)
    q = np.array(state.src.Q[:, t : t + 1], dtype=np.int8)
    kernels.sweep_indicators(np.ascontiguousarray(proj[:, t : t + 1]), gram, q, mu, state.hyp.sigma2, logits,
                             rng.random((1, N)))
    return q[:, 0]


# ---------------------------------------------------------------------------
# amplitudes


def amplitude_posterior(state, Q):
    """Gain mu/(1+mu) and variance sigma^2 mu/(1+mu) of each active amplitude."""
    mu = state.hyp.a2 / state.hyp.sigma2
    gain = mu / (1.0 + mu)
    return gain, state.hyp.sigma2 * gain


def sample_amplitudes(Q, state, obs, rng):
    """Draw S given Q: inactive entries are 0, active ones independent Gaussians.

    With G^T G = I the joint Gaussian over the L active entries of s(t)
    has mean Lambda_1 G^T y(t) and covariance sigma^2 Lambda_1 with
    Lambda_1 = diag(mu_n / (1 + mu_n)).
    """
    gain, var = amplitude_posterior(state, Q)
    proj = state.psi.T @ obs.X
    z = rng.standard_normal(Q.shape)
    S = gain[:, None] * proj + np.sqrt(var)[:, None] * z
    return np.where(Q != 0, S, 0.0)


def sample_amplitudes_column(t, q, state, obs, rng):
    gain, var = amplitude_posterior(state, q)
    p = state.psi.T @ obs.X[:, t]
    z = rng.standard_normal(q.shape)
    return np.where(q != 0, gain * p + np.sqrt(var) * z, 0.0)


# ---------------------------------------------------------------------------
# dictionary


def dictionary_column_parameter(n, state, obs):
    """Null-space basis N_n of Psi_{-n} and the vMF parameter of v_n.

    c = N_n^T sum_t s_n(t) [y(t) - Psi_{-n} s_{-n}(t)] / sigma^2.
    """
    psi = state.psi
    S = state.src.S
    keep = np.arange(psi.shape[1]) != n
    s_n = S[n]
    b = obs.X @ s_n - psi[:, keep] @ (S[keep] @ s_n)
    basis = null_space_basis(psi[:, keep])
    return basis, basis.T @ b / state.hyp.sigma2


def sample_dictionary_column(n, state, obs, rng):
    basis, c = dictionary_column_parameter(n, state, obs)
    return basis @ sample_vmf(VmfParams(c), rng)


# ---------------------------------------------------------------------------
# noise variance and hyperparameters


def sample_noise_variance(state, obs, rng, noise_prior=None, size=None):
    """sigma^2 ~ IG(MT/2, R/2), R the residual energy.

    ``noise_prior=(shape0, scale0)`` adds a proper IG(shape0, scale0) prior
    in place of the default improper one; only the sampler-correctness
    harness uses it, since it needs to simulate from the prior.
    """
    r = residual_energy(obs.X, state.psi, state.src.S)
    shape0, scale0 = noise_prior if noise_prior is not None else (0.0, 0.0)
    shape = 0.5 * obs.M * obs.T + shape0
    scale = 0.5 * r + scale0
    if scale <= 0:
        raise DegenerateStateError("zero residual energy: noise-variance conditional is improper")
    return sample_inverse_gamma(shape, scale, rng, size=size)


def sample_lambda(n, state, rng, size=None):
    """lambda_n ~ Beta(m_n(1) + 1, m_n(0) + 1).

    The conditional density is proportional to
    (1 - lambda)^{m_n(0)} lambda^{m_n(1)}; the first Beta shape goes with
    the active count.
    """
    m1 = int(state.src.m1[n])
    return sample_beta(m1 + 1, state.src.T - m1 + 1, rng, size=size)


def sample_lambda_swapped(n, state, rng, size=None):
    """Deliberately wrong lambda update (shapes exchanged), for fault injection."""
    m1 = int(state.src.m1[n])
    return sample_beta(state.src.T - m1 + 1, m1 + 1, rng, size=size)


def sample_active_variance(n, state, cfg, rng, size=None):
    """a_n^2 ~ IG(m_n(1)/2 + alpha0, ||s_n||^2/2 + alpha1)."""
    s = state.src.S[n]
    m1 = int(state.src.m1[n])
    return sample_inverse_gamma(0.5 * m1 + cfg.alpha0, 0.5 * float(s @ s) + cfg.alpha1, rng, size=size)


# ---------------------------------------------------------------------------
# sweeps and chains


def gibbs_sweep(state, obs, cfg, rng, noise_prior=None, lambda_update=None, sweep=None):
    """One full PCG sweep; returns the next state.

    ``lambda_update(n, state, rng)`` replaces :func:`sample_lambda` (used to
    inject faults when testing the correctness harness).
    """
    lambda_update = lambda_update or sample_lambda
    Q = sample_indicators(state, obs, rng, sweep=sweep)
    S = sample_amplitudes(Q, state, obs, rng)
    state = replace(state, src=SourceState(S, Q))

    psi = np.array(state.psi)
    for n in range(cfg.N):
        psi[:, n] = sample_dictionary_column(n, state, obs, rng)
        state = replace(state, dictionary=Dictionary(psi))

    sigma2 = sample_noise_variance(state, obs, rng, noise_prior=noise_prior)
    state = replace(state, hyp=replace(state.hyp, sigma2=sigma2))
    lam = np.array([lambda_update(n, state, rng) for n in range(cfg.N)])
    a2 = np.array([sample_active_variance(n, state, cfg, rng) for n in range(cfg.N)])
    return replace(state, hyp=HyperState(sigma2, lam, a2), iteration=state.iteration + 1)


def _enforce_orthonormality(state):
    dev = orthonormality_error(state.psi)
    if dev <= REORTHO_TOL:
        return state, False
    logger.warning("iteration %d: dictionary drifted off the manifold by %.3g; re-orthonormalizing",
                   state.iteration, dev)
    return replace(state, dictionary=Dictionary(reorthonormalize(state.psi))), True


def run_chain(obs, cfg, settings=None, init=None, progress=None, rng=None):
    """Run ``settings.n_mc`` sweeps and keep the last ``n_mc - n_bi``.

    ``progress(state, log_post)`` is called after every sweep if given.
    """
    settings = settings or SamplerSettings()
    if not isinstance(obs, ObservationSet):
        obs = ObservationSet(obs)
    if (obs.M, obs.T) != (cfg.M, cfg.T):
        raise DomainError(f"data is {obs.M}x{obs.T} but config expects {cfg.M}x{cfg.T}")
    rng = rng if rng is not None else rng_stream(settings.seed, settings.stream_id)
    state = init if init is not None else initial_state(obs, cfg)

    n_mc, n_bi, N, M, T = settings.n_mc, settings.n_bi, cfg.N, cfg.M, cfg.T
    R = n_mc - n_bi
    trace = ChainTrace(
        n_mc=n_mc,
        n_bi=n_bi,
        S=np.empty((R, N, T)),
        Q=np.empty((R, N, T), dtype=np.int8),
        psi=np.empty((R, M, N)),
        sigma2=np.empty(n_mc),
        lam=np.empty((n_mc, N)),
        a2=np.empty((n_mc, N)),
        log_post=np.empty(n_mc),
    )
    t0 = time.perf_counter()
    for h in range(n_mc):
        state = gibbs_sweep(state, obs, cfg, rng)
        state, fixed = _enforce_orthonormality(state)
        trace.reorthonormalizations += fixed
        lp = log_marginal_posterior_arrays(state.src.S, state.src.Q, state.psi, obs.X, cfg.alpha0, cfg.alpha1)
        trace.sigma2[h] = state.hyp.sigma2
        trace.lam[h] = state.hyp.lam
        trace.a2[h] = state.hyp.a2
        trace.log_post[h] = lp
        if h >= n_bi:
            r = h - n_bi
            trace.S[r] = state.src.S
            trace.Q[r] = state.src.Q
            trace.psi[r] = state.psi
        if progress is not None:
            progress(state, lp)
    trace.elapsed = time.perf_counter() - t0
    return trace
