import math

import numpy as np
import pytest
from conftest import random_orthonormal
from scipy import integrate
from scipy.special import gammaln

from boca.distributions import rng_stream
from boca.errors import DomainError
from boca.model import (
    Dictionary,
    HyperState,
    ModelConfig,
    ObservationSet,
    SourceState,
    bg_log_prior,
    log_likelihood,
    log_marginal_posterior,
    log_marginal_posterior_arrays,
    orthonormality_error,
    reorthonormalize,
    snr_db,
)


def loop_log_likelihood(X, psi, S, sigma2):
    M, T = X.shape
    total = 0.0
    for t in range(T):
        for m in range(M):
            mean = sum(psi[m, n] * S[n, t] for n in range(psi.shape[1]))
            r = X[m, t] - mean
            total += -0.5 * math.log(2 * math.pi * sigma2) - r * r / (2 * sigma2)
    return total


def loop_bg_prior(s, q, lam, a2):
    total = 0.0
    for sv, qv in zip(s, q):
        if qv:
            total += math.log(lam) - 0.5 * math.log(2 * math.pi * a2) - sv * sv / (2 * a2)
        else:
            total += math.log(1 - lam)
    return total


def test_likelihood_matches_scalar_loop(rng):
    M, N, T = 5, 2, 7
    psi = random_orthonormal(M, N, rng)
    S = rng.standard_normal((N, T))
    X = rng.standard_normal((M, T))
    got = log_likelihood(ObservationSet(X), Dictionary(psi), SourceState.from_amplitudes(S), 0.7)
    assert got == pytest.approx(loop_log_likelihood(X, psi, S, 0.7), rel=1e-12)


def test_bg_prior_matches_scalar_loop(rng):
    q = np.array([1, 0, 0, 1, 1, 0])
    s = np.where(q, rng.standard_normal(6), 0.0)
    assert bg_log_prior(s, q, 0.3, 2.5) == pytest.approx(loop_bg_prior(s, q, 0.3, 2.5), rel=1e-12)
    # edge values of lambda with compatible supports are finite
    assert np.isfinite(bg_log_prior(np.zeros(3), np.zeros(3), 0.0, 1.0))
    assert bg_log_prior(np.ones(2), np.ones(2), 0.0, 1.0) == -np.inf


# --- quadrature oracle for the marginal posterior ---------------------------


def oracle_log_marginal(S, Q, psi, X, alpha0, alpha1):
    """Integrate sigma^2 (with its scale gamma), lambda_n and a_n^2 numerically.

    Priors: sigma^2 | gamma ~ IG(1, gamma/2), p(gamma) = 1/gamma,
    lambda ~ U(0, 1), a^2 ~ IG(alpha0, alpha1).  Returns the log of the
    integral of likelihood times priors (Psi prior constant left out).
    """
    M, T = X.shape
    r = float(np.sum((X - psi @ S) ** 2))
    mt = M * T

    def noise(lg, ls):
        s2, g = math.exp(ls), math.exp(lg)
        lik = -0.5 * mt * math.log(2 * math.pi * s2) - r / (2 * s2)
        prior = math.log(g / 2) - 2 * ls - g / (2 * s2) - lg  # IG(1, g/2) and 1/gamma
        return math.exp(lik + prior + ls + lg)  # Jacobians of the log scales

    i_noise, _ = integrate.dblquad(noise, -25, 25, -40, 40, epsabs=0, epsrel=1e-10)
    total = math.log(i_noise)
    for n in range(S.shape[0]):
        m1 = int(Q[n].sum())
        m0 = T - m1
        ss = float(S[n] @ S[n])
        i_lam, _ = integrate.quad(lambda x: x ** m1 * (1 - x) ** m0, 0, 1, epsabs=0, epsrel=1e-12)

        def slab(la):
            a2 = math.exp(la)
            v = (-0.5 * m1 * math.log(2 * math.pi * a2) - ss / (2 * a2)
                 + alpha0 * math.log(alpha1) - gammaln(alpha0) - (alpha0 + 1) * la - alpha1 / a2)
            return math.exp(v + la)

        i_a, _ = integrate.quad(slab, -40, 40, epsabs=0, epsrel=1e-12, limit=400)
        total += math.log(i_lam) + math.log(i_a)
    return total


def dropped_constant(M, N, T, alpha0, alpha1):
    mt = M * T
    return (gammaln(0.5 * mt) + 0.5 * mt * math.log(2) - 0.5 * mt * math.log(2 * math.pi)
            + N * (alpha0 * math.log(alpha1) - gammaln(alpha0)))


@pytest.mark.parametrize("q", [[1, 0], [1, 1], [0, 0]])
def test_marginal_posterior_matches_quadrature(q):
    rng = rng_stream(77)
    M, N, T = 3, 1, 2
    psi = random_orthonormal(M, N, rng)
    Q = np.array([q], dtype=np.int8)
    S = np.where(Q != 0, rng.standard_normal((N, T)), 0.0)
    X = psi @ S + 0.5 * rng.standard_normal((M, T))
    got = log_marginal_posterior_arrays(S, Q, psi, X, 2.0, 1.0)
    ref = oracle_log_marginal(S, Q, psi, X, 2.0, 1.0) - dropped_constant(M, N, T, 2.0, 1.0)
    assert got == pytest.approx(ref, abs=1e-4)


def test_marginal_posterior_differences_are_constant_free():
    rng = rng_stream(78)
    M, N, T = 3, 1, 2
    psi = random_orthonormal(M, N, rng)
    X = rng.standard_normal((M, T))
    states = []
    for q in ([1, 0], [0, 1], [1, 1]):
        Q = np.array([q], dtype=np.int8)
        states.append((np.where(Q != 0, rng.standard_normal((N, T)), 0.0), Q))
    got = [log_marginal_posterior_arrays(S, Q, psi, X, 3.0, 2.0) for S, Q in states]
    ref = [oracle_log_marginal(S, Q, psi, X, 3.0, 2.0) for S, Q in states]
    assert np.allclose(np.diff(got), np.diff(ref), atol=1e-4)


def test_marginal_posterior_wrapper_and_zero_residual(caplog):
    psi = np.eye(3)[:, :1]
    S = np.array([[1.0, 2.0]])
    X = psi @ S
    cfg = ModelConfig(3, 1, 2)
    assert log_marginal_posterior(SourceState.from_amplitudes(S), Dictionary(psi), ObservationSet(X), cfg) == -np.inf
    X2 = X + 0.1
    v = log_marginal_posterior(SourceState.from_amplitudes(S), Dictionary(psi), ObservationSet(X2), cfg)
    assert v == log_marginal_posterior_arrays(S, (S != 0).astype(np.int8), psi, X2, 2.0, 1.0)
    with pytest.raises(DomainError):
        log_marginal_posterior(SourceState.from_amplitudes(S), Dictionary(np.eye(4)[:, :1]), ObservationSet(X2), cfg)


# --- domain types ------------------------------------------------------------


def test_observation_set_copies_and_freezes():
    a = np.ones((2, 3))
    obs = ObservationSet(a)
    a[0, 0] = 5
    assert obs.X[0, 0] == 1
    with pytest.raises(ValueError):
        obs.X[0, 0] = 2
    with pytest.raises(DomainError):
        ObservationSet(np.array([[np.nan]]))
    with pytest.raises(DomainError):
        ObservationSet(np.ones(3))


def test_dictionary_validation(rng):
    Dictionary(random_orthonormal(5, 3, rng))
    with pytest.raises(DomainError):
        Dictionary(np.ones((3, 2)))
    with pytest.raises(DomainError):
        Dictionary(np.eye(2, 3))


def test_reorthonormalize(rng):
    p = random_orthonormal(6, 3, rng) + 1e-4 * rng.standard_normal((6, 3))
    assert orthonormality_error(p) > 1e-6
    assert orthonormality_error(reorthonormalize(p)) < 1e-14


def test_source_state_coupling():
    with pytest.raises(DomainError):
        SourceState(np.array([[1.0, 0.0]]), np.array([[0, 0]]))
    with pytest.raises(DomainError):
        SourceState(np.zeros((1, 2)), np.array([[2, 0]]))
    st = SourceState(np.array([[0.0, 1.5]]), np.array([[1, 1]]))  # active with zero amplitude is allowed
    assert st.m1.tolist() == [2] and st.m0.tolist() == [0]
    assert SourceState.zeros(2, 3).Q.dtype == np.int8


def test_hyper_state_validation():
    HyperState(1.0, [0.0, 1.0], [1.0, 2.0])
    for bad in [(0.0, [0.5], [1.0]), (1.0, [1.5], [1.0]), (1.0, [0.5], [0.0]), (1.0, [0.5, 0.5], [1.0])]:
        with pytest.raises(DomainError):
            HyperState(*bad)


def test_model_config():
    cfg = ModelConfig(50, 2, 100)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    for bad in [dict(M=3, N=3, T=1), dict(M=3, N=1, T=0), dict(M=3, N=1, T=2, nu=3.0),
                dict(M=3, N=1, T=2, alpha0=0.0), dict(M=3.5, N=1, T=2)]:
        with pytest.raises(DomainError):
            ModelConfig(**bad)


def test_snr_db():
    X = np.full((2, 5), 2.0)
    assert snr_db(ObservationSet(X), 0.4) == pytest.approx(10.0)
    assert snr_db(ObservationSet(np.zeros((2, 2))), 1.0) == -np.inf
    with pytest.raises(DomainError):
        snr_db(ObservationSet(X), 0.0)
