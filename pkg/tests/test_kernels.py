import os
import subprocess
import sys
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boca import kernels
from boca.checks import random_instance
from boca.distributions import rng_stream
from boca.sampler import indicator_flip_logodds, indicator_logodds_oracle

needs_numba = pytest.mark.skipif(kernels.sweep_indicators_jit is None, reason="numba not installed")


def sweep_args(seed, M=20, N=5, T=64, mu=30.0):
    rng = rng_stream(seed)
    q, _ = np.linalg.qr(rng.standard_normal((M, N)))
    X = rng.standard_normal((M, T))
    Q = (rng.random((N, T)) < 0.3).astype(np.int8)
    return (q.T @ X, q.T @ q, Q, rng.uniform(0.5, mu, N), 0.3,
            kernels.prior_logits(rng.uniform(0.05, 0.5, N)), rng.random((T, N)))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_numba_and_numpy_sweeps_agree(seed):
    proj, gram, Q, mu, s2, logit, u = sweep_args(seed)
    a, b = Q.copy(), Q.copy()
    kernels.sweep_indicators_numpy(proj, gram, a, mu, s2, logit, u)
    kernels.sweep_indicators_jit(proj, gram, b, mu, s2, logit, u)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Q)  # something happened


def test_numpy_sweep_is_sequential_over_atoms():
    # a scalar (t, n) walk using the exact oracle-checked increment
    proj, gram, Q, mu, s2, logit, u = sweep_args(9, N=3, T=10)
    ref = Q.copy()
    N, T = Q.shape
    for t in range(T):
        for n in range(N):
            others = [i for i in range(N) if i != n and ref[i, t]]
            gg = float(sum(gram[i, n] ** 2 for i in others))
            yg = float(sum(proj[i, t] * gram[i, n] for i in others))
            du = kernels._delta_u_vec(ref[n, t:t + 1], proj[n, t:t + 1], np.array([gg]), np.array([yg]),
                                      mu[n], s2, logit[n])[0]
            if u[t, n] > 1 / (1 + np.exp(-0.5 * du)):
                ref[n, t] = 1 - ref[n, t]
    got = Q.copy()
    kernels.sweep_indicators_numpy(proj, gram, got, mu, s2, logit, u)
    assert np.array_equal(got, ref)


def test_sweep_extremes():
    proj, gram, Q, mu, s2, logit, _ = sweep_args(3)
    T, N = Q.shape[1], Q.shape[0]
    for fn in filter(None, (kernels.sweep_indicators_numpy, kernels.sweep_indicators_jit)):
        q = Q.copy()
        fn(proj, gram, q, mu, s2, logit, np.zeros((T, N)))  # u = 0 never flips
        assert np.array_equal(q, Q)
        q = Q.copy()
        fn(proj, gram, q, mu, s2, logit, np.ones((T, N)))  # u = 1 always flips
        assert np.array_equal(q, 1 - Q)


def logodds_oracle_mp(t, n, state, obs, dps=40):
    """The direct marginal log-odds in extended precision.

    At large a2 / sigma2 the float64 version of the same formula loses
    digits to the conditioning of the M x M covariance.
    """
    with mpmath.workdps(dps):
        psi = mpmath.matrix(state.psi.tolist())
        y = mpmath.matrix(obs.X[:, t].tolist())
        M, N = state.psi.shape
        hyp = state.hyp
        lam = min(max(hyp.lam[n], kernels.LAMBDA_EPS), 1.0 - kernels.LAMBDA_EPS)
        u = []
        for eps in (0, 1):
            q = [int(v) for v in state.src.Q[:, t]]
            q[n] = eps
            D = mpmath.diag([mpmath.mpf(q[i]) * mpmath.mpf(hyp.a2[i]) for i in range(N)])
            B = psi * D * psi.T + mpmath.mpf(hyp.sigma2) * mpmath.eye(M)
            quad = (y.T * mpmath.lu_solve(B, y))[0]
            u.append(quad + mpmath.log(mpmath.det(B)) + 2 * eps * mpmath.log(1 / mpmath.mpf(lam) - 1))
        return float(u[0] - u[1])


def test_mp_oracle_agrees_with_float_oracle_at_moderate_scale():
    rng = rng_stream(5)
    for _ in range(20):
        state, obs = random_instance(rng)
        t, n = int(rng.integers(obs.T)), int(rng.integers(state.src.N))
        assert indicator_logodds_oracle(t, n, state, obs) == pytest.approx(logodds_oracle_mp(t, n, state, obs),
                                                                           rel=1e-9, abs=1e-9)


@given(st.integers(0, 2 ** 32), st.sampled_from([1e-3, 1.0, 1e3, 1e6]))
@settings(max_examples=60, deadline=None)
def test_flip_logodds_matches_oracle_property(seed, scale):
    rng = rng_stream(seed)
    state, obs = random_instance(rng)
    # rescale the active variances to probe small and large signal-to-noise ratios
    state = replace(state, hyp=replace(state.hyp, a2=state.hyp.a2 * scale))
    t = int(rng.integers(obs.T))
    n = int(rng.integers(state.src.N))
    du = indicator_flip_logodds(t, n, state, obs)
    ref = logodds_oracle_mp(t, n, state, obs)
    got = -du if state.src.Q[n, t] == 0 else du
    assert abs(got - ref) <= 1e-8 * max(1.0, abs(ref))


def test_delta_u_is_antisymmetric():
    # flipping 0 -> 1 then 1 -> 0 from the same context returns to the start;
    # with orthonormal atoms the cross terms gg, yg are zero
    for p, mu in [(0.3, 5.0), (-2.0, 1e4), (1.0, 0.01), (40.0, 1e8)]:
        up = kernels.delta_u(0, p, 0.0, 0.0, mu, 0.7, 1.3)
        down = kernels.delta_u(1, p, 0.0, 0.0, mu, 0.7, 1.3)
        assert up == pytest.approx(-down, rel=1e-10, abs=1e-10)


def test_delta_u_large_mu_is_finite():
    v = kernels.delta_u(0, 0.01, 0.0, 0.0, 1e14, 1e-10, 3.0)
    assert np.isfinite(v)


def test_prior_logits_clamped():
    v = kernels.prior_logits(np.array([0.0, 1.0, 0.5]))
    assert np.all(np.isfinite(v))
    assert v[2] == 0.0


def test_env_flag_selects_numpy_backend():
    code = "import boca, boca.kernels as k; print(boca.backend(), k.sweep_indicators is k.sweep_indicators_numpy)"
    env = dict(os.environ, BOCA_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
