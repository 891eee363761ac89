"""Hot loops of the sampler: the recursive indicator sweep.

Two interchangeable implementations are provided.  The numba one walks
(t, n) in sweep order with scalar arithmetic; the numpy one exploits the
conditional independence of the columns of Q and vectorizes over t while
keeping the sequential order over n.  Given the same uniforms both make
the same flip decisions.  :func:`sweep_indicators` dispatches to numba
unless ``BOCA_DISABLE_NUMBA`` is set.

Notation per (t, n): ``p = psi_n^T y(t)``, ``gg`` and ``yg`` are the
contributions of the *other* active atoms to ``psi_n^T G G^T psi_n`` and
``y^T G G^T psi_n``, ``mu = a_n^2 / sigma^2`` and
``prior_logit = log(1 / lambda_n - 1)``.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

LAMBDA_EPS = 1e-12


def prior_logits(lam):
    lam = np.clip(np.asarray(lam, dtype=float), LAMBDA_EPS, 1.0 - LAMBDA_EPS)
    return np.log1p(-lam) - np.log(lam)


@njit(cache=True)
def delta_u(q, p, gg, yg, mu, sigma2, prior_logit):
    """Recursive log-odds increment u_new - u_old for flipping one indicator.

    The self term of psi_n^T G G^T psi_n is taken as ||psi_n||^4 = 1 (the
    dictionary invariant), which lets tau be written without the
    cancellation -1 + mu - mu^2/(1+mu) that destroys precision once
    mu = a^2/sigma^2 is large.
    """
    r = mu / (1.0 + mu)
    if q == 0:
        # delta = +1, atom n not in G
        log_dtau = math.log1p(mu) + math.log1p(-r * r * gg)
        tau = (1.0 + mu) * (1.0 - r * r * gg)
        eta = p - r * yg
        return log_dtau - mu * eta * eta / (sigma2 * tau) + 2.0 * prior_logit
    # delta = -1, atom n in G
    log_dtau = math.log1p(mu * mu * gg) - math.log1p(mu)
    tau = -(1.0 + mu * mu * gg) / (1.0 + mu)
    eta = p / (1.0 + mu) - r * yg
    return log_dtau - mu * eta * eta / (sigma2 * tau) - 2.0 * prior_logit


@njit(cache=True)
def _logistic(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _sweep_jit(proj, gram, Q, mu, sigma2, prior_logit, uniforms):
    N, T = Q.shape
    for t in range(T):
        for n in range(N):
            gg = 0.0
            yg = 0.0
            for i in range(N):
                if i != n and Q[i, t] != 0:
                    c = gram[i, n]
                    gg += c * c
                    yg += proj[i, t] * c
            du = delta_u(Q[n, t], proj[n, t], gg, yg, mu[n], sigma2, prior_logit[n])
            if uniforms[t, n] > _logistic(0.5 * du):
                Q[n, t] = 1 - Q[n, t]


def _delta_u_vec(q, p, gg, yg, mu, sigma2, prior_logit):
    r = mu / (1.0 + mu)
    out = np.empty(p.shape)
    off = q == 0
    on = ~off
    g, y, pp = gg[off], yg[off], p[off]
    tau = (1.0 + mu) * (1.0 - r * r * g)
    eta = pp - r * y
    out[off] = np.log1p(mu) + np.log1p(-r * r * g) - mu * eta * eta / (sigma2 * tau) + 2.0 * prior_logit
    g, y, pp = gg[on], yg[on], p[on]
    tau = -(1.0 + mu * mu * g) / (1.0 + mu)
    eta = pp / (1.0 + mu) - r * y
    out[on] = np.log1p(mu * mu * g) - np.log1p(mu) - mu * eta * eta / (sigma2 * tau) - 2.0 * prior_logit
    return out


def _logistic_vec(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _sweep_numpy(proj, gram, Q, mu, sigma2, prior_logit, uniforms):
    N, _ = Q.shape
    for n in range(N):
        g = gram[:, n].copy()
        g[n] = 0.0
        Qf = Q.astype(float)
        gg = (g * g) @ Qf
        yg = g @ (Qf * proj)
        du = _delta_u_vec(Q[n], proj[n], gg, yg, mu[n], sigma2, prior_logit[n])
        flip = uniforms[:, n] > _logistic_vec(0.5 * du)
        Q[n, flip] = 1 - Q[n, flip]


def sweep_indicators_numpy(proj, gram, Q, mu, sigma2, prior_logit, uniforms):
    """Vectorized-over-t indicator sweep; updates ``Q`` (int8, N x T) in place."""
    _sweep_numpy(proj, gram, Q, mu, sigma2, prior_logit, uniforms)


if HAVE_NUMBA:

    def sweep_indicators_jit(proj, gram, Q, mu, sigma2, prior_logit, uniforms):
        """Compiled (t, n) loop; updates ``Q`` (int8, N x T) in place."""
        _sweep_jit(
            np.ascontiguousarray(proj, dtype=np.float64),
            np.ascontiguousarray(gram, dtype=np.float64),
            Q,
            np.ascontiguousarray(mu, dtype=np.float64),
            float(sigma2),
            np.ascontiguousarray(prior_logit, dtype=np.float64),
            np.ascontiguousarray(uniforms, dtype=np.float64),
        )

    sweep_indicators = sweep_indicators_jit
else:
    sweep_indicators_jit = None
    sweep_indicators = sweep_indicators_numpy
