"""Sampler-correctness harness.

* oracle equivalence of the recursive indicator log-odds;
* conjugate-update moments at fixed conditioning;
* Stiefel projector mean and vMF resultant length;
* a successive-conditional joint-distribution test (forward simulation of
  prior + likelihood against a chain that alternates one Gibbs sweep with
  a fresh draw of the data).

Every check returns a :class:`CheckResult`; nothing here prints.
"""
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, special

from .distributions import (
    VmfParams,
    rng_stream,
    sample_beta,
    sample_inverse_gamma,
    sample_uniform_stiefel,
    sample_vmf,
)
from .model import Dictionary, HyperState, ModelConfig, ObservationSet, SourceState
from .sampler import (
    GibbsState,
    amplitude_posterior,
    gibbs_sweep,
    indicator_flip_logodds,
    indicator_logodds_oracle,
    sample_active_variance,
    sample_amplitudes,
    sample_lambda,
    sample_noise_variance,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def to_dict(self):
        return asdict(self)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# indicator oracle


def random_instance(rng, M=None, N=None, T=3):
    """Small random Gibbs state with data; dims default to M <= 8, N <= min(4, M - 1)."""
    M = M or int(rng.integers(2, 9))
    N = N or int(rng.integers(1, min(4, M - 1) + 1))
    psi = sample_uniform_stiefel(M, N, rng)
    Q = (rng.random((N, T)) < 0.5).astype(np.int8)
    S = np.where(Q != 0, rng.standard_normal((N, T)), 0.0)
    sigma2 = float(rng.uniform(0.05, 2.0))
    hyp = HyperState(sigma2, rng.uniform(0.02, 0.98, N), rng.uniform(0.1, 10.0, N))
    X = psi @ (S * np.sqrt(hyp.a2)[:, None]) + np.sqrt(sigma2) * rng.standard_normal((M, T))
    state = GibbsState(SourceState(S, Q), Dictionary(psi), hyp)
    return state, ObservationSet(X)


@_timed
def indicator_oracle_check(n_instances=200, seed=0, tol=1e-8):
    """Recursive flip log-odds vs. the explicit determinant/solve formula.

    The recursion returns u_new - u_old; the oracle returns u_0 - u_1.
    They agree up to the sign of the flip direction.
    """
    rng = rng_stream(seed, 11)
    worst = 0.0
    worst_rel = 0.0
    for _ in range(n_instances):
        state, obs = random_instance(rng)
        t = int(rng.integers(obs.T))
        n = int(rng.integers(state.src.N))
        du = indicator_flip_logodds(t, n, state, obs)
        ref = indicator_logodds_oracle(t, n, state, obs)
        got = -du if state.src.Q[n, t] == 0 else du
        err = abs(got - ref)
        worst = max(worst, err)
        worst_rel = max(worst_rel, err / max(1.0, abs(ref)))
    return CheckResult("indicator_oracle", worst <= tol,
                       {"instances": n_instances, "max_abs_error": worst, "max_rel_error": worst_rel, "tol": tol})


# ---------------------------------------------------------------------------
# conjugate moments


def _moment_z(draws, mean, var):
    """z-scores of the sample mean and sample variance against the truth."""
    draws = np.asarray(draws, dtype=float)
    n = draws.shape[0]
    m = draws.mean(axis=0)
    c = draws - m
    v = np.mean(c * c, axis=0)
    m4 = np.mean(c ** 4, axis=0)
    z_mean = (m - mean) / np.sqrt(var / n)
    z_var = (v - var) / np.sqrt(np.maximum(m4 - v * v, 1e-300) / n)
    return np.atleast_1d(z_mean), np.atleast_1d(z_var)


def _ig_moments(shape, scale):
    return scale / (shape - 1.0), scale ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))


def _beta_moments(a, b):
    return a / (a + b), a * b / ((a + b) ** 2 * (a + b + 1.0))


@_timed
def conjugate_moment_check(n_draws=10 ** 6, seed=0, n_se=3.0):
    """Redraw each conjugate block many times and compare with analytic moments."""
    rng = rng_stream(seed, 12)
    M, N, T = 6, 3, 12
    cfg = ModelConfig(M, N, T)
    state, obs = random_instance(rng, M=M, N=N, T=T)
    zs = {}

    # amplitude block: a single data column replicated n_draws times
    q = np.array([1, 0, 1], dtype=np.int8)
    y = obs.X[:, 0]
    big = ObservationSet(np.repeat(y[:, None], n_draws, axis=1))
    Qbig = np.repeat(q[:, None], n_draws, axis=1)
    big_state = replace(state, src=SourceState.zeros(N, n_draws))
    S = sample_amplitudes(Qbig, big_state, big, rng)
    gain, var = amplitude_posterior(state, q)
    act = q != 0
    mean = gain[act] * (state.psi.T @ y)[act]
    zm, zv = _moment_z(S[act].T, mean, var[act])
    zs["amplitude_mean"], zs["amplitude_var"] = zm, zv
    if np.any(S[~act] != 0):
        zs["amplitude_inactive"] = np.array([np.inf])
    del S, Qbig, big

    # noise variance
    r = float(np.sum((obs.X - state.psi @ state.src.S) ** 2))
    draws = sample_noise_variance(state, obs, rng, size=n_draws)
    zs["sigma2_mean"], zs["sigma2_var"] = _moment_z(draws, *_ig_moments(0.5 * M * T, 0.5 * r))

    # lambda_n and a_n^2 for n = 0
    m1 = int(state.src.m1[0])
    draws = sample_lambda(0, state, rng, size=n_draws)
    zs["lambda_mean"], zs["lambda_var"] = _moment_z(draws, *_beta_moments(m1 + 1, T - m1 + 1))
    s = state.src.S[0]
    draws = sample_active_variance(0, state, cfg, rng, size=n_draws)
    shape = 0.5 * m1 + cfg.alpha0
    zs["a2_mean"], zs["a2_var"] = _moment_z(draws, *_ig_moments(shape, 0.5 * float(s @ s) + cfg.alpha1))

    worst = max(float(np.max(np.abs(v))) for v in zs.values())
    details = {k: [float(x) for x in v] for k, v in zs.items()}
    details.update(n_draws=n_draws, max_abs_z=worst, threshold=n_se)
    return CheckResult("conjugate_moments", worst < n_se, details)


# ---------------------------------------------------------------------------
# manifold samplers


@_timed
def stiefel_projector_check(M=6, N=3, n_draws=10 ** 5, seed=0, tol=0.01):
    """E[Psi Psi^T] = (N/M) I under the uniform law, for both construction methods."""
    out = {}
    for i, method in enumerate(("sequential", "direct")):
        rng = rng_stream(seed, 20 + i)
        acc = np.zeros((M, M))
        for _ in range(n_draws):
            p = sample_uniform_stiefel(M, N, rng, method=method)
            acc += p @ p.T
        out[method] = float(np.max(np.abs(acc / n_draws - (N / M) * np.eye(M))))
    return CheckResult("stiefel_projector", max(out.values()) < tol, {"max_error": out, "tol": tol})


def vmf_mean_cosine(kappa, d):
    """E[mu^T v] for v ~ vMF(kappa mu) on S^{d-1}, by 1-D quadrature.

    The cosine t has density proportional to exp(kappa t) (1 - t^2)^((d-3)/2)
    on [-1, 1].  Substituting t = cos(theta) removes the endpoint
    singularity at d = 2; the exponential is shifted by kappa to avoid
    overflow.
    """
    if kappa == 0:
        return 0.0

    def w(th):
        return math.exp(kappa * (math.cos(th) - 1.0)) * math.sin(th) ** (d - 2)

    pts = [min(math.pi / 2, 4.0 / math.sqrt(kappa))] if kappa > 1 else None
    kw = dict(points=pts, limit=200, epsabs=0, epsrel=1e-12)
    num, _ = integrate.quad(lambda th: math.cos(th) * w(th), 0.0, math.pi, **kw)
    den, _ = integrate.quad(w, 0.0, math.pi, **kw)
    return num / den


def vmf_mean_cosine_bessel(kappa, d):
    """Closed form I_{d/2}(kappa) / I_{d/2-1}(kappa), used as a cross-check."""
    if kappa == 0:
        return 0.0
    return float(special.ive(0.5 * d, kappa) / special.ive(0.5 * d - 1.0, kappa))


@_timed
def vmf_resultant_check(kappas=(0.0, 1.0, 10.0, 100.0), dims=(3, 10), n_draws=10 ** 6, seed=0, tol=0.003):
    rng = rng_stream(seed, 30)
    rows = []
    worst = 0.0
    for d in dims:
        mu = rng.standard_normal(d)
        mu /= np.linalg.norm(mu)
        for k in kappas:
            v = sample_vmf(VmfParams(k * mu), rng, size=n_draws)
            emp = float(np.mean(v @ mu))
            ref = vmf_mean_cosine(k, d)
            worst = max(worst, abs(emp - ref))
            rows.append({"d": d, "kappa": k, "empirical": emp, "quadrature": ref})
    return CheckResult("vmf_resultant", worst < tol, {"rows": rows, "max_error": worst, "tol": tol})


# ---------------------------------------------------------------------------
# joint-distribution (successive-conditional) test


@dataclass(frozen=True)
class JointCheckSettings:
    n_rounds: int = 10_000
    n_forward: int = 10_000
    n_batches: int = 50
    seed: int = 0
    noise_prior: tuple = (3.0, 2.0)
    alpha0: float = 5.0
    alpha1: float = 5.0


def draw_from_prior(cfg, rng, noise_prior):
    """Parameter state drawn from the joint prior with a proper IG noise-variance prior."""
    N, T = cfg.N, cfg.T
    psi = sample_uniform_stiefel(cfg.M, N, rng)
    lam = sample_beta(1.0, 1.0, rng, size=N)
    a2 = sample_inverse_gamma(cfg.alpha0, cfg.alpha1, rng, size=N)
    sigma2 = float(sample_inverse_gamma(noise_prior[0], noise_prior[1], rng))
    state = GibbsState(SourceState.zeros(N, T), Dictionary(psi), HyperState(sigma2, lam, a2))
    return regenerate_sources(state, rng)


def regenerate_sources(state, rng):
    N, T = state.src.Q.shape
    Q = (rng.random((N, T)) < state.hyp.lam[:, None]).astype(np.int8)
    S = np.where(Q != 0, np.sqrt(state.hyp.a2)[:, None] * rng.standard_normal((N, T)), 0.0)
    return replace(state, src=SourceState(S, Q))


def regenerate_data(state, rng):
    M = state.psi.shape[0]
    T = state.src.T
    X = state.psi @ state.src.S + math.sqrt(state.hyp.sigma2) * rng.standard_normal((M, T))
    return ObservationSet(X)


def joint_statistics(state):
    """Monitored functionals of the parameters (one value per entry)."""
    hyp = state.hyp
    rate = state.src.Q.mean(axis=1, dtype=float)
    s2 = np.mean(state.src.S ** 2, axis=1) / hyp.a2
    return np.concatenate([
        hyp.lam,
        np.log(hyp.a2),
        rate,
        hyp.lam * rate,
        s2,
        state.psi[0] ** 2,
        [math.log(hyp.sigma2)],
    ])


def joint_statistic_names(N):
    names = []
    for base in ("lambda", "log_a2", "q_rate", "lambda_x_q_rate", "s2_over_a2", "psi0_sq"):
        names += [f"{base}[{n}]" for n in range(N)]
    return names + ["log_sigma2"]


def _batch_means_se(x, n_batches):
    n = (x.shape[0] // n_batches) * n_batches
    b = x[:n].reshape(n_batches, -1, x.shape[1]).mean(axis=1)
    return b.std(axis=0, ddof=1) / math.sqrt(n_batches)


@_timed
def joint_distribution_check(M=6, N=2, T=12, settings=None, lambda_update=None, z_threshold=4.0):
    """Forward (prior + likelihood) draws vs. the successive-conditional chain.

    The chain starts at a forward draw, so no burn-in is needed.  Its
    standard errors come from batch means; the forward draws are iid.
    ``lambda_update`` swaps in a different lambda conditional (fault
    injection).
    """
    settings = settings or JointCheckSettings()
    cfg = ModelConfig(M, N, T, alpha0=settings.alpha0, alpha1=settings.alpha1)
    rng_f = rng_stream(settings.seed, 40)
    rng_c = rng_stream(settings.seed, 41)

    fwd = np.empty((settings.n_forward, 6 * N + 1))
    for i in range(settings.n_forward):
        state = draw_from_prior(cfg, rng_f, settings.noise_prior)
        fwd[i] = joint_statistics(state)

    state = draw_from_prior(cfg, rng_c, settings.noise_prior)
    chain = np.empty((settings.n_rounds, 6 * N + 1))
    for i in range(settings.n_rounds):
        obs = regenerate_data(state, rng_c)
        state = gibbs_sweep(state, obs, cfg, rng_c, noise_prior=settings.noise_prior,
                            lambda_update=lambda_update)
        chain[i] = joint_statistics(state)

    se_f = fwd.std(axis=0, ddof=1) / math.sqrt(settings.n_forward)
    se_c = _batch_means_se(chain, settings.n_batches)
    z = (chain.mean(axis=0) - fwd.mean(axis=0)) / np.sqrt(se_f ** 2 + se_c ** 2)
    names = joint_statistic_names(N)
    worst = float(np.max(np.abs(z)))
    details = {
        "dims": {"M": M, "N": N, "T": T},
        "rounds": settings.n_rounds,
        "z": dict(zip(names, [float(v) for v in z])),
        "max_abs_z": worst,
        "threshold": z_threshold,
        "finite": bool(np.all(np.isfinite(z))),
    }
    return CheckResult("joint_distribution", bool(worst < z_threshold), details)


def fault_injection_check(M=6, N=2, T=12, settings=None, z_threshold=6.0):
    """The harness must flag a lambda update with exchanged Beta shapes."""
    from .sampler import sample_lambda_swapped

    res = joint_distribution_check(M, N, T, settings=settings, lambda_update=sample_lambda_swapped,
                                   z_threshold=z_threshold)
    # here a large z is the desired outcome
    return CheckResult("fault_injection", res.details["max_abs_z"] > z_threshold, res.details, res.elapsed)


def run_checks(level="quick", seed=0):
    """``quick``: oracle equivalence on 50 instances.  ``full``: everything."""
    if level == "quick":
        return [indicator_oracle_check(50, seed=seed)]
    if level != "full":
        raise ValueError(f"unknown validation level {level!r}")
    js = JointCheckSettings(seed=seed)
    return [
        indicator_oracle_check(200, seed=seed),
        conjugate_moment_check(seed=seed),
        stiefel_projector_check(seed=seed),
        vmf_resultant_check(seed=seed),
        joint_distribution_check(settings=js),
        fault_injection_check(settings=js),
    ]
