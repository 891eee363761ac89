"""Numba vs. numpy indicator sweep, and end-to-end chain time per backend.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The chain comparison runs each backend in a subprocess, because the
backend is fixed at import time by BOCA_DISABLE_NUMBA.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from boca import kernels
from boca.distributions import rng_stream, sample_uniform_stiefel

CHAIN_SNIPPET = """
import json, time
from boca import backend, rng_stream, ModelConfig, SamplerSettings, run_chain
from boca.synthdata import make_bench_trial
ds = make_bench_trial({N}, 10.0, rng_stream(1, 1))
cfg = ModelConfig(128, {N}, 256)
run_chain(ds.obs, cfg, SamplerSettings(3, 1))  # warm up / compile
t = time.perf_counter()
run_chain(ds.obs, cfg, SamplerSettings({n_mc}, 10))
print(json.dumps({{"backend": backend(), "seconds": time.perf_counter() - t}}))
"""


def sweep_inputs(M, N, T, seed=0):
    rng = rng_stream(seed, 0)
    psi = sample_uniform_stiefel(M, N, rng)
    X = rng.standard_normal((M, T))
    Q = (rng.random((N, T)) < 0.1).astype(np.int8)
    return (psi.T @ X, psi.T @ psi, Q, np.full(N, 50.0), 0.2,
            kernels.prior_logits(np.full(N, 0.1)), rng.random((T, N)))


def time_sweep(fn, args, repeat):
    proj, gram, Q0, mu, s2, logit, u = args
    best = np.inf
    out = None
    for _ in range(repeat):
        Q = Q0.copy()
        t = time.perf_counter()
        fn(proj, gram, Q, mu, s2, logit, u)
        best = min(best, time.perf_counter() - t)
        out = Q
    return best, out


def time_chain(N, n_mc, disable_numba):
    env = dict(os.environ)
    if disable_numba:
        env["BOCA_DISABLE_NUMBA"] = "1"
    else:
        env.pop("BOCA_DISABLE_NUMBA", None)
    code = CHAIN_SNIPPET.format(N=N, n_mc=n_mc)
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--chain-iters", type=int, default=100)
    p.add_argument("--json", help="write results here")
    args = p.parse_args(argv)

    rows = []
    print(f"{'M':>4} {'N':>3} {'T':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} same")
    for M, N, T in [(50, 2, 100), (128, 8, 256), (128, 16, 256), (256, 32, 256), (128, 16, 4096)]:
        a = sweep_inputs(M, N, T)
        t_np, q_np = time_sweep(kernels.sweep_indicators_numpy, a, args.repeat)
        if kernels.sweep_indicators_jit is not None:
            time_sweep(kernels.sweep_indicators_jit, a, 1)  # compile
            t_jit, q_jit = time_sweep(kernels.sweep_indicators_jit, a, args.repeat)
            same = bool(np.array_equal(q_np, q_jit))
        else:
            t_jit, same = float("nan"), None
        rows.append({"M": M, "N": N, "T": T, "numpy_s": t_np, "numba_s": t_jit, "same_decisions": same})
        print(f"{M:>4} {N:>3} {T:>5} {1e3 * t_np:>10.3f} {1e3 * t_jit:>10.3f} {t_np / t_jit:>8.1f} {same}")

    chains = []
    for N in (8, 16):
        for disable in (True, False):
            r = time_chain(N, args.chain_iters, disable)
            r.update(N=N, iterations=args.chain_iters)
            chains.append(r)
            print(f"chain M=128 N={N} T=256, {args.chain_iters} iterations, {r['backend']:>5}: {r['seconds']:.2f}s")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"sweeps": rows, "chains": chains}, fh, indent=2)


if __name__ == "__main__":
    main()
