"""Command-line interface: ``boca generate|fit|evaluate|validate|bench|patches``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 validation
failure.  Matrix and table CSVs are headerless; the column meaning of
tables is recorded in the JSON written next to them.
"""
import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from ._accel import backend
from .distributions import rng_stream
from .errors import BocaError, DomainError
from .estimators import summarize
from .io import (
    FormatError,
    ensure_dir,
    read_csv,
    read_json,
    read_pgm,
    write_csv,
    write_json,
    write_pgm,
)
from .metrics import evaluate, reconstruction_error_trace
from .model import ModelConfig, ObservationSet, log_marginal_posterior_arrays
from .sampler import SamplerSettings, run_chain
from .synthdata import BenchConfig, ToyConfig, make_bench_trial, make_toy

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4

log = logging.getLogger("boca")


class ConfigError(BocaError):
    pass


class ValidationFailure(BocaError):
    pass


# ---------------------------------------------------------------------------
# configuration


def load_config(path):
    """Read a run configuration; missing sections are empty.

    Accepts either the sectioned layout ``{"model": ..., "sampler": ...,
    "io": ..., "experiment": ...}`` or flat model/sampler keys.
    """
    if path is None:
        return {"model": {}, "sampler": {}, "io": {}, "experiment": {}}
    try:
        raw = read_json(path)
    except FormatError as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    conf = {k: dict(raw.get(k) or {}) for k in ("model", "sampler", "io", "experiment")}
    for k, v in raw.items():
        if k in conf:
            continue
        if k in ("M", "N", "T", "nu", "alpha0", "alpha1"):
            conf["model"][k] = v
        elif k in ("n_mc", "n_bi", "seed"):
            conf["sampler"][k] = v
        else:
            raise ConfigError(f"{path}: unknown key {k!r}")
    return conf


def _from_dict(cls, d):
    names = set(cls.__dataclass_fields__)
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _pick(cli_value, conf, key, default):
    if cli_value is not None:
        return cli_value
    return conf.get(key, default)


def _sampler_settings(args, conf, n_mc, n_bi, stream_id=0):
    s = conf["sampler"]
    return SamplerSettings(
        n_mc=int(_pick(getattr(args, "n_mc", None), s, "n_mc", n_mc)),
        n_bi=int(_pick(getattr(args, "n_bi", None), s, "n_bi", n_bi)),
        seed=int(_pick(args.seed, s, "seed", 0)),
        stream_id=stream_id,
    )


def _manifest(args, command, **extra):
    return {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "backend": backend(),
        "seed": args.seed,
        **extra,
    }


def _out(args):
    return ensure_dir(args.out_dir)


def _parse_int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _parse_float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# generate


def _bench_n(text):
    t = str(text)
    if t.upper().startswith("N="):
        t = t[2:]
    try:
        return int(t)
    except ValueError:
        raise ConfigError(f"--bench expects N=<int>, got {text!r}") from None


def cmd_generate(args, conf):
    seed = int(_pick(args.seed, conf["sampler"], "seed", 0))
    exp = conf["experiment"]
    if args.toy == (args.bench is not None):
        raise ConfigError("choose exactly one of --toy or --bench N=<int>")
    rng = rng_stream(seed, 0)
    if args.toy:
        tc = _from_dict(ToyConfig, exp)
        if args.counts is not None:
            tc = replace(tc, active_counts=tuple(_parse_int_list(args.counts)))
        if args.snr is not None:
            tc = replace(tc, snr_db=float(args.snr))
        ds = make_toy(rng, tc)
    else:
        bc = _from_dict(BenchConfig, exp)
        snr = float(args.snr if args.snr is not None else 10.0)
        ds = make_bench_trial(_bench_n(args.bench), snr, rng, bc)
    out = _out(args)
    write_csv(os.path.join(out, "X.csv"), ds.obs.X)
    write_csv(os.path.join(out, "S_true.csv"), ds.src.S)
    write_csv(os.path.join(out, "Q_true.csv"), ds.src.Q)
    write_csv(os.path.join(out, "Psi_true.csv"), ds.dictionary.psi)
    M, T = ds.obs.X.shape
    write_json(os.path.join(out, "manifest.json"), _manifest(
        args, "generate", seed=seed, config=ds.config,
        dims={"M": M, "N": int(ds.src.N), "T": T},
        sigma2=ds.sigma2, active_counts=[int(v) for v in ds.src.m1],
        supports=[np.flatnonzero(r).tolist() for r in ds.src.Q],
    ))
    log.info("wrote %s (M=%d, N=%d, T=%d, sigma2=%.4g)", out, M, ds.src.N, T, ds.sigma2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _load_x(args, conf):
    path = args.x or conf["io"].get("X")
    if path is None and args.data:
        path = os.path.join(args.data, "X.csv")
    if path is None:
        raise ConfigError("no input: pass --data DIR or --x FILE")
    return path, read_csv(path)


def _data_manifest(args):
    if args.data:
        p = os.path.join(args.data, "manifest.json")
        if os.path.exists(p):
            return read_json(p)
    return {}


def _model_config(args, conf, X):
    m = dict(conf["model"])
    M, T = X.shape
    N = args.n_atoms if args.n_atoms is not None else m.get("N")
    if N is None:
        N = _data_manifest(args).get("dims", {}).get("N")
    if N is None:
        raise ConfigError("number of atoms unknown: pass --n-atoms")
    for key, actual in (("M", M), ("T", T)):
        if key in m and int(m[key]) != actual:
            raise ConfigError(f"config says {key}={m[key]} but data has {key}={actual}")
    return ModelConfig(M, int(N), T, nu=float(m.get("nu", 2.0)),
                       alpha0=float(_pick(args.alpha0, m, "alpha0", 2.0)),
                       alpha1=float(_pick(args.alpha1, m, "alpha1", 1.0)))


def cmd_fit(args, conf):
    xpath, X = _load_x(args, conf)
    cfg = _model_config(args, conf, X)
    settings = _sampler_settings(args, conf, 1000, 100)
    obs = ObservationSet(X)
    t0 = time.perf_counter()
    trace = run_chain(obs, cfg, settings)
    summ = summarize(trace, obs, cfg)
    err = reconstruction_error_trace(trace, obs)
    wall = time.perf_counter() - t0

    # the stored MAP value must match a fresh evaluation of its outputs
    q_map = (summ.s_map != 0).astype(np.int8)
    recomputed = log_marginal_posterior_arrays(summ.s_map, q_map, summ.psi_map, X, cfg.alpha0, cfg.alpha1)
    map_gap = abs(recomputed - summ.log_map) if np.isfinite(recomputed) else float("inf")

    out = _out(args)
    N = cfg.N
    table = np.column_stack([np.arange(1, trace.n_mc + 1), trace.sigma2, trace.lam, trace.a2, trace.log_post])
    write_csv(os.path.join(out, "trace_summary.csv"), table)
    write_csv(os.path.join(out, "s_map.csv"), summ.s_map)
    write_csv(os.path.join(out, "psi_map.csv"), summ.psi_map)
    write_csv(os.path.join(out, "q_map.csv"), q_map)
    write_csv(os.path.join(out, "s_mmse.csv"), summ.s_mmse)
    write_csv(os.path.join(out, "psi_mmse.csv"), summ.psi_mmse)
    write_csv(os.path.join(out, "q_prob.csv"), summ.q_prob)
    for n in range(N):
        counts = summ.k_histograms[n]
        write_csv(os.path.join(out, f"k_hist_{n}.csv"), np.column_stack([np.arange(len(counts)), counts]))
    write_csv(os.path.join(out, "error_trace.csv"),
              np.column_stack([np.arange(1, len(err) + 1), err]))

    lam_tail = trace.lam[-min(500, trace.n_retained):]
    a2_tail = trace.a2[-min(500, trace.n_retained):]
    report = _manifest(
        args, "fit",
        input=os.path.abspath(xpath),
        model=cfg.to_dict(),
        sampler={"n_mc": settings.n_mc, "n_bi": settings.n_bi, "seed": settings.seed},
        wall_time_s=wall,
        chain_time_s=trace.elapsed,
        log_map=summ.log_map,
        log_map_recomputed=recomputed,
        map_gap=map_gap,
        map_iteration=summ.map_iteration,
        reorthonormalizations=trace.reorthonormalizations,
        lambda_tail_mean=lam_tail.mean(axis=0),
        a2_tail_mean=a2_tail.mean(axis=0),
        sigma2_tail_mean=float(trace.sigma2[-min(500, trace.n_retained):].mean()),
        k_modes=[int(np.argmax(h)) for h in summ.k_histograms],
        columns={
            "trace_summary.csv": ["iteration", "sigma2"] + [f"lambda_{n}" for n in range(N)]
            + [f"a2_{n}" for n in range(N)] + ["log_marginal_posterior"],
            "k_hist_<n>.csv": ["K", "count"],
            "error_trace.csv": ["h", "e"],
        },
    )
    write_json(os.path.join(out, "fit_report.json"), report)
    log.info("fit done in %.2fs; log MAP %.6g at iteration %d", wall, summ.log_map, summ.map_iteration)
    if not map_gap <= 1e-10 * max(1.0, abs(summ.log_map)):
        raise ValidationFailure(f"MAP bookkeeping mismatch: {summ.log_map} vs {recomputed}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args, conf):
    fit_dir = args.fit_dir or conf["io"].get("fit_dir")
    truth_dir = args.truth_dir or conf["io"].get("truth_dir")
    if not fit_dir or not truth_dir:
        raise ConfigError("evaluate needs --fit-dir and --truth-dir")
    est = args.estimator
    psi_true = read_csv(os.path.join(truth_dir, "Psi_true.csv"))
    S_true = read_csv(os.path.join(truth_dir, "S_true.csv"))
    Q_true = read_csv(os.path.join(truth_dir, "Q_true.csv"), dtype=np.int8)
    psi = read_csv(os.path.join(fit_dir, f"psi_{est}.csv"))
    S = read_csv(os.path.join(fit_dir, f"s_{est}.csv"))
    if psi.shape != psi_true.shape or S.shape != S_true.shape:
        raise ConfigError(f"estimate shapes {psi.shape}, {S.shape} do not match truth {psi_true.shape}, {S_true.shape}")
    if est == "mmse":
        # a posterior-mean source is dense; threshold on the activation probability
        q = read_csv(os.path.join(fit_dir, "q_prob.csv"))
        S = np.where(q > 0.5, S, 0.0)
    err_path = os.path.join(fit_dir, "error_trace.csv")
    err = read_csv(err_path)[:, 1] if os.path.exists(err_path) else None
    rep = evaluate(psi_true @ S_true, psi_true, Q_true, psi, S, error_trace=err)
    out = _out(args)
    write_json(os.path.join(out, "eval_report.json"), {**rep.to_dict(), "estimator": est})
    log.info("rmse %.4g  sparsity %.4f  support F1 %.4f", rep.rmse, rep.sparsity_score, rep.support_f1)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args, conf):
    from .checks import run_checks

    level = "full" if args.full else "quick"
    seed = int(_pick(args.seed, conf["sampler"], "seed", 0))
    results = run_checks(level, seed=seed)
    doc = {"level": level, "seed": seed, "passed": all(r.passed for r in results),
           "checks": [r.to_dict() for r in results]}
    if args.out_dir:
        write_json(os.path.join(_out(args), "validation.json"), doc)
    json.dump({"level": level, "passed": doc["passed"],
               "checks": {r.name: r.passed for r in results}}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    if not doc["passed"]:
        raise ValidationFailure("failed: " + ", ".join(r.name for r in results if not r.passed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def bench_trial(N, snr, trial, seed, stream, n_mc, n_bi, bench_config=None):
    """One Monte-Carlo trial; data and chain use disjoint Philox streams."""
    bc = bench_config or BenchConfig()
    ds = make_bench_trial(N, snr, rng_stream(seed, 2 * stream + 1), bc)
    cfg = ModelConfig(bc.M, N, bc.T)
    trace = run_chain(ds.obs, cfg, SamplerSettings(n_mc, n_bi, seed=seed, stream_id=2 * stream + 2))
    summ = summarize(trace)
    rep = evaluate(ds.clean, ds.dictionary, ds.src.Q, summ.psi_map, summ.s_map)
    return [N, snr, trial, rep.rmse, rep.sparsity_score, rep.support_f1, float(np.sqrt(ds.sigma2))]


def _bench_job(job):
    return bench_trial(*job)


def bench_summary(rows):
    """Per-(N, SNR) means and standard errors, plus the monotonicity verdict."""
    rows = np.asarray(rows, dtype=float)
    cells = {}
    for N in np.unique(rows[:, 0]):
        snrs = np.unique(rows[rows[:, 0] == N, 1])
        means, ses = [], []
        for snr in snrs:
            r = rows[(rows[:, 0] == N) & (rows[:, 1] == snr)]
            k = len(r)
            m = r[:, 3:].mean(axis=0)
            se = r[:, 3:].std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(r.shape[1] - 3)
            means.append(m)
            ses.append(se)
            cells[(N, snr)] = (m, se, k)
        rm = np.array([m[0] for m in means])
        rse = np.array([s[0] for s in ses])
        ok = all(rm[i + 1] <= rm[i] + rse[i] for i in range(len(rm) - 1))
        cells[(N, "monotone")] = bool(ok)
    return cells


def cmd_bench(args, conf):
    exp = conf["experiment"]
    bc = _from_dict(BenchConfig, exp)
    ns = _parse_int_list(args.n_sources) if args.n_sources else list(bc.n_sources)
    snrs = _parse_float_list(args.snr) if args.snr else list(bc.snr_grid)
    trials = int(args.trials)
    settings = _sampler_settings(args, conf, 300, 50)
    if trials < 1 or not ns or not snrs:
        raise ConfigError("bench grid is empty")
    jobs = []
    k = 0
    for N in ns:
        for snr in snrs:
            for trial in range(trials):
                jobs.append((N, snr, trial, settings.seed, k, settings.n_mc, settings.n_bi, bc))
                k += 1
    t0 = time.perf_counter()
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_bench_job, jobs))
    else:
        rows = [_bench_job(j) for j in jobs]
    wall = time.perf_counter() - t0

    cells = bench_summary(rows)
    mean_rows = []
    summary = []
    for N in ns:
        for snr in snrs:
            m, se, cnt = cells[(float(N), float(snr))]
            mean_rows.append([N, snr, -1, *m])
            summary.append({"N": N, "snr_db": snr, "trials": cnt, "rmse": m[0], "rmse_se": se[0],
                            "sparsity": m[1], "f1": m[2], "noise_sd": m[3]})
    out = _out(args)
    write_csv(os.path.join(out, "bench.csv"), np.array(rows + mean_rows, dtype=float))
    write_json(os.path.join(out, "bench_report.json"), _manifest(
        args, "bench", seed=settings.seed, config=bc.to_dict(), n_sources=ns, snr_db=snrs, trials=trials,
        sampler={"n_mc": settings.n_mc, "n_bi": settings.n_bi}, wall_time_s=wall,
        columns=["N", "snr_db", "trial (-1 = mean row)", "rmse", "sparsity", "f1", "noise_sd"],
        cells=summary,
        rmse_non_increasing={str(N): cells[(float(N), "monotone")] for N in ns},
    ))
    log.info("bench: %d trials in %.1fs", len(rows), wall)
    return EXIT_OK


# ---------------------------------------------------------------------------
# patches


def cmd_patches(args, conf):
    from importlib import resources

    from .patches import fit_image, tile_atlas

    path = args.image or conf["io"].get("image")
    if path is None:
        path = str(resources.files("boca") / "data" / "test_image.pgm")
    img = read_pgm(path)
    ns = _parse_int_list(args.n_atoms) if args.n_atoms else [16]
    settings = _sampler_settings(args, conf, 300, 50)
    out = _out(args)
    rows = []
    for N in ns:
        fit = fit_image(img, N, settings, center=args.center_patches)
        write_pgm(os.path.join(out, f"recon_N{N}.pgm"), fit.recon)
        write_pgm(os.path.join(out, f"atlas_N{N}.pgm"), tile_atlas(fit.psi))
        write_csv(os.path.join(out, f"psi_N{N}.csv"), fit.psi)
        rows.append([N, fit.rmse, fit.sparsity])
        log.info("N=%d: rmse %.4g, sparsity %.3f (%.1fs)", N, fit.rmse, fit.sparsity, fit.elapsed)
    write_csv(os.path.join(out, "patch_rmse.csv"), np.array(rows, dtype=float))
    write_json(os.path.join(out, "patches_report.json"), _manifest(
        args, "patches", image=os.path.abspath(path), shape=list(img.shape), patch=16,
        scaling="intensity / 255", center_patches=bool(args.center_patches),
        sampler={"n_mc": settings.n_mc, "n_bi": settings.n_bi, "seed": settings.seed},
        results=[{"N": int(r[0]), "rmse": r[1], "sparsity": r[2]} for r in rows],
        columns={"patch_rmse.csv": ["N", "rmse", "sparsity"]},
    ))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def add_global_flags(parser, suppress):
    # accepted before or after the subcommand; SUPPRESS keeps the
    # subcommand copy from overwriting a value given up front
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=d(None), help="master seed")
    parser.add_argument("--out-dir", default=d("."), help="output directory (default: cwd)")
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes (bench only)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    p = argparse.ArgumentParser(prog="boca", description="Bayesian orthogonal component analysis")
    p.add_argument("--version", action="version", version=__version__)
    add_global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    add_global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    def chain_opts(sp):
        sp.add_argument("--n-mc", type=int, help="total iterations")
        sp.add_argument("--n-bi", type=int, help="burn-in iterations")

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    g.add_argument("--toy", action="store_true", help="two-source sinusoidal example")
    g.add_argument("--bench", metavar="N=<int>", help="random orthogonal benchmark trial with N sources")
    g.add_argument("--snr", type=float, help="SNR in dB")
    g.add_argument("--counts", help="toy: fixed active counts per source, e.g. 5,12")

    f = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler")
    f.add_argument("--data", help="directory holding X.csv (and optionally manifest.json)")
    f.add_argument("--x", help="path to X.csv")
    f.add_argument("--n-atoms", type=int, help="number of atoms N")
    f.add_argument("--alpha0", type=float)
    f.add_argument("--alpha1", type=float)
    chain_opts(f)

    e = sub.add_parser("evaluate", parents=[common], help="score a fit against the truth")
    e.add_argument("--fit-dir")
    e.add_argument("--truth-dir")
    e.add_argument("--estimator", choices=("map", "mmse"), default="map")

    v = sub.add_parser("validate", parents=[common], help="sampler-correctness checks")
    lvl = v.add_mutually_exclusive_group()
    lvl.add_argument("--quick", action="store_true", help="oracle equivalence only (default)")
    lvl.add_argument("--full", action="store_true", help="all checks, including joint-distribution tests")

    b = sub.add_parser("bench", parents=[common], help="Monte-Carlo benchmark over N and SNR")
    b.add_argument("--n-sources", help="comma list, default 4,8,16")
    b.add_argument("--snr", help="comma list of dB values, default 0,5,10,15,20")
    b.add_argument("--trials", type=int, default=10)
    chain_opts(b)

    pa = sub.add_parser("patches", parents=[common], help="sparse coding of 16x16 image patches")
    pa.add_argument("--image", help="8-bit binary PGM; default: the bundled test image")
    pa.add_argument("--n-atoms", help="comma list of N values, default 16")
    pa.add_argument("--center-patches", action="store_true", help="remove and restore patch means")
    chain_opts(pa)
    return p


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "validate": cmd_validate,
    "bench": cmd_bench,
    "patches": cmd_patches,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which is our config-error code too
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = load_config(args.config)
        return COMMANDS[args.command](args, conf)
    except ValidationFailure as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (ConfigError, DomainError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
