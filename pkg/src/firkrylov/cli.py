"""Command-line entry point: ``firkrylov {gen,grid,identify,bench,verify,rerun}``.

Every run writes ``<out>.manifest.json`` holding the resolved arguments
and their SHA-256.  CSV outputs start with a ``# manifest_sha256=...``
line and JSON outputs carry a ``manifest_sha256`` field; the signal CSV
keeps its bare ``u,y`` header and records the hash in its JSON sidecar.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SynthSpec, generate, load_system, write_sidecar, write_signals
from .estimate import FirEstimate, posterior_mean
from .evaluators import EVALUATORS, make_evaluator
from .kernels import make_kernel
from .linops import ToeplitzOperator
from .optimize import SearchConfig, default_lambda_range, lambda_profile_min, minimize_pml, worker_count
from .verify import CHECKS, TheoryCheckConfig

EXIT_CONFIG = 2
GRID_COLUMNS = ["beta", "lambda", "psi", "quad_term", "trace_term", "nu_star", "matvecs", "elapsed_us"]
MINIMA_COLUMNS = ["kind", "beta", "lambda_star", "psi_star", "nu_star", "lambda_at_boundary"]
BENCH_COLUMNS = ["kernel", "evaluator", "snr", "seed", "fit", "beta_star", "lambda_star", "psi_star",
                 "matvec_total", "precompute_count"]
STATS_COLUMNS = ["kernel", "evaluator", "snr", "count", "min", "q1", "median", "q3", "max"]


class ConfigError(ValueError):
    pass


# -- manifest ----------------------------------------------------------------


def manifest_for(args):
    """Resolved config plus its hash; the output prefix is recorded but not hashed."""
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    doc = {"tool": "firkrylov", "version": __version__, "config": cfg}
    blob = json.dumps(doc, sort_keys=True, default=_json_default).encode()
    doc["sha256"] = hashlib.sha256(blob).hexdigest()
    doc["out"] = str(args.out)
    return doc


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def write_manifest(out, manifest):
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def write_table(path, columns, rows, manifest, fmt):
    """Rows as CSV (with a manifest comment line) or as a JSON document."""
    path = Path(path)
    if fmt == "json":
        doc = {"manifest_sha256": manifest["sha256"], "columns": columns,
               "rows": [{c: _num(r[c]) if isinstance(r[c], float) else r[c] for c in columns} for r in rows]}
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return path
    buf = io.StringIO()
    buf.write(f"# manifest_sha256={manifest['sha256']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in columns])
    path.write_text(buf.getvalue())
    return path


def _ext(fmt):
    return "json" if fmt == "json" else "csv"


# -- commands ----------------------------------------------------------------


def _spec_from(args, seed=None, snr=None):
    snr = args.snr if snr is None else snr
    return SynthSpec(a=args.a, m=args.m, n=args.n, snr=snr, seed=args.seed if seed is None else seed,
                     snr_db=args.snr_db)


def cmd_gen(args):
    spec = _spec_from(args)
    data = generate(spec)
    manifest = manifest_for(args)
    csv_path = Path(f"{args.out}.csv")
    write_signals(csv_path, data.u, data.y)
    write_sidecar(csv_path.with_suffix(".json"), spec, data.theta_true,
                  {"manifest_sha256": manifest["sha256"]})
    write_manifest(args.out, manifest)
    return [csv_path]


def _kernel_params(args):
    params = {}
    if args.kernel == "dc":
        params = {"rho": args.dc_rho, "c": args.dc_c}
    return params


def _load(args):
    try:
        return load_system(args.data, args.n)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load {args.data}: {exc}") from None


def _grid_shape(spec):
    parts = str(spec).lower().split("x")
    try:
        sizes = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--grid expects N or NBxNL, got {spec!r}") from None
    if len(sizes) == 1:
        sizes *= 2
    if len(sizes) != 2 or min(sizes) < 1:
        raise ConfigError(f"--grid expects N or NBxNL, got {spec!r}")
    return sizes


def _log_grid(rng, count):
    lo, hi = rng
    if count == 1:
        return np.array([math.sqrt(lo * hi)])
    return np.logspace(math.log10(lo), math.log10(hi), count)


def cmd_grid(args):
    data = _load(args)
    nb, nl = _grid_shape(args.grid)
    betas = _log_grid(args.beta_range, nb)
    lam_range = args.lambda_range or default_lambda_range(args.kernel)
    lams = _log_grid(lam_range, nl)
    params = _kernel_params(args)

    def one(beta):
        t0 = time.perf_counter_ns()
        kernel = make_kernel(args.kernel, data.n, float(beta), **params)
        ev = make_evaluator(args.evaluator, data, kernel, float(beta), k=args.k, n_omega=args.n_omega,
                            n_psi=args.n_psi, seed=args.seed)
        base = time.perf_counter_ns() - t0
        rows = []
        for lam in lams:
            t1 = time.perf_counter_ns()
            e = ev.evaluate(float(lam))
            dt = time.perf_counter_ns() - t1
            rows.append({"beta": float(beta), "lambda": float(lam), "psi": e.psi, "quad_term": e.quad_term,
                         "trace_term": e.trace_term, "nu_star": e.nu_star, "matvecs": int(ev.matvecs),
                         "elapsed_us": 0 if args.no_timing else (base + dt) // 1000})
            base = 0
        prof = lambda_profile_min(ev.evaluate, lam_range, nl)
        return rows, prof

    workers = min(worker_count(), len(betas))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, betas))
    else:
        results = [one(b) for b in betas]

    rows, minima = [], []
    for beta, (r, prof) in zip(betas, results):
        rows.extend(r)
        minima.append({"kind": "beta", "beta": float(beta), "lambda_star": prof.lambda_star,
                       "psi_star": prof.psi_star, "nu_star": float(prof.evaluation.nu_star),
                       "lambda_at_boundary": int(prof.at_boundary)})
    best = min(rows, key=lambda r: r["psi"])
    minima.append({"kind": "global_grid", "beta": best["beta"], "lambda_star": best["lambda"],
                   "psi_star": best["psi"], "nu_star": best["nu_star"], "lambda_at_boundary": 0})
    manifest = manifest_for(args)
    out = [write_table(f"{args.out}.{_ext(args.format)}", GRID_COLUMNS, rows, manifest, args.format),
           write_table(f"{args.out}_minima.{_ext(args.format)}", MINIMA_COLUMNS, minima, manifest, args.format)]
    write_manifest(args.out, manifest)
    return out


def _search_config(args):
    try:
        return _make_search_config(args)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _make_search_config(args):
    return SearchConfig(beta_range=tuple(args.beta_range), lambda_range=_opt_range(args.lambda_range),
                        budget=args.budget, lambda_grid_size=args.lambda_grid_size, evaluator=args.evaluator,
                        k=args.k, n_omega=args.n_omega, n_psi=args.n_psi, seed=args.seed)


def _opt_range(rng):
    return None if rng is None else tuple(rng)


def identify(data, kernel, cfg, kernel_params=None):
    """Search, then posterior mean and fit; returns ``(FirEstimate, SearchResult)``."""
    res = minimize_pml(data, kernel, cfg, kernel_params)
    kf = make_kernel(kernel, data.n, res.beta_star, **(kernel_params or {}))
    theta = posterior_mean(ToeplitzOperator(data.u, data.n), kf, data.y, res.lambda_star)
    est = FirEstimate.build(theta, res.nu_star, res.lambda_star, res.beta_star, data.theta_true)
    return est, res


def cmd_identify(args):
    data = _load(args)
    est, res = identify(data, args.kernel, _search_config(args), _kernel_params(args))
    manifest = manifest_for(args)
    doc = {"manifest_sha256": manifest["sha256"], "estimate": est.to_dict(),
           "search": {"psi_star": res.psi_star, "precompute_count": res.precompute_count,
                      "matvec_total": res.matvec_total, "widened": res.widened,
                      "beta_range": list(res.beta_range),
                      "probes": [[p.beta, p.lambda_star, p.psi_star] for p in res.trace]}}
    path = Path(f"{args.out}.json")
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    write_manifest(args.out, manifest)
    return [path]


def bench_rows(args):
    """One row per (kernel, evaluator, snr, seed), in that order."""
    jobs = [(kern, ev, snr, seed) for kern in args.kernels for ev in args.evaluators
            for snr in args.snrs for seed in range(args.seed, args.seed + args.n_seeds)]

    def run(job):
        kern, ev, snr, seed = job
        data = generate(_spec_from(args, seed=seed, snr=snr))
        cfg = SearchConfig(beta_range=tuple(args.beta_range), lambda_range=_opt_range(args.lambda_range),
                           budget=args.budget, lambda_grid_size=args.lambda_grid_size, evaluator=ev,
                           k=args.k, n_omega=args.n_omega, n_psi=args.n_psi, seed=seed)
        params = {"rho": args.dc_rho, "c": args.dc_c} if kern == "dc" else {}
        est, res = identify(data, kern, cfg, params)
        return {"kernel": kern, "evaluator": ev, "snr": float(snr), "seed": seed, "fit": est.fit,
                "beta_star": res.beta_star, "lambda_star": res.lambda_star, "psi_star": res.psi_star,
                "matvec_total": res.matvec_total, "precompute_count": res.precompute_count}

    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def bench_stats(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r["kernel"], r["evaluator"], r["snr"]), []).append(r["fit"])
    out = []
    for (kern, ev, snr), fits in groups.items():
        q = np.percentile(fits, [0, 25, 50, 75, 100])
        out.append({"kernel": kern, "evaluator": ev, "snr": snr, "count": len(fits), "min": float(q[0]),
                    "q1": float(q[1]), "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])})
    return out


def cmd_bench(args):
    rows = bench_rows(args)
    manifest = manifest_for(args)
    out = [write_table(f"{args.out}.{_ext(args.format)}", BENCH_COLUMNS, rows, manifest, args.format),
           write_table(f"{args.out}_stats.{_ext(args.format)}", STATS_COLUMNS, bench_stats(rows), manifest,
                       args.format)]
    write_manifest(args.out, manifest)
    return out


def cmd_verify(args):
    names = list(CHECKS) if args.check == "all" else [args.check]
    manifest = manifest_for(args)
    reports = []
    for name in names:
        m = args.m or (200 if name in ("cg", "precond") else 100)
        reports.append(json.loads(CHECKS[name](TheoryCheckConfig(m=m, seed=args.seed)).to_json()))
    path = Path(f"{args.out}.json")
    path.write_text(json.dumps({"manifest_sha256": manifest["sha256"], "reports": reports}, indent=2) + "\n")
    write_manifest(args.out, manifest)
    if not all(r["passed"] for r in reports):
        print("one or more checks failed", file=sys.stderr)
        return [path], 1
    return [path]


def cmd_rerun(args):
    doc = json.loads(Path(args.manifest).read_text())
    cfg = dict(doc["config"])
    cfg["out"] = args.out or doc["out"]
    parser = build_parser()
    ns = argparse.Namespace(**cfg)
    ns.func = COMMANDS[cfg["command"]]
    _validate(parser, ns)
    return ns.func(ns)


COMMANDS = {"gen": cmd_gen, "grid": cmd_grid, "identify": cmd_identify, "bench": cmd_bench,
            "verify": cmd_verify}


# -- parser ------------------------------------------------------------------


def _range(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return [lo, hi]


def _list(cast):
    def parse(text):
        try:
            return [cast(t) for t in text.split(",") if t]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _snr(text):
    return math.inf if text.lower() in ("inf", "none", "noiseless") else float(text)


def _add_common(p, out_default):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=out_default, help="output path prefix")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def _add_system(p):
    p.add_argument("--a", type=float, default=0.2, help="pole of the true system")
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--snr-db", action="store_true", help="interpret --snr in decibels")


def _add_model(p, evaluator="krylov"):
    p.add_argument("--kernel", choices=["tc", "dc", "ss"], default="tc")
    p.add_argument("--dc-rho", type=float, default=0.9)
    p.add_argument("--dc-c", type=float, default=1.0)
    p.add_argument("--evaluator", choices=sorted(EVALUATORS), default=evaluator)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--n-omega", type=int, default=1)
    p.add_argument("--n-psi", type=int, default=3)


def _add_search(p):
    p.add_argument("--beta-range", type=_range, default=[1e-3, 0.99], metavar="LO,HI")
    p.add_argument("--lambda-range", type=_range, default=None, metavar="LO,HI",
                   help="default depends on the kernel: 1e-1,1e6 (tc, dc) or 1e-3,1e6 (ss)")
    p.add_argument("--budget", type=int, default=40)
    p.add_argument("--lambda-grid-size", type=int, default=50)


def build_parser():
    ap = argparse.ArgumentParser(prog="firkrylov", description="Kernel-regularized FIR estimation tools.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic system")
    _add_system(p)
    p.add_argument("--snr", type=_snr, default=10.0, help="target SNR, 'inf' for noiseless")
    _add_common(p, "system")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("grid", help="evaluate the criterion on a (beta, lambda) grid")
    p.add_argument("--data", required=True, help="u,y CSV")
    p.add_argument("--n", type=int, default=None, help="FIR order (default: from sidecar)")
    _add_model(p, "direct")
    p.add_argument("--beta-range", type=_range, default=[1e-6, 1e-2], metavar="LO,HI")
    p.add_argument("--lambda-range", type=_range, default=None, metavar="LO,HI",
                   help="default depends on the kernel: 1e-1,1e6 (tc, dc) or 1e-3,1e6 (ss)")
    p.add_argument("--grid", default="50", help="N or NBxNL")
    p.add_argument("--no-timing", action="store_true", help="write 0 in elapsed_us")
    _add_common(p, "grid")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("identify", help="search (lambda, beta) and estimate the FIR")
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=None)
    _add_model(p)
    _add_search(p)
    _add_common(p, "estimate")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("bench", help="repeat gen + identify over seeds")
    _add_system(p)
    p.add_argument("--snr", dest="snrs", type=_list(_snr), default=[10.0], help="comma-separated SNR values")
    p.add_argument("--kernel", dest="kernels", type=_list(str), default=["tc"], help="comma-separated kernels")
    p.add_argument("--evaluator", dest="evaluators", type=_list(str), default=["krylov"],
                   help="comma-separated evaluators")
    p.add_argument("--dc-rho", type=float, default=0.9)
    p.add_argument("--dc-c", type=float, default=1.0)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--n-omega", type=int, default=1)
    p.add_argument("--n-psi", type=int, default=3)
    p.add_argument("--n-seeds", type=int, default=20)
    _add_search(p)
    _add_common(p, "bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the dense theory checks")
    p.add_argument("--check", choices=["all", *CHECKS], default="all")
    p.add_argument("--m", type=int, default=None)
    _add_common(p, "verify")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override the output prefix")
    p.set_defaults(func=cmd_rerun)
    return ap


def _validate(parser, args):
    for name in ("beta_range", "lambda_range"):
        rng = getattr(args, name, None)
        if rng is not None and not (0 < rng[0] < rng[1] and math.isfinite(rng[1])):
            raise ConfigError(f"--{name.replace('_', '-')} must satisfy 0 < LO < HI")
    if getattr(args, "beta_range", None) is not None and args.beta_range[1] >= 1:
        raise ConfigError("--beta-range must lie inside (0, 1)")
    for kern in getattr(args, "kernels", []) or []:
        if kern not in ("tc", "dc", "ss"):
            raise ConfigError(f"unknown kernel {kern!r}")
    for ev in getattr(args, "evaluators", []) or []:
        if ev not in EVALUATORS:
            raise ConfigError(f"unknown evaluator {ev!r}")
    for name in ("k", "budget", "n_seeds", "lambda_grid_size"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be at least 1")
    for name in ("n_omega", "n_psi"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise ConfigError(f"--{name.replace('_', '-')} must be non-negative")
    if getattr(args, "command", None) in ("gen", "bench"):
        try:
            _spec_from(args, snr=args.snr if args.command == "gen" else args.snrs[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        worker_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "rerun":
            _validate(parser, args)
        out = args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"firkrylov: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = 0
    if isinstance(out, tuple):
        out, code = out
    for path in out:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
