"""Command-line interface.

Every command writes its result to ``--out`` (or standard output) and a
RunManifest next to it. Exit codes: 0 success, 2 usage error (bad flags,
missing files, invalid parameters), 3 data error (malformed input files).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchParams, query_stream, run_bench
from .estimators import estimate_expectation, estimate_partition
from .formats import (DataFormatError, atomic_write, encode_csv, encode_fvecs, ingest,
                      load_dataset, read_vectors, save_dataset)
from .learn import ExactGradient, LazyGradient, LearnConfig, TopKOnlyGradient, train
from .manifest import RunManifest, manifest_path_for, stable_digest
from .mips import (ExactProvider, IndexFormatError, IvfIndex, IvfProvider, LshLadder,
                   LshProvider, build_ivf, build_lsh_ladder, load_index, save_index)
from .model import Query, RejectedInput, exact_topk, score_all, softmax
from .sampler import sample_many, tv_upper_bound
from .synthetic import DISTRIBUTIONS, gen_synthetic
from .walk import ExactStep, FixedBStep, LazyStep, WalkConfig, run_walk

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class _Run:
    """Per-invocation bookkeeping for the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.started = time.time()
        params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        self.manifest = RunManifest(command=args.command, argv=list(argv), params=params,
                                    seed=getattr(args, "seed", None))
        self.stdout_text = None

    def dataset(self, path, unit_norm=False):
        path = _existing(path)
        ds = load_dataset(path, unit_norm=unit_norm)
        self.manifest.dataset = RunManifest.file_entry(path)
        return ds

    def index(self, path, ds):
        path = _existing(path)
        ix = load_index(path, ds)
        self.manifest.index = RunManifest.file_entry(path)
        return ix

    def emit_text(self, text: str):
        out = getattr(self.args, "out", None)
        if out:
            atomic_write(out, text)
            self.manifest.add_output(out)
        else:
            sys.stdout.write(text)

    def emit_file(self, path):
        self.manifest.add_output(path)

    def finish(self):
        self.manifest.finish(self.started)
        target = getattr(self.args, "manifest", None)
        if target is None and getattr(self.args, "out", None):
            target = manifest_path_for(self.args.out)
        if target is not None:
            self.manifest.write(target)
        return target


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def _theta(args, ds) -> Query:
    if args.theta_row is not None:
        if not 0 <= args.theta_row < ds.n:
            raise UsageError(f"--theta-row must be in [0, {ds.n})")
        theta = ds.features[args.theta_row]
    elif args.theta is not None:
        try:
            theta = np.array([float(v) for v in args.theta.split(",")])
        except ValueError:
            raise UsageError(f"--theta must be comma-separated numbers, got {args.theta!r}") from None
    else:
        raise UsageError("give --theta or --theta-row")
    return Query(theta, scale=args.scale)


def _provider(run: _Run, args, ds):
    if not getattr(args, "index", None):
        return ExactProvider()
    ix = run.index(args.index, ds)
    if isinstance(ix, IvfIndex):
        return IvfProvider(ix, ds, n_p=args.n_p)
    return LshProvider(ix, ds)


def _parse_ids(text: str, n: int) -> np.ndarray:
    text = text.strip()
    if text.startswith("@"):
        ids = np.array([int(t) for t in Path(text[1:]).read_text().split()], dtype=np.int64)
    elif ":" in text:
        a, b = text.split(":")
        ids = np.arange(int(a), int(b))
    else:
        ids = np.array([int(t) for t in text.split(",")], dtype=np.int64)
    if ids.size == 0 or ids.min() < 0 or ids.max() >= n:
        raise UsageError(f"ids must be non-empty and lie in [0, {n})")
    return ids


# ---- commands ---------------------------------------------------------------

def cmd_ingest(run, args):
    src = _existing(args.input)
    x = ingest(src, args.format, normalize=args.normalize)
    save_dataset(args.out, x)
    run.manifest.dataset = RunManifest.file_entry(src)
    run.emit_file(args.out)
    print(f"n={x.shape[0]} d={x.shape[1]}", file=sys.stderr)


def cmd_export(run, args):
    src = _existing(args.dataset)
    x = read_vectors(src, "ldds")
    run.manifest.dataset = RunManifest.file_entry(src)
    if args.format == "fvecs":
        atomic_write(args.out, encode_fvecs(x))
    else:
        atomic_write(args.out, encode_csv(x))
    run.emit_file(args.out)


def cmd_gen(run, args):
    syn = gen_synthetic(args.n, args.d, args.distribution, seed=args.seed,
                        clusters=args.clusters, spread=args.spread, sigma=args.sigma)
    save_dataset(args.out, syn.dataset)
    run.emit_file(args.out)
    if args.labels_out:
        if syn.labels is None:
            raise UsageError("--labels-out needs --distribution planted_clusters")
        atomic_write(args.labels_out, _csv_text(["id", "label"], enumerate(syn.labels.tolist())))
        run.emit_file(args.labels_out)


def cmd_index_build(run, args):
    ds = run.dataset(args.dataset)
    t0 = time.perf_counter_ns()
    if args.type == "ivf":
        ix = build_ivf(ds, n_c=args.n_c, iters=args.iters, seed=args.seed, n_p=args.n_p,
                       train_size=args.train_size)
    else:
        ix = build_lsh_ladder(ds, c=args.c, delta=args.delta, k_max=args.k_max, M1=args.m1,
                              M2=args.m2, seed=args.seed, max_bits=args.max_bits,
                              max_tables=args.max_tables, bits=args.bits, tables=args.tables)
    build_ns = time.perf_counter_ns() - t0
    save_index(ix, args.out)
    run.manifest.results["build_time_ns"] = build_ns
    run.emit_file(args.out)


def _index_info(ix) -> dict:
    info = {"n": ix.n, "d": ix.d}
    if isinstance(ix, IvfIndex):
        sizes = np.diff(ix.list_offsets)
        info.update(type="ivf", n_c=ix.n_c, n_p=ix.n_p, iters=ix.iters, seed=ix.seed,
                    train_size=ix.train_size, min_list=int(sizes.min()),
                    max_list=int(sizes.max()), empty_lists=int((sizes == 0).sum()))
    else:
        info.update(type="lsh", c=ix.c, delta=ix.delta, M1=ix.M1, M2=ix.M2, k_max=ix.k_max,
                    n_lsh=ix.n_lsh, delta_prime=ix.delta_prime, seed=ix.seed,
                    total_tables=ix.total_tables(),
                    instances=[{"s1": i.s1, "s2": i.s2, "bits": i.bits, "tables": i.tables,
                                "miss_prob": i.miss_prob} for i in ix.instances])
    return info


def cmd_index_info(run, args):
    path = _existing(args.index)
    ds = run.dataset(args.dataset) if args.dataset else None
    ix = load_index(path, ds)
    run.manifest.index = RunManifest.file_entry(path)
    run.emit_text(json.dumps(_index_info(ix), indent=2, sort_keys=True) + "\n")


def cmd_sample(run, args):
    ds = run.dataset(args.dataset)
    q = _theta(args, ds)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    rng = np.random.default_rng(args.seed)
    if args.algorithm == "exact":
        cdf = np.cumsum(softmax(score_all(ds, q).scores))
        u = rng.random(args.trials) * cdf[-1]
        ids = np.minimum(np.searchsorted(cdf, u, side="right"), ds.n - 1)
    else:
        prov = _provider(run, args, ds)
        l = args.l if args.algorithm == "fixed_b" else None
        if args.algorithm == "fixed_b" and l is None:
            raise UsageError("--algorithm fixed_b needs --l")
        ids = sample_many(ds, q, args.trials, prov, k=min(args.k, ds.n), l=l,
                          gap_c=args.gap_c, rng=rng)
    counts = np.bincount(ids, minlength=ds.n)
    nz = np.flatnonzero(counts)
    run.emit_text(_csv_text(["id", "count", "frequency"],
                            [[int(i), int(counts[i]), _fmt(counts[i] / args.trials)] for i in nz]))


def cmd_partition(run, args):
    ds = run.dataset(args.dataset)
    q = _theta(args, ds)
    prov = _provider(run, args, ds)
    rows = []
    for r in range(args.repeats):
        est = estimate_partition(ds, q, prov, k=args.k, l=args.l, rng=query_stream(args.seed, r, 0))
        rows.append([r, _fmt(est.log_z), est.k, est.l, est.touched, ";".join(est.flags)])
    run.emit_text(_csv_text(["repeat", "log_z", "k", "l", "touched", "flags"], rows))


def cmd_expect(run, args):
    ds = run.dataset(args.dataset)
    q = _theta(args, ds)
    prov = _provider(run, args, ds)
    if args.f_file:
        f = np.array([float(t) for t in _existing(args.f_file).read_text().split()])
        if f.size != ds.n:
            raise DataFormatError(f"{args.f_file} has {f.size} values, expected {ds.n}")
    else:
        if not 0 <= args.f_col < ds.d:
            raise UsageError(f"--f-col must be in [0, {ds.d})")
        f = np.array(ds.features[:, args.f_col])
    C = float(np.abs(f).max()) if args.C is None else args.C
    rows = []
    for r in range(args.repeats):
        est = estimate_expectation(ds, q, f, C, prov, k=args.k, l=args.l,
                                   rng=query_stream(args.seed, r, 0))
        rows.append([r, _fmt(est.value), _fmt(est.log_z), est.k, est.l, est.touched])
    run.emit_text(_csv_text(["repeat", "value", "log_z", "k", "l", "touched"], rows))


def cmd_learn(run, args):
    ds = run.dataset(args.dataset)
    prov = _provider(run, args, ds)
    if args.backend == "exact":
        backend = ExactGradient()
    elif args.backend == "lazy":
        backend = LazyGradient(k=args.k, l=args.l, gap_c=args.gap_c, provider=prov)
    else:
        backend = TopKOnlyGradient(k=args.k, provider=prov)
    cfg = LearnConfig(train_ids=_parse_ids(args.train_ids, ds.n), iterations=args.iterations,
                      lr0=args.lr0, halving_period=args.halving_period, backend=backend,
                      eval_period=args.eval_period, seed=args.seed, reduce=args.reduce)
    res = train(ds, cfg)
    buf = io.StringIO()
    res.write_csv(buf)
    run.manifest.results["final_log_likelihood"] = res.final_log_likelihood
    run.emit_text(buf.getvalue())
    if args.theta_out:
        atomic_write(args.theta_out, ",".join(_fmt(v) for v in res.theta) + "\n")
        run.emit_file(args.theta_out)


def cmd_walk(run, args):
    ds = run.dataset(args.dataset)
    prov = _provider(run, args, ds)
    if args.sampler == "exact":
        smp = ExactStep()
    elif args.sampler == "lazy":
        smp = LazyStep(k=args.k, gap_c=args.gap_c)
    else:
        if args.l is None:
            raise UsageError("--sampler fixed_b needs --l")
        smp = FixedBStep(k=args.k, l=args.l, gap_c=args.gap_c)
    cfg = WalkConfig(steps=args.steps, tau=args.tau, sampler=smp, seed=args.seed,
                     burn_in=args.burn_in, thin=args.thin)
    stats = run_walk(ds, cfg, prov)
    buf = io.StringIO()
    stats.write_counts_csv(buf)
    run.manifest.results["step_time_ns"] = stats.step_time_ns
    run.emit_text(buf.getvalue())
    if args.trajectory_out:
        steps = np.arange(stats.trajectory.size) * stats.thin
        atomic_write(args.trajectory_out,
                     _csv_text(["step", "state"], zip(steps.tolist(), stats.trajectory.tolist())))
        run.emit_file(args.trajectory_out)


def cmd_tvbound(run, args):
    ds = run.dataset(args.dataset)
    prov = _provider(run, args, ds)
    k = min(args.k, ds.n)
    if args.queries:
        picks = [int(query_stream(args.seed, qi, 0).integers(ds.n)) for qi in range(args.queries)]
        queries = [(t, Query(ds.features[t], scale=args.scale)) for t in picks]
    else:
        queries = [(args.theta_row if args.theta_row is not None else -1, _theta(args, ds))]
    rows = []
    for qi, (tid, q) in enumerate(queries):
        top = prov.topk(ds, q, k) if not isinstance(prov, ExactProvider) else exact_topk(ds, q, k)
        rows.append([qi, tid, top.ids.size, _fmt(tv_upper_bound(score_all(ds, q), top.ids))])
    run.emit_text(_csv_text(["query", "theta_id", "k", "bound"], rows))


def cmd_bench(run, args):
    ds = run.dataset(args.dataset)
    build_ns = 0
    if args.index:
        prov = _provider(run, args, ds)
        side = manifest_path_for(args.index)
        if side.is_file():
            build_ns = int(RunManifest.read(side).results.get("build_time_ns", 0))
    elif args.build == "ivf":
        t0 = time.perf_counter_ns()
        ix = build_ivf(ds, n_c=args.n_c, seed=args.seed, n_p=args.n_p or 32,
                       train_size=args.train_size)
        build_ns = time.perf_counter_ns() - t0
        prov = IvfProvider(ix, ds)
    elif args.build == "lsh":
        t0 = time.perf_counter_ns()
        lad = build_lsh_ladder(ds, c=args.c, delta=args.delta, k_max=args.k, seed=args.seed,
                               max_tables=args.max_tables)
        build_ns = time.perf_counter_ns() - t0
        prov = LshProvider(lad, ds)
    else:
        prov = ExactProvider()
    params = BenchParams(mode=args.mode, k=args.k, l=args.l, gap_c=args.gap_c, scale=args.scale,
                         f_col=args.f_col, self_bench=args.self_bench)
    threads = 1 if args.single_thread else args.threads
    rep = run_bench(ds, prov, params, queries=args.queries, seed=args.seed,
                    build_time_ns=build_ns, threads=threads)
    rows = [[r.query, r.theta_id, _fmt(r.fast_value), _fmt(r.baseline_value), r.fast_ns,
             r.baseline_ns] for r in rep.rows]
    summary = rep.summary()
    summary["per_query"] = {"fast_total_ns": rep.fast_total_ns,
                            "fast_per_query_ns": rep.fast_total_ns / rep.queries}
    summary["amortized"] = {"build_time_ns": rep.build_time_ns,
                            "amortized_total_ns": rep.amortized_total_ns,
                            "amortized_per_query_ns": rep.amortized_total_ns / rep.queries}
    summary["threads"] = threads
    run.manifest.results.update({k: v for k, v in summary.items()
                                 if isinstance(v, (int, float, str)) or v is None})
    run.emit_text(_csv_text(["query", "theta_id", "fast_value", "baseline_value", "fast_ns",
                             "baseline_ns"], rows))
    text = json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n"
    if args.summary:
        atomic_write(args.summary, text)
        run.emit_file(args.summary)
    else:
        sys.stderr.write(text)


def cmd_rerun(run, args):
    old = RunManifest.read(_existing(args.manifest_file))
    code = main(old.argv)
    if code != EXIT_OK:
        return code
    bad = 0
    for o in old.outputs:
        now = stable_digest(o["path"]) if Path(o["path"]).is_file() else None
        ok = now == o["stable_sha256"]
        bad += not ok
        print(f"{'match' if ok else 'MISMATCH'} {o['path']}")
    return 0 if bad == 0 else 1


# ---- parser -------------------------------------------------------------------

def _add_out(p, required=False):
    p.add_argument("--out", required=required, help="output path (default: standard output)"
                   if not required else "output path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def _add_theta(p):
    g = p.add_argument_group("query")
    g.add_argument("--theta", help="comma-separated parameter vector")
    g.add_argument("--theta-row", type=int, help="use dataset row I as the parameter vector")
    g.add_argument("--scale", type=float, default=1.0, help="multiply every score by this")


def _add_index(p):
    p.add_argument("--index", help="LDIX index file (default: exact top-k scan)")
    p.add_argument("--n-p", type=int, default=None, help="IVF lists probed per query")


def _add_kl(p, k=100, l=100):
    p.add_argument("--k", type=int, default=k, help="top-k set size")
    p.add_argument("--l", type=int, default=l, help="tail sample size")
    p.add_argument("--gap-c", type=float, default=None,
                   help="retrieval gap c (default: the provider's certificate)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lazygumbel", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="convert fvecs or CSV into an LDDS dataset")
    p.add_argument("input")
    p.add_argument("--format", choices=["fvecs", "csv"], required=True)
    p.add_argument("--normalize", action="store_true", help="scale rows to unit norm")
    _add_out(p, required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("export", help="write an LDDS dataset as fvecs or CSV")
    p.add_argument("dataset")
    p.add_argument("--format", choices=["fvecs", "csv"], required=True)
    _add_out(p, required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gen", help="generate a seeded synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--distribution", choices=DISTRIBUTIONS, default="gaussian_unit")
    p.add_argument("--clusters", type=int, default=4, help="planted_clusters: cluster count m")
    p.add_argument("--spread", type=float, default=0.05, help="planted_clusters: noise scale")
    p.add_argument("--sigma", type=float, default=1.0, help="heavy_tail: log-norm spread")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels-out", help="planted_clusters: write id,label CSV here")
    _add_out(p, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("index-build", help="build an IVF or LSH-ladder index")
    p.add_argument("dataset")
    p.add_argument("--type", choices=["ivf", "lsh"], required=True)
    p.add_argument("--seed", type=int, default=0)
    g = p.add_argument_group("ivf")
    g.add_argument("--n-c", type=int, default=None, help="clusters (default 4*ceil(sqrt n))")
    g.add_argument("--n-p", type=int, default=32, help="lists probed per query")
    g.add_argument("--iters", type=int, default=20, help="k-means iterations")
    g.add_argument("--train-size", type=int, default=None, help="fit centroids on a subsample")
    g = p.add_argument_group("lsh")
    g.add_argument("--c", type=float, default=0.2, help="score gap")
    g.add_argument("--delta", type=float, default=0.1, help="failure probability")
    g.add_argument("--k-max", type=int, default=100, help="largest k the ladder serves")
    g.add_argument("--m1", type=float, default=1.0, help="bound on the query norm")
    g.add_argument("--m2", type=float, default=None, help="bound on row norms (default: max)")
    g.add_argument("--max-bits", type=int, default=64)
    g.add_argument("--max-tables", type=int, default=64)
    g.add_argument("--bits", type=int, default=None, help="force hash bits per table")
    g.add_argument("--tables", type=int, default=None, help="force tables per instance")
    _add_out(p, required=True)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("index-info", help="describe an index file")
    p.add_argument("index")
    p.add_argument("--dataset", help="also check the index against this dataset")
    _add_out(p)
    p.set_defaults(func=cmd_index_info)

    p = sub.add_parser("sample", help="draw samples and report visit frequencies")
    p.add_argument("dataset")
    _add_theta(p)
    _add_index(p)
    _add_kl(p, l=None)
    p.add_argument("--algorithm", choices=["lazy", "fixed_b", "exact"], default="lazy")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("partition", help="estimate log Z")
    p.add_argument("dataset")
    _add_theta(p)
    _add_index(p)
    _add_kl(p)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("expect", help="estimate E[f] for bounded f")
    p.add_argument("dataset")
    _add_theta(p)
    _add_index(p)
    _add_kl(p)
    p.add_argument("--f-col", type=int, default=0, help="f = this feature column")
    p.add_argument("--f-file", help="f values, one per row id, whitespace separated")
    p.add_argument("--C", type=float, default=None, help="bound on |f| (default: max |f|)")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_expect)

    p = sub.add_parser("learn", help="fit theta by gradient ascent on the log-likelihood")
    p.add_argument("dataset")
    p.add_argument("--train-ids", required=True, help="'a:b', 'i,j,...' or '@file'")
    p.add_argument("--backend", choices=["exact", "lazy", "topk_only"], default="exact")
    _add_index(p)
    _add_kl(p)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--lr0", type=float, default=10.0)
    p.add_argument("--halving-period", type=int, default=1000)
    p.add_argument("--eval-period", type=int, default=100)
    p.add_argument("--reduce", choices=["mean", "sum"], default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-out", help="write the fitted theta here")
    _add_out(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("walk", help="random walk with softmax transitions; visit counts")
    p.add_argument("dataset")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--tau", type=float, required=True, help="transition scores are tau*phi.phi'")
    p.add_argument("--sampler", choices=["exact", "lazy", "fixed_b"], default="exact")
    _add_index(p)
    _add_kl(p, l=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectory-out", help="write every thin-th state here")
    _add_out(p)
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("tvbound", help="total-variation upper bound for retrieved top-k sets")
    p.add_argument("dataset")
    _add_theta(p)
    _add_index(p)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--queries", type=int, default=0, help="use this many random dataset rows")
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_tvbound)

    p = sub.add_parser("bench", help="time the fast path against brute force")
    p.add_argument("dataset")
    p.add_argument("--mode", choices=["sample", "partition", "expect"], default="sample")
    _add_index(p)
    p.add_argument("--build", choices=["none", "ivf", "lsh"], default="none",
                   help="build an index in-process and time it (ignored with --index)")
    p.add_argument("--n-c", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--c", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--max-tables", type=int, default=64)
    _add_kl(p, l=None)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--f-col", type=int, default=0)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--single-thread", action="store_true", help="force one thread")
    p.add_argument("--self", dest="self_bench", action="store_true",
                   help="time brute force against itself")
    p.add_argument("--summary", help="write the JSON summary here (default: stderr)")
    _add_out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rerun", help="re-run a command from its manifest and compare outputs")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    run = _Run(args, argv)
    try:
        code = args.func(run, args)
        if args.command != "rerun":
            run.finish()
    except (UsageError, RejectedInput, FileNotFoundError) as e:
        print(f"{ap.prog} {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, IndexFormatError) as e:
        print(f"{ap.prog} {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if code is None else int(code)


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
