"""Command-line entry point: every operation as a subcommand with explicit
seeds, machine-readable outputs, and a manifest written next to any file the
run produces.

Exit codes: 0 success, 2 bad arguments or failed validation, 1 internal
error or a failed embedded assertion.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, density, evaluation, learn, model
from .bp import BpConfig, run_bp
from .density import DensityParams
from .model import LabelModel, params_from_scaling

OUT_DIR_ENV = "LABELSBM_OUT_DIR"


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int | None
    version: str
    wall_time_s: float
    outputs: dict   # filename -> sha256 hex digest

    def to_json_dict(self) -> dict:
        return {
            "command": self.command, "params": self.params, "seed": self.seed,
            "version": self.version, "wall_time_s": self.wall_time_s,
            "outputs": self.outputs,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RunManifest":
        return cls(command=doc["command"], params=doc["params"], seed=doc["seed"],
                   version=doc["version"], wall_time_s=doc["wall_time_s"],
                   outputs=doc["outputs"])


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _Run:
    """Collects written files and drops the manifest next to the first one."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.params = {k: v for k, v in vars(args).items()
                       if k not in ("func", "command") and v is not None}
        self.seed = getattr(args, "seed", None)
        self.t0 = time.monotonic()
        self.files: list[str] = []

    def resolve(self, path: str) -> str:
        base = os.environ.get(OUT_DIR_ENV, "")
        if base and not os.path.isabs(path):
            os.makedirs(base, exist_ok=True)
            return os.path.join(base, path)
        return path

    def record(self, path: str):
        self.files.append(path)

    def finish(self):
        if not self.files:
            return
        manifest = RunManifest(
            command=self.command,
            params={k: v for k, v in self.params.items()
                    if isinstance(v, (int, float, str, bool, list))},
            seed=self.seed,
            version=__version__,
            wall_time_s=time.monotonic() - self.t0,
            outputs={os.path.basename(f): sha256_file(f) for f in self.files},
        )
        path = self.files[0] + ".manifest.json"
        with open(path, "w") as fh:
            json.dump(manifest.to_json_dict(), fh, indent=2)
            fh.write("\n")


def _write_json(run: _Run, path: str | None, doc: dict):
    if path is None:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return
    path = run.resolve(path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    run.record(path)


def _write_csv(run: _Run, path: str | None, header: list[str], rows):
    if path is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
        return
    path = run.resolve(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    run.record(path)


# ---------------------------------------------------------------------------
# Shared argument groups
# ---------------------------------------------------------------------------

def _add_label_args(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help="label model preset, e.g. noisy:0.85 or revealed:0.1")
    group.add_argument("--labels-json", help="path to a label model JSON file")


def _label_model(args) -> LabelModel:
    if getattr(args, "preset", None):
        return model.parse_preset(args.preset)
    return LabelModel.load(args.labels_json)


def _add_scaling_args(parser: argparse.ArgumentParser, need_eps: bool = True):
    parser.add_argument("--p", type=float, required=True, help="P(spin = +1)")
    parser.add_argument("--lambda", dest="lam", type=float, required=True,
                        help="signal strength")
    if need_eps:
        parser.add_argument("--eps", type=float, required=True,
                            help="affinity contrast; mean degree is lambda/eps^2")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    run = _Run("generate", args)
    lm = _label_model(args)
    params = params_from_scaling(args.p, args.lam, args.eps, args.n)
    graph = model.sample_sbm(params, lm, args.seed)
    out = run.resolve(args.out)
    model.write_graph(out, graph)
    run.record(out)
    lm_path = out + ".labels.json"
    lm.save(lm_path)
    run.record(lm_path)
    run.finish()
    print(f"wrote {out} (n={graph.n}, m={graph.m}) and {lm_path}")
    return 0


def cmd_bp(args) -> int:
    run = _Run("bp", args)
    graph = model.read_graph(args.graph)
    lm = _label_model(args)
    params = params_from_scaling(args.p, args.lam, args.eps, graph.n)
    config = BpConfig(t=args.t, include_prior_bias_in_decision=not args.no_prior_in_decision)
    estimates, beliefs = run_bp(graph, params, lm, config)
    doc = {"estimates": estimates.tolist(), "beliefs": beliefs.tolist(),
           "rounds": config.t}
    _write_json(run, args.out, doc)
    run.finish()
    return 0


def cmd_density_g(args) -> int:
    lm = _label_model(args)
    dp = DensityParams(lam=args.lam, p=args.p, label_model=lm,
                       quad_nodes=args.quad_nodes)
    print(f"{density.big_g(args.alpha, dp):.10g}")
    return 0


def cmd_density_evolve(args) -> int:
    run = _Run("density evolve", args)
    lm = _label_model(args)
    dp = DensityParams(lam=args.lam, p=args.p, label_model=lm)
    alpha0 = 0.0 if args.start == "zero" else density.tilde_alpha1(args.lam, args.p)
    trace = density.evolve(alpha0, dp, max_steps=args.max_steps, tol=args.tol)
    rows = [[t, float(a)] for t, a in enumerate(trace.alpha)]
    _write_csv(run, args.out, ["t", "alpha_t"], rows)
    run.finish()
    if args.out:
        print(f"limit {trace.limit:.10g} after {len(trace) - 1} steps "
              f"(converged={trace.converged})")
    return 0


def cmd_density_fixed_points(args) -> int:
    run = _Run("density fixed-points", args)
    lm = _label_model(args)
    dp = DensityParams(lam=args.lam, p=args.p, label_model=lm)
    report = density.find_fixed_points(dp, alpha_max=args.alpha_max,
                                       grid_step=args.grid_step,
                                       bisect_tol=args.bisect_tol)
    doc = {
        "points": [{"alpha": fp.alpha, "stability": fp.stability,
                    "derivative": fp.derivative} for fp in report.points],
        "grid_resolution": report.grid_resolution,
        "bisection_tolerance": report.bisection_tolerance,
    }
    _write_json(run, args.out, doc)
    run.finish()
    return 0


def cmd_density_sweep(args) -> int:
    run = _Run("density sweep", args)
    values = tuple(np.linspace(args.start, args.stop, args.steps))
    spec = density.SweepSpec(var=args.var, values=values, p=args.p, lam=args.lam,
                             beta=args.beta, preset_kind=args.preset_kind)
    rows_d = density.predict_bp_curve(spec)
    header = [args.var, "alpha_bp", "alpha_opt", "success_bp", "success_opt",
              "n_fixed_points"]
    _write_csv(run, args.out, header, [[r[k] for k in header] for r in rows_d])
    run.finish()
    return 0


def cmd_eval_tree_moments(args) -> int:
    run = _Run("eval tree-moments", args)
    lm = _label_model(args)
    report = evaluation.tree_moment_check(args.p, args.lam, args.d, lm,
                                          depths=tuple(args.r), trials=args.trials,
                                          seed=args.seed)
    _write_json(run, args.out, report)
    run.finish()
    worst = max(abs(c["z_mean"]) for c in report["cells"])
    print(f"worst |z| on the mean: {worst:.2f}", file=sys.stderr)
    return 0


def cmd_eval_end_to_end(args) -> int:
    run = _Run("eval end-to-end", args)
    lm = _label_model(args)
    spec = evaluation.ExperimentSpec(p=args.p, lam=args.lam, epsilon=args.eps,
                                     n=args.n, label_model=lm, t=args.t,
                                     trials=args.trials, seed=args.seed,
                                     threads=args.threads)
    report = evaluation.sbm_end_to_end(spec)
    _write_json(run, args.out, report)
    run.finish()
    gap = abs(report["bp"]["mean"] - report["prediction"]["success"])
    print(f"bp {report['bp']['mean']:.4f}  baseline {report['baseline']['mean']:.4f}  "
          f"predicted {report['prediction']['success']:.4f}  gap {gap:.4f}",
          file=sys.stderr)
    if args.check_tolerance is not None and gap > args.check_tolerance:
        print(f"FAIL: gap {gap:.4f} exceeds tolerance {args.check_tolerance}",
              file=sys.stderr)
        return 1
    return 0


def cmd_eval_example1(args) -> int:
    run = _Run("eval example1", args)
    report = evaluation.example1_experiment(args.a, args.b, args.n,
                                            trials=args.trials, seed=args.seed,
                                            method=args.method,
                                            threads=args.threads)
    _write_json(run, args.out, report)
    run.finish()
    ok = True
    if args.min_overlap is not None and report["mean_overlap"] < args.min_overlap:
        print(f"FAIL: mean overlap {report['mean_overlap']:.4f} below "
              f"{args.min_overlap}", file=sys.stderr)
        ok = False
    if args.max_control is not None and report["mean_control"] > args.max_control:
        print(f"FAIL: control overlap {report['mean_control']:.4f} above "
              f"{args.max_control}", file=sys.stderr)
        ok = False
    return 0 if ok else 1


def cmd_eval_figure(args) -> int:
    run = _Run("eval figure", args)
    header, rows = evaluation.figure_sweep(args.kind, p=args.p, lam=args.lam,
                                           beta=args.beta,
                                           preset_kind=args.preset_kind,
                                           n_points=args.points)
    _write_csv(run, args.out, header, rows)
    run.finish()
    return 0


def cmd_learn_estimate(args) -> int:
    run = _Run("learn estimate", args)
    graph = model.read_graph(args.graph)
    if args.spins:
        spins = np.loadtxt(args.spins, dtype=np.int64).reshape(-1)
    elif graph.spins is not None:
        spins = graph.spins
    else:
        raise ValueError("graph file carries no spins; pass --spins FILE")
    est = learn.estimate_label_dists(graph, spins)
    _write_json(run, args.out, est.to_json_dict())
    run.finish()
    return 0


def cmd_learn_split(args) -> int:
    run = _Run("learn split", args)
    graph = model.read_graph(args.graph)
    written = []
    for label, ids, sub in learn.kernel_split(graph):
        path = run.resolve(f"{args.out_prefix}.label{label}.txt")
        model.write_graph(path, sub)
        run.record(path)
        ids_path = run.resolve(f"{args.out_prefix}.label{label}.vertices.txt")
        np.savetxt(ids_path, ids, fmt="%d")
        run.record(ids_path)
        written.append(path)
    run.finish()
    print(f"wrote {len(written)} label-block graphs")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelsbm",
        description="Community detection with vertex-label side information: "
                    "samplers, belief propagation, density evolution, and "
                    "Monte Carlo validation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample a labeled graph to a file")
    _add_scaling_args(gen)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output graph file")
    _add_label_args(gen)
    gen.set_defaults(func=cmd_generate)

    bp_p = sub.add_parser("bp", help="run the message-passing estimator on a graph file")
    bp_p.add_argument("--graph", required=True)
    _add_scaling_args(bp_p)
    bp_p.add_argument("--t", type=int, required=True, help="rounds / neighborhood radius")
    bp_p.add_argument("--no-prior-in-decision", action="store_true",
                      help="threshold belief - log(p/(1-p)) instead of the belief")
    bp_p.add_argument("--out", help="write JSON here instead of stdout")
    _add_label_args(bp_p)
    bp_p.set_defaults(func=cmd_bp)

    dens = sub.add_parser("density", help="large-degree limit theory")
    dsub = dens.add_subparsers(dest="density_command", required=True)

    dg = dsub.add_parser("g", help="evaluate the signal map at one point")
    _add_scaling_args(dg, need_eps=False)
    dg.add_argument("--alpha", type=float, required=True)
    dg.add_argument("--quad-nodes", type=int, default=density.DEFAULT_QUAD_NODES)
    _add_label_args(dg)
    dg.set_defaults(func=cmd_density_g)

    de = dsub.add_parser("evolve", help="iterate the signal map to its limit")
    _add_scaling_args(de, need_eps=False)
    de.add_argument("--from", dest="start", choices=("zero", "opt"), default="zero",
                    help="start at 0 (label initialization) or at the true-spin level")
    de.add_argument("--tol", type=float, default=1e-10)
    de.add_argument("--max-steps", type=int, default=10_000)
    de.add_argument("--out", help="CSV path (default: stdout)")
    _add_label_args(de)
    de.set_defaults(func=cmd_density_evolve)

    df = dsub.add_parser("fixed-points", help="locate and classify fixed points")
    _add_scaling_args(df, need_eps=False)
    df.add_argument("--alpha-max", type=float, default=None)
    df.add_argument("--grid-step", type=float, default=None)
    df.add_argument("--bisect-tol", type=float, default=1e-10)
    df.add_argument("--out", help="JSON path (default: stdout)")
    _add_label_args(df)
    df.set_defaults(func=cmd_density_fixed_points)

    ds = dsub.add_parser("sweep", help="predicted performance over a parameter grid")
    ds.add_argument("--var", choices=("p", "lambda", "beta"), required=True)
    ds.add_argument("--from", dest="start", type=float, required=True)
    ds.add_argument("--to", dest="stop", type=float, required=True)
    ds.add_argument("--steps", type=int, required=True)
    ds.add_argument("--p", type=float, default=0.5)
    ds.add_argument("--lambda", dest="lam", type=float, default=0.8)
    ds.add_argument("--beta", type=float, default=0.85)
    ds.add_argument("--preset-kind", choices=("noisy", "revealed"), default="noisy")
    ds.add_argument("--out", help="CSV path (default: stdout)")
    ds.set_defaults(func=cmd_density_sweep)

    ev = sub.add_parser("eval", help="Monte Carlo validation experiments")
    esub = ev.add_subparsers(dest="eval_command", required=True)

    etm = esub.add_parser("tree-moments", help="tree statistics vs the limit theory")
    _add_scaling_args(etm, need_eps=False)
    etm.add_argument("--d", type=float, required=True, help="mean degree")
    etm.add_argument("--r", type=int, nargs="+", default=[1, 2], help="depths")
    etm.add_argument("--trials", type=int, default=100_000)
    etm.add_argument("--seed", type=int, default=0)
    etm.add_argument("--out", help="JSON path (default: stdout)")
    _add_label_args(etm)
    etm.set_defaults(func=cmd_eval_tree_moments)

    e2e = esub.add_parser("end-to-end", help="sampled graphs: estimator vs theory")
    _add_scaling_args(e2e)
    e2e.add_argument("--n", type=int, required=True)
    e2e.add_argument("--t", type=int, required=True)
    e2e.add_argument("--trials", type=int, default=10)
    e2e.add_argument("--seed", type=int, default=0)
    e2e.add_argument("--threads", type=int, default=None)
    e2e.add_argument("--check-tolerance", type=float, default=None,
                     help="exit 1 if |empirical - predicted| exceeds this")
    e2e.add_argument("--out", help="JSON path (default: stdout)")
    _add_label_args(e2e)
    e2e.set_defaults(func=cmd_eval_end_to_end)

    ex1 = esub.add_parser("example1", help="four-block label-splitting experiment")
    ex1.add_argument("--a", type=float, required=True)
    ex1.add_argument("--b", type=float, required=True)
    ex1.add_argument("--n", type=int, default=8000)
    ex1.add_argument("--trials", type=int, default=10)
    ex1.add_argument("--seed", type=int, default=0)
    ex1.add_argument("--method", choices=("spectral", "bp-seeded"), default="spectral")
    ex1.add_argument("--threads", type=int, default=None)
    ex1.add_argument("--min-overlap", type=float, default=None,
                     help="exit 1 if the mean within-group overlap is below this")
    ex1.add_argument("--max-control", type=float, default=None,
                     help="exit 1 if the shuffled control overlap is above this")
    ex1.add_argument("--out", help="JSON path (default: stdout)")
    ex1.set_defaults(func=cmd_eval_example1)

    efig = esub.add_parser("figure", help="grid data behind the standard plots")
    efig.add_argument("--kind", required=True,
                      choices=("G_curve", "succ_vs_p", "succ_vs_lambda", "bp_vs_labels"))
    efig.add_argument("--p", type=float, default=0.5)
    efig.add_argument("--lambda", dest="lam", type=float, default=0.8)
    efig.add_argument("--beta", type=float, default=0.85)
    efig.add_argument("--preset-kind", choices=("noisy", "revealed"), default="noisy")
    efig.add_argument("--points", type=int, default=41)
    efig.add_argument("--out", help="CSV path (default: stdout)")
    efig.set_defaults(func=cmd_eval_figure)

    le = sub.add_parser("learn", help="parameter estimation and label splitting")
    lsub = le.add_subparsers(dest="learn_command", required=True)

    lest = lsub.add_parser("estimate", help="label distributions from a spun graph")
    lest.add_argument("--graph", required=True)
    lest.add_argument("--spins", help="text file with one +-1 spin per line")
    lest.add_argument("--out", help="JSON path (default: stdout)")
    lest.set_defaults(func=cmd_learn_estimate)

    lsp = lsub.add_parser("split", help="one induced subgraph per label")
    lsp.add_argument("--graph", required=True)
    lsp.add_argument("--out-prefix", required=True)
    lsp.set_defaults(func=cmd_learn_split)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
