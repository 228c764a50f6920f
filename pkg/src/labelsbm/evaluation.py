"""Monte Carlo validation harness: empirical success metrics, tree-moment
checks against the large-degree theory, end-to-end experiments on sampled
graphs, figure-style sweeps, and the label-splitting experiment on the
four-block construction.

Every report is a plain dict carrying the trial count, the seed, and
standard errors, so rerunning with the same seed reproduces it exactly.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import density
from ._treesim import root_llr_samples
from .bp import BpConfig, ChannelFunctions, propagate_messages, run_bp
from .density import DensityParams, evolve, predicted_success
from .learn import kernel_split, spectral_partition
from .model import (LabeledGraph, LabelModel, SbmParams, as_generator, dtv_labels,
                    params_from_scaling, sample_pairs_between, sample_pairs_within,
                    sample_sbm, trial_seeds)


@dataclass(frozen=True)
class SuccessEstimate:
    """Two-sided success: P(est + | true +) + P(est - | true -) - 1, so spin-
    agnostic estimators score zero.  Standard error by binomial propagation."""

    estimate: float
    se: float
    acc_plus: float
    acc_minus: float
    n_plus: int
    n_minus: int

    def to_json_dict(self) -> dict:
        return {"estimate": self.estimate, "se": self.se,
                "acc_plus": self.acc_plus, "acc_minus": self.acc_minus,
                "n_plus": self.n_plus, "n_minus": self.n_minus}


def empirical_success(estimates: np.ndarray, true_spins: np.ndarray) -> SuccessEstimate:
    estimates = np.asarray(estimates)
    true_spins = np.asarray(true_spins)
    if estimates.shape != true_spins.shape:
        raise ValueError("estimates and true_spins must have the same length")
    n_plus = int(np.sum(true_spins == 1))
    n_minus = int(np.sum(true_spins == -1))
    if n_plus == 0 or n_minus == 0:
        raise ValueError("both classes must be present to score conditional accuracies")
    acc_p = float(np.mean(estimates[true_spins == 1] == 1))
    acc_m = float(np.mean(estimates[true_spins == -1] == -1))
    se = float(np.sqrt(acc_p * (1 - acc_p) / n_plus + acc_m * (1 - acc_m) / n_minus))
    return SuccessEstimate(estimate=acc_p + acc_m - 1.0, se=se, acc_plus=acc_p,
                           acc_minus=acc_m, n_plus=n_plus, n_minus=n_minus)


def label_only_baseline(graph: LabeledGraph, label_model: LabelModel) -> np.ndarray:
    """+1 wherever the vertex label is likelier under community +1; its
    expected success equals the total variation distance of the label model."""
    prefer_plus = label_model.mu > label_model.nu
    return np.where(prefer_plus[graph.labels], 1, -1).astype(np.int64)


def overlap_up_to_flip(estimates: np.ndarray, truth: np.ndarray) -> float:
    """|2 * accuracy - 1| maximized over the global spin flip; the standard
    score for symmetric two-group problems."""
    acc = float(np.mean(np.asarray(estimates) == np.asarray(truth)))
    return abs(2.0 * acc - 1.0)


# ---------------------------------------------------------------------------
# Experiment specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun an end-to-end experiment bit-for-bit."""

    p: float
    lam: float
    epsilon: float
    n: int
    label_model: LabelModel
    t: int
    trials: int = 1
    seed: int = 0
    include_prior_bias: bool = True
    llr_cap: float = 30.0
    threads: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def sbm_params(self) -> SbmParams:
        return params_from_scaling(self.p, self.lam, self.epsilon, self.n)

    def density_params(self) -> DensityParams:
        return DensityParams(lam=self.lam, p=self.p, label_model=self.label_model)

    def bp_config(self) -> BpConfig:
        return BpConfig(t=self.t, llr_cap=self.llr_cap,
                        include_prior_bias_in_decision=self.include_prior_bias)

    def to_json_dict(self) -> dict:
        return {
            "p": self.p, "lambda": self.lam, "epsilon": self.epsilon, "n": self.n,
            "label_model": self.label_model.to_json_dict(), "t": self.t,
            "trials": self.trials, "seed": self.seed,
            "include_prior_bias": self.include_prior_bias, "llr_cap": self.llr_cap,
        }


def _run_trials(worker, trials: int, seed, threads: int | None) -> list:
    """Run worker(trial_index, child_seed) for every trial with order-stable
    aggregation; each trial owns an independent generator, so the results do
    not depend on the thread count."""
    seeds = trial_seeds(seed, trials)
    results = [None] * trials
    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(worker, k, seeds[k]): k for k in range(trials)}
            for fut, k in futures.items():
                results[k] = fut.result()
    else:
        for k in range(trials):
            results[k] = worker(k, seeds[k])
    return results


# ---------------------------------------------------------------------------
# Tree moments
# ---------------------------------------------------------------------------

def tree_moment_check(p: float, lam: float, d: float, label_model: LabelModel,
                      depths=(1, 2), root_spins=(1, -1), trials: int = 100_000,
                      seed: int = 0, quad_nodes: int = 201) -> dict:
    """Sample root statistics of labeled trees with forced root spins and
    compare the centered value gamma_r = xi_r - h(L_root) - w against the
    large-degree theory: mean +-alpha_r/2 by root spin, variance alpha_r.

    Mean degree d is taken directly; the matching affinity contrast is
    epsilon = sqrt(lam / d).
    """
    epsilon = float(np.sqrt(lam / d))
    n_for_probs = int(np.ceil(d * (1 + epsilon / min(p, 1 - p)))) + 1
    params = params_from_scaling(p, lam, epsilon, n_for_probs)
    dp = DensityParams(lam=lam, p=p, label_model=label_model, quad_nodes=quad_nodes)
    trace = evolve(0.0, dp, max_steps=max(depths) + 1, tol=0.0)
    alphas = {r: float(trace.alpha[r]) if r < len(trace.alpha) else trace.limit
              for r in depths}

    rng_seeds = trial_seeds(seed, len(depths) * len(root_spins))
    cells = []
    idx = 0
    for r in depths:
        for s in root_spins:
            samples = root_llr_samples(params, label_model, r, s, trials,
                                       rng_seeds[idx])
            idx += 1
            g = samples["gamma"]
            mean = float(g.mean())
            var = float(g.var(ddof=1))
            se_mean = float(g.std(ddof=1) / np.sqrt(trials))
            theory_mean = (alphas[r] / 2.0) * (1 if s == 1 else -1)
            theory_var = alphas[r]
            cells.append({
                "depth": r, "root_spin": s, "trials": trials,
                "mean": mean, "se_mean": se_mean, "var": var,
                "theory_mean": theory_mean, "theory_var": theory_var,
                "z_mean": (mean - theory_mean) / se_mean if se_mean > 0 else np.nan,
                "var_ratio": var / theory_var if theory_var > 0 else np.nan,
                "sign_success_contrib": float(np.mean(samples["xi"] >= 0) if s == 1
                                              else np.mean(samples["xi"] < 0)),
            })
    return {"p": p, "lambda": lam, "d": d, "epsilon": epsilon, "seed": seed,
            "alphas": {str(r): alphas[r] for r in depths}, "cells": cells}


def tree_sign_rule_success(p: float, lam: float, d: float, label_model: LabelModel,
                           depth: int, trials: int = 100_000, seed: int = 0,
                           samples: dict | None = None) -> dict:
    """Empirical success of classifying the root by the sign of its depth-r
    log-likelihood ratio, against the density-evolution prediction.

    ``samples`` may carry precomputed {'+1': ..., '-1': ...} xi arrays."""
    epsilon = float(np.sqrt(lam / d))
    n_for_probs = int(np.ceil(d * (1 + epsilon / min(p, 1 - p)))) + 1
    params = params_from_scaling(p, lam, epsilon, n_for_probs)
    if samples is None:
        s_plus, s_minus = trial_seeds(seed, 2)
        samples = {
            "+1": root_llr_samples(params, label_model, depth, 1, trials, s_plus)["xi"],
            "-1": root_llr_samples(params, label_model, depth, -1, trials, s_minus)["xi"],
        }
    xi_p, xi_m = samples["+1"], samples["-1"]
    acc_p = float(np.mean(xi_p >= 0))
    acc_m = float(np.mean(xi_m < 0))
    se = float(np.sqrt(acc_p * (1 - acc_p) / len(xi_p) + acc_m * (1 - acc_m) / len(xi_m)))
    dp = DensityParams(lam=lam, p=p, label_model=label_model)
    trace = evolve(0.0, dp, max_steps=depth + 1, tol=0.0)
    alpha_r = float(trace.alpha[depth]) if depth < len(trace.alpha) else trace.limit
    return {
        "depth": depth, "trials": trials, "seed": seed,
        "empirical_success": acc_p + acc_m - 1.0, "se": se,
        "alpha": alpha_r,
        "predicted_success": predicted_success(alpha_r, dp, include_prior_bias=True),
    }


# ---------------------------------------------------------------------------
# End-to-end graph experiments
# ---------------------------------------------------------------------------

def sbm_end_to_end(spec: ExperimentSpec) -> dict:
    """Sample graphs, run the message-passing estimator and the label-only
    baseline, and report both against the density-evolution prediction at
    the matching round count."""
    params = spec.sbm_params()
    config = spec.bp_config()

    def one_trial(_k, child_seed):
        rng = as_generator(child_seed)
        graph = sample_sbm(params, spec.label_model, rng)
        est, _ = run_bp(graph, params, spec.label_model, config)
        bp_succ = empirical_success(est, graph.spins)
        base = empirical_success(label_only_baseline(graph, spec.label_model),
                                 graph.spins)
        return bp_succ, base

    results = _run_trials(one_trial, spec.trials, spec.seed, spec.threads)
    bp_vals = np.array([r[0].estimate for r in results])
    base_vals = np.array([r[1].estimate for r in results])

    dp = spec.density_params()
    trace = evolve(0.0, dp, max_steps=spec.t + 1, tol=0.0)
    alpha_t = float(trace.alpha[spec.t]) if spec.t < len(trace.alpha) else trace.limit
    pred = predicted_success(alpha_t, dp, spec.include_prior_bias)
    return {
        "spec": spec.to_json_dict(),
        "bp": {
            "per_trial": bp_vals.tolist(),
            "mean": float(bp_vals.mean()),
            "se": float(bp_vals.std(ddof=1) / np.sqrt(spec.trials)) if spec.trials > 1
                  else float(results[0][0].se),
        },
        "baseline": {
            "per_trial": base_vals.tolist(),
            "mean": float(base_vals.mean()),
            "se": float(base_vals.std(ddof=1) / np.sqrt(spec.trials)) if spec.trials > 1
                  else float(results[0][1].se),
            "expected": dtv_labels(spec.label_model),
        },
        "prediction": {"alpha_t": alpha_t, "success": pred},
    }


# ---------------------------------------------------------------------------
# The four-block label-splitting experiment
# ---------------------------------------------------------------------------

def example1_regime(a: float, b: float) -> tuple[float, float, float]:
    """(2(a+b), (a-b)^2, 4(a+b)): the experiment needs the middle value
    strictly between the outer two, so the whole graph is undetectable but
    each label block is detectable."""
    return 2.0 * (a + b), (a - b) ** 2, 4.0 * (a + b)


def check_example1_regime(a: float, b: float):
    lo, mid, hi = example1_regime(a, b)
    if not (lo < mid < hi):
        raise ValueError(
            f"(a, b) = ({a}, {b}) outside the split-detectable regime: need "
            f"2(a+b) < (a-b)^2 < 4(a+b), got {lo:g}, {mid:g}, {hi:g}"
        )


def sample_example1_graph(a: float, b: float, n: int, seed) -> LabeledGraph:
    """Four equal blocks; within-pair affinity 2a/n, cross-pair within-label
    (a+b)/n, cross-label per the four-block matrix.  Blocks (0, 1) share one
    label, blocks (2, 3) the other; spins +-1 alternate inside each label
    group, which is exactly the structure the split is meant to recover."""
    if n % 4 != 0:
        raise ValueError("n must be divisible by 4")
    rng = as_generator(seed)
    q = n // 4
    block_ids = [np.arange(i * q, (i + 1) * q) for i in range(4)]
    prob = np.array([
        [2 * a, 2 * b, a + b, a + b],
        [2 * b, 2 * a, a + b, a + b],
        [a + b, a + b, 2 * a, 2 * b],
        [a + b, a + b, 2 * b, 2 * a],
    ]) / n
    parts = []
    for i in range(4):
        for j in range(i, 4):
            if i == j:
                parts.append(sample_pairs_within(rng, block_ids[i], prob[i, j]))
            else:
                parts.append(sample_pairs_between(rng, block_ids[i], block_ids[j],
                                                  prob[i, j]))
    edges = np.concatenate(parts, axis=0)
    block = np.repeat(np.arange(4), q)
    labels = (block >= 2).astype(np.int64)
    spins = np.where(block % 2 == 0, 1, -1).astype(np.int64)
    return LabeledGraph(n=n, edges=edges, labels=labels, spins=spins, n_labels=2)


def _seeded_bp_partition(sub: LabeledGraph, a: float, b: float, rng,
                         flip_fraction: float = 0.1, rounds: int = 20) -> np.ndarray:
    """Symmetric detector used inside one label block: message passing with
    uninformative labels whose initial messages encode a noisy copy of the
    truth.  Without the noisy seed the symmetric problem has nothing to
    break the +-1 tie."""
    a_sub = 2 * a / (a + b)
    b_sub = 2 * b / (a + b)
    d_sub = (a + b) / 2.0
    params = SbmParams(p=0.5, a=a_sub, b=b_sub, c=a_sub, d=d_sub, n=sub.n)
    uninformative = LabelModel(("x",), (1.0,), (1.0,))
    channels = ChannelFunctions.from_params(params, uninformative)
    seed_spins = sub.spins * np.where(rng.random(sub.n) < flip_fraction, -1, 1)
    src, dst, rev = sub.directed_edges()
    msg = seed_spins[src].astype(np.float64)
    for _ in range(rounds):
        fm = channels.f(msg)
        incoming = np.bincount(dst, weights=fm, minlength=sub.n)
        msg = channels.clamp(incoming[src] - fm[rev])
    beliefs = np.bincount(dst, weights=channels.f(msg), minlength=sub.n)
    return np.where(beliefs >= 0, 1, -1).astype(np.int64)


def example1_experiment(a: float, b: float, n: int, trials: int = 10, seed: int = 0,
                        method: str = "spectral", threads: int | None = None) -> dict:
    """Split the four-block graph by label, detect the two communities inside
    each label group, and score the within-group overlap; a shuffled-spin
    control calibrates the score a blind guess would get."""
    check_example1_regime(a, b)

    def one_trial(_k, child_seed):
        rng = as_generator(child_seed)
        graph = sample_example1_graph(a, b, n, rng)
        overlaps, controls = [], []
        for _label, ids, sub in kernel_split(graph):
            if method == "spectral":
                est = spectral_partition(sub, seed=rng).spins
            elif method == "bp-seeded":
                est = _seeded_bp_partition(sub, a, b, rng)
            else:
                raise ValueError(f"unknown method {method!r}")
            overlaps.append(overlap_up_to_flip(est, sub.spins))
            controls.append(overlap_up_to_flip(est, rng.permutation(sub.spins)))
        return overlaps, controls

    results = _run_trials(one_trial, trials, seed, threads)
    overlaps = np.array([o for r in results for o in r[0]])
    controls = np.array([c for r in results for c in r[1]])
    lo, mid, hi = example1_regime(a, b)
    return {
        "a": a, "b": b, "n": n, "trials": trials, "seed": seed, "method": method,
        "regime": {"lower": lo, "signal": mid, "upper": hi},
        "group_overlaps": overlaps.tolist(),
        "mean_overlap": float(overlaps.mean()),
        "se_overlap": float(overlaps.std(ddof=1) / np.sqrt(len(overlaps))),
        "control_overlaps": controls.tolist(),
        "mean_control": float(controls.mean()),
    }


# ---------------------------------------------------------------------------
# Figure-style sweeps
# ---------------------------------------------------------------------------

def figure_sweep(kind: str, *, p: float = 0.5, lam: float = 0.8,
                 beta: float = 0.85, preset_kind: str = "noisy",
                 label_model: LabelModel | None = None,
                 values=None, n_points: int = 41) -> tuple[list[str], list[list]]:
    """Grid data behind the standard plots; no simulation, density theory
    only.  Returns (header, rows) ready for CSV."""
    if kind == "G_curve":
        lm = label_model or _preset(preset_kind, beta)
        dp = DensityParams(lam=lam, p=p, label_model=lm)
        amax = 2.0 * density.tilde_alpha1(lam, p)
        grid = np.asarray(values) if values is not None \
            else np.linspace(0.0, amax, n_points)
        rows = [[float(al), density.big_g(float(al), dp)] for al in grid]
        return ["alpha", "g_of_alpha"], rows

    if kind in ("succ_vs_p", "succ_vs_lambda"):
        var = "p" if kind == "succ_vs_p" else "lambda"
        default = np.linspace(0.05, 0.95, n_points) if var == "p" \
            else np.linspace(0.1, 2.0, n_points)
        grid = tuple(float(x) for x in (values if values is not None else default))
        lm = label_model or _preset(preset_kind, beta)
        spec = density.SweepSpec(var=var, values=grid, p=p, lam=lam, label_model=lm)
        rows_d = density.predict_bp_curve(spec)
        header = [var, "alpha_bp", "alpha_opt", "success_bp", "success_opt",
                  "n_fixed_points"]
        return header, [[r[k] for k in header] for r in rows_d]

    if kind == "bp_vs_labels":
        default = np.linspace(0.5, 0.99, n_points)
        grid = tuple(float(x) for x in (values if values is not None else default))
        spec = density.SweepSpec(var="beta", values=grid, p=p, lam=lam,
                                 preset_kind=preset_kind)
        rows = []
        for r in density.predict_bp_curve(spec):
            lm = _preset(preset_kind, r["beta"])
            rows.append([r["beta"], r["success_bp"], dtv_labels(lm),
                         r["n_fixed_points"]])
        return ["beta", "success_bp", "success_labels_only", "n_fixed_points"], rows

    raise ValueError(f"unknown figure kind {kind!r}")


def _preset(kind: str, beta: float) -> LabelModel:
    return LabelModel.noisy(beta) if kind == "noisy" else LabelModel.revealed(beta)
