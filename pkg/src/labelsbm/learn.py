"""Estimating model parameters from a graph with (estimated) spins, label-aware
graph splitting, and a heuristic spectral partitioner used as the model-free
detection step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LabeledGraph, LabelModel, SbmParams, as_generator


@dataclass(frozen=True)
class EstimatedModel:
    """Plug-in estimates: per-label frequencies within each estimated
    community, the community-size split, and affinities from block edge
    densities rescaled so the mean degree matches."""

    mu_hat: np.ndarray
    nu_hat: np.ndarray
    p_hat: float
    a_hat: float
    b_hat: float
    c_hat: float

    def to_json_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat.tolist(),
            "nu_hat": self.nu_hat.tolist(),
            "p_hat": self.p_hat,
            "a_hat": self.a_hat,
            "b_hat": self.b_hat,
            "c_hat": self.c_hat,
        }


def estimate_label_dists(graph: LabeledGraph, spin_estimates: np.ndarray) -> EstimatedModel:
    """Empirical label frequencies conditioned on the estimated communities,
    mu_hat(l) = #{i: s_i = +1, L_i = l} / #{i: s_i = +1}, plus affinity
    estimates from within/between block edge densities."""
    s = np.asarray(spin_estimates)
    if s.shape != (graph.n,):
        raise ValueError("spin_estimates must have one entry per vertex")
    n_plus = int(np.sum(s == 1))
    n_minus = int(np.sum(s == -1))
    if n_plus == 0 or n_minus == 0:
        raise ValueError("both estimated communities must be nonempty")
    L = graph.n_labels
    mu_hat = np.bincount(graph.labels[s == 1], minlength=L) / n_plus
    nu_hat = np.bincount(graph.labels[s == -1], minlength=L) / n_minus
    p_hat = n_plus / graph.n

    d_hat = 2.0 * graph.m / graph.n
    su, sv = s[graph.edges[:, 0]], s[graph.edges[:, 1]]
    m_pp = int(np.sum((su == 1) & (sv == 1)))
    m_mm = int(np.sum((su == -1) & (sv == -1)))
    m_pm = graph.m - m_pp - m_mm
    scale = graph.n / d_hat if d_hat > 0 else np.nan
    pairs_pp = n_plus * (n_plus - 1) / 2.0
    pairs_mm = n_minus * (n_minus - 1) / 2.0
    pairs_pm = n_plus * n_minus
    a_hat = (m_pp / pairs_pp) * scale if pairs_pp else np.nan
    c_hat = (m_mm / pairs_mm) * scale if pairs_mm else np.nan
    b_hat = (m_pm / pairs_pm) * scale
    return EstimatedModel(mu_hat=mu_hat, nu_hat=nu_hat, p_hat=p_hat,
                          a_hat=a_hat, b_hat=b_hat, c_hat=c_hat)


def kernel_split(graph: LabeledGraph) -> list[tuple[int, np.ndarray, LabeledGraph]]:
    """Restrict the graph to equal-label pairs and break it into one induced
    subgraph per label; equivalent to masking the adjacency with the
    indicator kernel of matching endpoint labels.

    Returns (label_index, original_vertex_ids, subgraph) for every label
    present on at least one vertex; the vertex sets partition [0, n).
    """
    out = []
    for l in range(graph.n_labels):
        ids = np.where(graph.labels == l)[0]
        if len(ids) == 0:
            continue
        out.append((l, ids, graph.induced_subgraph(ids)))
    return out


def degree_separation_check(params: SbmParams, label_model: LabelModel,
                            label: int, tol: float = 1e-12) -> bool:
    """Within the label-``label`` block after splitting, the two communities
    have different mean degrees iff p*mu(l)*a != p*mu(l)*b + p*nu(l)*(a-b),
    i.e. iff a != b and mu(l) != nu(l).  Degree separation is what lets a
    degree- or spectrum-based method see the communities there."""
    mu_l = label_model.mu[label]
    nu_l = label_model.nu[label]
    lhs = params.p * mu_l * params.a
    rhs = params.p * mu_l * params.b + params.p * nu_l * (params.a - params.b)
    return abs(lhs - rhs) > tol


@dataclass
class SpectralResult:
    spins: np.ndarray
    converged: bool
    iterations: int
    eigenvalue: float


def spectral_partition(graph: LabeledGraph, iterations: int = 600,
                       seed=0, tol: float = 1e-10) -> SpectralResult:
    """Heuristic two-way split: deflated power iteration for the leading
    eigenvector of the degree-centered adjacency B = A - (dbar/n) * ones,
    restricted to the largest connected component; vertex signs give the
    partition.  Vertices outside that component are assigned +1.

    Deterministic given the seed.  If the iteration count runs out before
    the eigenvalue stabilizes the result is returned with converged=False.
    """
    from scipy.sparse.csgraph import connected_components

    rng = as_generator(seed)
    spins = np.ones(graph.n, dtype=np.int64)
    if graph.m == 0:
        return SpectralResult(spins=spins, converged=True, iterations=0, eigenvalue=0.0)
    adj = graph.scipy_adjacency()
    _, comp = connected_components(adj, directed=False)
    keep = comp == np.argmax(np.bincount(comp))
    ids = np.where(keep)[0]
    sub = adj[ids][:, ids]
    ncc = len(ids)
    dbar = sub.nnz / ncc

    x = rng.standard_normal(ncc)
    x -= x.mean()
    x /= np.linalg.norm(x)
    lam_prev = np.inf
    lam = 0.0
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        y = sub @ x - (dbar / ncc) * x.sum()
        y -= y.mean()                      # deflate the all-ones direction
        lam = float(np.linalg.norm(y))
        if lam == 0.0:                     # landed in the kernel; restart
            x = rng.standard_normal(ncc)
            x -= x.mean()
            x /= np.linalg.norm(x)
            lam_prev = np.inf
            continue
        y /= lam
        if abs(lam - lam_prev) <= tol * max(lam, 1.0):
            x = y
            converged = True
            break
        x = y
        lam_prev = lam
    spins[ids] = np.where(x >= 0, 1, -1)
    return SpectralResult(spins=spins, converged=converged, iterations=it, eigenvalue=lam)
