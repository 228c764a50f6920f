"""Parameterization, validation, and sampling of labeled two-community block
models and the matching labeled Galton-Watson trees.

Conventions used throughout the package:

* community memberships ("spins") are +1 / -1;
* a vertex in community +1 shows label ``l`` with probability ``mu[l]``,
  a vertex in community -1 with probability ``nu[l]``;
* edge probabilities are ``d*a/n`` (both endpoints +), ``d*c/n`` (both -),
  and ``d*b/n`` (mixed), with the affinities balanced so both communities
  have mean degree ``d``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

BALANCE_TOL = 1e-9
PROB_TOL = 1e-12
DEFAULT_TREE_NODE_CAP = 100_000_000

SeedLike = "int | np.random.SeedSequence | np.random.Generator"


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Independent child seeds for parallel trials (splittable, order-stable)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(n)


# ---------------------------------------------------------------------------
# Label model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelModel:
    """A finite label alphabet with one label distribution per community.

    ``mu`` is the distribution for community +1, ``nu`` for community -1.
    Zero entries are allowed (labels that one community never shows).
    """

    labels: tuple[str, ...]
    mu: np.ndarray
    nu: np.ndarray

    def __init__(self, labels, mu, nu):
        object.__setattr__(self, "labels", tuple(str(x) for x in labels))
        object.__setattr__(self, "mu", np.asarray(mu, dtype=np.float64))
        object.__setattr__(self, "nu", np.asarray(nu, dtype=np.float64))
        self._validate()

    def _validate(self):
        if len(self.labels) == 0:
            raise ValueError("need at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label names must be unique")
        for name, p in (("mu", self.mu), ("nu", self.nu)):
            if p.shape != (len(self.labels),):
                raise ValueError(f"{name} must have one entry per label")
            if np.any(p < 0):
                raise ValueError(f"{name} entries must be nonnegative")
            if abs(p.sum() - 1.0) > PROB_TOL:
                raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @classmethod
    def noisy(cls, beta: float) -> "LabelModel":
        """Two labels mirroring the communities: a vertex shows its own
        community's label with probability ``beta``."""
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        return cls(("l1", "l2"), (beta, 1.0 - beta), (1.0 - beta, beta))

    @classmethod
    def revealed(cls, beta: float) -> "LabelModel":
        """A fraction ``beta`` of vertices shows a label identifying its
        community exactly; the rest show a shared uninformative label."""
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        return cls(("r1", "r2", "none"), (beta, 0.0, 1.0 - beta), (0.0, beta, 1.0 - beta))

    def to_json_dict(self) -> dict:
        return {"labels": list(self.labels), "mu": self.mu.tolist(), "nu": self.nu.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LabelModel":
        return cls(doc["labels"], doc["mu"], doc["nu"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LabelModel":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def dtv_labels(label_model: LabelModel) -> float:
    """Total variation distance between the two label distributions,
    0.5 * sum_l |mu(l) - nu(l)|; the best label-only success rate."""
    return 0.5 * float(np.abs(label_model.mu - label_model.nu).sum())


def parse_preset(text: str) -> LabelModel:
    """Parse 'noisy:BETA' or 'revealed:BETA' into a LabelModel."""
    kind, _, val = text.partition(":")
    if not val:
        raise ValueError(f"preset must look like 'noisy:0.85', got {text!r}")
    beta = float(val)
    if kind == "noisy":
        return LabelModel.noisy(beta)
    if kind == "revealed":
        return LabelModel.revealed(beta)
    raise ValueError(f"unknown preset kind {kind!r} (expected 'noisy' or 'revealed')")


# ---------------------------------------------------------------------------
# Graph parameters
# ---------------------------------------------------------------------------

def validate_balance(p: float, a: float, b: float, c: float, tol: float = BALANCE_TOL) -> bool:
    """True iff both mean-degree balance identities
    p*a + (1-p)*b = 1 and p*b + (1-p)*c = 1 hold within ``tol``."""
    return abs(p * a + (1 - p) * b - 1.0) <= tol and abs(p * b + (1 - p) * c - 1.0) <= tol


@dataclass(frozen=True)
class SbmParams:
    """Edge-affinity parameterization of the two-community model.

    ``p`` is the probability a vertex lands in community +1, ``a``/``b``/``c``
    the dimensionless affinities (within +, mixed, within -), ``d`` the mean
    degree, ``n`` the vertex count.
    """

    p: float
    a: float
    b: float
    c: float
    d: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must be in (0, 1)")
        if min(self.a, self.b, self.c) < 0:
            raise ValueError("affinities a, b, c must be nonnegative")
        if self.d <= 0:
            raise ValueError("mean degree d must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not validate_balance(self.p, self.a, self.b, self.c):
            raise ValueError(
                "affinities violate the equal-mean-degree balance: "
                f"p*a+(1-p)*b={self.p * self.a + (1 - self.p) * self.b!r}, "
                f"p*b+(1-p)*c={self.p * self.b + (1 - self.p) * self.c!r}"
            )
        if self.d * max(self.a, self.b, self.c) / self.n > 1.0:
            raise ValueError(
                f"edge probability d*max(a,b,c)/n = "
                f"{self.d * max(self.a, self.b, self.c) / self.n!r} exceeds 1; n too small"
            )

    def edge_probs(self) -> tuple[float, float, float]:
        """(within +, mixed, within -) edge probabilities."""
        return (self.d * self.a / self.n, self.d * self.b / self.n, self.d * self.c / self.n)

    def child_spin_kernel(self) -> np.ndarray:
        """2x2 Markov kernel K[i, j] = P(child spin j | parent spin i) for the
        local tree limit, rows indexed (+1, -1).  Each row sums to 1 exactly
        because of the degree balance."""
        return np.array([
            [self.p * self.a, (1 - self.p) * self.b],
            [self.p * self.b, (1 - self.p) * self.c],
        ])


def params_from_scaling(p: float, lam: float, epsilon: float, n: int) -> SbmParams:
    """Build balanced affinities from the signal-strength view
    a = 1 + eps*(1-p)/p, b = 1 - eps, c = 1 + eps*p/(1-p), d = lam/eps**2."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    a = 1.0 + epsilon * (1 - p) / p
    b = 1.0 - epsilon
    c = 1.0 + epsilon * p / (1 - p)
    d = lam / epsilon**2
    return SbmParams(p=p, a=a, b=b, c=c, d=d, n=n)


@dataclass(frozen=True)
class ScalingParams:
    """(p, lambda, epsilon) view of the parameters; lambda is the signal
    strength d*(1-b)^2 and epsilon the affinity contrast."""

    p: float
    lam: float
    epsilon: float

    def __post_init__(self):
        # constructing the derived affinities performs the range checks
        params_from_scaling(self.p, self.lam, self.epsilon, n=max(int(10 * self.d) + 1, 2))

    @property
    def d(self) -> float:
        return self.lam / self.epsilon**2

    def to_sbm(self, n: int) -> SbmParams:
        return params_from_scaling(self.p, self.lam, self.epsilon, n)


# ---------------------------------------------------------------------------
# Labeled graphs
# ---------------------------------------------------------------------------

@dataclass
class LabeledGraph:
    """Undirected simple graph with an observed label per vertex and, for
    synthetic data, the hidden ground-truth spin per vertex.

    ``edges`` is an (m, 2) array with u < v and unique rows.  ``labels`` holds
    label indices into some LabelModel.  ``spins`` is +-1 or None.
    """

    n: int
    edges: np.ndarray
    labels: np.ndarray
    spins: np.ndarray | None = None
    n_labels: int | None = None
    _csr_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.spins is not None:
            self.spins = np.asarray(self.spins, dtype=np.int64)
        e = self.edges
        if e.size:
            lo = np.minimum(e[:, 0], e[:, 1])
            hi = np.maximum(e[:, 0], e[:, 1])
            self.edges = e = np.stack([lo, hi], axis=1)
            order = np.lexsort((e[:, 1], e[:, 0]))
            self.edges = e = e[order]
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            if np.any((np.diff(e[:, 0]) == 0) & (np.diff(e[:, 1]) == 0)):
                raise ValueError("duplicate edges are not allowed")
        if self.labels.shape != (self.n,):
            raise ValueError("labels must have one entry per vertex")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("label indices must be nonnegative")
        if self.n_labels is None:
            self.n_labels = int(self.labels.max()) + 1 if self.labels.size else 1
        elif self.labels.size and self.labels.max() >= self.n_labels:
            raise ValueError("label index out of range")
        if self.spins is not None:
            if self.spins.shape != (self.n,):
                raise ValueError("spins must have one entry per vertex")
            if self.spins.size and not np.all(np.abs(self.spins) == 1):
                raise ValueError("spins must be +-1")

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.m:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, rev): each undirected edge {u, v} appears as u->v at
        index e and v->u at index e+m, so rev is an O(1) lookup."""
        m = self.m
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        rev = np.concatenate([np.arange(m, 2 * m), np.arange(0, m)])
        return src, dst, rev

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) compressed sparse adjacency, neighbors sorted."""
        if self._csr_cache is None:
            src, dst, _ = self.directed_edges()
            order = np.lexsort((dst, src))
            indices = dst[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.add.at(indptr, src + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._csr_cache = (indptr, indices)
        return self._csr_cache

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.csr()
        return indices[indptr[v]:indptr[v + 1]]

    def scipy_adjacency(self):
        from scipy.sparse import csr_matrix
        src, dst, _ = self.directed_edges()
        return csr_matrix((np.ones(len(src)), (src, dst)), shape=(self.n, self.n))

    def induced_subgraph(self, vertex_ids: np.ndarray) -> "LabeledGraph":
        """Subgraph on the given (sorted or unsorted) vertex set, vertices
        renumbered 0..k-1 in the given order."""
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        remap = -np.ones(self.n, dtype=np.int64)
        remap[vertex_ids] = np.arange(len(vertex_ids))
        keep = (remap[self.edges[:, 0]] >= 0) & (remap[self.edges[:, 1]] >= 0) if self.m else np.zeros(0, bool)
        sub_edges = remap[self.edges[keep]] if self.m else self.edges[:0]
        return LabeledGraph(
            n=len(vertex_ids),
            edges=sub_edges,
            labels=self.labels[vertex_ids],
            spins=None if self.spins is None else self.spins[vertex_ids],
            n_labels=self.n_labels,
        )


def _pick_distinct(rng: np.random.Generator, n_pairs: int, count: int) -> np.ndarray:
    """``count`` distinct uniform draws from range(n_pairs), vectorized."""
    if count > n_pairs:
        raise ValueError("cannot pick more distinct pairs than exist")
    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < count:
        need = count - len(chosen)
        cand = rng.integers(0, n_pairs, size=int(need * 1.1) + 16)
        chosen = np.union1d(chosen, cand)      # sorted unique
        if len(chosen) > count:
            # drop a random subset to keep exactly `count`, order-stable
            drop = rng.choice(len(chosen), size=len(chosen) - count, replace=False)
            chosen = np.delete(chosen, drop)
    return chosen


def _triangular_unrank(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map pair-rank idx in [0, k*(k-1)/2) to (row r, col c) with c < r."""
    r = np.floor((1.0 + np.sqrt(1.0 + 8.0 * idx.astype(np.float64))) / 2.0).astype(np.int64)
    # fix float rounding at the triangular boundaries
    r = np.where(r * (r - 1) // 2 > idx, r - 1, r)
    r = np.where((r + 1) * r // 2 <= idx, r + 1, r)
    c = idx - r * (r - 1) // 2
    return r, c


def sample_pairs_within(rng: np.random.Generator, ids: np.ndarray, q: float) -> np.ndarray:
    """Each unordered pair inside ``ids`` independently with probability q;
    returns an (k, 2) array.  O(expected edge count), not O(|ids|^2)."""
    k = len(ids)
    n_pairs = k * (k - 1) // 2
    if n_pairs == 0 or q <= 0:
        return np.empty((0, 2), dtype=np.int64)
    cnt = int(rng.binomial(n_pairs, min(q, 1.0)))
    idx = _pick_distinct(rng, n_pairs, cnt)
    r, c = _triangular_unrank(idx)
    return np.stack([ids[c], ids[r]], axis=1)


def sample_pairs_between(rng: np.random.Generator, ids_a: np.ndarray, ids_b: np.ndarray,
                         q: float) -> np.ndarray:
    """Each pair (a in ids_a, b in ids_b) independently with probability q."""
    n_pairs = len(ids_a) * len(ids_b)
    if n_pairs == 0 or q <= 0:
        return np.empty((0, 2), dtype=np.int64)
    cnt = int(rng.binomial(n_pairs, min(q, 1.0)))
    idx = _pick_distinct(rng, n_pairs, cnt)
    ra, rb = np.divmod(idx, len(ids_b))
    return np.stack([ids_a[ra], ids_b[rb]], axis=1)


def sample_labels(rng: np.random.Generator, probs: np.ndarray, size: int) -> np.ndarray:
    """Label indices by inverse CDF; zero-probability labels are never hit."""
    cum = np.cumsum(np.asarray(probs, dtype=np.float64))
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(size), side="right").astype(np.int64)


def sample_sbm(params: SbmParams, label_model: LabelModel, seed) -> LabeledGraph:
    """Sample a labeled two-community graph: i.i.d. spins with P(+1) = p,
    independent edges with the block probabilities, labels drawn from mu or
    nu by spin.  Deterministic given the seed."""
    rng = as_generator(seed)
    n = params.n
    spins = np.where(rng.random(n) < params.p, 1, -1).astype(np.int64)
    idx_p = np.where(spins == 1)[0]
    idx_m = np.where(spins == -1)[0]
    q_pp, q_pm, q_mm = params.edge_probs()
    parts = [
        sample_pairs_within(rng, idx_p, q_pp),
        sample_pairs_between(rng, idx_p, idx_m, q_pm),
        sample_pairs_within(rng, idx_m, q_mm),
    ]
    edges = np.concatenate(parts, axis=0) if parts else np.empty((0, 2), np.int64)
    labels = np.empty(n, dtype=np.int64)
    labels[idx_p] = sample_labels(rng, label_model.mu, len(idx_p))
    labels[idx_m] = sample_labels(rng, label_model.nu, len(idx_m))
    return LabeledGraph(n=n, edges=edges, labels=labels, spins=spins,
                        n_labels=label_model.n_labels)


# ---------------------------------------------------------------------------
# Galton-Watson trees
# ---------------------------------------------------------------------------

@dataclass
class GwTree:
    """Rooted labeled tree in breadth-first order: node 0 is the root,
    ``parent[i]`` is -1 for the root and otherwise an earlier index."""

    parent: np.ndarray
    depth: np.ndarray
    spin: np.ndarray
    label: np.ndarray
    root: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max()) if self.n_nodes else 0

    def to_graph(self, n_labels: int | None = None) -> LabeledGraph:
        edges = np.stack([self.parent[1:], np.arange(1, self.n_nodes)], axis=1)
        return LabeledGraph(n=self.n_nodes, edges=edges, labels=self.label,
                            spins=self.spin, n_labels=n_labels)


def sample_gw_tree(params: SbmParams, label_model: LabelModel, depth: int,
                   root_spin_mode: str = "prior", seed=None,
                   node_cap: int = DEFAULT_TREE_NODE_CAP) -> GwTree:
    """Sample the local tree limit of the block model: Poisson(d) offspring,
    child spins from the parent via the balanced 2x2 kernel, labels by spin.

    root_spin_mode is 'prior' (+1 with probability p), '+', or '-'.
    Refuses when the expected node count sum_k d^k exceeds ``node_cap``.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    expected = sum(params.d**k for k in range(depth + 1))
    if expected > node_cap:
        raise ValueError(
            f"expected node count {expected:.3g} exceeds the cap {node_cap:.3g}; "
            "refusing to sample (lower depth or raise node_cap)"
        )
    rng = as_generator(seed)
    if root_spin_mode == "prior":
        root_spin = 1 if rng.random() < params.p else -1
    elif root_spin_mode in ("+", "+1", "plus"):
        root_spin = 1
    elif root_spin_mode in ("-", "-1", "minus"):
        root_spin = -1
    else:
        raise ValueError(f"unknown root_spin_mode {root_spin_mode!r}")

    kernel = params.child_spin_kernel()     # rows: parent (+1, -1); cols: child (+1, -1)
    parents = [np.array([-1], dtype=np.int64)]
    depths = [np.zeros(1, dtype=np.int64)]
    spins = [np.array([root_spin], dtype=np.int64)]
    level_start = 0
    level_spins = spins[0]
    total = 1
    for k in range(1, depth + 1):
        counts = rng.poisson(params.d, size=len(level_spins))
        n_children = int(counts.sum())
        if n_children == 0:
            break
        total += n_children
        if total > 2 * node_cap:
            raise ValueError("sampled node count exceeded twice the cap; aborting")
        par = np.repeat(level_start + np.arange(len(level_spins)), counts)
        p_plus = np.where(np.repeat(level_spins, counts) == 1, kernel[0, 0], kernel[1, 0])
        child_spins = np.where(rng.random(n_children) < p_plus, 1, -1).astype(np.int64)
        parents.append(par)
        depths.append(np.full(n_children, k, dtype=np.int64))
        spins.append(child_spins)
        level_start += len(level_spins)
        level_spins = child_spins
    parent = np.concatenate(parents)
    dep = np.concatenate(depths)
    spin = np.concatenate(spins)
    label = np.empty(len(spin), dtype=np.int64)
    mask_p = spin == 1
    label[mask_p] = sample_labels(rng, label_model.mu, int(mask_p.sum()))
    label[~mask_p] = sample_labels(rng, label_model.nu, int((~mask_p).sum()))
    return GwTree(parent=parent, depth=dep, spin=spin, label=label)


# ---------------------------------------------------------------------------
# Plain-text graph files
# ---------------------------------------------------------------------------

def write_graph(path, graph: LabeledGraph):
    """Header 'n m L', then m edge lines 'u v', then n label-index lines,
    then (if present) n spin lines."""
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {graph.m} {graph.n_labels}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
        for l in graph.labels:
            fh.write(f"{l}\n")
        if graph.spins is not None:
            for s in graph.spins:
                fh.write(f"{s}\n")


def read_graph(path) -> LabeledGraph:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3:
        raise ValueError("graph file too short: missing 'n m L' header")
    n, m, n_labels = int(tokens[0]), int(tokens[1]), int(tokens[2])
    need = 3 + 2 * m + n
    if len(tokens) not in (need, need + n):
        raise ValueError(
            f"graph file has {len(tokens)} fields; expected {need} "
            f"(no spins) or {need + n} (with spins)"
        )
    body = np.array(tokens[3:], dtype=np.int64)
    edges = body[:2 * m].reshape(m, 2)
    labels = body[2 * m:2 * m + n]
    spins = body[2 * m + n:] if len(tokens) == need + n else None
    return LabeledGraph(n=n, edges=edges, labels=labels, spins=spins, n_labels=n_labels)
