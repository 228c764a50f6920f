"""Large-degree limit theory: the one-dimensional map G whose iterates track
the effective signal strength of belief propagation, its fixed points and
their stability, and the success probabilities those signal levels predict.

The map is

    G(alpha) = (lam / p^2) * E[ 1 / (1 - p + p * exp(U - alpha/2 + sqrt(alpha) Z)) - 1 ]

with Z standard normal and U the label log-ratio log(mu(l)/nu(l)) drawn with
probability nu(l).  G is nondecreasing, continuous, and bounded by
lam / (p (1 - p)), so the recursion alpha_{t} = G(alpha_{t-1}) converges
monotonically from any starting point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .model import LabelModel

DEFAULT_QUAD_NODES = 201
DEFAULT_QUAD_HALFWIDTH = 8.0


def q_function(x):
    """Upper-tail probability of the standard normal, via erfc."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


@lru_cache(maxsize=16)
def _gauss_rule(nodes: int, halfwidth: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [-halfwidth, halfwidth] with standard-normal
    weights, renormalized to total mass 1 (the truncated tail is ~1e-15)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    z = x * halfwidth
    wz = w * halfwidth * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    wz /= wz.sum()
    z.setflags(write=False)
    wz.setflags(write=False)
    return z, wz


@dataclass(frozen=True)
class DensityParams:
    """Signal strength lam, community-size parameter p, label model, and the
    quadrature resolution used for the Gaussian expectation inside G."""

    lam: float
    p: float
    label_model: LabelModel
    quad_nodes: int = DEFAULT_QUAD_NODES
    quad_halfwidth: float = DEFAULT_QUAD_HALFWIDTH

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must be in (0, 1)")
        if self.quad_nodes < 11:
            raise ValueError("need at least 11 quadrature nodes")

    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        return _gauss_rule(self.quad_nodes, self.quad_halfwidth)

    def finite_h(self) -> np.ndarray:
        """Label log-ratios over labels where both communities have mass."""
        mu, nu = self.label_model.mu, self.label_model.nu
        both = (mu > 0) & (nu > 0)
        return np.log(mu[both] / nu[both])


def big_g(alpha: float, dp: DensityParams) -> float:
    """One step of the signal map; see the module docstring.

    Labels with nu(l) = 0 carry no weight in the expectation; labels with
    mu(l) = 0 contribute the constant 1/(1-p) - 1.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    z, wz = dp.rule()
    p = dp.p
    mu, nu = dp.label_model.mu, dp.label_model.nu
    total = 0.0
    for l in range(dp.label_model.n_labels):
        if nu[l] == 0.0:
            continue
        if mu[l] == 0.0:
            total += nu[l] * (1.0 / (1.0 - p) - 1.0)
            continue
        expo = np.log(mu[l] / nu[l]) + np.sqrt(alpha) * z - alpha / 2.0
        with np.errstate(over="ignore"):
            denom = 1.0 - p + p * np.exp(expo)
        total += nu[l] * float(np.sum(wz * (1.0 / denom - 1.0)))
    return dp.lam / p**2 * total


def alpha1_closed_form(dp: DensityParams) -> float:
    """Closed form of G(0): lam * sum_l (mu(l)-nu(l))^2 / (p mu(l)+(1-p) nu(l))."""
    mu, nu = dp.label_model.mu, dp.label_model.nu
    seen = (mu + nu) > 0
    den = dp.p * mu[seen] + (1 - dp.p) * nu[seen]
    return dp.lam * float(np.sum((mu[seen] - nu[seen]) ** 2 / den))


def tilde_alpha1(lam: float, p: float) -> float:
    """Signal level when the recursion starts from the true spins instead of
    the labels: lam / (p (1 - p)).  Also an upper bound for G."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    return lam / (p * (1.0 - p))


@dataclass
class EvolutionTrace:
    """Iterates alpha_0, alpha_1, ... of the signal map, with the reached
    limit and whether the tolerance was met within max_steps."""

    alpha: np.ndarray
    converged: bool
    limit: float

    def __len__(self) -> int:
        return len(self.alpha)


def evolve(alpha0: float, dp: DensityParams, max_steps: int = 10_000,
           tol: float = 1e-10) -> EvolutionTrace:
    """Iterate alpha <- G(alpha) from alpha0 until successive iterates differ
    by at most tol.  Aborts if an iterate escapes the theoretical bound on G
    by a wide margin, which would indicate a quadrature failure."""
    if alpha0 < 0:
        raise ValueError("alpha0 must be >= 0")
    habs = np.abs(dp.finite_h())
    guard = 10.0 * (tilde_alpha1(dp.lam, dp.p) + (habs.max() ** 2 if habs.size else 0.0))
    trace = [float(alpha0)]
    converged = False
    for _ in range(max_steps):
        nxt = big_g(trace[-1], dp)
        if nxt > guard:
            raise RuntimeError(
                f"iterate {nxt!r} exceeded the divergence guard {guard!r}; "
                "G is bounded, so this indicates a quadrature failure"
            )
        trace.append(nxt)
        if abs(trace[-1] - trace[-2]) <= tol:
            converged = True
            break
    return EvolutionTrace(alpha=np.array(trace), converged=converged, limit=trace[-1])


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------

STABILITY_MARGIN = 0.02


@dataclass(frozen=True)
class FixedPoint:
    alpha: float
    stability: str          # 'stable' | 'unstable' | 'marginal'
    derivative: float


@dataclass
class FixedPointReport:
    points: list[FixedPoint]
    grid_resolution: float
    bisection_tolerance: float

    @property
    def alphas(self) -> np.ndarray:
        return np.array([fp.alpha for fp in self.points])


def _derivative(dp: DensityParams, alpha: float, step: float = 1e-5) -> float:
    if alpha >= step:
        return (big_g(alpha + step, dp) - big_g(alpha - step, dp)) / (2 * step)
    return (big_g(alpha + step, dp) - big_g(alpha, dp)) / step


def _classify(gp: float) -> str:
    if abs(gp) < 1.0 - STABILITY_MARGIN:
        return "stable"
    if abs(gp) > 1.0 + STABILITY_MARGIN:
        return "unstable"
    return "marginal"


def find_fixed_points(dp: DensityParams, alpha_max: float | None = None,
                      grid_step: float | None = None,
                      bisect_tol: float = 1e-10) -> FixedPointReport:
    """Locate every solution of G(alpha) = alpha on [0, alpha_max].

    Scans the grid for sign changes of G(alpha) - alpha and refines each by
    bisection.  alpha = 0 is reported as a fixed point iff |G(0)| <= the
    bisection tolerance (it is one exactly when the two label distributions
    coincide).  Stability is classified from a finite-difference derivative
    with a +-0.02 margin flagged 'marginal'.
    """
    if alpha_max is None:
        alpha_max = 2.0 * tilde_alpha1(dp.lam, dp.p)
    if grid_step is None:
        grid_step = 1e-3 * alpha_max
    n_steps = max(2, int(round(alpha_max / grid_step)))
    grid = np.linspace(0.0, alpha_max, n_steps + 1)
    gvals = np.array([big_g(al, dp) for al in grid])
    diff = gvals - grid

    roots: list[float] = []
    if abs(gvals[0]) <= bisect_tol:
        roots.append(0.0)
    for i in range(1, n_steps):
        d0, d1 = diff[i], diff[i + 1]
        if d0 == 0.0:
            roots.append(float(grid[i]))
        elif d0 * d1 < 0.0:
            lo, hi, dlo = float(grid[i]), float(grid[i + 1]), d0
            while hi - lo > bisect_tol:
                mid = 0.5 * (lo + hi)
                dm = big_g(mid, dp) - mid
                if dm == 0.0:
                    lo = hi = mid
                elif (dm < 0.0) == (dlo < 0.0):
                    lo, dlo = mid, dm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    if diff[n_steps] == 0.0:
        roots.append(float(grid[n_steps]))

    # dedupe refined roots that landed on the same point from adjacent cells
    roots.sort()
    unique: list[float] = []
    for r in roots:
        if not unique or r - unique[-1] > max(10 * bisect_tol, 1e-12):
            unique.append(r)

    points = [FixedPoint(alpha=r, derivative=(gp := _derivative(dp, r)),
                         stability=_classify(gp)) for r in unique]
    return FixedPointReport(points=points, grid_resolution=float(grid_step),
                            bisection_tolerance=bisect_tol)


# ---------------------------------------------------------------------------
# Predicted success
# ---------------------------------------------------------------------------

def predicted_success(alpha: float, dp: DensityParams,
                      include_prior_bias: bool = True) -> float:
    """Predicted two-sided classification success at signal level alpha.

    With wp = log(p/(1-p)) if include_prior_bias else 0, this is

        E[Q((-U_plus - wp - alpha/2) / sqrt(alpha))]
        + E[Q((U_minus + wp - alpha/2) / sqrt(alpha))] - 1,

    where U_plus takes value log(mu(l)/nu(l)) with probability mu(l) and
    U_minus the same value with probability nu(l).  At alpha = 0 the Gaussian
    collapses and the expression reduces to indicator form.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    mu, nu = dp.label_model.mu, dp.label_model.nu
    wp = float(np.log(dp.p / (1 - dp.p))) if include_prior_bias else 0.0
    with np.errstate(divide="ignore"):
        h = np.log(mu) - np.log(nu)          # +-inf where one side vanishes
    total = 0.0
    if alpha == 0.0:
        for l in range(dp.label_model.n_labels):
            if mu[l] == 0.0 and nu[l] == 0.0:
                continue
            stat = h[l] + wp
            if stat > 0:
                total += mu[l]
            elif stat < 0:
                total += nu[l]
            else:
                total += 0.5 * (mu[l] + nu[l])
        return total - 1.0
    sq = np.sqrt(alpha)
    for l in range(dp.label_model.n_labels):
        if mu[l] > 0.0:
            # a label the minus community never shows identifies plus surely
            arg = -np.inf if nu[l] == 0.0 else (-h[l] - wp - alpha / 2.0) / sq
            total += mu[l] * float(q_function(arg))
        if nu[l] > 0.0:
            arg = -np.inf if mu[l] == 0.0 else (h[l] + wp - alpha / 2.0) / sq
            total += nu[l] * float(q_function(arg))
    return total - 1.0


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """Sweep one of 'p', 'lambda', 'beta' while holding the rest fixed.
    For a beta sweep the label model is regenerated per cell from
    ``preset_kind`` ('noisy' or 'revealed')."""

    var: str
    values: tuple[float, ...]
    p: float = 0.5
    lam: float = 0.8
    label_model: LabelModel | None = None
    preset_kind: str = "noisy"
    beta: float | None = None
    include_prior_bias: bool = True
    quad_nodes: int = DEFAULT_QUAD_NODES

    def cell_params(self, value: float) -> DensityParams:
        if self.var == "p":
            p, lam, lm = value, self.lam, self._base_model()
        elif self.var == "lambda":
            p, lam, lm = self.p, value, self._base_model()
        elif self.var == "beta":
            maker = LabelModel.noisy if self.preset_kind == "noisy" else LabelModel.revealed
            p, lam, lm = self.p, self.lam, maker(value)
        else:
            raise ValueError(f"unknown sweep variable {self.var!r}")
        return DensityParams(lam=lam, p=p, label_model=lm, quad_nodes=self.quad_nodes)

    def _base_model(self) -> LabelModel:
        if self.label_model is not None:
            return self.label_model
        if self.beta is not None:
            maker = LabelModel.noisy if self.preset_kind == "noisy" else LabelModel.revealed
            return maker(self.beta)
        raise ValueError("sweep needs a label_model or a beta")


def predict_bp_curve(spec: SweepSpec) -> list[dict]:
    """For each cell: the limit reached from 0 (what label-initialized
    propagation attains), the limit reached from tilde_alpha1 (true-spin
    initialization), their predicted successes, and the fixed-point count."""
    rows = []
    for value in spec.values:
        dp = spec.cell_params(value)
        bp_trace = evolve(0.0, dp)
        opt_trace = evolve(tilde_alpha1(dp.lam, dp.p), dp)
        report = find_fixed_points(dp)
        rows.append({
            spec.var: float(value),
            "alpha_bp": bp_trace.limit,
            "alpha_opt": opt_trace.limit,
            "success_bp": predicted_success(bp_trace.limit, dp, spec.include_prior_bias),
            "success_opt": predicted_success(opt_trace.limit, dp, spec.include_prior_bias),
            "n_fixed_points": len(report.points),
        })
    return rows
