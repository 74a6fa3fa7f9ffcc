"""Exact 1-Wasserstein machinery on discrete measures.

Covers: the transportation distance itself (assignment / LP routes), its
quotient over coordinate-permutation groups, certified Lipschitz upper bounds
for small networks, the pairwise-interaction layer acting on measures, grid
discretization with hat-function weights, elementary symmetric polynomial
embeddings, and the randomized inequality-certification suites built on top.

All routines are pure and operate on immutable inputs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .errors import CapacityError, ContractError, DimensionError, DomainError, NumericError

WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-9

_ACT_LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "sigmoid": 0.25, "identity": 1.0}

_ACT_FN = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "identity": lambda x: x,
}


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,), nonnegative, sums to 1

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ContractError("measure needs at least one support point")
        if w.shape != (pts.shape[0],):
            raise ContractError("one weight per support point required")
        if not np.all(np.isfinite(pts)):
            raise NumericError("support points must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ContractError("weights must be nonnegative and sum to 1")
        pts.setflags(write=False)
        w.setflags(write=False)

    @classmethod
    def uniform(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = points.shape[0]
        return cls(points, np.full(m, 1.0 / m))

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def is_uniform(self):
        return bool(np.all(np.abs(self.weights - 1.0 / self.m) <= WEIGHT_TOL))

    def permute_coordinates(self, sigma):
        """Reorder coordinates: column k of the result is column sigma[k]."""
        if len(sigma) != self.dim:
            raise DimensionError("permutation length must equal the dimension")
        return DiscreteMeasure(self.points[:, list(sigma)], self.weights)


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray  # (m, m') nonnegative
    cost: float

    def marginal_residual(self, mu, nu):
        row = np.abs(self.coupling.sum(axis=1) - mu.weights).max()
        col = np.abs(self.coupling.sum(axis=0) - nu.weights).max()
        return max(row, col)

    def cost_residual(self, mu, nu):
        dist = _pairwise_distances(mu.points, nu.points)
        return abs(float((self.coupling * dist).sum()) - self.cost)


def _pairwise_distances(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Exact optimum of the transportation problem with Euclidean cost.

    Equal-size uniform inputs dispatch to the assignment solver, everything
    else goes through the LP. Returns (distance, TransportPlan).
    """
    if mu.dim != nu.dim:
        raise DimensionError(f"ambient dimensions differ: {mu.dim} vs {nu.dim}")
    dist = _pairwise_distances(mu.points, nu.points)
    if mu.m == nu.m and mu.is_uniform() and nu.is_uniform():
        rows, cols = linear_sum_assignment(dist)
        coupling = np.zeros_like(dist)
        coupling[rows, cols] = 1.0 / mu.m
        cost = float(dist[rows, cols].sum() / mu.m)
        return cost, TransportPlan(coupling, cost)
    return _wasserstein1_lp(mu, nu, dist)


def _wasserstein1_lp(mu, nu, dist=None):
    """Transportation LP on the complete bipartite graph (simplex route)."""
    if dist is None:
        dist = _pairwise_distances(mu.points, nu.points)
    m, k = dist.shape
    # marginal constraints; the final column constraint is redundant
    rows, cols, vals = [], [], []
    for i in range(m):
        rows.extend([i] * k)
        cols.extend(range(i * k, (i + 1) * k))
        vals.extend([1.0] * k)
    for j in range(k - 1):
        rows.extend([m + j] * m)
        cols.extend(range(j, m * k, k))
        vals.extend([1.0] * m)
    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(m + k - 1, m * k))
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(
        dist.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if not res.success:
        raise NumericError(f"transportation LP did not converge: {res.message}")
    coupling = res.x.reshape(m, k)
    cost = float((coupling * dist).sum())
    return cost, TransportPlan(coupling, cost)


def quotiented_wasserstein1(mu, nu, d_x, d_y, budget=5040):
    """Minimum of plain W1 over all coordinate permutations in the product group.

    The first d_x coordinates and the trailing d_y coordinates are permuted
    independently; the search is exhaustive. Returns (distance, best_sigma)
    where best_sigma = (sigma_x, sigma_y) are column-index maps applied to mu.
    """
    if d_x + d_y != mu.dim or mu.dim != nu.dim:
        raise DimensionError("d_x + d_y must equal the measures' dimension")
    required = math.factorial(d_x) * math.factorial(d_y)
    if required > budget:
        raise CapacityError(
            f"group enumeration needs budget {required}, got {budget}",
            required_budget=required,
        )
    best = (math.inf, None)
    for sx in itertools.permutations(range(d_x)):
        for sy in itertools.permutations(range(d_x, d_x + d_y)):
            sigma = sx + sy
            cost, _ = wasserstein1(mu.permute_coordinates(sigma), nu)
            if cost < best[0]:
                best = (cost, (sx, tuple(s - d_x for s in sy)))
    return best


# ---------------------------------------------------------------------------
# Lipschitz maps with certified constants
# ---------------------------------------------------------------------------


def spectral_norm(w, iters=200, tol=1e-10):
    """Largest singular value by power iteration on W^T W."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise DimensionError("spectral norm expects a matrix")
    n = w.shape[1]
    v = np.ones(n) + 1e-3 * np.arange(n)  # deterministic, not axis-aligned
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = w @ v
        nv = w.T @ u
        norm = np.linalg.norm(nv)
        if norm == 0.0:
            return 0.0
        v = nv / norm
        new_sigma = float(np.linalg.norm(w @ v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    if not math.isfinite(sigma):
        raise NumericError("power iteration diverged")
    return sigma


@dataclass(frozen=True)
class TransformSpec:
    """A Lipschitz map with a computable Lipschitz upper bound.

    kinds:
      affine:         x -> W x + c                  (bound: ||W||_2)
      coordinatewise: x[k] -> a * g(x[k]) + c       (bound: |a| * Lip(g))
      mlp:            affine/activation stack        (bound: layer product)

    Coordinate-wise maps apply the same scalar function to every coordinate,
    hence commute with all coordinate permutations (equivariant).
    """

    kind: str
    matrix: np.ndarray = None
    offset: float | np.ndarray = 0.0
    scale: float = 1.0
    inner: str = "identity"  # scalar g for coordinatewise maps
    layers: tuple = ()  # ((W, b, activation), ...) for mlp

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "affine":
            return x @ np.asarray(self.matrix).T + self.offset
        if self.kind == "coordinatewise":
            return self.scale * _ACT_FN[self.inner](x) + self.offset
        if self.kind == "mlp":
            h = x
            for w, b, act in self.layers:
                h = _ACT_FN[act](h @ np.asarray(w).T + np.asarray(b))
            return h
        raise ContractError(f"unknown transform kind {self.kind!r}")

    def lipschitz_upper_bound(self):
        if self.kind == "affine":
            return spectral_norm(self.matrix)
        if self.kind == "coordinatewise":
            return abs(self.scale) * _ACT_LIPSCHITZ[self.inner]
        if self.kind == "mlp":
            bound = 1.0
            for w, _, act in self.layers:
                bound *= spectral_norm(w) * _ACT_LIPSCHITZ[act]
            return bound
        raise ContractError(f"unknown transform kind {self.kind!r}")

    def is_equivariant(self):
        return self.kind == "coordinatewise"


@dataclass(frozen=True)
class PairInteraction:
    """Permutation-invariant pairwise functional on R^d x R^d.

    phi(z, z') = v( sum_k u(z[k], z'[k]) ), with u an MLP on R^2 and v an MLP;
    summing over coordinates jointly makes phi invariant under any common
    coordinate permutation of (z, z'), hence under every product subgroup.
    """

    u_layers: tuple  # ((W, b, act), ...), first W has 2 columns
    v_layers: tuple

    @property
    def out_dim(self):
        return self.v_layers[-1][0].shape[0]

    def pairwise(self, x, y=None):
        """phi evaluated on all pairs: returns (m, m', r)."""
        y = x if y is None else y
        m, d = x.shape
        mp = y.shape[0]
        a = np.repeat(x, mp, axis=0).reshape(-1)  # (m*m'*d,) z coords, k fastest
        b = np.tile(y, (m, 1)).reshape(-1)
        h = np.stack([a, b], axis=1)
        for w, bb, act in self.u_layers:
            h = _ACT_FN[act](h @ w.T + bb)
        e = h.reshape(m * mp, d, -1).sum(axis=1)
        for w, bb, act in self.v_layers:
            e = _ACT_FN[act](e @ w.T + bb)
        return e.reshape(m, mp, -1)

    def lipschitz_upper_bound(self, dim):
        """Certified bound on Lip(phi(z, .)) and Lip(phi(., z)) over R^dim.

        Per argument, the first u layer only sees one of the two stacked
        inputs, so its contribution is the spectral norm of that column; the
        coordinate sum contributes sqrt(dim) (tight when Jacobian columns
        align); the remaining layers contribute their spectral norms, all
        multiplied by activation constants.
        """
        w0, _, act0 = self.u_layers[0]
        col = _ACT_LIPSCHITZ[act0] * max(
            spectral_norm(w0[:, :1]), spectral_norm(w0[:, 1:])
        )
        rest = 1.0
        for w, _, act in self.u_layers[1:]:
            rest *= spectral_norm(w) * _ACT_LIPSCHITZ[act]
        v = 1.0
        for w, _, act in self.v_layers:
            v *= spectral_norm(w) * _ACT_LIPSCHITZ[act]
        return col * rest * math.sqrt(dim) * v


def lipschitz_upper_bound(net, input_dim=None):
    """Certified Lipschitz upper bound of a transform or pairwise functional.

    Pairwise functionals need `input_dim` (their constant grows with the
    coordinate count); plain transforms ignore it.
    """
    if isinstance(net, PairInteraction):
        if input_dim is None:
            raise ContractError("pairwise functionals need input_dim for their bound")
        return net.lipschitz_upper_bound(input_dim)
    return net.lipschitz_upper_bound()


def random_pair_interaction(rng, t=3, r=2, activation="tanh", scale=1.0):
    wu = rng.normal(scale=scale, size=(t, 2))
    bu = rng.normal(scale=scale, size=t)
    wv = rng.normal(scale=scale, size=(r, t))
    bv = rng.normal(scale=scale, size=r)
    return PairInteraction(
        u_layers=((wu, bu, activation),),
        v_layers=((wv, bv, activation),),
    )


def invariant_layer_measure(phi: PairInteraction, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Push a measure through the pairwise layer: y_i = sum_j w_j phi(x_i, x_j)."""
    p = phi.pairwise(mu.points)
    y = np.einsum("j,ijr->ir", mu.weights, p)
    return DiscreteMeasure(y, mu.weights)


def pushforward(transform: TransformSpec, mu: DiscreteMeasure) -> DiscreteMeasure:
    return DiscreteMeasure(transform.apply(mu.points), mu.weights)


# ---------------------------------------------------------------------------
# Randomized certification suites
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    suite: str
    records: list = field(default_factory=list)

    def add(self, trial_id, lhs, rhs, tol, **extra):
        violated = bool(lhs > rhs + tol)
        rec = {
            "trial_id": trial_id,
            "lhs": float(lhs),
            "rhs": float(rhs),
            "ratio": float(lhs / rhs) if rhs > 0 else (0.0 if lhs <= 0 else math.inf),
            "violated": violated,
        }
        rec.update(extra)
        self.records.append(rec)

    @property
    def n_violations(self):
        return sum(r["violated"] for r in self.records)

    @property
    def passed(self):
        return self.n_violations == 0

    @property
    def max_ratio(self):
        return max((r["ratio"] for r in self.records), default=0.0)

    def write_jsonl(self, fh):
        for rec in self.records:
            fh.write(json.dumps(rec) + "\n")


def verify_layer_lipschitz(phi, measure_pairs, d_x, d_y, tol=1e-8, budget=5040):
    """Check W1q(f_phi(mu), f_phi(nu)) <= 2 r C_phi W1q(mu, nu) on every pair."""
    report = VerificationReport(suite="prop1")
    for trial, (mu, nu) in enumerate(measure_pairs):
        c_phi = phi.lipschitz_upper_bound(mu.dim)
        r = phi.out_dim
        w_in, _ = quotiented_wasserstein1(mu, nu, d_x, d_y, budget=budget)
        fa = invariant_layer_measure(phi, mu)
        fb = invariant_layer_measure(phi, nu)
        w_out, _ = quotiented_wasserstein1(fa, fb, r, 0, budget=budget)
        report.add(trial, w_out, 2.0 * r * c_phi * w_in, tol, c_phi=float(c_phi))
    return report


def verify_transform_stability(trials, tol=1e-8, budget=5040):
    """Check both perturbation inequalities for (tau, xi, phi) triples.

    `trials` yields records (tau, xi, phi, mu, nu, d_x, d_y); nu may be None
    to check only the drift inequality. The composed-Lipschitz inequality
    requires tau to be equivariant and is skipped (recorded) otherwise.
    """
    report = VerificationReport(suite="prop2")
    for trial, (tau, xi, phi, mu, nu, d_x, d_y) in enumerate(trials):
        c_phi = phi.lipschitz_upper_bound(mu.dim)
        r = phi.out_dim
        f_mu = invariant_layer_measure(phi, mu)
        f_tau_mu = invariant_layer_measure(phi, pushforward(tau, mu))
        xi_f_tau_mu = pushforward(xi, f_tau_mu)

        # drift: how far xi o f_phi o tau moves a single measure
        lhs_a, _ = quotiented_wasserstein1(xi_f_tau_mu, f_mu, r, 0, budget=budget)
        xi_gap = np.linalg.norm(xi.apply(f_tau_mu.points) - f_tau_mu.points, axis=1).max()
        tau_gap = np.linalg.norm(tau.apply(mu.points) - mu.points, axis=1).max()
        rhs_a = xi_gap + 2.0 * r * c_phi * tau_gap
        report.add(trial, lhs_a, rhs_a, tol, inequality="drift")

        if nu is None:
            continue
        if not tau.is_equivariant():
            continue
        f_tau_nu = invariant_layer_measure(phi, pushforward(tau, nu))
        xi_f_tau_nu = pushforward(xi, f_tau_nu)
        lhs_b, _ = quotiented_wasserstein1(xi_f_tau_mu, xi_f_tau_nu, r, 0, budget=budget)
        w_in, _ = quotiented_wasserstein1(mu, nu, d_x, d_y, budget=budget)
        rhs_b = (
            2.0 * r * c_phi * tau.lipschitz_upper_bound() * xi.lipschitz_upper_bound() * w_in
        )
        report.add(trial, lhs_b, rhs_b, tol, inequality="composed")
    return report


# ---------------------------------------------------------------------------
# Universality ingredients: symmetric polynomials, grids, Hölder estimates
# ---------------------------------------------------------------------------


def elementary_symmetric_embed(points, normalized=True):
    """Map each row to its d elementary symmetric polynomials.

    Rows are sorted before the Vieta recurrence so the evaluation order, and
    hence the float result, is identical for any coordinate permutation.
    Coordinate i (1-based) is divided by C(d, i) when `normalized`, keeping
    [0,1]^d inside [0,1]^d.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m, d = pts.shape
    if d > 12:
        raise CapacityError(f"symmetric embedding limited to d <= 12, got {d}")
    out = np.zeros((m, d))
    for row in range(m):
        x = np.sort(pts[row])
        e = np.zeros(d + 1)
        e[0] = 1.0
        for j in range(d):
            for i in range(j + 1, 0, -1):
                e[i] += x[j] * e[i - 1]
        out[row] = e[1:]
    if normalized:
        out /= np.array([math.comb(d, i) for i in range(1, d + 1)], dtype=np.float64)
    return out


@dataclass(frozen=True)
class GridDiscretization:
    """Hat-function discretization of a measure on a regular grid in [0,1]^d.

    Nodes sit at multiples of h = 1/cells_per_axis; the partition cell of a
    node is its Voronoi box clipped to the unit cube, and delta_max is the
    largest node-to-cell-corner distance.
    """

    cells_per_axis: int
    dim: int
    centers: np.ndarray  # (N, d) grid nodes
    weights: np.ndarray  # (N,)
    deltas: np.ndarray  # (N,)

    @property
    def delta_max(self):
        return float(self.deltas.max())

    def support_measure(self):
        keep = self.weights > 0
        return DiscreteMeasure(self.centers[keep], self.weights[keep] / self.weights[keep].sum())


def grid_discretize(mu: DiscreteMeasure, cells_per_axis: int) -> GridDiscretization:
    if cells_per_axis < 1:
        raise DomainError("cells_per_axis must be >= 1")
    if np.any(mu.points < 0) or np.any(mu.points > 1):
        raise DomainError("measure support must lie in the unit cube")
    d = mu.dim
    nodes_per_axis = cells_per_axis + 1
    total = nodes_per_axis**d
    if total > 10**6:
        raise CapacityError(f"grid would need {total} nodes (cap 1e6)")
    h = 1.0 / cells_per_axis

    weights = np.zeros(total)
    t = mu.points * cells_per_axis
    base = np.minimum(np.floor(t).astype(np.intp), cells_per_axis - 1)
    frac = t - base
    for corner in itertools.product((0, 1), repeat=d):
        corner = np.asarray(corner, dtype=np.intp)
        w = mu.weights * np.prod(
            np.where(corner[None, :] == 1, frac, 1.0 - frac), axis=1
        )
        nodes = base + corner[None, :]
        flat = np.ravel_multi_index(nodes.T, (nodes_per_axis,) * d)
        np.add.at(weights, flat, w)

    axes = np.linspace(0.0, 1.0, nodes_per_axis)
    mesh = np.meshgrid(*([axes] * d), indexing="ij")
    centers = np.stack([m.reshape(-1) for m in mesh], axis=1)
    lo = np.maximum(centers - h / 2, 0.0)
    hi = np.minimum(centers + h / 2, 1.0)
    deltas = np.sqrt((np.maximum(centers - lo, hi - centers) ** 2).sum(axis=1))
    return GridDiscretization(cells_per_axis, d, centers, weights, deltas)


def holder_estimate(f, sample_pairs, p):
    """Empirical 1/p-Hölder constant max ||f(x)-f(y)|| / ||x-y||^{1/p}."""
    if p < 1:
        raise DomainError("p must be >= 1")
    apply = f.apply if hasattr(f, "apply") else f
    best = 0.0
    for x, y in sample_pairs:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gap = np.linalg.norm(x - y)
        if gap == 0.0:
            continue
        fx = np.atleast_1d(np.asarray(apply(x), dtype=np.float64))
        fy = np.atleast_1d(np.asarray(apply(y), dtype=np.float64))
        best = max(best, float(np.linalg.norm(fx - fy) / gap ** (1.0 / p)))
    return best
