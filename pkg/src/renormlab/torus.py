"""Hyperbolic maps of the two-torus: the linear model and its sheared family.

The base object is a MapSpec holding an integer unimodular matrix with trace
above two, together with a shear amplitude.  The sheared variant subtracts
(alpha / 2 pi) sin(2 pi x1) from both coordinates, which keeps the Jacobian
determinant exactly one when the second columns of the matrix agree.

Conventions used throughout the package:
  * points live in [0, 1)^2; lifts are plain real pairs;
  * batched operations take arrays of shape (..., 2);
  * contracting directions are normalized with positive first component.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConeDegeneracy, ContinuationFailure, NonConvergence

TWO_PI = 2.0 * math.pi

#: 2x2 real matrices are plain numpy arrays of shape (2, 2).
Mat2 = np.ndarray


def wrap(xy):
    """Reduce lifts to the fundamental domain [0, 1)^2.

    Floating modulo can round tiny negatives up to exactly 1.0; fold that
    back to 0 so downstream code may rely on the half-open range.
    """
    out = np.asarray(xy, dtype=float) % 1.0
    return np.where(out >= 1.0, 0.0, out)


@dataclass(frozen=True)
class TorusPoint:
    """A point of the two-torus, stored by its canonical representative."""

    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1) % 1.0)
        object.__setattr__(self, "x2", float(self.x2) % 1.0)

    @property
    def array(self):
        return np.array([self.x1, self.x2])

    @classmethod
    def from_array(cls, xy):
        xy = np.asarray(xy, dtype=float).reshape(2)
        return cls(xy[0], xy[1])


def as_xy(p):
    """Accept a TorusPoint or an array of shape (..., 2); return an array."""
    if isinstance(p, TorusPoint):
        return p.array
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    return arr


def torus_distance(p, q):
    """Max-norm distance on the torus, minimizing over deck translations."""
    d = np.abs(as_xy(p) - as_xy(q)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.max(d, axis=-1)


@dataclass(frozen=True)
class MapSpec:
    """An integer hyperbolic matrix plus a shear amplitude.

    variant "linear" requires alpha == 0; "standard_family" allows
    0 <= alpha < 1 and requires equal second-column entries so the shear
    preserves area.
    """

    linear: tuple
    alpha: float = 0.0
    variant: str = "linear"

    def __post_init__(self):
        A = np.asarray(self.linear, dtype=float)
        if A.shape != (2, 2):
            raise ValueError("linear part must be 2x2")
        if not np.allclose(A, np.round(A)):
            raise ValueError("linear part must have integer entries")
        A = np.round(A)
        if abs(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] - 1.0) > 1e-12:
            raise ValueError("linear part must have determinant one")
        if A[0, 0] + A[1, 1] <= 2.0:
            raise ValueError("linear part must have trace greater than two")
        object.__setattr__(
            self, "linear", tuple((int(A[i, 0]), int(A[i, 1])) for i in range(2))
        )
        alpha = float(self.alpha)
        if self.variant == "linear":
            if alpha != 0.0:
                raise ValueError("variant 'linear' requires alpha == 0")
        elif self.variant == "standard_family":
            if not 0.0 <= alpha < 1.0:
                raise ValueError("alpha must lie in [0, 1)")
            if self.linear[0][1] != self.linear[1][1]:
                raise ValueError(
                    "shear variant needs equal second-column entries to preserve area"
                )
        else:
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def standard_family(cls, alpha=0.0):
        """The canonical sheared cat-map family on A = ((2,1),(1,1))."""
        return cls(((2, 1), (1, 1)), float(alpha), "standard_family")

    @property
    def matrix(self):
        return np.array(self.linear, dtype=float)

    @property
    def matrix_inv(self):
        (a, b), (c, d) = self.linear
        return np.array([[d, -b], [-c, a]], dtype=float)

    def to_json(self):
        return json.dumps(
            {"A": [list(r) for r in self.linear], "alpha": self.alpha,
             "variant": self.variant},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text) if isinstance(text, str) else text
        return cls(
            linear=tuple(tuple(r) for r in raw["A"]),
            alpha=float(raw.get("alpha", 0.0)),
            variant=raw.get("variant", "linear"),
        )


# -- forward map, Jacobian, inverse ---------------------------------------

def apply_lift(spec, xy):
    """Forward map on lifts, arrays of shape (..., 2)."""
    xy = np.asarray(xy, dtype=float)
    A = spec.matrix
    out = xy @ A.T
    if spec.alpha:
        shear = (spec.alpha / TWO_PI) * np.sin(TWO_PI * xy[..., 0])
        out = out - shear[..., None]
    return out


def apply_map(spec, p, n=1):
    """n-fold forward map; returns the same kind of object it was given.

    Wraps after every step so n-fold images keep full precision (lifts of
    high powers reach magnitudes where the shear's sine loses digits).
    """
    xy = as_xy(p)
    for _ in range(n):
        xy = wrap(apply_lift(spec, xy))
    if isinstance(p, TorusPoint):
        return TorusPoint.from_array(xy)
    return xy


def jacobian(spec, p):
    """Derivative matrix at p; shape (..., 2, 2) for batched input."""
    xy = as_xy(p)
    A = spec.matrix
    out = np.broadcast_to(A, xy.shape[:-1] + (2, 2)).copy()
    if spec.alpha:
        c = spec.alpha * np.cos(TWO_PI * xy[..., 0])
        out[..., 0, 0] -= c
        out[..., 1, 0] -= c
    return out


def jacobian_inv(spec, p):
    """Inverse derivative at p, using that the determinant is one."""
    J = jacobian(spec, p)
    out = np.empty_like(J)
    out[..., 0, 0] = J[..., 1, 1]
    out[..., 0, 1] = -J[..., 0, 1]
    out[..., 1, 0] = -J[..., 1, 0]
    out[..., 1, 1] = J[..., 0, 0]
    return out


def invert_lift(spec, xy, tol=1e-12, max_iter=50):
    """Solve F(z) = xy on lifts by Newton from the linear inverse."""
    xy = np.asarray(xy, dtype=float)
    z = xy @ spec.matrix_inv.T
    if not spec.alpha:
        return z
    # fix the target lift so the Newton iterate never has to cross sheets
    target = xy + np.round(apply_lift(spec, z) - xy)
    for _ in range(max_iter):
        res = apply_lift(spec, z) - target
        if np.max(np.abs(res)) < tol:
            return z
        Jinv = jacobian_inv(spec, z)
        z = z - np.einsum("...ij,...j->...i", Jinv, res)
    raise NonConvergence("inverse map Newton did not reach tolerance")


def invert_map(spec, p, n=1, tol=1e-12, max_iter=50):
    """n-fold inverse map on the torus."""
    xy = as_xy(p)
    for _ in range(n):
        xy = invert_lift(spec, wrap(xy), tol=tol, max_iter=max_iter)
    xy = wrap(xy)
    if isinstance(p, TorusPoint):
        return TorusPoint.from_array(xy)
    return xy


# -- invariant directions ---------------------------------------------------

def linear_slopes(spec):
    """Contracting and expanding eigen-slopes of the linear part."""
    (a, b), (c, d) = spec.linear
    tr = a + d
    disc = math.sqrt(tr * tr - 4.0)
    lam_big = (tr + disc) / 2.0
    lam_small = (tr - disc) / 2.0
    if b != 0:
        s_stable = (lam_small - a) / b
        s_unstable = (lam_big - a) / b
    else:
        s_stable = c / (d - lam_small) if d != lam_small else 0.0
        s_unstable = c / (d - lam_big)
    return s_stable, s_unstable


def pullback_slope(spec, xy, s):
    """Slope at x of the preimage of a line of slope s at F(x).

    The direction (1, s) at F(x) is pulled back through DF(x)^{-1}; the
    result is reported as a slope again, which is safe away from vertical.
    """
    J = jacobian_inv(spec, xy)
    v1 = J[..., 0, 0] + J[..., 0, 1] * s
    v2 = J[..., 1, 0] + J[..., 1, 1] * s
    return v2 / v1


def pushforward_slope(spec, xy, s):
    """Slope at F(x) of the image of a line of slope s at x."""
    J = jacobian(spec, xy)
    v1 = J[..., 0, 0] + J[..., 0, 1] * s
    v2 = J[..., 1, 0] + J[..., 1, 1] * s
    return v2 / v1


def stable_slope(spec, p, depth=None, tol=1e-12, max_depth=60):
    """Slope of the contracting direction at p.

    Pulls a seed slope back along the forward orbit: the chain
    s_j = pullback_slope(F^j p, s_{j+1}) started from the linear contracting
    slope at depth k converges at rate (ratio of eigenvalues)^{-2k}.  With
    depth=None the depth is raised in steps of five until two successive
    results agree to tol.
    """
    xy = as_xy(p)
    s_seed = linear_slopes(spec)[0]
    if not spec.alpha:
        return np.broadcast_to(np.float64(s_seed), xy.shape[:-1]).copy()

    def run(k, orbit):
        s = np.full(xy.shape[:-1], s_seed)
        for j in range(k - 1, -1, -1):
            s = pullback_slope(spec, orbit[j], s)
        return s

    if depth is not None:
        orbit = [xy]
        for _ in range(depth - 1):
            orbit.append(apply_map(spec, orbit[-1]))
        return run(depth, orbit)

    orbit = [xy]
    prev = None
    for k in range(5, max_depth + 1, 5):
        while len(orbit) < k:
            orbit.append(apply_map(spec, orbit[-1]))
        cur = run(k, orbit)
        if prev is not None and np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise ConeDegeneracy("contracting slope did not settle within depth cap")


def stable_slope_gradient(spec, p, depth=48):
    """Contracting slope and its spatial gradient, shapes (...) and (..., 2).

    The pullback chain is differentiated in closed form.  Each step is a
    Moebius transform of the slope whose coefficients depend on position
    only through the shear term, so the gradient obeys a linear recursion:
    transport by DF^T, scale by the squared Moebius denominator, add the
    shear derivative.  Expansion by DF^T and contraction by the denominator
    leave a net factor near the eigenvalue ratio per step, so seeding the
    deep end with gradient zero costs O(ratio^depth).
    """
    xy = as_xy(p)
    shape = xy.shape[:-1]
    s_seed = linear_slopes(spec)[0]
    if not spec.alpha:
        return (np.broadcast_to(np.float64(s_seed), shape).copy(),
                np.zeros(shape + (2,)))
    flat = np.atleast_2d(xy).reshape(-1, 2)
    orbit = [flat]
    for _ in range(depth - 1):
        orbit.append(apply_map(spec, orbit[-1]))
    (a, b), (c21, d) = spec.linear
    s = np.full(flat.shape[0], s_seed)
    w = np.zeros((flat.shape[0], 2))
    for j in range(depth - 1, -1, -1):
        x1 = orbit[j][..., 0]
        shear = spec.alpha * np.cos(TWO_PI * x1)
        v1 = d - b * s
        DF = jacobian(spec, orbit[j])
        w = np.einsum("...ji,...j->...i", DF, w) / v1[..., None] ** 2
        w[..., 0] += ((1.0 - s) / v1) * (-TWO_PI * spec.alpha
                                         * np.sin(TWO_PI * x1))
        s = ((shear - c21) + (a - shear) * s) / v1
    return s.reshape(shape), w.reshape(shape + (2,))


def unstable_slope(spec, p, depth=None, tol=1e-12, max_depth=60):
    """Slope of the expanding direction at p, via pushforward along the
    backward orbit."""
    xy = as_xy(p)
    s_seed = linear_slopes(spec)[1]
    if not spec.alpha:
        return np.broadcast_to(np.float64(s_seed), xy.shape[:-1]).copy()

    def run(k, orbit):
        s = np.full(xy.shape[:-1], s_seed)
        for j in range(k - 1, -1, -1):
            s = pushforward_slope(spec, orbit[j], s)
        return s

    if depth is not None:
        orbit = [invert_map(spec, xy)]
        for _ in range(depth - 1):
            orbit.append(invert_map(spec, orbit[-1]))
        return run(depth, orbit)

    orbit = [invert_map(spec, xy)]
    prev = None
    for k in range(5, max_depth + 1, 5):
        while len(orbit) < k:
            orbit.append(invert_map(spec, orbit[-1]))
        cur = run(k, orbit)
        if prev is not None and np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise ConeDegeneracy("expanding slope did not settle within depth cap")


def _unit_from_slope(s):
    s = np.asarray(s, dtype=float)
    norm = np.sqrt(1.0 + s * s)
    return np.stack([1.0 / norm, s / norm], axis=-1)


def stable_direction(spec, p, depth=None, tol=1e-12):
    """Unit contracting direction, first component positive."""
    v = _unit_from_slope(stable_slope(spec, p, depth=depth, tol=tol))
    if isinstance(p, TorusPoint) or np.asarray(p).ndim == 1:
        return v.reshape(2)
    return v


def unstable_direction(spec, p, depth=None, tol=1e-12):
    """Unit expanding direction, first component positive."""
    v = _unit_from_slope(unstable_slope(spec, p, depth=depth, tol=tol))
    if isinstance(p, TorusPoint) or np.asarray(p).ndim == 1:
        return v.reshape(2)
    return v


class SlopeGrid:
    """Bilinear lookup table for the contracting slope on a uniform grid.

    Used by bulk jobs where millions of direction queries dominate; the
    table is exact for the pure linear map since the slope is constant.
    """

    def __init__(self, spec, size=512, tol=1e-12):
        self.spec = spec
        self.size = size
        u = np.arange(size) / size
        g1, g2 = np.meshgrid(u, u, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=-1)
        self.table = stable_slope(spec, pts, tol=tol).reshape(size, size)

    def __call__(self, xy):
        xy = np.asarray(xy, dtype=float) % 1.0
        f = xy * self.size
        i0 = np.floor(f[..., 0]).astype(int) % self.size
        j0 = np.floor(f[..., 1]).astype(int) % self.size
        t1 = f[..., 0] - np.floor(f[..., 0])
        t2 = f[..., 1] - np.floor(f[..., 1])
        i1 = (i0 + 1) % self.size
        j1 = (j0 + 1) % self.size
        T = self.table
        return ((1 - t1) * (1 - t2) * T[i0, j0] + t1 * (1 - t2) * T[i1, j0]
                + (1 - t1) * t2 * T[i0, j1] + t1 * t2 * T[i1, j1])


def cone_invariance_margin(spec, n_points=1000, half_width=None, seed=0):
    """Smallest slack of the invariant slope cones at random sample points.

    The expanding cone (slopes within half_width of the linear expanding
    slope) is pushed forward, the contracting cone pulled back; both images
    must land strictly inside the cone at the target point.  Returns the
    minimum distance from image slopes to the cone boundary; positive means
    both cones are strictly invariant on the sample.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n_points, 2))
    s_st, s_un = linear_slopes(spec)
    if half_width is None:
        half_width = 0.25 * (1.0 + abs(s_st))
    margins = []
    for edge in (-half_width, half_width):
        img = pushforward_slope(spec, pts, s_un + edge)
        margins.append(half_width - np.abs(img - s_un))
        img = pullback_slope(spec, pts, s_st + edge)
        margins.append(half_width - np.abs(img - s_st))
    return float(np.min(margins))


# -- periodic points ---------------------------------------------------------

@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit listed along itself.

    points: orbit points (x, F x, ..., F^{d-1} x); period: minimal period d;
    multiplier: product of Jacobians once around; lift_class: integer
    displacement of the lift after d steps.
    """

    points: tuple
    period: int
    multiplier: np.ndarray
    lift_class: tuple

    def point_array(self):
        return np.array([p.array for p in self.points])


def fixed_point_count(spec, n):
    """Number of solutions of F^n(x) = x; stable under the shear."""
    An = np.linalg.matrix_power(spec.matrix, n)
    return int(round(abs(np.linalg.det(An - np.eye(2)))))


def _ceil_div(a, b):
    """Exact ceil(a / b) for integer arrays, b > 0."""
    return -((-a) // b)


def _m2_bounds(p, q, m1, y_lo, y_hi):
    """Integer m2 range with y_lo <= p*m1 + q*m2 <= y_hi, elementwise in m1.

    Returns (lo, hi) arrays; empty rows have lo > hi.  q == 0 rows are
    unbounded where the condition holds (encoded with wide sentinels).
    """
    big = np.int64(1) << 56
    if q > 0:
        return _ceil_div(y_lo - p * m1, q), (y_hi - p * m1) // q
    if q < 0:
        return _ceil_div(y_hi - p * m1, q), (y_lo - p * m1) // q
    ok = (y_lo <= p * m1) & (p * m1 <= y_hi)
    lo = np.where(ok, -big, big)
    hi = np.where(ok, big, -big)
    return lo, hi


def _linear_fixed_points(A, n):
    """Fixed points of the n-th power of an integer matrix on the torus.

    Solves B x = m over x in [0,1)^2 in exact integer arithmetic: with
    y = adj(B) m and D = det B, membership is D > 0 ? 0 <= y < D :
    D < y <= 0, a pair of integer interval conditions per lattice column.
    The count always equals |det B|, so no deduplication is needed.
    """
    An = np.linalg.matrix_power(np.asarray(A, dtype=np.int64), n)
    B = An - np.eye(2, dtype=np.int64)
    D = int(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])
    adj = np.array([[B[1, 1], -B[0, 1]], [-B[1, 0], B[0, 0]]], dtype=np.int64)
    y_lo, y_hi = (0, D - 1) if D > 0 else (D + 1, 0)
    corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float) @ B.T.astype(float)
    m1 = np.arange(int(np.floor(corners[:, 0].min())) - 1,
                   int(np.ceil(corners[:, 0].max())) + 2, dtype=np.int64)
    lo1, hi1 = _m2_bounds(adj[0, 0], adj[0, 1], m1, y_lo, y_hi)
    lo2, hi2 = _m2_bounds(adj[1, 0], adj[1, 1], m1, y_lo, y_hi)
    lo = np.maximum(lo1, lo2)
    hi = np.minimum(hi1, hi2)
    counts = np.maximum(hi - lo + 1, 0)
    total = int(counts.sum())
    if total != abs(D):
        raise NonConvergence(
            f"lattice enumeration found {total} points, expected {abs(D)}"
        )
    rep_m1 = np.repeat(m1, counts)
    starts = np.cumsum(counts) - counts
    rep_m2 = np.repeat(lo, counts) + np.arange(total) - np.repeat(starts, counts)
    y1 = adj[0, 0] * rep_m1 + adj[0, 1] * rep_m2
    y2 = adj[1, 0] * rep_m1 + adj[1, 1] * rep_m2
    return np.column_stack([y1, y2]).astype(float) / D


def _cycles_under(spec, X):
    """Cycle index lists of the successor permutation of X under the map."""
    img = apply_map(spec, X)
    tree = cKDTree(X, boxsize=1.0)
    dist, succ = tree.query(img, k=1)
    if np.max(dist) > 1e-6:
        raise NonConvergence("point set is not closed under the map")
    N = len(X)
    seen = np.zeros(N, dtype=bool)
    cycles = []
    for i in range(N):
        if seen[i]:
            continue
        cyc = [i]
        seen[i] = True
        j = int(succ[i])
        while j != i:
            cyc.append(j)
            seen[j] = True
            j = int(succ[j])
        cycles.append(cyc)
    return cycles


def _continue_fixed_points(spec, n, X0, tol=1e-12):
    """Track fixed points of F^n from the linear map to the target shear.

    Solves the closing problem orbit by orbit with multiple shooting:
    unknowns are all points of a cycle, residuals F(z_i) - z_{i+1} are
    folded to [-1/2, 1/2), and the block-bidiagonal Newton system is
    solved whole.  Pivoted elimination keeps the conditioning per step
    instead of per period, which pointwise Newton on F^n cannot do once
    the expansion rate to the n-th power eats the basin.
    """
    cycles = _cycles_under(MapSpec(spec.linear), X0)
    groups = {}
    for cyc in cycles:
        groups.setdefault(len(cyc), []).append(cyc)
    groups = {d: np.asarray(idx, dtype=int) for d, idx in groups.items()}

    def newton_orbits(alpha, X, max_iter=25):
        sub = MapSpec(spec.linear, alpha, "standard_family")
        out = X.copy()
        eye = np.eye(2)
        for d, idx in groups.items():
            Z = X[idx]  # (n_orb, d, 2)
            n_orb = Z.shape[0]
            ok = False
            for _ in range(max_iter):
                FZ = wrap(apply_lift(sub, Z))
                R = FZ - np.roll(Z, -1, axis=1)
                R -= np.round(R)
                worst = np.max(np.abs(R))
                if not np.isfinite(worst) or worst > 0.35:
                    return None
                if worst < tol:
                    ok = True
                    break
                DF = jacobian(sub, Z)  # (n_orb, d, 2, 2)
                M = np.zeros((n_orb, 2 * d, 2 * d))
                for i in range(d):
                    r = slice(2 * i, 2 * i + 2)
                    c = slice(2 * ((i + 1) % d), 2 * ((i + 1) % d) + 2)
                    M[:, r, r] += DF[:, i]
                    M[:, r, c] -= eye
                dZ = np.linalg.solve(M, -R.reshape(n_orb, 2 * d, 1))
                Z = wrap(Z + dZ.reshape(n_orb, d, 2))
            if not ok:
                return None
            out[idx.reshape(-1)] = Z.reshape(-1, 2)
        return out

    alpha, X = 0.0, X0.copy()
    step = spec.alpha
    while alpha < spec.alpha - 1e-15:
        trial = min(alpha + step, spec.alpha)
        Xn = newton_orbits(trial, X)
        if Xn is None:
            step *= 0.5
            if step < 1e-5:
                raise ContinuationFailure(
                    f"periodic point continuation stalled at shear {alpha:g}"
                )
            continue
        alpha, X = trial, Xn
        step = min(step * 1.7, spec.alpha)
    # continuation must not merge branches
    tree = cKDTree(X, boxsize=1.0)
    if tree.query_pairs(1e-8, output_type="ndarray").shape[0] > 0:
        raise ContinuationFailure("continuation merged distinct periodic points")
    return X


def periodic_points(spec, n, tol=1e-12):
    """All orbits through solutions of F^n(x) = x, grouped by minimal period.

    Returns a list of PeriodicOrbit sorted by period and base point; the
    orbit lengths sum to the lattice count |det(A^n - 1)|.
    """
    X = _linear_fixed_points(spec.matrix, n)
    if spec.alpha:
        X = _continue_fixed_points(spec, n, X)
    N = len(X)
    # successor permutation: F maps the fixed set to itself
    img = apply_map(spec, X)
    tree = cKDTree(X, boxsize=1.0)
    dist, succ = tree.query(img, k=1)
    if np.max(dist) > 1e-6:
        raise NonConvergence("periodic set is not closed under the map")
    if len(np.unique(succ)) != N:
        raise NonConvergence("map is not a bijection on the periodic set")
    jacs = jacobian(spec, X)
    lifts = apply_lift(spec, X)
    seen = np.zeros(N, dtype=bool)
    orbits = []
    for i in range(N):
        if seen[i]:
            continue
        cycle = [i]
        seen[i] = True
        j = int(succ[i])
        while j != i:
            cycle.append(j)
            seen[j] = True
            j = int(succ[j])
        d = len(cycle)
        if n % d != 0:
            raise NonConvergence("orbit length does not divide the power")
        pts = X[cycle]
        mult = np.eye(2)
        for idx in cycle:
            mult = jacs[idx] @ mult
        # accumulate the deck translation picked up once around the loop;
        # deck shifts push through the remaining steps by the linear part
        A = spec.matrix
        shift = np.zeros(2)
        for idx in cycle:
            k = np.round(lifts[idx] - X[int(succ[idx])])
            shift = A @ shift + k
        shift = np.round(shift).astype(int)
        orbits.append(
            PeriodicOrbit(
                points=tuple(TorusPoint.from_array(p) for p in pts),
                period=d,
                multiplier=mult,
                lift_class=(int(shift[0]), int(shift[1])),
            )
        )
    orbits.sort(key=lambda o: (o.period, o.points[0].x1, o.points[0].x2))
    return orbits


def fixed_point_array(spec, n, tol=1e-12):
    """Flat (N, 2) array of every point fixed by F^n."""
    orbits = periodic_points(spec, n, tol=tol)
    return np.concatenate([o.point_array() for o in orbits], axis=0)


def topological_entropy(spec):
    """Log of the expanding eigenvalue of the linear part; shear-invariant."""
    (a, b), (c, d) = spec.linear
    tr = a + d
    return math.log((tr + math.sqrt(tr * tr - 4.0)) / 2.0)
