"""Admissible curve segments and weighted line integrals.

A leaf is a short curve whose tangent stays in the contracting-slope
bracket; functions on the extended space are integrated along it against
a test profile, weighted by the curve speed.  A finite family of such
integrals, maximized over a dictionary of endpoint-vanishing test
profiles, gives a computable surrogate for the anisotropic seminorm, and
the windowed flow functional is bounded against it with an empirically
calibrated constant.
"""

import numpy as np

from ..errors import LeafInvalid
from ..flow import flow_path
from ..functionals import mollified_functional
from ..numerics import gauss_nodes
from ..torus import as_xy, wrap


def _quad_nodes(panels, deg):
    gx, gw = gauss_nodes(deg)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    return nodes, wts


class AdmissibleLeaf:
    """Curve on the torus with contracting tangent and bounded length.

    curve maps the parameter interval [0, 1] to the (unwrapped) plane and
    velocity is its derivative; both must be vectorized.  Validation
    samples the tangent slope against the bracket and integrates the
    speed for the length constraint; violations raise LeafInvalid.
    """

    def __init__(self, curve, velocity, bracket, delta=0.5, panels=16,
                 deg=10, n_check=129):
        self.curve = curve
        self.velocity = velocity
        self.bracket = (float(bracket[0]), float(bracket[1]))
        self.delta = float(delta)
        self._nodes, self._wts = _quad_nodes(panels, deg)
        taus = np.linspace(0.0, 1.0, n_check)
        vel = np.asarray(velocity(taus), dtype=float)
        if np.any(np.abs(vel[..., 0]) < 1e-14):
            raise LeafInvalid("tangent leaves the slope chart")
        if np.any(vel[..., 0] <= 0):
            # flip to positive first component; direction class is what counts
            raise LeafInvalid("tangent orientation is reversed")
        slopes = vel[..., 1] / vel[..., 0]
        lo, hi = self.bracket
        if np.any(slopes < lo) or np.any(slopes > hi):
            raise LeafInvalid("tangent slope exits the contracting bracket")
        speed = np.linalg.norm(
            np.asarray(velocity(self._nodes), dtype=float), axis=-1)
        self.length = float(np.sum(speed * self._wts))
        if not (self.delta / 2 <= self.length <= self.delta):
            raise LeafInvalid(
                f"length {self.length:.6f} outside "
                f"[{self.delta / 2:.6f}, {self.delta:.6f}]")

    @classmethod
    def segment(cls, start, slope, length, bracket, delta=0.5):
        """Straight constant-speed segment with the given tangent slope."""
        start = as_xy(start).reshape(2)
        direction = np.array([1.0, float(slope)])
        direction = direction / np.linalg.norm(direction)
        step = float(length) * direction

        def curve(taus):
            taus = np.asarray(taus, dtype=float)
            return start + taus[..., None] * step

        def velocity(taus):
            taus = np.asarray(taus, dtype=float)
            return np.broadcast_to(step, taus.shape + (2,)).copy()

        return cls(curve, velocity, bracket, delta=delta)

    @classmethod
    def flow_arc(cls, vf, start, t0, t1, bracket, delta=0.5, tol=1e-11):
        """Reparametrized piece of a flow orbit as a leaf."""
        if t1 <= t0:
            raise LeafInvalid("arc needs t0 < t1")
        xy = as_xy(start).reshape(2)
        span = float(t1 - t0)
        path = flow_path(vf, xy, float(t1), tol=tol)

        def curve(taus):
            taus = np.atleast_1d(np.asarray(taus, dtype=float))
            return path.lift(t0 + span * taus).reshape(-1, 2)

        from ..flow import eval_V

        def velocity(taus):
            return span * eval_V(vf, wrap(curve(taus)))

        return cls(curve, velocity, bracket, delta=delta)

    def points(self):
        """Quadrature nodes, wrapped positions, slopes, speeds, weights."""
        pos = np.asarray(self.curve(self._nodes), dtype=float)
        vel = np.asarray(self.velocity(self._nodes), dtype=float)
        speed = np.linalg.norm(vel, axis=-1)
        slopes = vel[..., 1] / vel[..., 0]
        return self._nodes, wrap(pos), slopes, speed, self._wts


def leaf_pairing(leaf, phi, g):
    """Weighted line integral of an extended function along a leaf.

    phi is a test profile on the parameter interval; g takes (wrapped
    points, slopes).  The integrand is phi(s) g(curve(s), slope(s)) times
    the curve speed, integrated by composite Gauss-Legendre.
    """
    nodes, pos, slopes, speed, wts = leaf.points()
    fval = np.asarray(phi(nodes), dtype=float)
    gval = np.asarray(g(pos, slopes), dtype=float)
    return float(np.sum(fval * gval * speed * wts))


def lifted_scalar(g):
    """Extension-space function that ignores the fiber coordinate."""

    def gg(pts, slopes):  # noqa: ARG001 - fiber-independent lift
        return np.asarray(g(pts), dtype=float)

    return gg


def random_leaf_family(bracket, n=64, delta=0.5, seed=20240809):
    """Random straight leaves: uniform base points, slopes, lengths."""
    rng = np.random.default_rng(seed)
    lo, hi = float(bracket[0]), float(bracket[1])
    pad = 0.05 * (hi - lo)
    leaves = []
    for _ in range(int(n)):
        start = rng.uniform(0.0, 1.0, size=2)
        slope = rng.uniform(lo + pad, hi - pad)
        length = rng.uniform(delta / 2, delta)
        leaves.append(AdmissibleLeaf.segment(start, slope, length, bracket,
                                             delta=delta))
    return leaves


def test_profiles(q, count=6):
    """Endpoint-vanishing dictionary, normalized to unit C^q size.

    Profiles sin(j pi s) vanish at both ends; dividing by (j pi)^q caps
    the largest derivative up to order q at one.
    """
    profs = []
    for j in range(1, count + 1):
        scale = max(1.0, (j * np.pi) ** q)

        def phi(s, _j=j, _c=scale):
            return np.sin(_j * np.pi * np.asarray(s, dtype=float)) / _c

        profs.append(phi)
    return profs


def _apply_shift(func, pts, slopes, axis, d):
    p = np.asarray(pts, dtype=float).copy()
    s = np.asarray(slopes, dtype=float)
    if axis == 0:
        p[..., 0] += d
    elif axis == 1:
        p[..., 1] += d
    else:
        s = np.tan(np.arctan(s) + d)
    return np.asarray(func(wrap(p), s), dtype=float)


def sampled_seminorm(g, leaf_family, p=0, q=2.0, profile_count=6,
                     fd_step=1e-4):
    """Finite surrogate of the anisotropic seminorm.

    Maximum over the leaf family and the normalized test dictionary of
    the line pairing, applied to every partial derivative of g up to
    total order p (central differences in base coordinates and fiber
    angle).  p=0 needs no differentiation and is exact up to quadrature.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    fields = []
    for total in range(p + 1):
        for a1 in range(total + 1):
            for a2 in range(total - a1 + 1):
                a3 = total - a1 - a2
                fields.append((_fd_partial(g, (a1, a2, a3), fd_step), total))
    best = 0.0
    for field, total in fields:
        profs = test_profiles(q + total, count=profile_count)
        for leaf in leaf_family:
            for phi in profs:
                best = max(best, abs(leaf_pairing(leaf, phi, field)))
    return best


def _fd_partial(g, order_xyz, h):
    """Nested central differences of g in (x1, x2, fiber angle)."""
    a1, a2, a3 = order_xyz
    if a1 == a2 == a3 == 0:
        return g
    inner = _fd_partial(g, (a1 - 1, a2, a3) if a1 > 0 else
                        ((a1, a2 - 1, a3) if a2 > 0 else (a1, a2, a3 - 1)), h)
    axis = 0 if a1 > 0 else (1 if a2 > 0 else 2)

    def deriv(pts, slopes):
        plus = _apply_shift(inner, pts, slopes, axis, h)
        minus = _apply_shift(inner, pts, slopes, axis, -h)
        return (plus - minus) / (2 * h)

    return deriv


def bounded_functional_check(vf, bracket, observables, windows, points,
                             q=2.0, n_leaves=64, delta=0.5, margin=2.0,
                             seed=20240809, tol=1e-9):
    """Empirical shape check of the windowed-functional bound.

    The ratio |windowed functional| / (support length x window size x
    sampled seminorm) is calibrated on the first half of the test triples
    and verified on the second half against the calibrated constant times
    the margin.  Returns a dict with the constant, the worst verification
    ratio and the outcome.
    """
    family = random_leaf_family(bracket, n=n_leaves, delta=delta, seed=seed)
    triples = [(g, w, x) for g in observables for w in windows
               for x in points]
    ratios = []
    for g, window, x in triples:
        val = abs(mollified_functional(vf, x, window, g, tol=tol))
        semi = sampled_seminorm(lifted_scalar(g), family, p=0, q=q)
        size = window.length * window.sampled_norm(order=max(int(np.ceil(q)),
                                                             0))
        denom = size * semi
        if denom < 1e-300:
            continue
        ratios.append(val / denom)
    half = max(1, len(ratios) // 2)
    calibrated = max(ratios[:half])
    worst = max(ratios[half:]) if ratios[half:] else 0.0
    return {
        "constant": calibrated,
        "worst_verification_ratio": worst,
        "passed": bool(worst <= margin * calibrated),
        "n_triples": len(ratios),
    }
