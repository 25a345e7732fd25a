"""Projective extension of the torus map and the weighted transfer step.

The map is lifted to pairs (x, s) where s is the slope of a line direction
at x kept inside a bracket of contracting slopes.  Forward images use the
derivative's action on slopes; the extension is invertible on the bracket
because the backward slope action is a uniform contraction toward the
invariant contracting section.

The transfer step acting on functions of (x, s) carries the weight

    w(x, s) = |D_x F^{-1} (1, s)| / |(1, s')| * N(x) / N(F^{-1} x),

with s' the backward image of s and directions represented by vectors with
unit first component.  The norm ratio collapses to the first component of
the pulled-back vector, so in the unperturbed case the weight is the affine
function d - b s of the slope alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import torus
from ..errors import ConeExit
from ..torus import MapSpec, TorusPoint, as_xy, wrap


@dataclass(frozen=True)
class ExtPoint:
    """A base point together with a contracting-cone slope."""

    x: TorusPoint
    s: float

    @classmethod
    def make(cls, x, s):
        if not isinstance(x, TorusPoint):
            x = TorusPoint.from_array(np.asarray(x, dtype=float))
        return cls(x, float(s))

    @property
    def array(self):
        return np.array([self.x.x1, self.x.x2, self.s])


def cone_bracket(spec, base_half=0.35, pad=0.10, grid=48, n_slopes=9,
                 tol=1e-13, max_iter=80):
    """Slope bracket that the backward action maps strictly into itself.

    Starting from an interval of the stated half width around the linear
    contracting slope, the hull of the backward slope images over a base
    grid is iterated to its fixed interval (the sweep contracts at the
    square of the eigenvalue ratio), then padded by the given fraction of
    the half width on each side.  A floor keeps the bracket nondegenerate
    when the invariant section is a single slope.
    """
    s_lin = torus.linear_slopes(spec)[0]
    u = (np.arange(grid) + 0.5) / grid
    g1, g2 = np.meshgrid(u, u, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    lo, hi = s_lin - base_half, s_lin + base_half
    for _ in range(max_iter):
        ss = np.linspace(lo, hi, n_slopes)
        img = torus.pullback_slope(spec, pts[:, None, :], ss[None, :])
        new_lo, new_hi = float(np.min(img)), float(np.max(img))
        if abs(new_lo - lo) < tol and abs(new_hi - hi) < tol:
            lo, hi = new_lo, new_hi
            break
        lo, hi = new_lo, new_hi
    center = 0.5 * (lo + hi)
    half = max(0.5 * (hi - lo) * (1.0 + pad), 0.12)
    lo, hi = center - half, center + half
    if hi >= 0.0:
        raise ConeExit("slope bracket touches the horizontal direction")
    return lo, hi


@dataclass(frozen=True)
class ExtMapSpec:
    """Extended map: base torus map plus its contracting slope bracket."""

    base: MapSpec
    bracket: tuple

    @classmethod
    def build(cls, base, base_half=0.35, pad=0.10):
        return cls(base, cone_bracket(base, base_half=base_half, pad=pad))

    @property
    def lo(self):
        return self.bracket[0]

    @property
    def hi(self):
        return self.bracket[1]

    def contains(self, s, slack=0.0):
        s = np.asarray(s, dtype=float)
        return (s >= self.lo - slack) & (s <= self.hi + slack)

    def fixed_slope(self):
        """The linear contracting slope (exact fixed slope when alpha=0)."""
        return torus.linear_slopes(self.base)[0]


def linear_fiber_map(spec, s):
    """Forward slope action of the linear part: s -> (c + d s)/(a + b s)."""
    (a, b), (c, d) = spec.linear
    s = np.asarray(s, dtype=float)
    out = (c + d * s) / (a + b * s)
    return float(out) if out.ndim == 0 else out


def linear_fiber_map_inverse(spec, s):
    """Backward slope action of the linear part: s -> (a s - c)/(d - b s)."""
    (a, b), (c, d) = spec.linear
    s = np.asarray(s, dtype=float)
    out = (a * s - c) / (d - b * s)
    return float(out) if out.ndim == 0 else out


def ext_map(espec, q):
    """One forward step of the extension; ConeExit if the slope leaves.

    The forward slope action expands away from the invariant section, so
    an off-section slope may leave the bracket after finitely many steps;
    that is reported rather than silently clipped.
    """
    xy = q.x.array
    s_new = float(torus.pushforward_slope(espec.base, xy, q.s))
    if not espec.contains(s_new):
        raise ConeExit(
            f"forward slope {s_new:.6f} left bracket "
            f"[{espec.lo:.6f}, {espec.hi:.6f}]")
    y = torus.apply_map(espec.base, q.x)
    return ExtPoint(y, s_new)


def ext_map_inverse(espec, q):
    """One backward step of the extension; contracts toward the section."""
    x_prev = torus.invert_map(espec.base, q.x)
    s_prev = float(torus.pullback_slope(espec.base, x_prev.array, q.s))
    if not espec.contains(s_prev, slack=1e-12):
        raise ConeExit(
            f"backward slope {s_prev:.6f} left bracket "
            f"[{espec.lo:.6f}, {espec.hi:.6f}]")
    return ExtPoint(x_prev, s_prev)


def backward_step(espec, xy, s):
    """Vectorized backward extension step on raw arrays.

    xy has shape (..., 2), s broadcasts against its leading shape.  Returns
    (xy_prev, s_prev, w1) where w1 is the first component of the pulled
    back direction vector (1, s); no cone check is performed.
    """
    xy_prev = torus.invert_map(espec.base, np.asarray(xy, dtype=float))
    J = torus.jacobian_inv(espec.base, xy_prev)
    v1 = J[..., 0, 0] + J[..., 0, 1] * s
    v2 = J[..., 1, 0] + J[..., 1, 1] * s
    return xy_prev, v2 / v1, v1


def transfer_weight(espec, vf, xy, s):
    """Weight of one transfer step at (x, s), in invariant form.

    Computed as the literal norm ratio of the pulled-back direction vector
    against its unit-first-component representative, times the speed ratio
    N(x)/N(F^{-1}x).  With the representative convention the norm ratio
    equals |[D_x F^{-1}(1, s)]_1|, which for the unperturbed map is d - b s.
    """
    xy = np.asarray(xy, dtype=float)
    s = np.asarray(s, dtype=float)
    xy_prev, s_prev, v1 = backward_step(espec, xy, s)
    pulled = np.stack([v1, v1 * s_prev], axis=-1)
    rep = np.stack([np.ones_like(s_prev), s_prev], axis=-1)
    ratio = (np.linalg.norm(pulled, axis=-1)
             / np.linalg.norm(rep, axis=-1))
    speed = vf.norm(wrap(xy)) / vf.norm(wrap(xy_prev))
    return ratio * speed


class TransferGrid:
    """Collocation grid on torus x slope bracket with the pullback cached.

    The base grid is uniform (nodes j/K in each coordinate), the fiber grid
    is Chebyshev (first kind) mapped to the bracket.  Building the grid
    performs the backward extension step, weight evaluation and cardinal
    table construction once; transfer_apply is then two cheap tensor
    contractions.  The base preimage does not depend on the fiber node, so
    the inverse map is solved on the K x K grid only.
    """

    def __init__(self, espec, vf, k_base, m_fiber):
        self.espec = espec
        self.vf = vf
        self.k_base = int(k_base)
        self.m_fiber = int(m_fiber)
        K, M = self.k_base, self.m_fiber
        u = np.arange(K) / K
        theta = (np.arange(M) + 0.5) * np.pi / M
        lo, hi = espec.bracket
        self.x_nodes = u
        self.theta = theta
        self.s_nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(theta)
        g1, g2 = np.meshgrid(u, u, indexing="ij")
        pts = np.stack([g1, g2], axis=-1)
        xp = torus.invert_map(espec.base, pts)
        J = torus.jacobian_inv(espec.base, xp)
        v1 = J[..., 0, 0, None] + J[..., 0, 1, None] * self.s_nodes
        v2 = J[..., 1, 0, None] + J[..., 1, 1, None] * self.s_nodes
        self.xy_prev = wrap(xp)
        self.s_prev = v2 / v1
        if np.any(~espec.contains(self.s_prev, slack=1e-9)):
            raise ConeExit("backward slope image left the bracket on grid")
        pulled = np.stack([v1, v1 * self.s_prev], axis=-1)
        rep = np.stack([np.ones_like(self.s_prev), self.s_prev], axis=-1)
        ratio = np.linalg.norm(pulled, axis=-1) / np.linalg.norm(rep, axis=-1)
        speed = (vf.norm(pts) / vf.norm(self.xy_prev))[..., None]
        self.weight = ratio * speed
        self.base_card_1 = _trig_cardinal(self.xy_prev[..., 0], K)
        self.base_card_2 = _trig_cardinal(self.xy_prev[..., 1], K)
        self.fiber_card = _cheb_cardinal(self.s_prev, self.s_nodes, theta)

    @property
    def shape(self):
        return (self.k_base, self.k_base, self.m_fiber)

    @property
    def size(self):
        return self.k_base * self.k_base * self.m_fiber

    def node_points(self):
        """All grid nodes as ((K*K*M, 2) base points, (K*K*M,) slopes)."""
        g1, g2, gs = np.meshgrid(self.x_nodes, self.x_nodes, self.s_nodes,
                                 indexing="ij")
        return (np.stack([g1.ravel(), g2.ravel()], axis=-1), gs.ravel())

    def sample(self, func):
        """Evaluate a callable f(xy, s) on the grid; returns (K, K, M)."""
        pts, ss = self.node_points()
        vals = np.asarray(func(pts, ss), dtype=float)
        return vals.reshape(self.shape)


def _trig_cardinal(u, nodes_k):
    """Periodic cardinal functions of the uniform K-point grid.

    Row i gives the K cardinal values at query u[i]; exact for
    trigonometric polynomials supported on the grid's mode set.
    """
    K = nodes_k
    u = np.asarray(u, dtype=float)
    j = np.arange(K)
    d = u[..., None] - j / K
    # Dirichlet kernel form; even K uses the tangent variant that pairs
    # the Nyquist mode's two half-weights.
    hit = np.abs(np.sin(np.pi * d)) < 1e-14
    num = np.sin(np.pi * K * d)
    if K % 2 == 0:
        den = K * np.where(hit, 1.0, np.tan(np.pi * d))
        card = np.where(hit, np.cos(np.pi * K * d) ** 2, num / den)
    else:
        den = K * np.where(hit, 1.0, np.sin(np.pi * d))
        card = np.where(hit, np.cos(np.pi * K * d), num / den)
    return card


def _cheb_cardinal(s, s_nodes, theta):
    """Barycentric cardinal functions of the Chebyshev (first kind) nodes."""
    s = np.asarray(s, dtype=float)
    w = (-1.0) ** np.arange(len(s_nodes)) * np.sin(theta)
    d = s[..., None] - s_nodes
    hit = np.abs(d) < 1e-15
    d = np.where(hit, 1.0, d)
    terms = w / d
    card = terms / np.sum(terms, axis=-1, keepdims=True)
    card = np.where(np.any(hit, axis=-1, keepdims=True),
                    hit.astype(float), card)
    return card


def transfer_apply(grid, values):
    """One weighted transfer step of grid values.

    values has the grid's (K, K, M) shape (any extra trailing batch axes
    are carried along); the result is the interpolant of `values` at the
    backward image of every node, times the transfer weight there.
    Interpolation is trigonometric in the base and barycentric-Chebyshev
    in the fiber, so the step is exact on the span of the collocation
    basis.  The base preimage is fiber-independent, which splits the work
    into a base contraction and a small fiber contraction.
    """
    values = np.asarray(values)
    if values.shape[:3] != grid.shape:
        raise ValueError(f"values shape {values.shape} != grid {grid.shape}")
    orig_shape = values.shape
    vals = values.reshape(grid.shape + (-1,))
    base = np.einsum("ija,ijb,abmq->ijmq", grid.base_card_1,
                     grid.base_card_2, vals, optimize=True)
    out = np.einsum("ijcm,ijmq->ijcq", grid.fiber_card, base)
    out = grid.weight[..., None] * out
    return out.reshape(orig_shape)


def transfer_adjoint_apply(grid, values):
    """Transpose of transfer_apply in the node-value pairing.

    Scatters weight-scaled values back through the cardinal tables; used
    for left eigenvector iterations without forming the dense matrix.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} != grid {grid.shape}")
    wv = grid.weight * values
    fib = np.einsum("ijcm,ijc->ijm", grid.fiber_card, wv)
    return np.einsum("ija,ijb,ijm->abm", grid.base_card_1,
                     grid.base_card_2, fib, optimize=True)


def transfer_matrix(grid, cap=4096):
    """Dense matrix of the transfer step in the node-value basis.

    Row (i,j,c) holds weight(i,j,c) times the cardinal products at the
    backward image of that node.  Guarded by the size cap since the
    matrix is dense.
    """
    from ..errors import SizeOverflow

    if grid.size > cap:
        raise SizeOverflow(
            f"dense transfer matrix would be {grid.size}^2; cap {cap}")
    ll = np.einsum("ija,ijb->ijab", grid.base_card_1, grid.base_card_2)
    wc = grid.weight[..., None] * grid.fiber_card
    mat = np.einsum("ijab,ijcm->ijcabm", ll, wc)
    return mat.reshape(grid.size, grid.size)
