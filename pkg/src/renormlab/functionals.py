"""Ergodic-average functionals along the stable flow.

Four layers, each built on the one below:

  * plain time integrals H_{x,t}(g) of an observable along a trajectory,
    with a variational (Jacobian-tracked) directional derivative;
  * mollified windows H_{x,phi}(g) with compactly supported C-infinity
    profiles, the basic currency of the renormalization arguments;
  * renormalized averages: the time integral cut off by a mollifier
    composed with the n-fold time change, the object whose boundedness
    encodes coboundary regularity;
  * the constructive decomposition of a long-time average into at most
    n_t unit-scale windows per side, pushed to deeper map iterates.

All quadratures run on dense integrator output; the time changes come
from shared prefix-integral tables so one orbit sweep serves every depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import torus
from .errors import NonConvergence, RecursionStall
from .flow import (Trajectory, default_method, eval_V, field_pair, flow_path,
                   nu_product, nu_products_upto, transfer_observable)
from .numerics import (MultiCumulativeQuadrature, gauss_nodes, quad_vectorized,
                       solve_batched)
from .torus import as_xy, wrap

_EXP_CLIP = 700.0


def smoothstep(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, strictly increasing."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    lo = u <= 0.0
    hi = u >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    um = u[mid]
    expo = 1.0 / um - 1.0 / (1.0 - um)
    out[mid] = 1.0 / (1.0 + np.exp(np.clip(expo, -_EXP_CLIP, _EXP_CLIP)))
    return out


def smoothstep_derivative(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    s = smoothstep(um)
    out[mid] = (um ** -2 + (1.0 - um) ** -2) * s * (1.0 - s)
    return out


def smooth_up(s, a, b):
    """Ramp from 0 at s <= a to 1 at s >= b, C-infinity."""
    if b <= a:
        raise ValueError("ramp needs a < b")
    return smoothstep((np.asarray(s, dtype=float) - a) / (b - a))


def smooth_up_derivative(s, a, b):
    return smoothstep_derivative((np.asarray(s, dtype=float) - a) / (b - a)) / (b - a)


@dataclass(frozen=True)
class Mollifier:
    """Cutoff profile: 1 on [0, delta0], smooth descent to 0 at 1.

    chi(0) = 1, chi identically 1 on the plateau, chi(s) = 0 for s >= 1,
    monotone nonincreasing, with all derivatives vanishing at both ends
    of the descent; the derivative is therefore supported in [delta0, 1].
    """

    delta0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.delta0 < 1.0:
            raise ValueError("plateau end must lie in (0, 1)")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        u = (1.0 - np.atleast_1d(s)) / (1.0 - self.delta0)
        out = smoothstep(u)
        if scalar:
            return float(out[0])
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        u = (1.0 - np.atleast_1d(s)) / (1.0 - self.delta0)
        out = -smoothstep_derivative(u) / (1.0 - self.delta0)
        if scalar:
            return float(out[0])
        return out


@dataclass(frozen=True)
class WindowFunction:
    """Compactly supported smooth profile on a time interval.

    profile must be vectorized and must already vanish outside support.
    kind is "interior" (smooth on the line) or "boundary" (one-sided:
    may jump at the outer support edge).  level records the map depth the
    window's argument lives at; side tags which half of a decomposition
    it came from.
    """

    profile: object
    support: tuple
    level: int = 0
    kind: str = "interior"
    side: str = ""

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        out = np.asarray(self.profile(np.atleast_1d(s)), dtype=float)
        if scalar:
            return float(out[0])
        return out

    @property
    def length(self):
        return self.support[1] - self.support[0]

    def sampled_norm(self, order=2, n=512):
        """max over k <= order of sup|phi^(k)|/k! on a uniform sample."""
        lo, hi = self.support
        pad = 1e-3 * max(self.length, 1e-12)
        ss = np.linspace(lo + pad, hi - pad, n)
        vals = self(ss)
        best = float(np.max(np.abs(vals)))
        h = ss[1] - ss[0]
        fact = 1.0
        for k in range(1, order + 1):
            vals = np.gradient(vals, h)
            fact *= k
            best = max(best, float(np.max(np.abs(vals))) / fact)
        return best


def _as_callable(g):
    if callable(g):
        return g
    raise TypeError("observable must be callable on point arrays")


def ergodic_integral(vf, p, t, g, tol=1e-9, method=None):
    """Time integral of g along the flow from p, absolute error <= tol.

    Runs an augmented solve (position plus accumulator) so long horizons
    stay O(t); g may be an Observable or any vectorized callable.
    """
    if t < 0:
        raise ValueError("nonnegative time required")
    if t == 0.0:
        return 0.0
    out = ergodic_integral_sweep(vf, p, [t], g, tol=tol, method=method)
    return float(out[-1, 0])


def ergodic_integral_sweep(vf, p, ts, g, tol=1e-9, method=None):
    """Integral values at each checkpoint in ts, batched over start points.

    Returns shape (len(ts), n_points).  ts must be positive increasing.
    """
    g = _as_callable(g)
    xy = np.atleast_2d(as_xy(p))
    npts = xy.shape[0]
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("checkpoints must be positive and increasing")
    t_end = float(ts[-1])
    if method is None:
        method = default_method(vf, t_end)

    def rhs(_, y):
        pos = y[: 2 * npts].reshape(npts, 2)
        dy = np.empty_like(y)
        dy[: 2 * npts] = eval_V(vf, pos).ravel()
        dy[2 * npts:] = g(wrap(pos))
        return dy

    y0 = np.concatenate([xy.ravel(), np.zeros(npts)])
    rtol = max(tol * 1e-2, 1e-13)
    sol = solve_batched(rhs, y0, t_end, rtol=rtol, atol=rtol,
                        method=method, t_eval=ts)
    return sol.y[2 * npts:, :].T


def mollified_functional(vf, p, window: WindowFunction, g, tol=1e-9):
    """Windowed flow integral: quadrature of phi(s) * g(flow_s(p)).

    The trajectory is solved once over the window's support (both signs
    of time handled); the profile is applied at adaptive Gauss nodes.
    """
    g = _as_callable(g)
    lo, hi = window.support
    if hi <= lo:
        return 0.0
    xy = as_xy(p)
    fwd = flow_path(vf, xy, hi, tol=tol * 1e-2) if hi > 0 else None
    bwd = flow_path(vf, xy, lo, tol=tol * 1e-2) if lo < 0 else None

    def pos_at(ss):
        out = np.empty((len(ss), 2))
        neg = ss < 0
        if np.any(neg):
            out[neg] = bwd.lift(ss[neg])
        if np.any(~neg):
            out[~neg] = (fwd.lift(ss[~neg]) if fwd is not None
                         else np.broadcast_to(xy, (int(np.sum(~neg)), 2)))
        return out

    def integrand(ss):
        return window(ss) * g(wrap(pos_at(ss)))

    return quad_vectorized(integrand, lo, hi, tol=tol)


def _inverse_time_at_one(vf, y_path: Trajectory, n, nodes=32):
    """Integral over one unit of flow time from y of 1/nu_n at the n-fold
    backward images; equals the time s with tau_n(x, s) = 1 for y = F^n x.

    y_path must cover [0, 1].  Returns an array over the batch of starts.
    """
    xs, ws = gauss_nodes(nodes)
    uu = 0.5 * (xs + 1.0)
    P = y_path.point(uu)  # (nodes, ..., 2)
    flat = P.reshape(-1, 2)
    zs = torus.invert_map(vf.base, flat, n)
    inv_nu = 1.0 / nu_product(vf, zs, n)
    vals = inv_nu.reshape(P.shape[:-1])
    return 0.5 * np.tensordot(ws, vals, axes=(0, 0))


def n_t_point(vf, p, t, n_max=90, tol=1e-9):
    """Smallest n with tau_n(p, t) <= 1 (0 when t <= 1).

    Uses the inverse-time identity: tau_n(x, .) passes 1 exactly when the
    unit-time integral of 1/nu_n along the forward image's trajectory
    reaches t, so no long integration is needed.
    """
    if t <= 1.0:
        return 0
    xy = as_xy(p)
    y = wrap(np.atleast_2d(xy))
    for n in range(1, n_max + 1):
        y = torus.apply_map(vf.base, y)
        path = flow_path(vf, y, 1.0, tol=tol)
        s_n = float(_inverse_time_at_one(vf, path, n)[0])
        if t <= s_n:
            return n
    raise NonConvergence("time-change depth search exhausted")


def n_T(vf, T, grid=64, n_max=120, tol=1e-9):
    """Global renormalization depth for horizon T.

    n_T + 1 is the first n whose time change dips below 1 somewhere on a
    grid-by-grid sample within time T; clamped at 0 for T <= 1.  The grid
    parametrizes the forward images, which resamples the same torus.
    """
    if T <= 1.0:
        return 0
    axis = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    ys = np.column_stack([X.ravel(), Y.ravel()])
    path = flow_path(vf, ys, 1.0, tol=tol)
    xs, ws = gauss_nodes(32)
    uu = 0.5 * (xs + 1.0)
    P = path.point(uu).reshape(-1, 2)  # (32 * grid^2, 2)
    running = np.ones(P.shape[0])
    zs = P
    v_next = eval_V(vf, zs)
    for n in range(1, n_max + 1):
        zs_prev = torus.invert_map(vf.base, zs)
        v_prev = eval_V(vf, zs_prev)
        push = np.einsum("...ij,...j->...i", torus.jacobian(vf.base, zs_prev),
                         v_prev)
        factor = np.einsum("...i,...i->...", push, v_next) / np.einsum(
            "...i,...i->...", v_next, v_next)
        running = running * factor
        inv_nu = (1.0 / running).reshape(len(uu), -1)
        s_n = 0.5 * (ws @ inv_nu)
        if float(np.max(s_n)) >= T:
            return n - 1
        zs, v_next = zs_prev, v_prev
    raise NonConvergence("depth search for the horizon exhausted")


def renormalized_average(vf, g, T, chi: Mollifier, p, n=None, tol=1e-8,
                         grid_for_n=64, method=None):
    """Cutoff ergodic integral: minus the integral of chi(tau_n) * g.

    The time change tau_n rides along as an extra integrated state, so a
    single pass produces the value at any batch of start points.  n
    defaults to the global depth for horizon T.
    """
    g = _as_callable(g)
    if T <= 0:
        raise ValueError("positive horizon required")
    if n is None:
        n = n_T(vf, T, grid=grid_for_n)
    xy = np.atleast_2d(as_xy(p))
    single = np.asarray(as_xy(p)).ndim == 1
    npts = xy.shape[0]
    if method is None:
        method = default_method(vf, T)

    def rhs(_, y):
        pos = y[: 2 * npts].reshape(npts, 2)
        s = y[2 * npts: 3 * npts]
        dy = np.empty_like(y)
        w = wrap(pos)
        dy[: 2 * npts] = eval_V(vf, pos).ravel()
        dy[2 * npts: 3 * npts] = nu_product(vf, w, n)
        dy[3 * npts:] = -chi(s) * g(w)
        return dy

    y0 = np.concatenate([xy.ravel(), np.zeros(2 * npts)])
    rtol = max(tol * 1e-2, 1e-13)
    sol = solve_batched(rhs, y0, float(T), rtol=rtol, atol=rtol, method=method,
                        t_eval=[float(T)])
    acc = sol.y[3 * npts:, -1]
    if single:
        return float(acc[0])
    return acc


def gradient_ergodic_integral(vf, p, t, g, v, tol=1e-10, fd_step=1e-6,
                              depth=24):
    """Directional derivative of the ergodic integral in start point p.

    Tracks the variational Jacobian alongside the trajectory and
    accumulates the observable's gradient paired with the pushed vector;
    g must expose an analytic gradient (Observable does).
    """
    if t < 0:
        raise ValueError("nonnegative time required")
    if t == 0.0:
        return 0.0
    grad_g = getattr(g, "gradient", None)
    if grad_g is None:
        raise TypeError("observable must provide a gradient")
    xy = as_xy(p)
    v = np.asarray(v, dtype=float)

    def rhs(_, y):
        pos = y[0:2]
        J = y[2:6].reshape(2, 2)
        V, DV = field_pair(vf, pos, fd_step=fd_step, depth=depth)
        dy = np.empty(7)
        dy[0:2] = V
        dy[2:6] = (DV @ J).ravel()
        dy[6] = grad_g(wrap(pos)) @ (J @ v)
        return dy

    y0 = np.concatenate([xy, np.eye(2).ravel(), [0.0]])
    sol = solve_batched(rhs, y0, float(t), rtol=tol, atol=tol,
                        t_eval=[float(t)])
    return float(sol.y[6, -1])


# ---------------------------------------------------------------------------
# Decomposition of a long-time average into unit-scale windows


@dataclass(frozen=True)
class Decomposition:
    """Recursive partition of a time integral into pushed window pieces.

    pieces holds (depth, window) pairs whose windows act at the depth-fold
    image of the base point; the two boundary windows act at the base
    point itself.  k_minus / k_plus count the pieces on each side,
    including the half-plateau, and never exceed n_t.
    """

    point: tuple
    t: float
    delta: float
    n_t: int
    pieces: tuple
    boundary: tuple
    c_star: float
    k_minus: int
    k_plus: int

    @property
    def windows(self):
        out = [w for _, w in self.pieces]
        out.extend(self.boundary)
        return out


def cocycle_expansion_bound(vf, grid=64):
    """Upper bound for the one-step time-change expansion 1/nu_1 on a grid."""
    axis = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    nu1 = nu_product(vf, pts, 1)
    return float(1.0 / np.min(nu1))


def _base_case_windows(t, delta):
    mid = 0.5 * t
    w = min(delta, 0.25 * t)
    a, b = mid - w, mid + w

    def minus_profile(u):
        return np.where((u >= 0.0) & (u <= b), 1.0 - smooth_up(u, a, b), 0.0)

    def plus_profile(u):
        return np.where((u >= a) & (u <= t), smooth_up(u, a, b), 0.0)

    minus = WindowFunction(minus_profile, (0.0, b), level=0, kind="boundary",
                           side="-")
    plus = WindowFunction(plus_profile, (a, t), level=0, kind="boundary",
                          side="+")
    return minus, plus


def decompose(vf, p, t, delta=0.05, c_star=None, tol=1e-9,
              quad_tol=1e-11) -> Decomposition:
    """Split the time-t average at p into unit-support windows.

    A plateau window at the deepest level is halved between the two ends;
    each leftover boundary strip is rewound to a shallower level by
    composing with the time-change inverse, split again, and so on until
    it reaches level 0.  Raises RecursionStall if a strip fails to unwind
    (the signature of delta chosen too large for the cocycle bracket).
    """
    if t <= 0:
        raise ValueError("positive time required")
    lam = cocycle_expansion_bound(vf)
    if not 0.0 < delta < 1.0 / (4.0 * lam):
        raise ValueError("window margin must lie in (0, 1/(4*bracket))")
    xy = as_xy(p)
    n1 = n_t_point(vf, xy, t, tol=tol)
    if n1 == 0:
        minus, plus = _base_case_windows(t, delta)
        cs = c_star if c_star is not None else 2.0 * max(
            minus.sampled_norm(), plus.sampled_norm())
        return Decomposition(tuple(wrap(xy)), float(t), delta, 0, (),
                             (minus, plus), cs, 0, 0)

    traj = flow_path(vf, xy, t, tol=tol * 1e-2)

    def nu_channels(ts):
        return nu_products_upto(vf, traj.point(np.asarray(ts)), n1)

    mc = MultiCumulativeQuadrature(nu_channels, traj.breakpoints, n1,
                                   tol=quad_tol)

    def tau_scalar(j, u):
        if j == 0:
            return float(u)
        return float(mc.value(float(u))[j - 1])

    def tau_inv(j, s):
        if j == 0:
            return float(s)
        return float(mc.inverse(float(s), j - 1))

    b = [tau_scalar(j, t) for j in range(n1 + 1)]
    bn = b[n1]
    if bn <= 4.0 * delta:
        raise RecursionStall("plateau too short for the window margin")

    def plateau(u):
        u = np.asarray(u, dtype=float)
        return smooth_up(u, delta, 2 * delta) * (
            1.0 - smooth_up(u, bn - 2 * delta, bn - delta))

    pieces = [(n1, WindowFunction(lambda u: 0.5 * plateau(u),
                                  (delta, bn - delta), level=n1,
                                  kind="interior", side="-")),
              (n1, WindowFunction(lambda u: 0.5 * plateau(u),
                                  (delta, bn - delta), level=n1,
                                  kind="interior", side="+"))]

    def rewound(om, m, ell, lo, hi, n_nodes=1537):
        """Window at level m composed down to level ell, tabulated.

        Both the new argument u = tau_ell(x, .) and the old argument
        tau_m(x, .) are read off one multi-channel table sweep over the
        matching stretch of trajectory time, then splined in u so later
        evaluations stay interpolant-cheap.
        """
        t_lo = tau_inv(ell, lo)
        t_hi = tau_inv(ell, hi)
        tt = np.linspace(t_lo, t_hi, n_nodes)
        vals = mc.value(tt)
        uu = tt if ell == 0 else vals[:, ell - 1]
        uu[0], uu[-1] = lo, hi
        args = vals[:, m - 1]
        sp = CubicSpline(uu, om(args), bc_type="natural")

        def profile(u):
            u = np.asarray(u, dtype=float)
            out = np.zeros(u.shape)
            inside = (u >= lo) & (u <= hi)
            if np.any(inside):
                out[inside] = sp(u[inside])
            return out

        return profile

    # minus side: strip clinging to the left end of the plateau
    def om_minus0(u):
        u = np.asarray(u, dtype=float)
        return np.where((u >= 0.0) & (u <= 2 * delta),
                        1.0 - smooth_up(u, delta, 2 * delta), 0.0)

    k_minus = 1
    om, m = om_minus0, n1
    boundary_minus = None
    while True:
        T_edge = tau_inv(m, 2 * delta)
        ell = next((j for j in range(m + 1)
                    if tau_scalar(j, T_edge) <= 1.0 + 1e-12), m)
        if ell >= m:
            raise RecursionStall("left strip failed to unwind")
        e = tau_scalar(ell, T_edge)
        om_hat = rewound(om, m, ell, 0.0, e)
        if ell == 0:
            boundary_minus = WindowFunction(om_hat, (0.0, T_edge), level=0,
                                            kind="boundary", side="-")
            break
        if e <= 4.0 * delta:
            raise RecursionStall("left strip stopped shrinking")

        def interior(u, _p=om_hat):
            u = np.asarray(u, dtype=float)
            return smooth_up(u, delta, 2 * delta) * _p(u)

        pieces.append((ell, WindowFunction(interior, (delta, e), level=ell,
                                           kind="interior", side="-")))
        k_minus += 1

        def om_next(u, _p=om_hat):
            u = np.asarray(u, dtype=float)
            return np.where((u >= 0.0) & (u <= 2 * delta),
                            (1.0 - smooth_up(u, delta, 2 * delta)) * _p(u),
                            0.0)

        om, m = om_next, ell

    # plus side: strip clinging to the right end, rewound toward level 0
    def om_plus0(u):
        u = np.asarray(u, dtype=float)
        return np.where((u >= bn - 2 * delta) & (u <= bn),
                        smooth_up(u, bn - 2 * delta, bn - delta), 0.0)

    k_plus = 1
    om, m = om_plus0, n1
    boundary_plus = None
    while True:
        T_lo = tau_inv(m, b[m] - 2 * delta)
        spans = [b[j] - tau_scalar(j, T_lo) for j in range(m + 1)]
        ell = next((j for j, d in enumerate(spans) if d <= 1.0 + 1e-12), m)
        if ell >= m:
            raise RecursionStall("right strip failed to unwind")
        lo_edge = tau_scalar(ell, T_lo)
        om_hat = rewound(om, m, ell, lo_edge, b[ell])
        if ell == 0:
            boundary_plus = WindowFunction(om_hat, (T_lo, float(t)), level=0,
                                           kind="boundary", side="+")
            break
        if b[ell] - lo_edge <= 4.0 * delta:
            raise RecursionStall("right strip stopped shrinking")

        def interior(u, _p=om_hat, _b=b[ell]):
            u = np.asarray(u, dtype=float)
            return (1.0 - smooth_up(u, _b - 2 * delta, _b - delta)) * _p(u)

        pieces.append((ell, WindowFunction(
            interior, (lo_edge, b[ell] - delta), level=ell, kind="interior",
            side="+")))
        k_plus += 1

        def om_next(u, _p=om_hat, _b=b[ell]):
            u = np.asarray(u, dtype=float)
            return np.where((u >= _b - 2 * delta) & (u <= _b),
                            smooth_up(u, _b - 2 * delta, _b - delta) * _p(u),
                            0.0)

        om, m = om_next, ell

    for _, w in pieces:
        if w.length > 1.0 + 1e-9:
            raise RecursionStall("interior window exceeded unit support")
    all_windows = [w for _, w in pieces] + [boundary_minus, boundary_plus]
    if c_star is None:
        c_star = 2.0 * max(w.sampled_norm() for w in all_windows)
    return Decomposition(tuple(wrap(xy)), float(t), delta, n1,
                         tuple(pieces), (boundary_minus, boundary_plus),
                         float(c_star), k_minus, k_plus)


def reconstruct(dec: Decomposition, vf, g, tol=1e-9):
    """Evaluate the decomposition: transfer-iterated windowed integrals.

    Each interior piece is a mollified functional at the depth-fold image
    of the base point against the depth-fold transfer image of g; the
    boundary windows act untransferred.  Summing reproduces the plain
    ergodic integral.
    """
    x = np.asarray(dec.point, dtype=float)
    total = 0.0
    for n, w in dec.pieces:
        xn = torus.apply_map(vf.base, x, n)
        total += mollified_functional(vf, xn, w, transfer_observable(vf, g, n),
                                      tol=tol)
    for w in dec.boundary:
        total += mollified_functional(vf, x, w, g, tol=tol)
    return total


def fit_power_law(ts, vals, floor=1e-300):
    """Least-squares slope and intercept of log|vals| against log ts."""
    ts = np.asarray(ts, dtype=float)
    vals = np.abs(np.asarray(vals, dtype=float))
    keep = (ts > 0) & (vals > floor) & np.isfinite(vals)
    if np.sum(keep) < 2:
        raise ValueError("not enough positive samples for a fit")
    slope, intercept = np.polyfit(np.log(ts[keep]), np.log(vals[keep]), 1)
    return float(slope), float(intercept)
