"""One-form transfer along the inverse extension and orbit pairings.

An admissible form pairs only with base tangents, so it is stored as a
covector field over extended points: a callable (points, slopes) ->
(..., 2).  The transfer pulls the covector back along the inverse orbit
and multiplies the same invariant weight that drives the function
transfer.  Pairing a form against a compactly supported vector window
carried by the flow's variational propagator turns long-time gradient
integrals into integrals over bounded windows; the two residual checks
at the bottom exercise that bookkeeping end to end.
"""

import numpy as np

from .. import torus
from ..flow import cocycle, eval_V, field_pair
from ..functionals import gradient_ergodic_integral, smooth_up
from ..numerics import gauss_nodes, solve_batched
from ..torus import as_xy, wrap
from .extension import backward_step


def lifted_differential(g):
    """Covector field of the base observable's differential, lifted.

    The fiber coordinate is ignored: the lift pairs to zero with fiber
    directions, which is what makes it admissible for the transfer.
    """
    grad = getattr(g, "gradient", None)
    if grad is None:
        raise TypeError("observable must provide a gradient")

    def cov(pts, slopes):  # noqa: ARG001 - no fiber pairing by design
        return np.asarray(grad(wrap(pts)), dtype=float)

    return cov


def unit_step_weight(espec, vf, xy, s):
    """One-step transfer weight with the unit direction representative.

    Norm of the pulled-back unit vector times the speed ratio.  This is
    the pointwise-exact weight for one-forms; the function pipeline's
    first-component representative differs by a slope-norm coboundary
    that cancels in spectra but not in pointwise pairings.
    """
    xy = np.asarray(xy, dtype=float)
    s = np.asarray(s, dtype=float)
    xy_prev, s_prev, v1 = backward_step(espec, xy, s)
    ratio = np.abs(v1) * np.sqrt((1.0 + s_prev**2) / (1.0 + s**2))
    speed = vf.norm(wrap(xy)) / vf.norm(wrap(xy_prev))
    return ratio * speed


def transfer_form(espec, vf, form, n=1):
    """n-step transferred covector field of an admissible form.

    Each step multiplies the unit-representative weight at the current
    extended point and composes with the base derivative of the inverse
    map; the returned callable evaluates the result at (points, slopes)
    arrays.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return form

    def cov(pts, slopes):
        xy = np.asarray(pts, dtype=float)
        s = np.asarray(slopes, dtype=float)
        weight = np.ones(s.shape)
        mats = np.broadcast_to(np.eye(2), s.shape + (2, 2)).copy()
        for _ in range(n):
            weight = weight * unit_step_weight(espec, vf, xy, s)
            xy_prev, s_prev, _ = backward_step(espec, xy, s)
            mats = torus.jacobian_inv(espec.base, wrap(xy_prev)) @ mats
            xy, s = xy_prev, s_prev
        base_cov = np.asarray(form(wrap(xy), s), dtype=float)
        pulled = np.einsum("...ji,...j->...i", mats, base_cov)
        return weight[..., None] * pulled

    return cov


def one_form_transfer(espec, vf, form, q, u, n=1):
    """Transferred form at extended point q on the base tangent (u, 0)."""
    cov = transfer_form(espec, vf, form, n=n)
    arr = q.array
    c = cov(arr[:2][None, :], np.array([arr[2]]))
    return float(c[0] @ np.asarray(u, dtype=float))


def _orbit_states(vf, p, times, tol, fd_step, depth):
    """Positions and variational matrices of one orbit at sorted times."""
    xy = as_xy(p).reshape(2)
    pos = np.empty((times.size, 2))
    jac = np.empty((times.size, 2, 2))

    def rhs(tt, y):  # noqa: ARG001 - autonomous
        z = y[0:2]
        J = y[2:6].reshape(2, 2)
        V, DV = field_pair(vf, z, fd_step=fd_step, depth=depth)
        out = np.empty(6)
        out[0:2] = V
        out[2:6] = (DV @ J).ravel()
        return out

    y0 = np.concatenate([xy, np.eye(2).ravel()])
    for sign in (1.0, -1.0):
        sel = times > 0 if sign > 0 else times < 0
        if not np.any(sel):
            continue
        ts = times[sel]
        if sign < 0:
            ts = ts[::-1]
        sol = solve_batched(rhs, y0, float(ts[-1]), rtol=tol, atol=tol,
                            method="DOP853", t_eval=ts)
        st = sol.y.T.reshape(-1, 6)
        if sign < 0:
            st = st[::-1]
        pos[sel] = st[:, 0:2]
        jac[sel] = st[:, 2:6].reshape(-1, 2, 2)
    at_zero = times == 0.0
    if np.any(at_zero):
        pos[at_zero] = xy
        jac[at_zero] = np.eye(2)
    return pos, jac


def flow_window_pairing(vf, p, window, support, form, panels=24, deg=10,
                        tol=1e-12, fd_step=1e-6, depth=24):
    """Integral of form(orbit(s)) on the pushed window vector over support.

    The orbit through p is integrated jointly with its variational matrix;
    at each quadrature time the window vector is pushed forward and paired
    with the covector field at the current extended point (the fiber slot
    rides the field's own slope).  Composite Gauss-Legendre in time.
    """
    a, b = float(support[0]), float(support[1])
    if b <= a:
        return 0.0
    gx, gw = gauss_nodes(deg)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    times = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    order = np.argsort(times)
    times, wts = times[order], wts[order]
    pos, jac = _orbit_states(vf, p, times, tol, fd_step, depth)
    slopes = vf.slope(wrap(pos))
    cov = np.asarray(form(wrap(pos), slopes), dtype=float)
    wvec = np.asarray(window(times), dtype=float)
    tang = np.einsum("nij,nj->ni", jac, wvec)
    vals = np.einsum("ni,ni->n", cov, tang)
    return float(np.sum(vals * wts))


def vector_bump(support, vec, plateau=0.6):
    """Smooth compactly supported vector window on the support interval."""
    a, b = float(support[0]), float(support[1])
    vec = np.asarray(vec, dtype=float)
    ramp = (1.0 - plateau) / 2.0 * (b - a)

    def w(s):
        s = np.asarray(s, dtype=float)
        prof = smooth_up(s, a, a + ramp) * (1.0 - smooth_up(s, b - ramp, b))
        return prof[..., None] * vec

    return w


def _forward_image(spec, p, n):
    z = as_xy(p).reshape(2)
    for _ in range(n):
        z = torus.apply_map(spec, z)
    return wrap(z)


def renorm_pairing_check(espec, vf, g, p, n, support=(0.3, 0.9),
                         vec=(1.0, 0.7), panels=24, deg=10, tol=1e-12):
    """Both sides of the n-step pairing renormalization for a lifted form.

    The right side pairs the n-step transferred form against the window
    at the n-th forward image; the left side pairs the original form at
    the start point against the window straightened by the inverse
    derivative correction and the reparametrized time.  Returns (lhs,
    rhs, residual).
    """
    form = lifted_differential(g)
    w = vector_bump(support, vec)
    rhs = flow_window_pairing(vf, _forward_image(espec.base, p, n), w,
                              support, transfer_form(espec, vf, form, n),
                              panels=panels, deg=deg, tol=tol)
    t_max = 1.05 * support[1] * 5.0 ** n
    cd = cocycle(vf, p, n, t_max=t_max, tol=tol)
    lhs_support = (float(cd.tau_inverse(support[0])),
                   float(cd.tau_inverse(support[1])))

    def u_window(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        tau_s = cd.tau(s)
        th = cd.theta(tau_s)
        wv = np.asarray(w(tau_s), dtype=float)
        return np.linalg.solve(th, wv[..., None])[..., 0]

    lhs = flow_window_pairing(vf, p, u_window, lhs_support, form,
                              panels=panels, deg=deg, tol=tol)
    scale = max(abs(lhs), abs(rhs), 1.0)
    return lhs, rhs, abs(lhs - rhs) / scale


def gradient_pairing_check(espec, vf, g, p, t, v, n, panels=24, deg=10,
                           tol=1e-12):
    """Directional gradient of the ergodic integral vs its windowed form.

    The left side differentiates the time-t ergodic integral in the start
    point along v; the right side pairs the n-step transferred lifted
    differential against the derivative-corrected v-window over the
    reparametrized interval.  Returns (lhs, rhs, residual).
    """
    lhs = gradient_ergodic_integral(vf, p, t, g, v, tol=tol)
    cd = cocycle(vf, p, n, t_max=1.05 * t, tol=tol)
    s_end = float(cd.tau(t))
    v = np.asarray(v, dtype=float)

    def w(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return cd.theta(s) @ v

    form_n = transfer_form(espec, vf, lifted_differential(g), n)
    rhs = flow_window_pairing(vf, _forward_image(espec.base, p, n), w,
                              (0.0, s_end), form_n, panels=panels, deg=deg,
                              tol=tol)
    scale = max(abs(lhs), abs(rhs), 1.0)
    return lhs, rhs, abs(lhs - rhs) / scale
