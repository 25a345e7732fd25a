"""The flow along the contracting line field and its renormalization data.

A VectorFieldSpec selects V(x) = orientation * N(x) * (unit contracting
direction), with N a positive trigonometric polynomial.  The flow is solved
by adaptive Runge-Kutta on lifts.  The renormalization data for n map steps
consists of

  * nu_n(x): the signed contraction factor of V under the n-fold map,
  * tau_n(x, t): the induced time change, an increasing function of t,
  * grad tau_n(x, t): its base-point gradient (closed-form integrand),
  * Theta_{x,n}(s): the derivative correction matrix at renormalized time s.

Direction evaluation has two modes: "exact" (adaptive-depth pullback at each
query) and "grid" (bilinear table lookup, for bulk integrations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import torus
from .errors import SignError, TransversalityFailure
from .numerics import CumulativeQuadrature, DensePath, solve_batched
from .observables import Observable
from .torus import TWO_PI, MapSpec, SlopeGrid, TorusPoint, as_xy, wrap


class VectorFieldSpec:
    """Map + speed profile + orientation defining the field V.

    mode "exact" recomputes the contracting direction at every query point;
    mode "grid" interpolates a precomputed table (built lazily, shared).
    """

    def __init__(self, base: MapSpec, norm=None, orientation=1, mode="exact",
                 grid_size=512):
        if norm is None:
            norm = Observable({(0, 0): 1.0})
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if mode not in ("exact", "grid"):
            raise ValueError("mode must be 'exact' or 'grid'")
        u = np.arange(64) / 64.0
        g = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
        vals = norm(g)
        if np.min(vals) <= 0:
            raise ValueError("speed profile must be positive everywhere")
        self.base = base
        self.norm = norm
        self.orientation = int(orientation)
        self.mode = mode
        self.grid_size = grid_size
        self._slope_grid = None

    def with_mode(self, mode):
        out = VectorFieldSpec(self.base, self.norm, self.orientation, mode,
                              self.grid_size)
        out._slope_grid = self._slope_grid
        return out

    def slope(self, xy):
        """Contracting slope at wrapped points, honoring the mode."""
        if self.mode == "grid":
            if self._slope_grid is None:
                self._slope_grid = SlopeGrid(self.base, self.grid_size)
            return self._slope_grid(xy)
        return torus.stable_slope(self.base, xy, tol=1e-13)

    def to_json(self):
        coeffs = {}
        for k, c in self.norm.coeffs.items():
            coeffs[f"({k[0]},{k[1]})"] = [c.real, c.imag]
        return json.dumps(
            {"map": json.loads(self.base.to_json()), "norm_coeffs": coeffs,
             "orientation": self.orientation},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text) if isinstance(text, str) else text
        norm_raw = raw.get("norm_coeffs", {"(0,0)": 1.0})
        coeffs = {}
        for key, val in norm_raw.items():
            parts = key.strip("()").split(",")
            k = (int(parts[0]), int(parts[1]))
            if isinstance(val, (int, float)):
                coeffs[k] = complex(val)
            else:
                coeffs[k] = complex(float(val[0]), float(val[1]))
        return cls(
            MapSpec.from_json(raw["map"]),
            Observable(coeffs),
            int(raw.get("orientation", 1)),
        )


def eval_V(vf, p):
    """The field V at p (TorusPoint or (..., 2) array); same leading shape."""
    xy = as_xy(p)
    w = wrap(xy)
    s = vf.slope(w)
    norm = np.sqrt(1.0 + s * s)
    speed = vf.norm(w) * vf.orientation
    out = np.stack([speed / norm, speed * s / norm], axis=-1)
    if isinstance(p, TorusPoint):
        return out.reshape(2)
    return out


def nu_product(vf, pts, n):
    """nu_n at a batch of points: the signed factor in DF^n V = nu_n V(F^n).

    Accumulated one map step at a time so each V evaluation is reused for
    the next factor.  Raises SignError if any factor is nonpositive.
    """
    xy = np.atleast_2d(as_xy(pts))
    prod = np.ones(xy.shape[:-1])
    if n == 0:
        return prod
    ys = wrap(xy)
    Vy = eval_V(vf, ys)
    for _ in range(n):
        ys2 = torus.apply_map(vf.base, ys)
        Vy2 = eval_V(vf, ys2)
        push = np.einsum("...ij,...j->...i", torus.jacobian(vf.base, ys), Vy)
        factor = np.einsum("...i,...i->...", push, Vy2) / np.einsum(
            "...i,...i->...", Vy2, Vy2)
        if np.any(factor <= 0):
            raise SignError("contraction factor lost positivity")
        prod = prod * factor
        ys, Vy = ys2, Vy2
    return prod


def nu_gradient(vf, pts, n, depth=48):
    """nu_n and its spatial gradient at a batch of points.

    Each alignment factor is differentiated in closed form: the map
    jacobian varies only through the shear term, DV is analytic, and
    factors are chained to the base point by map jacobian products.
    Returns (values of shape (...,), gradients of shape (..., 2)).
    """
    xy = as_xy(pts)
    shape = xy.shape[:-1]
    flat = np.atleast_2d(xy).reshape(-1, 2)
    N = flat.shape[0]
    prod = np.ones(N)
    grad = np.zeros((N, 2))
    if n == 0:
        return prod.reshape(shape), grad.reshape(shape + (2,))
    alpha = vf.base.alpha
    y = wrap(flat)
    V, DV = field_pair(vf, y, depth=depth)
    C = np.tile(np.eye(2), (N, 1, 1))
    for _ in range(n):
        y2 = torus.apply_map(vf.base, y)
        V2, DV2 = field_pair(vf, y2, depth=depth)
        J = torus.jacobian(vf.base, y)
        push = np.einsum("nab,nb->na", J, V)
        num = np.einsum("na,na->n", push, V2)
        den = np.einsum("na,na->n", V2, V2)
        rho = num / den
        if np.any(rho <= 0):
            raise SignError("contraction factor lost positivity")
        DV2J = np.einsum("nab,nbk->nak", DV2, J)
        dnum = (np.einsum("nab,nbk,na->nk", J, DV, V2)
                + np.einsum("na,nak->nk", push, DV2J))
        if alpha:
            # only the first column of J varies, through the shear term
            q = TWO_PI * alpha * np.sin(TWO_PI * y[:, 0])
            dnum[:, 0] += q * V[:, 0] * (V2[:, 0] + V2[:, 1])
        dden = 2.0 * np.einsum("na,nak->nk", V2, DV2J)
        drho = (dnum * den[:, None] - num[:, None] * dden) / den[:, None] ** 2
        grad = grad * rho[:, None] + prod[:, None] * np.einsum(
            "nk,nkj->nj", drho, C)
        prod = prod * rho
        C = J @ C
        y, V, DV = y2, V2, DV2
    return prod.reshape(shape), grad.reshape(shape + (2,))


def nu_products_upto(vf, pts, n_max):
    """nu_j for every j in 1..n_max from one forward orbit sweep.

    Returns shape (len(pts), n_max); column j-1 holds nu_j.  Shares the
    per-step V evaluations across all depths.
    """
    xy = np.atleast_2d(as_xy(pts))
    out = np.empty(xy.shape[:-1] + (n_max,))
    prod = np.ones(xy.shape[:-1])
    ys = wrap(xy)
    Vy = eval_V(vf, ys)
    for j in range(n_max):
        ys2 = torus.apply_map(vf.base, ys)
        Vy2 = eval_V(vf, ys2)
        push = np.einsum("...ij,...j->...i", torus.jacobian(vf.base, ys), Vy)
        factor = np.einsum("...i,...i->...", push, Vy2) / np.einsum(
            "...i,...i->...", Vy2, Vy2)
        if np.any(factor <= 0):
            raise SignError("contraction factor lost positivity")
        prod = prod * factor
        out[..., j] = prod
        ys, Vy = ys2, Vy2
    return out


def transfer_observable(vf, g, n):
    """The n-fold transfer image of a base observable as a callable.

    (L^n g)(y) = g(F^{-n} y) / nu_n(F^{-n} y); the factor is accumulated
    along the backward orbit.
    """

    def apply(pts):
        xy = np.atleast_2d(as_xy(pts))
        back = xy
        for _ in range(n):
            back = torus.invert_map(vf.base, back)
        vals = np.asarray(g(back), dtype=float)
        if n:
            vals = vals / nu_product(vf, back, n)
        return vals.reshape(np.shape(as_xy(pts))[:-1])

    return apply


# -- flow integration --------------------------------------------------------

class Trajectory:
    """Dense-output solution of the flow from one or many start points."""

    def __init__(self, vf, start, path: DensePath, t_end):
        self.vf = vf
        self.start = start
        self.path = path
        self.t_end = t_end

    def lift(self, t):
        return self.path(t)

    def point(self, t):
        return wrap(self.path(t))

    @property
    def breakpoints(self):
        return self.path.breakpoints


def _field_rhs(vf, shape):
    def rhs(t, y):  # noqa: ARG001 - autonomous
        pos = y.reshape(shape)
        return eval_V(vf, pos).ravel()

    return rhs


def default_method(vf, t):
    """Stepper choice: eighth order when the field is costly or the span long.

    With the sheared slope field each right-hand side is expensive, so the
    higher-order method's larger steps win; on the constant-slope case the
    cheap stepper's lower overhead wins for short spans.
    """
    return "DOP853" if (vf.base.alpha != 0.0 or abs(t) > 200.0) else "RK45"


def flow_path(vf, p, t, tol=1e-10, method=None) -> Trajectory:
    """Integrate the flow to time t (t may be negative); dense output."""
    xy = as_xy(p)
    shape = xy.shape
    if method is None:
        method = default_method(vf, t)
    sol = solve_batched(_field_rhs(vf, shape), xy, t, rtol=tol, atol=tol,
                        dense=True, method=method)
    return Trajectory(vf, p, DensePath(sol, shape), t)


def flow(vf, p, t, tol=1e-10, method=None):
    """Endpoint of the flow; returns the same kind of object it was given."""
    xy = as_xy(p)
    if method is None:
        method = default_method(vf, t)
    if t == 0.0:
        out = wrap(xy)
    else:
        sol = solve_batched(_field_rhs(vf, xy.shape), xy, t, rtol=tol,
                            atol=tol, method=method)
        out = wrap(sol.y[:, -1].reshape(xy.shape))
    if isinstance(p, TorusPoint):
        return TorusPoint.from_array(out)
    return out


def field_pair(vf, pts, fd_step=1e-6, depth=48):
    """V and DV together, shapes (..., 2) and (..., 2, 2).

    Exact mode assembles both from one slope chain: the closed-form
    gradients of the contracting slope and of the speed profile; the only
    truncation left is the pullback depth, geometric and below 1e-12 at
    the default.  The slope gradient is Hoelder but not differentiable, so
    finite differences of V stall near 1e-6; grid mode still uses them
    (fd_step) because the interpolant has no exact derivative worth
    chasing.
    """
    xy = as_xy(pts)
    single = xy.ndim == 1
    flat = np.atleast_2d(xy).reshape(-1, 2)
    w = wrap(flat)
    if vf.mode == "grid":
        h = fd_step
        stencil = np.stack([
            flat + [h, 0], flat - [h, 0], flat + [0, h], flat - [0, h],
        ])  # (4, N, 2)
        ws = wrap(stencil.reshape(-1, 2))
        s = vf.slope(ws)
        norm = np.sqrt(1.0 + s * s)
        speed = vf.norm(ws) * vf.orientation
        Vs = np.stack([speed / norm, speed * s / norm],
                      axis=-1).reshape(4, -1, 2)
        DV = np.empty((flat.shape[0], 2, 2))
        DV[:, :, 0] = (Vs[0] - Vs[1]) / (2 * h)
        DV[:, :, 1] = (Vs[2] - Vs[3]) / (2 * h)
        V = eval_V(vf, w)
    else:
        s, gs = torus.stable_slope_gradient(vf.base, w, depth=depth)
        norm = np.sqrt(1.0 + s * s)
        speed = vf.norm(w) * vf.orientation
        gspeed = vf.norm.gradient(w) * vf.orientation
        u = np.stack([np.ones_like(s), s], axis=-1) / norm[..., None]
        du_ds = np.stack([-s, np.ones_like(s)], axis=-1) / norm[..., None] ** 3
        V = speed[..., None] * u
        DV = (u[..., :, None] * gspeed[..., None, :]
              + (speed[..., None, None]
                 * du_ds[..., :, None] * gs[..., None, :]))
    if single:
        return V[0], DV[0]
    return (V.reshape(xy.shape[:-1] + (2,)),
            DV.reshape(xy.shape[:-1] + (2, 2)))


def field_derivative(vf, pts, fd_step=1e-6, depth=48):
    """DV, shape (..., 2, 2); see field_pair."""
    return field_pair(vf, pts, fd_step=fd_step, depth=depth)[1]


def flow_with_jacobian(vf, p, t, tol=1e-10, fd_step=1e-6, depth=48):
    """Flow endpoint together with the derivative of the time-t flow map.

    State and variational equation are integrated jointly with DV from
    field_derivative, so the error budget is the integrator tolerance times
    the accumulated Jacobian magnitude.
    """
    xy = as_xy(p)
    single = xy.ndim == 1
    pts = np.atleast_2d(xy)
    N = pts.shape[0]
    y0 = np.concatenate([pts, np.tile(np.eye(2).reshape(1, 4), (N, 1))], axis=1)

    def rhs(tt, y):  # noqa: ARG001
        st = y.reshape(N, 6)
        pos = st[:, :2]
        J = st[:, 2:].reshape(N, 2, 2)
        dpos, DV = field_pair(vf, pos, fd_step=fd_step, depth=depth)
        dJ = DV @ J
        return np.concatenate([dpos, dJ.reshape(N, 4)], axis=1).ravel()

    if t == 0.0:
        endpoint, J = wrap(pts), np.tile(np.eye(2), (N, 1, 1))
    else:
        sol = solve_batched(rhs, y0, t, rtol=tol, atol=tol)
        st = sol.y[:, -1].reshape(N, 6)
        endpoint, J = wrap(st[:, :2]), st[:, 2:].reshape(N, 2, 2)
    if isinstance(p, TorusPoint):
        return TorusPoint.from_array(endpoint[0]), J[0]
    if single:
        return endpoint[0], J[0]
    return endpoint, J


# -- renormalization cocycles ------------------------------------------------

class CocycleData:
    """Renormalization data of one base point under n map steps.

    tau and tau_inverse are valid on [0, t_max]; grad_tau(t) returns the
    base-point gradient of tau at flow time t; theta(s) the derivative
    correction at renormalized time s in [0, tau(t_max)].
    """

    def __init__(self, vf, point, n, t_max, nu, Dn, V0, cq_center, cq_grad):
        self.vf = vf
        self.point = point
        self.n = n
        self.t_max = t_max
        self.nu = nu
        self._Dn = Dn
        self._V0 = V0
        self._cq = cq_center
        self._cq_grad = cq_grad

    def tau(self, t):
        if self.n == 0:
            return np.asarray(t, dtype=float) + 0.0
        return self._cq.value(t)

    def tau_inverse(self, s):
        if self.n == 0:
            return np.asarray(s, dtype=float) + 0.0
        return self._cq.inverse(s)

    def grad_tau(self, t):
        """Base-point gradient of tau at flow time t, shape (..., 2)."""
        if self.n == 0:
            t = np.asarray(t, dtype=float)
            return np.zeros(t.shape + (2,))
        cg1, cg2 = self._cq_grad
        return np.stack([cg1.value(t), cg2.value(t)], axis=-1)

    def theta(self, s):
        """Theta at renormalized time s: D F^n times the shear correction."""
        if self.n == 0:
            if np.ndim(s) == 0:
                return np.eye(2)
            return np.tile(np.eye(2), np.shape(s) + (1, 1))
        t = self.tau_inverse(s)
        grad = self.grad_tau(t)
        if np.ndim(s) == 0:
            A = np.eye(2) + np.outer(self._V0, grad) / self.nu
            return self._Dn @ A
        A = np.eye(2) + (self._V0[:, None] * grad[..., None, :]) / self.nu
        return self._Dn @ A

    def theta_det(self, s):
        """Determinant of the shear correction alone (must stay nonzero)."""
        t = self.tau_inverse(s)
        grad = self.grad_tau(t)
        return 1.0 + float(grad @ self._V0) / self.nu


def cocycle(vf, p, n, t_max=4.0, tol=1e-12, quad_tol=1e-11):
    """Build CocycleData at p for n map steps, valid for flow times in
    [0, t_max].

    nu_n is the signed alignment factor (SignError when nonpositive);
    tau_n by adaptive quadrature of nu_n along the dense trajectory;
    grad tau_n by quadrature of the closed-form nu_n gradient, carried
    back to the base point through the variational matrix.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    xy = as_xy(p).reshape(2)
    if n == 0:
        return CocycleData(vf, p, 0, t_max, 1.0, np.eye(2), eval_V(vf, xy),
                           None, None)

    def rhs(tt, y):  # noqa: ARG001
        z = y[0:2]
        J = y[2:6].reshape(2, 2)
        # depth 32 leaves DV truncation near 1e-10, far under the law tols
        V, DV = field_pair(vf, z, depth=32)
        out = np.empty(6)
        out[0:2] = V
        out[2:6] = (DV @ J).ravel()
        return out

    y0 = np.concatenate([xy, np.eye(2).ravel()])
    sol = solve_batched(rhs, y0, t_max, rtol=tol, atol=tol, dense=True,
                        method=default_method(vf, t_max))
    path = DensePath(sol, (6,))

    def nu_at(ts):
        return nu_product(vf, path(ts)[..., 0:2], n)

    def grad_component(k):
        def f(ts):
            st = np.atleast_2d(path(ts))
            J = st[:, 2:6].reshape(-1, 2, 2)
            _, gnu = nu_gradient(vf, st[:, 0:2], n)
            return np.einsum("ni,nik->nk", gnu, J)[:, k]

        return f

    cq = CumulativeQuadrature(nu_at, path.breakpoints, tol=quad_tol)
    cq_grad = tuple(
        CumulativeQuadrature(grad_component(k), path.breakpoints,
                             tol=quad_tol) for k in range(2)
    )
    nu = float(nu_product(vf, xy, n).reshape(-1)[0])
    Dn = np.eye(2)
    z = xy
    for _ in range(n):
        Dn = torus.jacobian(vf.base, z) @ Dn
        z = torus.apply_map(vf.base, z)
    return CocycleData(vf, TorusPoint.from_array(xy), n, t_max, nu, Dn,
                       eval_V(vf, xy), cq, cq_grad)


def tau_inverse(cd: CocycleData, s):
    """Solve tau_n(x, t) = s for t on the data's valid range."""
    return cd.tau_inverse(s)


# -- rotation number ---------------------------------------------------------

@dataclass(frozen=True)
class RotationResult:
    """Birkhoff rotation number of the section return map plus the quadratic
    residual diagnostic minimized over integer shifts."""

    rho: float
    residual: float
    best_shift: int
    n_returns: int
    coeffs: tuple  # (b, a - d, -c) of the quadratic in omega

    def residual_at(self, k):
        b, m, c = self.coeffs
        w = self.rho + k
        return abs(b * w * w + m * w + c)


def rotation_number(vf, section_axis=0, n_returns=1000, tol=1e-11,
                    start=(0.0, 0.0), shift_window=5):
    """Rotation number across the coordinate circle {x_axis = 0}.

    The orbit is parametrized as a graph over the lifted section coordinate
    (valid because |V_axis| stays above 0.1, checked on a grid); crossings
    are read off at integer parameter values, and the rotation number is the
    average displacement of the other coordinate per crossing, mod 1.
    """
    other = 1 - section_axis
    u = np.arange(48) / 48.0
    g = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
    Vg = eval_V(vf, g)
    if np.min(np.abs(Vg[:, section_axis])) <= 0.1:
        raise TransversalityFailure(
            "field too tangent to the section circle for a graph parametrization"
        )
    direction = 1.0 if Vg[0, section_axis] > 0 else -1.0

    def rhs(uu, yy):
        pos = np.empty(2)
        pos[section_axis] = uu
        pos[other] = yy[0]
        V = eval_V(vf, wrap(pos))
        return np.array([V[other] / V[section_axis]])

    xy0 = as_xy(start).reshape(2)
    sol = solve_batched(rhs, np.array([xy0[other]]),
                        direction * float(n_returns), rtol=tol, atol=tol)
    y_end = sol.y[0, -1]
    rho = ((y_end - xy0[other]) / (direction * n_returns)) % 1.0
    (a, b), (c, d) = vf.base.linear
    coeffs = (float(b), float(a - d), float(-c))
    best_k, best_r = 0, np.inf
    for k in range(-shift_window, shift_window + 1):
        w = rho + k
        r = abs(coeffs[0] * w * w + coeffs[1] * w + coeffs[2])
        if r < best_r:
            best_k, best_r = k, r
    return RotationResult(float(rho), float(best_r), best_k, n_returns, coeffs)
