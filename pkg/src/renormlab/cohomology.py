"""Cohomological equation: exact solver, windowed primitives, regularity.

For the unperturbed map the equation pairing the flow direction with an
unknown gradient is solved exactly in Fourier space; the divisors are
controlled by the badly-approximable slope, and small_divisor_profile
reports their worst products.  For any map the windowed primitive pairs
a mollifier in renormalized time against the orbit integral; its
directional derivative along the flow reproduces the observable up to a
defect carrying the n-step contraction factor, and the full gradient is
assembled from the mollifier-derivative term plus the pushed gradient
term rather than by differencing grid values.
"""

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MeanNotZero, ObstructionNonzero
from .flow import eval_V, nu_product
from .functionals import Mollifier, fit_power_law, n_T, renormalized_average
from .numerics import gauss_nodes
from .observables import Observable
from .torus import as_xy

TWO_PI = 2.0 * np.pi


# -- exact solver for the constant-field case --------------------------------

def fourier_solve(g: Observable, V, tol=1e-12):
    """Solve the directional-derivative equation for a trig polynomial.

    Each coefficient is divided by the mode's pairing with the constant
    field; the constant coefficient of the solution is pinned to zero.
    A nonzero input mean is the trivial obstruction and raises.
    """
    V = np.asarray(V, dtype=float).reshape(2)
    if abs(g.mean) > tol:
        raise MeanNotZero(
            f"input mean {g.mean:.3e} exceeds {tol:.1e}; no primitive exists")
    out = {}
    for k, c in g.coeffs.items():
        if k == (0, 0):
            continue
        div = TWO_PI * (V[0] * k[0] + V[1] * k[1])
        if div == 0.0:
            raise MeanNotZero(f"mode {k} pairs to zero with the field")
        out[k] = -1j * c / div
    return Observable(out)


@dataclass(frozen=True)
class SmallDivisorProfile:
    """Scan of |k1 + omega k2| weighted by the size of k.

    Products are tabulated in both norms.  For the golden slope the
    Euclidean products stay above 0.85 on the whole lattice, while the
    sup-norm products dip to 1/phi = 0.618 at the single mode (1, 1)
    before settling into the 0.72 approximant regime; min_product refers
    to the Euclidean column, min_product_inf to the sup-norm one.
    """

    omega: float
    k_max: int
    ks: np.ndarray            # (N, 2) int
    divisors: np.ndarray      # (N,) |k1 + omega k2|
    products_inf: np.ndarray  # (N,) ||k||_inf * divisor
    products: np.ndarray      # (N,) ||k||_2 * divisor

    @property
    def min_product(self):
        return float(self.products.min())

    @property
    def min_product_inf(self):
        return float(self.products_inf.min())

    @property
    def argmin_k(self):
        i = int(self.products.argmin())
        return (int(self.ks[i, 0]), int(self.ks[i, 1]))

    @property
    def argmin_k_inf(self):
        i = int(self.products_inf.argmin())
        return (int(self.ks[i, 0]), int(self.ks[i, 1]))

    def row(self, k):
        """Divisor and sup-norm product for one frequency pair."""
        hit = np.all(self.ks == np.asarray(k, dtype=int), axis=1)
        i = int(np.nonzero(hit)[0][0])
        return float(self.divisors[i]), float(self.products_inf[i])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("k1,k2,divisor,product_inf,product_euclid\n")
        for (k1, k2), d, pi, pe in zip(self.ks, self.divisors,
                                       self.products_inf, self.products):
            buf.write(f"{int(k1)},{int(k2)},{d:.16e},{pi:.16e},{pe:.16e}\n")
        return buf.getvalue()


def small_divisor_profile(omega, k_max):
    """Worst pairing products over the half lattice up to sup norm k_max.

    Only one member of each +/-k pair is scanned (the divisor is even
    under negation) and k = 0 is excluded.
    """
    omega = float(omega)
    rng = np.arange(-k_max, k_max + 1)
    k1, k2 = np.meshgrid(rng, rng, indexing="ij")
    ks = np.stack([k1.ravel(), k2.ravel()], axis=1)
    keep = (ks[:, 0] > 0) | ((ks[:, 0] == 0) & (ks[:, 1] > 0))
    ks = ks[keep]
    divisors = np.abs(ks[:, 0] + omega * ks[:, 1])
    sup = np.max(np.abs(ks), axis=1)
    euclid = np.hypot(ks[:, 0], ks[:, 1])
    return SmallDivisorProfile(omega, int(k_max), ks, divisors,
                               sup * divisors, euclid * divisors)


# -- mollified primitive ------------------------------------------------------

def constant_speed_field(vf):
    """The field vector when it is spatially constant, else None."""
    u = (np.arange(5) + 0.3) / 5.0
    g1, g2 = np.meshgrid(u, u, indexing="ij")
    pts = np.stack([g1, g2], axis=-1).reshape(-1, 2)
    vals = eval_V(vf, pts)
    if np.ptp(vals[:, 0]) < 1e-13 and np.ptp(vals[:, 1]) < 1e-13:
        return vals[0].copy()
    return None


def _panel_nodes(a, b, panels, order):
    gx, gw = gauss_nodes(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    ts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    ws = (half[:, None] * gw[None, :]).ravel()
    return ts, ws


def _mode_integral(profile, rate, freq, upper, per_osc=8, order=10):
    """Integral of profile(rate t) e^{2 pi i freq t} over [0, upper]."""
    oscillations = abs(freq) * upper
    panels = int(max(48, np.ceil(per_osc * oscillations)))
    panels = min(panels, 400_000)
    ts, ws = _panel_nodes(0.0, upper, panels, order)
    vals = profile(rate * ts) * np.exp(2j * np.pi * freq * ts)
    return complex(np.sum(vals * ws))


@dataclass(frozen=True)
class CoboundaryEstimate:
    """Windowed primitive sampled on a uniform grid, with references."""

    points: np.ndarray        # (K, K, 2)
    values: np.ndarray        # (K, K)
    horizon: float
    level: int
    reference: object         # Observable or None
    affine_coeffs: object     # (intercept, slope) or None
    affine_residual: object   # float or None

    def to_csv(self):
        buf = io.StringIO()
        buf.write("x1,x2,value\n")
        P = self.points.reshape(-1, 2)
        V = self.values.reshape(-1)
        for (x1, x2), v in zip(P, V):
            buf.write(f"{x1:.16e},{x2:.16e},{v:.16e}\n")
        return buf.getvalue()


def _uniform_grid(K):
    u = np.arange(K) / K
    g1, g2 = np.meshgrid(u, u, indexing="ij")
    return np.stack([g1, g2], axis=-1)


def _check_obstructions(g, functionals, tol):
    if functionals:
        bad = [abs(complex(f(g))) for f in functionals]
        if max(bad) > tol:
            warnings.warn(
                f"obstruction values up to {max(bad):.3e}; primitive not "
                "expected bounded", ObstructionNonzero, stacklevel=3)
            return False
        return True
    mean = getattr(g, "mean", None)
    if mean is not None and abs(mean) > tol:
        warnings.warn(
            f"input mean {mean:.3e} is the trivial obstruction",
            ObstructionNonzero, stacklevel=3)
        return False
    return True


def _linear_mode_data(vf, g, T, chi, level):
    """Per-mode window integrals for the constant-field fast path."""
    V = constant_speed_field(vf)
    rate = float(nu_product(vf, np.zeros((1, 2)), 1)[0]) ** level
    upper = min(float(T), 1.0 / rate)
    ks, cs, ints = [], [], []
    for k, c in g.coeffs.items():
        freq = V[0] * k[0] + V[1] * k[1]
        ks.append(k)
        cs.append(c)
        ints.append(_mode_integral(chi, rate, freq, upper))
    return V, rate, np.array(ks, dtype=float), np.array(cs), np.array(ints)


def _linear_values(pts, ks, cs, ints):
    phases = np.exp(2j * np.pi * (pts @ ks.T))
    return -np.real(phases @ (cs * ints))


def coboundary_estimate(vf, g, T, grid=32, chi=None, functionals=None,
                        obstruction_tol=1e-8, tol=1e-9, compare="auto"):
    """Windowed primitive of g on a uniform grid with a solver reference.

    The window is the mollifier of renormalized time at the level set by
    the horizon T.  With a constant field the orbit integrals reduce to
    per-mode line integrals and the exact solver is evaluated alongside;
    the report then carries the affine fit (intercept frees the additive
    constant) and its max residual.  Obstructions only warn.
    """
    chi = chi if chi is not None else Mollifier(0.5)
    _check_obstructions(g, functionals, obstruction_tol)
    level = n_T(vf, T)
    pts = _uniform_grid(int(grid))
    const = constant_speed_field(vf)
    reference = None
    coeffs = None
    resid = None
    if const is not None:
        V, rate, ks, cs, ints = _linear_mode_data(vf, g, T, chi, level)
        values = _linear_values(pts, ks, cs, ints)
        if compare in ("auto", "fourier") and abs(g.mean) <= obstruction_tol:
            reference = fourier_solve(g, V)
            ref_vals = reference(pts)
            A = np.stack([np.ones(ref_vals.size), ref_vals.ravel()], axis=1)
            sol, *_ = np.linalg.lstsq(A, values.ravel(), rcond=None)
            coeffs = (float(sol[0]), float(sol[1]))
            resid = float(np.max(np.abs(values.ravel() - A @ sol)))
    else:
        flat = pts.reshape(-1, 2)
        values = renormalized_average(
            vf, g, T, chi, flat, n=level, tol=tol).reshape(pts.shape[:-1])
    return CoboundaryEstimate(pts, values, float(T), level, reference,
                              coeffs, resid)


def coboundary_defect(vf, g, T, points, chi=None):
    """Pointwise defect of the flow derivative of the windowed primitive.

    Equals the directional derivative along the field minus g itself:
    the n-step contraction factor times the window-derivative integral.
    Constant-field path only; the factor makes it geometrically small.
    """
    chi = chi if chi is not None else Mollifier(0.5)
    const = constant_speed_field(vf)
    if const is None:
        raise NotImplementedError("defect evaluation needs a constant field")
    level = n_T(vf, T)
    pts = np.atleast_2d(as_xy(points))
    V, rate, ks, cs, ints_unused = _linear_mode_data(vf, g, T, chi, level)
    upper = min(float(T), 1.0 / rate)
    ints = np.array([
        _mode_integral(chi.derivative, rate, V[0] * k[0] + V[1] * k[1],
                       upper) for k in ks
    ])
    phases = np.exp(2j * np.pi * (pts @ ks.T))
    return rate * np.real(phases @ (cs * ints))


def _linear_gradient_sup(vf, g, T, chi, level, grid):
    V, rate, ks, cs, ints = _linear_mode_data(vf, g, T, chi, level)
    pts = _uniform_grid(int(grid))
    phases = np.exp(2j * np.pi * (pts @ ks.T))
    weights = cs * ints * 2j * np.pi
    gx = -np.real(phases @ (weights * ks[:, 0]))
    gy = -np.real(phases @ (weights * ks[:, 1]))
    return float(np.max(np.hypot(gx, gy)))


def _general_gradient(vf, g, T, x, chi, level, tol):
    """Gradient of the windowed primitive at one point, assembled.

    First term pushes the observable's gradient through the variational
    matrix under the window; second term pairs the window derivative with
    the base gradient of the reparametrized time, never differencing the
    primitive itself.
    """
    from .flow import cocycle, field_pair
    from .numerics import solve_batched

    cd = cocycle(vf, x, level, t_max=float(T), tol=max(tol, 1e-11))
    t_up = min(float(T), float(cd.tau_inverse(1.0)))
    panels = int(max(48, np.ceil(6 * t_up)))
    ts, ws = _panel_nodes(0.0, t_up, panels, 8)

    xy = as_xy(x).reshape(2)

    def rhs(tt, y):  # noqa: ARG001
        z = y[0:2]
        J = y[2:6].reshape(2, 2)
        V, DV = field_pair(vf, z, depth=32)
        out = np.empty(6)
        out[0:2] = V
        out[2:6] = (DV @ J).ravel()
        return out

    y0 = np.concatenate([xy, np.eye(2).ravel()])
    sol = solve_batched(rhs, y0, float(ts[-1]), rtol=max(tol, 1e-11),
                        atol=max(tol, 1e-11), method="DOP853", t_eval=ts)
    st = sol.y.T.reshape(-1, 6)
    pos = st[:, 0:2]
    J = st[:, 2:6].reshape(-1, 2, 2)
    tau = cd.tau(ts)
    gvals = g(wrap(pos))
    ggrad = g.gradient(wrap(pos))
    term1 = np.einsum("n,nji,nj,n->i", chi(tau), J, ggrad, ws)
    term2 = np.einsum("n,ni,n,n->i", chi.derivative(tau), cd.grad_tau(ts),
                      gvals, ws)
    return -(term1 + term2)


def lipschitz_diagnostic(vf, g, T_list, grid=16, chi=None, functionals=None,
                         obstruction_tol=1e-8, tol=1e-9, slope_cap=0.05):
    """Boundedness trend of the windowed primitive's gradient.

    Sups of the assembled gradient over the grid are collected for each
    horizon; the fitted log-log slope against the cap gives the verdict.
    The affine residual against the exact solver rides along when the
    field is constant.  Returns a JSON-ready dict.
    """
    chi = chi if chi is not None else Mollifier(0.5)
    clean = _check_obstructions(g, functionals, obstruction_tol)
    T_list = [float(T) for T in T_list]
    const = constant_speed_field(vf)
    sups = []
    for T in T_list:
        level = n_T(vf, T)
        if const is not None:
            sups.append(_linear_gradient_sup(vf, g, T, chi, level, grid))
        else:
            pts = _uniform_grid(int(grid)).reshape(-1, 2)
            norms = [np.linalg.norm(
                _general_gradient(vf, g, T, x, chi, level, tol))
                for x in pts]
            sups.append(float(np.max(norms)))
    if np.max(sups) < 1e-14:
        slope = 0.0
    else:
        slope = float(fit_power_law(np.array(T_list), np.array(sups))[0])
    affine = None
    if const is not None and abs(g.mean) <= obstruction_tol:
        est = coboundary_estimate(vf, g, max(T_list), grid=grid, chi=chi,
                                  functionals=functionals,
                                  obstruction_tol=obstruction_tol)
        affine = est.affine_residual
    return {
        "bounded": bool(slope <= slope_cap),
        "sup_values": sups,
        "horizons": T_list,
        "fitted_slope": slope,
        "affine_residual": affine,
        "obstructions_clean": bool(clean),
    }
