"""Orbit traces of the weighted transfer step and the resonance pipeline.

The trace of the n-step operator is a sum over the fixed points of the
n-fold map.  Each base periodic orbit carries a unique fiber fixed slope
(the backward slope action around the loop is a uniform contraction); the
loop weight W, the fiber expansion W^2 and the base stability determinant
combine into

    T_n = sum over fixed points of  W^3 / (|det(1 - DF^n)| (W^2 - 1)).

Speed-profile factors telescope around a loop, so traces depend only on
the map, not on the field normalization.  From the truncated trace
sequence the Fredholm-style determinant is built by the standard
recursion, and resonances are read off as reciprocals of its roots, kept
only when stable across truncation orders.

Traces grow like the entropy exponential while high determinant
coefficients decay faster than geometrically, so the recursion loses the
small coefficients to rounding in double precision; traces, recursion and
root finding therefore run in 80-bit extended precision, which keeps the
third resonance of the unperturbed map accurate to better than 1e-6 at
truncation order 10.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .. import torus
from ..errors import FiberNonConvergence

LD = np.longdouble
TWO_PI_LD = LD("6.283185307179586476925286766559")


def _jacobian_ld(spec, X):
    """Derivative matrices in extended precision; X has shape (..., 2)."""
    (a, b), (c, d) = spec.linear
    J = np.zeros(X.shape[:-1] + (2, 2), dtype=LD)
    J[..., 0, 0] = a
    J[..., 0, 1] = b
    J[..., 1, 0] = c
    J[..., 1, 1] = d
    if spec.alpha:
        corr = LD(spec.alpha) * np.cos(TWO_PI_LD * X[..., 0].astype(LD))
        J[..., 0, 0] -= corr
        J[..., 1, 0] -= corr
    return J


def _loop_slopes(espec, X, tol=1e-13, max_sweeps=200):
    """Fiber fixed slopes along a batch of cycles of equal length.

    X has shape (n_orb, d, 2); the backward slope action is swept around
    each loop until the slope at position 0 settles, then one recording
    sweep stores the converged slope at every loop position.  Returns the
    (n_orb, d) slopes and the matching extended-precision Jacobians.
    """
    n_orb, d = X.shape[:2]
    jac = _jacobian_ld(espec.base, X)
    # inverse via the unit determinant of the family
    jac_inv = np.empty_like(jac)
    jac_inv[..., 0, 0] = jac[..., 1, 1]
    jac_inv[..., 0, 1] = -jac[..., 0, 1]
    jac_inv[..., 1, 0] = -jac[..., 1, 0]
    jac_inv[..., 1, 1] = jac[..., 0, 0]
    mid = 0.5 * (espec.lo + espec.hi)
    s0 = np.full(n_orb, mid, dtype=LD)
    for _ in range(max_sweeps):
        s = s0
        for j in range(d - 1, -1, -1):
            J = jac_inv[:, j]
            s = (J[:, 1, 0] + J[:, 1, 1] * s) / (J[:, 0, 0] + J[:, 0, 1] * s)
        if np.max(np.abs(s - s0)) < tol:
            s0 = s
            break
        s0 = s
    else:
        raise FiberNonConvergence(
            f"loop slope map did not settle in {max_sweeps} sweeps")
    # extra contracting sweeps squeeze out the last double-precision noise
    for _ in range(3):
        for j in range(d - 1, -1, -1):
            J = jac_inv[:, j]
            s0 = (J[:, 1, 0] + J[:, 1, 1] * s0) / (J[:, 0, 0]
                                                   + J[:, 0, 1] * s0)
    slopes = np.empty((n_orb, d), dtype=LD)
    s = s0
    for j in range(d - 1, -1, -1):
        J = jac_inv[:, j]
        s = (J[:, 1, 0] + J[:, 1, 1] * s) / (J[:, 0, 0] + J[:, 0, 1] * s)
        slopes[:, j] = s
    if np.any(~espec.contains(slopes.astype(float), slack=1e-9)):
        raise FiberNonConvergence("fiber fixed slope left the bracket")
    return slopes, jac


def orbit_trace(espec, n, tol=1e-12, fiber_tol=1e-13):
    """Trace of the n-step weighted transfer operator.

    Periodic orbits are enumerated (with continuation from the linear map
    when the shear is on), grouped by minimal period, and each orbit's
    fiber fixed point, loop weight and stability determinant are
    accumulated with vectorized sweeps in extended precision.  Returns a
    longdouble scalar.
    """
    spec = espec.base
    orbits = torus.periodic_points(spec, n, tol=tol)
    by_period = {}
    for orb in orbits:
        by_period.setdefault(orb.period, []).append(orb)
    total = LD(0.0)
    for d, group in sorted(by_period.items()):
        m = n // d
        X = np.array([orb.point_array() for orb in group])
        slopes, jac = _loop_slopes(espec, X, tol=fiber_tol)
        den = jac[..., 0, 0] + jac[..., 0, 1] * slopes
        w_cycle = np.prod(1.0 / np.abs(den), axis=1)
        W = w_cycle ** m
        mult = np.array([orb.multiplier for orb in group], dtype=LD)
        mult_n = mult
        for _ in range(m - 1):
            mult_n = np.einsum("oij,ojk->oik", mult_n, mult)
        det_term = np.abs(
            (1.0 - mult_n[:, 0, 0]) * (1.0 - mult_n[:, 1, 1])
            - mult_n[:, 0, 1] * mult_n[:, 1, 0])
        contrib = W ** 3 / (det_term * (W * W - 1.0))
        total += d * np.sum(contrib)
    return total


@dataclass(frozen=True)
class TraceSequence:
    """Traces T_1..T_N of the weighted transfer step (extended precision)."""

    ns: tuple
    values: tuple

    @classmethod
    def compute(cls, espec, n_max, tol=1e-12):
        ns = tuple(range(1, n_max + 1))
        vals = tuple(orbit_trace(espec, n, tol=tol) for n in ns)
        return cls(ns, vals)

    def __len__(self):
        return len(self.ns)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "trace"])
            for n, v in zip(self.ns, self.values):
                writer.writerow([n, format(float(v), ".16e")])

    def to_list(self):
        return [float(v) for v in self.values]


def linear_trace_closed_form(spec, n):
    """Geometric closed form of T_n for the unperturbed map."""
    (a, b), (c, d) = spec.linear
    tr = LD(a + d)
    nu = (tr - np.sqrt(tr * tr - 4.0)) / 2.0
    return nu ** (-n) / (1.0 - nu ** (2 * n))


def determinant_coeffs(traces):
    """Coefficients c_0..c_N of the truncated determinant det(1 - zL).

    Built from the trace sequence by the standard recursion
    c_m = -(1/m) sum_{j=1}^{m} T_j c_{m-j}, c_0 = 1, carried in extended
    precision because the high coefficients decay below double rounding
    of the partial sums.
    """
    T = np.asarray(traces.values if isinstance(traces, TraceSequence)
                   else traces, dtype=LD)
    N = len(T)
    if N < 2:
        raise ValueError("need at least two traces")
    c = np.zeros(N + 1, dtype=LD)
    c[0] = 1.0
    for m in range(1, N + 1):
        c[m] = -np.dot(T[:m], c[m - 1::-1]) / m
    return c


def _poly_roots_extended(coeffs):
    """All roots of a polynomial with extended-precision coefficients.

    coeffs are ascending.  Double-precision companion roots seed a
    Durand-Kerner simultaneous iteration carried in extended precision;
    the seeds have the right order of magnitude even where double
    rounding has shifted them, and the iteration is quadratically
    convergent once separated.
    """
    c = np.asarray(coeffs, dtype=LD)
    nz = np.nonzero(c != 0)[0]
    if len(nz) == 0:
        return np.array([], dtype=np.clongdouble)
    c = c[: nz[-1] + 1]
    deg = len(c) - 1
    if deg < 1:
        return np.array([], dtype=np.clongdouble)
    seeds = np.roots(np.asarray(c[::-1], dtype=float))
    z = seeds.astype(np.clongdouble)
    # nudge exact duplicates apart so the pairwise products stay nonzero
    for i in range(1, deg):
        close = np.abs(z[:i] - z[i]) < 1e-12 * (1.0 + np.abs(z[i]))
        if np.any(close):
            z[i] *= np.clongdouble(1.0 + 1e-6 + 1e-6j)
    cc = c.astype(np.clongdouble)
    lead = cc[-1]
    eye = np.eye(deg, dtype=bool)
    for _ in range(200):
        p = np.zeros_like(z)
        for a in cc[::-1]:
            p = p * z + a
        diff = z[:, None] - z[None, :]
        diff[eye] = 1.0
        denom = lead * np.prod(diff, axis=1)
        step = p / denom
        z = z - step
        if np.max(np.abs(step)) <= 1e-18 * np.max(1.0 + np.abs(z)):
            break
    return z


@dataclass(frozen=True)
class SpectralResult:
    """Retained resonances with stability errors and growth exponents."""

    resonances: np.ndarray
    errors: np.ndarray
    alphas: np.ndarray
    method: str
    retention: float
    pq: tuple = None
    traces: tuple = field(default=None)

    def leading(self):
        return self.resonances[0] if len(self.resonances) else None

    def to_json(self):
        items = []
        for rho, err, al in zip(self.resonances, self.errors, self.alphas):
            items.append({"re": float(np.real(rho)), "im": float(np.imag(rho)),
                          "alpha": float(al), "err": float(err)})
        payload = {"resonances": items, "method": self.method,
                   "retention": self.retention}
        if self.pq is not None:
            payload["pq"] = list(self.pq)
        if self.traces is not None:
            payload["traces"] = [float(t) for t in self.traces]
        return json.dumps(payload, sort_keys=True)


def _det_roots(coeffs):
    return _poly_roots_extended(coeffs)


def resonances_from_determinant(coeffs, h_top, stability_rel=1e-4,
                                retention=None, pq=None, lam_est=None,
                                traces=None, method="determinant"):
    """Resonances as reciprocals of determinant roots, stability filtered.

    A root is kept when the next-lower truncation order reproduces it to
    the stated relative tolerance and its reciprocal modulus clears the
    retention floor.  The floor is lam_est^(-min(p, q)) * exp(h_top) when
    an anisotropy order (p, q) is supplied, else 0.05.  Each retained
    resonance carries alpha_i = ln|rho_i| / h_top.
    """
    coeffs = np.asarray(coeffs, dtype=LD)
    if len(coeffs) < 7:
        raise ValueError("need coefficients from at least six traces")
    if retention is None:
        if pq is not None:
            if lam_est is None:
                raise ValueError("pq retention needs lam_est")
            retention = float(np.exp(h_top) * lam_est ** (-min(pq)))
        else:
            retention = 0.05
    roots_hi = _det_roots(coeffs)
    roots_lo = _det_roots(coeffs[:-1])
    rhos, errs = [], []
    for z in roots_hi:
        if z == 0 or len(roots_lo) == 0:
            continue
        rho = 1.0 / z
        if np.abs(rho) < retention:
            continue
        rho_lo = 1.0 / roots_lo[np.argmin(np.abs(roots_lo - z))]
        err = float(np.abs(rho - rho_lo) / np.abs(rho))
        if err <= stability_rel:
            rhos.append(complex(rho))
            errs.append(err)
    order = np.argsort(-np.abs(rhos)) if rhos else np.array([], dtype=int)
    rhos = np.asarray(rhos, dtype=complex)[order]
    errs = np.asarray(errs, dtype=float)[order]
    alphas = np.where(np.abs(rhos) > 0,
                      np.log(np.abs(rhos)) / h_top, -np.inf)
    tr = tuple(traces.values) if isinstance(traces, TraceSequence) else (
        tuple(traces) if traces is not None else None)
    return SpectralResult(rhos, errs, np.asarray(alphas, dtype=float),
                          method, float(retention), pq, tr)


def determinant_pipeline(espec, n_max=10, tol=1e-12, stability_rel=1e-4,
                         retention=None, pq=None):
    """Traces -> determinant -> stability-filtered resonances."""
    traces = TraceSequence.compute(espec, n_max, tol=tol)
    coeffs = determinant_coeffs(traces)
    h_top = torus.topological_entropy(espec.base)
    lam_est = float(np.exp(h_top))
    return resonances_from_determinant(
        coeffs, h_top, stability_rel=stability_rel, retention=retention,
        pq=pq, lam_est=lam_est, traces=traces)
