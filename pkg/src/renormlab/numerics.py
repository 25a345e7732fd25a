"""Shared numerical infrastructure.

Thin wrappers around scipy's adaptive integrators plus quadrature helpers
used by the flow and functional layers:

  * batched initial value solves with dense output or checkpoint evaluation;
  * vectorized adaptive Gauss quadrature;
  * CumulativeQuadrature, a prefix-integral table for a positive integrand
    supporting vectorized evaluation and inversion.  This is the workhorse
    behind reparametrized times and their inverses.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from .errors import NonConvergence, StepUnderflow

_GAUSS_CACHE = {}


def gauss_nodes(n):
    """Gauss-Legendre nodes and weights on [-1, 1], cached."""
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = leggauss(n)
    return _GAUSS_CACHE[n]


def solve_batched(rhs, y0, t_end, rtol=1e-10, atol=None, method="RK45",
                  dense=False, t_eval=None, args=()):
    """Integrate dy/dt = rhs(t, y) for a flat state vector.

    rhs must accept and return arrays of shape (len(y0),).  Returns the
    scipy solution object; raises StepUnderflow when the stepper gives up.
    Negative t_end integrates backward.
    """
    y0 = np.asarray(y0, dtype=float).ravel()
    if atol is None:
        atol = rtol
    if t_end == 0.0:
        # degenerate span: synthesize a constant solution
        class _Const:
            t = np.array([0.0])
            y = y0.reshape(-1, 1)
            status = 0

            def sol(self, t):  # noqa: ARG002 - mimic OdeSolution
                return y0.copy()

        return _Const()
    sol = solve_ivp(
        rhs, (0.0, t_end), y0, method=method, rtol=rtol, atol=atol,
        dense_output=dense, t_eval=t_eval, args=args,
    )
    if sol.status == -1:
        raise StepUnderflow(sol.message)
    if not sol.success:
        raise NonConvergence(f"integration failed: {sol.message}")
    return sol


class DensePath:
    """Dense solution of a batched solve, reshaped to (..., state_shape)."""

    def __init__(self, sol, state_shape):
        self._sol = sol
        self.state_shape = tuple(state_shape)
        self.t_min = float(np.min(sol.t))
        self.t_max = float(np.max(sol.t))
        self.breakpoints = np.array(sol.t, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        # guard endpoint roundoff
        tq = np.clip(tq, min(self.t_min, self.t_max), max(self.t_min, self.t_max))
        vals = self._sol.sol(tq)  # (flat_state, nq)
        out = np.moveaxis(vals, -1, 0).reshape((len(tq),) + self.state_shape)
        if scalar:
            return out[0]
        return out


def quad_vectorized(f, a, b, tol=1e-12, max_depth=14, order=16):
    """Adaptive Gauss quadrature of a vectorized scalar integrand.

    f maps an array of nodes to an array of values.  Intervals whose
    high/low order estimates disagree are bisected; each refinement sweep
    evaluates f once on all pending nodes.
    """
    if b == a:
        return 0.0
    xs_hi, ws_hi = gauss_nodes(order)
    xs_lo, ws_lo = gauss_nodes(order // 2)
    lo = np.array([min(a, b)], dtype=float)
    hi = np.array([max(a, b)], dtype=float)
    total = 0.0
    for depth in range(max_depth):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        nodes_hi = mid[:, None] + half[:, None] * xs_hi
        nodes_lo = mid[:, None] + half[:, None] * xs_lo
        vals = f(np.concatenate([nodes_hi.ravel(), nodes_lo.ravel()]))
        v_hi = vals[: nodes_hi.size].reshape(nodes_hi.shape)
        v_lo = vals[nodes_hi.size:].reshape(nodes_lo.shape)
        I_hi = half * (v_hi @ ws_hi)
        I_lo = half * (v_lo @ ws_lo)
        err = np.abs(I_hi - I_lo)
        budget = tol * (hi - lo) / abs(b - a)
        done = (err <= budget) | (half <= 1e-15)
        total += float(np.sum(I_hi[done]))
        if np.all(done):
            break
        lo_p, hi_p = lo[~done], hi[~done]
        mid_p = 0.5 * (lo_p + hi_p)
        lo = np.concatenate([lo_p, mid_p])
        hi = np.concatenate([mid_p, hi_p])
    else:
        raise NonConvergence("adaptive quadrature exceeded refinement depth")
    return total if b > a else -total


class CumulativeQuadrature:
    """Prefix integrals of a positive vectorized integrand on [a, b].

    Construction refines an initial partition until per-segment Gauss
    estimates of two orders agree.  value(t) returns the integral from a,
    vectorized; inverse(s) solves value(t) = s by safeguarded Newton.
    """

    def __init__(self, f, breakpoints, tol=1e-12, order=16):
        pts = np.unique(np.asarray(breakpoints, dtype=float))
        if len(pts) < 2:
            raise ValueError("need at least two breakpoints")
        self.f = f
        self.a = float(pts[0])
        self.b = float(pts[-1])
        xs_hi, ws_hi = gauss_nodes(order)
        xs_lo, ws_lo = gauss_nodes(order // 2)
        lo, hi = pts[:-1].copy(), pts[1:].copy()
        seg_lo, seg_int = [], []
        span = self.b - self.a
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            nodes_hi = mid[:, None] + half[:, None] * xs_hi
            nodes_lo = mid[:, None] + half[:, None] * xs_lo
            vals = f(np.concatenate([nodes_hi.ravel(), nodes_lo.ravel()]))
            v_hi = vals[: nodes_hi.size].reshape(nodes_hi.shape)
            v_lo = vals[nodes_hi.size:].reshape(nodes_lo.shape)
            I_hi = half * (v_hi @ ws_hi)
            I_lo = half * (v_lo @ ws_lo)
            err = np.abs(I_hi - I_lo)
            done = (err <= tol * (hi - lo) / span) | (half <= 1e-15)
            seg_lo.append(lo[done])
            seg_int.append(I_hi[done])
            if np.all(done):
                break
            lo_p, hi_p = lo[~done], hi[~done]
            mid_p = 0.5 * (lo_p + hi_p)
            lo = np.concatenate([lo_p, mid_p])
            hi = np.concatenate([mid_p, hi_p])
        else:
            raise NonConvergence("cumulative quadrature failed to refine")
        seg_lo = np.concatenate(seg_lo)
        seg_int = np.concatenate(seg_int)
        order_idx = np.argsort(seg_lo)
        self.edges = np.append(seg_lo[order_idx], self.b)
        self.prefix = np.concatenate([[0.0], np.cumsum(seg_int[order_idx])])
        self._xs8, self._ws8 = gauss_nodes(8)

    @property
    def total(self):
        return float(self.prefix[-1])

    def value(self, t):
        """Integral of f from a to t; t may be an array."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.clip(np.atleast_1d(t), self.a, self.b)
        idx = np.clip(np.searchsorted(self.edges, tq, side="right") - 1,
                      0, len(self.edges) - 2)
        t0 = self.edges[idx]
        mid = 0.5 * (t0 + tq)
        half = 0.5 * (tq - t0)
        nodes = mid[:, None] + half[:, None] * self._xs8
        vals = self.f(nodes.ravel()).reshape(nodes.shape)
        partial = half * (vals @ self._ws8)
        out = self.prefix[idx] + partial
        if scalar:
            return float(out[0])
        return out

    def inverse(self, s, tol=1e-13, max_iter=60):
        """Solve value(t) = s for increasing value (positive integrand)."""
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        sq = np.atleast_1d(s).astype(float)
        if np.any(sq < -1e-9 * max(1.0, self.total)) or np.any(
                sq > self.total * (1 + 1e-9) + 1e-9):
            raise ValueError("inverse target outside the accumulated range")
        sq = np.clip(sq, 0.0, self.total)
        idx = np.clip(np.searchsorted(self.prefix, sq, side="right") - 1,
                      0, len(self.edges) - 2)
        lo = self.edges[idx].copy()
        hi = self.edges[idx + 1].copy()
        t = 0.5 * (lo + hi)
        scale = max(1.0, self.total)
        for _ in range(max_iter):
            g = self.value(t) - sq
            lo = np.where(g <= 0, t, lo)
            hi = np.where(g > 0, t, hi)
            if np.max(np.abs(g)) < tol * scale or np.max(hi - lo) < 1e-14:
                break
            deriv = self.f(t)
            step = np.where(deriv > 0, g / np.where(deriv > 0, deriv, 1.0), 0.0)
            t_new = t - step
            bad = (t_new <= lo) | (t_new >= hi) | ~np.isfinite(t_new)
            t = np.where(bad, 0.5 * (lo + hi), t_new)
        out = t
        if scalar:
            return float(out[0])
        return out


class MultiCumulativeQuadrature:
    """Shared-node prefix integrals for several positive integrands at once.

    f maps a 1-D node array to values of shape (n_nodes, C).  All channels
    share one partition, refined until every channel's two-order Gauss
    estimates agree.  Used for families of time changes along one
    trajectory, where the integrand channels share an expensive orbit sweep.
    """

    def __init__(self, f, breakpoints, n_channels, tol=1e-12, order=16):
        pts = np.unique(np.asarray(breakpoints, dtype=float))
        self.f = f
        self.C = n_channels
        self.a = float(pts[0])
        self.b = float(pts[-1])
        xs_hi, ws_hi = gauss_nodes(order)
        xs_lo, ws_lo = gauss_nodes(order // 2)
        lo, hi = pts[:-1].copy(), pts[1:].copy()
        seg_lo, seg_int = [], []
        span = self.b - self.a
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            nodes_hi = mid[:, None] + half[:, None] * xs_hi
            nodes_lo = mid[:, None] + half[:, None] * xs_lo
            vals = f(np.concatenate([nodes_hi.ravel(), nodes_lo.ravel()]))
            v_hi = vals[: nodes_hi.size].reshape(nodes_hi.shape + (self.C,))
            v_lo = vals[nodes_hi.size:].reshape(nodes_lo.shape + (self.C,))
            I_hi = half[:, None] * np.einsum("snc,n->sc", v_hi, ws_hi)
            I_lo = half[:, None] * np.einsum("snc,n->sc", v_lo, ws_lo)
            err = np.max(np.abs(I_hi - I_lo), axis=1)
            done = (err <= tol * (hi - lo) / span) | (half <= 1e-15)
            seg_lo.append(lo[done])
            seg_int.append(I_hi[done])
            if np.all(done):
                break
            lo_p, hi_p = lo[~done], hi[~done]
            mid_p = 0.5 * (lo_p + hi_p)
            lo = np.concatenate([lo_p, mid_p])
            hi = np.concatenate([mid_p, hi_p])
        else:
            raise NonConvergence("cumulative quadrature failed to refine")
        seg_lo = np.concatenate(seg_lo)
        seg_int = np.concatenate(seg_int, axis=0)
        order_idx = np.argsort(seg_lo)
        self.edges = np.append(seg_lo[order_idx], self.b)
        self.prefix = np.concatenate(
            [np.zeros((1, self.C)), np.cumsum(seg_int[order_idx], axis=0)], axis=0)
        self._xs8, self._ws8 = gauss_nodes(8)

    def value(self, t):
        """All channel integrals from a to t; shape (C,) or (len(t), C)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.clip(np.atleast_1d(t), self.a, self.b)
        idx = np.clip(np.searchsorted(self.edges, tq, side="right") - 1,
                      0, len(self.edges) - 2)
        t0 = self.edges[idx]
        mid = 0.5 * (t0 + tq)
        half = 0.5 * (tq - t0)
        nodes = mid[:, None] + half[:, None] * self._xs8
        vals = self.f(nodes.ravel()).reshape(nodes.shape + (self.C,))
        partial = half[:, None] * np.einsum("qnc,n->qc", vals, self._ws8)
        out = self.prefix[idx] + partial
        if scalar:
            return out[0]
        return out

    def inverse(self, s, channel, tol=1e-13, max_iter=60):
        """Solve value(t)[channel] = s."""
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        total = self.prefix[-1, channel]
        sq = np.clip(np.atleast_1d(s).astype(float), 0.0, total)
        idx = np.clip(
            np.searchsorted(self.prefix[:, channel], sq, side="right") - 1,
            0, len(self.edges) - 2)
        lo = self.edges[idx].copy()
        hi = self.edges[idx + 1].copy()
        t = 0.5 * (lo + hi)
        scale = max(1.0, float(total))
        for _ in range(max_iter):
            g = self.value(t)[:, channel] - sq
            lo = np.where(g <= 0, t, lo)
            hi = np.where(g > 0, t, hi)
            if np.max(np.abs(g)) < tol * scale or np.max(hi - lo) < 1e-14:
                break
            deriv = self.f(t)[:, channel]
            step = np.where(deriv > 0, g / np.where(deriv > 0, deriv, 1.0), 0.0)
            t_new = t - step
            bad = (t_new <= lo) | (t_new >= hi) | ~np.isfinite(t_new)
            t = np.where(bad, 0.5 * (lo + hi), t_new)
        if scalar:
            return float(t[0])
        return t
