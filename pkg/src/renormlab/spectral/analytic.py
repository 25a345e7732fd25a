"""Closed-form spectral data of the unperturbed weighted transfer step.

For the pure linear map the base and fiber dynamics decouple and the fiber
operator acts on functions of the slope alone as

    (L f)(s) = (d - b s) * f(psi_inv(s)),

with psi the forward Moebius slope action.  Its point spectrum on analytic
functions of s is the geometric family nu^(2p-1) for p = 0, 1, 2, ... where
nu is the contraction factor of the linear map; the eigenfunctions are
(s - s*)^p times an explicit infinite product that converges geometrically
because the backward slope orbit approaches the fixed slope s* at rate
nu^2 per step.
"""

from __future__ import annotations

import numpy as np

from .. import torus
from .extension import linear_fiber_map_inverse


def contraction_factor(spec):
    """The modulus-smaller eigenvalue of the linear part."""
    (a, b), (c, d) = spec.linear
    tr = a + d
    return (tr - np.sqrt(tr * tr - 4.0)) / 2.0


def analytic_linear_spectrum(spec, k_max=8):
    """Eigenvalues nu^(2p-1), p = 0..k_max, largest first."""
    nu = contraction_factor(spec)
    return np.array([nu ** (2 * p - 1) for p in range(k_max + 1)])


def analytic_eigenfunction(spec, p, s, k_trunc=200):
    """Eigenfunction of the fiber operator for eigenvalue nu^(2p-1).

    Evaluates (s - s*)^p times the truncated product
    prod_{j=0}^{k_trunc} [nu (d - b psi^{-j}(s))]^(1-p), normalized so the
    regular factor is 1 at the fixed slope.  For p = 1 the product is empty
    and the eigenfunction is exactly s - s*.
    """
    if k_trunc < 50:
        raise ValueError("k_trunc must be at least 50")
    (a, b), (c, d) = spec.linear
    nu = contraction_factor(spec)
    s_star = torus.linear_slopes(spec)[0]
    s = np.asarray(s, dtype=float)
    log_m = np.zeros_like(s)
    if p != 1:
        cur = s.copy()
        for _ in range(k_trunc + 1):
            log_m += np.log(nu * (d - b * cur))
            cur = linear_fiber_map_inverse(spec, cur)
    out = (s - s_star) ** p * np.exp((1 - p) * log_m)
    return float(out) if out.ndim == 0 else out
