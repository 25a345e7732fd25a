"""Real trigonometric polynomials on the two-torus.

An observable is stored as a finite set of Fourier coefficients indexed by
integer frequency pairs.  Reality is enforced structurally: coefficients for
k and -k are kept conjugate, so evaluation sums over a half lattice and
returns real values.  Gradients are analytic, not finite differences.
"""

from __future__ import annotations

import json

import numpy as np

TWO_PI = 2.0 * np.pi


def _lex_positive(k):
    """True when the frequency pair is the canonical member of {k, -k}."""
    return k[0] > 0 or (k[0] == 0 and k[1] > 0)


class Observable:
    """Finite Fourier sum g(x) = sum_k c_k exp(2 pi i k.x) with c_{-k} =
    conj(c_k).

    Parameters
    ----------
    coeffs : dict mapping (int, int) to complex
        May contain either or both members of a +/-k pair; missing partners
        are filled in by conjugation, and inconsistent pairs are rejected.
    """

    def __init__(self, coeffs):
        table = {}
        for k, c in coeffs.items():
            k = (int(k[0]), int(k[1]))
            c = complex(c)
            mk = (-k[0], -k[1])
            if mk in table and abs(table[mk] - c.conjugate()) > 1e-14 * max(1.0, abs(c)):
                raise ValueError(f"coefficients at {k} and {mk} are not conjugate")
            table[k] = c
            table.setdefault(mk, c.conjugate())
        if (0, 0) in table:
            c0 = table[(0, 0)]
            if abs(c0.imag) > 1e-14 * max(1.0, abs(c0)):
                raise ValueError("constant coefficient must be real")
            table[(0, 0)] = complex(c0.real, 0.0)
        self._table = table
        # half-lattice layout for vectorized evaluation
        half = sorted(k for k in table if _lex_positive(k))
        self._half = np.array(half, dtype=float).reshape(-1, 2)
        self._half_c = np.array([table[k] for k in half], dtype=complex)
        self._c0 = table.get((0, 0), 0.0).real

    @property
    def mean(self):
        """Average over the torus (the zero-frequency coefficient)."""
        return self._c0

    @property
    def coeffs(self):
        return dict(self._table)

    def degree(self):
        """Largest max(|k1|, |k2|) present."""
        if not self._table:
            return 0
        return max(max(abs(k[0]), abs(k[1])) for k in self._table)

    def __call__(self, x):
        """Evaluate at points x of shape (..., 2); returns shape (...)."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self._c0)
        if self._half.size:
            phase = np.exp(TWO_PI * 1j * (x @ self._half.T))
            out = out + 2.0 * (phase @ self._half_c).real
        return out

    def gradient(self, x):
        """Analytic gradient at points of shape (..., 2); returns (..., 2)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2,))
        if self._half.size:
            phase = np.exp(TWO_PI * 1j * (x @ self._half.T))
            weighted = phase * self._half_c  # (..., nhalf)
            for axis in range(2):
                deriv = TWO_PI * 1j * self._half[:, axis]
                out[..., axis] = 2.0 * (weighted @ deriv).real
        return out

    def shifted_mean_zero(self):
        """Copy with the constant coefficient removed."""
        table = {k: c for k, c in self._table.items() if k != (0, 0)}
        return Observable(table)

    # -- serialization ----------------------------------------------------

    def to_json(self):
        """JSON text with '(k1,k2)' keys and [re, im] values."""
        obj = {}
        for k in sorted(self._table):
            c = self._table[k]
            obj[f"({k[0]},{k[1]})"] = [c.real, c.imag]
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text) if isinstance(text, str) else text
        coeffs = {}
        for key, val in raw.items():
            parts = key.strip("()").split(",")
            k = (int(parts[0]), int(parts[1]))
            coeffs[k] = complex(float(val[0]), float(val[1]))
        return cls(coeffs)

    def __repr__(self):
        return f"Observable({len(self._table)} coefficients, mean={self._c0:g})"
