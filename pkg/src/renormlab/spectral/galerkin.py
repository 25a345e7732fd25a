"""Projected spectral discretization of the weighted transfer step.

Pure collocation on the uniform base lattice degenerates for the linear
map: the lattice is invariant, the matrix becomes a weighted permutation,
and every lattice cycle contributes rotated copies of the fiber spectrum.
The discretization here therefore projects: the pulled-back interpolant is
evaluated on a finer quadrature grid (no base mode retained by the
truncation can alias back onto a retained mode through the map's linear
part) and then projected onto the retained Fourier x Chebyshev span.
Escaping modes are annihilated instead of aliased, so for the unperturbed
map the matrix splits into the mode-zero fiber block, whose eigenvalues
are the closed-form spectrum, plus a nilpotent remainder.

The matrix acts on values at the coarse nodes and is real; eigensolves are
dense (Hessenberg + shifted QR) up to a dimension cap and implicitly
restarted Arnoldi on the matrix-free action above it.  Truncation
artifacts are removed by keeping only eigenvalues reproduced on a finer
grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.sparse.linalg import LinearOperator, eigs as arpack_eigs

from .. import torus
from ..errors import ConeExit, SizeOverflow
from .extension import _cheb_cardinal, _trig_cardinal
from .traces import SpectralResult

DENSE_CAP = 4096


def _band_kernel(d, k_keep, n_fine):
    """Projection kernel onto modes |k| <= k_keep/2 from n_fine samples.

    Even k_keep splits the Nyquist pair symmetrically so the kernel is
    real and even.
    """
    d = np.asarray(d, dtype=float)
    hit = np.abs(np.sin(np.pi * d)) < 1e-14
    den = np.where(hit, 1.0, np.sin(np.pi * d))
    num = np.sin((k_keep - 1) * np.pi * d)
    core = np.where(hit, (k_keep - 1) * np.cos((k_keep - 1) * np.pi * d),
                    num / den)
    return (core + np.cos(np.pi * k_keep * d)) / n_fine


class ProjectedGrid:
    """Coarse collocation grid plus dealiased projection quadrature.

    Values live on the (K, K, M) coarse grid (uniform base, Chebyshev
    fiber).  One transfer step interpolates those values at the backward
    image of a finer (K_q, K_q, M_q) quadrature grid, multiplies by the
    transfer weight there, and projects back onto the coarse span.
    """

    def __init__(self, espec, vf, k_base, m_fiber, dealias_base=2.25,
                 dealias_fiber=2):
        self.espec = espec
        self.vf = vf
        self.k_base = K = int(k_base)
        self.m_fiber = M = int(m_fiber)
        Kq = int(np.ceil(dealias_base * K / 2)) * 2
        Mq = int(np.ceil(dealias_fiber * M))
        self.k_fine = Kq
        self.m_fine = Mq
        self.x_nodes = np.arange(K) / K
        self.theta = (np.arange(M) + 0.5) * np.pi / M
        lo, hi = espec.bracket
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        self.s_nodes = mid + half * np.cos(self.theta)
        u_fine = np.arange(Kq) / Kq
        theta_fine = (np.arange(Mq) + 0.5) * np.pi / Mq
        s_fine = mid + half * np.cos(theta_fine)

        g1, g2 = np.meshgrid(u_fine, u_fine, indexing="ij")
        pts = np.stack([g1, g2], axis=-1)
        xp = torus.invert_map(espec.base, pts)
        J = torus.jacobian_inv(espec.base, xp)
        v1 = J[..., 0, 0, None] + J[..., 0, 1, None] * s_fine
        v2 = J[..., 1, 0, None] + J[..., 1, 1, None] * s_fine
        s_prev = v2 / v1
        if np.any(~espec.contains(s_prev, slack=1e-9)):
            raise ConeExit("backward slope image left the bracket on grid")
        pulled = np.stack([v1, v1 * s_prev], axis=-1)
        rep = np.stack([np.ones_like(s_prev), s_prev], axis=-1)
        ratio = np.linalg.norm(pulled, axis=-1) / np.linalg.norm(rep, axis=-1)
        speed = (vf.norm(pts) / vf.norm(torus.wrap(xp)))[..., None]
        self.weight = ratio * speed                       # (Kq, Kq, Mq)
        xpw = torus.wrap(xp)
        self.interp_1 = _trig_cardinal(xpw[..., 0], K)    # (Kq, Kq, K)
        self.interp_2 = _trig_cardinal(xpw[..., 1], K)
        self.interp_s = _cheb_cardinal(s_prev, self.s_nodes, self.theta)
        # projection tables: fine samples -> retained modes -> coarse nodes
        self.proj_x = _band_kernel(self.x_nodes[:, None] - u_fine, K, Kq)
        analysis = (np.cos(np.arange(M)[:, None] * theta_fine)
                    * (2.0 / Mq))
        analysis[0] *= 0.5
        synth = np.cos(np.arange(M)[None, :] * self.theta[:, None])
        self.proj_s = synth @ analysis                    # (M, Mq)

    @property
    def shape(self):
        return (self.k_base, self.k_base, self.m_fiber)

    @property
    def size(self):
        return self.k_base * self.k_base * self.m_fiber

    def node_points(self):
        """All coarse nodes as ((K*K*M, 2) base points, (K*K*M,) slopes)."""
        g1, g2, gs = np.meshgrid(self.x_nodes, self.x_nodes, self.s_nodes,
                                 indexing="ij")
        return (np.stack([g1.ravel(), g2.ravel()], axis=-1), gs.ravel())

    def sample(self, func):
        """Evaluate a callable f(xy, s) on the coarse grid; (K, K, M)."""
        pts, ss = self.node_points()
        return np.asarray(func(pts, ss), dtype=float).reshape(self.shape)

    def apply(self, values):
        """One projected transfer step of coarse-grid values."""
        f = np.asarray(values, dtype=float).reshape(self.shape)
        base = np.einsum("pqa,pqb,abm->pqm", self.interp_1, self.interp_2,
                         f, optimize=True)
        fine = np.einsum("pqsm,pqm->pqs", self.interp_s, base)
        fine *= self.weight
        r = np.einsum("ap,pqs->aqs", self.proj_x, fine)
        r = np.einsum("bq,aqs->abs", self.proj_x, r)
        return np.einsum("cs,abs->abc", self.proj_s, r)

    def matrix(self, cap=DENSE_CAP):
        """Dense projected transfer matrix in the node-value basis."""
        if self.size > cap:
            raise SizeOverflow(
                f"dense matrix would be {self.size}^2; cap {cap}")
        G = np.einsum("cs,pqs,pqsm->pqcm", self.proj_s, self.weight,
                      self.interp_s, optimize=True)
        mat = np.einsum("ap,bq,pqA,pqB,pqcm->abcABm", self.proj_x,
                        self.proj_x, self.interp_1, self.interp_2, G,
                        optimize=True)
        return mat.reshape(self.size, self.size)


def galerkin_matrix(espec, vf, k_fourier, m_cheb, cap=DENSE_CAP):
    """Dense projected transfer matrix; returns (grid, matrix).

    Raises SizeOverflow when the coarse dimension exceeds the cap; use the
    matrix-free action (galerkin_operator) above it.
    """
    if k_fourier < 8 or m_cheb < 8:
        raise ValueError("need at least 8 modes per axis")
    grid = ProjectedGrid(espec, vf, k_fourier, m_cheb)
    return grid, grid.matrix(cap=cap)


def galerkin_operator(grid):
    """Matrix-free projected transfer action as a LinearOperator."""
    n = grid.size

    def mv(v):
        return grid.apply(v.reshape(grid.shape)).ravel()

    return LinearOperator((n, n), matvec=mv, dtype=float)


def eigs(matrix, k=8, want="values"):
    """Largest-modulus eigenvalues of a dense matrix, optionally vectors.

    want is "values", "right" or "both"; the dense solve computes the full
    spectrum (Hessenberg + shifted QR via LAPACK) and the top k by modulus
    are returned, eigenvectors column-matched.
    """
    if want == "values":
        vals = sla.eig(matrix, right=False, check_finite=False)
        order = np.argsort(-np.abs(vals))[:k]
        return vals[order]
    if want == "right":
        vals, vr = sla.eig(matrix, right=True, check_finite=False)
        order = np.argsort(-np.abs(vals))[:k]
        return vals[order], vr[:, order]
    vals, vl, vr = sla.eig(matrix, left=True, right=True, check_finite=False)
    order = np.argsort(-np.abs(vals))[:k]
    return vals[order], vl[:, order], vr[:, order]


def eigs_iterative(grid, k=8, tol=1e-11, want="values"):
    """Top eigenvalues by restarted Arnoldi on the matrix-free action.

    The start vector is fixed so repeated runs are bitwise reproducible.
    """
    op = galerkin_operator(grid)
    n = grid.size
    v0 = np.full(n, 1.0 / np.sqrt(n))
    ncv = min(n, max(4 * k + 4, 40))
    if want == "values":
        vals = arpack_eigs(op, k=k, v0=v0, ncv=ncv, tol=tol,
                           return_eigenvectors=False)
        return vals[np.argsort(-np.abs(vals))]
    vals, vecs = arpack_eigs(op, k=k, v0=v0, ncv=ncv, tol=tol,
                             return_eigenvectors=True)
    order = np.argsort(-np.abs(vals))
    return vals[order], vecs[:, order]


def grid_eigenvalues(espec, vf, k_fourier, m_cheb, k=8, cap=DENSE_CAP):
    """Eigenvalues at one grid size, dense below the cap, Arnoldi above."""
    if k_fourier * k_fourier * m_cheb <= cap:
        _, mat = galerkin_matrix(espec, vf, k_fourier, m_cheb, cap=cap)
        return eigs(mat, k=k, want="values")
    grid = ProjectedGrid(espec, vf, k_fourier, m_cheb)
    return eigs_iterative(grid, k=k)


def fourier_mode_energy(grid, vec, mode=(0, 0)):
    """Fraction of a node-space vector's energy outside one base mode."""
    v = np.asarray(vec).reshape(grid.shape)
    coeffs = np.fft.fft2(v, axes=(0, 1))
    total = float(np.sum(np.abs(coeffs) ** 2))
    inside = float(np.sum(np.abs(coeffs[mode[0], mode[1], :]) ** 2))
    return (total - inside) / total


@dataclass(frozen=True)
class GalerkinEigenData:
    """Grid with matched eigenvalues and left/right node eigenvectors."""

    grid: ProjectedGrid
    values: np.ndarray
    left: np.ndarray
    right: np.ndarray


def galerkin_eigendata(espec, vf, k_fourier, m_cheb, k=8, cap=DENSE_CAP):
    """Dense eigensolve with left and right vectors for functional work."""
    grid, mat = galerkin_matrix(espec, vf, k_fourier, m_cheb, cap=cap)
    vals, vl, vr = eigs(mat, k=k, want="both")
    return GalerkinEigenData(grid, vals, vl, vr)


def galerkin_pipeline(espec, vf, small=(16, 16), big=(24, 24), k=10,
                      filter_rel=1e-6, retention=0.05, cap=DENSE_CAP):
    """Two-grid projected pipeline with the spurious-eigenvalue filter.

    Eigenvalues from the coarse grid are kept only when the fine grid
    reproduces them to filter_rel and their modulus clears the retention
    floor; the cross-grid deviation is reported as the stability error.
    """
    vals_s = grid_eigenvalues(espec, vf, small[0], small[1], k=k, cap=cap)
    vals_b = grid_eigenvalues(espec, vf, big[0], big[1], k=k, cap=cap)
    h_top = torus.topological_entropy(espec.base)
    rhos, errs = [], []
    for lam in vals_s:
        if np.abs(lam) < retention:
            continue
        err = float(np.min(np.abs(vals_b - lam)) / np.abs(lam))
        if err <= filter_rel:
            rhos.append(complex(lam))
            errs.append(err)
    order = np.argsort(-np.abs(rhos)) if rhos else np.array([], dtype=int)
    rhos = np.asarray(rhos, dtype=complex)[order]
    errs = np.asarray(errs, dtype=float)[order]
    alphas = np.log(np.abs(rhos)) / h_top if len(rhos) else np.array([])
    return SpectralResult(rhos, errs, np.asarray(alphas, dtype=float),
                          "galerkin", float(retention))


class ObstructionFunctional:
    """Linear functional on base observables from one left eigenvector.

    The left vector is summed over the fiber axis into a node table on the
    base grid; pairing an observable means evaluating it at the base nodes
    and contracting.  The mode table (the table's discrete Fourier
    transform) gives the functional's weight on each Fourier mode, which
    is what the rank-based deduplication compares.  Functionals are
    normalized so the pairing with the constant observable is 1 whenever
    it is nonzero.
    """

    def __init__(self, grid, left_vec, resonance):
        K = grid.k_base
        table = np.conj(np.asarray(left_vec).reshape(grid.shape)).sum(axis=2)
        self.resonance = complex(resonance)
        value_at_one = table.sum()
        if np.abs(value_at_one) > 1e-10 * np.abs(table).sum():
            table = table / value_at_one
        else:
            scale = np.abs(table).max()
            table = table / scale if scale > 0 else table
        self.node_table = table
        self.mode_table = np.fft.fft2(table) / (K * K)
        u = np.arange(K) / K
        g1, g2 = np.meshgrid(u, u, indexing="ij")
        self._nodes = np.stack([g1, g2], axis=-1)

    def __call__(self, g):
        vals = g(self._nodes)
        return complex(np.sum(self.node_table * vals))

    def mode_weights(self):
        return self.mode_table.copy()


def obstruction_functionals(result, eigendata, rank_tol=1e-8, drop_tol=1e-6):
    """Deduplicated obstruction functionals from left eigen-data.

    Each retained resonance is matched to a left eigenvector, whose fiber
    sum gives the pushforward table on base observables.  A table whose
    norm is below drop_tol times the no-cancellation scale (fiber sum of
    absolute values) annihilates every lifted observable and is excluded;
    keeping it would let roundoff masquerade as an independent direction
    once normalized.  The survivors are deduplicated by a numerical rank
    test on unit rows at rank_tol, keeping pivot representatives.
    """
    grid = eigendata.grid
    kept_vecs = []
    rows = []
    for rho in result.resonances:
        idx = int(np.argmin(np.abs(eigendata.values - rho)))
        gap = np.abs(eigendata.values[idx] - rho)
        if gap > 1e-3 * max(np.abs(rho), 1e-30):
            continue
        vl = np.asarray(eigendata.left[:, idx]).reshape(grid.shape)
        table = np.conj(vl).sum(axis=2)
        scale = np.abs(vl).sum(axis=2)
        tnorm = np.linalg.norm(table)
        if tnorm <= drop_tol * np.linalg.norm(scale):
            continue
        kept_vecs.append((eigendata.left[:, idx], rho))
        rows.append((np.fft.fft2(table) / tnorm).ravel())
    if not kept_vecs:
        return []
    W = np.array(rows)
    svals = sla.svdvals(W)
    rank = int(np.sum(svals > rank_tol * svals[0])) if svals[0] > 0 else 0
    keep = range(len(kept_vecs))
    if rank < len(kept_vecs):
        _, _, piv = sla.qr(W.T.conj(), mode="economic", pivoting=True)
        keep = sorted(piv[:rank])
    return [ObstructionFunctional(grid, *kept_vecs[i]) for i in keep]
