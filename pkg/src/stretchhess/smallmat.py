"""Fixed-size dense linear algebra for per-element work.

Everything here accepts leading batch dimensions unless stated otherwise, so
``signed_svd3`` works on a single ``(3, 3)`` matrix or on ``(m, 3, 3)`` stacks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Svd3",
    "SymEig3",
    "JacobiConvergenceError",
    "signed_svd3",
    "sym_eig3",
    "jacobi_eig",
    "jacobi_eig_batch",
    "jacobi_svd",
    "solve2x2",
]

_DEGENERATE_SPREAD = 1e-12


class JacobiConvergenceError(RuntimeError):
    """Raised when the cyclic Jacobi sweep cap is hit."""


@dataclass(frozen=True)
class Svd3:
    """Rotation-variant SVD ``f = u @ diag(sigma) @ v.T`` with det(u) = det(v) = +1."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma[..., None, :]) @ np.swapaxes(self.v, -1, -2)


@dataclass(frozen=True)
class SymEig3:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # eigenvectors in columns


def signed_svd3(f: np.ndarray) -> Svd3:
    """Signed SVD of one or many 3x3 matrices.

    A reflection, if present, is pushed onto the singular value of smallest
    magnitude (index 2, since values are sorted by magnitude). Ties therefore
    resolve toward the largest index.
    """
    f = np.asarray(f, dtype=float)
    batch = f.reshape(-1, 3, 3)
    u, s, vt = np.linalg.svd(batch)
    v = np.swapaxes(vt, -1, -2).copy()
    for mat in (u, v):
        flip = np.linalg.det(mat) < 0.0
        mat[flip, :, 2] *= -1.0
        s[flip, 2] *= -1.0
    lead = f.shape[:-2]
    return Svd3(u.reshape(f.shape), s.reshape(lead + (3,)), v.reshape(f.shape))


def _cross_rows(m: np.ndarray) -> np.ndarray:
    """Largest-norm cross product among the row pairs of each 3x3 in ``m``."""
    c = np.stack(
        [
            np.cross(m[..., 0, :], m[..., 1, :]),
            np.cross(m[..., 0, :], m[..., 2, :]),
            np.cross(m[..., 1, :], m[..., 2, :]),
        ],
        axis=-2,
    )
    norms = np.einsum("...ij,...ij->...i", c, c)
    best = np.argmax(norms, axis=-1)
    vec = np.take_along_axis(c, best[..., None, None], axis=-2)[..., 0, :]
    nrm = np.sqrt(np.take_along_axis(norms, best[..., None], axis=-1))
    return vec / np.where(nrm > 0, nrm, 1.0)


def _any_orthonormal(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``w`` to an orthonormal basis."""
    ax = np.abs(w)
    # pick the axis least aligned with w
    pick = np.argmin(ax, axis=-1)
    e = np.zeros_like(w)
    np.put_along_axis(e, pick[..., None], 1.0, axis=-1)
    a = np.cross(w, e)
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    b = np.cross(w, a)
    return a, b


def _sym_eig3_closed(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = np.trace(a, axis1=-2, axis2=-1) / 3.0
    eye = np.eye(3)
    b = a - q[..., None, None] * eye
    p = np.sqrt(np.einsum("...ij,...ij->...", b, b) / 6.0)
    scale = np.maximum(np.abs(q), np.max(np.abs(a), axis=(-2, -1)))
    scale = np.where(scale > 0, scale, 1.0)
    degenerate = p <= _DEGENERATE_SPREAD * scale
    safe_p = np.where(degenerate, 1.0, p)
    r = np.clip(np.linalg.det(b / safe_p[..., None, None]) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam_hi = q + 2.0 * safe_p * np.cos(phi)
    lam_lo = q + 2.0 * safe_p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam_mid = 3.0 * q - lam_hi - lam_lo

    # Isolate whichever extreme eigenvalue has the wider gap, get its vector
    # from a cross product, then solve the remaining 2x2 problem exactly.
    hi_isolated = (lam_hi - lam_mid) >= (lam_mid - lam_lo)
    lam_iso = np.where(hi_isolated, lam_hi, lam_lo)
    w = _cross_rows(a - lam_iso[..., None, None] * eye)
    e1, e2 = _any_orthonormal(w)
    ae1 = np.einsum("...ij,...j->...i", a, e1)
    ae2 = np.einsum("...ij,...j->...i", a, e2)
    m11 = np.einsum("...i,...i->...", e1, ae1)
    m22 = np.einsum("...i,...i->...", e2, ae2)
    m12 = np.einsum("...i,...i->...", e1, ae2)
    c, s = _jacobi_rotation(m11, m22, m12)
    y1 = c[..., None] * e1 - s[..., None] * e2
    y2 = s[..., None] * e1 + c[..., None] * e2

    vecs = np.stack([y1, y2, w], axis=-1)
    vals = np.einsum("...ik,...ij,...jk->...k", vecs, a, vecs)
    order = np.argsort(vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    return vals, vecs, degenerate


def sym_eig3(a: np.ndarray) -> SymEig3:
    """Eigen-decomposition of symmetric 3x3 matrices, values ascending.

    Closed form (trigonometric eigenvalues, cross-product/2x2 eigenvectors,
    Rayleigh-quotient refinement). Inputs whose spread is within 1e-12 of a
    scalar matrix, or whose closed-form residual is poor, go through Jacobi.
    """
    a = np.asarray(a, dtype=float)
    single = a.ndim == 2
    batch = a.reshape(-1, 3, 3)
    with np.errstate(invalid="ignore", divide="ignore"):  # NaNs are routed to Jacobi below
        vals, vecs, degenerate = _sym_eig3_closed(batch)

    resid = np.einsum("nij,njk->nik", batch, vecs) - vecs * vals[:, None, :]
    ortho = np.einsum("nji,njk->nik", vecs, vecs) - np.eye(3)
    norm_a = np.maximum(np.linalg.norm(batch, axis=(1, 2)), 1e-300)
    bad = (
        degenerate
        | ~np.isfinite(vals).all(axis=1)
        | (np.linalg.norm(resid, axis=(1, 2)) > 1e-11 * norm_a)
        | (np.abs(ortho).max(axis=(1, 2)) > 1e-12)
    )
    if np.any(bad):
        jv, jw = jacobi_eig_batch(batch[bad])
        vals[bad] = jv
        vecs[bad] = jw
    vals = vals.reshape(a.shape[:-1])
    vecs = vecs.reshape(a.shape)
    if single:
        return SymEig3(vals.reshape(3), vecs.reshape(3, 3))
    return SymEig3(vals, vecs)


def _jacobi_rotation(app, aqq, apq):
    """Cosine/sine of the Jacobi rotation zeroing ``apq`` (vectorised)."""
    app, aqq, apq = np.broadcast_arrays(app, aqq, apq)
    zero = apq == 0.0
    tau = np.where(zero, 0.0, (aqq - app) / (2.0 * np.where(zero, 1.0, apq)))
    t = np.where(
        zero,
        0.0,
        np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau)),
    )
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c


def jacobi_eig_batch(
    a: np.ndarray, max_sweeps: int = 100, tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi on a stack ``(m, n, n)`` of symmetric matrices.

    Returns ascending eigenvalues ``(m, n)`` and column eigenvectors
    ``(m, n, n)``. Raises :class:`JacobiConvergenceError` if any matrix is not
    diagonalised to ``tol * ||a||_F`` within ``max_sweeps``.
    """
    a = np.array(a, dtype=float, copy=True)
    m, n, _ = a.shape
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    target = tol * np.linalg.norm(a, axis=(1, 2))
    off_mask = ~np.eye(n, dtype=bool)
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    for _ in range(max_sweeps + 1):
        off = np.sqrt(np.sum(a[:, off_mask] ** 2, axis=1))
        if np.all(off <= target):
            break
        for p, q in pairs:
            c, s = _jacobi_rotation(a[:, p, p], a[:, q, q], a[:, p, q])
            cc, ss = c[:, None], s[:, None]
            ap = a[:, :, p].copy()
            aq = a[:, :, q]
            a[:, :, p] = cc * ap - ss * aq
            a[:, :, q] = ss * ap + cc * aq
            ap = a[:, p, :].copy()
            aq = a[:, q, :]
            a[:, p, :] = cc * ap - ss * aq
            a[:, q, :] = ss * ap + cc * aq
            vp = v[:, :, p].copy()
            vq = v[:, :, q]
            v[:, :, p] = cc * vp - ss * vq
            v[:, :, q] = ss * vp + cc * vq
    else:
        raise JacobiConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    vals = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return vals, v


def jacobi_eig(a: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of one symmetric n x n matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eig expects a square matrix")
    vals, vecs = jacobi_eig_batch(a[None], max_sweeps=max_sweeps)
    return vals[0], vecs[0]


def jacobi_svd(f: np.ndarray, max_sweeps: int = 100, tol: float = 1e-14):
    """Two-sided (Kogbetliantz) Jacobi SVD of a small square matrix.

    Returns ``(u, s, v)`` with orthogonal ``u, v`` and ``f = u diag(s) v^T``.
    The singular values carry whatever sign the rotations leave them with;
    this is an oracle, callers compare ``|s|``.
    """
    a = np.array(f, dtype=float, copy=True)
    n = a.shape[0]
    u = np.eye(n)
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a**2) - np.sum(np.diag(a) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                # symmetrise the 2x2 block with a left rotation
                app, apq, aqp, aqq = a[p, p], a[p, q], a[q, p], a[q, q]
                theta = np.arctan2(aqp - apq, app + aqq)
                c0, s0 = np.cos(theta), np.sin(theta)
                r = np.eye(n)
                r[p, p], r[p, q], r[q, p], r[q, q] = c0, s0, -s0, c0
                a = r @ a
                u = u @ r.T
                c, s = _jacobi_rotation(a[p, p], a[q, q], 0.5 * (a[p, q] + a[q, p]))
                j = np.eye(n)
                j[p, p], j[p, q], j[q, p], j[q, q] = c, s, -s, c
                a = j.T @ a @ j
                u = u @ j
                v = v @ j
    else:
        raise JacobiConvergenceError("two-sided Jacobi SVD did not converge")
    return u, np.diag(a).copy(), v


def solve2x2(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Closed-form solve of ``m x = rhs`` for stacks of 2x2 systems."""
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    x0 = m[..., 1, 1] * rhs[..., 0] - m[..., 0, 1] * rhs[..., 1]
    x1 = m[..., 0, 0] * rhs[..., 1] - m[..., 1, 0] * rhs[..., 0]
    return np.stack([x0, x1], axis=-1) / det[..., None]
