"""Derivatives of the signed SVD of a P1 deformation gradient.

Rotation rates use the skew layout

    [[ 0,   w0,  w1],
     [-w0,  0,   w2],
     [-w1, -w2,  0 ]]

so ``w0, w1, w2`` couple stretch pairs (0,1), (0,2), (1,2). The rates come
from 2x2 solves that are singular at repeated stretches; this module is the
oracle path and refuses those inputs instead of regularising them.

Only P1 elements are supported: F is linear in vertex positions, so the
``U^T (d2F/dx dy) V`` contribution to the second stretch derivative is zero
and is not carried here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smallmat import Svd3, solve2x2

__all__ = [
    "DegenerateSvdError",
    "SkewRates",
    "SKEW_PAIRS",
    "shape_gradients",
    "dfdx_from_rest",
    "sigma_gradient",
    "skew_rates",
    "skew",
    "sigma_second_derivative",
]

SKEW_PAIRS = ((0, 1), (0, 2), (1, 2))


class DegenerateSvdError(ArithmeticError):
    """Two stretches coincide (or cancel) and the rotation rates blow up."""

    def __init__(self, pair, sigma):
        super().__init__(
            f"stretch pair {pair} is degenerate for sigma={np.round(np.asarray(sigma), 15)}"
        )
        self.pair = pair


@dataclass(frozen=True)
class SkewRates:
    wu: np.ndarray
    wv: np.ndarray

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return skew(self.wu), skew(self.wv)


def skew(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = w[..., 0]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 2] = w[..., 2]
    out[..., 1, 0] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = -w[..., 2]
    return out


def shape_gradients(dm_inv) -> np.ndarray:
    """Rows ``g_i`` with ``dF/dx_{ip} = e_p g_i^T`` for the four vertices."""
    dm_inv = np.asarray(dm_inv, dtype=float)
    g = np.empty(dm_inv.shape[:-2] + (4, 3))
    g[..., 1:, :] = dm_inv
    g[..., 0, :] = -dm_inv.sum(axis=-2)
    return g


def dfdx_from_rest(dm_inv) -> np.ndarray:
    """The nine constant ``dF/dx_{ip}`` (vertices 0-2), stacked as ``(..., 9, 3, 3)``.

    Index ``3 i + p``. Vertex 3's matrices are minus the sum over the first
    three vertices and are implied, not stored.
    """
    g = shape_gradients(dm_inv)[..., :3, :]
    eye = np.eye(3)
    # out[i, p] = outer(e_p, g_i)
    out = eye[None, :, :, None] * g[..., :, None, None, :]
    return out.reshape(g.shape[:-2] + (9, 3, 3))


def _project(svd: Svd3, df) -> np.ndarray:
    """``U^T df V`` broadcasting over stacks of ``df``."""
    u, v = svd.u, svd.v
    if df.ndim > u.ndim:
        u = u[..., None, :, :]
        v = v[..., None, :, :]
    return np.swapaxes(u, -1, -2) @ df @ v


def sigma_gradient(svd: Svd3, dfdx) -> np.ndarray:
    """``(..., 3, 9)`` matrix of ``d sigma_k / d x_{ip}``."""
    m = _project(svd, np.asarray(dfdx, dtype=float))
    return np.swapaxes(np.diagonal(m, axis1=-2, axis2=-1), -1, -2)


def skew_rates(svd: Svd3, df) -> SkewRates:
    """Rotation rates ``w^u = U^T dU``, ``w^v = V^T dV`` for a perturbation ``df``.

    ``df`` may be a stack ``(k, 3, 3)`` sharing one SVD.
    """
    df = np.asarray(df, dtype=float)
    m = _project(svd, df)
    sig = svd.sigma
    if df.ndim > svd.u.ndim:
        sig = sig[..., None, :]
    wu = np.empty(m.shape[:-2] + (3,))
    wv = np.empty_like(wu)
    for slot, (a, b) in enumerate(SKEW_PAIRS):
        sa, sb = sig[..., a], sig[..., b]
        scale = np.maximum(1.0, np.maximum(np.abs(sa), np.abs(sb)))
        if np.any(np.abs(sa * sa - sb * sb) <= 1e-6 * scale * scale):
            raise DegenerateSvdError((a, b), svd.sigma)
        lhs = np.empty(sa.shape + (2, 2))
        lhs[..., 0, 0] = sb
        lhs[..., 0, 1] = -sa
        lhs[..., 1, 0] = -sa
        lhs[..., 1, 1] = sb
        lhs = np.broadcast_to(lhs, m.shape[:-2] + (2, 2))
        rhs = np.stack([m[..., a, b], m[..., b, a]], axis=-1)
        sol = solve2x2(lhs, rhs)
        wu[..., slot] = sol[..., 0]
        wv[..., slot] = sol[..., 1]
    return SkewRates(wu, wv)


def sigma_second_derivative(svd: Svd3, rates_x: SkewRates, rates_y: SkewRates) -> np.ndarray:
    """``d2 sigma / dx dy`` from the rotation rates of the two perturbations."""
    sig = svd.sigma
    wxu, wxv = rates_x.matrices()
    wyu, wyv = rates_y.matrices()
    if wxu.ndim > svd.u.ndim:
        sig = sig[..., None, :]
    s_ = sig[..., None, :]  # right-multiplying by diag(sig) scales columns
    term = (
        (wxu * s_) @ wyv
        + (wyu * s_) @ wxv
        - sig[..., :, None] * (wxv @ wyv)
        - (wyu @ wxu) * s_
    )
    return np.diagonal(term, axis1=-2, axis2=-1).copy()
