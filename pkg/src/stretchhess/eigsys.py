"""Analytic block factorization and SPD projection of P1 element Hessians.

For a tetrahedron with vertex coordinates ``x`` (12 values, index ``3 i + p``)
and energy density ``Psi(sigma)`` the element Hessian factors as

    H = K^T (Ks^T Ds Ks + sum_pairs [t t^T * twist + f f^T * flip]) K

where ``K`` (9 x 12) eliminates vertex 3, ``Ds`` is the 3x3 stretch Hessian,
``Ks`` holds the stretch gradients, and every stretch pair (a, b) contributes
a twist row ``t`` and a flip row ``f`` with scalar weights known in closed
form. Only ``Ds`` needs a numerical eigensolve during projection.

With a general rest shape the rows are not orthonormal, so this is a
congruence rather than an eigendecomposition. Clamping the nine weights still
gives a PSD proxy because every term is then a PSD rank-one (or 3x3) update.
With Dm = I and coordinates relative to an anchor vertex, the rows are
orthonormal and the six twist/flip weights are true eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import PAIRS, EnergyModel, twist_flip_all
from .smallmat import Svd3, sym_eig3

__all__ = [
    "K_REDUCE",
    "ElementFactorization",
    "ProjectedHessian",
    "factorize_element",
    "element_hessian",
    "project_spd",
    "element_gradient",
    "extend_rows",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-8
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _reduction_matrix() -> np.ndarray:
    k = np.zeros((9, 12))
    for i in range(3):
        k[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = np.eye(3)
        k[3 * i : 3 * i + 3, 9:12] = -np.eye(3)
    return k


K_REDUCE = _reduction_matrix()
K_REDUCE.setflags(write=False)


@dataclass(frozen=True)
class ElementFactorization:
    """Factorized element Hessian; arrays may carry leading batch axes.

    d_stretch: (..., 3, 3); k_stretch: (..., 3, 9);
    d_pairs: (..., 3, 2) as (twist, flip) for pairs (0,1), (1,2), (2,0);
    k_pairs: (..., 3, 2, 9) matching rows.
    """

    d_stretch: np.ndarray
    k_stretch: np.ndarray
    d_pairs: np.ndarray
    k_pairs: np.ndarray

    @property
    def k_reduce(self) -> np.ndarray:
        return K_REDUCE

    @property
    def batch_shape(self) -> tuple:
        return self.d_stretch.shape[:-2]


@dataclass(frozen=True)
class ProjectedHessian:
    matrix: np.ndarray
    clamped: np.ndarray  # number of weights raised to the floor, per element


def factorize_element(model: EnergyModel, svd: Svd3, dfdx, ev=None) -> ElementFactorization:
    """Build the factorization from an element's SVD and its ``dF/dx`` stack.

    ``dfdx`` is ``(..., 9, 3, 3)`` as produced by ``svd_diff.dfdx_from_rest``.
    ``ev`` may pass a precomputed ``EnergyEval`` for ``svd.sigma``.
    """
    if ev is None:
        ev = model.evaluate(svd.sigma)
    dfdx = np.asarray(dfdx, dtype=float)
    ut = np.swapaxes(svd.u, -1, -2)[..., None, :, :]
    # m[..., c, a, b] = U_a^T dF_c V_b
    m = ut @ dfdx @ svd.v[..., None, :, :]
    m = np.moveaxis(m, -3, -1)  # (..., a, b, c)
    k_stretch = np.stack([m[..., k, k, :] for k in range(3)], axis=-2)
    rows = []
    for a, b in PAIRS:
        ab = m[..., a, b, :]
        ba = m[..., b, a, :]
        # symmetric combination carries the twist weight, antisymmetric the flip
        rows.append(np.stack([(ab + ba) * _INV_SQRT2, (ba - ab) * _INV_SQRT2], axis=-2))
    k_pairs = np.stack(rows, axis=-3)
    d_pairs = twist_flip_all(model, svd.sigma, ev)
    return ElementFactorization(
        d_stretch=np.array(ev.hess, dtype=float),
        k_stretch=k_stretch,
        d_pairs=d_pairs,
        k_pairs=k_pairs,
    )


def extend_rows(r9: np.ndarray) -> np.ndarray:
    """Apply ``K``: append vertex-3 columns equal to minus the sum of the others."""
    r = r9.reshape(r9.shape[:-1] + (3, 3))
    last = -(r[..., 0, :] + r[..., 1, :] + r[..., 2, :])
    return np.concatenate([r9, last], axis=-1)


def _assemble(d_stretch, k_stretch, d_pairs, k_pairs) -> np.ndarray:
    ks = extend_rows(k_stretch)
    kp = extend_rows(k_pairs)
    h = np.einsum("...ki,...kl,...lj->...ij", ks, d_stretch, ks)
    h += np.einsum("...abi,...ab,...abj->...ij", kp, d_pairs, kp)
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def element_hessian(fact: ElementFactorization) -> np.ndarray:
    """Dense symmetric 12x12 Hessian (per batch entry) from the factorization."""
    return _assemble(fact.d_stretch, fact.k_stretch, fact.d_pairs, fact.k_pairs)


def project_spd(fact: ElementFactorization, eps: float = DEFAULT_EPS) -> ProjectedHessian:
    """Clamp the nine factorization weights to ``>= eps * s`` and reassemble.

    ``s = max(1, largest weight)`` per element. Elements with nothing to clamp
    return exactly ``element_hessian(fact)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    eig = sym_eig3(fact.d_stretch)
    lam = eig.values
    pairs = fact.d_pairs
    top = np.maximum(lam[..., -1], pairs.max(axis=(-2, -1)))
    floor = eps * np.maximum(1.0, top)
    low_s = lam < floor[..., None]
    low_p = pairs < floor[..., None, None]
    clamped = low_s.sum(axis=-1) + low_p.sum(axis=(-2, -1))

    h = element_hessian(fact)
    if not np.any(clamped):
        return ProjectedHessian(h, clamped)

    lam_c = np.where(low_s, floor[..., None], lam)
    q = eig.vectors
    ds_c = np.einsum("...ik,...k,...jk->...ij", q, lam_c, q)
    ds = np.where(low_s.any(axis=-1)[..., None, None], ds_c, fact.d_stretch)
    dp = np.where(low_p, floor[..., None, None], pairs)
    hc = _assemble(ds, fact.k_stretch, dp, fact.k_pairs)
    out = np.where((clamped > 0)[..., None, None], hc, h)
    return ProjectedHessian(out, clamped)


def element_gradient(grad_sigma, svd: Svd3, shape_grads) -> np.ndarray:
    """Kernel gradient over all four vertices as ``(..., 4, 3)``.

    ``dPsi/dx_{ip} = sum_k dPsi/dsigma_k * U[p, k] * (g_i . V_k)`` with the
    shape-function gradients ``g_i`` of every vertex, vertex 3 included.
    """
    b = shape_grads @ svd.v  # (..., 4, 3): g_i . V_k
    return (b * grad_sigma[..., None, :]) @ np.swapaxes(svd.u, -1, -2)
