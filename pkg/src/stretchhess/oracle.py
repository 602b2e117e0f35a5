"""Independent reference computations for element energies and Hessians.

Nothing here is fast. The entry-wise Hessian builds every second derivative
from stretch gradients and rotation rates, and the finite-difference routines
only ever call the energy through a signed SVD of the perturbed element.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel
from .smallmat import Svd3, signed_svd3
from .svd_diff import SkewRates, dfdx_from_rest, sigma_gradient, skew_rates, sigma_second_derivative

__all__ = [
    "FdScheme",
    "deformation_gradient",
    "element_energy",
    "fd_gradient",
    "fd_hessian",
    "hessian_entrywise",
    "random_rotation",
    "random_element",
    "rel_frob",
    "UNIT_TET",
    "element_setup",
]

UNIT_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class FdScheme:
    h: float = 5e-5
    stencil: str = "central-2nd-order"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")


def deformation_gradient(rest, x) -> np.ndarray:
    """F = Dw Dm^-1 with edge vectors taken from vertex 0; batches over leading axes."""
    rest = np.asarray(rest, dtype=float)
    x = np.asarray(x, dtype=float)
    dm = np.swapaxes(rest[..., 1:, :] - rest[..., :1, :], -1, -2)
    dw = np.swapaxes(x[..., 1:, :] - x[..., :1, :], -1, -2)
    return dw @ np.linalg.inv(dm)


def element_energy(model: EnergyModel, rest, x) -> np.ndarray:
    """Energy density Psi at deformed vertex arrays ``x`` (``(..., 4, 3)``)."""
    svd = signed_svd3(deformation_gradient(rest, x))
    return model.evaluate(svd.sigma).value


def fd_gradient(model: EnergyModel, rest, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of Psi over the 12 vertex coordinates."""
    x = np.asarray(x, dtype=float).reshape(12)
    steps = np.eye(12) * h
    pts = np.concatenate([x + steps, x - steps]).reshape(24, 4, 3)
    vals = element_energy(model, rest, pts)
    return (vals[:12] - vals[12:]) / (2.0 * h)


def fd_hessian(model: EnergyModel, rest, x, h: float = 5e-5) -> np.ndarray:
    """Central second differences of Psi; every entry uses the 4-point stencil.

    The default step balances truncation (near sign-flipped stretch pairs)
    against rounding in the energy; 5e-5 keeps both under ~2e-6 relative.
    """
    x = np.asarray(x, dtype=float).reshape(12)
    e = np.eye(12) * h
    pp = x + e[:, None, :] + e[None, :, :]
    pm = x + e[:, None, :] - e[None, :, :]
    mp = x - e[:, None, :] + e[None, :, :]
    mm = x - e[:, None, :] - e[None, :, :]
    pts = np.stack([pp, pm, mp, mm]).reshape(-1, 4, 3)
    vals = element_energy(model, rest, pts).reshape(4, 12, 12)
    hess = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)
    return hess


def hessian_entrywise(model: EnergyModel, svd: Svd3, dfdx) -> np.ndarray:
    """12x12 element Hessian assembled one entry at a time.

    Each entry of the first 9x9 block is
    ``sum_kl d2Psi/ds_k ds_l * ds_l/dx * ds_k/dy + sum_k dPsi/ds_k * d2s_k/dxdy``.
    Rows and columns of vertex 3 follow from differentiating the zero net
    gradient identity. Raises ``DegenerateSvdError`` near repeated stretches.
    """
    ev = model.evaluate(svd.sigma)
    dfdx = np.asarray(dfdx, dtype=float)
    dsig = sigma_gradient(svd, dfdx).T  # (9, 3)
    rates = skew_rates(svd, dfdx)
    shape = (9, 9, 3)
    rx = SkewRates(np.broadcast_to(rates.wu[:, None], shape), np.broadcast_to(rates.wv[:, None], shape))
    ry = SkewRates(np.broadcast_to(rates.wu[None, :], shape), np.broadcast_to(rates.wv[None, :], shape))
    d2 = sigma_second_derivative(svd, rx, ry)  # (9, 9, 3)

    h9 = np.zeros((9, 9))
    for x in range(9):
        for y in range(9):
            acc = 0.0
            for k in range(3):
                for l in range(3):
                    acc += ev.hess[k, l] * dsig[x, l] * dsig[y, k]
                acc += ev.grad[k] * d2[x, y, k]
            h9[x, y] = acc

    h = np.zeros((12, 12))
    h[:9, :9] = h9
    for row in range(9):
        for p in range(3):
            h[row, 9 + p] = -(h9[row, p] + h9[row, 3 + p] + h9[row, 6 + p])
            h[9 + p, row] = h[row, 9 + p]
    for q in range(3):
        for p in range(3):
            h[9 + q, 9 + p] = -(h[9 + q, p] + h[9 + q, 3 + p] + h[9 + q, 6 + p])
    return h


def rel_frob(a, b) -> float:
    """||a - b||_F / ||b||_F (absolute when b vanishes)."""
    den = np.linalg.norm(b)
    num = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return float(num / den) if den > 0 else float(num)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _stretches(rng, allow_inversion: bool, min_gap: float, degenerate_gap=None):
    while True:
        s = np.sort(rng.uniform(0.4, 2.5, size=3))[::-1]
        if degenerate_gap is not None:
            a = rng.integers(0, 2)
            s[a + 1] = s[a] - degenerate_gap
            gaps = np.abs(np.diff(s))
            if np.sort(gaps)[1] < min_gap:
                continue
            # negating sigma_2 would split a (1, 2) near-repeat into +s, -s
            allow_inversion = allow_inversion and a == 0
        elif np.min(np.abs(np.diff(s))) < min_gap:
            continue
        if allow_inversion and rng.random() < 0.3:
            s[2] = -s[2]
        return s


def random_element(
    rng: np.random.Generator,
    model: EnergyModel | None = None,
    *,
    degenerate: bool = False,
    dm_identity: bool = False,
    min_gap: float = 0.08,
):
    """Random rest/deformed vertex pair ``(rest, x)``, each ``(4, 3)``.

    Stretches are drawn with pairwise gaps of at least ``min_gap`` or, with
    ``degenerate=True``, with one pair closer than 1e-10. Inversions are only
    produced for models that accept negative stretches.
    """
    allow_inv = model is not None and not model.positive_only
    if degenerate:
        sigma = _stretches(rng, allow_inv, min_gap, degenerate_gap=rng.uniform(0.0, 1e-10))
    else:
        sigma = _stretches(rng, allow_inv, min_gap)
    f = random_rotation(rng) @ np.diag(sigma) @ random_rotation(rng).T

    if dm_identity:
        rest = UNIT_TET.copy()
    else:
        dm = random_rotation(rng) @ np.diag(rng.uniform(0.6, 1.6, size=3)) @ random_rotation(rng).T
        x0 = rng.uniform(-1.0, 1.0, size=3)
        rest = np.vstack([x0, x0 + dm.T])
    dm = (rest[1:] - rest[0]).T
    dw = f @ dm
    origin = rng.uniform(-1.0, 1.0, size=3)
    x = np.vstack([origin, origin + dw.T])
    return rest, x


def element_setup(rest, x):
    """``(svd, dm_inv, dfdx)`` for one element, shared by the checks."""
    dm = (np.asarray(rest)[1:] - np.asarray(rest)[0]).T
    dm_inv = np.linalg.inv(dm)
    svd = signed_svd3(deformation_gradient(rest, x))
    return svd, dm_inv, dfdx_from_rest(dm_inv)
