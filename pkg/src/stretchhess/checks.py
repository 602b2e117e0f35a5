"""Randomized element checks shared by ``stretchhess verify`` and the test suite."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .eigsys import element_gradient, element_hessian, factorize_element, project_spd
from .energy import EnergyModel
from .oracle import element_setup, fd_gradient, fd_hessian, hessian_entrywise, random_element, rel_frob
from .smallmat import jacobi_eig_batch, signed_svd3
from .svd_diff import dfdx_from_rest, shape_gradients

__all__ = ["Tolerances", "CheckReport", "three_way", "perf_ratio", "TRANSLATIONS"]


@dataclass(frozen=True)
class Tolerances:
    entrywise: float = 1e-8
    fd_hessian: float = 1e-5
    gradient: float = 1e-6
    net_force: float = 1e-12
    null_space: float = 1e-10


TRANSLATIONS = 0.5 * np.kron(np.ones((4, 1)), np.eye(3)).T  # (3, 12) unit rigid shifts


@dataclass
class CheckReport:
    model: str
    samples: int
    entrywise: float = 0.0
    fd_hessian: float = 0.0
    gradient: float = 0.0
    net_force: float = 0.0
    null_space: float = 0.0
    seconds: float = 0.0

    def ok(self, tol: Tolerances = Tolerances()) -> bool:
        return (
            self.samples > 0
            and self.entrywise <= tol.entrywise
            and self.fd_hessian <= tol.fd_hessian
            and self.gradient <= tol.gradient
            and self.net_force <= tol.net_force
            and self.null_space <= tol.null_space
        )


def three_way(model: EnergyModel, samples: int, seed: int = 0) -> CheckReport:
    """Analytic Hessian vs entry-wise and finite-difference oracles, plus
    gradient, net-force and translation null-space checks, on random elements."""
    rng = np.random.default_rng(seed)
    rep = CheckReport(model.name, samples)
    t0 = time.perf_counter()
    for _ in range(samples):
        rest, x = random_element(rng, model)
        svd, dm_inv, dfdx = element_setup(rest, x)
        ev = model.evaluate(svd.sigma)
        h = element_hessian(factorize_element(model, svd, dfdx, ev))
        rep.entrywise = max(rep.entrywise, rel_frob(h, hessian_entrywise(model, svd, dfdx)))
        rep.fd_hessian = max(rep.fd_hessian, rel_frob(h, fd_hessian(model, rest, x)))

        g = element_gradient(ev.grad, svd, shape_gradients(dm_inv))
        rep.gradient = max(rep.gradient, rel_frob(g.reshape(-1), fd_gradient(model, rest, x)))
        rep.net_force = max(rep.net_force, float(np.max(np.abs(g.sum(axis=0)))))
        ht = np.linalg.norm(h @ TRANSLATIONS.T, axis=0).max() / np.linalg.norm(h, 2)
        rep.null_space = max(rep.null_space, float(ht))
    rep.seconds = time.perf_counter() - t0
    return rep


def _random_batch(rng, m: int, positive: bool):
    """Deformation gradients and rest inverses for ``m`` random elements."""
    q1 = np.linalg.qr(rng.normal(size=(m, 3, 3)))[0]
    q2 = np.linalg.qr(rng.normal(size=(m, 3, 3)))[0]
    s = rng.uniform(0.4, 2.5, size=(m, 3))
    if not positive:
        s[:, 2] *= np.where(rng.random(m) < 0.3, -1.0, 1.0)
    f = q1 @ (s[:, :, None] * np.swapaxes(q2, 1, 2))
    dm = np.eye(3) + 0.2 * rng.normal(size=(m, 3, 3))
    dm[np.linalg.det(dm) < 0, :, 0] *= -1.0
    return f, np.linalg.inv(dm)


def perf_ratio(model: EnergyModel, elements: int, seed: int = 0, eps: float = 1e-8, chunk: int = 10_000):
    """Time analytic factorization + clamp against 12x12 Jacobi + clamp.

    The analytic timing includes the SVD and the reassembly of every
    projected matrix; the Jacobi timing starts from ready-made Hessians.
    Returns ``(analytic_seconds, jacobi_seconds, ratio)``.
    """
    rng = np.random.default_rng(seed)
    f, dm_inv = _random_batch(rng, elements, model.positive_only)
    dfdx = dfdx_from_rest(dm_inv)

    t0 = time.perf_counter()
    for lo in range(0, elements, chunk):
        svd = signed_svd3(f[lo : lo + chunk])
        project_spd(factorize_element(model, svd, dfdx[lo : lo + chunk]), eps)
    t_an = time.perf_counter() - t0

    hs = [
        element_hessian(factorize_element(model, signed_svd3(f[lo : lo + chunk]), dfdx[lo : lo + chunk]))
        for lo in range(0, elements, chunk)
    ]
    t0 = time.perf_counter()
    for h in hs:
        w, v = jacobi_eig_batch(h)
        top = np.maximum(1.0, w[:, -1:])
        w = np.maximum(w, eps * top)
        np.einsum("mik,mk,mjk->mij", v, w, v)
    t_jac = time.perf_counter() - t0
    return t_an, t_jac, t_jac / t_an if t_an > 0 else float("inf")
