"""Isotropic distortion energies written in principal stretches.

Every model maps stretches ``s`` of shape ``(..., 3)`` to an energy density,
its gradient ``(..., 3)`` and its stretch Hessian ``(..., 3, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DomainError",
    "EnergyEval",
    "EnergyModel",
    "Arap",
    "SymmetricDirichlet",
    "NeoHookean",
    "CustomEnergy",
    "make_model",
    "evaluate",
    "twist_flip_pair",
    "twist_flip_all",
    "degeneracy_threshold",
    "PAIRS",
    "MODEL_NAMES",
]

PAIRS = ((0, 1), (1, 2), (2, 0))
_TAU_REL = 1e-6


class DomainError(ValueError):
    """Stretches outside a model's admissible set."""

    def __init__(self, message: str, element: Optional[int] = None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class EnergyEval:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def degeneracy_threshold(sa, sb):
    """Switch point between difference quotients and their analytic limits."""
    return _TAU_REL * np.maximum(1.0, np.maximum(np.abs(sa), np.abs(sb)))


class EnergyModel:
    """Base class; subclasses implement ``_value``, ``_grad`` and ``_hess``."""

    name = "base"
    positive_only = False

    def params(self) -> dict:
        return {}

    def admissible(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        ok = np.isfinite(s).all(axis=-1)
        if self.positive_only:
            ok &= (s > 0.0).all(axis=-1)
        return ok

    def evaluate(self, s) -> EnergyEval:
        s = np.asarray(s, dtype=float)
        ok = self.admissible(s)
        if not np.all(ok):
            bad = np.argwhere(~np.atleast_1d(ok))[0]
            raise DomainError(
                f"{self.name}: stretches {np.atleast_2d(s)[bad[0]]} outside admissible domain"
            )
        return EnergyEval(self._value(s), self._grad(s), self._hess(s))

    def twist_limit(self, s, a: int, b: int, ev: EnergyEval):
        """Value of (g_a - g_b)/(s_a - s_b) as s_a -> s_b.

        Averaging the two diagonal entries keeps the error second order in
        the gap, so the switch from the quotient is continuous to ~tau^2.
        """
        h = ev.hess
        return 0.5 * (h[..., a, a] + h[..., b, b]) - h[..., a, b]

    def flip_limit(self, s, a: int, b: int, ev: EnergyEval):
        """Value of (g_a + g_b)/(s_a + s_b) as s_a -> -s_b.

        Exact when the stretch gradient is odd in each argument. Energies
        without that symmetry (ARAP with signed stretches) are genuinely
        singular there, and this finite value only seeds the SPD clamp.
        """
        h = ev.hess
        return 0.5 * (h[..., a, a] + h[..., b, b]) + h[..., a, b]

    def _value(self, s):
        raise NotImplementedError

    def _grad(self, s):
        raise NotImplementedError

    def _hess(self, s):
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Arap(EnergyModel):
    """sum (s_i - 1)^2. Accepts inverted stretches."""

    name = "arap"

    def _value(self, s):
        return np.sum((s - 1.0) ** 2, axis=-1)

    def _grad(self, s):
        return 2.0 * (s - 1.0)

    def _hess(self, s):
        return np.broadcast_to(2.0 * np.eye(3), s.shape[:-1] + (3, 3)).copy()


class SymmetricDirichlet(EnergyModel):
    """sum (s_i^2 + s_i^-2), restricted to positive stretches."""

    name = "symdirichlet"
    positive_only = True

    def _value(self, s):
        return np.sum(s * s + 1.0 / (s * s), axis=-1)

    def _grad(self, s):
        return 2.0 * s - 2.0 / s**3

    def _hess(self, s):
        d = 2.0 + 6.0 / s**4
        return d[..., None] * np.eye(3)


class NeoHookean(EnergyModel):
    """(mu/2)(sum s^2 - 3) - mu log J + (lam/2)(log J)^2 with J = prod s."""

    name = "neohookean"
    positive_only = True

    def __init__(self, mu: float = 1.0, lam: float = 1.0):
        if not (np.isfinite(mu) and np.isfinite(lam)):
            raise ValueError("Neo-Hookean parameters must be finite")
        self.mu = float(mu)
        self.lam = float(lam)

    def params(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam}

    def _value(self, s):
        logj = np.sum(np.log(s), axis=-1)
        return (
            0.5 * self.mu * (np.sum(s * s, axis=-1) - 3.0)
            - self.mu * logj
            + 0.5 * self.lam * logj**2
        )

    def _grad(self, s):
        logj = np.sum(np.log(s), axis=-1)[..., None]
        return self.mu * s + (self.lam * logj - self.mu) / s

    def _hess(self, s):
        logj = np.sum(np.log(s), axis=-1)[..., None]
        inv = 1.0 / s
        diag = self.mu + (self.mu - self.lam * logj) * inv * inv
        return self.lam * (inv[..., :, None] * inv[..., None, :]) + diag[..., None] * np.eye(3)


class CustomEnergy(EnergyModel):
    """User-supplied energy from callables on ``(..., 3)`` stretch arrays.

    Without explicit limit callables, twist/flip values at coincident
    stretches are taken from the quotient at a symmetric split of width
    ``tau`` around the degenerate point.
    """

    def __init__(
        self,
        value: Callable,
        grad: Callable,
        hess: Callable,
        *,
        name: str = "custom",
        admissible: Optional[Callable] = None,
        twist_limit: Optional[Callable] = None,
        flip_limit: Optional[Callable] = None,
    ):
        self.name = name
        self._fv, self._fg, self._fh = value, grad, hess
        self._adm = admissible
        self._twist = twist_limit
        self._flip = flip_limit

    def admissible(self, s):
        ok = super().admissible(s)
        if self._adm is not None:
            ok = ok & np.asarray(self._adm(np.asarray(s, dtype=float)), dtype=bool)
        return ok

    def _value(self, s):
        return np.asarray(self._fv(s), dtype=float)

    def _grad(self, s):
        return np.asarray(self._fg(s), dtype=float)

    def _hess(self, s):
        return np.asarray(self._fh(s), dtype=float)

    def twist_limit(self, s, a, b, ev):
        if self._twist is not None:
            return self._twist(s, a, b)
        s = np.array(s, dtype=float, copy=True)
        mid = 0.5 * (s[..., a] + s[..., b])
        tau = degeneracy_threshold(s[..., a], s[..., b])
        s[..., a], s[..., b] = mid + tau, mid - tau
        g = self._grad(s)
        return (g[..., a] - g[..., b]) / (2.0 * tau)

    def flip_limit(self, s, a, b, ev):
        if self._flip is not None:
            return self._flip(s, a, b)
        s = np.array(s, dtype=float, copy=True)
        half = 0.5 * (s[..., a] - s[..., b])
        tau = degeneracy_threshold(s[..., a], s[..., b])
        s[..., a], s[..., b] = half + tau, -half + tau
        g = self._grad(s)
        return (g[..., a] + g[..., b]) / (2.0 * tau)


MODEL_NAMES = ("arap", "symdirichlet", "neohookean")


def make_model(name: str, **params) -> EnergyModel:
    """Build a shipped model from its string id (``mu``/``lambda`` for Neo-Hookean)."""
    key = name.strip().lower()
    if key == "arap":
        return Arap()
    if key in ("symdirichlet", "symmetric_dirichlet", "sd"):
        return SymmetricDirichlet()
    if key in ("neohookean", "neo_hookean", "nh"):
        mu = params.get("mu", 1.0)
        lam = params.get("lambda", params.get("lam", 1.0))
        return NeoHookean(1.0 if mu is None else mu, 1.0 if lam is None else lam)
    raise ValueError(f"unknown energy '{name}' (choose from {', '.join(MODEL_NAMES)})")


def evaluate(model: EnergyModel, s) -> EnergyEval:
    return model.evaluate(s)


def twist_flip_pair(model: EnergyModel, s, a: int, b: int, ev: Optional[EnergyEval] = None):
    """Twist and flip values for the stretch pair ``(a, b)``.

    twist = (g_a - g_b)/(s_a - s_b), flip = (g_a + g_b)/(s_a + s_b), with the
    model's analytic limits substituted once a denominator drops below the
    degeneracy threshold.
    """
    if a == b:
        raise ValueError("twist/flip needs two distinct stretch indices")
    s = np.asarray(s, dtype=float)
    if ev is None:
        ev = model.evaluate(s)
    sa, sb = s[..., a], s[..., b]
    ga, gb = ev.grad[..., a], ev.grad[..., b]
    tau = degeneracy_threshold(sa, sb)
    diff = sa - sb
    summ = sa + sb
    near_diff = np.abs(diff) < tau
    near_sum = np.abs(summ) < tau
    with np.errstate(divide="ignore", invalid="ignore"):
        twist = (ga - gb) / np.where(near_diff, 1.0, diff)
        flip = (ga + gb) / np.where(near_sum, 1.0, summ)
    if np.any(near_diff):
        twist = np.where(near_diff, model.twist_limit(s, a, b, ev), twist)
    if np.any(near_sum):
        flip = np.where(near_sum, model.flip_limit(s, a, b, ev), flip)
    return twist, flip


def twist_flip_all(model: EnergyModel, s, ev: Optional[EnergyEval] = None) -> np.ndarray:
    """``(..., 3, 2)`` array of (twist, flip) for pairs (0,1), (1,2), (2,0)."""
    s = np.asarray(s, dtype=float)
    if ev is None:
        ev = model.evaluate(s)
    out = [np.stack(twist_flip_pair(model, s, a, b, ev), axis=-1) for a, b in PAIRS]
    return np.stack(out, axis=-2)
