"""Projected Newton with backtracking line search."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ConstraintSet, ElementRefs, TetMesh, evaluate_mesh, free_dofs, precompute
from .energy import DomainError, EnergyModel

__all__ = ["SolverConfig", "IterRecord", "SolveTrace", "Status", "newton_step", "minimize", "solve_spd"]

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STALLED = "stalled"  # line search could not make progress


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    grad_tol: float | None = None  # None -> 1e-6 * mesh scale
    eps: float = 1e-8
    c1: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 60
    linear_solver: str = "pcg"
    linear_tol: float = 1e-10
    dense_fallback_max: int = 3000

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.c1 < 0.5:
            raise ValueError("c1 must lie in (0, 1/2)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.linear_solver not in ("pcg", "cholesky"):
            raise ValueError("linear_solver must be 'pcg' or 'cholesky'")
        if not self.linear_tol > 0:
            raise ValueError("linear_tol must be positive")

    def tolerance(self, mesh: TetMesh) -> float:
        return self.grad_tol if self.grad_tol is not None else 1e-6 * mesh.scale()


@dataclass
class IterRecord:
    iter: int
    energy: float
    grad_inf: float
    step: float
    clamps: int
    cg_iters: int
    ms: float
    direction: str = "newton"


@dataclass
class SolveTrace:
    initial_energy: float = float("nan")
    initial_grad_inf: float = float("nan")
    records: list[IterRecord] = field(default_factory=list)
    status: Status = Status.MAX_ITERS

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def energies(self) -> list[float]:
        return [self.initial_energy] + [r.energy for r in self.records]

    @property
    def final_grad_inf(self) -> float:
        return self.records[-1].grad_inf if self.records else self.initial_grad_inf


def solve_spd(a: sp.csr_matrix, b: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray | None, int, str]:
    """Solve ``a p = b``: Jacobi-preconditioned CG, dense Cholesky as fallback.

    Returns ``(p, cg_iterations, method)``; ``p`` is None if both fail.
    """
    n = a.shape[0]
    iters = 0
    if cfg.linear_solver == "pcg":
        diag = a.diagonal()
        if np.all(diag > 0):
            inv = 1.0 / diag
            precond = spla.LinearOperator((n, n), matvec=lambda v: inv * v, dtype=float)
            count = [0]

            def cb(_):
                count[0] += 1

            p, info = spla.cg(a, b, rtol=cfg.linear_tol, atol=0.0, maxiter=10 * n, M=precond, callback=cb)
            iters = count[0]
            if info == 0 and np.all(np.isfinite(p)):
                return p, iters, "pcg"
            log.debug("pcg failed (info=%d) after %d iterations", info, iters)
    if n <= cfg.dense_fallback_max:
        try:
            c = scipy.linalg.cho_factor(a.toarray())
            p = scipy.linalg.cho_solve(c, b)
            if np.all(np.isfinite(p)):
                return p, iters, "cholesky"
        except (np.linalg.LinAlgError, ValueError):
            log.debug("dense Cholesky fallback failed")
    return None, iters, "failed"


def newton_step(
    mesh: TetMesh,
    model: EnergyModel,
    refs: ElementRefs,
    cfg: SolverConfig,
    pins: ConstraintSet | None = None,
    x=None,
):
    """Projected Newton direction at ``x`` (defaults to ``mesh.x``).

    Returns ``(p, record)`` with ``p`` a flat 3n vector that is zero on pinned
    coordinates. Falls back to steepest descent if the linear solve fails or
    does not give a descent direction.
    """
    t0 = time.perf_counter()
    x = mesh.x if x is None else x
    ev = evaluate_mesh(mesh, model, refs, pins, x, gradient=True, hessian=False)
    g = ev.gradient
    p = np.zeros_like(g)
    rec = IterRecord(0, ev.energy, float(np.max(np.abs(g), initial=0.0)), 0.0, 0, 0, 0.0)
    if not np.any(g):
        rec.ms = 1e3 * (time.perf_counter() - t0)
        return p, rec
    hev = evaluate_mesh(mesh, model, refs, pins, x, gradient=False, hessian=True, eps=cfg.eps)
    free = free_dofs(mesh.n_vertices, pins)
    gf = g[free]
    pf, cg_iters, method = solve_spd(hev.hessian, -gf, cfg)
    rec.clamps = hev.clamps
    rec.cg_iters = cg_iters
    if pf is None or not np.dot(pf, gf) < 0:
        pf = -gf
        method = "gradient"
    rec.direction = "newton" if method != "gradient" else "gradient"
    p[free] = pf
    rec.ms = 1e3 * (time.perf_counter() - t0)
    return p, rec


def minimize(
    mesh: TetMesh,
    model: EnergyModel,
    constraints: ConstraintSet | None = None,
    cfg: SolverConfig | None = None,
    refs: ElementRefs | None = None,
) -> tuple[TetMesh, SolveTrace]:
    """Minimize total distortion energy over the free vertices.

    Pinned vertices are moved to their targets before the first iteration and
    never touched again. The returned mesh is a copy.
    """
    cfg = cfg or SolverConfig()
    constraints = constraints or ConstraintSet()
    constraints.validate(mesh.n_vertices)
    out = mesh.copy()
    out.x = constraints.apply(out.x)
    refs = refs if refs is not None else precompute(out)
    tol = cfg.tolerance(out)

    ev = evaluate_mesh(out, model, refs, constraints, out.x)  # raises DomainError if inadmissible
    trace = SolveTrace(initial_energy=ev.energy, initial_grad_inf=_inf(ev.gradient))
    energy, grad_inf = ev.energy, trace.initial_grad_inf
    x = out.x.reshape(-1).copy()

    for it in range(1, cfg.max_iters + 1):
        if grad_inf < tol:
            trace.status = Status.CONVERGED
            break
        t0 = time.perf_counter()
        p, rec = newton_step(out, model, refs, cfg, constraints, x.reshape(-1, 3))
        slope = float(np.dot(p, ev.gradient))
        alpha, accepted = 1.0, None
        for _ in range(cfg.max_halvings + 1):
            trial = (x + alpha * p).reshape(-1, 3)
            try:
                e_trial = evaluate_mesh(out, model, refs, x=trial, gradient=False).energy
            except DomainError:
                e_trial = np.inf  # admissibility backoff
            if np.isfinite(e_trial) and e_trial <= energy + cfg.c1 * alpha * slope:
                accepted = (trial, e_trial)
                break
            alpha *= cfg.shrink
        if accepted is None:
            trace.status = Status.STALLED
            log.info("line search stalled at iteration %d", it)
            break
        x = accepted[0].reshape(-1)
        energy = accepted[1]
        ev = evaluate_mesh(out, model, refs, constraints, accepted[0])
        grad_inf = _inf(ev.gradient)
        rec.iter, rec.energy, rec.grad_inf, rec.step = it, energy, grad_inf, alpha
        rec.ms = 1e3 * (time.perf_counter() - t0)
        trace.records.append(rec)
        log.debug("iter %d  E=%.12g  |g|=%.3e  step=%.3g", it, energy, grad_inf, alpha)
    else:
        trace.status = Status.CONVERGED if grad_inf < tol else Status.MAX_ITERS

    out.x = x.reshape(-1, 3)
    return out, trace


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))
