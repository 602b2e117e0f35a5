"""Mesh-level energy, gradient and sparse projected Hessian."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .eigsys import DEFAULT_EPS, element_gradient, factorize_element, project_spd
from .energy import DomainError, EnergyModel
from .smallmat import signed_svd3
from .svd_diff import dfdx_from_rest, shape_gradients

__all__ = [
    "MeshError",
    "TetMesh",
    "ElementRef",
    "ElementRefs",
    "ConstraintSet",
    "precompute",
    "deformation_gradients",
    "admissible",
    "total_energy",
    "total_gradient",
    "assemble_projected_hessian",
    "evaluate_mesh",
    "MeshEval",
    "free_dofs",
    "worker_count",
]

CHUNK = 4096


class MeshError(ValueError):
    def __init__(self, message: str, element=None):
        super().__init__(message)
        self.element = element


@dataclass
class TetMesh:
    rest: np.ndarray
    x: np.ndarray
    tets: np.ndarray

    def __post_init__(self):
        self.rest = np.asarray(self.rest, dtype=float).reshape(-1, 3)
        self.x = np.asarray(self.x, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        if self.rest.shape != self.x.shape:
            raise MeshError("rest and deformed vertex arrays differ in shape")
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= len(self.rest)):
            raise MeshError("tetrahedron references a vertex out of range")
        if not (np.isfinite(self.rest).all() and np.isfinite(self.x).all()):
            raise MeshError("non-finite vertex coordinates")

    @classmethod
    def from_rest(cls, rest, tets) -> "TetMesh":
        rest = np.asarray(rest, dtype=float)
        return cls(rest, rest.copy(), tets)

    @property
    def n_vertices(self) -> int:
        return len(self.rest)

    @property
    def n_elements(self) -> int:
        return len(self.tets)

    def scale(self) -> float:
        """Largest extent of the rest bounding box (1 for an empty mesh)."""
        if not len(self.rest):
            return 1.0
        ext = float(np.max(self.rest.max(axis=0) - self.rest.min(axis=0)))
        return ext if ext > 0 else 1.0

    def copy(self) -> "TetMesh":
        return TetMesh(self.rest.copy(), self.x.copy(), self.tets.copy())


@dataclass(frozen=True)
class ElementRef:
    dm_inv: np.ndarray
    volume: float
    dfdx: np.ndarray


@dataclass(frozen=True)
class ElementRefs:
    """Rest data for every element, stored as stacked arrays."""

    dm_inv: np.ndarray  # (m, 3, 3)
    volume: np.ndarray  # (m,)
    dfdx: np.ndarray  # (m, 9, 3, 3)
    shape_grads: np.ndarray  # (m, 4, 3)

    def __len__(self) -> int:
        return len(self.volume)

    def __getitem__(self, i: int) -> ElementRef:
        return ElementRef(self.dm_inv[i], float(self.volume[i]), self.dfdx[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass
class ConstraintSet:
    """Pinned vertices and the positions they are held at."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 3)
        if len(self.indices) != len(self.targets):
            raise MeshError("each pin needs exactly one target position")
        if len(np.unique(self.indices)) != len(self.indices):
            raise MeshError("vertex pinned more than once")
        if not np.isfinite(self.targets).all():
            raise MeshError("pin targets must be finite")

    @classmethod
    def at_rest(cls, mesh: TetMesh, indices) -> "ConstraintSet":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(idx, mesh.rest[idx])

    def validate(self, n_vertices: int) -> None:
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n_vertices):
            raise MeshError("pinned vertex out of range")
        if len(self.indices) >= n_vertices and n_vertices > 0:
            raise MeshError("every vertex is pinned; nothing to optimize")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        x[self.indices] = self.targets
        return x


def worker_count() -> int:
    env = os.environ.get("SH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def _chunked(fn, m: int):
    """Run ``fn(lo, hi)`` over element chunks, results in element order."""
    bounds = [(lo, min(lo + CHUNK, m)) for lo in range(0, m, CHUNK)]
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def precompute(mesh: TetMesh) -> ElementRefs:
    """Rest-shape inverse, volume and ``dF/dx`` for every element.

    Rest tetrahedra must be positively oriented and not degenerate.
    """
    r = mesh.rest[mesh.tets]
    dm = np.swapaxes(r[:, 1:, :] - r[:, :1, :], 1, 2)
    det = np.linalg.det(dm) if len(dm) else np.zeros(0)
    tiny = 1e-12 * mesh.scale() ** 3
    bad = np.flatnonzero(np.abs(det) < tiny)
    if len(bad):
        raise MeshError(f"element {bad[0]} has a degenerate rest shape", element=int(bad[0]))
    neg = np.flatnonzero(det < 0)
    if len(neg):
        raise MeshError(f"element {neg[0]} is inverted in the rest shape", element=int(neg[0]))
    dm_inv = np.linalg.inv(dm) if len(dm) else np.zeros((0, 3, 3))
    return ElementRefs(
        dm_inv=dm_inv,
        volume=det / 6.0,
        dfdx=dfdx_from_rest(dm_inv),
        shape_grads=shape_gradients(dm_inv),
    )


def deformation_gradients(mesh: TetMesh, refs: ElementRefs, x=None) -> np.ndarray:
    x = mesh.x if x is None else x
    p = x[mesh.tets]
    dw = np.swapaxes(p[:, 1:, :] - p[:, :1, :], 1, 2)
    return dw @ refs.dm_inv


def admissible(mesh: TetMesh, model: EnergyModel, refs: ElementRefs, x=None) -> bool:
    """True when every element's signed stretches lie in the model's domain."""
    svd = signed_svd3(deformation_gradients(mesh, refs, x))
    return bool(np.all(model.admissible(svd.sigma)))


@dataclass
class MeshEval:
    energy: float
    gradient: np.ndarray | None = None  # (3n,)
    hessian: sp.csr_matrix | None = None  # free DOFs only
    clamps: int = 0


def free_dofs(n_vertices: int, pins: ConstraintSet | None) -> np.ndarray:
    free = np.ones(n_vertices, dtype=bool)
    if pins is not None and len(pins.indices):
        free[pins.indices] = False
    verts = np.flatnonzero(free)
    return (3 * verts[:, None] + np.arange(3)).reshape(-1)


def evaluate_mesh(
    mesh: TetMesh,
    model: EnergyModel,
    refs: ElementRefs,
    pins: ConstraintSet | None = None,
    x=None,
    *,
    gradient: bool = True,
    hessian: bool = False,
    eps: float = DEFAULT_EPS,
) -> MeshEval:
    """Energy and, on request, gradient and projected Hessian in one pass."""
    x = mesh.x if x is None else np.asarray(x, dtype=float)
    m = mesh.n_elements
    fall = deformation_gradients(mesh, refs, x)

    def work(lo, hi):
        svd = signed_svd3(fall[lo:hi])
        ok = model.admissible(svd.sigma)
        if not np.all(ok):
            e = lo + int(np.flatnonzero(~ok)[0])
            raise DomainError(
                f"element {e}: stretches {svd.sigma[e - lo]} outside {model.name} domain",
                element=e,
            )
        ev = model.evaluate(svd.sigma)
        out = {"psi": ev.value}
        if gradient:
            out["g"] = element_gradient(ev.grad, svd, refs.shape_grads[lo:hi])
        if hessian:
            fact = factorize_element(model, svd, refs.dfdx[lo:hi], ev)
            proj = project_spd(fact, eps)
            out["h"] = proj.matrix
            out["clamps"] = int(proj.clamped.sum())
        return out

    parts = _chunked(work, m)
    vol = refs.volume
    psi = np.concatenate([p["psi"] for p in parts]) if parts else np.zeros(0)
    result = MeshEval(energy=float(np.dot(vol, psi)))

    fixed = None
    if pins is not None and len(pins.indices):
        fixed = pins.indices
    if gradient:
        g = np.zeros((mesh.n_vertices, 3))
        if parts:
            ge = np.concatenate([p["g"] for p in parts]) * vol[:, None, None]
            np.add.at(g, mesh.tets, ge)
        if fixed is not None:
            g[fixed] = 0.0
        result.gradient = g.reshape(-1)
    if hessian:
        free = free_dofs(mesh.n_vertices, pins)
        dof_map = np.full(3 * mesh.n_vertices, -1, dtype=np.int64)
        dof_map[free] = np.arange(len(free))
        nfree = len(free)
        if parts:
            he = np.concatenate([p["h"] for p in parts]) * vol[:, None, None]
            edofs = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(m, 12)
            loc = dof_map[edofs]
            rows = np.broadcast_to(loc[:, :, None], (m, 12, 12))
            cols = np.broadcast_to(loc[:, None, :], (m, 12, 12))
            keep = (rows >= 0) & (cols >= 0)
            mat = sp.coo_matrix((he[keep], (rows[keep], cols[keep])), shape=(nfree, nfree)).tocsr()
            mat.sum_duplicates()
            # duplicate summation order differs across mirrored entries; a + b == b + a
            mat = ((mat + mat.T) * 0.5).tocsr()
            result.clamps = sum(p["clamps"] for p in parts)
        else:
            mat = sp.csr_matrix((nfree, nfree))
        result.hessian = mat
    return result


def total_energy(mesh: TetMesh, model: EnergyModel, refs: ElementRefs, x=None) -> float:
    """Sum over elements of rest volume times energy density."""
    return evaluate_mesh(mesh, model, refs, x=x, gradient=False).energy


def total_gradient(
    mesh: TetMesh, model: EnergyModel, refs: ElementRefs, pins: ConstraintSet | None = None, x=None
) -> np.ndarray:
    """Flat ``3n`` gradient with pinned coordinates zeroed."""
    return evaluate_mesh(mesh, model, refs, pins, x).gradient


def assemble_projected_hessian(
    mesh: TetMesh,
    model: EnergyModel,
    refs: ElementRefs,
    eps: float = DEFAULT_EPS,
    pins: ConstraintSet | None = None,
    x=None,
) -> sp.csr_matrix:
    """Sparse sum of volume-weighted projected element Hessians over free DOFs."""
    return evaluate_mesh(mesh, model, refs, pins, x, gradient=False, hessian=True, eps=eps).hessian
