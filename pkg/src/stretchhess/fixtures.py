"""Small reference meshes used by tests, the CLI and the examples."""
from __future__ import annotations

import itertools

import numpy as np

from .assembly import ConstraintSet, TetMesh

__all__ = ["unit_tet", "cube_mesh", "twist_about_z", "twisted_cube"]


def unit_tet() -> TetMesh:
    rest = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return TetMesh.from_rest(rest, [[0, 1, 2, 3]])


def cube_mesh(n: int = 1, size: float = 1.0) -> TetMesh:
    """Axis-aligned cube split into ``n^3`` cells of six tetrahedra each.

    Every cell uses the same six tetrahedra around its main diagonal, so
    neighbouring cells share faces. All tetrahedra are positively oriented.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    g = np.linspace(0.0, size, n + 1)
    ii, jj, kk = np.meshgrid(np.arange(n + 1), np.arange(n + 1), np.arange(n + 1), indexing="ij")
    rest = np.stack([g[ii.ravel()], g[jj.ravel()], g[kk.ravel()]], axis=1)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    local = []
    for perm in itertools.permutations(range(3)):
        c = np.zeros(3, dtype=int)
        path = [c.copy()]
        for axis in perm[:2]:
            c[axis] = 1
            path.append(c.copy())
        path.append(np.ones(3, dtype=int))
        local.append(path)

    tets = []
    for i, j, k in itertools.product(range(n), repeat=3):
        for path in local:
            t = [vid(i + a, j + b, k + c) for a, b, c in path]
            p = rest[t]
            if np.linalg.det((p[1:] - p[0]).T) < 0:
                t[2], t[3] = t[3], t[2]
            tets.append(t)
    return TetMesh.from_rest(rest, np.array(tets))


def twist_about_z(points, angle, center=(0.5, 0.5)) -> np.ndarray:
    """Rotate each point about the vertical axis by ``angle * z / height``."""
    p = np.array(points, dtype=float)
    z0, z1 = p[:, 2].min(), p[:, 2].max()
    t = (p[:, 2] - z0) / (z1 - z0 if z1 > z0 else 1.0)
    th = angle * t
    cx, cy = center
    dx, dy = p[:, 0] - cx, p[:, 1] - cy
    p[:, 0] = cx + np.cos(th) * dx - np.sin(th) * dy
    p[:, 1] = cy + np.sin(th) * dx + np.cos(th) * dy
    return p


def twisted_cube(n: int = 3, angle_deg: float = 60.0) -> tuple[TetMesh, ConstraintSet]:
    """Cube with the bottom face pinned and the top face twisted about z.

    The deformed pose starts from the linearly interpolated twist, so it is
    admissible for every supported energy. Interior layers are free.
    """
    mesh = cube_mesh(n)
    z = mesh.rest[:, 2]
    bottom = np.flatnonzero(np.isclose(z, 0.0))
    top = np.flatnonzero(np.isclose(z, 1.0))
    mesh.x = twist_about_z(mesh.rest, np.deg2rad(angle_deg))
    idx = np.concatenate([bottom, top])
    pins = ConstraintSet(idx, mesh.x[idx])
    return mesh, pins
