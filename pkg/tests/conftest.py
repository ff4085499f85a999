from __future__ import annotations

import numpy as np
import pytest

from pseudosdf.geometry import TriangleMesh, box_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def unit_cube() -> TriangleMesh:
    return box_mesh(half_extents=(0.5, 0.5, 0.5))


def random_soup(rng, count: int, scale: float = 1.0) -> TriangleMesh:
    """Random triangle soup; a few members are near-degenerate slivers."""
    verts = rng.uniform(-scale, scale, size=(count * 3, 3))
    # squash some triangles toward a line to exercise degenerate handling
    for k in range(0, count * 3, 37):
        if k + 2 < len(verts):
            a, b = verts[k], verts[k + 1]
            verts[k + 2] = a + 0.5 * (b - a) + rng.normal(scale=1e-12, size=3)
    tris = np.arange(count * 3).reshape(-1, 3)
    return TriangleMesh(verts, tris)


def ray_parity_inside(mesh: TriangleMesh, points: np.ndarray, direction=(0.285, 0.622, 0.731)) -> np.ndarray:
    """Inside test by ray-crossing parity (Moller-Trumbore per triangle)."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    corners = mesh.triangle_corners()
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    inside = np.zeros(len(points), dtype=bool)
    h = np.cross(d, e2)
    a = np.einsum("tj,tj->t", e1, h)
    ok = np.abs(a) > 1e-12
    f = np.zeros_like(a)
    f[ok] = 1.0 / a[ok]
    for i, p in enumerate(np.asarray(points, dtype=np.float64)):
        s = p - v0
        u = f * np.einsum("tj,tj->t", s, h)
        q = np.cross(s, e1)
        v = f * np.einsum("j,tj->t", d, q)
        t = f * np.einsum("tj,tj->t", e2, q)
        hit = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        inside[i] = hit.sum() % 2 == 1
    return inside
