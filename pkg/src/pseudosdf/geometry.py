"""Triangle meshes, OBJ I/O, BVH closest-point queries and winding numbers.

Everything distance-related funnels through one exact point-to-triangle
projection kernel so that brute-force checks and accelerated queries cannot
drift apart numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


class ObjFormatError(ValueError):
    """Raised for OBJ files that violate the supported v/f subset."""


@dataclass
class TriangleMesh:
    """Indexed triangle soup: ``vertices`` (V, 3) float64, ``triangles`` (T, 3) int64."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    def validate(self) -> None:
        if not np.isfinite(self.vertices).all():
            raise ValueError("mesh has non-finite vertex coordinates")
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle index out of range")
            t = self.triangles
            if ((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])).any():
                raise ValueError("triangle with repeated vertex index")

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_corners(self) -> np.ndarray:
        """(T, 3, 3) corner positions."""
        return self.vertices[self.triangles]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_areas(self) -> np.ndarray:
        c = self.triangle_corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


def load_obj(path) -> TriangleMesh:
    """Parse an ASCII OBJ (v/f subset; polygons are fan-triangulated).

    ``f`` entries may carry ``/vt/vn`` suffixes, which are stripped.  Negative
    indices are resolved relative to the vertices seen so far, zero indices
    are rejected.
    """
    path = Path(path)
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise ObjFormatError(f"{path}:{lineno}: non-numeric coordinate") from exc
            elif tag == "f":
                idx = []
                for token in parts[1:]:
                    head = token.split("/", 1)[0]
                    try:
                        k = int(head)
                    except ValueError as exc:
                        raise ObjFormatError(f"{path}:{lineno}: bad face index {token!r}") from exc
                    if k == 0:
                        raise ObjFormatError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
                    if k < 0:
                        k = len(vertices) + 1 + k
                    if not 1 <= k <= len(vertices):
                        raise ObjFormatError(f"{path}:{lineno}: face index {k} out of range")
                    idx.append(k - 1)
                if len(idx) < 3:
                    raise ObjFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                for a, b in zip(idx[1:-1], idx[2:]):
                    triangles.append((idx[0], a, b))
            # normals, texcoords, groups, materials: ignored
    mesh = TriangleMesh(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(triangles, dtype=np.int64).reshape(-1, 3),
    )
    mesh.validate()
    return mesh


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write an ASCII OBJ with coordinates at 9 significant digits."""
    mesh.validate()
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}\n")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def normalize_to_unit_volume(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale the longest axis to 1.9.

    The 5% padding keeps the surface strictly inside the [-1, 1]^3 sampling
    volume so no grid corner can sit exactly on it.
    """
    if len(mesh.vertices) == 0:
        raise ValueError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise ValueError("degenerate mesh: zero-extent bounding box")
    center = (lo + hi) / 2.0
    scale = 1.9 / extent
    return TriangleMesh((mesh.vertices - center) * scale, mesh.triangles.copy())


@dataclass
class ClosestPointResult:
    point: np.ndarray
    distance: float
    triangle: int


def _closest_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.broadcast_to(a, p.shape).copy()
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return a + t[:, None] * ab


def closest_on_triangle(p: np.ndarray, a, b, c) -> np.ndarray:
    """Exact closest point on triangle abc for each row of ``p`` (Q, 3).

    Region-classification projection (interior / edge / vertex cases); the
    masks are applied lowest-priority first so each point ends up with its
    first matching region, mirroring the usual scalar control flow.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    ab = b - a
    ac = c - a
    cross = np.cross(ab, ac)
    if float(cross @ cross) <= 1.0e-300:
        # degenerate triangle: closest point over its three edges
        cands = np.stack(
            [
                _closest_on_segment(p, a, b),
                _closest_on_segment(p, b, c),
                _closest_on_segment(p, a, c),
            ]
        )
        d2 = ((cands - p[None, :, :]) ** 2).sum(axis=2)
        pick = d2.argmin(axis=0)
        return cands[pick, np.arange(len(p))]

    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        # face interior (fallback)
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom
        out = a + v_face[:, None] * ab + w_face[:, None] * ac

        # edge BC
        num_bc = d4 - d3
        den_bc = num_bc + (d5 - d6)
        w_bc = np.where(den_bc != 0.0, num_bc / np.where(den_bc == 0.0, 1.0, den_bc), 0.0)
        m = (va <= 0.0) & (num_bc >= 0.0) & (d5 - d6 >= 0.0)
        out = np.where(m[:, None], b + np.clip(w_bc, 0.0, 1.0)[:, None] * (c - b), out)

        # edge AC
        w_ac = np.where(d2 - d6 != 0.0, d2 / np.where(d2 - d6 == 0.0, 1.0, d2 - d6), 0.0)
        m = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
        out = np.where(m[:, None], a + np.clip(w_ac, 0.0, 1.0)[:, None] * ac, out)

        # vertex C
        m = (d6 >= 0.0) & (d5 <= d6)
        out = np.where(m[:, None], c, out)

        # edge AB
        v_ab = np.where(d1 - d3 != 0.0, d1 / np.where(d1 - d3 == 0.0, 1.0, d1 - d3), 0.0)
        m = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
        out = np.where(m[:, None], a + np.clip(v_ab, 0.0, 1.0)[:, None] * ab, out)

        # vertex B
        m = (d3 >= 0.0) & (d4 <= d3)
        out = np.where(m[:, None], b, out)

        # vertex A
        m = (d1 <= 0.0) & (d2 <= 0.0)
        out = np.where(m[:, None], a, out)
    return out


def brute_force_closest(mesh: TriangleMesh, points: np.ndarray):
    """Reference closest-point query scanning every triangle.

    Returns (closest points (Q, 3), distances (Q,), triangle indices (Q,)).
    Ties at equal distance resolve to the lowest triangle index.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    best_d2 = np.full(len(points), np.inf)
    best_pt = np.zeros_like(points)
    best_tri = np.full(len(points), -1, dtype=np.int64)
    corners = mesh.triangle_corners()
    for t in range(len(corners)):
        cp = closest_on_triangle(points, *corners[t])
        d2 = ((cp - points) ** 2).sum(axis=1)
        upd = d2 < best_d2
        best_d2[upd] = d2[upd]
        best_pt[upd] = cp[upd]
        best_tri[upd] = t
    return best_pt, np.sqrt(best_d2), best_tri


@dataclass
class Bvh:
    """Axis-aligned box tree over triangles (median split, leaves <= 4).

    Immutable after construction; queries are read-only and safe to issue
    from multiple threads.
    """

    mesh: TriangleMesh
    node_lo: np.ndarray = field(repr=False, default=None)
    node_hi: np.ndarray = field(repr=False, default=None)
    node_left: np.ndarray = field(repr=False, default=None)
    node_right: np.ndarray = field(repr=False, default=None)
    node_first: np.ndarray = field(repr=False, default=None)
    node_count: np.ndarray = field(repr=False, default=None)
    leaf_tris: np.ndarray = field(repr=False, default=None)

    LEAF_SIZE = 4

    def __post_init__(self) -> None:
        mesh = self.mesh
        mesh.validate()
        if mesh.is_empty:
            raise ValueError("cannot build a BVH over an empty mesh")
        corners = mesh.triangle_corners()
        tri_lo = corners.min(axis=1)
        tri_hi = corners.max(axis=1)
        centroids = corners.mean(axis=1)

        lo, hi, left, right, first, count, order = [], [], [], [], [], [], []

        def build(tris: np.ndarray) -> int:
            node = len(lo)
            lo.append(tri_lo[tris].min(axis=0))
            hi.append(tri_hi[tris].max(axis=0))
            left.append(-1)
            right.append(-1)
            first.append(-1)
            count.append(0)
            if len(tris) <= self.LEAF_SIZE:
                first[node] = len(order)
                count[node] = len(tris)
                order.extend(np.sort(tris).tolist())
                return node
            cen = centroids[tris]
            axis = int((cen.max(axis=0) - cen.min(axis=0)).argmax())
            mid = len(tris) // 2
            part = tris[np.argsort(cen[:, axis], kind="stable")]
            left[node] = build(part[:mid])
            right[node] = build(part[mid:])
            return node

        build(np.arange(len(corners), dtype=np.int64))
        self.node_lo = np.array(lo)
        self.node_hi = np.array(hi)
        self.node_left = np.array(left, dtype=np.int64)
        self.node_right = np.array(right, dtype=np.int64)
        self.node_first = np.array(first, dtype=np.int64)
        self.node_count = np.array(count, dtype=np.int64)
        self.leaf_tris = np.array(order, dtype=np.int64)
        self._corners = corners
        # each subtree owns a contiguous leaf_tris range (DFS build order);
        # small subtrees are evaluated in one kernel call during queries
        n_nodes = len(self.node_lo)
        self._span_start = np.empty(n_nodes, dtype=np.int64)
        self._span_end = np.empty(n_nodes, dtype=np.int64)
        for node in range(n_nodes - 1, -1, -1):
            if self.node_count[node] > 0:
                self._span_start[node] = self.node_first[node]
                self._span_end[node] = self.node_first[node] + self.node_count[node]
            else:
                self._span_start[node] = self._span_start[self.node_left[node]]
                self._span_end[node] = self._span_end[self.node_right[node]]
        # per-triangle data hoisted out of the query kernel
        a = corners[:, 0]
        ab = corners[:, 1] - a
        ac = corners[:, 2] - a
        cross = np.cross(ab, ac)
        self._tri_a = a
        self._tri_ab = ab
        self._tri_ac = ac
        self._tri_degenerate = np.einsum("ij,ij->i", cross, cross) <= 1e-300
        # centroid tree seeds traversal with a tight upper bound per query
        self._centroid_tree = cKDTree(centroids)

    def _pair_closest(self, points: np.ndarray, tri_ids: np.ndarray):
        """Exact closest points for every (query, triangle) pair.

        ``points`` (Q, 3) paired with ``tri_ids`` of shape (K,) (shared
        column set) or (Q, K) (per-row sets) -> distances^2 (Q, K) and
        closest points (Q, K, 3).  Region-classification projection with the
        masks applied lowest-priority first; degenerate triangles fall back
        to their three edges.
        """
        shared = tri_ids.ndim == 1
        a = self._tri_a[tri_ids]
        ab = self._tri_ab[tri_ids]
        ac = self._tri_ac[tri_ids]
        if shared:
            a, ab, ac = a[None], ab[None], ac[None]  # broadcast over queries
        ap = points[:, None, :] - a
        d1 = (ap * ab).sum(-1)
        d2 = (ap * ac).sum(-1)
        bp = ap - ab
        d3 = (bp * ab).sum(-1)
        d4 = (bp * ac).sum(-1)
        cp = ap - ac
        d5 = (cp * ab).sum(-1)
        d6 = (cp * ac).sum(-1)
        va = d3 * d6 - d5 * d4
        vb = d5 * d2 - d1 * d6
        vc = d1 * d4 - d3 * d2

        def safe_div(num, den):
            return np.where(den != 0.0, num / np.where(den == 0.0, 1.0, den), 0.0)

        with np.errstate(divide="ignore", invalid="ignore"):
            v = safe_div(vb, va + vb + vc)
            w = safe_div(vc, va + vb + vc)
            uv = np.stack([v, w], axis=-1)

            num_bc = d4 - d3
            w_bc = np.clip(safe_div(num_bc, num_bc + (d5 - d6)), 0.0, 1.0)
            m = (va <= 0.0) & (num_bc >= 0.0) & (d5 - d6 >= 0.0)
            uv = np.where(m[..., None], np.stack([1.0 - w_bc, w_bc], axis=-1), uv)

            w_ac = np.clip(safe_div(d2, d2 - d6), 0.0, 1.0)
            m = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
            uv = np.where(m[..., None], np.stack([np.zeros_like(w_ac), w_ac], axis=-1), uv)

            m = (d6 >= 0.0) & (d5 <= d6)
            uv = np.where(m[..., None], np.array([0.0, 1.0]), uv)

            v_ab = np.clip(safe_div(d1, d1 - d3), 0.0, 1.0)
            m = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
            uv = np.where(m[..., None], np.stack([v_ab, np.zeros_like(v_ab)], axis=-1), uv)

            m = (d3 >= 0.0) & (d4 <= d3)
            uv = np.where(m[..., None], np.array([1.0, 0.0]), uv)

            m = (d1 <= 0.0) & (d2 <= 0.0)
            uv = np.where(m[..., None], np.array([0.0, 0.0]), uv)

        out = a + uv[..., :1] * ab + uv[..., 1:] * ac

        degenerate = self._tri_degenerate[tri_ids]
        if degenerate.any():
            if shared:
                degenerate = np.broadcast_to(degenerate[None], (len(points), len(tri_ids)))
                ids = np.broadcast_to(tri_ids[None], degenerate.shape)
            else:
                ids = tri_ids
            rows, cols = np.nonzero(degenerate)
            for t in np.unique(ids[rows, cols]):
                sel = ids[rows, cols] == t
                r = rows[sel]
                corners = self._corners[t]
                p = points[r]
                cands = np.stack(
                    [
                        _closest_on_segment(p, corners[0], corners[1]),
                        _closest_on_segment(p, corners[1], corners[2]),
                        _closest_on_segment(p, corners[0], corners[2]),
                    ]
                )
                dseg = ((cands - p[None]) ** 2).sum(axis=2)
                pick = dseg.argmin(axis=0)
                out[r, cols[sel]] = cands[pick, np.arange(len(p))]

        delta = out - points[:, None, :]
        return (delta * delta).sum(-1), out

    def _box_dist2(self, node_ids: np.ndarray, points: np.ndarray) -> np.ndarray:
        d = np.maximum(self.node_lo[node_ids] - points, 0.0)
        d = np.maximum(d, points - self.node_hi[node_ids])
        return (d * d).sum(axis=-1)

    GROUP_SIZE = 16  # subtrees this small are evaluated in one kernel call

    def closest_point_batch(self, points: np.ndarray):
        """Exact closest points for many queries.

        Returns (points on mesh (Q, 3), distances (Q,), triangle ids (Q,)).
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        q = len(points)
        best_d2 = np.full(q, np.inf)
        best_pt = np.zeros_like(points)
        best_tri = np.full(q, -1, dtype=np.int64)

        def update_block(idx: np.ndarray, tris: np.ndarray) -> None:
            """Fold exact (query, triangle) results into the running best,
            breaking distance ties toward the lowest triangle index."""
            d2, cp = self._pair_closest(points[idx], tris)
            dmin = d2.min(axis=1)
            ids = tris[None, :] if tris.ndim == 1 else tris
            cand = np.where(d2 == dmin[:, None], ids, np.iinfo(np.int64).max)
            col = cand.argmin(axis=1)
            rows = np.arange(len(idx))
            tmin = cand[rows, col]
            upd = (dmin < best_d2[idx]) | ((dmin == best_d2[idx]) & (tmin < best_tri[idx]))
            sel = idx[upd]
            best_d2[sel] = dmin[upd]
            best_pt[sel] = cp[rows[upd], col[upd]]
            best_tri[sel] = tmin[upd]

        # seed with exact distances to a handful of centroid-nearest triangles
        k = min(8, len(self._corners))
        _, seed = self._centroid_tree.query(points, k=k)
        seed = np.asarray(seed, dtype=np.int64).reshape(q, k)
        for s in range(0, q, 32768):
            idx = np.arange(s, min(s + 32768, q))
            update_block(idx, seed[idx])

        def visit(node: int, idx: np.ndarray) -> None:
            if idx.size == 0:
                return
            span = self._span_end[node] - self._span_start[node]
            # collapsing small subtrees (or small query groups) into one exact
            # block evaluation trades a little arithmetic for far fewer calls
            if span <= self.GROUP_SIZE or (span <= 2048 and idx.size * span <= 32768):
                update_block(idx, self.leaf_tris[self._span_start[node] : self._span_end[node]])
                return
            l, r = self.node_left[node], self.node_right[node]
            pts_sub = points[idx]
            dl = self._box_dist2(l, pts_sub)
            dr = self._box_dist2(r, pts_sub)
            near_l = dl <= dr
            for mask, c1, d1, c2, d2 in (
                (near_l, l, dl, r, dr),
                (~near_l, r, dr, l, dl),
            ):
                sub = idx[mask]
                if sub.size == 0:
                    continue
                # `<=` keeps equal-distance boxes so index tie-breaks stay exact
                visit(c1, sub[d1[mask] <= best_d2[sub]])
                visit(c2, sub[d2[mask] <= best_d2[sub]])

        visit(0, np.arange(q, dtype=np.int64))
        return best_pt, np.sqrt(best_d2), best_tri

    def winding_number_batch(self, points: np.ndarray, chunk: int = 262144) -> np.ndarray:
        """Generalized winding number (sum of signed solid angles / 4 pi)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(points))
        corners = self._corners
        ntri = len(corners)
        # keep the (q_block, ntri) temporaries bounded
        block = max(1, int(chunk // max(ntri, 1)))
        for s in range(0, len(points), block):
            p = points[s : s + block]
            a = corners[None, :, 0, :] - p[:, None, :]
            b = corners[None, :, 1, :] - p[:, None, :]
            c = corners[None, :, 2, :] - p[:, None, :]
            la = np.linalg.norm(a, axis=2)
            lb = np.linalg.norm(b, axis=2)
            lc = np.linalg.norm(c, axis=2)
            det = np.einsum("qti,qti->qt", a, np.cross(b, c))
            denom = (
                la * lb * lc
                + np.einsum("qti,qti->qt", a, b) * lc
                + np.einsum("qti,qti->qt", b, c) * la
                + np.einsum("qti,qti->qt", c, a) * lb
            )
            out[s : s + block] = np.arctan2(det, denom).sum(axis=1) / (2.0 * math.pi)
        return out


def build_bvh(mesh: TriangleMesh) -> Bvh:
    return Bvh(mesh)


def closest_point(bvh: Bvh, p) -> ClosestPointResult:
    pt, dist, tri = bvh.closest_point_batch(np.asarray(p, dtype=np.float64)[None, :])
    return ClosestPointResult(point=pt[0], distance=float(dist[0]), triangle=int(tri[0]))


def winding_number(bvh: Bvh, p) -> float:
    """Winding number at one point; ~1 inside, ~0 outside for watertight meshes."""
    return float(bvh.winding_number_batch(np.asarray(p, dtype=np.float64)[None, :])[0])


def box_mesh(center=(0.0, 0.0, 0.0), half_extents=(0.5, 0.5, 0.5)) -> TriangleMesh:
    """Axis-aligned box as 12 consistently outward-wound triangles."""
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(half_extents, dtype=np.float64)
    corners = np.array(
        [[sx, sy, sz] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)], dtype=np.float64
    )
    verts = c + corners * h
    # index layout: bit0 = +x, bit1 = +y, bit2 = +z
    quads = [
        (0, 2, 3, 1),  # z-
        (4, 5, 7, 6),  # z+
        (0, 1, 5, 4),  # y-
        (2, 6, 7, 3),  # y+
        (0, 4, 6, 2),  # x-
        (1, 3, 7, 5),  # x+
    ]
    tris = []
    for a, b, cc, d in quads:
        tris.append((a, b, cc))
        tris.append((a, cc, d))
    return TriangleMesh(verts, np.array(tris, dtype=np.int64))


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere from a subdivided icosahedron (20 * 4^n triangles)."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    index = {v: i for i, v in enumerate(verts)}

    def midpoint(a: int, b: int) -> int:
        m = np.asarray(verts[a]) + np.asarray(verts[b])
        m = tuple(m / np.linalg.norm(m))
        if m not in index:
            index[m] = len(verts)
            verts.append(m)
        return index[m]

    for _ in range(subdivisions):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    pts = np.asarray(center) + radius * np.array(verts, dtype=np.float64)
    return TriangleMesh(pts, np.array(faces, dtype=np.int64))
