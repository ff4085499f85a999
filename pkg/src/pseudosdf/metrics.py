"""Evaluation: L2 Chamfer distance and multi-view image consistency.

The image-consistency score is a reconstruction of the usual silhouette/
normal agreement idea: 8 fixed orthographic views from the cube corners at
512x512, each contributing IoU of the coverage masks times the mean absolute
normal cosine on their intersection.  The exact definition is versioned
(:data:`METRIC_VERSION`) because scores are only comparable within one
definition.  Meshes extracted from unsigned fields carry no global
orientation, hence double-sided rendering and absolute cosines.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import TriangleMesh

METRIC_VERSION = "cd-sql2-sym/ic-8view-ortho512-iou-abscos-v1"

# CD tables are conventionally printed in units of 1e-5
CD_PRESENTATION_SCALE = 1e-5


@dataclass
class PointSample:
    points: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)


def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0) -> PointSample:
    """Area-weighted triangle pick, then uniform barycentric placement."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    tri = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.uniform(size=count)
    v = rng.uniform(size=count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    corners = mesh.triangle_corners()[tri]
    pts = corners[:, 0] + u[:, None] * (corners[:, 1] - corners[:, 0]) + v[:, None] * (
        corners[:, 2] - corners[:, 0]
    )
    return PointSample(pts, seed)


def chamfer(a: PointSample, b: PointSample) -> float:
    """Symmetric sum of mean squared nearest-neighbor distances."""
    pa, pb = a.points, b.points
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer distance needs non-empty samples")
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float((d_ab**2).mean() + (d_ba**2).mean())


def brute_force_chamfer(a: PointSample, b: PointSample) -> float:
    """Quadratic-time reference for validating the spatial index."""
    pa, pb = a.points, b.points
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class CameraSpec:
    """Orthographic camera looking along ``direction`` toward the origin."""

    direction: tuple[float, float, float]
    half_width: float = math.sqrt(3.0)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fwd = np.asarray(self.direction, dtype=np.float64)
        fwd = fwd / np.linalg.norm(fwd)
        up_hint = np.array([0.0, 0.0, 1.0])
        if abs(fwd @ up_hint) > 0.99:
            up_hint = np.array([0.0, 1.0, 0.0])
        right = np.cross(up_hint, fwd)
        right /= np.linalg.norm(right)
        up = np.cross(fwd, right)
        return right, up, fwd


@dataclass
class NormalMapImage:
    coverage: np.ndarray          # (H, W) bool
    normals: np.ndarray           # (H, W, 3) camera-space, zero where empty
    camera: CameraSpec

    @property
    def empty(self) -> bool:
        return not bool(self.coverage.any())


def render_normal_map(mesh: TriangleMesh, view: CameraSpec, width: int = 512, height: int = 512) -> NormalMapImage:
    """Rasterize face normals under an orthographic projection.

    Nearest hit per pixel via a z-buffer; normals are flipped toward the
    camera because extracted meshes are double sided.
    """
    coverage = np.zeros((height, width), dtype=bool)
    normals = np.zeros((height, width, 3))
    if mesh.is_empty:
        return NormalMapImage(coverage, normals, view)

    right, up, fwd = view.basis()
    frame = np.stack([right, up, fwd], axis=1)
    cam = mesh.vertices @ frame                  # (V, 3): x, y, depth
    tris = mesh.triangles
    hw = view.half_width
    sx = width / (2.0 * hw)
    sy = height / (2.0 * hw)
    px = (cam[:, 0] + hw) * sx - 0.5             # pixel-center coordinates
    py = (cam[:, 1] + hw) * sy - 0.5
    depth_v = cam[:, 2]

    zbuf = np.full((height, width), np.inf)
    corners = mesh.triangle_corners()
    face_n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    norms = np.linalg.norm(face_n, axis=1)
    ok = norms > 1e-300
    face_n[ok] /= norms[ok][:, None]
    face_cam = face_n @ frame
    # double sided: normals face the camera (negative depth component)
    wrong_side = face_cam[:, 2] > 0
    face_cam[wrong_side] *= -1.0

    for t in range(len(tris)):
        if not ok[t]:
            continue
        i0, i1, i2 = tris[t]
        x0, x1, x2 = px[i0], px[i1], px[i2]
        y0, y1, y2 = py[i0], py[i1], py[i2]
        lo_x = max(int(math.ceil(min(x0, x1, x2))), 0)
        hi_x = min(int(math.floor(max(x0, x1, x2))), width - 1)
        lo_y = max(int(math.ceil(min(y0, y1, y2))), 0)
        hi_y = min(int(math.floor(max(y0, y1, y2))), height - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        gx, gy = np.meshgrid(np.arange(lo_x, hi_x + 1), np.arange(lo_y, hi_y + 1))
        d = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if d == 0.0:
            continue
        w1 = ((gx - x0) * (y2 - y0) - (gy - y0) * (x2 - x0)) / d
        w2 = ((gy - y0) * (x1 - x0) - (gx - x0) * (y1 - y0)) / d
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        depth = w0 * depth_v[i0] + w1 * depth_v[i1] + w2 * depth_v[i2]
        yy = gy[inside]
        xx = gx[inside]
        dd = depth[inside]
        closer = dd < zbuf[yy, xx]
        yy, xx, dd = yy[closer], xx[closer], dd[closer]
        zbuf[yy, xx] = dd
        coverage[yy, xx] = True
        normals[yy, xx] = face_cam[t]
    return NormalMapImage(coverage, normals, view)


def default_views() -> list[CameraSpec]:
    """The 8 cube-corner orthographic viewpoints."""
    views = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                views.append(CameraSpec((sx, sy, sz)))
    return views


def image_consistency(a: TriangleMesh, b: TriangleMesh, size: int = 512) -> float:
    """Multi-view render agreement in [0, 100].

    Per view: IoU of the coverage masks times the mean absolute normal cosine
    on the overlap; views where both renders are empty count as full
    agreement, views where exactly one is empty count as zero.
    """
    scores = []
    for view in default_views():
        ra = render_normal_map(a, view, size, size)
        rb = render_normal_map(b, view, size, size)
        if ra.empty and rb.empty:
            scores.append(1.0)
            continue
        if ra.empty != rb.empty:
            scores.append(0.0)
            continue
        inter = ra.coverage & rb.coverage
        union = ra.coverage | rb.coverage
        iou = inter.sum() / union.sum()
        if inter.any():
            cos = np.abs(np.einsum("ij,ij->i", ra.normals[inter], rb.normals[inter]))
            agreement = float(cos.mean())
        else:
            agreement = 1.0  # vacuous; iou is already 0
        scores.append(iou * agreement)
    return 100.0 * float(np.mean(scores))


# ---------------------------------------------------------------------------
# aggregation and reports


def median_lower(values) -> float:
    """Median with the lower-middle element for even counts."""
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("median of empty sequence")
    return values[(len(values) - 1) // 2]


def aggregate(values) -> tuple[float, float]:
    """(median, mean); the median uses the lower-middle rule."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot aggregate an empty list")
    return median_lower(values), float(np.mean(values))


@dataclass
class MetricReport:
    """Per-shape chamfer/image-consistency numbers plus aggregates."""

    shapes: list[str] = field(default_factory=list)
    cd: list[float] = field(default_factory=list)
    ic: list[float] = field(default_factory=list)

    def add(self, shape: str, cd: float, ic: float) -> None:
        self.shapes.append(shape)
        self.cd.append(float(cd))
        self.ic.append(float(ic))

    def summary(self) -> dict:
        cd_median, cd_mean = aggregate(self.cd)
        ic_median, ic_mean = aggregate(self.ic)
        return {
            "metric_version": METRIC_VERSION,
            "count": len(self.shapes),
            "cd_median": cd_median,
            "cd_mean": cd_mean,
            # presentation scaling only; raw values are authoritative
            "cd_median_x1e5": cd_median / CD_PRESENTATION_SCALE,
            "cd_mean_x1e5": cd_mean / CD_PRESENTATION_SCALE,
            "ic_median": ic_median,
            "ic_mean": ic_mean,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["shape", "cd", "ic"])
            for shape, cd, ic in zip(self.shapes, self.cd, self.ic):
                writer.writerow([shape, f"{cd:.12g}", f"{ic:.12g}"])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n")
