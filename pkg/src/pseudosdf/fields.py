"""Distance/gradient grids sampled from analytic shapes or triangle meshes.

Grids store corner samples: a resolution-``n`` grid has ``(n + 1)^3`` corners
so each of the ``n^3`` cells reads its 8 corners without duplication.  Corner
``(ix, iy, iz)`` sits at ``origin + spacing * (ix, iy, iz)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Bvh

_EPS = 1.0e-12

# Cells whose nearest corner is within one cell diagonal of the surface are
# the ones classified and meshed; everything farther is skipped.
NEAR_SURFACE_FACTOR = math.sqrt(3.0)


class OpenMeshError(RuntimeError):
    """Sign sampling was requested on a mesh that is not watertight."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of ``resolution`` cells per axis."""

    resolution: int
    origin: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    spacing: float = None

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise ValueError("grid resolution must be >= 1")
        if self.spacing is None:
            object.__setattr__(self, "spacing", 2.0 / self.resolution)
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def corners_per_axis(self) -> int:
        return self.resolution + 1

    @property
    def corner_count(self) -> int:
        return self.corners_per_axis**3

    def corner_positions(self) -> np.ndarray:
        """All corner coordinates, shape (n+1, n+1, n+1, 3)."""
        m = self.corners_per_axis
        ax = np.arange(m, dtype=np.float64)
        ix, iy, iz = np.meshgrid(ax, ax, ax, indexing="ij")
        pts = np.stack([ix, iy, iz], axis=-1)
        return np.asarray(self.origin) + self.spacing * pts

    def cell_origin(self, cells: np.ndarray) -> np.ndarray:
        """World position of the (0,0,0) corner of each cell, cells (N, 3) int."""
        return np.asarray(self.origin) + self.spacing * np.asarray(cells, dtype=np.float64)


@dataclass
class FieldGrid:
    """Corner-sampled unsigned distances and unit gradients, optional signs.

    ``values[ix, iy, iz]`` >= 0; ``gradients[ix, iy, iz]`` is unit length or
    exactly zero at singular points (on the surface or on the medial axis)
    where the direction is unreliable.  ``signs`` in {-1, +1} (inside = -1)
    is present only when the source is watertight.  Instances are treated as
    immutable after creation.
    """

    spec: GridSpec
    values: np.ndarray
    gradients: np.ndarray
    signs: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        m = self.spec.corners_per_axis
        shape = (m, m, m)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(shape)
        self.gradients = np.ascontiguousarray(self.gradients, dtype=np.float64).reshape(shape + (3,))
        if self.signs is not None:
            self.signs = np.ascontiguousarray(self.signs, dtype=np.int8).reshape(shape)

    @property
    def has_signs(self) -> bool:
        return self.signs is not None

    def validate(self) -> None:
        if (self.values < 0).any():
            raise ValueError("grid has negative distance values")
        norms = np.linalg.norm(self.gradients, axis=-1)
        bad = (norms > 1e-6) & (np.abs(norms - 1.0) > 1e-6)
        if bad.any():
            raise ValueError("gradient norms must be 0 or 1")
        if self.signs is not None and not np.isin(self.signs, (-1, 1)).all():
            raise ValueError("signs must be -1 or +1")

    def cell_corner_values(self) -> np.ndarray:
        """Per-cell corner values, shape (8, n, n, n), corner-major."""
        return _gather_corners(self.values)

    def cell_corner_gradients(self) -> np.ndarray:
        """Per-cell corner gradients, shape (8, n, n, n, 3)."""
        return _gather_corners(self.gradients)

    def cell_corner_signs(self) -> np.ndarray:
        if self.signs is None:
            raise ValueError("grid has no signs")
        return _gather_corners(self.signs)


def _gather_corners(arr: np.ndarray) -> np.ndarray:
    views = []
    for i in range(8):
        dx, dy, dz = i & 1, (i >> 1) & 1, (i >> 2) & 1
        views.append(arr[dx : arr.shape[0] - 1 + dx, dy : arr.shape[1] - 1 + dy, dz : arr.shape[2] - 1 + dz])
    return np.stack(views, axis=0)


def near_surface_cell_mask(grid: FieldGrid) -> np.ndarray:
    """Boolean (n, n, n) mask of cells whose minimum corner distance is
    within one cell diagonal."""
    cv = grid.cell_corner_values()
    return cv.min(axis=0) <= NEAR_SURFACE_FACTOR * grid.spec.spacing


# ---------------------------------------------------------------------------
# analytic shapes


def _axis_perm(axis: int) -> np.ndarray:
    # permutation that moves `axis` into the z slot
    others = [k for k in range(3) if k != axis]
    return np.array(others + [axis], dtype=np.int64)


@dataclass(frozen=True)
class AnalyticField:
    """Closed-form distance field; subclasses fill in the math."""

    closed: bool = False

    def distance_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unsigned distance and unit gradient per point; zero gradient marks
        singular points."""
        raise NotImplementedError

    def inside(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no interior")

    def sample_surface(self, count: int, seed: int = 0) -> np.ndarray:
        """Uniform-by-area points on the surface (evaluation helper)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(AnalyticField):
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    closed: bool = True

    def distance_gradient(self, points):
        q = points - np.asarray(self.center)
        rho = np.linalg.norm(q, axis=-1)
        sd = rho - self.radius
        dist = np.abs(sd)
        grad = np.zeros_like(q)
        ok = (rho > _EPS) & (dist > _EPS)
        grad[ok] = (np.sign(sd[ok]) / rho[ok])[:, None] * q[ok]
        return dist, grad

    def inside(self, points):
        q = points - np.asarray(self.center)
        return np.linalg.norm(q, axis=-1) < self.radius

    def sample_surface(self, count, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * v


@dataclass(frozen=True)
class Box(AnalyticField):
    """Axis-aligned box given by center and half extents."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    half_extents: tuple[float, float, float] = (0.5, 0.5, 0.5)
    closed: bool = True

    def distance_gradient(self, points):
        q = points - np.asarray(self.center)
        s = np.abs(q) - np.asarray(self.half_extents)
        outside = np.maximum(s, 0.0)
        out_norm = np.linalg.norm(outside, axis=-1)
        is_out = out_norm > 0.0

        dist = np.where(is_out, out_norm, 0.0)
        grad = np.zeros_like(q)
        safe = is_out & (out_norm > _EPS)
        grad[safe] = np.sign(q[safe]) * outside[safe] / out_norm[safe][:, None]

        if (~is_out).any():
            inner = ~is_out
            si = s[inner]  # all <= 0
            order = np.argsort(si, axis=-1)
            k = order[:, -1]  # axis of the nearest face
            d_in = -si[np.arange(len(si)), k]
            tie = si[np.arange(len(si)), order[:, -1]] - si[np.arange(len(si)), order[:, -2]] < _EPS
            dist[inner] = d_in
            g_in = np.zeros_like(si)
            rows = np.arange(len(si))
            g_in[rows, k] = -np.sign(q[inner][rows, k])
            g_in[tie | (d_in <= _EPS) | (g_in[rows, k] == 0.0)] = 0.0
            grad[inner] = g_in
        grad[dist <= _EPS] = 0.0
        return dist, grad

    def inside(self, points):
        q = np.abs(points - np.asarray(self.center))
        return (q < np.asarray(self.half_extents)).all(axis=-1)

    def sample_surface(self, count, seed=0):
        rng = np.random.default_rng(seed)
        h = np.asarray(self.half_extents)
        # six faces, picked by area
        areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
        face = rng.choice(6, size=count, p=areas / areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(count, 2))
        pts = np.empty((count, 3))
        for f in range(6):
            sel = face == f
            axis = f // 2
            side = 1.0 if f % 2 == 0 else -1.0
            others = [k for k in range(3) if k != axis]
            pts[sel, axis] = side * h[axis]
            pts[sel, others[0]] = uv[sel, 0] * h[others[0]]
            pts[sel, others[1]] = uv[sel, 1] * h[others[1]]
        return pts + np.asarray(self.center)


@dataclass(frozen=True)
class ThinSlab(Box):
    """Box with one tiny half extent; stresses thin-volume handling."""


@dataclass(frozen=True)
class Torus(AnalyticField):
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    major_radius: float = 0.5
    minor_radius: float = 0.2
    axis: int = 2
    closed: bool = True

    def _local(self, points):
        q = points - np.asarray(self.center)
        return q[..., _axis_perm(self.axis)]

    def distance_gradient(self, points):
        q = self._local(points)
        rho = np.hypot(q[..., 0], q[..., 1])
        w0 = rho - self.major_radius
        w1 = q[..., 2]
        wn = np.hypot(w0, w1)
        sd = wn - self.minor_radius
        dist = np.abs(sd)

        grad_local = np.zeros_like(q)
        ok = (rho > _EPS) & (wn > _EPS) & (dist > _EPS)
        scale = np.zeros_like(rho)
        scale[ok] = w0[ok] / (wn[ok] * rho[ok])
        grad_local[..., 0] = scale * q[..., 0]
        grad_local[..., 1] = scale * q[..., 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            gz = np.where(ok, w1 / np.where(ok, wn, 1.0), 0.0)
        grad_local[..., 2] = gz
        grad_local[ok] *= np.sign(sd[ok])[:, None]
        grad_local[~ok] = 0.0

        grad = np.zeros_like(grad_local)
        grad[..., _axis_perm(self.axis)] = grad_local
        return dist, grad

    def inside(self, points):
        q = self._local(points)
        rho = np.hypot(q[..., 0], q[..., 1])
        return np.hypot(rho - self.major_radius, q[..., 2]) < self.minor_radius

    def sample_surface(self, count, seed=0):
        rng = np.random.default_rng(seed)
        # area element ~ (R + r cos v); rejection keeps the sampling uniform
        pts = []
        need = count
        while need > 0:
            u = rng.uniform(0.0, 2.0 * math.pi, size=2 * need + 16)
            v = rng.uniform(0.0, 2.0 * math.pi, size=u.shape)
            accept = rng.uniform(0.0, 1.0, size=u.shape) < (
                (self.major_radius + self.minor_radius * np.cos(v))
                / (self.major_radius + self.minor_radius)
            )
            u, v = u[accept][:need], v[accept][:need]
            local = np.stack(
                [
                    (self.major_radius + self.minor_radius * np.cos(v)) * np.cos(u),
                    (self.major_radius + self.minor_radius * np.cos(v)) * np.sin(u),
                    self.minor_radius * np.sin(v),
                ],
                axis=-1,
            )
            pts.append(local)
            need -= len(local)
        local = np.concatenate(pts)[:count]
        out = np.zeros_like(local)
        out[..., _axis_perm(self.axis)] = local
        return out + np.asarray(self.center)


@dataclass(frozen=True)
class OpenDisc(AnalyticField):
    """Flat disc orthogonal to ``axis``; open surface, no interior."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.5
    axis: int = 2
    closed: bool = False

    def _local(self, points):
        q = points - np.asarray(self.center)
        return q[..., _axis_perm(self.axis)]

    def distance_gradient(self, points):
        q = self._local(points)
        rho = np.hypot(q[..., 0], q[..., 1])
        z = q[..., 2]
        over = np.maximum(rho - self.radius, 0.0)
        dist = np.hypot(over, z)

        grad_local = np.zeros_like(q)
        ok = dist > _EPS
        inside_rim = rho <= self.radius
        gz = np.where(ok, np.where(inside_rim, np.sign(z), z / np.where(ok, dist, 1.0)), 0.0)
        radial = np.zeros_like(rho)
        sel = ok & ~inside_rim & (rho > _EPS)
        radial[sel] = over[sel] / (dist[sel] * rho[sel])
        grad_local[..., 0] = radial * q[..., 0]
        grad_local[..., 1] = radial * q[..., 1]
        grad_local[..., 2] = gz
        grad_local[~ok] = 0.0

        grad = np.zeros_like(grad_local)
        grad[..., _axis_perm(self.axis)] = grad_local
        return dist, grad

    def sample_surface(self, count, seed=0):
        rng = np.random.default_rng(seed)
        r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
        t = rng.uniform(0.0, 2.0 * math.pi, size=count)
        local = np.stack([r * np.cos(t), r * np.sin(t), np.zeros(count)], axis=-1)
        out = np.zeros_like(local)
        out[..., _axis_perm(self.axis)] = local
        return out + np.asarray(self.center)


@dataclass(frozen=True)
class PlanePatch(AnalyticField):
    """Flat rectangle orthogonal to ``axis``; open surface."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    half_extents: tuple[float, float] = (0.5, 0.5)
    axis: int = 2
    closed: bool = False

    def _local(self, points):
        q = points - np.asarray(self.center)
        return q[..., _axis_perm(self.axis)]

    def distance_gradient(self, points):
        q = self._local(points)
        he = np.asarray(self.half_extents)
        t = np.clip(q[..., :2], -he, he)
        delta = np.concatenate([q[..., :2] - t, q[..., 2:3]], axis=-1)
        dist = np.linalg.norm(delta, axis=-1)
        grad_local = np.zeros_like(q)
        ok = dist > _EPS
        grad_local[ok] = delta[ok] / dist[ok][:, None]
        grad = np.zeros_like(grad_local)
        grad[..., _axis_perm(self.axis)] = grad_local
        return dist, grad

    def sample_surface(self, count, seed=0):
        rng = np.random.default_rng(seed)
        he = np.asarray(self.half_extents)
        local = np.stack(
            [
                rng.uniform(-he[0], he[0], size=count),
                rng.uniform(-he[1], he[1], size=count),
                np.zeros(count),
            ],
            axis=-1,
        )
        out = np.zeros_like(local)
        out[..., _axis_perm(self.axis)] = local
        return out + np.asarray(self.center)


def builtin_corpus() -> list[tuple[str, AnalyticField]]:
    """The built-in analytic shape corpus (desk-scale stand-in for a mesh set).

    Parameters are deliberately offset from grid-plane coordinates at the
    usual resolutions so that no corner lands exactly on a surface.
    """
    return [
        ("sphere_a", Sphere(center=(0.013, -0.021, 0.017), radius=0.52)),
        ("sphere_b", Sphere(center=(0.24, 0.11, -0.19), radius=0.31)),
        ("sphere_c", Sphere(center=(-0.07, 0.04, 0.06), radius=0.73)),
        ("box_a", Box(center=(0.011, 0.023, -0.013), half_extents=(0.57, 0.33, 0.41))),
        ("box_b", Box(center=(-0.21, 0.17, 0.11), half_extents=(0.27, 0.51, 0.19))),
        ("box_c", Box(center=(0.04, -0.06, 0.02), half_extents=(0.46, 0.44, 0.48))),
        ("torus_a", Torus(center=(0.01, -0.02, 0.03), major_radius=0.48, minor_radius=0.17, axis=2)),
        ("torus_b", Torus(center=(-0.05, 0.03, -0.08), major_radius=0.39, minor_radius=0.12, axis=0)),
        ("slab", ThinSlab(center=(0.02, -0.01, 0.035), half_extents=(0.61, 0.57, 0.021))),
        ("disc", OpenDisc(center=(0.015, -0.012, 0.027), radius=0.58, axis=2)),
        ("patch", PlanePatch(center=(-0.02, 0.03, 0.041), half_extents=(0.55, 0.42), axis=1)),
    ]


# ---------------------------------------------------------------------------
# sampling


def sample_analytic(field: AnalyticField, spec: GridSpec, with_signs: bool = False) -> FieldGrid:
    """Evaluate a closed-form field on all grid corners."""
    if with_signs and not field.closed:
        raise ValueError(f"{type(field).__name__} is open; no signs available")
    pts = spec.corner_positions().reshape(-1, 3)
    dist, grad = field.distance_gradient(pts)
    signs = None
    if with_signs:
        signs = np.where(field.inside(pts), -1, 1).astype(np.int8)
    return FieldGrid(spec, dist, grad, signs)


def sample_mesh_udf(bvh: Bvh, spec: GridSpec, with_signs: bool = False) -> FieldGrid:
    """Sample closest-point distances (and gradients) of a mesh on the grid.

    Gradients are ``(corner - closest point) / distance``; corners closer
    than ``1e-9 * spacing`` to the surface get the zero flag.  Signs come
    from the winding number thresholded at 0.5 in magnitude, so triangle
    orientation does not matter; a bimodality check rejects open meshes.
    """
    pts = spec.corner_positions().reshape(-1, 3)
    closest, dist, _ = bvh.closest_point_batch(pts)
    grad = np.zeros_like(pts)
    ok = dist > 1.0e-9 * spec.spacing
    grad[ok] = (pts[ok] - closest[ok]) / dist[ok][:, None]

    signs = None
    if with_signs:
        wind = bvh.winding_number_batch(pts)
        # Watertight meshes give near-integer winding everywhere off the
        # surface; open surfaces leave a skin of ~0.5 values next to them,
        # so judge bimodality on the near-surface band where it shows.
        band = (dist > 1e-9 * spec.spacing) & (dist <= 2.0 * spec.spacing)
        ambiguous = (np.abs(wind) > 0.25) & (np.abs(wind) < 0.75)
        if band.any() and (ambiguous & band).sum() > 0.05 * band.sum():
            raise OpenMeshError(
                "winding numbers are not bimodal near the surface; "
                "mesh looks open or badly broken"
            )
        signs = np.where(np.abs(wind) > 0.5, -1, 1).astype(np.int8)
    return FieldGrid(spec, dist, grad, signs)


# ---------------------------------------------------------------------------
# neural-UDF noise emulation


@dataclass(frozen=True)
class NeuralNoiseSpec:
    """Synthetic noise mimicking a neural (autodecoder) UDF.

    Values are rescaled by ``1 + amplitude * eta * envelope`` and gradients
    get a random axis-angle kick with std ``angle_std * envelope``, where
    ``envelope = exp(-(d / (bias_scale * spacing))^2)`` concentrates the
    noise near the surface.  Defaults are calibration knobs, not measured
    autodecoder statistics.
    """

    amplitude: float = 0.2
    angle_std: float = 0.5
    bias_scale: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude < 0 or self.angle_std < 0 or self.bias_scale <= 0:
            raise ValueError("noise amplitudes must be >= 0 and bias scale > 0")


def perturb_field(grid: FieldGrid, noise: NeuralNoiseSpec) -> FieldGrid:
    """Apply the neural-UDF noise model; output carries no ground truth signs."""
    rng = np.random.default_rng(noise.seed)
    values = grid.values.reshape(-1)
    grads = grid.gradients.reshape(-1, 3)
    envelope = np.exp(-((values / (noise.bias_scale * grid.spec.spacing)) ** 2))

    eta = rng.standard_normal(values.shape)
    new_values = np.maximum(values * (1.0 + noise.amplitude * eta * envelope), 0.0)

    axis = rng.standard_normal(grads.shape)
    axis_norm = np.linalg.norm(axis, axis=1)
    axis_norm[axis_norm < _EPS] = 1.0
    axis /= axis_norm[:, None]
    theta = rng.standard_normal(values.shape) * (noise.angle_std * envelope)

    cos_t = np.cos(theta)[:, None]
    sin_t = np.sin(theta)[:, None]
    dot = np.einsum("ij,ij->i", axis, grads)[:, None]
    rotated = grads * cos_t + np.cross(axis, grads) * sin_t + axis * dot * (1.0 - cos_t)
    norms = np.linalg.norm(rotated, axis=1)
    nz = norms > _EPS
    rotated[nz] /= norms[nz][:, None]
    rotated[~nz] = 0.0
    # unrotated rows pass through bit-exactly; zero-flagged gradients stay flagged
    still = theta == 0.0
    rotated[still] = grads[still]
    was_zero = np.linalg.norm(grads, axis=1) <= _EPS
    rotated[was_zero] = 0.0

    return FieldGrid(grid.spec, new_values, rotated, None)


# ---------------------------------------------------------------------------
# binary grid files

_FIELD_MAGIC = b"UDFG"
_FIELD_VERSION = 1


def save_field(grid: FieldGrid, path) -> None:
    """Write the grid in the UDFG little-endian binary layout."""
    flags = 1 if grid.has_signs else 0
    header = _FIELD_MAGIC + struct.pack(
        "<II3ddI",
        _FIELD_VERSION,
        grid.spec.resolution,
        *grid.spec.origin,
        grid.spec.spacing,
        flags,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.values.astype("<f4").tobytes())
        fh.write(grid.gradients.astype("<f4").tobytes())
        if grid.has_signs:
            fh.write(grid.signs.astype("<i1").tobytes())


def load_field(path) -> FieldGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a UDFG field file")
    version, resolution = struct.unpack_from("<II", data, 4)
    if version != _FIELD_VERSION:
        raise ValueError(f"{path}: unsupported field file version {version}")
    ox, oy, oz, spacing = struct.unpack_from("<3dd", data, 12)
    (flags,) = struct.unpack_from("<I", data, 44)
    spec = GridSpec(resolution, (ox, oy, oz), spacing)
    m = spec.corners_per_axis
    n_corners = m**3
    off = 48
    end = off + 4 * n_corners
    values = np.frombuffer(data[off:end], dtype="<f4").astype(np.float64)
    off = end
    end = off + 12 * n_corners
    gradients = np.frombuffer(data[off:end], dtype="<f4").astype(np.float64).reshape(-1, 3)
    off = end
    signs = None
    if flags & 1:
        end = off + n_corners
        signs = np.frombuffer(data[off:end], dtype="<i1").copy()
        off = end
    if off != len(data):
        raise ValueError(f"{path}: trailing or missing bytes in field file")
    return FieldGrid(spec, values, gradients, signs)
