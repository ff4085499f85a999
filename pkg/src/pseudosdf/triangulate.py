"""Mesh extraction from per-cell pseudo-signs.

Two primal paths share all vertex math: marching cubes over predicted cell
configurations (cells are classified independently; neighbors that disagree
simply leave holes, geometry is never fabricated) and classical marching
cubes over a signed grid, kept as a reference.  A simplified dual-contouring
path places one vertex per crossed cell by solving a small regularized QEF,
falling back to the cell center when the system is degenerate or the
minimizer escapes the cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import mc_tables
from .fields import FieldGrid, GridSpec, near_surface_cell_mask
from .geometry import TriangleMesh
from .nnet import MlpModel, predict_config_batch
from .signconfig import CORNER_OFFSETS, DECODE_TABLE, EDGE_CORNERS, EDGE_FLIP_TABLE

Predictor = Union[MlpModel, Callable[[np.ndarray], np.ndarray]]

# edge endpoints ordered so interpolation always runs from the lower corner
_EDGE_A = EDGE_CORNERS[:, 0].copy()
_EDGE_B = EDGE_CORNERS[:, 1].copy()
_swap = CORNER_OFFSETS[_EDGE_A].sum(axis=1) > CORNER_OFFSETS[_EDGE_B].sum(axis=1)
_EDGE_A[_swap], _EDGE_B[_swap] = EDGE_CORNERS[_swap, 1], EDGE_CORNERS[_swap, 0]
_EDGE_AXIS = np.argmax(CORNER_OFFSETS[_EDGE_B] != CORNER_OFFSETS[_EDGE_A], axis=1)
# local edge id keyed by its lower corner and direction
_EDGE_BY_CORNER_AXIS = {
    (int(_EDGE_A[e]), int(_EDGE_AXIS[e])): e for e in range(12)
}


@dataclass
class PseudoSdfCell:
    """One cell's coordinates, predicted configuration and corner magnitudes."""

    cell: tuple[int, int, int]
    code: int
    magnitudes: np.ndarray

    def __post_init__(self) -> None:
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64).reshape(8)
        if (self.magnitudes < 0).any():
            raise ValueError("corner magnitudes must be >= 0")


def edge_parameter(u_a: np.ndarray, u_b: np.ndarray) -> np.ndarray:
    """Crossing position along an edge with opposite pseudo-signs.

    The pseudo-SDF is linear along the edge with values ``-u_a`` and ``+u_b``
    (up to global flip), so the zero sits at ``t = u_a / (u_a + u_b)`` from
    the first endpoint; a doubly-degenerate edge gets the midpoint.
    """
    u_a = np.asarray(u_a, dtype=np.float64)
    u_b = np.asarray(u_b, dtype=np.float64)
    denom = u_a + u_b
    t = np.where(denom > 0, u_a / np.where(denom == 0, 1.0, denom), 0.5)
    return t


def _as_predictor(predictor: Predictor) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(predictor, MlpModel):
        return lambda inputs: predict_config_batch(predictor, inputs)
    if callable(predictor):
        return predictor
    raise TypeError("predictor must be an MlpModel or a callable on (N, 32) inputs")


def oracle_predictor(grid: FieldGrid) -> Callable[[np.ndarray], np.ndarray]:
    """Predictor that reads ground-truth labels off a sign-bearing grid.

    The returned callable ignores its input features and must be applied to
    cells in the same masked order that :func:`mc_extract` uses.
    """
    from .dataset import extract_cells

    labels = extract_cells(grid).labels

    def predict(inputs: np.ndarray) -> np.ndarray:
        if len(inputs) != len(labels):
            raise ValueError("oracle labels do not line up with the queried cells")
        return labels

    return predict


def mc_cell(cell: PseudoSdfCell, spec: GridSpec) -> np.ndarray:
    """Triangles for one cell, shape (K, 3, 3) in world coordinates."""
    signs = DECODE_TABLE[cell.code]
    mask = int(((signs < 0).astype(np.int64) << np.arange(8)).sum())
    tri_edges = mc_tables.TRI_TABLE[mask]
    if not tri_edges:
        return np.empty((0, 3, 3))
    u = cell.magnitudes
    t = edge_parameter(u[_EDGE_A], u[_EDGE_B])
    base = CORNER_OFFSETS[_EDGE_A].astype(np.float64)
    tip = CORNER_OFFSETS[_EDGE_B].astype(np.float64)
    verts = base + t[:, None] * (tip - base)
    origin = np.asarray(spec.origin) + spec.spacing * np.asarray(cell.cell, dtype=np.float64)
    world = origin + spec.spacing * verts
    e = np.asarray(tri_edges, dtype=np.int64).reshape(-1, 3)
    return world[e]


class _EdgeVertexPool:
    """Welds extraction vertices by global grid edge.

    The crossing parameter depends only on the two corner magnitudes, so any
    cell that uses a given grid edge produces the identical vertex; sharing
    the index is what stitches neighboring cells together.
    """

    def __init__(self, grid: FieldGrid):
        self.grid = grid
        self.spacing = grid.spec.spacing
        self.origin = np.asarray(grid.spec.origin)
        self.index: dict[tuple[int, int, int, int], int] = {}
        self.positions: list[np.ndarray] = []

    def vertex(self, cell: tuple[int, int, int], local_edge: int) -> int:
        ca = tuple(np.asarray(cell) + CORNER_OFFSETS[_EDGE_A[local_edge]])
        axis = int(_EDGE_AXIS[local_edge])
        key = (ca[0], ca[1], ca[2], axis)
        found = self.index.get(key)
        if found is not None:
            return found
        cb = list(ca)
        cb[axis] += 1
        u_a = self.grid.values[ca]
        u_b = self.grid.values[tuple(cb)]
        t = float(edge_parameter(u_a, u_b))
        pos = self.origin + self.spacing * np.asarray(ca, dtype=np.float64)
        pos = pos.copy()
        pos[axis] += t * self.spacing
        idx = len(self.positions)
        self.positions.append(pos)
        self.index[key] = idx
        return idx

    def mesh(self, triangles: list[tuple[int, int, int]]) -> TriangleMesh:
        verts = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        return TriangleMesh(verts, tris)


def cell_inputs(grid: FieldGrid, mask: np.ndarray) -> np.ndarray:
    """Normalized 32-wide classifier inputs for every cell in ``mask``."""
    u = grid.cell_corner_values()[:, mask]
    g = grid.cell_corner_gradients()[:, mask]
    n = u.shape[1]
    feat = np.empty((n, 8, 4), dtype=np.float32)
    feat[:, :, 0] = (u / grid.spec.spacing).T
    feat[:, :, 1:] = g.transpose(1, 0, 2)
    return feat.reshape(n, 32)


def _emit_cells(grid: FieldGrid, cells: np.ndarray, masks: np.ndarray) -> TriangleMesh:
    pool = _EdgeVertexPool(grid)
    triangles: list[tuple[int, int, int]] = []
    for (cx, cy, cz), mask in zip(cells, masks):
        row = mc_tables.TRI_TABLE[mask]
        if not row:
            continue
        cell = (int(cx), int(cy), int(cz))
        ids = [pool.vertex(cell, e) for e in row]
        for k in range(0, len(ids), 3):
            triangles.append((ids[k], ids[k + 1], ids[k + 2]))
    return pool.mesh(triangles)


def _config_masks(codes: np.ndarray) -> np.ndarray:
    signs = DECODE_TABLE[np.asarray(codes, dtype=np.int64)]
    return ((signs < 0).astype(np.int64) << np.arange(8)).sum(axis=1)


def mc_extract(grid: FieldGrid, predictor: Predictor) -> TriangleMesh:
    """Marching cubes over predicted per-cell pseudo-sign configurations.

    Only near-surface cells are classified.  Adjacent cells that agree on an
    edge flip share the interpolated vertex exactly; disagreements leave
    holes rather than inventing geometry.
    """
    near = near_surface_cell_mask(grid)
    cells = np.stack(np.nonzero(near), axis=1)
    if len(cells) == 0:
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    codes = np.asarray(_as_predictor(predictor)(cell_inputs(grid, near)))
    return _emit_cells(grid, cells, _config_masks(codes))


def mc_extract_sdf(grid: FieldGrid) -> TriangleMesh:
    """Classical global marching cubes on ``sign * value``; reference path."""
    if not grid.has_signs:
        raise ValueError("mc_extract_sdf needs a grid with signs")
    corner_signs = grid.cell_corner_signs()
    masks = ((corner_signs < 0).astype(np.int64) << np.arange(8)[:, None, None, None]).sum(axis=0)
    active = (masks != 0) & (masks != 255)
    cells = np.stack(np.nonzero(active), axis=1)
    return _emit_cells(grid, cells, masks[active])


# ---------------------------------------------------------------------------
# dual contouring


@dataclass
class QefProblem:
    """Plane constraints (crossing point, normal) for one cell."""

    points: np.ndarray
    normals: np.ndarray
    lam: float

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError("QEF needs at least one constraint")
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals disagree")


_LAMBDA_FLOOR = 1e-4
_COND_LIMIT = 1e6


def qef_solve(problem: QefProblem, box_lo, box_hi):
    """Minimize ``sum((n . (x - p))^2) + lam * |x - centroid|^2``.

    Solved through the normal equations with the regularizer floored at
    1e-4 for numerical safety; the reported condition estimate uses the
    caller's lambda unfloored, so passing 0 exposes rank deficiency.
    Returns ``(point, inside_box, condition_estimate)``.
    """
    n = problem.normals
    p = problem.points
    ata = n.T @ n
    atb = n.T @ np.einsum("ij,ij->i", n, p)
    centroid = p.mean(axis=0)

    eigs = np.linalg.eigvalsh(ata + problem.lam * np.eye(3))
    cond = float(eigs[-1] / eigs[0]) if eigs[0] > 1e-300 else np.inf

    lam = max(problem.lam, _LAMBDA_FLOOR)
    x = np.linalg.solve(ata + lam * np.eye(3), atb + lam * centroid)
    inside = bool((x >= np.asarray(box_lo) - 1e-12).all() and (x <= np.asarray(box_hi) + 1e-12).all())
    return x, inside, cond


def default_qef_lambda(spacing: float) -> float:
    return max(0.05 * spacing * spacing, _LAMBDA_FLOOR)


def dc_extract(
    grid: FieldGrid,
    predictor: Predictor,
    lam: float = None,
    edge_rule: str = "unanimity",
) -> TriangleMesh:
    """Dual contouring driven by predicted sign flips.

    Each near-surface cell with predicted crossings gets one vertex: the QEF
    minimizer over its crossing-point/normal constraints, or the cell center
    when the system is rank deficient or the minimizer leaves the cell.  A
    quad is emitted across each interior grid edge whose flip status passes
    ``edge_rule`` over the 4 surrounding cells (``unanimity`` by default,
    ``majority`` needs 3, ``any`` needs 1), oriented by the pseudo-signed
    gradient across the edge.
    """
    if edge_rule not in ("unanimity", "majority", "any"):
        raise ValueError(f"unknown edge rule {edge_rule!r}")
    need = {"unanimity": 4, "majority": 3, "any": 1}[edge_rule]
    spec = grid.spec
    if lam is None:
        lam = default_qef_lambda(spec.spacing)

    near = near_surface_cell_mask(grid)
    cells = np.stack(np.nonzero(near), axis=1)
    empty = TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    if len(cells) == 0:
        return empty
    codes = np.asarray(_as_predictor(predictor)(cell_inputs(grid, near)), dtype=np.int64)
    flips = EDGE_FLIP_TABLE[codes]                      # (N, 12)
    has_vertex = flips.any(axis=1)
    if not has_vertex.any():
        return empty

    cells = cells[has_vertex]
    codes = codes[has_vertex]
    flips = flips[has_vertex]
    n_cells = len(cells)

    u = grid.cell_corner_values()[:, near][:, has_vertex].T        # (N, 8)
    g = grid.cell_corner_gradients()[:, near][:, has_vertex].transpose(1, 0, 2)  # (N, 8, 3)
    signs = DECODE_TABLE[codes].astype(np.float64)                 # (N, 8)
    origins = spec.cell_origin(cells)                              # (N, 3)

    # constraints for all 12 edges at once, masked by per-cell flips
    t = edge_parameter(u[:, _EDGE_A], u[:, _EDGE_B])               # (N, 12)
    base = CORNER_OFFSETS[_EDGE_A].astype(np.float64)
    tip = CORNER_OFFSETS[_EDGE_B].astype(np.float64)
    pts = origins[:, None, :] + spec.spacing * (base + t[..., None] * (tip - base))

    ga = g[:, _EDGE_A, :] * signs[:, _EDGE_A, None]
    gb = g[:, _EDGE_B, :] * signs[:, _EDGE_B, None]
    normals = ga + gb
    # a zero-flagged endpoint contributes nothing; keep the other side
    norm = np.linalg.norm(normals, axis=2)
    valid = flips & (norm > 1e-9)
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = np.where(norm[..., None] > 1e-9, normals / np.where(norm == 0, 1.0, norm)[..., None], 0.0)

    w = valid.astype(np.float64)
    counts = w.sum(axis=1)
    ata = np.einsum("ne,nei,nej->nij", w, normals, normals)
    atb = np.einsum("ne,nei,ne->ni", w, normals, np.einsum("nei,nei->ne", normals, pts))
    centroid = np.einsum("ne,nei->ni", w, pts) / np.maximum(counts, 1.0)[:, None]

    eye = np.eye(3)
    eigs = np.linalg.eigvalsh(ata + lam * eye)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(eigs[:, 0] > 1e-300, eigs[:, -1] / np.maximum(eigs[:, 0], 1e-300), np.inf)
    lam_eff = max(lam, _LAMBDA_FLOOR)
    solutions = np.linalg.solve(ata + lam_eff * eye, atb + lam_eff * centroid)

    lo = origins - 1e-12
    hi = origins + spec.spacing + 1e-12
    inside = ((solutions >= lo) & (solutions <= hi)).all(axis=1)
    center = origins + 0.5 * spec.spacing
    use_center = (cond > _COND_LIMIT) | ~inside | (counts == 0)
    vertices = np.where(use_center[:, None], center, solutions)

    # face assembly across interior grid edges
    cell_ids = {(int(c[0]), int(c[1]), int(c[2])): i for i, c in enumerate(cells)}
    n_axis = spec.resolution
    triangles: list[tuple[int, int, int]] = []
    # cell offsets around an edge, cyclic so the quad normal points along +axis
    ring = {
        0: [(0, -1, -1), (0, 0, -1), (0, 0, 0), (0, -1, 0)],
        1: [(-1, 0, -1), (-1, 0, 0), (0, 0, 0), (0, 0, -1)],
        2: [(-1, -1, 0), (0, -1, 0), (0, 0, 0), (-1, 0, 0)],
    }

    seen: set[tuple[int, int, int, int]] = set()
    cell_list = [(int(c[0]), int(c[1]), int(c[2])) for c in cells]
    for ci, cell in enumerate(cell_list):
        for e in np.nonzero(flips[ci])[0]:
            axis = int(_EDGE_AXIS[e])
            off = CORNER_OFFSETS[_EDGE_A[e]]
            corner = (cell[0] + int(off[0]), cell[1] + int(off[1]), cell[2] + int(off[2]))
            key = (*corner, axis)
            if key in seen:
                continue
            seen.add(key)
            ring_cells = []
            ok = True
            for roff in ring[axis]:
                cc = (corner[0] + roff[0], corner[1] + roff[1], corner[2] + roff[2])
                if not all(0 <= cc[k] < n_axis for k in range(3)):
                    ok = False
                    break
                ring_cells.append(cc)
            if not ok:
                continue
            votes = 0
            ids = []
            for cc in ring_cells:
                j = cell_ids.get(cc)
                if j is None:
                    ids = None
                    break
                ids.append(j)
                # flip status of this same grid edge, local to cell cc
                rel = (corner[0] - cc[0], corner[1] - cc[1], corner[2] - cc[2])
                local_corner = rel[0] + 2 * rel[1] + 4 * rel[2]
                if flips[j, _EDGE_BY_CORNER_AXIS[(local_corner, axis)]]:
                    votes += 1
            if ids is None or votes < need:
                continue

            # orient by the pseudo-signed gradient across the edge, read from
            # the lowest ring cell that flips it
            n_dir = _edge_normal(grid, corner, axis, signs, cell_list, ids, flips)
            quad = list(ids)
            if n_dir is not None and n_dir[axis] < 0:
                quad.reverse()
            triangles.append((quad[0], quad[1], quad[2]))
            triangles.append((quad[0], quad[2], quad[3]))

    tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    keep = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
    return TriangleMesh(vertices, tri[keep])


def _edge_normal(grid, corner, axis, signs, cell_list, ring_ids, flips):
    other = list(corner)
    other[axis] += 1
    ga = grid.gradients[tuple(corner)]
    gb = grid.gradients[tuple(other)]
    for j in sorted(ring_ids):
        cc = cell_list[j]
        rel = (corner[0] - cc[0], corner[1] - cc[1], corner[2] - cc[2])
        ca = rel[0] + 2 * rel[1] + 4 * rel[2]
        local_e = _EDGE_BY_CORNER_AXIS[(ca, axis)]
        if not flips[j, local_e]:
            continue
        cb = ca + (1 << axis)
        n = signs[j, ca] * ga + signs[j, cb] * gb
        if np.linalg.norm(n) > 1e-12:
            return n
    return None
