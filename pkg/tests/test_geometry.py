import numpy as np
import pytest

from pseudosdf import geometry as geo

from conftest import random_soup, ray_parity_inside


def write(tmp_path, text, name="mesh.obj"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestObjIo:
    def test_minimal_triangle(self, tmp_path):
        mesh = geo.load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
        assert len(mesh.vertices) == 3
        assert len(mesh.triangles) == 1

    def test_quad_fan(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
        mesh = geo.load_obj(write(tmp_path, text))
        assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_slash_suffixes_stripped(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/2/3 2//3 3/4\n"
        mesh = geo.load_obj(write(tmp_path, text))
        assert mesh.triangles.tolist() == [[0, 1, 2]]

    def test_out_of_range_index(self, tmp_path):
        with pytest.raises(geo.ObjFormatError):
            geo.load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))

    def test_zero_index(self, tmp_path):
        with pytest.raises(geo.ObjFormatError):
            geo.load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"))

    def test_bad_coordinate(self, tmp_path):
        with pytest.raises(geo.ObjFormatError):
            geo.load_obj(write(tmp_path, "v 0 zero 0\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            geo.load_obj(tmp_path / "nope.obj")

    def test_empty_mesh_round_trip(self, tmp_path):
        path = tmp_path / "empty.obj"
        geo.save_obj(geo.TriangleMesh(np.empty((0, 3)), np.empty((0, 3), np.int64)), path)
        mesh = geo.load_obj(path)
        assert mesh.is_empty and len(mesh.vertices) == 0

    def test_cube_round_trip(self, tmp_path, unit_cube):
        path = tmp_path / "cube.obj"
        geo.save_obj(unit_cube, path)
        back = geo.load_obj(path)
        assert np.array_equal(back.triangles, unit_cube.triangles)
        np.testing.assert_allclose(back.vertices, unit_cube.vertices, rtol=1e-8)

    def test_large_round_trip_preserves_count(self, tmp_path, rng):
        mesh = random_soup(rng, 1_000_000)
        path = tmp_path / "big.obj"
        geo.save_obj(mesh, path)
        back = geo.load_obj(path)
        assert len(back.triangles) == 1_000_000
        np.testing.assert_allclose(back.vertices[:100], mesh.vertices[:100], rtol=1e-8, atol=1e-12)


class TestNormalize:
    def test_cube_goes_to_padded_unit_volume(self):
        mesh = geo.box_mesh(center=(5, 5, 5), half_extents=(5, 5, 5))
        out = geo.normalize_to_unit_volume(mesh)
        lo, hi = out.bounds()
        np.testing.assert_allclose(lo, [-0.95] * 3, atol=1e-12)
        np.testing.assert_allclose(hi, [0.95] * 3, atol=1e-12)

    def test_idempotent(self):
        mesh = geo.box_mesh(center=(1, 2, 3), half_extents=(0.2, 0.9, 0.4))
        once = geo.normalize_to_unit_volume(mesh)
        twice = geo.normalize_to_unit_volume(once)
        np.testing.assert_allclose(once.vertices, twice.vertices, atol=1e-12)

    def test_aspect_ratio_preserved(self):
        mesh = geo.box_mesh(center=(7, -3, 2), half_extents=(1.0, 0.5, 0.5))
        out = geo.normalize_to_unit_volume(mesh)
        lo, hi = out.bounds()
        extent = hi - lo
        np.testing.assert_allclose(extent, [1.9, 0.95, 0.95], atol=1e-12)
        np.testing.assert_allclose((lo + hi) / 2, [0, 0, 0], atol=1e-12)

    def test_empty_and_degenerate_rejected(self):
        with pytest.raises(ValueError):
            geo.normalize_to_unit_volume(geo.TriangleMesh(np.empty((0, 3)), np.empty((0, 3), np.int64)))
        flat = geo.TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(ValueError):
            geo.normalize_to_unit_volume(flat)


class TestClosestPoint:
    def test_query_on_vertex(self, unit_cube):
        bvh = geo.build_bvh(unit_cube)
        res = geo.closest_point(bvh, unit_cube.vertices[0])
        assert res.distance == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(res.point, unit_cube.vertices[0], atol=1e-15)

    def test_orthogonal_projection(self):
        tri = geo.TriangleMesh(
            np.array([[-1.0, -1.0, 0.0], [2.0, -1.0, 0.0], [0.0, 2.0, 0.0]]),
            np.array([[0, 1, 2]]),
        )
        res = geo.closest_point(geo.build_bvh(tri), (0.0, 0.0, 1.0))
        assert res.distance == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(res.point, [0, 0, 0], atol=1e-12)

    def test_single_triangle_is_single_leaf(self):
        tri = geo.TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
        bvh = geo.build_bvh(tri)
        assert len(bvh.node_lo) == 1
        assert bvh.node_count[0] == 1

    def test_bvh_invariants(self, rng):
        mesh = random_soup(rng, 100)
        bvh = geo.build_bvh(mesh)
        # every triangle in exactly one leaf
        assert sorted(bvh.leaf_tris.tolist()) == list(range(100))
        # parent boxes contain child boxes
        for node in range(len(bvh.node_lo)):
            left, right = bvh.node_left[node], bvh.node_right[node]
            for child in (left, right):
                if child >= 0:
                    assert (bvh.node_lo[node] <= bvh.node_lo[child] + 1e-15).all()
                    assert (bvh.node_hi[node] >= bvh.node_hi[child] - 1e-15).all()

    def test_matches_brute_force_on_random_soup(self, rng):
        mesh = random_soup(rng, 100)
        bvh = geo.build_bvh(mesh)
        queries = rng.uniform(-1.5, 1.5, size=(1000, 3))
        bf_pt, bf_d, bf_tri = geo.brute_force_closest(mesh, queries)
        pt, d, tri = bvh.closest_point_batch(queries)
        diag = np.linalg.norm(mesh.vertices.max(0) - mesh.vertices.min(0))
        assert np.abs(d - bf_d).max() < 1e-9 * diag
        assert np.linalg.norm(pt - bf_pt, axis=1).max() < 1e-9 * diag
        ties = ~np.isclose(d, bf_d, rtol=0, atol=0)
        assert (tri[~ties] == bf_tri[~ties]).all()

    def test_degenerate_triangles_still_correct(self, rng):
        mesh = random_soup(rng, 50)
        # add an exactly collinear triangle and an exact point triangle
        v = np.vstack([mesh.vertices, [[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3.0000000001]]])
        t = np.vstack([mesh.triangles, [[150, 151, 152], [151, 152, 153]]])
        mesh = geo.TriangleMesh(v, t)
        bvh = geo.build_bvh(mesh)
        queries = rng.uniform(-1.5, 1.5, size=(500, 3))
        _, bf_d, _ = geo.brute_force_closest(mesh, queries)
        _, d, _ = bvh.closest_point_batch(queries)
        assert np.isfinite(d).all()
        assert np.abs(d - bf_d).max() < 1e-9


class TestWindingNumber:
    def test_icosphere_inside_outside(self):
        sphere = geo.icosphere(2, radius=1.0)
        bvh = geo.build_bvh(sphere)
        assert geo.winding_number(bvh, (0, 0, 0)) == pytest.approx(1.0, abs=1e-3)
        assert geo.winding_number(bvh, (10, 0, 0)) == pytest.approx(0.0, abs=1e-3)

    def test_agrees_with_ray_parity_on_cube(self, unit_cube, rng):
        bvh = geo.build_bvh(unit_cube)
        pts = rng.uniform(-0.8, 0.8, size=(1000, 3))
        _, dist, _ = bvh.closest_point_batch(pts)
        keep = dist > 1e-6
        pts = pts[keep]
        wind = bvh.winding_number_batch(pts)
        parity = ray_parity_inside(unit_cube, pts)
        assert ((np.abs(wind) > 0.5) == parity).all()
