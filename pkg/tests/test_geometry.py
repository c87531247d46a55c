"""Tests for pushplan.geometry module."""

import numpy as np
import pytest

from pushplan.geometry import (
    SliderGeometry,
    build_faces,
    decompose_regions,
    min_gap,
    rotation_matrix,
    vertex_world_position,
)
from pushplan.types import DegeneratePolygon, NoContainingRegion, PusherSpec


class TestSliderGeometry:
    """Tests for polygon validation and presets."""

    def test_box_preset(self, box):
        assert box.num_faces == 4
        assert box.characteristic_radius == pytest.approx(np.sqrt(0.02))

    def test_tee_recentered_on_centroid(self):
        tee = SliderGeometry.from_preset("tee")
        centroid = tee.polygon.centroid
        assert tee.num_faces == 8
        assert centroid.x == pytest.approx(0.0, abs=1e-12)
        assert centroid.y == pytest.approx(0.0, abs=1e-12)

    def test_clockwise_input_is_reversed(self):
        geometry = SliderGeometry.from_vertices([(0, 0), (0, 1), (1, 1), (1, 0)])
        assert geometry.polygon.exterior.is_ccw

    def test_clockwise_rejected_without_fixing(self):
        with pytest.raises(DegeneratePolygon, match="counter-clockwise"):
            SliderGeometry(vertices=np.array([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]))

    def test_too_few_vertices(self):
        with pytest.raises(DegeneratePolygon):
            SliderGeometry.from_vertices([(0, 0), (1, 0)])

    def test_coincident_vertices(self):
        with pytest.raises(DegeneratePolygon, match="coincident"):
            SliderGeometry.from_vertices([(0, 0), (1, 0), (1, 0), (0, 1)])

    def test_self_intersecting(self):
        with pytest.raises(DegeneratePolygon, match="self-intersecting"):
            SliderGeometry.from_vertices([(0, 0), (1, 1), (1, 0), (0, 1)])

    def test_distance_to(self, box):
        assert box.distance_to((0.0, 0.0)) == 0.0
        assert box.distance_to((0.3, 0.0)) == pytest.approx(0.2)


class TestFaces:
    """Tests for face normals and tangents."""

    def test_outward_normals(self, box):
        faces = build_faces(box)
        np.testing.assert_allclose(faces[0].tangent, [1.0, 0.0])
        np.testing.assert_allclose(faces[0].normal, [0.0, -1.0])
        for face in faces:
            midpoint = face.point_at(face.length / 2)
            assert face.normal @ midpoint > 0

    def test_face_lengths(self, box):
        assert all(face.length == pytest.approx(0.2) for face in box.faces)

    def test_halfplane_value(self, box):
        face = box.faces[0]
        assert face.halfplane_value((0.0, -0.3)) == pytest.approx(0.2)
        assert face.halfplane_value((0.0, 0.0)) == pytest.approx(-0.1)


class TestRegionDecomposition:
    """Tests for the collision-free region decomposition."""

    def test_one_region_per_face(self, box_decomp):
        assert len(box_decomp.regions) == 4
        assert all(poly.area > 0 for poly in box_decomp.region_polygons)

    def test_gap_in_front_of_face(self, box_decomp):
        gap, face = min_gap(box_decomp, (0.0, -0.2))
        assert face == 0
        assert gap == pytest.approx(0.09)

    def test_corner_tie_resolves_to_lowest_face(self, box_decomp):
        assert box_decomp.regions[0].contains((0.2, -0.2))
        assert box_decomp.regions[1].contains((0.2, -0.2))
        gap, face = min_gap(box_decomp, (0.2, -0.2))
        assert face == 0
        assert gap == pytest.approx(0.09)

    def test_inside_slider_has_no_region(self, box_decomp):
        with pytest.raises(NoContainingRegion):
            min_gap(box_decomp, (0.0, 0.0))

    def test_neighbouring_regions_overlap(self, box_decomp):
        assert box_decomp.regions_intersect(0, 1)
        assert box_decomp.regions_intersect(3, 0)
        assert not box_decomp.regions_intersect(0, 2)

    def test_sample_point_is_inside(self, box_decomp):
        for i in range(4):
            assert box_decomp.regions[i].contains(box_decomp.sample_point(i))

    def test_proximity_faces(self, box_decomp):
        faces = box_decomp.proximity_faces(0)
        assert 0 in faces
        assert 2 not in faces

    def test_tee_has_reflex_regions(self):
        tee = SliderGeometry.from_preset("tee")
        decomp = decompose_regions(tee, PusherSpec(radius=0.01), 0.6)
        assert len(decomp.regions) == 8
        assert all(not poly.is_empty for poly in decomp.region_polygons)

    def test_workspace_too_small(self, box):
        with pytest.raises(DegeneratePolygon, match="empty"):
            decompose_regions(box, PusherSpec(radius=0.01), 0.2)


class TestPoses:
    """Tests for rotations and world positions."""

    def test_rotation_matrix(self):
        np.testing.assert_allclose(rotation_matrix((0.0, 1.0)), [[0.0, -1.0], [1.0, 0.0]])

    def test_vertex_world_position(self):
        p = vertex_world_position(((1.0, 2.0), (0.0, 1.0)), (1.0, 0.0))
        np.testing.assert_allclose(p, [1.0, 3.0])
