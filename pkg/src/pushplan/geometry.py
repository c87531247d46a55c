"""Slider geometry, face data and the collision-free region decomposition.

This module handles everything the planner needs to know about the slider shape:
- Polygon validation (simple, non-degenerate, counter-clockwise)
- Faces with outward normals and tangents
- Decomposition of the pusher's collision-free space into one polyhedral region per face
- Piecewise-linear gap functions and the minimal gap over containing regions
- World positions of slider vertices for a pose parametrized by r = (cos θ, sin θ)

All coordinates are in the slider frame S unless stated otherwise; the frame origin
is the slider's center of mass.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import LinearRing, Point, Polygon

from .config import get_preset_vertices, transcription_default
from .types import DegeneratePolygon, NoContainingRegion, PusherSpec

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# =============================================================================
# Constants
# =============================================================================

MIN_VERTEX_SEPARATION = 1e-9  # meters between consecutive vertices
REGION_OVERLAP = 1e-3  # extra outward offset of convex split planes (meters)
CONTAINMENT_TOL = 1e-9  # slack when testing halfspace membership
NORMAL_TOL = 1e-12


def rotation_matrix(r) -> np.ndarray:
    """Return R(r) = [[c, -s], [s, c]] for r = (c, s)."""
    c, s = float(r[0]), float(r[1])
    return np.array([[c, -s], [s, c]])


def cross2(a, b) -> float:
    """Scalar cross product a_x b_y - a_y b_x."""
    return float(a[0] * b[1] - a[1] * b[0])


# =============================================================================
# Slider geometry
# =============================================================================


@dataclass(frozen=True)
class Face:
    """One polygon edge with its outward normal and CCW tangent.

    The normal is the tangent rotated 90° clockwise, so it points away from the
    interior of a counter-clockwise polygon.
    """

    index: int
    q_start: np.ndarray
    q_end: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    length: float

    def point_at(self, lam: float) -> np.ndarray:
        """Contact point q_start + λ t̂ at coordinate ``lam`` along the face."""
        return self.q_start + lam * self.tangent

    def halfplane_value(self, p) -> float:
        """Signed distance of ``p`` to the supporting line (negative inside)."""
        return float(self.normal @ (np.asarray(p, dtype=float) - self.q_start))


@dataclass(frozen=True, eq=False)
class SliderGeometry:
    """Simple polygon in the slider frame, vertices in counter-clockwise order."""

    vertices: np.ndarray
    com: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DegeneratePolygon(f"Slider polygon needs at least 3 planar vertices, got {verts.shape}")
        gaps = np.linalg.norm(verts - np.roll(verts, -1, axis=0), axis=1)
        if np.any(gaps <= MIN_VERTEX_SEPARATION):
            raise DegeneratePolygon("Slider polygon has coincident consecutive vertices")
        ring = LinearRing(verts)
        if not ring.is_simple:
            raise DegeneratePolygon("Slider polygon is self-intersecting")
        if not ring.is_ccw:
            raise DegeneratePolygon("Slider polygon vertices must be counter-clockwise")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))

    @classmethod
    def from_vertices(cls, vertices, recenter: bool = True) -> "SliderGeometry":
        """Build a geometry from raw vertices, fixing orientation and centering on the centroid.

        Args:
            vertices: Sequence of (x, y) pairs
            recenter: Shift vertices so the polygon centroid is the frame origin
        """
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DegeneratePolygon(f"Slider polygon needs at least 3 planar vertices, got {verts.shape}")
        ring = LinearRing(verts)
        if ring.is_simple and not ring.is_ccw:
            verts = verts[::-1].copy()
        if recenter and ring.is_simple:
            centroid = Polygon(verts).centroid
            verts = verts - np.array([centroid.x, centroid.y])
        return cls(vertices=verts)

    @classmethod
    def from_preset(cls, name: str) -> "SliderGeometry":
        """Build one of the packaged slider shapes (``box`` or ``tee``)."""
        return cls.from_vertices(get_preset_vertices(name))

    @cached_property
    def faces(self) -> list[Face]:
        return build_faces(self)

    @property
    def num_faces(self) -> int:
        return len(self.vertices)

    @cached_property
    def characteristic_radius(self) -> float:
        """Largest distance from a vertex to the frame origin."""
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    @cached_property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    def distance_to(self, p) -> float:
        """Euclidean distance from ``p`` to the polygon (0 inside)."""
        return float(self.polygon.distance(Point(float(p[0]), float(p[1]))))

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist()}


def build_faces(geometry: SliderGeometry) -> list[Face]:
    """Return the faces of ``geometry`` in counter-clockwise order.

    Raises:
        DegeneratePolygon: If the polygon is invalid
    """
    verts = np.asarray(geometry.vertices, dtype=float)
    if len(verts) < 3:
        raise DegeneratePolygon(f"Slider polygon needs at least 3 vertices, got {len(verts)}")
    if not LinearRing(verts).is_simple:
        raise DegeneratePolygon("Slider polygon is self-intersecting")

    faces = []
    for i, q_start in enumerate(verts):
        q_end = verts[(i + 1) % len(verts)]
        edge = q_end - q_start
        length = float(np.linalg.norm(edge))
        if length <= MIN_VERTEX_SEPARATION:
            raise DegeneratePolygon(f"Face {i} has zero length")
        tangent = edge / length
        normal = np.array([tangent[1], -tangent[0]])
        faces.append(
            Face(
                index=i,
                q_start=q_start.copy(),
                q_end=q_end.copy(),
                normal=normal,
                tangent=tangent,
                length=length,
            )
        )
    return faces


# =============================================================================
# Region decomposition
# =============================================================================


@dataclass(frozen=True)
class Halfspace:
    """The set {p : a · p ≥ b}."""

    a: np.ndarray
    b: float

    def value(self, p) -> float:
        return float(self.a @ np.asarray(p, dtype=float) - self.b)


@dataclass(frozen=True, eq=False)
class Region:
    """Collision-free region Q_i attached to face i, with gap φ_i(p) = n̂_i·(p − q_i) − ρ."""

    face_index: int
    halfspaces: tuple[Halfspace, ...]
    normal: np.ndarray
    anchor: np.ndarray
    pusher_radius: float

    def gap(self, p) -> float:
        return float(self.normal @ (np.asarray(p, dtype=float) - self.anchor)) - self.pusher_radius

    def contains(self, p, tol: float = CONTAINMENT_TOL) -> bool:
        return all(h.value(p) >= -tol for h in self.halfspaces)


@dataclass(frozen=True, eq=False)
class RegionDecomposition:
    """One region per face, plus the workspace box used to clip them."""

    geometry: SliderGeometry
    pusher: PusherSpec
    regions: tuple[Region, ...]
    workspace_side: float

    def gap(self, face_index: int, p) -> float:
        return self.regions[face_index].gap(p)

    def workspace_halfspaces(self) -> tuple[Halfspace, ...]:
        half = self.workspace_side / 2
        return (
            Halfspace(np.array([1.0, 0.0]), -half),
            Halfspace(np.array([-1.0, 0.0]), -half),
            Halfspace(np.array([0.0, 1.0]), -half),
            Halfspace(np.array([0.0, -1.0]), -half),
        )

    def bounded_halfspaces(self, face_index: int) -> tuple[Halfspace, ...]:
        """Region halfspaces followed by the workspace box rows."""
        return self.regions[face_index].halfspaces + self.workspace_halfspaces()

    @cached_property
    def region_polygons(self) -> tuple[Polygon, ...]:
        return tuple(self._clip(i) for i in range(len(self.regions)))

    def _clip(self, face_index: int) -> Polygon:
        half = self.workspace_side / 2
        shape = shapely.box(-half, -half, half, half)
        reach = 10.0 * self.workspace_side
        for h in self.regions[face_index].halfspaces:
            shape = shape.intersection(_halfplane_polygon(h, reach))
        return shape

    def regions_intersect(self, k: int, l: int) -> bool:
        """Whether clipped regions k and l share a point."""
        return bool(self.region_polygons[k].intersects(self.region_polygons[l]))

    def sample_point(self, face_index: int) -> np.ndarray:
        """A representative interior point of a clipped region."""
        point = self.region_polygons[face_index].representative_point()
        return np.array([point.x, point.y])

    def proximity_faces(self, face_index: int) -> tuple[int, ...]:
        """Faces whose gap is nonnegative over the whole clipped region ``face_index``.

        The region's own face is always included. These are the faces whose
        proximity term stays well defined inside that region.
        """
        coords = np.asarray(self.region_polygons[face_index].exterior.coords)
        result = []
        for region in self.regions:
            if region.face_index == face_index:
                result.append(face_index)
                continue
            if min(region.gap(c) for c in coords) >= -CONTAINMENT_TOL:
                result.append(region.face_index)
        return tuple(result)


def _halfplane_polygon(h: Halfspace, reach: float) -> Polygon:
    """Large quadrilateral covering {a·p ≥ b} within ``reach`` of the boundary foot point."""
    a_hat = h.a / np.linalg.norm(h.a)
    foot = a_hat * (h.b / np.linalg.norm(h.a))
    along = np.array([-a_hat[1], a_hat[0]])
    corners = [
        foot - reach * along,
        foot + reach * along,
        foot + reach * along + reach * a_hat,
        foot - reach * along + reach * a_hat,
    ]
    return Polygon(corners)


def decompose_regions(
    geometry: SliderGeometry,
    pusher: PusherSpec,
    workspace_side: float | None = None,
) -> RegionDecomposition:
    """Split the collision-free pusher positions into one region per face.

    Convex vertices split neighbouring regions along the normal bisector, offset
    outward by ρ + 1 mm so the regions overlap; reflex vertices split along the
    extensions of the two incident edges.

    Args:
        geometry: Slider polygon
        pusher: Pusher description (radius ρ)
        workspace_side: Side of the clipping box centred on the slider CoM

    Returns:
        RegionDecomposition with one region per face

    Raises:
        DegeneratePolygon: If the polygon is invalid or a clipped region is empty
    """
    if workspace_side is None:
        workspace_side = float(transcription_default("workspace_side"))
    faces = build_faces(geometry)
    rho = pusher.radius
    overlap = rho + REGION_OVERLAP
    n = len(faces)

    halfspaces: list[list[Halfspace]] = [
        [Halfspace(f.normal.copy(), float(f.normal @ f.q_start) + rho)] for f in faces
    ]

    for j, face_j in enumerate(faces):
        i = (j - 1) % n
        face_i = faces[i]
        vertex = face_j.q_start
        turn = cross2(face_i.tangent, face_j.tangent)
        if turn >= 0:
            bisector = 0.5 * (face_i.normal + face_j.normal)
            perp = np.array([-bisector[1], bisector[0]])
            perp /= np.linalg.norm(perp)
            if perp @ (-face_i.tangent) < 0:
                perp = -perp
            halfspaces[i].append(Halfspace(perp, float(perp @ vertex) - overlap))
            halfspaces[j].append(Halfspace(-perp, float(-perp @ vertex) - overlap))
        else:
            halfspaces[i].append(Halfspace(face_j.normal.copy(), float(face_j.normal @ vertex) + rho))
            halfspaces[j].append(Halfspace(face_i.normal.copy(), float(face_i.normal @ vertex) + rho))

    regions = tuple(
        Region(
            face_index=f.index,
            halfspaces=tuple(halfspaces[f.index]),
            normal=f.normal,
            anchor=f.q_start,
            pusher_radius=rho,
        )
        for f in faces
    )
    decomp = RegionDecomposition(
        geometry=geometry, pusher=pusher, regions=regions, workspace_side=workspace_side
    )
    for i, poly in enumerate(decomp.region_polygons):
        if poly.is_empty or poly.area <= 0:
            raise DegeneratePolygon(
                f"Region of face {i} is empty inside a workspace of side {workspace_side} m"
            )
    logger.debug("Decomposed %d faces into regions (rho=%.4f)", n, rho)
    return decomp


def min_gap(decomp: RegionDecomposition, p) -> tuple[float, int]:
    """Smallest gap over the regions containing ``p``.

    Args:
        decomp: Region decomposition
        p: Pusher position in the slider frame

    Returns:
        (gap value, face index); ties resolve to the lowest face index

    Raises:
        NoContainingRegion: If no region contains ``p``
    """
    best: tuple[float, int] | None = None
    for region in decomp.regions:
        if not region.contains(p):
            continue
        value = region.gap(p)
        if best is None or value < best[0]:
            best = (value, region.face_index)
    if best is None:
        raise NoContainingRegion(f"Pusher position {tuple(np.round(p, 6))} is in no collision-free region")
    return best


def vertex_world_position(pose, nu) -> np.ndarray:
    """World position p^S + R(r)·ν of a slider-frame point ``nu``.

    Args:
        pose: (p_S, r) with r = (cos θ, sin θ)
        nu: Point in the slider frame
    """
    p_s, r = pose
    return np.asarray(p_s, dtype=float) + rotation_matrix(r) @ np.asarray(nu, dtype=float)
