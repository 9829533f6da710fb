"""Triangle meshes: STL input/output, planar slicing and contour extraction.

Slicing welds coincident vertices, intersects every triangle that straddles
the plane, and chains the resulting segments through the mesh edges they
cross. Two segments that cross the same edge share an endpoint exactly, so
chaining needs no distance tolerance and a boundary edge (an edge with only
one triangle) shows up as an open chain.
"""

import re
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import LinearRing, Polygon

from .contour import (
    ContourLayer,
    GeometryError,
    atomic_write_bytes,
    atomic_write_text,
    canonical_order,
    resample_closed,
    signed_area,
)

__all__ = [
    "MeshError",
    "TriangleMesh",
    "box_mesh",
    "cylinder_mesh",
    "extract_external_contour",
    "extrude_polygon",
    "preprocess_polyline",
    "read_stl",
    "regular_polygon",
    "slice_mesh",
    "torus_mesh",
    "write_stl",
]

DUPLICATE_TOL = 1e-9
COLLINEAR_TOL = 1e-12
NUDGE = 1e-9


class MeshError(GeometryError):
    """Malformed or non-watertight mesh."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices ``(n, 3)`` in mm and triangles ``(m, 3)`` of vertex indices."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("triangle indices out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @property
    def z_range(self):
        return float(self.vertices[:, 2].min()), float(self.vertices[:, 2].max())

    def areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def cleaned(self):
        """Weld vertices closer than the duplicate tolerance (on a grid of
        that size) and drop triangles that become degenerate."""
        v = self.vertices
        extent = max(float(np.ptp(v, axis=0).max()), 1.0) if len(v) else 1.0
        keys = np.round(v / (DUPLICATE_TOL * extent)).astype(np.int64)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        verts = v[first]
        tris = inverse[self.triangles]
        distinct = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
        mesh = TriangleMesh(verts, tris[distinct])
        return TriangleMesh(mesh.vertices, mesh.triangles[mesh.areas() > 0.0])


# ---------------------------------------------------------------------------
# STL


_RECORD = np.dtype(
    [("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]
)


def _from_facets(facets):
    facets = np.asarray(facets, dtype=float).reshape(-1, 3, 3)
    verts = facets.reshape(-1, 3)
    tris = np.arange(len(verts)).reshape(-1, 3)
    return TriangleMesh(verts, tris)


def read_stl(path):
    """Read a binary or text STL file; vertices are welded."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) >= 84:
        count = int(np.frombuffer(data, "<u4", 1, 80)[0])
        if len(data) == 84 + 50 * count:
            rec = np.frombuffer(data, _RECORD, count, 84)
            return _from_facets(rec["v"].astype(float)).cleaned()
    text = data.decode("ascii", errors="replace")
    if not text.lstrip().lower().startswith("solid"):
        raise MeshError(f"{path}: neither binary nor text STL")
    nums = re.findall(r"vertex\s+(\S+)\s+(\S+)\s+(\S+)", text, flags=re.IGNORECASE)
    if not nums or len(nums) % 3:
        raise MeshError(f"{path}: malformed text STL ({len(nums)} vertices)")
    try:
        facets = np.array(nums, dtype=float)
    except ValueError as exc:
        raise MeshError(f"{path}: bad vertex coordinate ({exc})") from None
    return _from_facets(facets).cleaned()


def _normals(mesh):
    p = mesh.vertices[mesh.triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def write_stl(path, mesh, binary=True, name="ecm"):
    """Write ``mesh`` as binary (default) or text STL, atomically."""
    p = mesh.vertices[mesh.triangles]
    normals = _normals(mesh)
    if binary:
        rec = np.zeros(len(p), dtype=_RECORD)
        rec["normal"] = normals
        rec["v"] = p
        header = name.encode()[:80].ljust(80, b" ")
        body = header + np.uint32(len(p)).tobytes() + rec.tobytes()
        atomic_write_bytes(path, body)
        return
    lines = [f"solid {name}"]
    for nrm, tri in zip(normals, p):
        lines.append("  facet normal {:.9g} {:.9g} {:.9g}".format(*nrm))
        lines.append("    outer loop")
        for v in tri:
            lines.append("      vertex {:.17g} {:.17g} {:.17g}".format(*v))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# slicing


def slice_mesh(mesh, z):
    """Intersect a watertight mesh with the plane at height ``z``.

    Returns
    -------
    list of ndarray
        Closed loops as ``(m, 2)`` vertex arrays without a repeated closing
        vertex, each oriented counterclockwise.

    Raises
    ------
    MeshError
        If ``z`` is outside the mesh, or segments do not close into loops.
    """
    mesh = mesh.cleaned()
    zmin, zmax = mesh.z_range
    if not zmin < z < zmax:
        raise MeshError(f"slice height {z} is outside the mesh extent ({zmin}, {zmax})")
    height = zmax - zmin
    vz = mesh.vertices[:, 2]
    while np.any(np.abs(vz - z) <= NUDGE * height * 1e-3):
        z = z + NUDGE * height
    side = vz > z
    tris = mesh.triangles
    s = side[tris]
    crossing = s.any(axis=1) & ~s.all(axis=1)
    points = {}
    neighbours = {}

    def edge_point(a, b):
        key = (min(a, b), max(a, b))
        if key not in points:
            pa, pb = mesh.vertices[key[0]], mesh.vertices[key[1]]
            f = (z - pa[2]) / (pb[2] - pa[2])
            points[key] = pa[:2] + f * (pb[:2] - pa[:2])
        return key

    for tri in tris[crossing]:
        keys = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            if side[a] != side[b]:
                keys.append(edge_point(int(a), int(b)))
        k0, k1 = keys
        neighbours.setdefault(k0, []).append(k1)
        neighbours.setdefault(k1, []).append(k0)

    bad = [k for k, nb in neighbours.items() if len(nb) != 2]
    if bad:
        where = ", ".join(f"({points[k][0]:.6g}, {points[k][1]:.6g})" for k in bad[:5])
        raise MeshError(f"mesh is not watertight at z={z:.9g}: open chain ends near {where}")

    loops = []
    seen = set()
    for start in sorted(neighbours):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            a, b = neighbours[cur]
            nxt = b if a == prev else a
            if nxt == start:
                break
            if nxt in seen:
                raise MeshError(f"non-manifold crossing at z={z:.9g}")
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        pts = np.array([points[k] for k in loop])
        if len(pts) < 3:
            continue
        pts = _drop_collinear(pts)
        if len(pts) < 3:
            continue
        if signed_area(pts) < 0.0:
            pts = pts[::-1]
        loops.append(pts)
    return loops


def _drop_collinear(pts):
    """Remove loop vertices lying on the straight line through their
    neighbours (crossings of quad diagonals on flat walls)."""
    scale = max(float(np.ptp(pts, axis=0).max()), 1.0)
    while len(pts) > 3:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        u, v = pts - prev, nxt - pts
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        straight = (np.abs(cross) <= COLLINEAR_TOL * scale**2) & (np.einsum("ij,ij->i", u, v) > 0.0)
        if not straight.any():
            break
        # drop every other flagged vertex per pass so neighbours stay valid
        idx = np.flatnonzero(straight)
        drop = idx[np.concatenate([[True], np.diff(idx) > 1])]
        pts = np.delete(pts, drop, axis=0)
    return pts


# ---------------------------------------------------------------------------
# contour preprocessing


def preprocess_polyline(points):
    """Remove tied vertices and sort the loop into a single traversal.

    Consecutive vertices closer than 1e-9 mm and exact repeats are dropped
    (first occurrence kept). A loop that is already simple keeps its order;
    otherwise the vertices are sorted by angle about their centroid, falling
    back to a nearest-neighbour chain when that ordering self-intersects.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise GeometryError("expected an (m, 2) array of points")
    keep = [0]
    for i in range(1, len(p)):
        if np.hypot(*(p[i] - p[keep[-1]])) >= DUPLICATE_TOL:
            keep.append(i)
    p = p[keep]
    if len(p) > 1 and np.hypot(*(p[-1] - p[0])) < DUPLICATE_TOL:
        p = p[:-1]
    _, first = np.unique(p, axis=0, return_index=True)
    p = p[np.sort(first)]
    if len(p) < 3:
        raise GeometryError(f"degenerate contour: {len(p)} distinct points")
    if LinearRing(p).is_simple:
        return p
    centre = p.mean(axis=0)
    order = np.argsort(np.arctan2(p[:, 1] - centre[1], p[:, 0] - centre[0]), kind="stable")
    q = p[order]
    if LinearRing(q).is_simple:
        return q
    return _nearest_chain(p)


def _nearest_chain(p):
    left = list(range(1, len(p)))
    chain = [0]
    while left:
        d = np.hypot(*(p[left] - p[chain[-1]]).T)
        chain.append(left.pop(int(np.argmin(d))))
    return p[chain]


def extract_external_contour(loops, grid_size=1024, z=0.0):
    """Outer loop (largest enclosed area) resampled uniformly in arc length,
    starting at its lowest-then-leftmost vertex and running counterclockwise."""
    if not loops:
        raise GeometryError("no loops to choose from")
    areas = [abs(signed_area(lp)) for lp in loops]
    outer = preprocess_polyline(loops[int(np.argmax(areas))])
    pts = resample_closed(canonical_order(outer), grid_size)
    return ContourLayer.from_points(z, pts, closed=True)


# ---------------------------------------------------------------------------
# synthetic meshes


def extrude_polygon(points, z0=0.0, z1=1.0):
    """Closed prism over a simple polygon, capped by constrained Delaunay
    triangulations of the polygon."""
    p = np.asarray(points, dtype=float)
    if signed_area(p) < 0.0:
        p = p[::-1]
    m = len(p)
    bottom = np.column_stack([p, np.full(m, z0)])
    top = np.column_stack([p, np.full(m, z1)])
    verts = np.vstack([bottom, top])
    tris = []
    for i in range(m):
        j = (i + 1) % m
        tris.append((i, j, m + j))
        tris.append((i, m + j, m + i))
    index = {tuple(pt): i for i, pt in enumerate(p)}
    cdt = shapely.constrained_delaunay_triangles(Polygon(p))
    for tri in cdt.geoms:
        ids = [index[tuple(c)] for c in np.asarray(tri.exterior.coords)[:3]]
        a, b, c = (p[k] for k in ids)
        if signed_area(np.array([a, b, c])) < 0.0:
            ids = ids[::-1]
        tris.append((ids[0], ids[2], ids[1]))  # bottom faces down
        tris.append((m + ids[0], m + ids[1], m + ids[2]))
    return TriangleMesh(verts, np.array(tris))


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """Axis-aligned box."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    return extrude_polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], z0, z1)


def regular_polygon(sides, radius=1.0, centre=(0.0, 0.0)):
    ang = 2.0 * np.pi * np.arange(sides) / sides
    return np.column_stack([centre[0] + radius * np.cos(ang), centre[1] + radius * np.sin(ang)])


def cylinder_mesh(sides=64, radius=1.0, height=1.0):
    """Prism over a regular polygon."""
    return extrude_polygon(regular_polygon(sides, radius), 0.0, height)


def torus_mesh(major=2.0, minor=0.5, n_major=48, n_minor=24):
    """Torus around the z axis; horizontal slices near mid-height give two
    nested loops."""
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * (np.arange(n_minor) + 0.5) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major + minor * np.cos(vv)
    verts = np.column_stack([(r * np.cos(uu)).ravel(), (r * np.sin(uu)).ravel(), (minor * np.sin(vv)).ravel()])
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            tris.append((a, b, c))
            tris.append((a, c, d))
    return TriangleMesh(verts, np.array(tris))
