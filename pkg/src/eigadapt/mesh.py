"""Conforming 2D triangle meshes with boundary topology and curved geometry.

Vertices carry a kind (interior, boundary, corner); boundary vertices and
boundary edges carry the tag and parameter of the geometry curve they lie
on, so refinement can project new boundary points back onto the curve (or
onto the frozen boundary polygon).  Meshes are immutable once built; the
remesher works on its own mutable scratch arrays and rebuilds a TriMesh at
the end.
"""

import math

import numpy as np

from .errors import GeometryError, LocateError, MeshError

INTERIOR = 0
BOUNDARY = 1
CORNER = 2

_KIND_NAMES = {INTERIOR: "interior", BOUNDARY: "boundary", CORNER: "corner"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}

# Equilateral reference triangle with unit area: side a solves a^2 sqrt(3)/4 = 1.
REF_SIDE = 2.0 / 3.0 ** 0.25


def reference_element():
    """Vertices of the unit-area equilateral reference triangle."""
    a = REF_SIDE
    return np.array([[0.0, 0.0],
                     [a, 0.0],
                     [0.5 * a, 0.5 * a * math.sqrt(3.0)]])


_REF = reference_element()
_REF_EDGE = np.array([_REF[1] - _REF[0], _REF[2] - _REF[0]]).T  # columns
_REF_EDGE_INV = np.linalg.inv(_REF_EDGE)


class AffineMap:
    """Affine map F(xi) = jacobian @ xi + translation from the reference
    element onto a physical triangle; det(jacobian) equals the triangle
    area because the reference element has unit area."""

    def __init__(self, jacobian, translation):
        self.jacobian = np.asarray(jacobian, dtype=float)
        self.translation = np.asarray(translation, dtype=float)

    def apply(self, xi):
        xi = np.asarray(xi, dtype=float)
        return xi @ self.jacobian.T + self.translation

    @property
    def det(self):
        j = self.jacobian
        return j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]


def triangle_areas(vertices, triangles):
    """Signed areas, positive for counterclockwise triangles."""
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def affine_jacobians(vertices, triangles):
    """Jacobians of the reference-to-physical maps, shape (n, 2, 2)."""
    p = vertices[triangles]
    edge = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    return edge @ _REF_EDGE_INV


# ---------------------------------------------------------------------------
# geometry curves


class Segment:
    """Straight curve piece, parameter in [0, 1] at constant speed."""

    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.t_begin = 0.0
        self.t_end = 1.0

    @property
    def length(self):
        return float(np.hypot(*(self.p1 - self.p0)))

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.p0 + np.multiply.outer(t, self.p1 - self.p0)

    def start(self):
        return self.p0

    def end(self):
        return self.p1


class Arc:
    """Circular arc, parameterized by the angle (constant speed)."""

    def __init__(self, center, radius, angle0, angle1):
        if radius <= 0.0:
            raise GeometryError("arc radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.t_begin = float(angle0)
        self.t_end = float(angle1)

    @property
    def length(self):
        return abs(self.t_end - self.t_begin) * self.radius

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.center + self.radius * np.stack(
            [np.cos(t), np.sin(t)], axis=-1)

    def start(self):
        return self.point(self.t_begin)

    def end(self):
        return self.point(self.t_end)


class Polyline:
    """Piecewise-linear curve, parameterized by chord arc length."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise GeometryError("polyline needs at least two points")
        seg = np.hypot(*(pts[1:] - pts[:-1]).T)
        if np.any(seg <= 0.0):
            raise GeometryError("polyline has a zero-length chord")
        self.points = pts
        self.node_params = np.concatenate([[0.0], np.cumsum(seg)])
        self.t_begin = 0.0
        self.t_end = float(self.node_params[-1])

    @property
    def length(self):
        return self.t_end

    def point(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t = np.clip(t, self.t_begin, self.t_end)
        idx = np.clip(np.searchsorted(self.node_params, t, side="right") - 1,
                      0, len(self.points) - 2)
        t0 = self.node_params[idx]
        t1 = self.node_params[idx + 1]
        w = (t - t0) / (t1 - t0)
        out = (1.0 - w)[..., None] * self.points[idx] \
            + w[..., None] * self.points[idx + 1]
        return out[0] if scalar else out

    def is_node_param(self, t, tol=1e-12):
        """True when t coincides with an interior polyline node."""
        inner = self.node_params[1:-1]
        if inner.size == 0:
            return False
        return bool(np.min(np.abs(inner - t)) <= tol * max(1.0, self.t_end))

    def start(self):
        return self.points[0]

    def end(self):
        return self.points[-1]


class Geometry:
    """Closed domain boundary as a counterclockwise loop of curves.

    Curve junctions are the domain corners (immovable in all mesh
    operations).  In frozen-polygon mode the curves are the polylines of an
    initial boundary polygon and refinement never projects beyond it.
    """

    def __init__(self, curves, mode="exact"):
        if mode not in ("exact", "frozen"):
            raise GeometryError("geometry mode must be 'exact' or 'frozen'")
        if not curves:
            raise GeometryError("geometry needs at least one curve")
        self.curves = list(curves)
        self.mode = mode
        n = len(self.curves)
        tol = 1e-9 * max(c.length for c in self.curves)
        for i, c in enumerate(self.curves):
            nxt = self.curves[(i + 1) % n]
            if np.hypot(*(c.end() - nxt.start())) > tol:
                raise GeometryError(
                    "curve %d does not join curve %d" % (i, (i + 1) % n))
        if n == 1 and np.hypot(*(self.curves[0].end()
                                 - self.curves[0].start())) <= tol:
            self._corner_points = np.zeros((0, 2))
        else:
            self._corner_points = np.array(
                [c.start() for c in self.curves])

    @property
    def corners(self):
        return self._corner_points

    @property
    def perimeter(self):
        return sum(c.length for c in self.curves)

    def diameter_hint(self):
        pts = np.concatenate([np.atleast_2d(c.start()) for c in self.curves]
                             + [np.atleast_2d(c.end()) for c in self.curves])
        return float(np.max(np.ptp(pts, axis=0)))


class TriMesh:
    """Immutable conforming triangulation with boundary topology.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    vertex_kind : (nv,) int array of INTERIOR / BOUNDARY / CORNER
    vertex_tag, vertex_param : curve binding for BOUNDARY vertices
    be_verts : (nb, 2) int array of boundary edges, loop-ordered per edge
    be_tag : (nb,) curve tag per boundary edge
    be_params : (nb, 2) curve parameters of the edge endpoints
    """

    def __init__(self, vertices, triangles, vertex_kind, vertex_tag,
                 vertex_param, be_verts, be_tag, be_params, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.vertex_kind = np.ascontiguousarray(vertex_kind, dtype=np.int8)
        self.vertex_tag = np.ascontiguousarray(vertex_tag, dtype=np.int64)
        self.vertex_param = np.ascontiguousarray(vertex_param, dtype=float)
        self.be_verts = np.ascontiguousarray(be_verts, dtype=np.int64)
        self.be_tag = np.ascontiguousarray(be_tag, dtype=np.int64)
        self.be_params = np.ascontiguousarray(be_params, dtype=float)
        self._grid = None
        self._v2t = None
        if validate:
            self.validate()

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def interior_mask(self):
        return self.vertex_kind == INTERIOR

    def areas(self):
        return triangle_areas(self.vertices, self.triangles)

    def diameter(self):
        return float(np.max(np.ptp(self.vertices, axis=0)))

    def validate(self, geometry=None):
        """Check the structural mesh invariants; raise MeshError on failure."""
        nv = self.num_vertices
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= nv):
            raise MeshError("triangle index out of range")
        areas = self.areas()
        if np.any(areas <= 0.0):
            k = int(np.argmin(areas))
            raise MeshError("triangle %d has nonpositive area %.3e"
                            % (k, areas[k]))

        edges = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]]
                        .reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge (shared by > 2 triangles)")
        bnd = uniq[counts == 1]
        declared = np.sort(self.be_verts, axis=1)
        if bnd.shape != declared.shape or not np.array_equal(
                bnd, declared[np.lexsort((declared[:, 1], declared[:, 0]))]):
            raise MeshError("declared boundary edges do not match topology")

        # every boundary vertex sits on exactly one closed loop
        deg = np.zeros(nv, dtype=int)
        np.add.at(deg, self.be_verts.ravel(), 1)
        on_bnd = self.vertex_kind != INTERIOR
        if np.any(deg[on_bnd] != 2) or np.any(deg[~on_bnd] != 0):
            raise MeshError("boundary edges do not form closed vertex loops")

        # parameters are monotone along each curve
        for tag in np.unique(self.be_tag):
            params = self.be_params[self.be_tag == tag]
            if np.any(params[:, 1] <= params[:, 0]):
                raise MeshError(
                    "non-monotone boundary parameters on curve %d" % tag)

        if geometry is not None:
            corners = self.vertices[self.vertex_kind == CORNER]
            want = geometry.corners
            if len(corners) != len(want):
                raise MeshError("corner vertex count does not match geometry")
            tol = 1e-9 * max(1.0, geometry.diameter_hint())
            for c in want:
                if np.min(np.hypot(*(corners - c).T)) > tol:
                    raise MeshError("geometry corner missing from mesh")
        return self

    def boundary_loop(self):
        """Boundary vertex indices in loop order (single loop assumed)."""
        nxt = {}
        for v0, v1 in self.be_verts:
            nxt[int(v0)] = int(v1)
        start = int(self.be_verts[0, 0])
        loop = [start]
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            cur = nxt[cur]
            if len(loop) > len(nxt) + 1:
                raise MeshError("boundary edges do not close into one loop")
        return np.array(loop, dtype=np.int64)

    def boundary_polygon_area(self):
        loop = self.boundary_loop()
        p = self.vertices[loop]
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def affine_map(self, k):
        """Affine map from the reference element onto triangle k."""
        if k < 0 or k >= self.num_triangles:
            raise MeshError("triangle index out of range")
        tri = self.triangles[k]
        p = self.vertices[tri]
        edge = np.stack([p[1] - p[0], p[2] - p[0]], axis=-1)
        jac = edge @ _REF_EDGE_INV
        d = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if d <= 0.0:
            raise MeshError("degenerate element %d" % k)
        return AffineMap(jac, p[0] - jac @ _REF[0])

    def vertex_to_triangles(self):
        """CSR-style (offsets, data) adjacency from vertices to triangles."""
        if self._v2t is None:
            flat = self.triangles.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.num_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._v2t = (offsets, order // 3)
        return self._v2t

    def vertex_patch(self, v, ring=1):
        """Vertices sharing a triangle with v (ring 1) or reachable in two
        hops (ring 2), excluding v, in ascending index order."""
        if ring not in (1, 2):
            raise ValueError("ring must be 1 or 2")
        offsets, tris = self.vertex_to_triangles()
        first = np.unique(self.triangles[tris[offsets[v]:offsets[v + 1]]])
        if ring == 1:
            return first[first != v]
        idx = np.concatenate([tris[offsets[u]:offsets[u + 1]] for u in first])
        second = np.unique(self.triangles[idx])
        return second[second != v]

    # -- point location ------------------------------------------------

    def _bucket_grid(self):
        if self._grid is None:
            self._grid = _BucketGrid(self.vertices, self.triangles)
        return self._grid

    def locate(self, point):
        """Triangle index and barycentric coordinates containing point."""
        tri, bary = self.locate_many(np.asarray(point, dtype=float)[None, :])
        if tri[0] < 0:
            raise LocateError("point (%g, %g) outside mesh"
                              % (point[0], point[1]),
                              nearest_triangle=int(-tri[0] - 1))
        return int(tri[0]), bary[0]

    def locate_many(self, points, tol=None):
        """Vectorized location; failures return tri = -(nearest+1)."""
        if tol is None:
            tol = 1e-9 * (1.0 + self.diameter())
        return self._bucket_grid().locate_many(points, tol)


class _BucketGrid:
    """Uniform spatial hash over triangle bounding boxes."""

    def __init__(self, vertices, triangles):
        self.vertices = vertices
        self.triangles = triangles
        lo = vertices.min(axis=0)
        hi = vertices.max(axis=0)
        span = np.maximum(hi - lo, 1e-300)
        n = max(1, int(math.sqrt(max(len(triangles), 1))))
        self.nx = self.ny = n
        self.lo = lo
        self.cell = span / n

        p = vertices[triangles]
        bmin = p.min(axis=1)
        bmax = p.max(axis=1)
        i0 = np.clip(((bmin - lo) / self.cell).astype(int), 0, n - 1)
        i1 = np.clip(((bmax - lo) / self.cell).astype(int), 0, n - 1)
        spans = (i1 - i0 + 1)
        pair_cells = []
        pair_tris = []
        max_dx = int(spans[:, 0].max()) if len(triangles) else 0
        max_dy = int(spans[:, 1].max()) if len(triangles) else 0
        tri_ids = np.arange(len(triangles))
        for dx in range(max_dx):
            for dy in range(max_dy):
                m = (spans[:, 0] > dx) & (spans[:, 1] > dy)
                if not np.any(m):
                    continue
                cells = (i0[m, 0] + dx) * n + (i0[m, 1] + dy)
                pair_cells.append(cells)
                pair_tris.append(tri_ids[m])
        if pair_cells:
            cells = np.concatenate(pair_cells)
            tris = np.concatenate(pair_tris)
            order = np.lexsort((tris, cells))
            cells = cells[order]
            self._tris = tris[order]
            counts = np.bincount(cells, minlength=n * n)
            self._offsets = np.concatenate([[0], np.cumsum(counts)])
        else:
            self._tris = np.zeros(0, dtype=int)
            self._offsets = np.zeros(n * n + 1, dtype=int)

    def _cell_of(self, pts):
        ij = ((pts - self.lo) / self.cell).astype(int)
        return (np.clip(ij[:, 0], 0, self.nx - 1) * self.ny
                + np.clip(ij[:, 1], 0, self.ny - 1))

    def locate_many(self, points, tol):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        nq = len(pts)
        out_tri = np.full(nq, -1, dtype=np.int64)
        out_bary = np.zeros((nq, 3))
        best_tri = np.zeros(nq, dtype=np.int64)
        best_min = np.full(nq, -np.inf)
        best_bary = np.zeros((nq, 3))

        cells = self._cell_of(pts)
        starts = self._offsets[cells]
        ends = self._offsets[cells + 1]
        self._scan(pts, np.arange(nq), starts, ends, tol,
                   out_tri, out_bary, best_tri, best_min, best_bary)

        unresolved = np.where(out_tri < 0)[0]
        if unresolved.size:
            # widen to the 3x3 (then growing) cell neighborhood
            for radius in (1, 2, 4, 8, 1 << 30):
                if unresolved.size == 0:
                    break
                for q in unresolved:
                    self._scan_radius(pts, q, radius, tol, out_tri, out_bary,
                                      best_tri, best_min, best_bary)
                unresolved = unresolved[out_tri[unresolved] < 0]
                if radius >= max(self.nx, self.ny):
                    break
        miss = out_tri < 0
        out_tri[miss] = -(best_tri[miss] + 1)
        out_bary[miss] = best_bary[miss]
        return out_tri, out_bary

    def _scan(self, pts, qidx, starts, ends, tol,
              out_tri, out_bary, best_tri, best_min, best_bary):
        counts = ends - starts
        has = counts > 0
        if not np.any(has):
            return
        qs = np.repeat(qidx[has], counts[has])
        flat = np.concatenate([self._tris[s:e]
                               for s, e in zip(starts[has], ends[has])])
        tri = self.triangles[flat]
        a = self.vertices[tri[:, 0]]
        b = self.vertices[tri[:, 1]]
        c = self.vertices[tri[:, 2]]
        p = pts[qs]
        den = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
               - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        w0 = ((b[:, 0] - p[:, 0]) * (c[:, 1] - p[:, 1])
              - (b[:, 1] - p[:, 1]) * (c[:, 0] - p[:, 0])) / den
        w1 = ((c[:, 0] - p[:, 0]) * (a[:, 1] - p[:, 1])
              - (c[:, 1] - p[:, 1]) * (a[:, 0] - p[:, 0])) / den
        w2 = 1.0 - w0 - w1
        wmin = np.minimum(np.minimum(w0, w1), w2)
        scale = np.hypot(np.hypot(*(b - a).T), np.hypot(*(c - a).T))
        ok = wmin >= -tol / np.maximum(scale, tol)
        # winner per query: max of wmin, with resolved candidates boosted
        order = np.lexsort((wmin + ok * 10.0, qs))
        qs_o = qs[order]
        last = np.concatenate([qs_o[1:] != qs_o[:-1], [True]])
        pick = order[last]
        qpick = qs[pick]
        bary = np.column_stack([w0[pick], w1[pick], w2[pick]])
        better = wmin[pick] > best_min[qpick]
        best_min[qpick[better]] = wmin[pick[better]]
        best_tri[qpick[better]] = flat[pick[better]]
        best_bary[qpick[better]] = bary[better]
        hit = ok[pick] & (out_tri[qpick] < 0)
        out_tri[qpick[hit]] = flat[pick[hit]]
        out_bary[qpick[hit]] = bary[hit]

    def _scan_radius(self, pts, q, radius, tol,
                     out_tri, out_bary, best_tri, best_min, best_bary):
        ij = ((pts[q] - self.lo) / self.cell).astype(int)
        x0 = max(0, ij[0] - radius)
        x1 = min(self.nx - 1, ij[0] + radius)
        y0 = max(0, ij[1] - radius)
        y1 = min(self.ny - 1, ij[1] + radius)
        cand = []
        for ix in range(x0, x1 + 1):
            base = ix * self.ny
            s = self._offsets[base + y0]
            e = self._offsets[base + y1 + 1]
            if e > s:
                cand.append(self._tris[s:e])
        if not cand:
            return
        flat = np.unique(np.concatenate(cand))
        tri = self.triangles[flat]
        a = self.vertices[tri[:, 0]]
        b = self.vertices[tri[:, 1]]
        c = self.vertices[tri[:, 2]]
        p = pts[q]
        den = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
               - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        w0 = ((b[:, 0] - p[0]) * (c[:, 1] - p[1])
              - (b[:, 1] - p[1]) * (c[:, 0] - p[0])) / den
        w1 = ((c[:, 0] - p[0]) * (a[:, 1] - p[1])
              - (c[:, 1] - p[1]) * (a[:, 0] - p[0])) / den
        w2 = 1.0 - w0 - w1
        wmin = np.minimum(np.minimum(w0, w1), w2)
        scale = np.hypot(np.hypot(*(b - a).T), np.hypot(*(c - a).T))
        okm = wmin >= -tol / np.maximum(scale, tol)
        jbest = int(np.argmax(wmin))
        if wmin[jbest] > best_min[q]:
            best_min[q] = wmin[jbest]
            best_tri[q] = flat[jbest]
            best_bary[q] = (w0[jbest], w1[jbest], w2[jbest])
        if np.any(okm):
            j = int(np.argmax(np.where(okm, wmin, -np.inf)))
            out_tri[q] = flat[j]
            out_bary[q] = (w0[j], w1[j], w2[j])


# ---------------------------------------------------------------------------
# polygon triangulation (ear clipping) and the initial mesh


def _ear_clip(points):
    """Triangulate a simple CCW polygon given by its vertex coordinates.

    Returns index triples into `points`.  O(n^2); only used for the coarse
    initial boundary polygon.
    """
    n = len(points)
    if n < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    pts = np.asarray(points, dtype=float)
    idx = list(range(n))
    tris = []
    scale = float(np.max(np.ptp(pts, axis=0)))
    area_eps = 1e-14 * scale * scale

    def cross(o, a, b):
        return ((pts[a, 0] - pts[o, 0]) * (pts[b, 1] - pts[o, 1])
                - (pts[a, 1] - pts[o, 1]) * (pts[b, 0] - pts[o, 0]))

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise GeometryError("ear clipping failed; polygon may "
                                "self-intersect")
        m = len(idx)
        clipped = False
        for i in range(m):
            a, b, c = idx[(i - 1) % m], idx[i], idx[(i + 1) % m]
            if cross(a, b, c) <= area_eps:
                continue  # reflex or collinear corner
            ok = True
            for j in idx:
                if j in (a, b, c):
                    continue
                # closed containment: a vertex on the new diagonal blocks
                # the ear, otherwise collinear chains leave degenerate rest
                if (cross(a, b, j) >= -area_eps
                        and cross(b, c, j) >= -area_eps
                        and cross(c, a, j) >= -area_eps):
                    ok = False
                    break
            if ok:
                tris.append((a, b, c))
                idx.pop(i)
                clipped = True
                break
        if not clipped:
            raise GeometryError("ear clipping found no ear; polygon may "
                                "self-intersect or be degenerate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def _apportion(total, weights):
    """Largest-remainder apportionment of `total` items by weights."""
    weights = np.asarray(weights, dtype=float)
    quota = total * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    rem = total - counts.sum()
    if rem > 0:
        frac = quota - counts
        order = np.lexsort((np.arange(len(weights)), -frac))
        counts[order[:rem]] += 1
    return counts


def boundary_point_layout(geometry, n_boundary):
    """Per-curve parameters for n_boundary points including all corners.

    Returns a list of parameter arrays, one per curve, covering the interior
    points of that curve (corners excluded); spacing is near-equal in arc
    length within each curve.
    """
    ncorner = len(geometry.corners)
    if n_boundary < max(ncorner, 3):
        raise GeometryError(
            "need at least %d boundary points" % max(ncorner, 3))
    lengths = [c.length for c in geometry.curves]
    counts = _apportion(n_boundary - ncorner, lengths)
    layout = []
    for c, m in zip(geometry.curves, counts):
        frac = (np.arange(1, m + 1)) / (m + 1)
        layout.append(c.t_begin + frac * (c.t_end - c.t_begin))
    return layout


def initial_mesh(geometry, n_boundary, interior_size=None):
    """Mesh the domain with exactly n_boundary boundary points.

    Boundary points are the geometry corners plus near-equal arc-length
    points on each curve; the boundary polygon is ear-clipped and, when
    `interior_size` is finer than the boundary spacing, the interior is
    refined to that element size with the boundary left untouched.
    """
    layout = boundary_point_layout(geometry, n_boundary)
    verts = []
    kind = []
    tag = []
    param = []
    be_verts = []
    be_tag = []
    be_params = []
    corner_index = {}

    tol = 1e-9 * max(c.length for c in geometry.curves)

    def corner_vertex(point):
        point = np.asarray(point, dtype=float)
        for key, vid in corner_index.items():
            if np.hypot(point[0] - key[0], point[1] - key[1]) <= tol:
                return vid
        corner_index[(point[0], point[1])] = len(verts)
        verts.append(point)
        kind.append(CORNER)
        tag.append(-1)
        param.append(np.nan)
        return len(verts) - 1

    single_closed = len(geometry.corners) == 0
    first_vertex = None
    prev_vertex = None
    prev_param = None
    for ci, (curve, ts) in enumerate(zip(geometry.curves, layout)):
        if single_closed:
            if first_vertex is None:
                pt = curve.start()
                first_vertex = len(verts)
                verts.append(pt)
                kind.append(BOUNDARY)
                tag.append(ci)
                param.append(curve.t_begin)
            start_v = first_vertex
        else:
            start_v = corner_vertex(curve.start())
            if first_vertex is None:
                first_vertex = start_v
        prev_vertex = start_v
        prev_param = curve.t_begin
        for t in ts:
            v = len(verts)
            verts.append(np.asarray(curve.point(t), dtype=float).reshape(2))
            kind.append(BOUNDARY)
            tag.append(ci)
            param.append(float(t))
            be_verts.append((prev_vertex, v))
            be_tag.append(ci)
            be_params.append((prev_param, float(t)))
            prev_vertex, prev_param = v, float(t)
        if ci + 1 < len(geometry.curves):
            end_v = (corner_vertex(curve.end()) if not single_closed
                     else first_vertex)
        else:
            end_v = first_vertex
        be_verts.append((prev_vertex, end_v))
        be_tag.append(ci)
        be_params.append((prev_param, curve.t_end))

    verts = np.array(verts)
    loop = _loop_order(be_verts)
    x, y = verts[loop, 0], verts[loop, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) <= 0.0:
        raise GeometryError("geometry loop is not counterclockwise")

    tris = _ear_clip_loop(verts, loop)
    mesh = TriMesh(verts, tris, np.array(kind), np.array(tag),
                   np.array(param), np.array(be_verts, dtype=np.int64),
                   np.array(be_tag, dtype=np.int64),
                   np.array(be_params, dtype=float))

    if interior_size is not None:
        from .adapt import refine_interior_uniform
        mesh = refine_interior_uniform(mesh, geometry, interior_size)
    return mesh


def _loop_order(be_verts):
    nxt = {int(a): int(b) for a, b in be_verts}
    start = int(be_verts[0][0])
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
    return np.array(loop, dtype=np.int64)


def _ear_clip_loop(verts, loop):
    local = _ear_clip(verts[loop])
    return loop[local]


def freeze_geometry(mesh, geometry):
    """Replace each geometry curve by the polyline through the mesh's
    boundary points on it, remapping the mesh's curve parameters to chord
    arc length.  Returns (frozen geometry, remapped mesh)."""
    ncurves = len(geometry.curves)
    new_curves = []
    new_param = mesh.vertex_param.copy()
    new_be_params = mesh.be_params.copy()
    for ci in range(ncurves):
        sel = np.where(mesh.be_tag == ci)[0]
        order = np.argsort(mesh.be_params[sel, 0])
        sel = sel[order]
        vids = list(mesh.be_verts[sel, 0]) + [mesh.be_verts[sel[-1], 1]]
        pts = mesh.vertices[vids]
        poly = Polyline(pts)
        new_curves.append(poly)
        for j, v in enumerate(vids):
            if mesh.vertex_kind[v] == BOUNDARY:
                new_param[v] = poly.node_params[j]
        new_be_params[sel, 0] = poly.node_params[:-1]
        new_be_params[sel, 1] = poly.node_params[1:]
    frozen = Geometry(new_curves, mode="frozen")
    remapped = TriMesh(mesh.vertices, mesh.triangles, mesh.vertex_kind,
                       mesh.vertex_tag, new_param, mesh.be_verts,
                       mesh.be_tag, new_be_params)
    return frozen, remapped


# ---------------------------------------------------------------------------
# mesh file I/O


def write_mesh_text(mesh, path):
    """Native text format: 'tri-mesh 2' header, vertices, triangles,
    boundary edges."""
    lines = ["tri-mesh 2", str(mesh.num_vertices)]
    for i in range(mesh.num_vertices):
        x, y = mesh.vertices[i]
        k = _KIND_NAMES[int(mesh.vertex_kind[i])]
        if mesh.vertex_kind[i] == BOUNDARY:
            lines.append("%.17g %.17g %s %d %.17g"
                         % (x, y, k, mesh.vertex_tag[i],
                            mesh.vertex_param[i]))
        else:
            lines.append("%.17g %.17g %s" % (x, y, k))
    lines.append(str(mesh.num_triangles))
    for t in mesh.triangles:
        lines.append("%d %d %d" % (t[0], t[1], t[2]))
    lines.append(str(len(mesh.be_verts)))
    for (v0, v1), tg, (t0, t1) in zip(mesh.be_verts, mesh.be_tag,
                                      mesh.be_params):
        lines.append("%d %d %d %.17g %.17g" % (v0, v1, tg, t0, t1))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_text(path):
    with open(path) as fh:
        tokens = fh.read().split("\n")
    rows = [ln.split() for ln in tokens if ln.strip()]
    if not rows or rows[0][:2] != ["tri-mesh", "2"]:
        raise MeshError("not a tri-mesh 2 file: %s" % path)
    pos = 1
    nv = int(rows[pos][0])
    pos += 1
    verts = np.zeros((nv, 2))
    kind = np.zeros(nv, dtype=np.int8)
    tag = np.full(nv, -1, dtype=np.int64)
    param = np.full(nv, np.nan)
    for i in range(nv):
        r = rows[pos + i]
        verts[i] = (float(r[0]), float(r[1]))
        kind[i] = _KIND_CODES[r[2]]
        if kind[i] == BOUNDARY:
            tag[i] = int(r[3])
            param[i] = float(r[4])
    pos += nv
    nt = int(rows[pos][0])
    pos += 1
    tris = np.array([[int(x) for x in rows[pos + i][:3]] for i in range(nt)],
                    dtype=np.int64).reshape(nt, 3)
    pos += nt
    nb = int(rows[pos][0])
    pos += 1
    bev = np.zeros((nb, 2), dtype=np.int64)
    bet = np.zeros(nb, dtype=np.int64)
    bep = np.zeros((nb, 2))
    for i in range(nb):
        r = rows[pos + i]
        bev[i] = (int(r[0]), int(r[1]))
        bet[i] = int(r[2])
        bep[i] = (float(r[3]), float(r[4]))
    return TriMesh(verts, tris, kind, tag, param, bev, bet, bep)


def write_vtk(mesh, path, point_data=None):
    """Legacy ASCII VTK export with optional named per-vertex scalars."""
    lines = ["# vtk DataFile Version 3.0", "eigadapt mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             "POINTS %d double" % mesh.num_vertices]
    for x, y in mesh.vertices:
        lines.append("%.17g %.17g 0" % (x, y))
    nt = mesh.num_triangles
    lines.append("CELLS %d %d" % (nt, 4 * nt))
    for t in mesh.triangles:
        lines.append("3 %d %d %d" % (t[0], t[1], t[2]))
    lines.append("CELL_TYPES %d" % nt)
    lines.extend(["5"] * nt)
    if point_data:
        lines.append("POINT_DATA %d" % mesh.num_vertices)
        for name, values in point_data.items():
            lines.append("SCALARS %s double 1" % name)
            lines.append("LOOKUP_TABLE default")
            lines.extend("%.17g" % v for v in np.asarray(values, dtype=float))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
