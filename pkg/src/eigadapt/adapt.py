"""Metric-conforming local remeshing and the outer adaptation loop.

The remesher iterates local passes of edge splitting, edge collapsing,
edge flipping and damped vertex smoothing until the mesh is quiescent in
the metric, producing quasi-uniform meshes in the metric sense.  Edge
lengths are measured in the working metric rescaled so that the unit
length band corresponds to elements of unit metric volume (the reference
element is equilateral with unit area, so its sides have length
2/3^(1/4); without the rescaling the split/collapse band would
equilibrate at about 2.3 times the requested element count).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fem
from . import metric as metric_mod
from . import recovery
from . import symtensor as st
from .eigsolve import smallest_eigenpairs
from .errors import RemeshError
from .mesh import BOUNDARY, CORNER, INTERIOR, Polyline, REF_SIDE, TriMesh

__all__ = ["AdaptConfig", "AdaptRecord", "AdaptTrace", "remesh",
           "refine_interior_uniform", "transfer_solution", "adapt_loop"]

# working edge length = LENGTH_SCALE * metric edge length; unit working
# length then matches the side of a unit-metric-volume equilateral element
LENGTH_SCALE = 1.0 / REF_SIDE
SPLIT_THRESHOLD = math.sqrt(2.0)
COLLAPSE_THRESHOLD = 1.0 / math.sqrt(2.0)
MAX_PASSES = 30
_FLIP_MARGIN = 1e-10


@dataclass
class AdaptConfig:
    """Knobs of the outer adaptation loop."""
    n_target: int
    k: int = 4
    max_outer_iterations: int = 10
    eigenvalue_stall_tol: float = 1e-4
    alpha: float = 1e-2
    metric_mode: str = "anisotropic"      # anisotropic | isotropic | identity
    geometry_mode: str = "exact-curve"    # exact-curve | frozen-polygon
    eig_tol: float = 1e-8
    seed: int = 0
    n_boundary: int | None = None         # None: sized from the target

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_target < 10:
            raise ValueError("n_target must be >= 10")
        if self.eigenvalue_stall_tol <= 0.0 or self.eig_tol <= 0.0 \
                or self.alpha <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.metric_mode not in ("anisotropic", "isotropic", "identity"):
            raise ValueError("unknown metric mode %r" % self.metric_mode)
        if self.geometry_mode not in ("exact-curve", "frozen-polygon"):
            raise ValueError("unknown geometry mode %r" % self.geometry_mode)


@dataclass
class AdaptRecord:
    iteration: int
    n_elements: int
    eigenvalues: np.ndarray
    c_eq: float
    c_ali: float
    sigma_h: float
    seconds: float


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)

    def eigenvalue_history(self):
        return np.array([r.eigenvalues for r in self.records])


# ---------------------------------------------------------------------------
# remesher scratch state


class _Scratch:
    def __init__(self, mesh, geometry, metric_at):
        self.geometry = geometry
        self._metric_at_raw = metric_at
        self.metric_scale = 1.0
        self.vx = list(mesh.vertices[:, 0])
        self.vy = list(mesh.vertices[:, 1])
        self.kind = list(mesh.vertex_kind)
        self.tag = list(mesh.vertex_tag)
        self.param = list(mesh.vertex_param)
        self.valive = [True] * mesh.num_vertices
        self.tris = [list(t) for t in mesh.triangles]
        self.talive = [True] * mesh.num_triangles
        self.bnd = {}
        for (v0, v1), tg, (t0, t1) in zip(mesh.be_verts, mesh.be_tag,
                                          mesh.be_params):
            self.bnd[_ekey(v0, v1)] = (int(v0), int(v1), int(tg),
                                       float(t0), float(t1))
        self.mvals = list(metric_at(mesh.vertices))
        self.diam = mesh.diameter()

    def metric_at(self, points):
        return self.metric_scale * self._metric_at_raw(points)

    def rescale_metric(self, factor):
        """Uniform metric rescaling (element counts scale linearly at d=2)."""
        self.metric_scale *= factor
        for i, m in enumerate(self.mvals):
            if m is not None:
                self.mvals[i] = factor * m

    # -- array snapshots -------------------------------------------------

    def alive_triangles(self):
        ids = [i for i, a in enumerate(self.talive) if a]
        return np.array(ids, dtype=np.int64), \
            np.array([self.tris[i] for i in ids], dtype=np.int64)

    def positions(self):
        return np.column_stack([np.asarray(self.vx), np.asarray(self.vy)])

    def metric_array(self):
        return np.asarray(self.mvals, dtype=float).reshape(-1, 3)

    def add_vertex(self, x, y, kind, tag=-1, param=np.nan):
        self.vx.append(float(x))
        self.vy.append(float(y))
        self.kind.append(kind)
        self.tag.append(tag)
        self.param.append(param)
        self.valive.append(True)
        self.mvals.append(None)
        return len(self.vx) - 1

    def eval_new_metrics(self):
        missing = [i for i, m in enumerate(self.mvals) if m is None]
        if not missing:
            return
        pts = np.column_stack([[self.vx[i] for i in missing],
                               [self.vy[i] for i in missing]])
        vals = self.metric_at(pts)
        for i, v in zip(missing, vals):
            self.mvals[i] = v

    def invalidate_metrics(self, vertex_ids):
        for i in vertex_ids:
            self.mvals[i] = None

    def tri_area(self, a, b, c):
        return 0.5 * ((self.vx[b] - self.vx[a]) * (self.vy[c] - self.vy[a])
                      - (self.vy[b] - self.vy[a]) * (self.vx[c] - self.vx[a]))

    def finish(self):
        """Compact the scratch arrays into a validated TriMesh."""
        alive_v = [i for i, a in enumerate(self.valive) if a]
        remap = {old: new for new, old in enumerate(alive_v)}
        verts = np.column_stack([[self.vx[i] for i in alive_v],
                                 [self.vy[i] for i in alive_v]])
        kind = np.array([self.kind[i] for i in alive_v], dtype=np.int8)
        tag = np.array([self.tag[i] for i in alive_v], dtype=np.int64)
        par = np.array([self.param[i] for i in alive_v], dtype=float)
        tris = np.array([[remap[v] for v in self.tris[i]]
                         for i, a in enumerate(self.talive) if a],
                        dtype=np.int64)
        bev, bet, bep = [], [], []
        for (u, v, tg, t0, t1) in self.bnd.values():
            bev.append((remap[u], remap[v]))
            bet.append(tg)
            bep.append((t0, t1))
        order = np.lexsort((np.asarray(bep)[:, 0], np.asarray(bet)))
        bev = np.asarray(bev, dtype=np.int64)[order]
        bet = np.asarray(bet, dtype=np.int64)[order]
        bep = np.asarray(bep, dtype=float)[order]
        try:
            return TriMesh(verts, tris, kind, tag, par, bev, bet, bep)
        except Exception as exc:
            raise RemeshError("remeshing produced an invalid mesh: %s" % exc,
                              mesh=(verts, tris)) from exc


def _ekey(u, v):
    return (u, v) if u < v else (v, u)


def _edge_structure(T, nv):
    """Unique edges of the triangle array with incidence.

    Returns (everts (ne,2), tri1, tri2, opp1, opp2) where tri1/tri2 index
    into T (tri2 = -1 on the boundary) and opp1/opp2 are the opposite
    vertex of the edge inside those triangles.
    """
    e = T[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    opp = T[:, [2, 0, 1]].reshape(-1)
    key = np.minimum(e[:, 0], e[:, 1]).astype(np.int64) * nv \
        + np.maximum(e[:, 0], e[:, 1])
    order = np.argsort(key, kind="stable")
    sk = key[order]
    new = np.empty(len(sk), dtype=bool)
    if len(sk):
        new[0] = True
        new[1:] = sk[1:] != sk[:-1]
    starts = np.where(new)[0]
    ne = len(starts)
    counts = np.diff(np.append(starts, len(sk)))
    if np.any(counts > 2):
        raise RemeshError("non-manifold configuration during remeshing")
    first = order[starts]
    everts = np.sort(e[first], axis=1)
    tri1 = first // 3
    opp1 = opp[first]
    tri2 = np.full(ne, -1, dtype=np.int64)
    opp2 = np.full(ne, -1, dtype=np.int64)
    has2 = counts == 2
    second = order[starts[has2] + 1]
    tri2[has2] = second // 3
    opp2[has2] = opp[second]
    return everts, tri1, tri2, opp1, opp2


def _edge_lengths(everts, pos, mv):
    d = pos[everts[:, 1]] - pos[everts[:, 0]]
    mbar = 0.5 * (mv[everts[:, 0]] + mv[everts[:, 1]])
    q = (mbar[:, 0] * d[:, 0] ** 2 + 2.0 * mbar[:, 1] * d[:, 0] * d[:, 1]
         + mbar[:, 2] * d[:, 1] ** 2)
    return LENGTH_SCALE * np.sqrt(np.maximum(q, 0.0))


# ---------------------------------------------------------------------------
# sub-passes


def _split_pass(scr, boundary_ops):
    tids, T = scr.alive_triangles()
    if len(T) == 0:
        return 0
    pos = scr.positions()
    mv = scr.metric_array()
    everts, tri1, tri2, opp1, opp2 = _edge_structure(T, len(scr.vx))
    ln = _edge_lengths(everts, pos, mv)
    cand = np.where(ln > SPLIT_THRESHOLD)[0]
    if cand.size == 0:
        return 0
    cand = cand[np.lexsort((cand, -ln[cand]))]

    nsplit = 0
    for e in cand:
        u, v = int(everts[e, 0]), int(everts[e, 1])
        t1 = int(tids[tri1[e]])
        t2 = int(tids[tri2[e]]) if tri2[e] >= 0 else -1
        if not scr.talive[t1] or (t2 >= 0 and not scr.talive[t2]):
            continue
        key = _ekey(u, v)
        brec = scr.bnd.get(key)
        if brec is not None:
            if not boundary_ops:
                continue
            bu, bv, tg, ta, tb = brec
            tm = 0.5 * (ta + tb)
            p = scr.geometry.curves[tg].point(tm)
            wx, wy = float(p[0]), float(p[1])
            # projection must not invert the incident triangle
            ok = True
            for t in (t1, t2):
                if t < 0:
                    continue
                for s in range(3):
                    if {scr.tris[t][s], scr.tris[t][(s + 1) % 3]} == {u, v}:
                        p0 = scr.tris[t][s]
                        p1 = scr.tris[t][(s + 1) % 3]
                        p2 = scr.tris[t][(s + 2) % 3]
                        a1 = 0.5 * ((wx - scr.vx[p0]) * (scr.vy[p2] - scr.vy[p0])
                                    - (wy - scr.vy[p0]) * (scr.vx[p2] - scr.vx[p0]))
                        a2 = 0.5 * ((scr.vx[p1] - wx) * (scr.vy[p2] - wy)
                                    - (scr.vy[p1] - wy) * (scr.vx[p2] - wx))
                        if a1 <= 0.0 or a2 <= 0.0:
                            ok = False
                        break
            if not ok:
                continue
            w = scr.add_vertex(wx, wy, BOUNDARY, tg, tm)
            del scr.bnd[key]
            scr.bnd[_ekey(bu, w)] = (bu, w, tg, ta, tm)
            scr.bnd[_ekey(w, bv)] = (w, bv, tg, tm, tb)
        else:
            # interior split at the metric midpoint of the edge
            dx = scr.vx[v] - scr.vx[u]
            dy = scr.vy[v] - scr.vy[u]
            mu, mvv = scr.mvals[u], scr.mvals[v]
            lu = math.sqrt(max(mu[0] * dx * dx + 2 * mu[1] * dx * dy
                               + mu[2] * dy * dy, 0.0))
            lv = math.sqrt(max(mvv[0] * dx * dx + 2 * mvv[1] * dx * dy
                               + mvv[2] * dy * dy, 0.0))
            tmid = lv / (lu + lv) if lu + lv > 0.0 else 0.5
            tmid = min(max(tmid, 0.25), 0.75)
            w = scr.add_vertex(scr.vx[u] + tmid * dx, scr.vy[u] + tmid * dy,
                               INTERIOR)

        for t in (t1, t2):
            if t < 0:
                continue
            tri = scr.tris[t]
            for s in range(3):
                if {tri[s], tri[(s + 1) % 3]} == {u, v}:
                    p0, p1, p2 = tri[s], tri[(s + 1) % 3], tri[(s + 2) % 3]
                    scr.talive[t] = False
                    scr.tris.append([p0, w, p2])
                    scr.talive.append(True)
                    scr.tris.append([w, p1, p2])
                    scr.talive.append(True)
                    break
        nsplit += 1
    scr.eval_new_metrics()
    return nsplit


def _vertex_neighbors(T, nv):
    """Per-vertex neighbor lists and incident-triangle lists."""
    flat = T.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=nv)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    tri_ids = order // 3
    return offsets, tri_ids


def _collapse_pass(scr, boundary_ops):
    tids, T = scr.alive_triangles()
    if len(T) == 0:
        return 0
    nv = len(scr.vx)
    pos = scr.positions()
    mv = scr.metric_array()
    everts, tri1, tri2, opp1, opp2 = _edge_structure(T, nv)
    ln = _edge_lengths(everts, pos, mv)
    cand = np.where(ln < COLLAPSE_THRESHOLD)[0]
    if cand.size == 0:
        return 0
    cand = cand[np.lexsort((cand, ln[cand]))]
    offsets, tri_ids = _vertex_neighbors(T, nv)
    vdirty = np.zeros(nv, dtype=bool)

    def incident(vid):
        return [int(tids[t]) for t in tri_ids[offsets[vid]:offsets[vid + 1]]]

    def neighbors(vid):
        out = set()
        for t in tri_ids[offsets[vid]:offsets[vid + 1]]:
            out.update(T[t])
        out.discard(vid)
        return out

    ncollapse = 0
    for e in cand:
        u, v = int(everts[e, 0]), int(everts[e, 1])
        if vdirty[u] or vdirty[v]:
            continue
        key = _ekey(u, v)
        on_boundary_edge = key in scr.bnd
        ku, kv = scr.kind[u], scr.kind[v]

        if ku != INTERIOR and kv != INTERIOR:
            if not boundary_ops or not on_boundary_edge:
                continue
            # keep a corner when present; otherwise keep the lower index
            if ku == CORNER and kv == CORNER:
                continue
            if ku == CORNER:
                keep, rem = u, v
            elif kv == CORNER:
                keep, rem = v, u
            else:
                keep, rem = (u, v) if u < v else (v, u)
            curve = scr.geometry.curves[scr.tag[rem]]
            if isinstance(curve, Polyline) and \
                    curve.is_node_param(scr.param[rem]):
                continue  # frozen polygon: its nodes define the domain
        elif ku != INTERIOR:
            keep, rem = u, v
        elif kv != INTERIOR:
            keep, rem = v, u
        else:
            keep, rem = (u, v) if u < v else (v, u)

        shared = neighbors(u) & neighbors(v)
        opp = {int(opp1[e])}
        if opp2[e] >= 0:
            opp.add(int(opp2[e]))
        if shared != opp:
            continue  # link condition

        dying = set()
        for t in incident(rem):
            if keep in scr.tris[t]:
                dying.add(t)
        ok = True
        for t in incident(rem):
            if t in dying:
                continue
            a, b, c = (keep if w == rem else w for w in scr.tris[t])
            if scr.tri_area(a, b, c) <= 1e-16 * scr.diam ** 2:
                ok = False
                break
        if not ok:
            continue

        for t in dying:
            scr.talive[t] = False
        for t in incident(rem):
            if t in dying:
                continue
            scr.tris[t] = [keep if w == rem else w for w in scr.tris[t]]
        scr.valive[rem] = False

        if on_boundary_edge:
            d0, d1, dtg, dp0, dp1 = scr.bnd.pop(key)
            keep_param = dp0 if d0 == keep else dp1
            other = None
            for k2, rec in scr.bnd.items():
                if rem in k2:
                    other = (k2, rec)
                    break
            if other is None:
                raise RemeshError("boundary chain broken during collapse")
            k2, (a0, a1, tg, t0, t1) = other
            del scr.bnd[k2]
            # merged edge spans from the far endpoint to keep's parameter
            if a0 == rem:
                scr.bnd[_ekey(keep, a1)] = (keep, a1, tg, keep_param, t1)
            else:
                scr.bnd[_ekey(a0, keep)] = (a0, keep, tg, t0, keep_param)

        vdirty[u] = vdirty[v] = True
        for w in neighbors(u) | neighbors(v):
            vdirty[w] = True
        ncollapse += 1
    return ncollapse


def _align_ratio_batch(pos, mv, A, B, C):
    """Alignment ratios for triangles given by vertex index arrays."""
    m = (mv[A] + mv[B] + mv[C]) / 3.0
    e1 = pos[B] - pos[A]
    e2 = pos[C] - pos[A]
    q11 = (m[:, 0] * e1[:, 0] ** 2 + 2.0 * m[:, 1] * e1[:, 0] * e1[:, 1]
           + m[:, 2] * e1[:, 1] ** 2)
    q22 = (m[:, 0] * e2[:, 0] ** 2 + 2.0 * m[:, 1] * e2[:, 0] * e2[:, 1]
           + m[:, 2] * e2[:, 1] ** 2)
    q12 = (m[:, 0] * e1[:, 0] * e2[:, 0]
           + m[:, 1] * (e1[:, 0] * e2[:, 1] + e1[:, 1] * e2[:, 0])
           + m[:, 2] * e1[:, 1] * e2[:, 1])
    aa = REF_SIDE * REF_SIDE
    det_b = (q11 * q22 - q12 * q12) / (aa * aa * 0.75)
    tr_b = (q11 + q22 - q12) * (4.0 / 3.0) / aa
    out = np.full(len(det_b), np.inf)
    good = det_b > 0.0
    out[good] = 0.5 * tr_b[good] / np.sqrt(det_b[good])
    return out


def _flip_pass(scr):
    tids, T = scr.alive_triangles()
    if len(T) == 0:
        return 0
    nv = len(scr.vx)
    pos = scr.positions()
    mv = scr.metric_array()
    everts, tri1, tri2, opp1, opp2 = _edge_structure(T, nv)
    cand = np.where(tri2 >= 0)[0]
    if cand.size == 0:
        return 0
    u = everts[cand, 0]
    v = everts[cand, 1]
    p = opp1[cand]
    q = opp2[cand]

    def _areas(P, Q):
        a1 = 0.5 * ((pos[u, 0] - pos[P, 0]) * (pos[Q, 1] - pos[P, 1])
                    - (pos[u, 1] - pos[P, 1]) * (pos[Q, 0] - pos[P, 0]))
        a2 = 0.5 * ((pos[v, 0] - pos[Q, 0]) * (pos[P, 1] - pos[Q, 1])
                    - (pos[v, 1] - pos[Q, 1]) * (pos[P, 0] - pos[Q, 0]))
        return a1, a2

    eps = 1e-16 * scr.diam ** 2
    a1, a2 = _areas(p, q)
    ok1 = (a1 > eps) & (a2 > eps)
    b1, b2 = _areas(q, p)
    ok2 = (b1 > eps) & (b2 > eps)
    swap = ~ok1 & ok2
    p2 = np.where(swap, q, p)
    q2 = np.where(swap, p, q)
    valid = ok1 | ok2

    old = np.maximum(
        _align_ratio_batch(pos, mv, T[tri1[cand], 0], T[tri1[cand], 1],
                           T[tri1[cand], 2]),
        _align_ratio_batch(pos, mv, T[tri2[cand], 0], T[tri2[cand], 1],
                           T[tri2[cand], 2]))
    new = np.maximum(_align_ratio_batch(pos, mv, p2, u, q2),
                     _align_ratio_batch(pos, mv, q2, v, p2))
    improves = valid & (new < old * (1.0 - _FLIP_MARGIN))
    todo = np.where(improves)[0]
    if todo.size == 0:
        return 0

    ikeys = np.minimum(everts[:, 0], everts[:, 1]) * np.int64(nv) \
        + np.maximum(everts[:, 0], everts[:, 1])
    edge_keys = set(ikeys.tolist())
    nflip = 0
    for j in todo:
        e = cand[j]
        t1, t2 = int(tids[tri1[e]]), int(tids[tri2[e]])
        if not (scr.talive[t1] and scr.talive[t2]):
            continue
        uu, vv = int(u[j]), int(v[j])
        pp, qq = int(p2[j]), int(q2[j])
        new_key = min(pp, qq) * nv + max(pp, qq)
        if new_key in edge_keys:
            continue
        scr.talive[t1] = False
        scr.talive[t2] = False
        scr.tris.append([pp, uu, qq])
        scr.talive.append(True)
        scr.tris.append([qq, vv, pp])
        scr.talive.append(True)
        edge_keys.discard(min(uu, vv) * nv + max(uu, vv))
        edge_keys.add(new_key)
        nflip += 1
    return nflip


def _smooth_pass(scr):
    tids, T = scr.alive_triangles()
    if len(T) == 0:
        return
    nv = len(scr.vx)
    pos = scr.positions()
    mv = scr.metric_array()
    everts, tri1, tri2, _, _ = _edge_structure(T, nv)

    weight = np.sqrt(np.maximum(st.det(mv), 1e-300))
    wsum = np.zeros(nv)
    xsum = np.zeros((nv, 2))
    for a, b in ((everts[:, 0], everts[:, 1]), (everts[:, 1], everts[:, 0])):
        wsum += np.bincount(a, weights=weight[b], minlength=nv)
        xsum[:, 0] += np.bincount(a, weights=weight[b] * pos[b, 0],
                                  minlength=nv)
        xsum[:, 1] += np.bincount(a, weights=weight[b] * pos[b, 1],
                                  minlength=nv)

    movable = np.array([k == INTERIOR and alive
                        for k, alive in zip(scr.kind, scr.valive)])
    movable &= wsum > 0.0
    target = np.where(movable[:, None], xsum / np.maximum(wsum, 1e-300)[:, None],
                      pos)
    newpos = pos + 0.5 * (target - pos)

    # bulk apply, then revert the corner vertices of any inverted triangle
    for _ in range(12):
        p = newpos[T]
        areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                       - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        bad = areas <= 1e-16 * scr.diam ** 2
        if not np.any(bad):
            break
        newpos[T[bad].ravel()] = pos[T[bad].ravel()]
    else:
        newpos = pos

    moved = np.where(np.any(newpos != pos, axis=1))[0]
    for i in moved:
        scr.vx[i] = float(newpos[i, 0])
        scr.vy[i] = float(newpos[i, 1])
    scr.invalidate_metrics(moved)
    scr.eval_new_metrics()


# ---------------------------------------------------------------------------
# public remeshing entry points


def _run_passes(scr, boundary_ops, n_goal=None):
    corrections = 0
    for _ in range(MAX_PASSES):
        ns = _split_pass(scr, boundary_ops)
        nc = _collapse_pass(scr, boundary_ops)
        nf = _flip_pass(scr)
        _smooth_pass(scr)
        # quiescent: no ops, or only the churn smoothing re-induces
        if ns + nc + nf <= max(0, int(0.01 * sum(scr.talive)) - 1):
            if n_goal is not None and corrections < 2:
                # strongly varying metrics bias the endpoint-averaged edge
                # lengths; renormalize against the achieved count and keep
                # equilibrating so the element-count goal is met
                n_now = sum(scr.talive)
                if abs(n_now - n_goal) > 0.10 * n_goal:
                    scr.rescale_metric(n_goal / n_now)
                    corrections += 1
                    continue
            break
    return scr.finish()


def remesh(mesh, field, geometry):
    """Produce a quasi-uniform mesh in the given (normalized) metric.

    The metric is piecewise constant on the input mesh, which acts as the
    background for metric lookups while the surgery rewrites the topology.
    """
    background = mesh

    def metric_at(points):
        tri, _ = background.locate_many(points)
        tri = np.where(tri < 0, -tri - 1, tri)
        return field.tensors[tri]

    scr = _Scratch(mesh, geometry, metric_at)
    return _run_passes(scr, boundary_ops=True)


def refine_interior_uniform(mesh, geometry, h):
    """Refine the interior to element size ~h leaving the boundary alone."""
    density = 4.0 / (math.sqrt(3.0) * h * h)

    def metric_at(points):
        points = np.atleast_2d(points)
        out = np.zeros((len(points), 3))
        out[:, 0] = density
        out[:, 2] = density
        return out

    scr = _Scratch(mesh, geometry, metric_at)
    return _run_passes(scr, boundary_ops=False)


def transfer_solution(old_mesh, values, new_mesh):
    """Linear interpolation of nodal values onto a new mesh.

    Points that drift outside the old mesh take the nearest element's
    extrapolation clamped to that element's value range.
    """
    values = np.asarray(values, dtype=float)
    tri, bary = old_mesh.locate_many(new_mesh.vertices)
    miss = tri < 0
    tri = np.where(miss, -tri - 1, tri)
    corner_vals = values[old_mesh.triangles[tri]]
    out = np.einsum("ni,ni->n", corner_vals, bary)
    if np.any(miss):
        lo = corner_vals[miss].min(axis=1)
        hi = corner_vals[miss].max(axis=1)
        out[miss] = np.clip(out[miss], lo, hi)
    return out


# ---------------------------------------------------------------------------
# outer loop


def _initial_mesh_for(problem, config):
    from .mesh import freeze_geometry, initial_mesh

    geometry = problem.geometry
    area = abs(_geometry_area(geometry))
    n0 = min(1024, max(100, config.n_target // 20))
    h0 = math.sqrt(4.0 * area / (math.sqrt(3.0) * n0))
    if config.n_boundary is not None:
        nb = config.n_boundary
    else:
        nb = max(len(geometry.corners) + 3,
                 int(round(geometry.perimeter / h0)))
    mesh0 = initial_mesh(geometry, nb, interior_size=h0)
    while int(np.sum(mesh0.vertex_kind == INTERIOR)) < max(config.k, 8):
        h0 *= 0.5
        mesh0 = initial_mesh(geometry, nb, interior_size=h0)
    if config.geometry_mode == "frozen-polygon":
        geometry, mesh0 = freeze_geometry(mesh0, geometry)
    return mesh0, geometry


def _geometry_area(geometry):
    pts = []
    for c in geometry.curves:
        ts = np.linspace(c.t_begin, c.t_end, 64, endpoint=False)
        pts.append(np.atleast_2d(c.point(ts)))
    p = np.concatenate(pts)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def expand_interior(mesh, interior_values):
    """Zero-extend interior nodal vectors to all vertices (Dirichlet)."""
    interior_values = np.asarray(interior_values, dtype=float)
    single = interior_values.ndim == 1
    cols = np.atleast_2d(interior_values.T).T
    out = np.zeros((mesh.num_vertices, cols.shape[1]))
    out[fem.interior_indices(mesh)] = cols
    return out[:, 0] if single else out


def metric_for(mesh, solution, problem, config):
    """The normalized adaptation metric for a solved mesh, per the
    configured mode."""
    if config.metric_mode == "identity":
        fld = metric_mod.uniform_metric(mesh)
    else:
        funcs = expand_interior(mesh, solution.eigenvectors).T
        fields = recovery.recover_hessians(mesh, funcs)
        major = recovery.build_majorant(fields, config.alpha)
        if config.metric_mode == "anisotropic":
            fld = metric_mod.anisotropic_metric(mesh, major,
                                                problem.diffusion)
        else:
            fld = metric_mod.isotropic_metric(mesh, major)
    return metric_mod.normalize_to_target(mesh, fld, config.n_target)


def adapt_loop(problem, config, initial=None, geometry=None):
    """Run the solve / recover / metric / remesh cycle to convergence.

    Returns (final mesh, final eigen solution, trace).  The final solution
    is solved on the returned mesh; iteration stops on the eigenvalue stall
    tolerance or the outer iteration cap.
    """
    if (initial is None) != (geometry is None):
        raise ValueError("pass both an initial mesh and its geometry, "
                         "or neither")
    if initial is None:
        mesh, geometry = _initial_mesh_for(problem, config)
    else:
        mesh = initial

    trace = AdaptTrace()
    prev_eigs = None
    warm = None
    solution = None
    for it in range(1, config.max_outer_iterations + 1):
        tic = time.perf_counter()
        A = fem.assemble_stiffness(mesh, problem.diffusion)
        M = fem.assemble_mass(mesh, problem.density)
        v0 = None
        if warm is not None:
            v0 = warm[fem.interior_indices(mesh)]
            if not np.any(v0):
                v0 = None
        solution = smallest_eigenpairs(A, M, config.k, tol=config.eig_tol,
                                       seed=config.seed, v0=v0)

        fld = metric_for(mesh, solution, problem, config)
        report = metric_mod.quality(mesh, fld)
        record = AdaptRecord(
            iteration=it, n_elements=mesh.num_triangles,
            eigenvalues=solution.eigenvalues.copy(),
            c_eq=report.c_eq, c_ali=report.c_ali, sigma_h=fld.sigma_h,
            seconds=time.perf_counter() - tic)
        trace.records.append(record)

        if prev_eigs is not None:
            change = np.max(np.abs(solution.eigenvalues - prev_eigs)
                            / solution.eigenvalues)
            if change < config.eigenvalue_stall_tol:
                break
        prev_eigs = solution.eigenvalues.copy()
        if it == config.max_outer_iterations:
            break

        try:
            new_mesh = remesh(mesh, fld, geometry)
        except RemeshError as exc:
            raise RemeshError("outer iteration %d: %s" % (it, exc),
                              mesh=exc.mesh) from exc
        u1 = expand_interior(mesh, solution.eigenvectors[:, 0])
        warm = transfer_solution(mesh, u1, new_mesh)
        mesh = new_mesh
        record.seconds = time.perf_counter() - tic
    return mesh, solution, trace
