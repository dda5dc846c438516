"""Alpha-complex filtrations of planar clouds and their persistence diagrams.

The filtration value of a simplex is the radius (NOT the squared radius, as
some TDA libraries use) at which the union of growing balls first covers it:
vertices enter at 0, a triangle at its circumradius, and an edge at its
half-length when its diametral disk is empty, otherwise at the smallest
circumradius of an adjacent triangle.  Radii keep diagram coordinates
commensurate with point-cloud perturbations.

Persistence pairs come from column reduction of the boundary matrix over
Z/2.  The production path reduces one dimension at a time, top dimension
first, clearing columns known to be cycles (twist/clearing); a deliberately
naive full-matrix reduction is kept as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import Delaunay, QhullError

#: Determinant/dot-product magnitudes below this (relative to the operand
#: scale) are re-evaluated in exact rational arithmetic.
PREDICATE_TOL = 1e-12


@dataclass
class Triangulation:
    """Delaunay triangulation: points, sorted edge pairs, sorted triangle triples."""

    vertices: np.ndarray  # (n, 2) float64
    edges: np.ndarray     # (E, 2) int, each row sorted, rows lexicographic
    triangles: np.ndarray  # (T, 3) int, same conventions


@dataclass
class FilteredComplex:
    """2-dimensional filtered simplicial complex, sorted per dimension.

    Edge and triangle arrays are ordered by (filtration value, vertex tuple);
    interleaving the three dimensions by (value, dimension, vertices) gives
    the global filtration order.  Every face must enter no later than its
    cofaces.
    """

    n_vertices: int
    edges: np.ndarray
    edge_values: np.ndarray
    triangles: np.ndarray
    triangle_values: np.ndarray

    def sorted_simplices(self) -> list[tuple[tuple[int, ...], int, float]]:
        """All simplices as (vertex tuple, dimension, value) in filtration order."""
        out: list[tuple[tuple[int, ...], int, float]] = [
            ((v,), 0, 0.0) for v in range(self.n_vertices)
        ]
        out.extend(
            (tuple(int(v) for v in e), 1, float(val))
            for e, val in zip(self.edges, self.edge_values)
        )
        out.extend(
            (tuple(int(v) for v in t), 2, float(val))
            for t, val in zip(self.triangles, self.triangle_values)
        )
        out.sort(key=lambda s: (s[2], s[1], s[0]))
        return out

    def validate_monotone(self) -> None:
        """Raise if some face enters the filtration after one of its cofaces."""
        if len(self.edges) and self.edge_values.min() < 0:
            raise ValueError("filtration violates monotonicity: negative edge value")
        if len(self.triangles):
            edge_index = {tuple(e): i for i, e in enumerate(map(tuple, self.edges.tolist()))}
            for t, tval in zip(self.triangles.tolist(), self.triangle_values):
                for a, b in ((0, 1), (0, 2), (1, 2)):
                    face = (t[a], t[b])
                    if face not in edge_index:
                        raise ValueError(f"face {face} of triangle {tuple(t)} missing")
                    if self.edge_values[edge_index[face]] > tval:
                        raise ValueError(
                            f"filtration violates monotonicity at triangle {tuple(t)}"
                        )


@dataclass
class PersistenceDiagram:
    """Finite multiset of (birth, death) pairs, 0 <= birth <= death < inf."""

    points: np.ndarray  # (k, 2) float64, sorted by (birth, death)
    degree: int

    @property
    def rank(self) -> int:
        return len(self.points)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("diagram points must be finite")
        if pts.size and (np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > pts[:, 1])):
            raise ValueError("diagram points must satisfy 0 <= birth <= death")
        self.points = pts


def _unique_points(cloud: np.ndarray) -> np.ndarray:
    seen: dict[tuple[float, float], None] = {}
    for x, y in cloud.tolist():
        seen.setdefault((x, y), None)
    return np.array(list(seen.keys()), dtype=np.float64).reshape(-1, 2)


def _collinear_chain(points: np.ndarray) -> Triangulation:
    # All points on one line: the degenerate Delaunay limit is the path of
    # consecutive points along the line.
    spread = points.max(axis=0) - points.min(axis=0)
    axis = 0 if spread[0] >= spread[1] else 1
    order = np.lexsort((points[:, 1 - axis], points[:, axis]))
    edges = np.sort(np.column_stack([order[:-1], order[1:]]), axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return Triangulation(
        vertices=points,
        edges=edges.astype(np.int64),
        triangles=np.empty((0, 3), dtype=np.int64),
    )


def delaunay_2d(cloud: np.ndarray) -> Triangulation:
    """Delaunay triangulation of a planar cloud, duplicates removed first.

    Degenerate inputs degrade gracefully: fewer than two distinct points give
    vertices only, collinear clouds give the chain of consecutive edges.
    Cocircular configurations are resolved by the triangulator's deterministic
    tie-breaking, so identical clouds always produce identical complexes.
    """
    points = _unique_points(np.asarray(cloud, dtype=np.float64).reshape(-1, 2))
    n = len(points)
    empty_e = np.empty((0, 2), dtype=np.int64)
    empty_t = np.empty((0, 3), dtype=np.int64)
    if n == 0 or n == 1:
        return Triangulation(points, empty_e, empty_t)
    if n == 2:
        return Triangulation(points, np.array([[0, 1]], dtype=np.int64), empty_t)
    try:
        dt = Delaunay(points)
    except QhullError:
        return _collinear_chain(points)
    if dt.simplices.size == 0:
        return _collinear_chain(points)
    tris = np.sort(dt.simplices.astype(np.int64), axis=1)
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [0, 2]], tris[:, [1, 2]]])
    edges = np.unique(edges, axis=0)
    return Triangulation(points, edges, tris)


def _circumradii(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Circumradius per triangle; degenerate triangles get half their longest edge."""
    if len(tris) == 0:
        return np.empty(0, dtype=np.float64)
    a = points[tris[:, 0]]
    b = points[tris[:, 1]] - a
    c = points[tris[:, 2]] - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    bb = np.sum(b * b, axis=1)
    cc = np.sum(c * c, axis=1)
    scale = np.maximum(bb, cc)
    degenerate = np.abs(d) <= PREDICATE_TOL * scale
    d_safe = np.where(degenerate, 1.0, d)
    ux = (c[:, 1] * bb - b[:, 1] * cc) / d_safe
    uy = (b[:, 0] * cc - c[:, 0] * bb) / d_safe
    r = np.hypot(ux, uy)
    if degenerate.any():
        # collapsed triangle: covering radius tends to half the longest side
        longest = np.sqrt(np.maximum(bb, np.maximum(cc, np.sum((b - c) ** 2, axis=1))))
        r = np.where(degenerate, 0.5 * longest, r)
    return r


def _inside_diametral_disk(p: np.ndarray, q: np.ndarray, v: np.ndarray) -> bool:
    """Is v strictly inside the disk with diameter pq?

    Sign of (v-p).(v-q); near-zero values are settled exactly with rational
    arithmetic so cocircular clouds behave deterministically.
    """
    dpx, dpy = v[0] - p[0], v[1] - p[1]
    dqx, dqy = v[0] - q[0], v[1] - q[1]
    dot = dpx * dqx + dpy * dqy
    scale = (dpx * dpx + dpy * dpy) + (dqx * dqx + dqy * dqy)
    if abs(dot) > PREDICATE_TOL * scale:
        return dot < 0.0
    if scale == 0.0:
        return False
    exact = (Fraction(float(v[0])) - Fraction(float(p[0]))) * (
        Fraction(float(v[0])) - Fraction(float(q[0]))
    ) + (Fraction(float(v[1])) - Fraction(float(p[1]))) * (
        Fraction(float(v[1])) - Fraction(float(q[1]))
    )
    return exact < 0


def alpha_filtration(tri: Triangulation) -> FilteredComplex:
    """Alpha filtration values (radii) for every simplex of a triangulation."""
    points = tri.vertices
    tris = tri.triangles
    edges = tri.edges
    tri_values = _circumradii(points, tris)

    # incident triangles per edge
    incident: dict[tuple[int, int], list[int]] = {tuple(e): [] for e in edges.tolist()}
    for ti, t in enumerate(tris.tolist()):
        for a, b in ((0, 1), (0, 2), (1, 2)):
            incident[(t[a], t[b])].append(ti)

    edge_values = np.empty(len(edges), dtype=np.float64)
    for ei, (u, v) in enumerate(edges.tolist()):
        p, q = points[u], points[v]
        half_len = 0.5 * float(np.hypot(q[0] - p[0], q[1] - p[1]))
        inc = incident[(u, v)]
        gabriel = True
        for ti in inc:
            opp = [w for w in tris[ti].tolist() if w != u and w != v][0]
            if _inside_diametral_disk(p, q, points[opp]):
                gabriel = False
                break
        if inc:
            min_inc = min(float(tri_values[ti]) for ti in inc)
            # clamp guards against last-ulp inversions of half_len vs circumradius
            edge_values[ei] = min(half_len, min_inc) if gabriel else min_inc
        else:
            edge_values[ei] = half_len

    e_order = np.lexsort((edges[:, 1], edges[:, 0], edge_values))
    t_order = np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0], tri_values)) if len(tris) else np.empty(0, dtype=np.int64)
    return FilteredComplex(
        n_vertices=len(points),
        edges=edges[e_order],
        edge_values=edge_values[e_order],
        triangles=tris[t_order] if len(tris) else tris,
        triangle_values=tri_values[t_order] if len(tris) else tri_values,
    )


def alpha_complex(cloud: np.ndarray) -> FilteredComplex:
    """Convenience: Delaunay triangulation followed by alpha values."""
    return alpha_filtration(delaunay_2d(cloud))


def _reduce_columns(columns: list[set[int] | None]) -> list[tuple[int, int]]:
    """Left-to-right Z/2 column reduction within one dimension block.

    columns[j] is the set of row indices of column j (None = cleared).
    Returns (row, column) persistence index pairs.
    """
    low_to_col: dict[int, set[int]] = {}
    pairs: list[tuple[int, int]] = []
    for j, col in enumerate(columns):
        if col is None:
            continue
        while col:
            low = max(col)
            other = low_to_col.get(low)
            if other is None:
                break
            col ^= other
        if col:
            low_to_col[max(col)] = col
            pairs.append((max(col), j))
    return pairs


def persistence(fc: FilteredComplex, q: int) -> PersistenceDiagram:
    """Degree-q persistence diagram of a filtered complex (q in {0, 1}).

    Zero-persistence pairs are dropped; so are classes that never die (the
    essential component in degree 0 -- alpha complexes of finite planar
    clouds produce no essential classes in degree 1).
    """
    if q not in (0, 1):
        raise ValueError(f"only degrees 0 and 1 are supported, got {q}")
    fc.validate_monotone()

    edge_index = {tuple(e): i for i, e in enumerate(map(tuple, fc.edges.tolist()))}

    # dimension-2 block first (twist order); its pairs are the degree-1 classes
    # and its lows are edges known to be cycles, cleared from the next block.
    tri_cols: list[set[int] | None] = [
        {edge_index[(t[0], t[1])], edge_index[(t[0], t[2])], edge_index[(t[1], t[2])]}
        for t in fc.triangles.tolist()
    ]
    tri_pairs = _reduce_columns(tri_cols)

    if q == 1:
        births = fc.edge_values[[i for i, _ in tri_pairs]]
        deaths = fc.triangle_values[[j for _, j in tri_pairs]]
    else:
        cleared = {i for i, _ in tri_pairs}
        edge_cols: list[set[int] | None] = [
            None if ei in cleared else {int(u), int(v)}
            for ei, (u, v) in enumerate(fc.edges.tolist())
        ]
        edge_pairs = _reduce_columns(edge_cols)
        births = np.zeros(len(edge_pairs))
        deaths = fc.edge_values[[j for _, j in edge_pairs]]

    pts = np.column_stack([births, deaths]) if len(births) else np.empty((0, 2))
    pts = pts[pts[:, 1] > pts[:, 0]]
    if len(pts):
        pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    return PersistenceDiagram(points=pts, degree=q)


def brute_force_persistence(fc: FilteredComplex, q: int) -> PersistenceDiagram:
    """Reference pairing: full boundary matrix, plain left-to-right reduction.

    No per-dimension blocking, no clearing.  Kept as an oracle for
    persistence(); do not use on large complexes.
    """
    if q not in (0, 1):
        raise ValueError(f"only degrees 0 and 1 are supported, got {q}")
    fc.validate_monotone()
    simplices = fc.sorted_simplices()
    index = {verts: i for i, (verts, _, _) in enumerate(simplices)}
    cols: list[set[int]] = []
    for verts, dim, _ in simplices:
        if dim == 0:
            cols.append(set())
        elif dim == 1:
            cols.append({index[(verts[0],)], index[(verts[1],)]})
        else:
            cols.append(
                {
                    index[(verts[0], verts[1])],
                    index[(verts[0], verts[2])],
                    index[(verts[1], verts[2])],
                }
            )
    lows: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    for j in range(len(cols)):
        col = cols[j]
        while col:
            low = max(col)
            if low not in lows:
                break
            col ^= cols[lows[low]]
        if col:
            lows[max(col)] = j
            pairs.append((max(col), j))
    pts = []
    for i, j in pairs:
        if simplices[i][1] == q:
            birth, death = simplices[i][2], simplices[j][2]
            if death > birth:
                pts.append((birth, death))
    arr = np.array(sorted(pts), dtype=np.float64).reshape(-1, 2)
    return PersistenceDiagram(points=arr, degree=q)


def scale_diagram(diagram: PersistenceDiagram, factor: float) -> PersistenceDiagram:
    """Multiply every birth and death by factor > 0."""
    if not factor > 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return PersistenceDiagram(points=diagram.points * factor, degree=diagram.degree)
