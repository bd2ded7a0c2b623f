"""Formal barycenter spaces of small triangulated manifolds and their
Z2 homology.

The space of formal barycenters of order d collects sums sum_i t_i delta_{x_i}
of at most d unit masses. For d = 2 it is the quotient of M x M x [0,1] by
(x, y, t) ~ (y, x, 1-t) together with the collapses (x, y, 0) ~ y and
(x, x, t) ~ x. This module builds a simplicial model of that quotient: the
end collapses are realized exactly by the join M * M (the double mapping
cylinder of the product projections), one barycentric subdivision makes the
swap involution act freely enough to quotient on vertex labels, and the
diagonal collapse is dropped because it does not change the homotopy type
(see `barycenter_complex`). Homology is computed over GF(2) by dense bitset
Gaussian elimination on the boundary matrices; relative homology uses the
quotient chain complex of a pair.

Everything here is desk scale: the circle at one-digit resolutions and the
2-sphere as a subdivided octahedron.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SimplicialComplex:
    """Simplices per dimension as sorted vertex tuples, closed under faces."""

    n_vertices: int
    simplices: tuple  # tuple over dimensions; entry d is a sorted tuple
                      # of sorted (d+1)-vertex tuples

    def __post_init__(self):
        for d, level in enumerate(self.simplices):
            seen = set()
            for s in level:
                if len(s) != d + 1 or tuple(sorted(s)) != tuple(s):
                    raise ValueError(f"malformed simplex {s} in dimension {d}")
                if s in seen:
                    raise ValueError(f"duplicate simplex {s}")
                seen.add(s)
                if d > 0:
                    prev = set(self.simplices[d - 1])
                    for face in itertools.combinations(s, d):
                        if face not in prev:
                            raise ValueError(
                                f"complex not closed under faces at {s}")

    @property
    def dimension(self) -> int:
        return len(self.simplices) - 1

    def euler_characteristic(self) -> int:
        return sum((-1) ** d * len(level)
                   for d, level in enumerate(self.simplices))


def complex_from_maximal(maximal, n_vertices=None) -> SimplicialComplex:
    """Closure of a family of simplices (any iterables of vertex ids)."""
    levels = {}
    for s in maximal:
        s = tuple(sorted(set(s)))
        for m in range(1, len(s) + 1):
            for face in itertools.combinations(s, m):
                levels.setdefault(m - 1, set()).add(face)
    if not levels:
        raise ValueError("empty complex")
    dims = range(max(levels) + 1)
    simplices = tuple(tuple(sorted(levels.get(d, set()))) for d in dims)
    if n_vertices is None:
        n_vertices = 1 + max(v for s in simplices[0] for v in s)
    return SimplicialComplex(n_vertices=n_vertices, simplices=simplices)


# ---------------------------------------------------------------------------
# GF(2) linear algebra on bitset-packed boundary matrices


def _pack_rows(cols_per_row, n_cols):
    words = (n_cols + 63) // 64
    mat = np.zeros((len(cols_per_row), words), dtype=np.uint64)
    for i, cols in enumerate(cols_per_row):
        for c in cols:
            mat[i, c >> 6] |= np.uint64(1) << np.uint64(c & 63)
    return mat


def gf2_rank(mat: np.ndarray, n_cols: int) -> int:
    """Rank of a bitset-packed GF(2) matrix by column-pivot elimination."""
    mat = mat.copy()
    rank = 0
    m = mat.shape[0]
    if m == 0 or n_cols == 0:
        return 0
    row_free = np.ones(m, dtype=bool)
    for c in range(n_cols):
        w, b = c >> 6, np.uint64(c & 63)
        has = ((mat[:, w] >> b) & np.uint64(1)).astype(bool)
        cand = np.nonzero(has & row_free)[0]
        if len(cand) == 0:
            continue
        piv = cand[0]
        others = np.nonzero(has)[0]
        others = others[others != piv]
        if len(others):
            mat[others] ^= mat[piv]
        row_free[piv] = False
        rank += 1
    return rank


class ChainComplexGF2:
    """Boundary matrices over GF(2), one per positive dimension."""

    def __init__(self, basis):
        # basis: list over dimensions of lists of frozensets (the simplices)
        self.basis = [list(level) for level in basis]
        self.index = [{s: i for i, s in enumerate(level)}
                      for level in self.basis]
        self.boundaries = []  # entry d: packed matrix, rows = d-simplices,
                              # bit c set when the c-th (d-1)-simplex is a facet
        for d in range(1, len(self.basis)):
            rows = []
            lower = self.index[d - 1]
            for s in self.basis[d]:
                cols = []
                for v in s:
                    face = s - {v}
                    j = lower.get(face)
                    if j is not None:
                        cols.append(j)
                rows.append(cols)
            self.boundaries.append(_pack_rows(rows, len(self.basis[d - 1])))

    def betti(self):
        dims = len(self.basis)
        ranks = [gf2_rank(self.boundaries[d - 1], len(self.basis[d - 1]))
                 for d in range(1, dims)]
        out = []
        for d in range(dims):
            n_d = len(self.basis[d])
            r_d = ranks[d - 1] if d >= 1 else 0          # rank of boundary_d
            r_up = ranks[d] if d < dims - 1 else 0       # rank of boundary_{d+1}
            out.append(n_d - r_d - r_up)
        return tuple(out)

    def check_dd_zero(self) -> bool:
        """Exact GF(2) identity boundary o boundary = 0."""
        for d in range(2, len(self.basis)):
            lower = self.index[d - 2]
            mid = self.index[d - 1]
            for s in self.basis[d]:
                counts = {}
                for v in s:
                    face = s - {v}
                    if face in mid:
                        for u in face:
                            sub = face - {u}
                            if sub in lower:
                                counts[sub] = counts.get(sub, 0) + 1
                if any(c % 2 for c in counts.values()):
                    return False
        return True


def _chain_basis(complex_: SimplicialComplex):
    return [[frozenset(s) for s in level] for level in complex_.simplices]


def homology(arg, relative: bool = False):
    """Betti numbers over Z2 of a complex, or of a pair when relative=True."""
    if relative:
        pair = arg
        sub = {frozenset(s) for level in pair.sub.simplices for s in level} \
            if pair.sub is not None else set()
        basis = [[s for s in level if s not in sub]
                 for level in _chain_basis(pair.ambient)]
        while basis and not basis[-1]:
            basis.pop()
        if not basis or not any(basis):
            return (0,)
        cc = ChainComplexGF2(basis)
        return cc.betti()
    if isinstance(arg, BarycenterComplexPair):
        arg = arg.ambient
    return ChainComplexGF2(_chain_basis(arg)).betti()


# ---------------------------------------------------------------------------
# Model triangulations


def triangulate_model(kind: str, resolution: int) -> SimplicialComplex:
    """A triangulated circle (n-gon) or 2-sphere (subdivided octahedron)."""
    if kind == "circle":
        if resolution < 3:
            raise ValueError("a simplicial circle needs at least 3 vertices")
        edges = [(i, (i + 1) % resolution) for i in range(resolution)]
        return complex_from_maximal(edges, n_vertices=resolution)
    if kind == "sphere2":
        if resolution < 1:
            raise ValueError("sphere2 needs at least one subdivision level")
        # octahedron vertices as unit coordinate vectors
        pts = [np.array(p, dtype=float) for p in
               [(1, 0, 0), (-1, 0, 0), (0, 1, 0),
                (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
        faces = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]
        for _ in range(resolution - 1):
            pts, faces = _loop_subdivide(pts, faces)
        return complex_from_maximal(faces, n_vertices=len(pts))
    if kind == "point":
        return complex_from_maximal([(0,)], n_vertices=1)
    raise ValueError(f"unknown model kind {kind!r}")


def _loop_subdivide(pts, faces):
    pts = list(pts)
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            p = pts[a] + pts[b]
            pts.append(p / np.linalg.norm(p))
            midpoint[key] = len(pts) - 1
        return midpoint[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return pts, out


def barycentric_subdivision(complex_: SimplicialComplex) -> SimplicialComplex:
    """One barycentric subdivision; new vertices are the old simplices."""
    all_simplices = [s for level in complex_.simplices for s in level]
    ids = {s: i for i, s in enumerate(all_simplices)}
    maximal = _maximal_simplices(complex_)
    chains = set()
    for s in maximal:
        for perm in itertools.permutations(s):
            chain = tuple(ids[tuple(sorted(perm[:m]))]
                          for m in range(1, len(perm) + 1))
            chains.add(tuple(sorted(chain)))
    return complex_from_maximal(chains, n_vertices=len(all_simplices))


def _maximal_simplices(complex_: SimplicialComplex):
    all_s = [set(s) for level in complex_.simplices for s in level]
    out = []
    for s in all_s:
        if not any(s < t for t in all_s):
            out.append(tuple(sorted(s)))
    return out


# ---------------------------------------------------------------------------
# Formal barycenters of order two


@dataclass(frozen=True)
class BarycenterComplexPair:
    """Order-d barycenter complex with the order-(d-1) subcomplex included."""

    ambient: SimplicialComplex
    sub: SimplicialComplex          # None encodes the empty subcomplex
    inclusion: dict                 # sub simplex -> ambient simplex


def barycenter_complex(model: SimplicialComplex, d: int) -> BarycenterComplexPair:
    """Simplicial model of the order-d formal barycenters of the model.

    For d = 2 the space is M x M x [0,1] with (x,y,0) collapsed to y,
    (x,y,1) to x, (x,x,t) to x, and (x,y,t) identified with (y,x,1-t).
    The two end collapses are exactly the double mapping cylinder of the
    product projections, whose simplicial model is the join M * M; the
    diagonal collapse contracts cylinder fibers over a subcomplex-free
    copy of M x I, a pushout of a homotopy equivalence along a cofibration,
    so dropping it leaves the homotopy type (and the pair with the
    degenerate locus) unchanged. What remains is the swap involution,
    which acts simplicially on the join; one barycentric subdivision makes
    the vertex-level quotient exact, because a chain fixed setwise by the
    swap is fixed pointwise.
    """
    if d == 1:
        return BarycenterComplexPair(
            ambient=model, sub=None, inclusion={})
    if d != 2:
        raise ValueError("only d in {1, 2} is within desk scale")

    max_m = _maximal_simplices(model)
    # join of two copies of the model; vertices (copy, v)
    maximal_join = [tuple(sorted((0, v) for v in s))
                    + tuple(sorted((1, v) for v in t))
                    for s in max_m for t in max_m]
    levels = {}
    for verts in maximal_join:
        for m in range(1, len(verts) + 1):
            for face in itertools.combinations(verts, m):
                levels.setdefault(m - 1, set()).add(face)

    def swap(simplex):
        return tuple(sorted((1 - c, v) for (c, v) in simplex))

    # subdivision vertex = join simplex; its label folds the involution
    labels = {}
    label_ids = {}
    for lev in sorted(levels):
        for s in sorted(levels[lev]):
            lab = min(s, swap(s))
            labels[s] = lab
            label_ids.setdefault(lab, len(label_ids))

    def chains_of(maximal):
        out = set()
        for s in maximal:
            for perm in itertools.permutations(s):
                chain = [tuple(sorted(perm[:m]))
                         for m in range(1, len(perm) + 1)]
                out.add(tuple(sorted(set(label_ids[labels[c]]
                                         for c in chain))))
        return out

    ambient = complex_from_maximal(chains_of(sorted(levels[max(levels)])),
                                   n_vertices=len(label_ids))

    # degenerate locus: the copy of M at a join end (both ends are
    # identified by the involution), subdivided once like the ambient
    sub_maximal = [tuple(sorted((0, v) for v in s)) for s in max_m]
    sub = complex_from_maximal(chains_of(sub_maximal),
                               n_vertices=len(label_ids))
    inclusion = {s: s for level in sub.simplices for s in level}
    return BarycenterComplexPair(ambient=ambient, sub=sub,
                                 inclusion=inclusion)
