"""Dirac operators on the isoradial dual and their local inverses.

Rational path functions are kept in factored form: a prefactor times a
product of powers (z - e^{i a})^m over a finite set of canonical directions.
The inverse Dirac operator is the sum of residues of f(z) log z, with the
branch of log fixed by the direction of b - w. A contour-integral evaluation
is provided as an independent check.
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from isodimer.errors import BranchError, GeometryError, OrientationError
from isodimer.geometry import BLACK, TOL, WHITE, DualEdge, IsoradialDual, RhombusData

BRANCH_MARGIN = 1e-6
TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Canonical directions
# ---------------------------------------------------------------------------


class DirectionTable:
    """Unit vectors identified up to 1e-7, each with a fixed representative angle."""

    def __init__(self):
        self.angles: list[float] = []
        self._index: dict[tuple[int, int], int] = {}

    def lookup(self, vec: complex) -> int:
        if abs(abs(vec) - 1.0) > 1e-7:
            raise GeometryError("step vector is not a unit vector")
        kx, ky = round(vec.real * 1e7), round(vec.imag * 1e7)
        for dx in (0, -1, 1):
            for dy in (0, -1, 1):
                hit = self._index.get((kx + dx, ky + dy))
                if hit is not None:
                    return hit
        idx = len(self.angles)
        self.angles.append(math.atan2(vec.imag, vec.real))
        self._index[(kx, ky)] = idx
        return idx


@dataclass(frozen=True)
class Incidence:
    """Rhombic-complex structure: dual vertex <-> primal vertex unit edges."""

    table: DirectionTable
    n_dual: int
    # node ids: dual vertex d -> d, primal vertex p -> n_dual + p
    adjacency: dict[int, list[tuple[int, int, int]]]  # node -> (node, direction class, step exponent)


def incidence(dual: IsoradialDual) -> Incidence:
    hit = dual.__dict__.get("_incidence")
    if hit is not None:
        return hit
    tri = dual.tri
    if tri is None or dual.periodic:
        raise GeometryError("path functions need a planar dual built from a triangulated patch")
    table = DirectionTable()
    n = dual.n_vertices
    adj: dict[int, list[tuple[int, int, int]]] = {}
    for f in tri.faces:
        d = f.id
        for p in f.vertices:
            vec = tri.points[p] - f.circumcenter
            if f.color == BLACK:
                vec = -vec
            c = table.lookup(vec)
            # leaving a white vertex divides, entering it multiplies; reverse for black
            out = -1 if f.color == WHITE else 1
            adj.setdefault(d, []).append((n + p, c, out))
            adj.setdefault(n + p, []).append((d, c, -out))
    inc = Incidence(table, n, adj)
    # cached on the (frozen) dual instance
    dual.__dict__["_incidence"] = inc
    return inc


# ---------------------------------------------------------------------------
# Path functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathFunction:
    prefactor: complex
    exponents: tuple[tuple[int, int], ...]  # (direction class, power), power != 0
    angles: tuple[float, ...]  # class -> representative angle

    @property
    def numerator_roots(self) -> list[float]:
        return sorted(a for c, m in self.exponents if m > 0 for a in [self.angles[c]] * m)

    @property
    def denominator_roots(self) -> list[float]:
        return sorted(a for c, m in self.exponents if m < 0 for a in [self.angles[c]] * (-m))

    @property
    def poles(self) -> list[tuple[float, int]]:
        return sorted((self.angles[c], -m) for c, m in self.exponents if m < 0)

    def __call__(self, z):
        out = self.prefactor * np.ones_like(np.asarray(z, dtype=complex))
        for c, m in self.exponents:
            out = out * (np.asarray(z, dtype=complex) - cmath.exp(1j * self.angles[c])) ** m
        return out if np.ndim(out) else complex(out)

    def same_as(self, other: "PathFunction", tol: float = 1e-12) -> bool:
        return self.exponents == other.exponents and abs(self.prefactor - other.prefactor) <= tol * max(
            1.0, abs(self.prefactor)
        )


def _make(prefactor: complex, exps: dict[int, int], table: DirectionTable) -> PathFunction:
    return PathFunction(complex(prefactor), tuple(sorted((c, m) for c, m in exps.items() if m)), tuple(table.angles))


def _bfs_path(adj, start, goal):
    parent = {start: None}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        if u == goal:
            break
        for v, *rest in adj[u]:
            if v not in parent:
                parent[v] = (u, rest)
                todo.append(v)
    if goal not in parent:
        raise GeometryError("target vertex is not reachable")
    steps = []
    v = goal
    while parent[v] is not None:
        u, rest = parent[v]
        steps.append((u, v, rest))
        v = u
    return steps[::-1]


def path_function(dual: IsoradialDual, w: int, v: int, *, primal: bool = False, path: list[int] | None = None) -> PathFunction:
    """f_{wv}: v is a dual vertex, or a primal vertex when ``primal`` is set.

    ``path`` optionally lists rhombic-complex node ids (dual ids as is, primal
    ids offset by the number of dual vertices) from w to v.
    """
    if dual.colors[w] != WHITE:
        raise GeometryError("path functions start at a white vertex")
    inc = incidence(dual)
    goal = inc.n_dual + v if primal else v
    exps: dict[int, int] = {}
    if path is None:
        steps = [(u, x, (c, s)) for u, x, (c, s) in _bfs_path(inc.adjacency, w, goal)]
    else:
        if path[0] != w or path[-1] != goal:
            raise GeometryError("path endpoints do not match")
        steps = []
        for u, x in zip(path, path[1:]):
            hit = [(c, s) for node, c, s in inc.adjacency[u] if node == x]
            if not hit:
                raise GeometryError(f"nodes {u} and {x} are not adjacent in the rhombic complex")
            steps.append((u, x, hit[0]))
    for _, _, (c, s) in steps:
        exps[c] = exps.get(c, 0) + s
    return _make(1.0, exps, inc.table)


def real_path_function(dual: IsoradialDual, orientation, w: int, x: int, path: list[int] | None = None) -> PathFunction:
    """Real-case path function along a dual path w = w_1, b_1, w_2, ... , x."""
    if dual.colors[w] != WHITE:
        raise GeometryError("path functions start at a white vertex")
    inc = incidence(dual)
    if path is None:
        adj = {u: [(dual.other(e, u), e) for e in dual.incident[u]] for u in range(dual.n_vertices)}
        edge_steps = [(u, v, rest[0]) for u, v, rest in _bfs_path(adj, w, x)]
    else:
        edge_steps = []
        for u, v in zip(path, path[1:]):
            es = [e for e in dual.incident[u] if dual.other(e, u) == v]
            if not es:
                raise GeometryError(f"dual vertices {u} and {v} are not adjacent")
            edge_steps.append((u, v, es[0]))
    exps: dict[int, int] = {}
    pref = 1.0 + 0j
    for u, v, e in edge_steps:
        edge = dual.edges[e]
        ca, cb = _edge_classes(dual, inc, edge)
        sign = -1.0 if orientation[e] else 1.0
        half = 0.5 * (edge.rhombus.alpha + edge.rhombus.beta)
        s = -1 if u == edge.w else 1
        pref *= sign * cmath.exp(-1j * s * half)
        exps[ca] = exps.get(ca, 0) + s
        exps[cb] = exps.get(cb, 0) + s
    return _make(pref, exps, inc.table)


def _edge_classes(dual, inc, edge: DualEdge) -> tuple[int, int]:
    data = edge.rhombus
    return inc.table.lookup(data.y - data.w), inc.table.lookup(data.x - data.w)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def dirac_entry(edge: DualEdge | RhombusData) -> complex:
    """K(w, b) = i (e^{i beta} - e^{i alpha})."""
    d = edge.rhombus if isinstance(edge, DualEdge) else edge
    return 1j * (cmath.exp(1j * d.beta) - cmath.exp(1j * d.alpha))


def real_dirac_entry(edge: DualEdge, orientation) -> float:
    """(-1)^I nu, with I = 1 when the edge is oriented from black to white."""
    return (-1.0 if orientation[edge.id] else 1.0) * edge.nu


def dirac_matrix(dual: IsoradialDual) -> sparse.csr_matrix:
    """Full n x n operator with K(b, w) = conj(K(w, b)); parallel edges add up."""
    rows, cols, vals = [], [], []
    for e in dual.edges:
        k = dirac_entry(e)
        rows += [e.w, e.b]
        cols += [e.b, e.w]
        vals += [k, k.conjugate()]
    n = dual.n_vertices
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


def real_dirac_matrix(dual: IsoradialDual, orientation) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for e in dual.edges:
        k = real_dirac_entry(e, orientation)
        rows += [e.w, e.b]
        cols += [e.b, e.w]
        vals += [k, -k]
    n = dual.n_vertices
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)


def white_black_block(dual: IsoradialDual, entry) -> np.ndarray:
    """Dense |W| x |B| block with rows/columns in dual.whites / dual.blacks order."""
    dtype = complex if isinstance(entry(dual.edges[0]) if dual.edges else 0.0, complex) else float
    out = np.zeros((len(dual.whites), len(dual.blacks)), dtype=dtype)
    wi, bi = dual.white_index, dual.black_index
    for e in dual.edges:
        out[wi[e.w], bi[e.b]] += entry(e)
    return out


# ---------------------------------------------------------------------------
# Clockwise-odd orientation
# ---------------------------------------------------------------------------


def face_parity_target(cycle) -> int:
    """Parity the sum of I over a cw face cycle must have for the cycle to be clockwise odd."""
    return (1 + sum(1 for _, from_white in cycle if from_white)) % 2


def cw_co_oriented(cycle, orientation) -> int:
    """Number of edges co-oriented with a clockwise traversal of the cycle."""
    n = 0
    for e, from_white in cycle:
        # traversed white -> black: co-oriented iff oriented w -> b (I = 0)
        n += (orientation[e] == 0) if from_white else (orientation[e] == 1)
    return n


def is_clockwise_odd(dual: IsoradialDual, orientation) -> bool:
    return all(cw_co_oriented(cyc, orientation) % 2 == 1 for _, cyc in dual.dual_faces)


def solve_gf2(rows: list[tuple[int, int]], n_vars: int) -> list[int]:
    """Solve sum_{j in mask} x_j = rhs over GF(2); free variables are set to 0."""
    pivots: list[tuple[int, int, int]] = []  # (pivot bit, mask, rhs)
    for mask, rhs in rows:
        for bit, pmask, prhs in pivots:
            if mask >> bit & 1:
                mask ^= pmask
                rhs ^= prhs
        if mask == 0:
            if rhs:
                raise OrientationError("parity constraints are inconsistent")
            continue
        bit = mask.bit_length() - 1
        # keep the basis reduced so back-substitution is immediate
        new = []
        for b2, m2, r2 in pivots:
            if m2 >> bit & 1:
                m2 ^= mask
                r2 ^= rhs
            new.append((b2, m2, r2))
        pivots = new + [(bit, mask, rhs)]
    x = [0] * n_vars
    for bit, mask, rhs in pivots:
        # reduced form: mask = pivot bit plus free variables, which are all zero
        x[bit] = rhs
    return x


def clockwise_odd_orientation(dual: IsoradialDual, extra_rows: list[tuple[int, int]] | None = None) -> tuple[int, ...]:
    """Orientation indicators I_e (1 = oriented black -> white) making every face cycle clockwise odd."""
    rows = []
    for _, cyc in dual.dual_faces:
        mask = 0
        for e, _ in cyc:
            mask ^= 1 << e
        rows.append((mask, face_parity_target(cyc)))
    rows.extend(extra_rows or [])
    orient = tuple(solve_gf2(rows, len(dual.edges)))
    if not is_clockwise_odd(dual, orient):
        raise OrientationError("failed to build a clockwise-odd orientation")
    return orient


# ---------------------------------------------------------------------------
# Inverse Dirac operator
# ---------------------------------------------------------------------------


def branch_angle(dual: IsoradialDual, b: int, w: int) -> float:
    """theta_0: direction of b - w, or the edge direction for coincident adjacent vertices."""
    d = dual.positions[b] - dual.positions[w]
    if abs(d) > TOL:
        return math.atan2(d.imag, d.real)
    for e in dual.incident[w]:
        edge = dual.edges[e]
        if edge.b == b:
            return 0.5 * (edge.rhombus.alpha + edge.rhombus.beta)
    raise GeometryError("coincident vertices that are not adjacent")


def branch_representative(angle: float, theta0: float, margin: float = BRANCH_MARGIN) -> float:
    d = (angle - theta0 + math.pi) % TWO_PI
    if d < margin or d > TWO_PI - margin:
        raise BranchError(f"pole at angle {angle:.6f} lies on the branch cut of theta0 = {theta0:.6f}")
    return theta0 - math.pi + d


def _series_power(c: complex, e: int, n: int) -> list[complex]:
    """Coefficients of (c + t)^e up to t^(n-1)."""
    out = [c**e]
    for k in range(n - 1):
        out.append(out[-1] * (e - k) / ((k + 1) * c))
    return out


def _series_mul(a: list[complex], b: list[complex], n: int) -> list[complex]:
    return [sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(n)]


def residue_sum(pf: PathFunction, theta0: float) -> complex:
    """Sum over the poles p of Res_{z=p} f(z) log z, log p = i * (representative of arg p)."""
    total = 0j
    roots = {c: cmath.exp(1j * pf.angles[c]) for c, _ in pf.exponents}
    for c, m in pf.exponents:
        if m >= 0:
            continue
        order = -m
        a = roots[c]
        phi = branch_representative(pf.angles[c], theta0)
        g = [pf.prefactor] + [0j] * (order - 1)
        for c2, m2 in pf.exponents:
            if c2 != c:
                g = _series_mul(g, _series_power(a - roots[c2], m2, order), order)
        log_series = [1j * phi] + [(-1) ** (k + 1) / (k * a**k) for k in range(1, order)]
        total += _series_mul(g, log_series, order)[order - 1]
    return total


def contour_integral(pf: PathFunction, theta0: float, r_in: float = 0.75, r_out: float = 1.25, nodes: int = 4096) -> complex:
    """Integral of f(z) log z over the boundary of an annular sector around the poles (cclw).

    The sector spans [theta0 - pi + delta, theta0 + pi - delta]; delta is 1e-3
    or half the gap between the outermost pole and the cut, whichever is smaller.
    Composite Gauss-Legendre on each of the four pieces.
    """
    lo, hi = theta0 - math.pi, theta0 + math.pi
    reps = [branch_representative(a, theta0) for a, _ in pf.poles]
    gap = min([min(r - lo, hi - r) for r in reps] + [math.pi])
    delta = min(1e-3, 0.5 * gap)
    a0, a1 = lo + delta, hi - delta
    per_panel = 16
    panels_arc = max(1, (nodes * 3 // 8) // per_panel)
    panels_rad = max(1, (nodes // 8) // per_panel)
    x, wts = np.polynomial.legendre.leggauss(per_panel)

    def nodes_on(t0, t1, panels):
        edges = np.linspace(t0, t1, panels + 1)
        mids = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        t = (mids[:, None] + half[:, None] * x[None, :]).ravel()
        w = (half[:, None] * wts[None, :]).ravel()
        return t, w

    total = 0j
    # outer arc a0 -> a1, inner arc a1 -> a0
    for rad, (t0, t1) in ((r_out, (a0, a1)), (r_in, (a1, a0))):
        t, w = nodes_on(t0, t1, panels_arc)
        z = rad * np.exp(1j * t)
        logz = math.log(rad) + 1j * t
        total += np.sum(w * pf(z) * logz * 1j * z)
    # radial pieces: in at a1, out at a0
    for ang, (s0, s1) in ((a1, (r_out, r_in)), (a0, (r_in, r_out))):
        s, w = nodes_on(s0, s1, panels_rad)
        u = cmath.exp(1j * ang)
        z = s * u
        logz = np.log(s) + 1j * ang
        total += np.sum(w * pf(z) * logz * u)
    return complex(total)


def inverse_dirac(dual: IsoradialDual, b: int, w: int, method: str = "residues") -> complex:
    """K^{-1}(b, w) from the local formula."""
    if dual.colors[b] != BLACK or dual.colors[w] != WHITE:
        raise GeometryError("inverse Dirac entries are indexed by (black, white)")
    pf = path_function(dual, w, b)
    theta0 = branch_angle(dual, b, w)
    if method == "residues":
        return residue_sum(pf, theta0) / TWO_PI
    if method == "quadrature":
        return contour_integral(pf, theta0) / (4 * math.pi**2 * 1j)
    raise ValueError(f"unknown method {method!r}")


def inverse_real_dirac(dual: IsoradialDual, orientation, b: int, w: int, method: str = "residues") -> complex:
    """Real-case inverse, from the real path function and the same branch choice."""
    if dual.colors[b] != BLACK or dual.colors[w] != WHITE:
        raise GeometryError("inverse Dirac entries are indexed by (black, white)")
    pf = real_path_function(dual, orientation, w, b)
    theta0 = branch_angle(dual, b, w)
    if method == "residues":
        return residue_sum(pf, theta0) / TWO_PI
    if method == "quadrature":
        return contour_integral(pf, theta0) / (4 * math.pi**2 * 1j)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Asymptotics
# ---------------------------------------------------------------------------


def asymptotic_inverse_dirac(b_pos: complex, w_pos: complex, theta1: float, theta2: float) -> complex:
    d = complex(b_pos) - complex(w_pos)
    if abs(d) < TOL:
        raise GeometryError("asymptotic formula needs b != w")
    dc = d.conjugate()
    lead = 1 / d + cmath.exp(-1j * (theta1 + theta2)) / dc
    third = (cmath.exp(2j * theta1) + cmath.exp(2j * theta2)) / d**3 + (
        cmath.exp(-1j * (3 * theta1 + theta2)) + cmath.exp(-1j * (theta1 + 3 * theta2))
    ) / dc**3
    return (lead + third) / TWO_PI


def asymptotic_angles(dual: IsoradialDual, b: int, w: int) -> tuple[float, float]:
    """theta1 = arg(x1 - w), theta2 = arg(b - x2), x1/x2 the black corners of the faces' hypotenuses."""
    tri = dual.tri
    if tri is None or tri.base is None:
        raise GeometryError("asymptotic angles need a rhombus-with-diagonals patch")
    colors = tri.base.colors

    def black_corner(face):
        a, c, _ = tri.faces[face].vertices
        return a if colors[a] == BLACK else c

    x1 = tri.points[black_corner(w)]
    x2 = tri.points[black_corner(b)]
    t1 = cmath.phase(x1 - dual.positions[w])
    t2 = cmath.phase(dual.positions[b] - x2)
    return t1, t2
