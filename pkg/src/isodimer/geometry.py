"""Rhombus patches, their diagonal triangulations, isoradial duals and torus quotients.

Positions are complex numbers. The scale follows the quadri-tiling convention:
rhombus sides have length 2, so every triangular face has circumradius 1 and
every rhombus R(e) attached to a dual edge has unit sides.

Adjacency is always stored combinatorially. Coordinates are only consulted
when a patch is first assembled from polygons (vertex de-duplication) or when
a torus is glued from a fundamental domain.
"""

from __future__ import annotations

import cmath
import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from isodimer.errors import GeometryError

TOL = 1e-9
SIDE = 2.0
WHITE = "white"
BLACK = "black"


def _key(z: complex, scale: float = 1e6) -> tuple[int, int]:
    return (round(z.real * scale), round(z.imag * scale))


def cross(a: complex, b: complex) -> float:
    return a.real * b.imag - a.imag * b.real


def polygon_area(points: Sequence[complex]) -> float:
    n = len(points)
    return 0.5 * sum(cross(points[i], points[(i + 1) % n]) for i in range(n))


# ---------------------------------------------------------------------------
# Rhombus patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RhombusPatch:
    """A finite rhombus tiling: corner vertices and rhombi (4 ids, cclw)."""

    positions: dict[int, complex]
    colors: dict[int, str]
    rhombi: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        self.validate()

    # -- derived combinatorics -------------------------------------------

    @cached_property
    def sides(self) -> dict[frozenset, list[tuple[int, int]]]:
        """Undirected side -> list of (rhombus index, side slot k) with side v_k v_{k+1}."""
        out: dict[frozenset, list[tuple[int, int]]] = defaultdict(list)
        for r, quad in enumerate(self.rhombi):
            for k in range(4):
                out[frozenset((quad[k], quad[(k + 1) % 4]))].append((r, k))
        return dict(out)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(s)) for s in self.sides)

    @cached_property
    def boundary_edges(self) -> list[tuple[int, int]]:
        """Directed boundary sides with the patch on their left, in no particular order."""
        out = []
        for s, owners in self.sides.items():
            if len(owners) == 1:
                r, k = owners[0]
                quad = self.rhombi[r]
                out.append((quad[k], quad[(k + 1) % 4]))
        return sorted(out)

    def boundary_cycles(self) -> list[list[tuple[int, int]]]:
        nxt: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for e in self.boundary_edges:
            nxt[e[0]].append(e)
        if any(len(v) > 1 for v in nxt.values()):
            raise GeometryError("patch boundary is pinched at a vertex")
        seen: set[tuple[int, int]] = set()
        cycles = []
        for start in self.boundary_edges:
            if start in seen:
                continue
            cyc = []
            e = start
            while e not in seen:
                seen.add(e)
                cyc.append(e)
                e = nxt[e[1]][0]
            cycles.append(cyc)
        return cycles

    def boundary(self) -> list[tuple[int, int]]:
        """The single cclw boundary cycle of a simply connected patch.

        Starts at the boundary edge whose tail is the smallest vertex id.
        """
        cycles = self.boundary_cycles()
        if len(cycles) != 1:
            raise GeometryError(f"patch boundary has {len(cycles)} components")
        cyc = cycles[0]
        i = min(range(len(cyc)), key=lambda j: cyc[j])
        cyc = cyc[i:] + cyc[:i]
        if polygon_area([self.positions[u] for u, _ in cyc]) <= 0:
            raise GeometryError("boundary is not counterclockwise (patch has a hole?)")
        return cyc

    @cached_property
    def rhombus_neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in self.rhombi]
        for owners in self.sides.values():
            if len(owners) == 2:
                (a, _), (b, _) = owners
                nb[a].append(b)
                nb[b].append(a)
        return nb

    def is_connected(self) -> bool:
        if not self.rhombi:
            return True
        seen = {0}
        todo = [0]
        while todo:
            r = todo.pop()
            for s in self.rhombus_neighbors[r]:
                if s not in seen:
                    seen.add(s)
                    todo.append(s)
        return len(seen) == len(self.rhombi)

    def is_simply_connected(self) -> bool:
        if not self.rhombi or not self.is_connected():
            return False
        v = len({u for q in self.rhombi for u in q})
        if v - len(self.sides) + len(self.rhombi) != 1:
            return False
        try:
            return len(self.boundary_cycles()) == 1
        except GeometryError:
            return False

    # -- geometry --------------------------------------------------------

    def rhombus_points(self, r: int) -> list[complex]:
        return [self.positions[v] for v in self.rhombi[r]]

    def area(self) -> float:
        return sum(polygon_area(self.rhombus_points(r)) for r in range(len(self.rhombi)))

    def validate(self) -> None:
        if set(self.colors) != set(self.positions):
            raise GeometryError("every vertex needs a color")
        for v, c in self.colors.items():
            if c not in (WHITE, BLACK):
                raise GeometryError(f"vertex {v}: bad color {c!r}")
        used = set()
        for r, quad in enumerate(self.rhombi):
            if len(quad) != 4 or len(set(quad)) != 4:
                raise GeometryError(f"rhombus {r}: needs 4 distinct vertices")
            for v in quad:
                if v not in self.positions:
                    raise GeometryError(f"rhombus {r}: unknown vertex {v}")
            used.update(quad)
            pts = self.rhombus_points(r)
            for k in range(4):
                if abs(abs(pts[(k + 1) % 4] - pts[k]) - SIDE) > TOL:
                    raise GeometryError(f"rhombus {r}: side {k} does not have length 2")
            if abs(pts[0] + pts[2] - pts[1] - pts[3]) > TOL:
                raise GeometryError(f"rhombus {r}: not a parallelogram")
            if polygon_area(pts) <= TOL:
                raise GeometryError(f"rhombus {r}: vertices not in cclw order or angle outside (0, pi)")
            for k in range(4):
                if self.colors[quad[k]] == self.colors[quad[(k + 1) % 4]]:
                    raise GeometryError(f"rhombus {r}: vertex coloring is not bipartite")
        if used != set(self.positions):
            raise GeometryError("patch has vertices not used by any rhombus")
        for s, owners in self.sides.items():
            if len(owners) > 2:
                raise GeometryError(f"side {sorted(s)} is shared by more than two rhombi")
            if len(owners) == 2:
                (ra, ka), (rb, kb) = owners
                qa, qb = self.rhombi[ra], self.rhombi[rb]
                if (qa[ka], qa[(ka + 1) % 4]) == (qb[kb], qb[(kb + 1) % 4]):
                    raise GeometryError(f"rhombi {ra} and {rb} overlap along a side")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": [
                {"id": v, "x": self.positions[v].real, "y": self.positions[v].imag, "color": self.colors[v]}
                for v in sorted(self.positions)
            ],
            "rhombi": [list(q) for q in self.rhombi],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RhombusPatch":
        try:
            verts = data["vertices"]
            positions = {}
            colors = {}
            for item in verts:
                vid = item["id"]
                if not isinstance(vid, int) or isinstance(vid, bool) or vid < 0:
                    raise GeometryError(f"vertex id {vid!r} is not a non-negative integer")
                positions[vid] = complex(float(item["x"]), float(item["y"]))
                colors[vid] = item["color"]
            rhombi = tuple(tuple(int(v) for v in q) for q in data["rhombi"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"malformed patch data: {exc}") from exc
        return cls(positions, colors, rhombi)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RhombusPatch":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise GeometryError(f"cannot read patch file {path}: {exc}") from exc
        return cls.from_dict(data)

    def translated(self, t: complex) -> "RhombusPatch":
        return RhombusPatch({v: p + t for v, p in self.positions.items()}, dict(self.colors), self.rhombi)


def patch_from_polygons(quads: Iterable[Sequence[complex]], white_vertex: complex | None = None) -> RhombusPatch:
    """Assemble a patch from rhombus corner lists, de-duplicating corners by position.

    Vertex ids follow the lexicographic (x, y) order of positions and the
    coloring makes vertex 0 (or the vertex at ``white_vertex``) white.
    """
    quads = [list(q) for q in quads]
    keys: dict[tuple[int, int], complex] = {}
    for q in quads:
        if polygon_area(q) < 0:
            q.reverse()
        for z in q:
            keys.setdefault(_key(z), z)
    order = sorted(keys, key=lambda k: (k[0], k[1]))
    ids = {k: i for i, k in enumerate(order)}
    positions = {i: keys[k] for k, i in ids.items()}
    rhombi = []
    for q in quads:
        pts = list(q)
        # canonical rotation: start at the smallest vertex id
        vid = [ids[_key(z)] for z in pts]
        s = vid.index(min(vid))
        rhombi.append(tuple(vid[s:] + vid[:s]))
    adj: dict[int, set[int]] = defaultdict(set)
    for quad in rhombi:
        for k in range(4):
            adj[quad[k]].add(quad[(k + 1) % 4])
            adj[quad[(k + 1) % 4]].add(quad[k])
    colors: dict[int, str] = {}
    roots = sorted(positions)
    if white_vertex is not None:
        roots.remove(ids[_key(white_vertex)])
        roots.insert(0, ids[_key(white_vertex)])
    for root in roots:
        if root in colors:
            continue
        colors[root] = WHITE
        todo = deque([root])
        while todo:
            u = todo.popleft()
            for v in adj[u]:
                want = BLACK if colors[u] == WHITE else WHITE
                if v not in colors:
                    colors[v] = want
                    todo.append(v)
                elif colors[v] != want:
                    raise GeometryError("rhombus graph is not bipartite")
    return RhombusPatch(positions, colors, tuple(rhombi))


def rhombus_corners(origin: complex, a: complex, b: complex) -> list[complex]:
    """Corners of the rhombus origin, origin+a, origin+a+b, origin+b."""
    return [origin, origin + a, origin + a + b, origin + b]


def single_rhombus(theta: float) -> RhombusPatch:
    """One rhombus with half-angle ``theta`` (angle 2*theta at its first corner)."""
    if not 0 < 2 * theta < math.pi:
        raise GeometryError(f"rhombus angle {2 * theta} outside (0, pi)")
    return patch_from_polygons([rhombus_corners(0j, SIDE, SIDE * cmath.exp(2j * theta))])


def square_grid(m: int, n: int) -> RhombusPatch:
    """m columns by n rows of side-2 squares."""
    if m <= 0 or n <= 0:
        raise GeometryError("grid dimensions must be positive")
    return square_cells([(i, j) for i in range(m) for j in range(n)])


def square_cells(cells: Iterable[tuple[int, int]]) -> RhombusPatch:
    """Squares of side 2 at integer cell coordinates (i, j) -> [2i, 2i+2] x [2j, 2j+2]."""
    return patch_from_polygons(
        [rhombus_corners(complex(2 * i, 2 * j), SIDE, SIDE * 1j) for i, j in cells]
    )


# cube axes projected to three side-2 vectors 120 degrees apart
LOZ_U = complex(SIDE, 0.0)
LOZ_V = SIDE * cmath.exp(2j * math.pi / 3)
LOZ_T = SIDE * cmath.exp(4j * math.pi / 3)


def _cube_point(x: int, y: int, z: int) -> complex:
    # exact integer combination of the two lattice vectors
    return (x - z) * LOZ_U + (y - z) * LOZ_V


def lozenge_hexagon(a: int, b: int, c: int, heights: Sequence[Sequence[int]] | None = None) -> RhombusPatch:
    """Lozenge tiling of the (a, b, c) hexagon given by a plane partition in an a x b x c box."""
    if a <= 0 or b <= 0 or c <= 0:
        raise GeometryError("hexagon side counts must be positive")
    if heights is None:
        heights = [[0] * b for _ in range(a)]
    h = [list(map(int, row)) for row in heights]
    if len(h) != a or any(len(row) != b for row in h):
        raise GeometryError("heights must be an a x b array")
    for i in range(a):
        for j in range(b):
            if not 0 <= h[i][j] <= c:
                raise GeometryError("heights must lie in [0, c]")
            if (i and h[i][j] > h[i - 1][j]) or (j and h[i][j] > h[i][j - 1]):
                raise GeometryError("heights must be a plane partition (non-increasing)")

    def H(i, j):
        if i < 0 or j < 0:
            return c
        if i >= a or j >= b:
            return 0
        return h[i][j]

    quads = []
    P = _cube_point
    for i in range(a):
        for j in range(b):
            z = H(i, j)
            quads.append([P(i, j, z), P(i + 1, j, z), P(i + 1, j + 1, z), P(i, j + 1, z)])
    for i in range(a + 1):
        for j in range(b):
            for z in range(H(i, j), H(i - 1, j)):
                quads.append([P(i, j, z), P(i, j + 1, z), P(i, j + 1, z + 1), P(i, j, z + 1)])
    for i in range(a):
        for j in range(b + 1):
            for z in range(H(i, j), H(i, j - 1)):
                quads.append([P(i, j, z), P(i, j, z + 1), P(i + 1, j, z + 1), P(i + 1, j, z)])
    return patch_from_polygons(quads)


def merge_patches(patches: Iterable[RhombusPatch]) -> RhombusPatch:
    """Union of patches placed in a common plane (corners identified by position)."""
    quads = []
    seen = set()
    for p in patches:
        for r in range(len(p.rhombi)):
            pts = p.rhombus_points(r)
            key = frozenset(_key(z) for z in pts)
            if key in seen:
                continue
            seen.add(key)
            quads.append(pts)
    return patch_from_polygons(quads)


def sub_patch(patch: RhombusPatch, rhombus_indices: Iterable[int]) -> RhombusPatch:
    return patch_from_polygons([patch.rhombus_points(r) for r in sorted(set(rhombus_indices))])


def build_patch(region: str) -> RhombusPatch:
    """Region strings: ``rhombus:THETA``, ``hex:A,B,C``, ``grid:M,N`` or ``file:PATH``."""
    kind, _, arg = region.partition(":")
    try:
        if kind == "rhombus":
            return single_rhombus(float(arg))
        if kind == "hex":
            a, b, c = (int(t) for t in arg.split(","))
            return lozenge_hexagon(a, b, c)
        if kind == "grid":
            m, n = (int(t) for t in arg.split(","))
            return square_grid(m, n)
    except ValueError as exc:
        raise GeometryError(f"bad region {region!r}: {exc}") from exc
    if kind == "file":
        return RhombusPatch.load(arg)
    raise GeometryError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# Triangulated patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Face:
    id: int
    vertices: tuple[int, int, int]  # cclw; for rhombus faces (hyp tail, hyp head, center)
    color: str
    rhombus: int  # -1 for faces not coming from a rhombus
    circumcenter: complex


@dataclass(frozen=True)
class TriangulatedPatch:
    """Triangulated isoradial complex. ``base`` is None for non-rhombic inputs."""

    base: RhombusPatch | None
    points: dict[int, complex]
    faces: tuple[Face, ...]
    centers: dict[int, int] = field(default_factory=dict)  # rhombus index -> center vertex

    @cached_property
    def center_vertices(self) -> frozenset:
        return frozenset(self.centers.values())

    def is_corner(self, v: int) -> bool:
        return v not in self.center_vertices

    def face_points(self, f: int) -> list[complex]:
        return [self.points[v] for v in self.faces[f].vertices]

    @cached_property
    def primal_edges(self) -> dict[tuple[int, int], list[tuple[int, int, int]]]:
        """(min, max) primal edge -> list of (face, tail, head) in that face's cclw order."""
        out: dict[tuple[int, int], list] = defaultdict(list)
        for f in self.faces:
            vs = f.vertices
            for k in range(3):
                p, q = vs[k], vs[(k + 1) % 3]
                out[(min(p, q), max(p, q))].append((f.id, p, q))
        return dict(out)

    def validate(self) -> None:
        for f in self.faces:
            pts = self.face_points(f.id)
            if polygon_area(pts) <= 0:
                raise GeometryError(f"face {f.id} is not cclw")
            for z in pts:
                if abs(abs(z - f.circumcenter) - 1.0) > TOL:
                    raise GeometryError(f"face {f.id} does not have circumradius 1")
        for (p, q), owners in self.primal_edges.items():
            if len(owners) > 2:
                raise GeometryError(f"primal edge {(p, q)} bounds more than two faces")
            if len(owners) == 2 and self.faces[owners[0][0]].color == self.faces[owners[1][0]].color:
                raise GeometryError(f"faces {owners[0][0]} and {owners[1][0]} share an edge and a color")


def add_diagonals(patch: RhombusPatch) -> TriangulatedPatch:
    """Split each rhombus into 4 right triangles around a new (black) center vertex."""
    points = dict(patch.positions)
    nxt = max(points) + 1 if points else 0
    centers = {}
    faces = []
    for r, quad in enumerate(patch.rhombi):
        pts = patch.rhombus_points(r)
        c = nxt + r
        points[c] = sum(pts) / 4
        centers[r] = c
        for k in range(4):
            a, b = quad[k], quad[(k + 1) % 4]
            color = BLACK if patch.colors[a] == WHITE else WHITE
            faces.append(Face(4 * r + k, (a, b, c), color, r, (points[a] + points[b]) / 2))
    tri = TriangulatedPatch(patch, points, tuple(faces), centers)
    tri.validate()
    return tri


def triangular_lattice_patch(rows: int, cols: int, side: float = math.sqrt(3.0)) -> TriangulatedPatch:
    """Equilateral triangles (side sqrt(3): circumradius 1) in a rows x cols parallelogram.

    Up-pointing triangles are black, down-pointing white. This is the primal
    graph whose dual is the honeycomb lattice.
    """
    if rows <= 0 or cols <= 0:
        raise GeometryError("lattice dimensions must be positive")
    t1 = complex(side, 0)
    t2 = side * cmath.exp(1j * math.pi / 3)
    vid = {}
    points = {}
    for i in range(cols + 1):
        for j in range(rows + 1):
            vid[(i, j)] = len(vid)
            points[vid[(i, j)]] = i * t1 + j * t2
    faces = []
    for j in range(rows):
        for i in range(cols):
            up = (vid[(i, j)], vid[(i + 1, j)], vid[(i, j + 1)])
            down = (vid[(i + 1, j)], vid[(i + 1, j + 1)], vid[(i, j + 1)])
            for verts, color in ((up, BLACK), (down, WHITE)):
                pts = [points[v] for v in verts]
                faces.append(Face(len(faces), verts, color, -1, sum(pts) / 3))
    tri = TriangulatedPatch(None, points, tuple(faces))
    tri.validate()
    return tri


# ---------------------------------------------------------------------------
# Isoradial dual
# ---------------------------------------------------------------------------


def _unit_angle(z: complex) -> float:
    return math.atan2(z.imag, z.real)


@dataclass(frozen=True)
class RhombusData:
    """Unit rhombus R(e) = (w, x, b, y) in cclw order.

    ``beta`` is the angle of x - w and ``alpha = beta + 2*theta`` the angle of
    y - w, so alpha - beta lies in (0, pi].
    """

    w: complex
    x: complex
    b: complex
    y: complex
    alpha: float
    beta: float

    @property
    def theta(self) -> float:
        return 0.5 * (self.alpha - self.beta)

    @property
    def degenerate(self) -> bool:
        return abs(self.b - self.w) < TOL


def rhombus_data(w: complex, b: complex, x: complex, y: complex) -> RhombusData:
    ex, ey = x - w, y - w
    for vec in (ex, ey, x - b, y - b):
        if abs(abs(vec) - 1.0) > 1e-7:
            raise GeometryError("R(e) does not have unit sides")
    beta = _unit_angle(ex)
    two_theta = _unit_angle(ey / ex) % (2 * math.pi)
    if two_theta <= TOL or two_theta > math.pi + 1e-7:
        raise GeometryError("R(e) vertices are not in cclw order")
    two_theta = min(two_theta, math.pi)
    return RhombusData(w, x, b, y, beta + two_theta, beta)


@dataclass(frozen=True)
class DualEdge:
    id: int
    w: int
    b: int
    x: int  # primal vertex: tail of the crossed edge in w's face
    y: int  # primal vertex: head of the crossed edge in w's face
    kind: str  # "leg" | "hypotenuse"
    rhombus: RhombusData
    nu: float
    crosses_horizontal: bool = False
    crosses_vertical: bool = False
    w_slot: int = -1
    b_slot: int = -1


@dataclass(frozen=True)
class IsoradialDual:
    """Bipartite dual graph; vertex ids are face ids of the primal complex."""

    positions: tuple[complex, ...]
    colors: tuple[str, ...]
    edges: tuple[DualEdge, ...]
    tri: TriangulatedPatch | None
    # (primal vertex key, ((edge id, traversal starts at white), ...)) for closed dual faces
    dual_faces: tuple[tuple[object, tuple[tuple[int, bool], ...]], ...]
    periodic: bool = False

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in self.positions]
        for e in self.edges:
            inc[e.w].append(e.id)
            inc[e.b].append(e.id)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def whites(self) -> tuple[int, ...]:
        return tuple(v for v, c in enumerate(self.colors) if c == WHITE)

    @cached_property
    def blacks(self) -> tuple[int, ...]:
        return tuple(v for v, c in enumerate(self.colors) if c == BLACK)

    @cached_property
    def white_index(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.whites)}

    @cached_property
    def black_index(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.blacks)}

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    def other(self, e: int, v: int) -> int:
        edge = self.edges[e]
        return edge.b if edge.w == v else edge.w

    def edges_between(self, w: int, b: int) -> list[int]:
        return [e for e in self.incident[w] if self.edges[e].b == b]

    def edge_by_faces(self, f: int, g: int) -> int:
        for e in self.incident[f]:
            if self.other(e, f) == g:
                return e
        raise GeometryError(f"faces {f} and {g} are not adjacent")


def dual_graph(tri: TriangulatedPatch) -> IsoradialDual:
    """Dual vertex per face at its circumcenter, dual edge per shared primal edge."""
    faces = tri.faces
    edges = []
    slot_edge: dict[tuple[int, int], int] = {}
    for (p, q), owners in sorted(tri.primal_edges.items()):
        if len(owners) != 2:
            continue
        (f, fp, fq), (g, gp, gq) = owners
        if faces[f].color == faces[g].color:
            raise GeometryError("adjacent faces share a color")
        if faces[f].color != WHITE:
            (f, fp, fq), (g, gp, gq) = (g, gp, gq), (f, fp, fq)
        x, y = fp, fq
        w_pos, b_pos = faces[f].circumcenter, faces[g].circumcenter
        data = rhombus_data(w_pos, b_pos, tri.points[x], tri.points[y])
        kind = "hypotenuse" if tri.base is not None and tri.is_corner(p) and tri.is_corner(q) else "leg"
        w_slot = faces[f].vertices.index(x)
        b_slot = faces[g].vertices.index(y)
        e = DualEdge(len(edges), f, g, x, y, kind, data, abs(tri.points[x] - tri.points[y]),
                     w_slot=w_slot, b_slot=b_slot)
        slot_edge[(f, w_slot)] = e.id
        slot_edge[(g, b_slot)] = e.id
        edges.append(e)
    # closed dual faces: cycles of faces around interior primal vertices
    around: dict[int, list[tuple[int, bool]]] = defaultdict(list)
    boundary_vertices = set()
    for (p, q), owners in tri.primal_edges.items():
        if len(owners) == 1:
            boundary_vertices.update((p, q))
    for f in faces:
        for k in range(3):
            p = f.vertices[k]
            if p in boundary_vertices:
                continue
            around[p].append((slot_edge[(f.id, k)], f.color == WHITE))
    dual_faces = tuple((p, tuple(sorted(around[p]))) for p in sorted(around))
    return IsoradialDual(
        tuple(f.circumcenter for f in faces),
        tuple(f.color for f in faces),
        tuple(edges),
        tri,
        dual_faces,
    )


def critical_weight(edge: DualEdge | RhombusData) -> float:
    """nu(e) = 2 sin(theta), theta the half-angle of R(e) at its dual vertices."""
    data = edge.rhombus if isinstance(edge, DualEdge) else edge
    if data.degenerate and abs(data.alpha - data.beta - math.pi) > 1e-7:
        raise GeometryError("degenerate rhombus must have angle pi")
    nu = 2.0 * math.sin(data.theta)
    if isinstance(edge, DualEdge) and abs(nu - edge.nu) > 1e-7:
        raise GeometryError("rhombus data inconsistent with the crossed primal edge")
    return nu


# ---------------------------------------------------------------------------
# Torus quotients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGraph:
    """Dual of S / n*Lambda. Torus face id = (i * n + j) * F + f for domain face f in cell (i, j)."""

    fundamental: TriangulatedPatch
    lattice: tuple[complex, complex]
    n: int
    dual: IsoradialDual

    @property
    def n_domain_faces(self) -> int:
        return len(self.fundamental.faces)

    def face_id(self, f: int, i: int, j: int) -> int:
        return ((i % self.n) * self.n + (j % self.n)) * self.n_domain_faces + f

    def face_cell(self, face: int) -> tuple[int, int, int]:
        cell, f = divmod(face, self.n_domain_faces)
        i, j = divmod(cell, self.n)
        return f, i, j


def _lattice_coords(z: complex, t1: complex, t2: complex) -> tuple[float, float]:
    m = np.array([[t1.real, t2.real], [t1.imag, t2.imag]])
    a, b = np.linalg.solve(m, [z.real, z.imag])
    return float(a), float(b)


def torus_quotient(tri: TriangulatedPatch, lattice: tuple[complex, complex], n: int) -> TorusGraph:
    """Glue n x n copies of a fundamental domain into a torus and take the dual."""
    if n < 1:
        raise GeometryError("torus scale n must be positive")
    t1, t2 = complex(lattice[0]), complex(lattice[1])
    cell_area = abs(cross(t1, t2))
    if cell_area < TOL:
        raise GeometryError("lattice vectors are degenerate")
    dom_area = sum(polygon_area(tri.face_points(f.id)) for f in tri.faces)
    if abs(dom_area - cell_area) > 1e-6 * cell_area:
        raise GeometryError("domain area differs from the lattice cell area")

    scale = 10**6
    vclass: dict[int, tuple[tuple[int, int], tuple[int, int]]] = {}
    for v, z in tri.points.items():
        a, b = _lattice_coords(z, t1, t2)
        ka, kb = round(a * scale), round(b * scale)
        ca, cb = ka % scale, kb % scale
        vclass[v] = ((ca, cb), ((ka - ca) // scale, (kb - cb) // scale))

    # directed edge (class s, class e, offset e - offset s) -> (face, offset of s, slot)
    table = {}
    for f in tri.faces:
        vs = f.vertices
        for k in range(3):
            s, e = vs[k], vs[(k + 1) % 3]
            (cs, os_), (ce, oe) = vclass[s], vclass[e]
            key = (cs, ce, (oe[0] - os_[0], oe[1] - os_[1]))
            if key in table:
                raise GeometryError("lattice does not act freely on the domain")
            table[key] = (f.id, os_, k)

    F = len(tri.faces)
    # neighbor[(f, k)] = (g, shift, slot in g)
    neighbor = {}
    for f in tri.faces:
        vs = f.vertices
        for k in range(3):
            p, q = vs[k], vs[(k + 1) % 3]
            (cp, op), (cq, oq) = vclass[p], vclass[q]
            key = (cq, cp, (op[0] - oq[0], op[1] - oq[1]))
            if key not in table:
                raise GeometryError("lattice vectors are not translation symmetries of the domain")
            g, og, slot = table[key]
            shift = (oq[0] - og[0], oq[1] - og[1])
            if abs(shift[0]) > 1 or abs(shift[1]) > 1:
                raise GeometryError("domain too spread out: a neighbor lies beyond the adjacent cells")
            if tri.faces[g].color == f.color:
                raise GeometryError("quotient dual is not bipartite; double the lattice")
            neighbor[(f.id, k)] = (g, shift, slot)

    def fid(f, i, j):
        return ((i % n) * n + (j % n)) * F + f

    positions = []
    colors = []
    for i in range(n):
        for j in range(n):
            for f in tri.faces:
                positions.append(f.circumcenter + i * t1 + j * t2)
                colors.append(f.color)

    edges = []
    slot_edge = {}
    for i in range(n):
        for j in range(n):
            off = i * t1 + j * t2
            for f in tri.faces:
                if f.color != WHITE:
                    continue
                for k in range(3):
                    g, (sa, sb), slot = neighbor[(f.id, k)]
                    x, y = f.vertices[k], f.vertices[(k + 1) % 3]
                    w_pos = f.circumcenter + off
                    b_pos = tri.faces[g].circumcenter + (i + sa) * t1 + (j + sb) * t2
                    data = rhombus_data(w_pos, b_pos, tri.points[x] + off, tri.points[y] + off)
                    kind = "hypotenuse" if tri.base is not None and tri.is_corner(x) and tri.is_corner(y) else "leg"
                    wid, bid = fid(f.id, i, j), fid(g, i + sa, j + sb)
                    e = DualEdge(
                        len(edges), wid, bid, x, y, kind, data, abs(tri.points[x] - tri.points[y]),
                        crosses_horizontal=not 0 <= j + sb < n,
                        crosses_vertical=not 0 <= i + sa < n,
                        w_slot=k, b_slot=slot,
                    )
                    slot_edge[(wid, k)] = e.id
                    slot_edge[(bid, slot)] = e.id
                    edges.append(e)

    around: dict[object, list[tuple[int, bool]]] = defaultdict(list)
    for i in range(n):
        for j in range(n):
            for f in tri.faces:
                me = fid(f.id, i, j)
                for k in range(3):
                    cls, (oa, ob) = vclass[f.vertices[k]]
                    key = (cls, (i + oa) % n, (j + ob) % n)
                    around[key].append((slot_edge[(me, k)], f.color == WHITE))
    dual_faces = tuple((key, tuple(sorted(around[key]))) for key in sorted(around))
    dual = IsoradialDual(tuple(positions), tuple(colors), tuple(edges), tri, dual_faces, periodic=True)
    return TorusGraph(tri, (t1, t2), n, dual)


def square_torus_domain() -> tuple[TriangulatedPatch, tuple[complex, complex]]:
    """Two squares with lattice (2,2), (2,-2): the smallest color-preserving domain."""
    return add_diagonals(square_cells([(0, 0), (1, 0)])), (complex(2, 2), complex(2, -2))


def honeycomb_torus_domain() -> tuple[TriangulatedPatch, tuple[complex, complex]]:
    """One up and one down triangle of the side-sqrt(3) triangular lattice."""
    tri = triangular_lattice_patch(1, 1)
    side = math.sqrt(3.0)
    return tri, (complex(side, 0), side * cmath.exp(1j * math.pi / 3))
