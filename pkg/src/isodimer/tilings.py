"""Quadri-tilings as perfect matchings of the isoradial dual.

Covers the tile/matching correspondence, both height functions, exhaustive
enumeration, the elementary move set and a Metropolis sampler over it.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from isodimer.errors import GeometryError, HeightError, MoveError
from isodimer.geometry import (
    BLACK,
    WHITE,
    DualEdge,
    IsoradialDual,
    RhombusPatch,
    TriangulatedPatch,
    _key,
    add_diagonals,
    critical_weight,
    dual_graph,
    lozenge_hexagon,
    patch_from_polygons,
)


@dataclass(frozen=True)
class DimerConfig:
    graph: IsoradialDual
    matched: frozenset

    def __post_init__(self):
        covered = {}
        for e in self.matched:
            if not 0 <= e < len(self.graph.edges):
                raise GeometryError(f"unknown dual edge {e}")
            edge = self.graph.edges[e]
            for v in (edge.w, edge.b):
                if v in covered:
                    raise GeometryError(f"dual vertex {v} covered twice")
                covered[v] = e
        if len(covered) != self.graph.n_vertices:
            raise GeometryError("matching is not perfect")

    def partner(self, v: int) -> int:
        for e in self.graph.incident[v]:
            if e in self.matched:
                return self.graph.other(e, v)
        raise GeometryError(f"vertex {v} unmatched")

    def face_pairs(self) -> list[tuple[int, int]]:
        return sorted((self.graph.edges[e].w, self.graph.edges[e].b) for e in self.matched)

    def weight(self, weights: Callable[[DualEdge], float] = critical_weight) -> float:
        return math.prod(weights(self.graph.edges[e]) for e in self.matched)

    def state_key(self) -> frozenset:
        """Position-based key, independent of vertex and face numbering."""
        tri = self.graph.tri
        out = []
        for w, b in self.face_pairs():
            out.append(frozenset(frozenset(_key(z) for z in tri.face_points(f)) for f in (w, b)))
        return frozenset(out)


def config_from_face_pairs(dual: IsoradialDual, pairs: Iterable[Sequence[int]]) -> DimerConfig:
    return DimerConfig(dual, frozenset(dual.edge_by_faces(int(a), int(b)) for a, b in pairs))


# ---------------------------------------------------------------------------
# Tiles and the underlying rhombus tiling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadriTile:
    faces: tuple[int, int]  # (white face, black face)
    kind: str  # glued along a "leg" or along a "hypotenuse"
    corners: tuple[int, int, int, int]  # primal vertex ids, cclw
    triangles: tuple[tuple[complex, complex, complex], tuple[complex, complex, complex]]
    triangle_colors: tuple[str, str]
    hypotenuse_colors: tuple[tuple[str, str], tuple[str, str]]  # corner colors along each hypotenuse


def matching_to_tiling(m: DimerConfig) -> list[QuadriTile]:
    tri = m.graph.tri
    base = tri.base
    tiles = []
    for e in sorted(m.matched):
        edge = m.graph.edges[e]
        fw, fb = tri.faces[edge.w], tri.faces[edge.b]
        zw = next(v for v in fw.vertices if v not in (edge.x, edge.y))
        zb = next(v for v in fb.vertices if v not in (edge.x, edge.y))

        def hyp_colors(face):
            if base is None:
                return ("", "")
            return (base.colors[face.vertices[0]], base.colors[face.vertices[1]])

        tiles.append(
            QuadriTile(
                (edge.w, edge.b),
                edge.kind,
                (edge.y, zw, edge.x, zb),
                (tuple(tri.face_points(fw.id)), tuple(tri.face_points(fb.id))),
                (fw.color, fb.color),
                (hyp_colors(fw), hyp_colors(fb)),
            )
        )
    return tiles


def underlying_tiling(tiles: Sequence[QuadriTile]) -> RhombusPatch:
    """Rhombus tiling whose sides are the hypotenuses of all the triangles of the tiles."""
    if not tiles:
        raise GeometryError("no tiles")
    by_apex: dict[tuple[int, int], list[tuple[complex, complex, complex]]] = {}
    white_corner = None
    for t in tiles:
        if t.triangle_colors[0] == t.triangle_colors[1]:
            raise GeometryError("quadri-tile glues two triangles of the same color")
        for tri_pts, color, (c0, c1) in zip(t.triangles, t.triangle_colors, t.hypotenuse_colors):
            # the hypotenuse is the side opposite the right angle: the first two points
            a, b, apex = tri_pts
            if abs(abs(b - a) - 2.0) > 1e-7 or abs((a - apex).real * (b - apex).real + (a - apex).imag * (b - apex).imag) > 1e-7:
                raise GeometryError("tile triangle is not a right triangle with hypotenuse 2")
            if c0 and (color == BLACK) != (c0 == WHITE):
                raise GeometryError("tile violates the vertex coloring constraint")
            if c0 == WHITE and white_corner is None:
                white_corner = a
            by_apex.setdefault(_key(apex), []).append(tri_pts)
    quads = []
    for apex, group in by_apex.items():
        if len(group) != 4:
            raise GeometryError("triangles around a rhombus center are incomplete")
        nxt = {_key(a): b for a, b, _ in group}
        start = group[0][0]
        quad = [start]
        while len(quad) < 4:
            quad.append(nxt[_key(quad[-1])])
        quads.append(quad)
    return patch_from_polygons(quads, white_vertex=white_corner)


def same_patch(p: RhombusPatch, q: RhombusPatch) -> bool:
    def sig(patch):
        rh = frozenset(frozenset(_key(z) for z in patch.rhombus_points(r)) for r in range(len(patch.rhombi)))
        cols = frozenset((_key(patch.positions[v]), patch.colors[v]) for v in patch.positions)
        return rh, cols

    return sig(p) == sig(q)


# ---------------------------------------------------------------------------
# Height functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeightField:
    base_vertex: int
    values: dict[int, int]


def _oriented_edges(tri: TriangulatedPatch) -> dict[tuple[int, int], tuple[int, int]]:
    """Primal edge -> (u, v) directed so that its black face lies on the left."""
    out = {}
    for key, owners in tri.primal_edges.items():
        f, p, q = owners[0]
        out[key] = (p, q) if tri.faces[f].color == BLACK else (q, p)
    return out


def default_base(tri: TriangulatedPatch) -> int:
    boundary = set()
    for (p, q), owners in tri.primal_edges.items():
        if len(owners) == 1:
            boundary.update((p, q))
    corners = [v for v in boundary if tri.is_corner(v)]
    return min(corners or boundary)


def _crossed_edges(m: DimerConfig) -> set[tuple[int, int]]:
    out = set()
    for e in m.matched:
        edge = m.graph.edges[e]
        out.add((min(edge.x, edge.y), max(edge.x, edge.y)))
    return out


def _bfs_heights(tri, base, step, check) -> dict[int, int]:
    nbrs: dict[int, list[tuple[int, int]]] = {v: [] for v in tri.points}
    for key, (u, v) in _oriented_edges(tri).items():
        d = step(key)
        nbrs[u].append((v, d))
        nbrs[v].append((u, -d))
    if base not in nbrs:
        raise HeightError(f"unknown base vertex {base}")
    values = {base: 0}
    parent = {base: None}
    todo = deque([base])
    while todo:
        u = todo.popleft()
        for v, d in nbrs[u]:
            if v not in values:
                values[v] = values[u] + d
                parent[v] = u
                todo.append(v)
            elif check and values[v] != values[u] + d:
                cycle = _path(parent, u) + list(reversed(_path(parent, v)))
                raise HeightError("height has monodromy around a cycle", cycle=cycle)
    if len(values) != len(nbrs):
        raise HeightError("triangulation is not connected")
    return values


def _path(parent, v):
    out = []
    while v is not None:
        out.append(v)
        v = parent[v]
    return out[::-1]


def height1(m: DimerConfig, base: int | None = None) -> HeightField:
    """+1 along edges not crossed by the matching, -2 along crossed ones (black faces on the left)."""
    tri = m.graph.tri
    if base is None:
        base = default_base(tri)
    crossed = _crossed_edges(m)
    values = _bfs_heights(tri, base, lambda key: -2 if key in crossed else 1, True)
    return HeightField(base, values)


def tiling_from_height1(h: HeightField, dual: IsoradialDual) -> DimerConfig:
    tri = dual.tri
    if h.values.get(h.base_vertex) != 0:
        raise HeightError("height is not normalized at its base vertex")
    if set(h.values) != set(tri.points):
        raise HeightError("height must be defined on every vertex")
    crossed = set()
    for key, (u, v) in _oriented_edges(tri).items():
        d = h.values[v] - h.values[u]
        if d == -2:
            crossed.add(key)
        elif d != 1:
            raise HeightError(f"illegal height step {d} along edge {u}->{v}")
    matched = set()
    for e in dual.edges:
        if (min(e.x, e.y), max(e.x, e.y)) in crossed:
            matched.add(e.id)
    if len(matched) != len(crossed):
        raise HeightError("a -2 step sits on a boundary edge")
    try:
        return DimerConfig(dual, frozenset(matched))
    except GeometryError as exc:
        raise HeightError(f"height does not encode a perfect matching: {exc}") from exc


def _lozenge_step(d: complex) -> int:
    ang = math.degrees(math.atan2(d.imag, d.real)) % 360.0
    k = round(ang / 60.0)
    if abs(ang - 60.0 * k) > 1e-6 or abs(abs(d) - 2.0) > 1e-7:
        raise GeometryError("rhombus side is not an edge of the triangular lattice")
    return 1 if k % 2 == 0 else -1


def height2(patch: RhombusPatch, base: int | None = None) -> HeightField:
    """Lozenge height: +1 along lattice directions 0, 120, 240 degrees, -1 against.

    Lozenge centers (ids as in ``add_diagonals``) get one plus the minimum of
    their corners.
    """
    for r in range(len(patch.rhombi)):
        pts = patch.rhombus_points(r)
        for k in range(4):
            _lozenge_step(pts[(k + 1) % 4] - pts[k])
    if not patch.is_simply_connected():
        raise HeightError("lozenge region is not simply connected")
    if base is None:
        base = patch.boundary()[0][0]
    nbrs: dict[int, list[tuple[int, int]]] = {v: [] for v in patch.positions}
    for s in patch.sides:
        u, v = sorted(s)
        d = _lozenge_step(patch.positions[v] - patch.positions[u])
        nbrs[u].append((v, d))
        nbrs[v].append((u, -d))
    values = {base: 0}
    todo = deque([base])
    while todo:
        u = todo.popleft()
        for v, d in nbrs[u]:
            if v not in values:
                values[v] = values[u] + d
                todo.append(v)
            elif values[v] != values[u] + d:
                raise HeightError("lozenge height has monodromy")
    first_center = max(patch.positions) + 1
    for r, quad in enumerate(patch.rhombi):
        values[first_center + r] = min(values[v] for v in quad) + 1
    return HeightField(base, values)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_matchings(dual: IsoradialDual) -> list[DimerConfig]:
    """All perfect matchings, sorted by their sorted edge-id lists."""
    n = dual.n_vertices
    if n == 0:
        return [DimerConfig(dual, frozenset())]
    if len(dual.whites) != len(dual.blacks):
        return []
    adj = [[(e, dual.other(e, v)) for e in dual.incident[v]] for v in range(n)]
    covered = [False] * n
    chosen: list[int] = []
    found: list[list[int]] = []

    def pick():
        best, best_deg = -1, 1 << 30
        for v in range(n):
            if covered[v]:
                continue
            d = sum(1 for _, u in adj[v] if not covered[u])
            if d < best_deg:
                best, best_deg = v, d
                if d <= 1:
                    break
        return best, best_deg

    def rec():
        v, deg = pick()
        if v < 0:
            found.append(sorted(chosen))
            return
        if deg == 0:
            return
        covered[v] = True
        for e, u in adj[v]:
            if covered[u]:
                continue
            covered[u] = True
            chosen.append(e)
            rec()
            chosen.pop()
            covered[u] = False
        covered[v] = False

    rec()
    found.sort()
    return [DimerConfig(dual, frozenset(m)) for m in found]


def plane_partitions(a: int, b: int, c: int) -> list[list[list[int]]]:
    """All a x b plane partitions with parts at most c (lozenge tilings of the hexagon)."""
    out = []
    cells = [(i, j) for i in range(a) for j in range(b)]
    h = [[0] * b for _ in range(a)]

    def rec(k):
        if k == len(cells):
            out.append([row[:] for row in h])
            return
        i, j = cells[k]
        top = c
        if i:
            top = min(top, h[i - 1][j])
        if j:
            top = min(top, h[i][j - 1])
        for z in range(top + 1):
            h[i][j] = z
            rec(k + 1)
        h[i][j] = 0

    rec(0)
    return out


def enumerate_hexagon_quadri_tilings(a: int, b: int, c: int) -> list[DimerConfig]:
    """Quadri-tilings over every lozenge tiling of the (a, b, c) hexagon."""
    out = []
    for hts in plane_partitions(a, b, c):
        dual = dual_graph(add_diagonals(lozenge_hexagon(a, b, c, hts)))
        out.extend(enumerate_matchings(dual))
    return out


# ---------------------------------------------------------------------------
# Elementary moves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Move:
    kind: str  # "quadri_flip" | "lozenge_flip"
    support: tuple[int, ...]  # dual edge ids of the cycle, or (corner vertex, rhombus, rhombus, rhombus)
    orientation_choice: int = 0


def _internal_cut(m: DimerConfig, r: int) -> int | None:
    """0 if rhombus r is cut along v0-v2, 1 if along v1-v3, None if not internally matched."""
    pairs = set()
    for k in range(4):
        f = 4 * r + k
        g = m.partner(f)
        if g // 4 != r:
            return None
        pairs.add(frozenset((k, g % 4)))
    if pairs == {frozenset((0, 1)), frozenset((2, 3))}:
        return 0
    if pairs == {frozenset((1, 2)), frozenset((3, 0))}:
        return 1
    return None


def _corner_rhombi(patch: RhombusPatch) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for r, quad in enumerate(patch.rhombi):
        for v in quad:
            out.setdefault(v, []).append(r)
    return out


def _flippable_corners(m: DimerConfig) -> list[tuple[int, tuple[int, int, int]]]:
    tri = m.graph.tri
    patch = tri.base
    if patch is None:
        return []
    boundary = {v for e in patch.boundary_edges for v in e}
    out = []
    for v, rs in sorted(_corner_rhombi(patch).items()):
        if v in boundary or len(rs) != 3:
            continue
        if all(_internal_cut(m, r) is not None for r in rs):
            out.append((v, tuple(rs)))
    return out


def elementary_moves(m: DimerConfig) -> list[Move]:
    moves = []
    for _, cycle in m.graph.dual_faces:
        ids = tuple(e for e, _ in cycle)
        if 2 * sum(1 for e in ids if e in m.matched) == len(ids):
            moves.append(Move("quadri_flip", ids))
    for v, rs in _flippable_corners(m):
        for choice in range(8):
            moves.append(Move("lozenge_flip", (v,) + rs, choice))
    return moves


def cut_pairs(r: int, cut: int) -> list[tuple[int, int]]:
    if cut == 0:
        return [(4 * r, 4 * r + 1), (4 * r + 2, 4 * r + 3)]
    return [(4 * r + 1, 4 * r + 2), (4 * r + 3, 4 * r)]


def flip_hexagon(patch: RhombusPatch, v: int) -> tuple[RhombusPatch, list[int], int]:
    """Replace the three rhombi around interior corner v by the other three tiling the hexagon.

    Returns the new patch, the rhombus indices that changed and the new vertex id.
    """
    rs = _corner_rhombi(patch).get(v, [])
    if len(rs) != 3:
        raise MoveError(f"vertex {v} is not surrounded by exactly three rhombi")
    p = patch.positions[v]
    nbrs = []
    for r in rs:
        quad = patch.rhombi[r]
        k = quad.index(v)
        nbrs.extend((quad[(k + 1) % 4], quad[(k + 3) % 4]))
    qs = sorted(set(nbrs))
    if len(qs) != 3:
        raise MoveError("rhombi around the vertex do not form a hexagon")
    # reflect v through the hexagon centre; the six corners do not move, so
    # flipping back restores v exactly instead of amplifying rounding error
    far = {u for r in rs for u in patch.rhombi[r]} - {v}
    new_pos = sum(patch.positions[u] for u in far) / 3 - p
    new_id = max(patch.positions) + 1
    positions = {u: z for u, z in patch.positions.items() if u != v}
    positions[new_id] = new_pos
    colors = {u: c for u, c in patch.colors.items() if u != v}
    colors[new_id] = patch.colors[qs[0]]
    by_pos = {_key(z): u for u, z in positions.items()}
    rhombi = list(patch.rhombi)
    for slot, q in zip(rs, qs):
        others = [patch.positions[u] for u in qs if u != q]
        z = patch.positions[q]
        corners = [z, z + others[0] - p, new_pos, z + others[1] - p]
        pts_area = sum((corners[i].conjugate() * corners[(i + 1) % 4]).imag for i in range(4))
        if pts_area < 0:
            corners = [corners[0], corners[3], corners[2], corners[1]]
        try:
            rhombi[slot] = tuple(by_pos[_key(c)] for c in corners)
        except KeyError as exc:
            raise MoveError("hexagon corner missing from the patch") from exc
    return RhombusPatch(positions, colors, tuple(rhombi)), list(rs), new_id


def apply_move(m: DimerConfig, mv: Move) -> DimerConfig:
    dual = m.graph
    if mv.kind == "quadri_flip":
        ids = set(mv.support)
        if not any(tuple(e for e, _ in cyc) == mv.support for _, cyc in dual.dual_faces):
            raise MoveError("move support is not a face cycle of this graph")
        if 2 * len(ids & m.matched) != len(ids):
            raise MoveError("stale move: face cycle is not alternating")
        return DimerConfig(dual, m.matched ^ frozenset(ids))
    if mv.kind == "lozenge_flip":
        v, rs = mv.support[0], mv.support[1:]
        if (v, tuple(rs)) not in _flippable_corners(m):
            raise MoveError("stale move: hexagon is not flippable")
        if not 0 <= mv.orientation_choice < 8:
            raise MoveError("orientation choice must be in 0..7")
        new_patch, changed, _ = flip_hexagon(dual.tri.base, v)
        new_dual = dual_graph(add_diagonals(new_patch))
        keep = {r for r in range(len(new_patch.rhombi))} - set(changed)
        pairs = [(w, b) for w, b in m.face_pairs() if w // 4 in keep]
        for bit, r in enumerate(changed):
            pairs.extend(cut_pairs(r, (mv.orientation_choice >> bit) & 1))
        return config_from_face_pairs(new_dual, pairs)
    raise MoveError(f"unknown move kind {mv.kind!r}")


def move_orbit(m: DimerConfig, limit: int = 100000) -> dict[frozenset, DimerConfig]:
    """All configurations reachable from m by elementary moves, keyed by state_key."""
    seen = {m.state_key(): m}
    todo = deque([m])
    while todo:
        cur = todo.popleft()
        for mv in elementary_moves(cur):
            nxt = apply_move(cur, mv)
            k = nxt.state_key()
            if k not in seen:
                if len(seen) >= limit:
                    raise MoveError("orbit exceeds the size limit")
                seen[k] = nxt
                todo.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def initial_config(tri: TriangulatedPatch) -> DimerConfig:
    """Every rhombus cut along its short diagonal (v0-v2 on ties)."""
    patch = tri.base
    if patch is None:
        raise GeometryError("initial configuration needs a rhombus patch")
    dual = dual_graph(tri)
    pairs = []
    for r in range(len(patch.rhombi)):
        v0, v1, v2, v3 = patch.rhombus_points(r)
        cut = 0 if abs(v2 - v0) <= abs(v3 - v1) + 1e-9 else 1
        pairs.extend(cut_pairs(r, cut))
    return config_from_face_pairs(dual, pairs)


def sample_mcmc(
    tri: TriangulatedPatch,
    steps: int,
    seed: int,
    weights: Callable[[DualEdge], float] = critical_weight,
    callback: Callable[[DimerConfig], None] | None = None,
    start: DimerConfig | None = None,
) -> DimerConfig:
    """Metropolis-Hastings over elementary moves, proposals uniform over the current move list.

    The acceptance ratio includes |moves(M)| / |moves(M')| so that the chain is
    reversible for the Boltzmann weights even though move counts vary.
    ``callback`` is called with the state after every step.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = random.Random(seed)
    cur = start if start is not None else initial_config(tri)
    cur_moves = elementary_moves(cur)
    cur_w = cur.weight(weights)
    for _ in range(steps):
        if cur_moves:
            mv = cur_moves[rng.randrange(len(cur_moves))]
            nxt = apply_move(cur, mv)
            nxt_moves = elementary_moves(nxt)
            nxt_w = nxt.weight(weights)
            ratio = (nxt_w / cur_w) * (len(cur_moves) / len(nxt_moves))
            if ratio >= 1.0 or rng.random() < ratio:
                cur, cur_moves, cur_w = nxt, nxt_moves, nxt_w
        if callback is not None:
            callback(cur)
    return cur


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def save_matching(m: DimerConfig, path: str | Path) -> None:
    data = {"patch": m.graph.tri.base.to_dict(), "matched_edges": [list(p) for p in m.face_pairs()]}
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def load_matching(path: str | Path) -> DimerConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        patch_data = data["patch"]
        pairs = data["matched_edges"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise GeometryError(f"cannot read matching file {path}: {exc}") from exc
    if isinstance(patch_data, str):
        patch = RhombusPatch.load(Path(path).parent / patch_data)
    else:
        patch = RhombusPatch.from_dict(patch_data)
    return config_from_face_pairs(dual_graph(add_diagonals(patch)), pairs)
