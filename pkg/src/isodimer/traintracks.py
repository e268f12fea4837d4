"""Train-tracks of rhombus patches and the periodic-embedding construction.

Pipeline: make a patch track-convex inside an ambient tiling, complete it to
a convex zonogon by filling reflex corners with rhombi, then surround the
zonogon with finite tracks until it becomes a pseudo-hexagon that tiles the
plane by translations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Point, Polygon

from isodimer.errors import GeometryError
from isodimer.geometry import (
    RhombusPatch,
    _key,
    merge_patches,
    patch_from_polygons,
    polygon_area,
    sub_patch,
)

ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class TrainTrack:
    rhombi: tuple[int, ...]
    transversal: complex  # unit vector, angle in [0, pi)
    oriented: bool = False
    sides: tuple[tuple[int, int], ...] = ()  # (rhombus, side class) along the track

    def __len__(self) -> int:
        return len(self.rhombi)


def _canonical_direction(v: complex) -> complex:
    u = v / abs(v)
    ang = math.atan2(u.imag, u.real)
    if ang < -1e-12 or ang >= math.pi - 1e-12:
        u = -u
    return u


def train_tracks(patch: RhombusPatch) -> list[TrainTrack]:
    """Maximal tracks of the patch, each an ordered path (or cycle) of rhombi."""
    links: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r in range(len(patch.rhombi)):
        for cls in (0, 1):
            links[(r, cls)] = []
    for owners in patch.sides.values():
        if len(owners) == 2:
            (ra, ka), (rb, kb) = owners
            links[(ra, ka % 2)].append((rb, kb % 2))
            links[(rb, kb % 2)].append((ra, ka % 2))
    seen = set()
    tracks = []
    order = sorted(links, key=lambda n: (len(links[n]) == 2, n))
    for start in order:
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        while True:
            nxt = [n for n in links[path[-1]] if n not in seen]
            if not nxt:
                break
            seen.add(nxt[0])
            path.append(nxt[0])
        r0, c0 = path[0]
        pts = patch.rhombus_points(r0)
        vec = pts[1] - pts[0] if c0 == 0 else pts[2] - pts[1]
        tracks.append(TrainTrack(tuple(r for r, _ in path), _canonical_direction(vec), False, tuple(path)))
    tracks.sort(key=lambda t: t.rhombi)
    return tracks


def _track_end_sides(patch: RhombusPatch, track: TrainTrack) -> list[tuple[int, int]]:
    """Boundary sides of the patch crossed by the track."""
    out = []
    for r, cls in track.sides:
        for k in (cls, cls + 2):
            key = frozenset((patch.rhombi[r][k], patch.rhombi[r][(k + 1) % 4]))
            if len(patch.sides[key]) == 1:
                out.append((r, k))
    return out


def track_crossings(patch: RhombusPatch) -> int:
    """Number of pairs of tracks that share a rhombus."""
    tracks = train_tracks(patch)
    owner: dict[int, list[int]] = {}
    for i, t in enumerate(tracks):
        for r in t.rhombi:
            owner.setdefault(r, []).append(i)
    pairs = {tuple(sorted(v)) for v in owner.values() if len(v) == 2}
    return len(pairs)


# ---------------------------------------------------------------------------
# Turning angles
# ---------------------------------------------------------------------------


def boundary_vectors(patch: RhombusPatch) -> list[complex]:
    return [patch.positions[v] - patch.positions[u] for u, v in patch.boundary()]


def exterior_angle(a: complex, b: complex) -> float:
    ang = math.atan2((b / a).imag, (b / a).real)
    if abs(abs(ang) - math.pi) < ANGLE_TOL:
        raise GeometryError("boundary doubles back on itself")
    return ang


def turning_angle(vectors: Sequence[complex], i: int, j: int) -> float:
    """Sum of exterior angles from edge i to edge j, walking forward cyclically."""
    m = len(vectors)
    if not (0 <= i < m and 0 <= j < m) or i == j:
        raise GeometryError(f"edge indices {i}, {j} out of range for {m} edges")
    total = 0.0
    a = i
    while a != j:
        total += exterior_angle(vectors[a], vectors[(a + 1) % m])
        a = (a + 1) % m
    return total


def total_turning(vectors: Sequence[complex]) -> float:
    m = len(vectors)
    return sum(exterior_angle(vectors[a], vectors[(a + 1) % m]) for a in range(m))


def opposite_edge_angles(patch: RhombusPatch) -> list[float]:
    """Turning angle from each track's first boundary edge to its second one (cclw)."""
    cyc = patch.boundary()
    vecs = [patch.positions[v] - patch.positions[u] for u, v in cyc]
    index = {frozenset(e): i for i, e in enumerate(cyc)}
    out = []
    for t in train_tracks(patch):
        ends = _track_end_sides(patch, t)
        if len(ends) != 2:
            raise GeometryError("a track does not cross the boundary exactly twice")
        idx = []
        for r, k in ends:
            quad = patch.rhombi[r]
            idx.append(index[frozenset((quad[k], quad[(k + 1) % 4]))])
        i, j = sorted(idx)
        out.append(turning_angle(vecs, i, j))
    return out


# ---------------------------------------------------------------------------
# Track convexity
# ---------------------------------------------------------------------------


def _rhombus_index(ambient: RhombusPatch) -> dict[frozenset, int]:
    return {frozenset(_key(z) for z in ambient.rhombus_points(r)): r for r in range(len(ambient.rhombi))}


def locate(patch: RhombusPatch, ambient: RhombusPatch) -> set[int]:
    """Ambient indices of the rhombi of ``patch`` (matched by position)."""
    index = _rhombus_index(ambient)
    out = set()
    for r in range(len(patch.rhombi)):
        key = frozenset(_key(z) for z in patch.rhombus_points(r))
        if key not in index:
            raise GeometryError("patch is not a sub-patch of the ambient tiling")
        out.add(index[key])
    return out


def _runs(seq: Sequence[int], inside: set[int]) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, r in enumerate(seq):
        if r in inside and start is None:
            start = i
        elif r not in inside and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(seq)))
    return runs


def _components(ambient: RhombusPatch, members: set[int]) -> list[set[int]]:
    comps = []
    seen = set()
    for r in sorted(members):
        if r in seen:
            continue
        comp = {r}
        todo = [r]
        seen.add(r)
        while todo:
            u = todo.pop()
            for v in ambient.rhombus_neighbors[u]:
                if v in members and v not in seen:
                    seen.add(v)
                    comp.add(v)
                    todo.append(v)
        comps.append(comp)
    return comps


def is_track_convex(patch: RhombusPatch, ambient: RhombusPatch) -> bool:
    inside = locate(patch, ambient)
    return all(len(_runs(t.rhombi, inside)) <= 1 for t in train_tracks(ambient))


def make_track_convex(p: RhombusPatch, ambient: RhombusPatch) -> RhombusPatch:
    """Grow p inside ambient until every ambient track meets it in one contiguous run."""
    if not p.is_simply_connected():
        raise GeometryError("patch must be simply connected")
    if not ambient.is_simply_connected():
        raise GeometryError("ambient tiling must be simply connected")
    q = locate(p, ambient)
    on_boundary = {r for e in ambient.boundary_edges for r, _ in ambient.sides[frozenset(e)]}
    tracks = train_tracks(ambient)
    changed = True
    while changed:
        changed = False
        for t in tracks:
            runs = _runs(t.rhombi, q)
            if len(runs) <= 1:
                continue
            for (a0, a1), (b0, b1) in zip(runs, runs[1:]):
                gap = set(t.rhombi[a1:b0])
                rest = set(range(len(ambient.rhombi))) - q - gap
                for comp in _components(ambient, rest):
                    if not comp & on_boundary:
                        gap |= comp
                q |= gap
            if len(_runs(t.rhombi, q)) != 1:
                raise GeometryError("ambient tiling too small to make the patch track-convex")
            changed = True
    out = sub_patch(ambient, q)
    if not out.is_simply_connected():
        raise GeometryError("ambient tiling too small: the filled region leaves it")
    return out


# ---------------------------------------------------------------------------
# Convex completion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexZonogon:
    """Convex patch whose boundary is 2n straight sides; side i is count_i copies of direction_i."""

    patch: RhombusPatch
    directions: tuple[complex, ...]  # side unit vectors scaled to length 2, cclw
    counts: tuple[int, ...]
    start: complex  # tail of the first side

    @property
    def n(self) -> int:
        return len(self.directions) // 2

    def side_vectors(self) -> list[complex]:
        return [d * k for d, k in zip(self.directions, self.counts)]


def _group_sides(patch: RhombusPatch) -> tuple[list[complex], list[int], complex]:
    cyc = patch.boundary()
    vecs = [patch.positions[v] - patch.positions[u] for u, v in cyc]
    m = len(vecs)
    turns = [exterior_angle(vecs[a], vecs[(a + 1) % m]) for a in range(m)]
    # start right after a strictly positive turn so that runs are not split
    breaks = [a for a in range(m) if turns[a] > ANGLE_TOL]
    if not breaks:
        raise GeometryError("boundary has no corner")
    s = (breaks[0] + 1) % m
    dirs, counts = [], []
    for a in range(m):
        v = vecs[(s + a) % m]
        if dirs and abs(v - dirs[-1]) < 1e-7:
            counts[-1] += 1
        else:
            dirs.append(v)
            counts.append(1)
    return dirs, counts, patch.positions[cyc[s][0]]


def as_zonogon(patch: RhombusPatch) -> ConvexZonogon:
    vecs = boundary_vectors(patch)
    m = len(vecs)
    for a in range(m):
        if exterior_angle(vecs[a], vecs[(a + 1) % m]) < -ANGLE_TOL:
            raise GeometryError("patch is not convex")
    dirs, counts, start = _group_sides(patch)
    if len(dirs) % 2:
        raise GeometryError("convex patch has an odd number of sides")
    n = len(dirs) // 2
    for i in range(n):
        if abs(dirs[i] + dirs[i + n]) > 1e-7 or counts[i] != counts[i + n]:
            raise GeometryError("opposite sides are not parallel and of equal length")
    return ConvexZonogon(patch, tuple(dirs), tuple(counts), start)


def complete_to_convex(p: RhombusPatch) -> ConvexZonogon:
    """Fill reflex boundary corners with rhombi until the patch is convex."""
    if not p.is_simply_connected():
        raise GeometryError("patch must be simply connected")
    for t in train_tracks(p):
        if len(_track_end_sides(p, t)) != 2:
            raise GeometryError("a track does not cross the boundary exactly twice")
    cur = p
    guard = 0
    while True:
        cyc = cur.boundary()
        pts = [cur.positions[u] for u, _ in cyc]
        m = len(pts)
        vecs = [pts[(a + 1) % m] - pts[a] for a in range(m)]
        reflex = [a for a in range(m) if exterior_angle(vecs[a], vecs[(a + 1) % m]) < -ANGLE_TOL]
        if not reflex:
            break
        j = reflex[0]
        a_pt, b_pt, c_pt = pts[j], pts[(j + 1) % m], pts[(j + 2) % m]
        quads = [cur.rhombus_points(r) for r in range(len(cur.rhombi))]
        quads.append([a_pt, b_pt, c_pt, a_pt + c_pt - b_pt])
        cur = patch_from_polygons(quads)
        guard += 1
        if guard > 10000:
            raise GeometryError("convex completion did not terminate")
    return as_zonogon(cur)


# ---------------------------------------------------------------------------
# Periodic embedding
# ---------------------------------------------------------------------------


def _parallelogram(origin: complex, u: complex, nu: int, v: complex, nv: int) -> list[list[complex]]:
    return [
        [origin + a * u + b * v, origin + (a + 1) * u + b * v, origin + (a + 1) * u + (b + 1) * v, origin + a * u + (b + 1) * v]
        for a in range(nu)
        for b in range(nv)
    ]


def periodic_embedding(q: ConvexZonogon) -> tuple[RhombusPatch, tuple[complex, complex]]:
    """Fundamental domain (the zonogon plus finite tracks) and its two lattice periods."""
    n = q.n
    if n < 2 or len(q.directions) != 2 * n:
        raise GeometryError("malformed zonogon")
    E = q.side_vectors()
    if n == 2:
        return q.patch, (E[0], E[1])
    if n == 3:
        return q.patch, (E[0] + E[1], E[1] + E[2])
    # tails of the sides e_1 .. e_n (0-based indices 0 .. n-1)
    tails = [q.start]
    for v in E[:-1]:
        tails.append(tails[-1] + v)
    quads = [q.patch.rhombus_points(r) for r in range(len(q.patch.rhombi))]
    for k in range(1, n - 2):
        side = n - k - 1  # 0-based index of e_{n-k}
        seq = [i for top in range(1, n - k - 1) for i in range(top, 0, -1)]
        offset = 0j
        for i in seq:
            quads.extend(
                _parallelogram(tails[side] + offset, q.directions[side], q.counts[side], q.directions[i - 1], q.counts[i - 1])
            )
            offset += E[i - 1]
    g1 = -E[n - 1] + sum(E[i - 1] for top in range(1, n - 2) for i in range(1, top + 1))
    g2 = sum(E[i] for i in range(n - 2))
    g3 = E[n - 2]
    domain = patch_from_polygons(quads)
    return domain, (g1 + g2, g2 + g3)


def reduce_lattice(t1: complex, t2: complex) -> tuple[complex, complex]:
    """Lagrange-Gauss reduction."""
    a, b = t1, t2
    if abs(a) > abs(b):
        a, b = b, a
    while True:
        mu = round((b * a.conjugate()).real / abs(a) ** 2)
        b = b - mu * a
        if abs(b) >= abs(a) - 1e-12:
            return a, b
        a, b = b, a


def _domain_polygon(domain: RhombusPatch):
    polys = [Polygon([(z.real, z.imag) for z in domain.rhombus_points(r)]) for r in range(len(domain.rhombi))]
    return shapely.union_all(polys)


def check_periodic(domain: RhombusPatch, lattice: tuple[complex, complex], tol: float = 1e-6) -> dict:
    """Overlap and coverage check of the 3 x 3 block of translates around the domain.

    Returns overlap (relative to the domain area), the covered fraction of the
    disk of radius half the shortest reduced period centered at the domain
    centroid, and the area ratio domain / cell.
    """
    a, b = reduce_lattice(*lattice)
    base = _domain_polygon(domain)
    area = base.area
    copies = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            t = i * a + j * b
            copies.append(shapely.affinity.translate(base, t.real, t.imag))
    overlap = 0.0
    for x in range(len(copies)):
        for y in range(x + 1, len(copies)):
            overlap += copies[x].intersection(copies[y]).area
    c = base.centroid
    disk = Point(c.x, c.y).buffer(0.5 * abs(a), quad_segs=64)
    covered = shapely.union_all(copies).intersection(disk).area / disk.area
    cell = abs((a.conjugate() * b).imag)
    return {
        "overlap": overlap / area,
        "coverage": covered,
        "area_ratio": area / cell,
        "ok": overlap / area <= tol and covered >= 1 - tol and abs(area / cell - 1) <= tol,
    }


def tile_copies(domain: RhombusPatch, lattice: tuple[complex, complex], irange: Iterable[int], jrange: Iterable[int]) -> RhombusPatch:
    t1, t2 = lattice
    jrange = list(jrange)
    return merge_patches(domain.translated(i * t1 + j * t2) for i in irange for j in jrange)


def embed_in_periodic(p: RhombusPatch, ambient: RhombusPatch | None = None) -> tuple[RhombusPatch, tuple[complex, complex]]:
    """Fundamental domain containing ``p`` and its periods; without ``ambient`` p is its own ambient."""
    convex = p if ambient is None else make_track_convex(p, ambient)
    zono = complete_to_convex(convex)
    domain, lattice = periodic_embedding(zono)
    locate(p, domain)
    return domain, lattice
