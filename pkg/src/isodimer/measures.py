"""Boltzmann and Gibbs probabilities of cylinder events.

Finite patches: enumeration and Kasteleyn determinants. Tori: the four
sign-twisted Kasteleyn matrices. Infinite volume: the local formula
prod K(w_i, b_i) * det K^{-1}(b_i, w_j) with K^{-1} from residues.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from isodimer.dirac import (
    asymptotic_angles,
    asymptotic_inverse_dirac,
    clockwise_odd_orientation,
    dirac_entry,
    inverse_dirac,
    inverse_real_dirac,
    real_dirac_entry,
)
from isodimer.errors import GeometryError, IsodimerError, OrientationError
from isodimer.geometry import (
    DualEdge,
    IsoradialDual,
    RhombusPatch,
    TorusGraph,
    _key,
    critical_weight,
    dual_graph,
    torus_quotient,
    triangular_lattice_patch,
)
from isodimer.tilings import enumerate_matchings

DEFAULT_MAX_DIM = 4096


def max_dim() -> int:
    try:
        return int(os.environ.get("ISODIMER_MAX_DIM", DEFAULT_MAX_DIM))
    except ValueError:
        return DEFAULT_MAX_DIM


def _check_dim(n: int) -> None:
    if n > max_dim():
        raise IsodimerError(f"matrix dimension {n} exceeds the limit {max_dim()} (set ISODIMER_MAX_DIM)")


@dataclass(frozen=True)
class CylinderQuery:
    edges: tuple[int, ...]

    def vertices(self, dual: IsoradialDual) -> list[int]:
        return [v for e in self.edges for v in (dual.edges[e].w, dual.edges[e].b)]

    def is_disjoint(self, dual: IsoradialDual) -> bool:
        vs = self.vertices(dual)
        return len(vs) == len(set(vs))


def _query(q) -> CylinderQuery:
    return q if isinstance(q, CylinderQuery) else CylinderQuery(tuple(int(e) for e in q))


# ---------------------------------------------------------------------------
# Finite patches
# ---------------------------------------------------------------------------


def kasteleyn_block(dual: IsoradialDual, orientation, weights: Callable[[DualEdge], float] = critical_weight,
                    flip: Iterable[int] = ()) -> np.ndarray:
    """|W| x |B| block of the real Dirac operator, entries (-1)^I weight; ``flip`` negates extra edges."""
    _check_dim(len(dual.whites))
    flip = set(flip)
    out = np.zeros((len(dual.whites), len(dual.blacks)))
    wi, bi = dual.white_index, dual.black_index
    for e in dual.edges:
        s = -1.0 if orientation[e.id] else 1.0
        if e.id in flip:
            s = -s
        out[wi[e.w], bi[e.b]] += s * weights(e)
    return out


def _edge_value(e: DualEdge, orientation, weights, flip=frozenset()) -> float:
    s = -1.0 if orientation[e.id] else 1.0
    return (-s if e.id in flip else s) * weights(e)


def partition_function(dual: IsoradialDual, weights: Callable[[DualEdge], float] = critical_weight,
                       method: str = "determinant") -> float:
    if method == "enumerate":
        return float(sum(m.weight(weights) for m in enumerate_matchings(dual)))
    if method == "determinant":
        if dual.periodic:
            raise GeometryError("use torus_partition for periodic graphs")
        if len(dual.whites) != len(dual.blacks):
            return 0.0
        if not dual.whites:
            return 1.0
        return abs(float(np.linalg.det(kasteleyn_block(dual, clockwise_odd_orientation(dual), weights))))
    raise ValueError(f"unknown method {method!r}")


def boltzmann_probability(dual: IsoradialDual, query, weights: Callable[[DualEdge], float] = critical_weight,
                          method: str = "determinant") -> float:
    """Probability that all query edges are matched, under weights prod w(e)."""
    q = _query(query)
    if not q.is_disjoint(dual):
        return 0.0
    if method == "enumerate":
        ms = enumerate_matchings(dual)
        z = sum(m.weight(weights) for m in ms)
        if z == 0:
            raise IsodimerError("the graph has no perfect matching")
        want = set(q.edges)
        return float(sum(m.weight(weights) for m in ms if want <= m.matched) / z)
    if method == "determinant":
        if dual.periodic:
            raise GeometryError("use torus_local_statistic for periodic graphs")
        if len(dual.whites) != len(dual.blacks):
            raise IsodimerError("the graph has no perfect matching")
        orient = clockwise_odd_orientation(dual)
        a = kasteleyn_block(dual, orient, weights)
        if a.size and np.linalg.det(a) == 0.0:
            raise IsodimerError("the graph has no perfect matching")
        if not q.edges:
            return 1.0
        ainv = np.linalg.inv(a)
        wi, bi = dual.white_index, dual.black_index
        es = [dual.edges[e] for e in q.edges]
        sub = np.array([[ainv[bi[ei.b], wi[ej.w]] for ej in es] for ei in es])
        pref = math.prod(_edge_value(e, orient, weights) for e in es)
        return float(pref * np.linalg.det(sub))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Infinite-volume local statistics
# ---------------------------------------------------------------------------


def local_statistic(dual: IsoradialDual, query, method: str = "residues") -> complex:
    """prod K(w_i, b_i) * det[K^{-1}(b_i, w_j)]; complex so the imaginary residue stays visible."""
    q = _query(query)
    es = [dual.edges[e] for e in q.edges]
    if not es:
        return 1.0 + 0j
    if not q.is_disjoint(dual):
        return 0j
    m = np.array([[inverse_dirac(dual, ei.b, ej.w, method) for ej in es] for ei in es])
    return complex(math.prod(dirac_entry(e) for e in es) * np.linalg.det(m))


def real_local_statistic(dual: IsoradialDual, orientation, query) -> complex:
    """Same statistic from the real Dirac operator and its inverse."""
    q = _query(query)
    es = [dual.edges[e] for e in q.edges]
    if not es:
        return 1.0 + 0j
    m = np.array([[inverse_real_dirac(dual, orientation, ei.b, ej.w) for ej in es] for ei in es])
    return complex(math.prod(real_dirac_entry(e, orientation) for e in es) * np.linalg.det(m))


def asymptotic_local_statistic(dual: IsoradialDual, query) -> complex:
    """Local statistic with exact diagonal entries and asymptotic off-diagonal K^{-1} entries."""
    q = _query(query)
    es = [dual.edges[e] for e in q.edges]
    if not es:
        return 1.0 + 0j
    k = len(es)
    m = np.zeros((k, k), dtype=complex)
    for i, ei in enumerate(es):
        for j, ej in enumerate(es):
            if i == j:
                m[i, j] = inverse_dirac(dual, ei.b, ei.w)
            else:
                bp, wp = dual.positions[ei.b], dual.positions[ej.w]
                if abs(bp - wp) < 1e-9:
                    raise GeometryError("asymptotic entries need separated edges")
                t1, t2 = asymptotic_angles(dual, ei.b, ej.w)
                m[i, j] = asymptotic_inverse_dirac(bp, wp, t1, t2)
    return complex(math.prod(dirac_entry(e) for e in es) * np.linalg.det(m))


# ---------------------------------------------------------------------------
# Tori
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusKasteleynSet:
    torus: TorusGraph
    orientation: tuple[int, ...]
    flips: tuple[frozenset, frozenset, frozenset, frozenset]
    matrices: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    coefficients: tuple[float, float, float, float]  # (-1, 1, 1, 1) times the global sign
    log_scale: float
    scaled_dets: tuple[float, float, float, float]  # det K_l / exp(log_scale)

    @property
    def dets(self) -> list[float]:
        return [d * math.exp(self.log_scale) for d in self.scaled_dets]

    @property
    def partition(self) -> float:
        return 0.5 * sum(c * d for c, d in zip(self.coefficients, self.scaled_dets)) * math.exp(self.log_scale)

    @property
    def term_weights(self) -> list[float]:
        """c_l det K_l / (2 Z); they sum to 1."""
        tot = sum(c * d for c, d in zip(self.coefficients, self.scaled_dets))
        return [c * d / tot for c, d in zip(self.coefficients, self.scaled_dets)]


def _crossers(dual: IsoradialDual) -> tuple[frozenset, frozenset]:
    h = frozenset(e.id for e in dual.edges if e.crosses_horizontal)
    v = frozenset(e.id for e in dual.edges if e.crosses_vertical)
    return h, v


def _flip_sets(dual):
    h, v = _crossers(dual)
    return (frozenset(), h, v, h ^ v)


def _matching_sign(dual, m, orientation, flip) -> int:
    wi, bi = dual.white_index, dual.black_index
    perm = [0] * len(dual.whites)
    sign = 1
    for e in m.matched:
        edge = dual.edges[e]
        perm[wi[edge.w]] = bi[edge.b]
        if _edge_value(edge, orientation, lambda _: 1.0, flip) < 0:
            sign = -sign
    # permutation parity by cycle decomposition
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _edge_slot(torus: TorusGraph, e: DualEdge) -> tuple[int, int]:
    return torus.face_cell(e.w)[0], e.w_slot


def validate_torus_orientation(torus: TorusGraph, orientation) -> int:
    """Check the four-term sign identity matching by matching; returns the global sign.

    For every perfect matching M, half the signed sum of its four determinant
    terms with coefficients (-1, 1, 1, 1) must equal the same sign s. Raises
    OrientationError otherwise.
    """
    dual = torus.dual
    flips = _flip_sets(dual)
    coeff = (-1, 1, 1, 1)
    glob = None
    for m in enumerate_matchings(dual):
        val = sum(c * _matching_sign(dual, m, orientation, f) for c, f in zip(coeff, flips))
        if abs(val) != 2:
            raise OrientationError("orientation fails the parity-class sign test")
        s = val // 2
        if glob is None:
            glob = s
        elif s != glob:
            raise OrientationError("orientation fails the parity-class sign test")
    if glob is None:
        raise OrientationError("torus graph has no perfect matching")
    return glob


def base_torus_orientation(domain, lattice) -> tuple[dict[tuple[int, int], int], int]:
    """Clockwise-odd orientation on the n = 1 torus that satisfies the four-term identity.

    Tries the four twists by the cycle-crossing edge sets and validates each
    against enumeration. Returns (slot -> indicator, global sign).
    """
    t1 = torus_quotient(domain, lattice, 1)
    base = clockwise_odd_orientation(t1.dual)
    h, v = _crossers(t1.dual)
    last = None
    for twist in (frozenset(), h, v, h ^ v):
        orient = tuple(1 - o if i in twist else o for i, o in enumerate(base))
        try:
            glob = validate_torus_orientation(t1, orient)
        except OrientationError as exc:
            last = exc
            continue
        return {_edge_slot(t1, e): orient[e.id] for e in t1.dual.edges}, glob
    raise OrientationError(f"no twist of the clockwise-odd orientation passes validation: {last}")


def torus_kasteleyn_set(torus: TorusGraph, weights: Callable[[DualEdge], float] = critical_weight,
                        validate: bool = False) -> TorusKasteleynSet:
    slots, _ = base_torus_orientation(torus.fundamental, torus.lattice)
    dual = torus.dual
    orient = tuple(slots[_edge_slot(torus, e)] for e in dual.edges)
    if validate:
        validate_torus_orientation(torus, orient)
    flips = _flip_sets(dual)
    mats = tuple(kasteleyn_block(dual, orient, weights, f) for f in flips)
    logs = []
    signs = []
    for a in mats:
        s, ld = np.linalg.slogdet(a)
        signs.append(float(s))
        logs.append(float(ld))
    finite = [ld for ld, s in zip(logs, signs) if s != 0]
    if not finite:
        raise OrientationError("all four Kasteleyn matrices are singular")
    scale = max(finite)
    scaled = tuple(s * math.exp(ld - scale) if s != 0 else 0.0 for s, ld in zip(signs, logs))
    coeff = (-1.0, 1.0, 1.0, 1.0)
    total = sum(c * d for c, d in zip(coeff, scaled))
    if abs(total) < 1e-12:
        raise OrientationError("four-term combination vanishes")
    glob = 1.0 if total > 0 else -1.0
    coeff = tuple(glob * c for c in coeff)
    return TorusKasteleynSet(torus, orient, flips, mats, coeff, scale, scaled)


def torus_partition(torus: TorusGraph, weights: Callable[[DualEdge], float] = critical_weight) -> float:
    return torus_kasteleyn_set(torus, weights).partition


def torus_local_statistic(ks: TorusKasteleynSet | TorusGraph, query) -> float:
    if isinstance(ks, TorusGraph):
        ks = torus_kasteleyn_set(ks)
    dual = ks.torus.dual
    q = _query(query)
    es = [dual.edges[e] for e in q.edges]
    for e in es:
        if e.crosses_horizontal or e.crosses_vertical:
            raise GeometryError(f"query edge {e.id} crosses a reference cycle of the torus")
    if not es:
        return 1.0
    if not q.is_disjoint(dual):
        return 0.0
    wi, bi = dual.white_index, dual.black_index
    pref = math.prod(_edge_value(e, ks.orientation, critical_weight) for e in es)
    total = 0.0
    for wt, a, d in zip(ks.term_weights, ks.matrices, ks.scaled_dets):
        if d == 0.0 or abs(d) < 1e-13:
            continue
        ainv = np.linalg.inv(a)
        sub = np.array([[ainv[bi[ei.b], wi[ej.w]] for ej in es] for ei in es])
        total += wt * np.linalg.det(sub)
    return float(pref * total)


# ---------------------------------------------------------------------------
# Triangular quadri-tilings
# ---------------------------------------------------------------------------


def _lozenges_of_edge(dual: IsoradialDual, e: int) -> set[int]:
    edge = dual.edges[e]
    tri = dual.tri
    return {tri.faces[edge.w].rhombus, tri.faces[edge.b].rhombus}


def _short_diagonal(pts: list[complex]) -> tuple[int, int]:
    return (0, 2) if abs(pts[2] - pts[0]) < abs(pts[3] - pts[1]) else (1, 3)


def honeycomb_edges(patch: RhombusPatch, lozenges: Iterable[int]):
    """Honeycomb dual graph on a triangular-lattice patch, plus the edge of each lozenge."""
    lozenges = sorted(set(lozenges))
    scale = math.sqrt(3.0) / 2.0
    t1 = complex(2.0, 0.0)
    t2 = 2.0 * complex(0.5, math.sqrt(3.0) / 2.0)
    m = np.array([[t1.real, t2.real], [t1.imag, t2.imag]])
    pts_all = [z for r in lozenges for z in patch.rhombus_points(r)]
    coords = [np.linalg.solve(m, [z.real, z.imag]) for z in pts_all]
    for c in coords:
        if np.max(np.abs(c - np.round(c))) > 1e-6:
            raise GeometryError("lozenges are not on the side-2 triangular lattice")
    ia = [int(round(c[0])) for c in coords]
    ib = [int(round(c[1])) for c in coords]
    margin = 3
    i0, j0 = min(ia) - margin, min(ib) - margin
    cols = max(ia) - i0 + margin
    rows = max(ib) - j0 + margin
    tri = triangular_lattice_patch(rows, cols)
    shift = i0 * t1 * scale + j0 * t2 * scale
    dual = dual_graph(tri)
    by_centroid = {_key(f.circumcenter + shift): f.id for f in tri.faces}
    out = {}
    for r in lozenges:
        pts = patch.rhombus_points(r)
        a, c = _short_diagonal(pts)
        others = [k for k in range(4) if k not in (a, c)]
        faces = []
        for k in others:
            centroid = (pts[a] + pts[c] + pts[k]) / 3 * scale
            faces.append(by_centroid[_key(centroid)])
        out[r] = dual.edge_by_faces(*faces)
    return dual, out


def quadri_gibbs(dual: IsoradialDual, query) -> complex:
    """Probability of a connected cylinder on triangular quadri-tilings (product of two local statistics)."""
    q = _query(query)
    if not q.edges:
        return 1.0 + 0j
    tri = dual.tri
    if tri is None or tri.base is None:
        raise GeometryError("need a lozenge-with-diagonals patch")
    patch = tri.base
    lozenges = set()
    for e in q.edges:
        lozenges |= _lozenges_of_edge(dual, e)
    # the associated lozenges must form a connected path
    todo = [min(lozenges)]
    seen = {todo[0]}
    while todo:
        r = todo.pop()
        for s in patch.rhombus_neighbors[r]:
            if s in lozenges and s not in seen:
                seen.add(s)
                todo.append(s)
    if seen != lozenges:
        raise GeometryError("lozenges of the query are not connected; split it into connected cylinders")
    mu_l = local_statistic(dual, q)
    hdual, kmap = honeycomb_edges(patch, lozenges)
    mu_t = local_statistic(hdual, sorted(kmap.values()))
    return mu_l * mu_t
