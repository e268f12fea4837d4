"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import cmath
import itertools
import math
import random
import time

import numpy as np

from isodimer.dirac import (
    asymptotic_angles,
    asymptotic_inverse_dirac,
    clockwise_odd_orientation,
    dirac_entry,
    inverse_dirac,
    path_function,
    real_path_function,
)
from isodimer.geometry import (
    add_diagonals,
    dual_graph,
    honeycomb_torus_domain,
    lozenge_hexagon,
    patch_from_polygons,
    single_rhombus,
    square_cells,
    square_grid,
    square_torus_domain,
    sub_patch,
    torus_quotient,
    triangular_lattice_patch,
)
from isodimer.measures import (
    asymptotic_local_statistic,
    boltzmann_probability,
    local_statistic,
    real_local_statistic,
    torus_kasteleyn_set,
    torus_local_statistic,
)
from isodimer.tilings import (
    enumerate_hexagon_quadri_tilings,
    enumerate_matchings,
    height1,
    move_orbit,
    tiling_from_height1,
)
from isodimer.traintracks import (
    as_zonogon,
    check_periodic,
    complete_to_convex,
    is_track_convex,
    locate,
    make_track_convex,
    periodic_embedding,
    total_turning,
    track_crossings,
    train_tracks,
    turning_angle,
)


def report(n, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def _key(z):
    return round(z.real, 6), round(z.imag, 6)


def _face_key(tri, f, shift=0j):
    # circumcenters of faces sharing a hypotenuse coincide, so faces are keyed by their corners
    return frozenset(_key(tri.points[v] + shift) for v in tri.faces[f].vertices)


def _edge_key(dual, e):
    return _face_key(dual.tri, e.w), _face_key(dual.tri, e.b)


def _torus_edge_key(torus, e, shift):
    def fk(face):
        f, i, j = torus.face_cell(face)
        return _face_key(torus.fundamental, f, shift + i * torus.lattice[0] + j * torus.lattice[1])

    return fk(e.w), fk(e.b)


# ---------------------------------------------------------------------------
# 1. determinant probabilities equal brute force
# ---------------------------------------------------------------------------


def _small_patches():
    out = [(f"rhombus {t:.3f}", single_rhombus(t)) for t in (0.3, 0.6, math.pi / 4, 1.0, 1.3)]
    out.append(("hexagon 1,1,1", lozenge_hexagon(1, 1, 1)))
    grid = square_grid(2, 2)
    for k in (1, 2, 3):
        for rs in itertools.combinations(range(4), k):
            p = sub_patch(grid, rs)
            if p.is_connected():
                out.append((f"grid sub-patch {rs}", p))
    return out


def test_criterion_01_determinant_matches_enumeration():
    t0 = time.time()
    worst = 0.0
    checked = 0
    for _, patch in _small_patches():
        dual = dual_graph(add_diagonals(patch))
        assert dual.n_vertices <= 14
        ms = enumerate_matchings(dual)
        z = sum(m.weight() for m in ms)
        queries = [(e,) for e in range(len(dual.edges))]
        queries += [q for q in itertools.combinations(range(len(dual.edges)), 2)]
        for q in queries:
            brute = sum(m.weight() for m in ms if set(q) <= m.matched) / z
            det = boltzmann_probability(dual, q)
            worst = max(worst, abs(det - brute))
            checked += 1
    dt = time.time() - t0
    report(1, worst <= 1e-10 and dt < 10, f"{checked} cylinder queries, max error {worst:.2e}, {dt:.2f}s")


# ---------------------------------------------------------------------------
# 2. four-determinant torus identity
# ---------------------------------------------------------------------------


def test_criterion_02_torus_identity():
    t0 = time.time()
    worst = 0.0
    parts = []
    for name, (domain, lattice) in (("honeycomb", honeycomb_torus_domain()), ("square", square_torus_domain())):
        torus = torus_quotient(domain, lattice, 1)
        z_det = torus_kasteleyn_set(torus).partition
        z_enum = sum(m.weight() for m in enumerate_matchings(torus.dual))
        rel = abs(z_det - z_enum) / z_enum
        worst = max(worst, rel)
        parts.append(f"{name} Z={z_det:.10g} vs {z_enum:.10g}")
    dt = time.time() - t0
    report(2, worst <= 1e-9 and dt < 5, "; ".join(parts) + f", max rel error {worst:.2e}, {dt:.2f}s")


# ---------------------------------------------------------------------------
# 3. K times its inverse
# ---------------------------------------------------------------------------


def test_criterion_03_inverse_identity():
    t0 = time.time()
    patch = square_grid(9, 9)
    dual = dual_graph(add_diagonals(patch))
    # white faces of the central 5x5 block of squares (face 4r+k lies in rhombus r)
    centers = [sum(patch.rhombus_points(r)) / 4 for r in range(len(patch.rhombi))]
    win = [w for w in dual.whites if 4 < centers[w // 4].real < 14 and 4 < centers[w // 4].imag < 14]
    assert len(win) == 50
    worst = 0.0
    for w0 in win:
        for w in win:
            s = sum(dirac_entry(dual.edges[e]) * inverse_dirac(dual, dual.edges[e].b, w) for e in dual.incident[w0])
            worst = max(worst, abs(s - (1.0 if w == w0 else 0.0)))
    dt = time.time() - t0
    report(3, worst < 1e-8 and dt < 30, f"max |K K^-1 - Id| = {worst:.2e} over 50x50 white pairs, {dt:.2f}s")


# ---------------------------------------------------------------------------
# 4. honeycomb single edge
# ---------------------------------------------------------------------------


def test_criterion_04_honeycomb_single_edge():
    dual = dual_graph(triangular_lattice_patch(4, 4))
    vals = [local_statistic(dual, [e.id]) for e in dual.edges]
    worst = max(abs(v - 1 / 3) for v in vals)
    report(4, worst <= 1e-9, f"{len(vals)} edges, max |p - 1/3| = {worst:.2e}")


# ---------------------------------------------------------------------------
# 5. torus statistics converge to the infinite-volume one
# ---------------------------------------------------------------------------


def test_criterion_05_torus_convergence():
    t0 = time.time()
    domain, lattice = square_torus_domain()
    plane = dual_graph(add_diagonals(square_grid(8, 8)))
    by_key = {_edge_key(plane, e): e.id for e in plane.edges}
    diffs = []
    for n in (2, 4, 6):
        torus = torus_quotient(domain, lattice, n)
        ks = torus_kasteleyn_set(torus)
        e = next(e for e in torus.dual.edges
                 if e.kind == "leg" and not e.crosses_horizontal and not e.crosses_vertical)
        # the same edge placed near the middle of a large planar window
        ref = local_statistic(plane, [by_key[_torus_edge_key(torus, e, complex(8, 8))]]).real
        diffs.append(abs(torus_local_statistic(ks, [e.id]) - ref))
    dt = time.time() - t0
    # the torus value may hit the limit exactly, so "decreasing" is read as non-increasing
    mono = all(b <= a + 1e-12 for a, b in zip(diffs, diffs[1:]))
    report(5, mono and diffs[-1] < 1e-3 and dt < 120,
           "differences at n=2,4,6: " + ", ".join(f"{d:.2e}" for d in diffs) + f", {dt:.2f}s")


# ---------------------------------------------------------------------------
# 6. asymptotic expansion of the inverse
# ---------------------------------------------------------------------------


def test_criterion_06_asymptotic_remainder_bounded():
    dual = dual_graph(add_diagonals(square_grid(20, 4)))
    w = min(dual.whites, key=lambda v: abs(dual.positions[v] - complex(5, 4)))
    # a black vertex on the horizontal line through w, then its translates by the period (4, 0)
    b0 = next(b for b in dual.blacks if abs(dual.positions[b] - dual.positions[w] - 6) < 1e-9)
    ray = [next(b for b in dual.blacks if abs(dual.positions[b] - dual.positions[b0] - 4 * k) < 1e-9) for k in range(7)]
    rs, scaled = [], []
    for b in ray:
        d = abs(dual.positions[b] - dual.positions[w])
        exact = inverse_dirac(dual, b, w)
        t1, t2 = asymptotic_angles(dual, b, w)
        asy = asymptotic_inverse_dirac(dual.positions[b], dual.positions[w], t1, t2)
        rs.append(d)
        scaled.append(abs(exact - asy) * d**3)
    slope = np.polyfit(np.log(rs), np.log(scaled), 1)[0]
    report(6, slope <= 0.1, f"log-log slope of |exact - asymptotic| r^3 over r in [5, 30]: {slope:.4f}, "
           f"range {min(scaled):.4f}..{max(scaled):.4f}")


# ---------------------------------------------------------------------------
# 7. locality of the statistics
# ---------------------------------------------------------------------------


def test_criterion_07_locality():
    n = 10
    flat = lozenge_hexagon(n, n, n)
    stacked = lozenge_hexagon(n, n, n, [[5 if i < 5 and j < 5 else 0 for j in range(n)] for i in range(n)])
    da, db = dual_graph(add_diagonals(flat)), dual_graph(add_diagonals(stacked))
    assert len(flat.rhombi) == len(stacked.rhombi)
    ka = {_edge_key(da, e): e.id for e in da.edges}
    kb = {_edge_key(db, e): e.id for e in db.edges}
    shared = sorted(set(ka) & set(kb), key=lambda k: ka[k])
    pos = {k: da.positions[da.edges[ka[k]].w] for k in shared}
    pairs = [(k1, k2) for k1, k2 in itertools.combinations(shared, 2) if abs(abs(pos[k1] - pos[k2]) - 20) < 0.3]
    random.Random(7).shuffle(pairs)
    worst_asy = worst_exact = 0.0
    for k1, k2 in pairs[:6]:
        qa, qb = [ka[k1], ka[k2]], [kb[k1], kb[k2]]
        worst_asy = max(worst_asy, abs(asymptotic_local_statistic(da, qa) - asymptotic_local_statistic(db, qb)))
        worst_exact = max(worst_exact, abs(local_statistic(da, qa) - local_statistic(db, qb)))
    report(7, worst_asy <= 1e-14 and worst_exact < 5e-4,
           f"6 edge pairs at distance 20 shared by two tilings: asymptotic diff {worst_asy:.1e}, "
           f"exact diff {worst_exact:.1e}")


# ---------------------------------------------------------------------------
# 8. height function round trip
# ---------------------------------------------------------------------------


def _height_patches():
    out = [single_rhombus(t) for t in (0.3, math.pi / 3, math.pi / 4, 1.2)]
    out += [lozenge_hexagon(1, 1, 1), lozenge_hexagon(1, 1, 1, [[1]]), square_grid(2, 2), square_grid(2, 3)]
    out += [lozenge_hexagon(1, 1, 2, [[h]]) for h in (0, 1, 2)]
    out.append(square_cells([(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)]))
    return out


def test_criterion_08_height_round_trip():
    total = 0
    bad = 0
    for patch in _height_patches():
        assert len(patch.rhombi) <= 8
        dual = dual_graph(add_diagonals(patch))
        for m in enumerate_matchings(dual):
            h = height1(m)
            back = tiling_from_height1(h, dual)
            total += 1
            if back.matched != m.matched or height1(back).values != h.values:
                bad += 1
    report(8, bad == 0, f"{total} matchings over {len(_height_patches())} patches, {bad} mismatches")


# ---------------------------------------------------------------------------
# 9. move connectivity
# ---------------------------------------------------------------------------


def test_criterion_09_move_connectivity():
    parts = []
    ok = True
    for a, b, c in ((1, 1, 1), (1, 1, 2)):
        everything = {m.state_key() for m in enumerate_hexagon_quadri_tilings(a, b, c)}
        assert len(everything) <= 500
        start = next(iter(enumerate_hexagon_quadri_tilings(a, b, c)))
        orbit = set(move_orbit(start))
        ok = ok and orbit == everything
        parts.append(f"hexagon {a},{b},{c}: orbit {len(orbit)} / enumerated {len(everything)}")
    lozenge = dual_graph(add_diagonals(single_rhombus(math.pi / 6)))
    ms = enumerate_matchings(lozenge)
    orbit = set(move_orbit(ms[0]))
    ok = ok and orbit == {m.state_key() for m in ms}
    parts.append(f"single lozenge: orbit {len(orbit)} / enumerated {len(ms)}")
    report(9, ok, "; ".join(parts))


# ---------------------------------------------------------------------------
# 10. periodic embedding pipeline
# ---------------------------------------------------------------------------


def _fan(k, steps):
    u = [2 * cmath.exp(1j * math.pi * j / k) for j in range(steps + 1)]
    return patch_from_polygons([[0, u[j], u[j] + u[j + 1], u[j + 1]] for j in range(steps)])


def _chevron():
    hexagon = lozenge_hexagon(2, 2, 2)
    for r, s in itertools.combinations(range(len(hexagon.rhombi)), 2):
        p = sub_patch(hexagon, (r, s))
        if p.is_connected() and len(p.boundary()) == 6:
            try:
                as_zonogon(p)
            except Exception:
                return p, hexagon
    raise AssertionError("no chevron found")


def _pipeline_cases():
    grid3 = square_grid(3, 3)
    chevron, hexagon = _chevron()
    return [
        ("U", square_cells([(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)]), grid3),
        ("L", square_cells([(0, 0), (1, 0), (0, 1)]), square_grid(2, 2)),
        ("staircase", square_cells([(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)]), grid3),
        ("lozenge chevron", chevron, hexagon),
        ("octagon fan", _fan(4, 3), None),
    ]


def _non_parallel_pairs(patch):
    tracks = train_tracks(patch)
    return sum(1 for s, t in itertools.combinations(tracks, 2) if abs((s.transversal / t.transversal).imag) > 1e-9)


def test_criterion_10_periodic_pipeline():
    lines = []
    ok = True
    for name, p, ambient in _pipeline_cases():
        convex = p if ambient is None else make_track_convex(p, ambient)
        tc = ambient is None or is_track_convex(convex, ambient)
        zono = complete_to_convex(convex)
        sides = zono.side_vectors()
        turns = [turning_angle(sides, i, (i + 1) % len(sides)) for i in range(len(sides))]
        crossings_ok = track_crossings(zono.patch) == _non_parallel_pairs(zono.patch)
        distinct = len(train_tracks(zono.patch)) == zono.n
        if distinct:
            crossings_ok = crossings_ok and track_crossings(zono.patch) == zono.n * (zono.n - 1) // 2
        domain, lattice = periodic_embedding(zono)
        locate(p, domain)
        check = check_periodic(domain, lattice)
        case_ok = (tc and min(turns) > 0 and abs(total_turning(sides) - 2 * math.pi) < 1e-9
                   and crossings_ok and check["ok"] and abs(check["area_ratio"] - 1) < 1e-6)
        ok = ok and case_ok
        lines.append(f"{name}: n={zono.n}, domain {len(domain.rhombi)} rhombi, "
                     f"area ratio {check['area_ratio']:.9f}, {'ok' if case_ok else 'FAILED'}")
    report(10, ok, "; ".join(lines))


# ---------------------------------------------------------------------------
# 11. real versus complex Dirac identities
# ---------------------------------------------------------------------------


def test_criterion_11_real_complex_identities():
    rng = random.Random(11)
    dual = dual_graph(add_diagonals(square_grid(6, 6)))
    orient = clockwise_odd_orientation(dual)
    worst_path = worst_stat = 0.0
    for _ in range(100):
        w = rng.choice(dual.whites)
        x = rng.randrange(dual.n_vertices)
        rf, f = real_path_function(dual, orient, w, x), path_function(dual, w, x)
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
        worst_path = max(worst_path, abs(rf(z) - np.conj(rf(0)) * f(z)))
        k = rng.randint(1, 4)
        edges = []
        used = set()
        for e in rng.sample(range(len(dual.edges)), len(dual.edges)):
            ed = dual.edges[e]
            if ed.w not in used and ed.b not in used:
                edges.append(e)
                used |= {ed.w, ed.b}
            if len(edges) == k:
                break
        worst_stat = max(worst_stat, abs(real_local_statistic(dual, orient, edges) - local_statistic(dual, edges)))
    report(11, worst_path <= 1e-9 and worst_stat <= 1e-9,
           f"100 random queries: path-function identity {worst_path:.1e}, statistic identity {worst_stat:.1e}")

