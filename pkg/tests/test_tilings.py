import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isodimer.errors import GeometryError, HeightError, MoveError
from isodimer.geometry import (
    add_diagonals,
    dual_graph,
    lozenge_hexagon,
    single_rhombus,
    square_cells,
    square_grid,
)
from isodimer.measures import boltzmann_probability
from isodimer.tilings import (
    DimerConfig,
    HeightField,
    Move,
    apply_move,
    config_from_face_pairs,
    cut_pairs,
    elementary_moves,
    enumerate_hexagon_quadri_tilings,
    enumerate_matchings,
    height1,
    height2,
    initial_config,
    load_matching,
    matching_to_tiling,
    plane_partitions,
    same_patch,
    sample_mcmc,
    save_matching,
    tiling_from_height1,
    underlying_tiling,
)


def _dual(p):
    return dual_graph(add_diagonals(p))


# -- bijection and enumeration ----------------------------------------------


def test_single_rhombus_has_two_matchings():
    ms = enumerate_matchings(_dual(single_rhombus(math.pi / 4)))
    assert len(ms) == 2
    for m in ms:
        tiles = matching_to_tiling(m)
        assert len(tiles) == 2 and all(t.kind == "leg" for t in tiles)


def test_matching_counts():
    assert len(enumerate_matchings(_dual(square_grid(2, 2)))) == 17
    assert len(enumerate_matchings(_dual(lozenge_hexagon(1, 1, 1)))) == 9


def test_hexagon_count_is_sum_over_lozenge_tilings():
    per_tiling = [len(enumerate_matchings(_dual(lozenge_hexagon(1, 1, 1, [[h]])))) for h in (0, 1)]
    assert sum(per_tiling) == len(enumerate_hexagon_quadri_tilings(1, 1, 1)) == 18


def test_enumeration_is_sorted_and_unique():
    ms = enumerate_matchings(_dual(square_grid(2, 2)))
    keys = [sorted(m.matched) for m in ms]
    assert keys == sorted(keys) and len({tuple(k) for k in keys}) == len(keys)


def test_hypotenuse_tile_spans_two_rhombi():
    d = _dual(square_grid(2, 2))
    m = next(m for m in enumerate_matchings(d) if any(d.edges[e].kind == "hypotenuse" for e in m.matched))
    tile = next(t for t in matching_to_tiling(m) if t.kind == "hypotenuse")
    assert tile.faces[0] // 4 != tile.faces[1] // 4


def test_invalid_matching_rejected():
    d = _dual(single_rhombus(0.5))
    with pytest.raises(GeometryError):
        DimerConfig(d, frozenset({0}))
    with pytest.raises(GeometryError):
        DimerConfig(d, frozenset({0, 1, 2, 3}))


@pytest.mark.parametrize("patch", [square_grid(2, 2), lozenge_hexagon(1, 1, 1), square_cells([(0, 0), (1, 0), (1, 1)])])
def test_underlying_tiling_round_trip(patch):
    for m in enumerate_matchings(_dual(patch)):
        assert same_patch(underlying_tiling(matching_to_tiling(m)), patch)


def test_plane_partitions():
    assert len(plane_partitions(1, 1, 1)) == 2
    assert len(plane_partitions(2, 2, 2)) == 20


# -- heights -------------------------------------------------------------------


def test_height1_steps_and_zero_circulation():
    for m in enumerate_matchings(_dual(lozenge_hexagon(1, 1, 1))):
        h = height1(m)
        assert h.values[h.base_vertex] == 0
        tri = m.graph.tri
        for t in matching_to_tiling(m):
            cyc = list(t.corners)
            steps = [h.values[cyc[(k + 1) % 4]] - h.values[cyc[k]] for k in range(4)]
            assert sum(steps) == 0
        for f in tri.faces:
            a, b, c = f.vertices
            assert sum(h.values[v] for v in (b, c, a)) - sum(h.values[v] for v in (a, b, c)) == 0


def test_height1_distinguishes_matchings():
    ms = enumerate_matchings(_dual(lozenge_hexagon(1, 1, 1)))
    fields = {tuple(sorted(height1(m).values.items())) for m in ms}
    assert len(fields) == len(ms)


def test_height1_round_trip_small_patches():
    for p in (single_rhombus(0.7), square_grid(2, 2), square_grid(3, 2), lozenge_hexagon(1, 1, 2)):
        d = _dual(p)
        for m in enumerate_matchings(d):
            assert tiling_from_height1(height1(m), d).matched == m.matched


def test_illegal_height_step():
    d = _dual(single_rhombus(0.7))
    h = height1(enumerate_matchings(d)[0])
    bad = dict(h.values)
    v = next(v for v in bad if v != h.base_vertex)
    bad[v] += 3
    with pytest.raises(HeightError):
        tiling_from_height1(HeightField(h.base_vertex, bad), d)


def test_height2_single_lozenge():
    h = height2(single_rhombus(math.pi / 6))
    corners = sorted(h.values[v] for v in range(4))
    lo = corners[0]
    assert corners == [lo, lo + 1, lo + 1, lo + 2]
    assert h.values[4] == lo + 1


def test_height2_hexagon_flip_changes_center_by_three():
    pa, pb = lozenge_hexagon(1, 1, 1), lozenge_hexagon(1, 1, 1, [[1]])
    ha, hb = height2(pa), height2(pb)
    # both tilings have the same corners; compare heights position by position
    diffs = {}
    for v, z in pa.positions.items():
        u = next(u for u, w in pb.positions.items() if abs(w - z) < 1e-9)
        diffs[v] = hb.values[u] - ha.values[v]
    center = next(v for v, z in pa.positions.items() if abs(z) < 1e-9)
    assert abs(diffs.pop(center)) == 3
    assert all(d == 0 for d in diffs.values())


def test_height1_defined_around_holes():
    # hole boundaries alternate colours, so the height has no monodromy
    ring = square_cells([(i, j) for i in range(3) for j in range(3) if (i, j) != (1, 1)])
    d = _dual(ring)
    for m in enumerate_matchings(d)[:40]:
        h = height1(m)
        assert tiling_from_height1(h, d).matched == m.matched


# -- moves ----------------------------------------------------------------------


def test_single_rhombus_one_quadri_flip():
    for m in enumerate_matchings(_dual(single_rhombus(0.6))):
        moves = elementary_moves(m)
        assert [mv.kind for mv in moves] == ["quadri_flip"]
        assert apply_move(apply_move(m, moves[0]), moves[0]).matched == m.matched


def test_lozenge_flip_on_cut_hexagon():
    d = _dual(lozenge_hexagon(1, 1, 1))
    pairs = [p for r in range(3) for p in cut_pairs(r, 0)]
    m = config_from_face_pairs(d, pairs)
    flips = [mv for mv in elementary_moves(m) if mv.kind == "lozenge_flip"]
    assert len(flips) == 8
    out = apply_move(m, flips[0])
    assert same_patch(out.graph.tri.base, lozenge_hexagon(1, 1, 1, [[1]]))


def test_lozenge_flips_need_three_internal_cuts():
    d = _dual(lozenge_hexagon(1, 1, 2))
    blocked = 0
    for m in enumerate_matchings(d):
        flips = [mv for mv in elementary_moves(m) if mv.kind == "lozenge_flip"]
        crossing = [e for e in m.matched if d.edges[e].w // 4 != d.edges[e].b // 4]
        if crossing and not flips:
            blocked += 1
        for mv in flips:
            # every rhombus of the flipped hexagon is matched inside itself
            for r in mv.support[1:]:
                assert all(m.partner(4 * r + k) // 4 == r for k in range(4))
    assert blocked > 0


def test_stale_move_rejected():
    ms = enumerate_matchings(_dual(square_grid(2, 2)))
    m = ms[0]
    with pytest.raises(MoveError):
        apply_move(m, Move("quadri_flip", (0, 1, 2)))
    with pytest.raises(MoveError):
        apply_move(m, Move("lozenge_flip", (0, 0, 1, 2)))
    current = elementary_moves(m)
    stale = next(mv for other in ms[1:] for mv in elementary_moves(other) if mv not in current)
    with pytest.raises(MoveError):
        apply_move(m, stale)


# -- sampler ----------------------------------------------------------------------


def test_zero_steps_is_initial_config():
    tri = add_diagonals(lozenge_hexagon(1, 1, 1))
    assert sample_mcmc(tri, 0, seed=3).matched == initial_config(tri).matched


def test_sampler_is_deterministic():
    tri = add_diagonals(lozenge_hexagon(1, 1, 1))
    a = sample_mcmc(tri, 200, seed=5)
    b = sample_mcmc(tri, 200, seed=5)
    assert a.state_key() == b.state_key()


def test_square_edge_frequency_is_half():
    tri = add_diagonals(single_rhombus(math.pi / 4))
    edge = 0
    hits = []
    sample_mcmc(tri, 100000, seed=1, callback=lambda m: hits.append(edge in m.matched))
    assert abs(sum(hits) / len(hits) - 0.5) < 0.02


def test_lozenge_long_diagonal_crossing_frequency():
    tri = add_diagonals(single_rhombus(math.pi / 6))
    d = dual_graph(tri)
    heavy = next(e.id for e in d.edges if abs(e.nu - math.sqrt(3)) < 1e-9)
    hits = []
    sample_mcmc(tri, 100000, seed=2, callback=lambda m: hits.append(heavy in m.matched))
    assert abs(sum(hits) / len(hits) - 0.75) < 0.02


def test_mcmc_marginals_match_boltzmann():
    tri = add_diagonals(square_grid(2, 2))
    d = dual_graph(tri)
    counts = Counter()
    n = 60000
    sample_mcmc(tri, n, seed=4, callback=lambda m: counts.update(m.matched))
    for e in range(0, len(d.edges), 3):
        p = boltzmann_probability(d, [e])
        # generous error bar for a correlated chain
        se = math.sqrt(p * (1 - p) / n) * 10
        assert abs(counts[e] / n - p) < 3 * se + 1e-3


def test_matching_file_round_trip(tmp_path):
    d = _dual(lozenge_hexagon(1, 1, 1))
    m = enumerate_matchings(d)[4]
    save_matching(m, tmp_path / "m.json")
    back = load_matching(tmp_path / "m.json")
    assert back.face_pairs() == m.face_pairs()


# -- properties ---------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([(1, 1, 1), (1, 1, 2), (1, 2, 1)]))
def test_random_walk_preserves_invariants(seed, abc):
    tri = add_diagonals(lozenge_hexagon(*abc))
    m = sample_mcmc(tri, 30, seed=seed)
    h = height1(m)
    assert tiling_from_height1(h, m.graph).matched == m.matched
    assert same_patch(underlying_tiling(matching_to_tiling(m)), m.graph.tri.base)
    assert len(matching_to_tiling(m)) == m.graph.n_vertices // 2


def test_long_run_keeps_exact_geometry():
    # repeated hexagon flips must not accumulate rounding error in the vertex positions
    tri = add_diagonals(lozenge_hexagon(2, 2, 2))
    m = sample_mcmc(tri, 3000, seed=7)
    patch = m.graph.tri.base
    for r in range(len(patch.rhombi)):
        pts = patch.rhombus_points(r)
        assert all(abs(abs(pts[(k + 1) % 4] - pts[k]) - 2) < 1e-12 for k in range(4))
