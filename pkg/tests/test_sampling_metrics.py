import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meshstyle.asset_io import PartLabeling, TexturedMesh
from meshstyle.kernels import nearest
from meshstyle.sampling_metrics import (LabeledPointSet, NnIndex, chamfer_l1, f_score, make_plane,
                                        metrics_report, parse_plane, part_distance, sample_surface,
                                        symmetry_distance)
from oracles import chamfer_l1_ref, f_score_ref, nn_bruteforce, part_distance_ref, reflect_ref


def unit_square():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return TexturedMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def test_square_triangles_equal_share():
    mesh = unit_square()
    pts = sample_surface(mesh, PartLabeling(("a",), np.zeros(2, dtype=int)), 100000, seed=1)
    counts = np.bincount(pts.source_face, minlength=2)
    assert np.all(np.abs(counts - 50000) <= 0.02 * 50000)
    # 5 sigma of Binomial(1e5, 0.5) is ~790, tighter than the 2% band
    assert np.all(np.abs(counts - 50000) <= 5 * np.sqrt(100000 * 0.25))


def test_single_triangle_barycentric():
    tri = np.array([[0.0, 0, 0], [2, 0, 0], [0, 3, 0]])
    mesh = TexturedMesh(tri, np.array([[0, 1, 2]]))
    pts = sample_surface(mesh, PartLabeling(("a",), np.zeros(1, dtype=int)), 3, seed=5).points
    a = np.linalg.solve(np.column_stack([tri[1, :2] - tri[0, :2], tri[2, :2] - tri[0, :2]]),
                        (pts[:, :2] - tri[0, :2]).T).T
    bary = np.column_stack([1 - a.sum(axis=1), a])
    assert np.all(bary >= -1e-12) and np.allclose(bary.sum(axis=1), 1.0)
    assert np.all(pts[:, 2] == 0)


def test_area_weighted_labels():
    # part 0: area 1, part 1: area 3
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                  [2, 0, 0], [5, 0, 0], [5, 1, 0], [2, 1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    labels = PartLabeling(("a", "b"), np.array([0, 0, 1, 1]))
    pts = sample_surface(TexturedMesh(v, f), labels, 100000, seed=2)
    share = np.bincount(pts.labels) / len(pts)
    assert abs(share[0] - 0.25) <= 0.02 and abs(share[1] - 0.75) <= 0.02
    # every point lies on its face's part region
    assert np.all((pts.points[pts.labels == 0, 0] <= 1) & (pts.points[pts.labels == 1, 0].min() >= 2))


def test_sampling_deterministic():
    mesh = unit_square()
    labels = PartLabeling(("a",), np.zeros(2, dtype=int))
    a = sample_surface(mesh, labels, 500, seed=9)
    b = sample_surface(mesh, labels, 500, seed=9)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample_surface(mesh, labels, 500, seed=10).points)


def test_sampling_preconditions():
    labels = PartLabeling(("a",), np.zeros(2, dtype=int))
    with pytest.raises(ValueError):
        sample_surface(unit_square(), labels, 0)
    with pytest.raises(ValueError):
        sample_surface(unit_square(), PartLabeling(("a",), np.zeros(3, dtype=int)), 5)


def test_chamfer_trivial():
    assert chamfer_l1([[0, 0, 0]], [[1, 2, 0]]) == 3.0
    p = np.random.default_rng(0).normal(size=(30, 3))
    assert chamfer_l1(p, p) == 0.0
    with pytest.raises(ValueError):
        chamfer_l1(np.zeros((0, 3)), p)


def test_chamfer_matches_bruteforce():
    rng = np.random.default_rng(1)
    p, q = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    assert chamfer_l1(p, q) == chamfer_l1_ref(p, q)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-10, 10)),
       arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-10, 10)))
def test_chamfer_properties(p, q):
    c = chamfer_l1(p, q)
    assert c >= 0
    assert c == chamfer_l1(q, p)
    assert c == chamfer_l1_ref(p, q)


def labelled(points, labels, n):
    return LabeledPointSet(points, labels, np.zeros(len(points), dtype=int), tuple(f"p{i}" for i in range(n)))


def test_part_distance_single_part_is_twice_chamfer():
    rng = np.random.default_rng(2)
    p, q = rng.normal(size=(40, 3)), rng.normal(size=(35, 3))
    a = labelled(p, np.zeros(40, dtype=int), 1)
    b = labelled(q, np.zeros(35, dtype=int), 1)
    assert part_distance(a, b) == 2 * chamfer_l1(p, q)
    assert part_distance(a, a) == 0.0


def test_part_distance_three_parts_and_empty():
    rng = np.random.default_rng(3)
    p, q = rng.normal(size=(60, 3)), rng.normal(size=(50, 3))
    lp = rng.integers(0, 3, 60)
    lq = rng.integers(0, 3, 50)
    lq[lq == 2] = 1  # part 2 present only on p
    a, b = labelled(p, lp, 4), labelled(q, lq, 4)  # part 3 empty on both sides
    assert part_distance(a, b) == part_distance_ref(p, lp, q, lq, 4)
    assert part_distance(a, b, 0.5) == part_distance_ref(p, lp, q, lq, 4, 0.5)
    assert part_distance(a, b) >= chamfer_l1(p, q)


def test_part_distance_alphabet_mismatch():
    p = np.zeros((2, 3))
    with pytest.raises(ValueError, match="alphabets"):
        part_distance(labelled(p, np.zeros(2, dtype=int), 1), labelled(p, np.zeros(2, dtype=int), 2))


def test_symmetry_distance():
    assert symmetry_distance([[1.0, 0, 0]], "x=0") == 2.0
    sym = np.array([[1.0, 2, 3], [-1.0, 2, 3], [0.5, -1, 0], [-0.5, -1, 0]])
    assert symmetry_distance(sym, "x=0") == 0.0
    rng = np.random.default_rng(4)
    p = rng.normal(size=(40, 3))
    plane = make_plane([1.0, 2.0, -0.5], 0.3)
    assert symmetry_distance(p, plane) == chamfer_l1_ref(p, reflect_ref(p, plane.normal, plane.offset))


def test_plane_parsing(caplog):
    assert parse_plane("none") is None
    assert parse_plane("y=0.5").normal == (0.0, 1.0, 0.0) and parse_plane("y=0.5").offset == 0.5
    with caplog.at_level(logging.WARNING):
        pl = parse_plane("2,0,0,1")
    assert pl.normal == (1.0, 0.0, 0.0) and pl.offset == 0.5
    assert "not unit length" in caplog.text
    for bad in ("w=1", "1,2", "0,0,0,1"):
        with pytest.raises(ValueError):
            parse_plane(bad)


def test_f_score():
    rng = np.random.default_rng(5)
    p = rng.normal(size=(100, 3))
    assert f_score(p, p, 1e-9) == 1.0
    assert f_score(p, p + 100.0, 0.01) == 0.0
    q = p + rng.normal(scale=0.05, size=p.shape)
    tau = 0.01 * np.linalg.norm(q.max(0) - q.min(0)) * 5
    assert f_score(p, q, tau) == f_score_ref(p, q, tau)
    with pytest.raises(ValueError):
        f_score(p, q, 0.0)


def test_metrics_report_identity():
    p = np.random.default_rng(6).normal(size=(80, 3))
    r = metrics_report(p, p)
    assert r["chamfer"] == 0.0 and r["chamfer_l1"] == 0.0 and r["f_score"] == 1.0
    assert r["tau"] == pytest.approx(0.01 * np.linalg.norm(p.max(0) - p.min(0)))


@pytest.mark.parametrize("metric", ["l1", "l2"])
@pytest.mark.parametrize("n", [1, 17, 300, 10000])
def test_nn_index_exact(metric, n):
    rng = np.random.default_rng(n)
    ref = rng.normal(size=(n, 3))
    q = rng.normal(size=(min(n, 2000), 3))
    idx = NnIndex(ref)
    i, d = idx.query(q, metric)
    bi, bd = nn_bruteforce(q, ref, metric)
    assert np.array_equal(i, bi)
    np.testing.assert_allclose(d, bd, rtol=1e-12, atol=0)


def test_nn_ties_lowest_index():
    ref = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
    for backend in ("numpy", "numba"):
        i, _ = nearest(np.zeros((1, 3)), ref, "l1", backend=backend)
        assert i[0] == 0


def test_nn_backends_identical():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(500, 3)), rng.normal(size=(700, 3))
    for metric in ("l1", "l2"):
        x = nearest(a, b, metric, backend="numpy")
        y = nearest(a, b, metric, backend="numba")
        assert np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])


def test_nn_part_subindex():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(200, 3))
    labels = rng.integers(0, 3, 200)
    idx = NnIndex(pts, labels)
    sub = idx.part(1)
    q = rng.normal(size=(20, 3))
    i, _ = sub.query(q)
    bi, _ = nn_bruteforce(q, pts[labels == 1], "l2")
    assert np.array_equal(sub.global_index[i], np.flatnonzero(labels == 1)[bi])


def test_translation_invariance():
    rng = np.random.default_rng(9)
    p, q = rng.normal(size=(60, 3)), rng.normal(size=(60, 3))
    shift = np.array([0.3, -1.2, 2.5])
    assert abs(chamfer_l1(p + shift, q + shift) - chamfer_l1(p, q)) < 1e-9
