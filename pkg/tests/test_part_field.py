import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from meshstyle.part_field import (Ellipsoid, blend_weights, ellipsoid_fit_loss, ellipsoid_points,
                                  fit_ellipsoid, fit_part_ellipsoids, gaussian_weight,
                                  refine_ellipsoids, sample_ellipsoid_surface, unit_sphere_lattice)
from meshstyle.sampling_metrics import LabeledPointSet, part_distance
from meshstyle.synthetic import make_creature


def random_ellipsoid(rng, scale=1.0):
    rot = Rotation.random(random_state=rng.integers(1 << 31)).as_matrix()
    return Ellipsoid(rng.normal(scale=scale, size=3), rot, rng.uniform(0.1, 1.5, 3) * scale)


def check_frame(rot):
    assert np.allclose(rot.T @ rot, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(rot) - 1.0) < 1e-6


def test_unit_ball_axes():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(100000, 3))
    p = p / np.linalg.norm(p, axis=1, keepdims=True) * rng.random(100000)[:, None] ** (1 / 3)
    e = fit_ellipsoid(p)
    assert np.all(np.abs(e.semi_axes - 1.0) < 0.02)
    check_frame(e.rotation)


def test_segment_axis():
    x = np.linspace(-1, 1, 2001)
    p = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    e = fit_ellipsoid(p)
    # oracle: population variance of the fixture, moment matched by sqrt(5 var)
    var = np.mean((x - x.mean()) ** 2)
    assert e.semi_axes[0] == pytest.approx(math.sqrt(5 * var), rel=1e-12)
    assert e.semi_axes[0] == pytest.approx(math.sqrt(5 / 3), rel=1e-3)
    floor = 1e-4 * 2.0
    assert np.allclose(e.semi_axes[1:], floor)
    assert np.allclose(np.abs(e.rotation[:, 0]), [1, 0, 0])
    check_frame(e.rotation)


def test_repeated_point():
    e = fit_ellipsoid(np.tile([[1.0, 2.0, 3.0]], (7, 1)))
    assert np.array_equal(e.center, [1.0, 2.0, 3.0])
    assert np.all(e.semi_axes == 1e-9)
    with pytest.raises(ValueError):
        fit_ellipsoid(np.zeros((0, 3)))


def test_fit_frame_conventions():
    rng = np.random.default_rng(1)
    for _ in range(20):
        e0 = random_ellipsoid(rng)
        pts = sample_ellipsoid_surface(e0, 400)
        e = fit_ellipsoid(pts)
        check_frame(e.rotation)
        assert np.all(np.diff(e.semi_axes) <= 1e-12)
        for k in range(2):
            col = e.rotation[:, k]
            assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_rigid_invariance():
    rng = np.random.default_rng(2)
    p = rng.normal(size=(500, 3)) * [3.0, 1.0, 0.3]
    e = fit_ellipsoid(p)
    rot = Rotation.random(random_state=3).as_matrix()
    t = np.array([1.0, -2.0, 0.5])
    e2 = fit_ellipsoid(p @ rot.T + t)
    np.testing.assert_allclose(e2.semi_axes, e.semi_axes, rtol=1e-9)
    np.testing.assert_allclose(e2.center, rot @ e.center + t, atol=1e-12)
    # axes agree up to sign
    np.testing.assert_allclose(np.abs(e2.rotation.T @ rot @ e.rotation), np.eye(3), atol=1e-9)


def test_gaussian_weight_values():
    unit = Ellipsoid(np.zeros(3), np.eye(3), np.ones(3))
    assert gaussian_weight(np.zeros(3), unit, 4.0) == 1.0
    assert gaussian_weight(np.array([0.0, 2.0, 0.0]), unit, 4.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    rng = np.random.default_rng(4)
    for _ in range(10):
        e = random_ellipsoid(rng)
        p = rng.normal(size=3)
        sigma = 4.0 * e.rotation @ np.diag(e.semi_axes ** 2) @ e.rotation.T
        d = p - e.center
        ref = math.exp(-0.5 * d @ np.linalg.inv(sigma) @ d)
        assert gaussian_weight(p, e, 4.0) == pytest.approx(ref, rel=1e-10)


def test_blend_trivial_cases():
    rng = np.random.default_rng(5)
    e = random_ellipsoid(rng)
    pts = rng.normal(size=(100, 3)) * 5
    assert np.all(blend_weights(pts, [e]) == 1.0)
    w = blend_weights(pts, [e, e])
    assert np.all(w == 0.5)


def test_blend_underflow_fallback():
    a = Ellipsoid(np.zeros(3), np.eye(3), np.full(3, 0.01))
    b = Ellipsoid(np.array([1.0, 0, 0]), np.eye(3), np.full(3, 0.02))
    far = np.array([[50.0, 0, 0], [-50.0, 0, 0]])
    w = blend_weights(far, [a, b])
    # b is nearer in Mahalanobis terms for both points (larger axes)
    assert w.tolist() == [[0.0, 1.0], [0.0, 1.0]]
    c = Ellipsoid(np.array([-40.0, 0, 0]), np.eye(3), np.full(3, 0.01))
    w = blend_weights(far, [a, b, c])
    assert w.tolist() == [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_blend_skips_missing_parts():
    e = Ellipsoid(np.zeros(3), np.eye(3), np.ones(3))
    w = blend_weights(np.ones((3, 3)), [None, e, None])
    assert np.array_equal(w, np.tile([0.0, 1.0, 0.0], (3, 1)))
    with pytest.raises(ValueError):
        blend_weights(np.ones((1, 3)), [None])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_blend_simplex_property(seed, n):
    rng = np.random.default_rng(seed)
    ells = [random_ellipsoid(rng, scale=rng.uniform(0.01, 3)) for _ in range(n)]
    pts = rng.normal(scale=rng.uniform(0.1, 200), size=(300, 3))
    w = blend_weights(pts, ells)
    assert np.all(w >= 0)
    assert np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-9)


def test_lattice_on_surface():
    m = 512
    u = unit_sphere_lattice(m)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)
    # equal-area bands: z is uniform, so its mean is ~0
    assert abs(u[:, 2].mean()) < 1e-12
    rng = np.random.default_rng(6)
    e = random_ellipsoid(rng)
    pts = sample_ellipsoid_surface(e, m)
    loc = e.local(pts)
    assert np.allclose(np.einsum("ij,ij->i", loc, loc), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        sample_ellipsoid_surface(e, 0)


def test_ellipsoid_fit_loss_equals_part_distance():
    mesh, labels = make_creature(4)
    from meshstyle.sampling_metrics import sample_surface
    p = sample_surface(mesh, labels, 800, seed=0)
    ells = fit_part_ellipsoids(p)
    xi = ellipsoid_points(ells, 128, p.part_names)
    assert ellipsoid_fit_loss(ells, p, 128) == part_distance(xi, p)


def test_refine_monotone_and_identity():
    rng = np.random.default_rng(7)
    # a bent cylinder: points along a quarter circle
    t = rng.uniform(0, np.pi / 2, 1500)
    ang = rng.uniform(0, 2 * np.pi, 1500)
    r = 0.15
    centre = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
    radial = np.column_stack([np.cos(t) * np.cos(ang), np.sin(t) * np.cos(ang), np.sin(ang)])
    pts = centre + r * radial
    parts = LabeledPointSet(pts, np.zeros(len(pts), dtype=int), np.zeros(len(pts), dtype=int), ("arm",))
    ells = fit_part_ellipsoids(parts)
    out, hist = refine_ellipsoids(ells, parts, 4, m=256, return_history=True)
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]
    assert hist[-1] == ellipsoid_fit_loss(out, parts, 256)
    check_frame(out[0].rotation)
    same = refine_ellipsoids(ells, parts, 0)
    assert same[0] is ells[0]


def test_refine_on_exact_ellipsoid():
    e = Ellipsoid(np.array([0.1, 0.2, 0.3]), np.eye(3), np.array([1.0, 0.6, 0.3]))
    pts = sample_ellipsoid_surface(e, 512)
    parts = LabeledPointSet(pts, np.zeros(512, dtype=int), np.zeros(512, dtype=int), ("a",))
    _, hist = refine_ellipsoids([e], parts, 10, m=512, return_history=True)
    assert hist[0] == 0.0
    assert hist[0] - hist[-1] < 1e-6


def test_serialisation():
    rng = np.random.default_rng(8)
    e = random_ellipsoid(rng)
    back = Ellipsoid.from_dict(e.to_dict())
    assert np.array_equal(back.rotation, e.rotation) and np.array_equal(back.semi_axes, e.semi_axes)
    with pytest.raises(ValueError):
        Ellipsoid(np.zeros(3), np.eye(3), [1.0, 0.0, 1.0])
