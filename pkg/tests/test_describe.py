import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from irredet.describe import (
    DEFAULT_RADII,
    DescriptorField,
    DescriptorParams,
    DescriptorVector,
    continuity_modulus,
    continuity_profile,
    describe,
    describe_points,
    distance,
    jet_labels,
)
from irredet.detect import DetectorParams, detect_log_extrema
from irredet.errors import IncompatibleDescriptorError, MarginError, ParameterError
from irredet.image import Image, Point, Transform


def vec(*v, did="t"):
    return DescriptorVector(np.array(v, dtype=float), did)


def test_constant_image_njet():
    img = Image(np.full((30, 30), 42.0))
    d = describe(img, Point(14.3, 15.7), DescriptorParams("njet", sigma=1.0, order=1))
    np.testing.assert_allclose(d.values, [42.0, 0.0, 0.0], atol=1e-9)


def test_constant_patch_normalises_to_zero():
    img = Image(np.full((10, 10), 5.0))
    d = describe(img, Point(4, 4), DescriptorParams("patch", radius=1, normalize=True))
    assert len(d) == 9 and not d.values.any()


def test_ramp_njet_is_exact():
    xs = np.mgrid[0:40, 0:40][1].astype(float)
    d = describe(Image(2 * xs), Point(17.25, 20.5), DescriptorParams("njet", sigma=1.5, order=1))
    np.testing.assert_allclose(d.values, [34.5, 2.0, 0.0], atol=1e-6)


def test_jet_ordering_and_length():
    assert jet_labels(2) == ["I", "Ix", "Iy", "Ixx", "Ixy", "Iyy"]
    for order, n in [(1, 3), (2, 6), (3, 10), (4, 15)]:
        assert DescriptorParams("njet", order=order).length == n
    assert DescriptorParams("patch", radius=3).length == 49


def test_quadratic_second_derivatives():
    ys, xs = np.mgrid[0:40, 0:40].astype(float)
    img = Image(xs**2 + 3 * xs * ys + 2 * ys**2 + 100)
    d = describe(img, Point(20, 20), DescriptorParams("njet", sigma=1.0, order=2)).values
    # interior Gaussian smoothing adds sigma^2 (fxx + fyy) / 2 to the value only
    np.testing.assert_allclose(d[3:], [2.0, 3.0, 4.0], atol=1e-6)
    np.testing.assert_allclose(d[1:3], [2 * 20 + 60, 60 + 80], atol=1e-6)


def test_patch_samples_row_major():
    a = np.arange(100, dtype=float).reshape(10, 10)
    d = describe(Image(a), Point(5, 4), DescriptorParams("patch", radius=1))
    np.testing.assert_array_equal(d.values, a[3:6, 4:7].ravel())


def test_patch_normalisation_is_zscore():
    a = np.arange(100, dtype=float).reshape(10, 10) ** 1.5
    d = describe(Image(a), Point(5, 5), DescriptorParams("patch", radius=2, normalize=True)).values
    raw = a[3:8, 3:8].ravel()
    np.testing.assert_allclose(d, (raw - raw.mean()) / raw.std())


def test_margin_error():
    img = Image(np.ones((20, 20)))
    with pytest.raises(MarginError):
        describe(img, Point(1, 10), DescriptorParams("patch", radius=3))
    with pytest.raises(MarginError):
        describe(img, Point(10, 18.5), DescriptorParams("njet", sigma=1.0))


def test_params_validated():
    with pytest.raises(ParameterError):
        DescriptorParams("njet", order=5)
    with pytest.raises(ParameterError):
        DescriptorParams("patch", radius=33)
    with pytest.raises(ParameterError):
        DescriptorParams("sift")


def test_distance_examples():
    assert distance(vec(1, 2, 3), vec(1, 2, 3)) == 0.0
    assert distance(vec(0, 0), vec(3, 4)) == 5.0
    with pytest.raises(IncompatibleDescriptorError):
        distance(vec(0, 0), vec(0, 0, 0))
    with pytest.raises(IncompatibleDescriptorError):
        distance(vec(0, 0), vec(0, 0, did="other"))


def test_descriptor_rejects_nonfinite():
    with pytest.raises(ParameterError):
        vec(1.0, np.inf)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=12))
def test_metric_axioms(v):
    a, b, c = (vec(*v[i : i + 4]) for i in (0, 4, 8))
    ab, ba = distance(a, b), distance(b, a)
    assert ab >= 0 and ab == ba
    assert distance(a, a) == 0.0
    assert distance(a, c) <= ab + distance(b, c) + 1e-9
    if ab == 0.0:
        np.testing.assert_array_equal(a.values, b.values)


def test_field_matches_single_point_path(blobs):
    p = DescriptorParams("njet", sigma=2.0, order=2)
    xy = np.array([[30.2, 40.7], [64.0, 64.0], [90.5, 33.3]])
    many = describe_points(blobs, xy, p)
    for (x, y), d in zip(xy, many):
        np.testing.assert_array_equal(describe(blobs, Point(x, y), p).values, d.values)


def test_njet_value_matches_scipy_smoothing(blobs):
    p = DescriptorParams("njet", sigma=2.0, order=1)
    d = describe(blobs, Point(50, 60), p).values
    ref = ndimage.gaussian_filter(blobs.data, 2.0, mode="nearest", truncate=3.0)
    assert d[0] == pytest.approx(ref[60, 50], abs=1e-9)


# --- continuity ---

@pytest.fixture(scope="module")
def blob_points(blobs):
    return detect_log_extrema(blobs, DetectorParams(2.0, 2.0))


def test_zero_displacement_distance_is_zero(blobs, blob_points):
    for p in (DescriptorParams("njet", sigma=2.0), DescriptorParams("patch", radius=3)):
        prof = continuity_profile(blobs, Transform.identity(), p, blob_points)
        assert prof.zero_quantile == 0.0
        assert continuity_modulus(blobs, Transform.identity(), p, blob_points, 1e18) == DEFAULT_RADII[-1]


def test_infinite_epsilon_gives_largest_radius(blobs, blob_points):
    t = Transform.similarity(1.05, 0.1, 2.0, -3.0, center=(64, 64))
    p = DescriptorParams("njet", sigma=2.0)
    assert continuity_modulus(blobs, t, p, blob_points, 1e18) == 8.0


def test_modulus_uses_contiguous_prefix(blobs, blob_points):
    t = Transform.similarity(0.95, -0.2, 1.0, 4.0, center=(64, 64))
    p = DescriptorParams("njet", sigma=2.0)
    prof = continuity_profile(blobs, t, p, blob_points)
    for eps in (8.0, 16.0, 32.0, 64.0):
        delta = prof.modulus(eps)
        below = [r for r, q in zip(prof.radii, prof.quantiles) if r <= delta]
        assert all(q < eps for q in [prof.zero_quantile] + [prof.quantiles[prof.radii.index(r)] for r in below])
        nxt = [q for r, q in zip(prof.radii, prof.quantiles) if r > delta]
        if nxt and prof.zero_quantile < eps:
            assert not nxt[0] < eps


def test_modulus_zero_epsilon():
    img = Image(np.full((30, 30), 10.0))
    pts = np.array([[15.0, 15.0]])
    assert continuity_modulus(img, Transform.identity(), DescriptorParams("patch", radius=2), pts, 0.0) == 0.0


def test_modulus_needs_points(blobs):
    with pytest.raises(ParameterError):
        continuity_modulus(blobs, Transform.identity(), DescriptorParams(), np.zeros((0, 2)), 1.0)


@pytest.mark.parametrize("p", [DescriptorParams("njet", sigma=2.0, order=2), DescriptorParams("patch", radius=3)])
def test_modulus_monotone_in_epsilon(blobs, blob_points, p):
    t = Transform.similarity(1.03, 0.15, -2.0, 1.5, center=(64, 64))
    deltas = [continuity_modulus(blobs, t, p, blob_points, eps) for eps in (1, 2, 4, 8, 16, 32, 64)]
    assert deltas == sorted(deltas)


def test_distance_shrinks_with_displacement(blobs, blob_points):
    prof = continuity_profile(blobs, Transform.identity(), DescriptorParams("njet", sigma=2.0), blob_points)
    q = np.array(prof.quantiles)
    assert q[0] < q[len(q) // 2] and q[0] < 0.3 * q[-1]


def test_field_marks_out_of_margin_rows(blobs):
    f = DescriptorField(blobs, DescriptorParams("patch", radius=3))
    vals, ok = f.sample([[1.0, 1.0], [60.0, 60.0]])
    assert ok.tolist() == [False, True]
    assert not vals[0].any()
