import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from depthfill.metrics import (
    UndefinedMetricError,
    absolute_error_sum,
    accuracy,
    average_invalid,
    corrected_pixels,
    invalid_count,
    pooled_accuracy,
    summary_json,
    write_per_image_csv,
)
from depthfill.raster import DisparityRaster

from conftest import random_raster
from oracles import loop_abs_error, loop_accuracy, loop_average_invalid, loop_corrected, loop_invalid


def R(rows):
    return DisparityRaster(np.array(rows))


def test_absolute_error_examples():
    a = R([[10, 0], [3, 4]])
    assert absolute_error_sum(a, a) == 0
    assert absolute_error_sum(R([[8]]), R([[10]])) == 2
    assert absolute_error_sum(R([[8, 5]]), R([[10, 0]])) == 7


def test_absolute_error_is_exact_for_large_codes():
    big = DisparityRaster(np.full((300, 300), 65535))
    zero = DisparityRaster(np.zeros((300, 300), dtype=int))
    assert absolute_error_sum(zero, big) == 65535 * 90000


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        absolute_error_sum(R([[1, 2]]), R([[1], [2]]))


def test_accuracy_examples():
    x = R([[10, 20]])
    assert accuracy(x, x).accuracy_pct == 100.0
    s = accuracy(R([[8]]), R([[10]]))
    assert s.error_ratio_pct == pytest.approx(20.0)
    assert s.accuracy_pct == pytest.approx(80.0)
    with pytest.raises(UndefinedMetricError):
        accuracy(R([[3, 4]]), R([[0, 0]]))


def test_masked_accuracy_ignores_target_holes():
    target = R([[10, 0]])
    pred = R([[10, 500]])
    assert accuracy(pred, target).accuracy_pct < 0
    assert accuracy(pred, target, masked=True).accuracy_pct == 100.0


def test_invalid_count_examples():
    assert invalid_count(DisparityRaster(np.zeros((4, 4), dtype=int))) == 16
    assert invalid_count(R([[1, 2], [3, 4]])) == 0
    assert invalid_count(R([[0, 5], [0, 9]])) == 2


def test_average_invalid_examples():
    a = R([[0, 0, 0, 1, 1, 1, 1, 1]])
    b = R([[0, 0, 0, 0, 0, 1, 1, 1]])
    assert average_invalid([a, b]).average_invalid == 4
    full = R([[1, 2], [3, 4]])
    assert average_invalid([full, full, full]).average_invalid == 0
    with pytest.raises(ValueError):
        average_invalid([])


def test_average_invalid_full_resolution_fraction():
    codes = np.ones(2048 * 1024, dtype=np.uint16)
    codes[:1_206_898] = 0
    stats = average_invalid([DisparityRaster(codes.reshape(1024, 2048))])
    assert stats.average_invalid == 1_206_898
    assert stats.invalid_fraction_pct == pytest.approx(57.55, abs=0.005)


def test_corrected_pixels_examples():
    before = [R([[0, 0, 0, 5]])]
    assert corrected_pixels(before, [R([[7, 1, 9, 5]])]).corrected_pct == 100.0
    assert corrected_pixels(before, before).corrected_pct == 0.0
    s = corrected_pixels(before, [R([[7, 0, 9, 5]])])
    assert s.average_corrected == 2
    assert s.average_invalid == 3
    assert s.corrected_pct == pytest.approx(66.6667, abs=1e-3)
    with pytest.raises(UndefinedMetricError):
        corrected_pixels([R([[1, 2]])], [R([[1, 2]])])


def test_corrected_ignores_pixels_valid_before():
    before = [R([[4, 0]])]
    after = [R([[9, 0]])]
    assert corrected_pixels(before, after).average_corrected == 0


def test_pooled_accuracy_sums_across_images():
    s = pooled_accuracy([R([[8]]), R([[30]])], [R([[10]]), R([[30]])])
    assert s.absolute_error_sum == 2 and s.target_sum == 40
    assert s.accuracy_pct == pytest.approx(95.0)


codes_8x8 = arrays(np.int64, (8, 8), elements=st.one_of(st.just(0), st.integers(1, 65535)))


@settings(max_examples=60, deadline=None)
@given(codes_8x8, codes_8x8, codes_8x8)
def test_triangle_inequality(a, b, c):
    a, b, c = DisparityRaster(a), DisparityRaster(b), DisparityRaster(c)
    assert absolute_error_sum(a, c) <= absolute_error_sum(a, b) + absolute_error_sum(b, c)


@settings(max_examples=60, deadline=None)
@given(codes_8x8)
def test_self_accuracy_is_100(x):
    r = DisparityRaster(x)
    if r.codes.sum() == 0:
        return
    assert accuracy(r, r).accuracy_pct == 100.0


@settings(max_examples=30, deadline=None)
@given(codes_8x8, st.integers(1, 5))
def test_identical_dataset_average_equals_single_count(x, n):
    r = DisparityRaster(x)
    assert average_invalid([r] * n).average_invalid == invalid_count(r)


def test_metrics_match_nested_loop_oracle(rng):
    for _ in range(200):
        a, b = random_raster(rng), random_raster(rng)
        assert absolute_error_sum(a, b) == loop_abs_error(a, b)
        assert invalid_count(a) == loop_invalid(a)
        if b.codes.sum():
            s = accuracy(a, b)
            err, tot, ratio, acc = loop_accuracy(a, b)
            assert (s.absolute_error_sum, s.target_sum) == (err, tot)
            assert s.error_ratio_pct == ratio and s.accuracy_pct == acc
        st_ = average_invalid([a, b])
        assert (st_.average_invalid, st_.invalid_fraction_pct) == loop_average_invalid([a, b])
        if invalid_count(a):
            c = corrected_pixels([a], [b])
            assert (c.average_corrected, c.average_invalid, c.corrected_pct) == loop_corrected([a], [b])


def test_serialisation(tmp_path):
    s = accuracy(R([[8]]), R([[10]]))
    d = json.loads(summary_json(s, image_id="x"))
    assert d["accuracy_pct"] == pytest.approx(80.0) and d["image_id"] == "x"
    write_per_image_csv(tmp_path / "s.csv", ["a", "b"], [3, 5], [1, 2])
    assert (tmp_path / "s.csv").read_text() == "image_id,invalid_count,corrected_count\na,3,1\nb,5,2\n"
