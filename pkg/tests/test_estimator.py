import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsiscale.errors import IndexOutOfData, NonContiguousGroup, RangeTooNarrow, TooFewPoints, ZeroVariation
from dsiscale.estimator import (
    HurstEstimate,
    QuadraticVariationTable,
    ScalePartition,
    baseline_hurst,
    estimate,
    estimate_scale,
    hurst_vector,
    merge_groups,
    quadratic_variations,
    resample_series,
    suggest_grouping,
)
from dsiscale.lamperti import SampledPath
from dsiscale.simulator import StudySpec, gen_dsi_study_series, substream

SP_B = [200, 246, 317, 431]
SP_BOUNDS = [0, 6, 12, 19, 26, 33, 41]
DOW_B = [1853, 2225, 2503, 2671]
DOW_BOUNDS = [0, 27, 70, 95, 112]


def one_cell(values):
    return ScalePartition(2.0, (((0, len(values)),), ((0, len(values)),)))


def test_quadratic_variation_examples():
    assert quadratic_variations(np.full(10, 3.0), one_cell(range(10))).ss[0, 0] == 0.0
    alt = np.array([0, 1, 0, 1, 0], dtype=float)
    assert quadratic_variations(alt, one_cell(alt)).ss[0, 0] == 1.0
    x = np.array([0.0, 2.0, 3.0])
    assert quadratic_variations(x, one_cell(x)).ss[0, 0] == 2.5


def test_no_straddling_differences():
    x = np.array([0.0, 1.0, 100.0, 101.0])
    part = ScalePartition(2.0, (((0, 2), (2, 4)), ((0, 2), (2, 4))))
    table = quadratic_variations(x, part)
    assert np.all(table.ss == 1.0)
    assert table.counts.tolist() == [[2, 2], [2, 2]]


def test_too_few_points():
    part = ScalePartition(2.0, (((0, 1),), ((1, 3),)))
    with pytest.raises(TooFewPoints):
        quadratic_variations(np.arange(3.0), part)


def test_cell_outside_series():
    with pytest.raises(IndexOutOfData):
        quadratic_variations(np.arange(3.0), ScalePartition(2.0, (((0, 2),), ((2, 5),))))


def test_hurst_vector_examples():
    h, lam = 0.37, 1.7
    ss = np.array([[lam ** (2 * h * j)] for j in range(4)])
    est = hurst_vector(QuadraticVariationTable(ss, np.full_like(ss, 5)), lam)
    assert est.per_sub[0] == pytest.approx(h, abs=1e-14)
    flat = hurst_vector(QuadraticVariationTable(np.full((3, 2), 7.0), np.full((3, 2), 4)), 2.0)
    assert np.all(flat.per_sub == 0.0)
    col = hurst_vector(QuadraticVariationTable(np.array([[1.0], [4.0], [16.0], [64.0]]), np.full((4, 1), 3)), 4.0)
    np.testing.assert_allclose(col.per_pair[:, 0], [0.5, 0.5, 0.5], rtol=1e-15)
    assert col.per_sub[0] == pytest.approx(0.5, rel=1e-15)


def test_zero_variation_reports_cell():
    ss = np.array([[1.0, 2.0], [3.0, 0.0]])
    with pytest.raises(ZeroVariation) as exc:
        hurst_vector(QuadraticVariationTable(ss, np.full((2, 2), 3)), 2.0)
    assert (exc.value.j, exc.value.i) == (2, 2)


def test_per_sub_is_mean_of_pairs():
    spec = StudySpec((0.3, 0.6, 0.9), points_per_scale=30)
    est = estimate(gen_dsi_study_series(spec, 5), spec.partition())
    np.testing.assert_array_equal(est.per_sub, est.per_pair.mean(axis=0))


def test_baseline_exact_for_common_h():
    spec = StudySpec((0.65,) * 4)
    path = gen_dsi_study_series(spec, deterministic=True)
    assert baseline_hurst(path, spec.partition()) == pytest.approx(0.65, abs=1e-13)


def test_exact_recovery():
    spec = StudySpec((0.2, 0.4, 0.6, 0.8))
    est = estimate(gen_dsi_study_series(spec, deterministic=True), spec.partition())
    np.testing.assert_allclose(est.per_sub, spec.H_vec, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3), st.floats(-1e3, 1e3))
def test_scale_and_shift_invariance(seed, c, shift):
    spec = StudySpec((0.3, 0.7), points_per_scale=20)
    part = spec.partition()
    x = gen_dsi_study_series(spec, seed).values
    base = estimate(x, part)
    scaled = estimate(c * x, part)
    np.testing.assert_allclose(scaled.per_pair, base.per_pair, atol=1e-12)
    assert scaled.baseline == pytest.approx(base.baseline, abs=1e-12)
    # shifts cancel inside differences; exact whenever x + shift is exact
    k = 2.0 ** round(math.log2(abs(shift) + 1))
    shifted = estimate(x + k, part)
    np.testing.assert_allclose(shifted.per_pair, base.per_pair, atol=1e-9)


def test_integer_shift_is_exact():
    x = np.cumsum(substream(3, 0).integers(-5, 6, 400)).astype(float)
    part = StudySpec((0.5,) * 4, points_per_scale=100).partition()
    a, b = estimate(x, part), estimate(x + 1024.0, part)
    assert np.array_equal(a.per_pair, b.per_pair) and a.baseline == b.baseline


def test_merge_singletons_identical():
    spec = StudySpec((0.2, 0.5, 0.6, 0.9))
    part = spec.partition()
    x = gen_dsi_study_series(spec, 12)
    a = estimate(x, part)
    b = merge_groups(x, part, [[1], [2], [3], [4]])
    assert np.array_equal(a.per_pair, b.per_pair) and a.baseline == b.baseline


def test_merge_all_equals_baseline():
    spec = StudySpec((0.2, 0.5, 0.6, 0.9))
    part = spec.partition()
    x = gen_dsi_study_series(spec, 13)
    assert merge_groups(x, part, [[1, 2, 3, 4]]).per_sub[0] == baseline_hurst(x, part)


@pytest.mark.parametrize("grouping", [[[1, 3], [2, 4]], [[2, 1], [3, 4]], [[1, 2], [4]], [[1], [], [2, 3, 4]]])
def test_merge_rejects_bad_grouping(grouping):
    spec = StudySpec((0.2, 0.5, 0.6, 0.9))
    with pytest.raises(NonContiguousGroup):
        merge_groups(gen_dsi_study_series(spec, 1), spec.partition(), grouping)


def test_suggest_grouping():
    assert suggest_grouping([0.24, 0.23, 0.13, 0.24, 0.07, 0.05]) == [[1, 2], [3], [4], [5, 6]]
    assert suggest_grouping([0.5, 0.52, 0.54, 0.9]) == [[1, 2, 3], [4]]


def test_resample_sp500_layout():
    raw = np.arange(1, 1257, dtype=float) ** 1.1
    series, part = resample_series(raw, SP_B, 1.66, range(42), SP_BOUNDS, "forward", index_base=1)
    assert len(series) == 4 * 42
    assert series.times[:3].tolist() == [200.0, 201.0, 202.0]
    assert series.values[0] == raw[199]
    for row in part.counts():
        assert row.tolist() == [6, 6, 7, 7, 7, 9]
    # sample index formula for scale interval 2, offset 6
    assert series.times[42 + 6] == 255.0
    assert part.merged([[1, 2, 3, 4], [5, 6]]).counts()[0].tolist() == [26, 16]


def test_resample_dow_layout():
    raw = np.linspace(1.0, 2.0, 3168)
    series, part = resample_series(raw, DOW_B, 1.493, range(113), DOW_BOUNDS, "backward", index_base=1)
    for row in part.counts():
        assert row.tolist() == [27, 43, 25, 18]
    # the smallest scale interval starts at the last anchor
    a, _ = part.cells[0][0]
    assert series.times[a] == 2671.0
    assert series.times[part.cells[3][0][0]] == 1853.0
    # this layout makes the largest interval end on the next one's first sample
    assert series.times.tolist().count(2225.0) == 1
    assert series.times[part.cells[3][-1][1] - 1] == 2225.0 == series.times[part.cells[2][0][0]]
    assert np.all(np.diff(series.times) > 0)


def test_resample_degenerate_lambda_one():
    raw = np.arange(100, dtype=float)
    series, part = resample_series(raw, [0, 30, 60], 1.0, range(10), [0, 5, 9])
    starts = [series.times[row[0][0]] for row in part.cells]
    assert starts == [0.0, 30.0, 60.0]
    assert np.array_equal(np.diff(series.times[:10]), np.diff(series.times[10:20]))


def test_resample_out_of_data():
    with pytest.raises(IndexOutOfData):
        resample_series(np.arange(300.0), SP_B, 1.66, range(42), SP_BOUNDS, index_base=1)


def test_resampled_estimate_recovers_geometric_scaling():
    # alternating steps of size lam**((j-1) h) on the sampled points of scale interval j
    lam, h = 1.66, 0.3
    series, part = resample_series(np.arange(1.0, 701.0), SP_B, lam, range(42), SP_BOUNDS, index_base=1)
    vals = np.empty(len(series))
    for j, row in enumerate(part.cells):
        a, b = row[0][0], row[-1][1]
        signs = np.where(np.arange(b - a) % 2 == 0, 1.0, -1.0)
        vals[a:b] = np.cumsum(lam ** (j * h) * signs)
    est = estimate(vals, part)
    np.testing.assert_allclose(est.per_sub, h, atol=1e-12)
    assert est.baseline == pytest.approx(h, abs=1e-12)


def test_estimate_json_and_report():
    est = HurstEstimate(np.array([0.24, 0.23]), np.array([[0.2, 0.3], [0.28, 0.16]]), 0.16, 1.66)
    d = json.loads(est.to_json())
    assert set(d) == {"per_sub", "per_pair", "baseline", "lambda_used"}
    back = HurstEstimate.from_dict(d)
    assert np.array_equal(back.per_pair, est.per_pair) and back.baseline == 0.16
    text = est.report()
    assert "H_1" in text and "baseline" in text and "1.66" in text


def test_estimate_scale_deterministic():
    spec = StudySpec((0.2, 0.8, 0.3, 0.7))
    path = gen_dsi_study_series(spec, deterministic=True)
    lam, cands, scores, flat = estimate_scale(path, (1.5, 2.5), 101, origin=1.0)
    assert lam == pytest.approx(2.0, abs=1e-12)
    assert scores[50] < 1e-25 and not flat
    assert cands.size == scores.size == 101


def test_estimate_scale_white_noise_flat():
    # 5000 points per scale: over 100 seeds the largest spread observed was about 0.03
    times = StudySpec((0.5,) * 4, points_per_scale=5000, n_scales=5).times()
    flagged = 0
    for seed in range(100):
        x = substream(seed, 1).standard_normal(times.size)
        *_, flat = estimate_scale(SampledPath(times, x), (1.5, 2.5), 101, origin=1.0)
        flagged += flat
    assert flagged == 100


def test_estimate_scale_study_series():
    spec = StudySpec((0.2, 0.8, 0.3, 0.7), points_per_scale=1000, n_scales=5)
    hits = 0
    for seed in range(100):
        lam, *_ = estimate_scale(gen_dsi_study_series(spec, seed), (1.5, 2.5), 101, origin=1.0)
        hits += 1.9 <= lam <= 2.1
    assert hits >= 90


def test_estimate_scale_errors():
    path = gen_dsi_study_series(StudySpec((0.5,) * 2, points_per_scale=10), 0)
    with pytest.raises(RangeTooNarrow):
        estimate_scale(path, (2.0, 2.0), 5)
    with pytest.raises(ValueError):
        estimate_scale(path, (0.9, 2.0), 5)
    with pytest.raises(RangeTooNarrow):
        estimate_scale(path, (10.0, 20.0), 5, origin=1.0)


def test_mae_decreases_with_points():
    H = np.array([0.25, 0.55, 0.75, 0.4])
    maes = []
    for pts in (80, 160, 320):
        spec = StudySpec(tuple(H), points_per_scale=pts)
        part = spec.partition()
        errs = [np.abs(estimate(gen_dsi_study_series(spec, s), part).per_sub - H).mean() for s in range(200)]
        maes.append(np.mean(errs))
    assert maes[0] > maes[1] > maes[2]
