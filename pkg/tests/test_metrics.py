import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from petkin import (
    DynamicVolume,
    KineticParams,
    LabelMap,
    ParametricVolume,
    ZeroNormError,
    normalized_max_deviation,
    organ_aggregate,
    per_slice_cs,
    tac_metrics,
)
from petkin.volumes import FIT_CHANNELS


class TestTacMetrics:
    def test_identical_curves(self):
        x = np.array([1.0, 2.0, 3.0])
        m = tac_metrics(x, x)
        assert (m.mse, m.mae, m.cosine_similarity) == (0.0, 0.0, 1.0)

    def test_collinear_scaling(self):
        x = np.array([1.0, 2.0, 3.0])
        m = tac_metrics(x, 2.0 * x)
        assert m.cosine_similarity == pytest.approx(1.0)
        assert m.mae == pytest.approx(np.mean(np.abs(x)))

    def test_orthogonal_supports(self):
        a = np.array([1.0, 0.0, 2.0, 0.0])
        b = np.array([0.0, 3.0, 0.0, 4.0])
        assert tac_metrics(a, b).cosine_similarity == 0.0

    def test_zero_norm_rejected(self):
        with pytest.raises(ZeroNormError):
            tac_metrics(np.zeros(4), np.ones(4))
        with pytest.raises(ZeroNormError):
            tac_metrics(np.ones(4), np.zeros(4))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tac_metrics(np.ones(4), np.ones(5))

    @given(st.floats(1e-3, 1e3))
    def test_cs_scale_invariant(self, c):
        x = np.array([1.0, 5.0, 2.0, 0.5])
        assert tac_metrics(x, c * x).cosine_similarity == pytest.approx(1.0)

    @given(st.lists(st.floats(-10, 10), min_size=5, max_size=5),
           st.lists(st.floats(-10, 10), min_size=5, max_size=5),
           st.lists(st.floats(-10, 10), min_size=5, max_size=5))
    def test_mae_triangle(self, xs, ys, zs):
        x, y, z = map(np.asarray, (xs, ys, zs))
        mae = lambda a, b: float(np.mean(np.abs(a - b)))
        assert mae(x, z) <= mae(x, y) + mae(y, z) + 1e-12


class TestNormalizedMaxDeviation:
    def test_basic(self):
        assert normalized_max_deviation([1.0, 2.0], [1.0, 4.0]) == 0.5

    def test_zero_reference(self):
        assert normalized_max_deviation([0.5, 0.0], [0.0, 0.0]) == 0.5


def two_label_setup():
    labels = np.zeros((1, 2, 4), dtype=np.uint8)
    labels[0, :, :2] = 1
    labels[0, :, 2:] = 2
    lm = LabelMap(labels, {1: "a", 2: "b"})
    data = np.zeros((5, 1, 2, 4), dtype=np.float32)
    data[0][labels == 1] = 0.5   # k1
    data[0][labels == 2] = 1.5
    data[1] += 0.8               # k2 everywhere
    pv = ParametricVolume(data, FIT_CHANNELS)
    return pv, lm


class TestOrganAggregate:
    def test_uniform_region_zero_std(self):
        pv, lm = two_label_setup()
        rep = organ_aggregate(pv, lm)
        assert rep.row("a").std[0] == 0.0
        assert rep.row("b").std[0] == 0.0

    def test_hand_computed_means(self):
        pv, lm = two_label_setup()
        rep = organ_aggregate(pv, lm)
        assert rep.row("a").mean[0] == pytest.approx(0.5)
        assert rep.row("b").mean[0] == pytest.approx(1.5)
        assert rep.row("a").mean[1] == pytest.approx(0.8)
        assert rep.row("a").n_voxels == 4

    def test_constant_field_mean_is_constant(self):
        pv, lm = two_label_setup()
        rep = organ_aggregate(pv, lm)
        for row in rep:
            assert row.mean[1] == pytest.approx(0.8)

    def test_absent_label(self):
        pv, lm = two_label_setup()
        with pytest.raises(ValueError):
            organ_aggregate(pv, lm, labels=[9])

    def test_tac_scores_attached(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        tac = model.tac(true).astype(np.float32)
        data = np.tile(tac[:, None, None, None], (1, 1, 1, 2))
        vol = DynamicVolume(data, schedule)
        labels = LabelMap(np.ones((1, 1, 2), dtype=np.uint8), {1: "roi"})
        pmap = np.zeros((5, 1, 1, 2), dtype=np.float32)
        pmap[:4] = true.as_array().astype(np.float32)[:, None, None, None]
        pmap[4] = 1.0
        pv = ParametricVolume(pmap, FIT_CHANNELS)
        rep = organ_aggregate(pv, labels, vol, aif)
        row = rep.row("roi")
        assert row.tac is not None
        assert row.tac.cosine_similarity > 0.9999
        assert row.tac.mae < 1e-2 * float(np.abs(tac).max())


class TestPerSliceCs:
    def test_perfect_fit_gives_unit_profile(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        tac = model.tac(true).astype(np.float32)
        data = np.tile(tac[:, None, None, None], (1, 3, 2, 2))
        vol = DynamicVolume(data, schedule)
        pmap = np.zeros((5, 3, 2, 2), dtype=np.float32)
        pmap[:4] = true.as_array().astype(np.float32)[:, None, None, None]
        pv = ParametricVolume(pmap, FIT_CHANNELS)
        profile = per_slice_cs(vol, pv, aif)
        assert profile.shape == (3,)
        assert np.all(profile > 0.999999)

    def test_empty_slice_strict_raises(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        tac = model.tac(true).astype(np.float32)
        data = np.zeros((62, 2, 1, 1), dtype=np.float32)
        data[:, 0, 0, 0] = tac
        vol = DynamicVolume(data, schedule)
        pmap = np.zeros((5, 2, 1, 1), dtype=np.float32)
        pmap[:4] = true.as_array().astype(np.float32)[:, None, None, None]
        pv = ParametricVolume(pmap, FIT_CHANNELS)
        with pytest.raises(ZeroNormError):
            per_slice_cs(vol, pv, aif, strict=True)
        profile = per_slice_cs(vol, pv, aif, strict=False)
        assert profile.shape == (2,)
        assert np.isnan(profile[1]) and profile[0] > 0.999999
