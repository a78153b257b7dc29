import numpy as np
import pytest

from petkin import (
    FitConfig,
    InputFunctionModel,
    KineticParams,
    NoiseModel,
    OrganRegion,
    PhantomSpec,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    fit_voxelwise,
    model_tac,
    synth_input,
)


class TestInputFunctionModel:
    def test_zero_before_delay(self, schedule):
        m = default_input_model()
        aif = synth_input(m, schedule)
        assert np.all(aif.values[aif.times_s < m.t0_s] == 0.0)

    def test_all_zero_coefficients(self, schedule):
        m = InputFunctionModel(a1=0.0, a2=0.0, a3=0.0)
        aif = synth_input(m, schedule)
        assert np.all(aif.values == 0.0)

    def test_default_is_bounded_and_peaks_early(self, schedule):
        aif = synth_input(default_input_model(), schedule)
        area = aif.integral(schedule.end_time)
        assert np.isfinite(area) and area > 0
        assert aif.times_s[np.argmax(aif.values)] < 120.0

    def test_negative_curve_rejected_at_construction(self):
        # a fast-dying positive term leaves the bolus term negative
        with pytest.raises(ValueError):
            InputFunctionModel(a1=1000.0, a2=50000.0, a3=0.0, l2=10.0)

    def test_nonnegative_everywhere(self, schedule):
        aif = synth_input(default_input_model(), schedule)
        assert np.all(aif.values >= 0.0)


class TestBuildPhantom:
    def test_single_organ_voxels_equal_model_tac(self, aif, schedule):
        region = OrganRegion(1, "blob", "box", (1.0, 2.0, 2.0),
                             (1.0, 2.0, 2.0), KineticParams(0.6, 0.8, 0.05, 0.05))
        spec = PhantomSpec(dims=(2, 4, 4), organs=(region,),
                           noise=NoiseModel("none", 0.05), seed=0)
        vol, labels, truth = build_phantom(spec, aif, schedule)
        want = model_tac(KineticParams(0.6, 0.8, 0.05, 0.05), aif,
                         schedule).astype(np.float32)
        inside = labels.labels != 0
        assert inside.sum() > 0
        for tac in vol.data[:, inside].T:
            assert np.array_equal(tac, want)

    def test_default_uses_liver_reference_row(self):
        spec = default_phantom_spec()
        liver = [o for o in spec.organs if o.name == "liver"][0]
        assert liver.params == KineticParams(0.611, 0.793, 0.014, 0.005)

    def test_seeded_runs_bitwise_identical(self, aif, schedule):
        spec = default_phantom_spec(noise=NoiseModel("gaussian-fraction", 0.05),
                                    seed=11)
        a, _, _ = build_phantom(spec, aif, schedule)
        b, _, _ = build_phantom(spec, aif, schedule)
        assert np.array_equal(a.data, b.data)

    def test_different_seeds_differ(self, aif, schedule):
        s1 = default_phantom_spec(noise=NoiseModel("gaussian-fraction", 0.05),
                                  seed=1)
        s2 = default_phantom_spec(noise=NoiseModel("gaussian-fraction", 0.05),
                                  seed=2)
        a, _, _ = build_phantom(s1, aif, schedule)
        b, _, _ = build_phantom(s2, aif, schedule)
        assert not np.array_equal(a.data, b.data)

    def test_overlap_rejected(self, aif, schedule):
        p = KineticParams(0.5, 0.5, 0.1, 0.0)
        r1 = OrganRegion(1, "a", "box", (1, 2, 2), (1, 2, 2), p)
        r2 = OrganRegion(2, "b", "box", (1, 2, 3), (1, 2, 2), p)
        spec = PhantomSpec(dims=(2, 4, 6), organs=(r1, r2),
                           noise=NoiseModel("none", 0.05))
        with pytest.raises(ValueError, match="overlap"):
            build_phantom(spec, aif, schedule)

    def test_alignment_and_background(self, aif, schedule):
        spec = default_phantom_spec()
        vol, labels, truth = build_phantom(spec, aif, schedule)
        outside = labels.labels == 0
        assert np.all(vol.data[:, outside] == 0.0)
        assert np.all(truth.data[:, outside] == 0.0)
        inside = labels.labels != 0
        assert np.all(truth.channel("k1")[inside] > 0.0)

    def test_noise_scaling_matches_configured_level(self, aif, schedule):
        noise = NoiseModel("gaussian-fraction", 0.05)
        spec = default_phantom_spec(noise=noise, seed=3)
        clean_spec = default_phantom_spec()
        noisy, labels, _ = build_phantom(spec, aif, schedule)
        clean, _, _ = build_phantom(clean_spec, aif, schedule)
        lung_mask = labels.labels == labels.label_of("lungs")
        assert lung_mask.sum() >= 1000
        resid = (noisy.data[:, lung_mask] - clean.data[:, lung_mask]).astype(np.float64)
        emp = resid.std(axis=1)
        pred = noise.frame_sigma(clean.data[:, lung_mask][:, 0].astype(np.float64),
                                 schedule.durations)
        ratio = emp[pred > 0] / pred[pred > 0]
        assert np.all(np.abs(ratio - 1.0) < 0.05)

    def test_poisson_noise_nonnegative_and_seeded(self, aif, schedule):
        spec = default_phantom_spec(noise=NoiseModel("scaled-poisson", 0.05),
                                    seed=5)
        a, _, _ = build_phantom(spec, aif, schedule)
        b, _, _ = build_phantom(spec, aif, schedule)
        assert np.array_equal(a.data, b.data)
        assert a.data.min() >= 0.0

    def test_ground_truth_fidelity_noiseless(self, aif, schedule):
        # a small two-organ phantom; voxelwise fits must recover the presets
        p1 = KineticParams(0.611, 0.793, 0.014, 0.005)
        p2 = KineticParams(0.116, 0.683, 0.022, 0.098)
        spec = PhantomSpec(
            dims=(1, 4, 8),
            organs=(OrganRegion(1, "a", "box", (0, 2, 2), (1, 2, 2), p1),
                    OrganRegion(2, "b", "box", (0, 2, 6), (1, 2, 2), p2)),
            noise=NoiseModel("none", 0.05))
        vol, labels, truth = build_phantom(spec, aif, schedule)
        pv = fit_voxelwise(vol, aif, FitConfig(), mask=labels)
        for lab, true in ((1, p1), (2, p2)):
            sel = labels.labels == lab
            k1 = pv.channel("k1")[sel].mean()
            assert abs(k1 - true.k1) / true.k1 < 0.02
