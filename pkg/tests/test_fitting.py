import numpy as np
import pytest

from petkin import (
    DynamicVolume,
    FitConfig,
    InputFunction,
    KineticParams,
    LabelMap,
    ParamBounds,
    fit_tac,
    fit_voi,
    fit_voxelwise,
)
from petkin.fitting import PAPER_INITIAL


def random_truths(n, seed=20260810, vb_max=0.5, s_min=0.05):
    """Acceptance-style draws from the clamp box."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        k1 = rng.uniform(0.01, 2.0)
        k2 = rng.uniform(0.01, 3.0)
        k3 = rng.uniform(0.01, 1.0)
        vb = rng.uniform(0.0, vb_max)
        if k2 + k3 >= s_min:
            out.append(KineticParams(k1, k2, k3, vb))
    return out


def recovered(true, est, tol=(0.01, 0.01, 0.05, 0.01)):
    return (abs(est.k1 - true.k1) / true.k1 <= tol[0]
            and abs(est.k2 - true.k2) / true.k2 <= tol[1]
            and abs(est.k3 - true.k3) / true.k3 <= tol[2]
            and abs(est.vb - true.vb) <= tol[3])


class TestFitConfig:
    def test_defaults_follow_curve_fit_protocol(self):
        cfg = FitConfig()
        assert cfg.initial == KineticParams(0.1, 0.1, 0.01, 0.01)
        assert np.all(cfg.bounds.lower == 0.0)
        assert np.all(np.isinf(cfg.bounds.upper[:3]))
        assert cfg.jacobian == "analytic"

    def test_initial_must_be_feasible(self):
        with pytest.raises(ValueError):
            FitConfig(initial=KineticParams(0.0, 0.0, 0.0, 0.0),
                      bounds=ParamBounds.clamp_box())

    def test_bad_values(self):
        with pytest.raises(ValueError):
            FitConfig(step_tol=0.0)
        with pytest.raises(ValueError):
            FitConfig(jacobian="magic")
        with pytest.raises(ValueError):
            FitConfig(engine="adam")


class TestFitTac:
    def test_recovers_reference_example(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        res = fit_tac(model.tac(true), aif, schedule, model=model)
        assert res.converged
        assert recovered(true, res.params)

    def test_zero_tac_zero_input(self, schedule):
        zero_aif = InputFunction(np.arange(0.0, 3901.0), np.zeros(3901))
        res = fit_tac(np.zeros(62), zero_aif, schedule)
        assert res.degenerate and res.converged and res.cost == 0.0
        assert res.params == PAPER_INITIAL  # initial-point projection

    def test_zero_tac_nonzero_input(self, aif, schedule):
        res = fit_tac(np.zeros(62), aif, schedule)
        assert res.converged and res.cost == 0.0 and res.degenerate
        assert res.params.k1 == 0.0 and res.params.vb == 0.0

    def test_zero_tac_clamp_box_runs_optimizer(self, aif, schedule):
        res = fit_tac(np.zeros(62), aif, schedule, FitConfig.clamp_box())
        assert res.cost > 0.0  # the box keeps k1 >= 0.01, no exact zero
        assert res.params.k1 == pytest.approx(0.01, abs=1e-6)

    def test_deterministic(self, model, aif, schedule):
        tac = model.tac(KineticParams(0.4, 1.2, 0.3, 0.2))
        tac = tac + np.sin(np.arange(62)) * 50.0  # fixed pseudo-noise
        a = fit_tac(tac, aif, schedule, model=model)
        b = fit_tac(tac, aif, schedule, model=model)
        assert np.array_equal(a.as_array(), b.as_array())
        assert a.cost == b.cost and a.iterations == b.iterations

    def test_engines_agree(self, model, aif, schedule):
        for true in random_truths(5, seed=5):
            tac = model.tac(true)
            lm = fit_tac(tac, aif, schedule, FitConfig(), model=model)
            trf = fit_tac(tac, aif, schedule, FitConfig(engine="trf"),
                          model=model)
            assert np.allclose(lm.as_array(), trf.as_array(),
                               rtol=1e-3, atol=1e-5)

    def test_fd_jacobian_agrees(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        tac = model.tac(true)
        fd = fit_tac(tac, aif, schedule,
                     FitConfig(jacobian="finite-difference"), model=model)
        assert recovered(true, fd.params)

    def test_bound_feasibility_with_noise(self, model, aif, schedule):
        rng = np.random.default_rng(99)
        box = ParamBounds.clamp_box()
        cfg = FitConfig.clamp_box()
        for true in random_truths(10, seed=42):
            tac = model.tac(true)
            noisy = tac + rng.normal(0, 0.1 * np.abs(tac).max(), size=tac.size)
            res = fit_tac(noisy, aif, schedule, cfg, model=model)
            assert box.contains(res.as_array())

    def test_at_bound_flag(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.0)  # vb exactly at the bound
        res = fit_tac(model.tac(true), aif, schedule, model=model)
        assert res.at_bounds[3]
        assert res.converged

    def test_optimality_certificate(self, model, aif, schedule):
        cfg = FitConfig()
        for true in random_truths(10, seed=1):
            res = fit_tac(model.tac(true), aif, schedule, cfg, model=model)
            assert res.converged
            if res.status == 1:
                assert res.optimality <= cfg.gradient_tol
            assert res.optimality < 1e-4  # deep convergence on noiseless data

    def test_stderr_present(self, model, aif, schedule):
        rng = np.random.default_rng(4)
        tac = model.tac(KineticParams(0.6, 0.8, 0.05, 0.05))
        noisy = tac + rng.normal(0, 0.02 * tac.max(), size=tac.size)
        res = fit_tac(noisy, aif, schedule, model=model)
        assert res.stderr is not None and res.stderr.shape == (4,)
        assert np.all(res.stderr >= 0)

    def test_length_mismatch(self, aif, schedule):
        with pytest.raises(ValueError):
            fit_tac(np.zeros(30), aif, schedule)

    def test_recovery_rate_quick(self, model, aif, schedule):
        # small version of the acceptance sweep
        truths = random_truths(25, seed=77)
        hits = sum(recovered(t, fit_tac(model.tac(t), aif, schedule,
                                        model=model).params)
                   for t in truths)
        assert hits >= 24


def small_volume(model, schedule, params_list, shape):
    rows = np.array([p.as_array() for p in params_list])
    tacs = model.batch_tac(rows)
    n = int(np.prod(shape))
    assign = np.arange(n) % len(params_list)
    data = tacs[assign].T.reshape((schedule.n_frames,) + shape).astype(np.float32)
    return DynamicVolume(data, schedule), assign


class TestFitVoxelwise:
    def test_identical_voxels_identical_params(self, model, aif, schedule):
        vol, _ = small_volume(model, schedule,
                              [KineticParams(0.6, 0.8, 0.05, 0.05)], (1, 1, 2))
        pv = fit_voxelwise(vol, aif)
        assert np.array_equal(pv.data[:, 0, 0, 0], pv.data[:, 0, 0, 1])

    def test_matches_fit_tac(self, model, aif, schedule):
        params = [KineticParams(0.6, 0.8, 0.05, 0.05),
                  KineticParams(0.2, 1.5, 0.3, 0.4)]
        vol, assign = small_volume(model, schedule, params, (1, 2, 3))
        pv = fit_voxelwise(vol, aif)
        flat = pv.param_matrix()
        for v in range(6):
            tac = vol.data.reshape(62, -1)[:, v].astype(np.float64)
            ref = fit_tac(tac, aif, schedule, model=model)
            assert np.array_equal(flat[v],
                                  ref.as_array().astype(np.float32).astype(np.float64))

    def test_mask_and_flag_channel(self, model, aif, schedule):
        vol, _ = small_volume(model, schedule,
                              [KineticParams(0.6, 0.8, 0.05, 0.05)], (1, 2, 2))
        mask = np.zeros((1, 2, 2), dtype=bool)
        mask[0, 0, 0] = True
        pv = fit_voxelwise(vol, aif, mask=mask)
        conv = pv.channel("converged")
        assert conv[0, 0, 0] == 1.0 and conv[0, 1, 1] == 0.0
        assert pv.channel("k1")[0, 1, 1] == 0.0

    def test_mask_shape_checked(self, model, aif, schedule):
        vol, _ = small_volume(model, schedule,
                              [KineticParams(0.6, 0.8, 0.05, 0.05)], (1, 2, 2))
        with pytest.raises(ValueError):
            fit_voxelwise(vol, aif, mask=np.ones((2, 2, 2), dtype=bool))

    def test_trf_parallel_equals_sequential(self, model, aif, schedule):
        # the process-pool fallback path must agree with sequential mode
        params = [KineticParams(0.6, 0.8, 0.05, 0.05),
                  KineticParams(0.2, 1.5, 0.3, 0.4)]
        vol, _ = small_volume(model, schedule, params, (1, 2, 4))
        cfg = FitConfig(engine="trf")
        seq = fit_voxelwise(vol, aif, cfg, workers=1)
        par = fit_voxelwise(vol, aif, cfg, workers=2)
        assert np.array_equal(seq.data, par.data)

    def test_thread_count_invariance(self, model, aif, schedule):
        params = [KineticParams(0.6, 0.8, 0.05, 0.05),
                  KineticParams(0.2, 1.5, 0.3, 0.4)]
        vol, _ = small_volume(model, schedule, params, (1, 4, 4))
        one = fit_voxelwise(vol, aif, workers=1)
        two = fit_voxelwise(vol, aif, workers=2)
        assert np.array_equal(one.data, two.data)


class TestFitVoi:
    def test_voi_of_identical_voxels_matches_single(self, model, aif, schedule):
        true = KineticParams(0.6, 0.8, 0.05, 0.05)
        vol, _ = small_volume(model, schedule, [true], (1, 2, 2))
        labels = LabelMap(np.ones((1, 2, 2), dtype=np.uint8), {1: "roi"})
        voi = fit_voi(vol, labels, 1, aif)
        single = fit_tac(vol.data[:, 0, 0, 0].astype(np.float64), aif, schedule)
        assert np.array_equal(voi.as_array(), single.as_array())

    def test_empty_voi(self, model, aif, schedule):
        vol, _ = small_volume(model, schedule,
                              [KineticParams(0.6, 0.8, 0.05, 0.05)], (1, 2, 2))
        labels = LabelMap(np.ones((1, 2, 2), dtype=np.uint8), {1: "roi"})
        with pytest.raises(ValueError):
            fit_voi(vol, labels, 2, aif)
