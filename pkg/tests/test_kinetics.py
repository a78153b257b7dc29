import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from petkin import (
    DomainError,
    ForwardModel,
    FrameSchedule,
    InputFunction,
    KineticParams,
    ParamBounds,
    frame_average,
    impulse_response,
    model_tac,
    multi_clamp,
    net_influx,
    ode_tac,
    wb_fdg_schedule,
)
from petkin.metrics import normalized_max_deviation


class TestKineticParams:
    def test_valid(self):
        p = KineticParams(0.5, 0.3, 0.02, 0.1)
        assert np.allclose(p.as_array(), [0.5, 0.3, 0.02, 0.1])

    @pytest.mark.parametrize("bad", [(-0.1, 1, 1, 0), (1, -1, 1, 0),
                                     (1, 1, -1, 0), (1, 1, 1, -0.01),
                                     (1, 1, 1, 1.01)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            KineticParams(*bad)

    def test_array_round_trip(self):
        p = KineticParams(0.1, 0.2, 0.3, 0.4)
        assert KineticParams.from_array(p.as_array()) == p


class TestParamBounds:
    def test_clamp_box_values(self):
        box = ParamBounds.clamp_box()
        assert np.allclose(box.lower, [0.01, 0.01, 0.01, 0.0])
        assert np.allclose(box.upper, [2.0, 3.0, 1.0, 1.0])

    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            ParamBounds(np.array([1.0, 0, 0, 0]), np.array([0.5, 1, 1, 1]))

    def test_nonnegative_allows_inf(self):
        b = ParamBounds.nonnegative()
        assert np.all(np.isinf(b.upper[:3])) and b.upper[3] == 1.0


class TestMultiClamp:
    def test_clamps_at_stated_bounds(self):
        out = multi_clamp([5.0, -1.0, 0.5, 2.0])
        assert np.allclose(out, [2.0, 0.01, 0.5, 1.0])

    def test_identity_inside(self):
        x = np.array([0.5, 0.7, 0.3, 0.4])
        assert np.array_equal(multi_clamp(x), x)

    def test_array_input(self):
        arr = np.full((3, 2, 4), 10.0)
        out = multi_clamp(arr)
        assert out.shape == arr.shape
        assert np.allclose(out[..., 0], 2.0) and np.allclose(out[..., 1], 3.0)

    @given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=4, max_size=4))
    def test_idempotent(self, raw):
        once = multi_clamp(raw)
        assert np.array_equal(multi_clamp(once), once)

    @given(st.lists(st.floats(-50, 50), min_size=4, max_size=4),
           st.lists(st.floats(-50, 50), min_size=4, max_size=4))
    def test_non_expansive(self, x, y):
        cx, cy = multi_clamp(x), multi_clamp(y)
        assert np.all(np.abs(cx - cy) <= np.abs(np.asarray(x) - np.asarray(y)) + 1e-12)

    def test_output_satisfies_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = KineticParams(*multi_clamp(rng.normal(0, 5, size=4)))
            assert p.k2 + p.k3 >= 0.02


class TestFrameSchedule:
    def test_reference_protocol(self):
        s = wb_fdg_schedule()
        assert s.n_frames == 62
        assert s.end_time == 3900.0
        assert s.starts[0] == 0.0
        assert np.all(s.durations > 0)

    def test_contiguity_required(self):
        with pytest.raises(ValueError):
            FrameSchedule(np.array([0.0, 15.0]), np.array([10.0, 10.0]))
        with pytest.raises(ValueError):
            FrameSchedule(np.array([5.0, 15.0]), np.array([10.0, 10.0]))
        with pytest.raises(ValueError):
            FrameSchedule(np.array([0.0, 10.0]), np.array([10.0, -1.0]))

    def test_mid_times_and_boundaries(self):
        s = FrameSchedule.from_durations([10.0, 30.0])
        assert np.allclose(s.mid_times, [5.0, 25.0])
        assert np.allclose(s.boundaries, [0.0, 10.0, 40.0])

    def test_head(self):
        s = wb_fdg_schedule()
        h = s.head(10)
        assert h.n_frames == 10
        assert np.array_equal(h.starts, s.starts[:10])


class TestInputFunction:
    def test_validation(self):
        with pytest.raises(ValueError):
            InputFunction([0.0, 0.0], [1.0, 1.0])     # non-increasing
        with pytest.raises(ValueError):
            InputFunction([0.0, 1.0], [1.0, -1.0])    # negative
        with pytest.raises(ValueError):
            InputFunction([0.0], [1.0])               # too short

    def test_zero_before_first_sample(self):
        f = InputFunction([10.0, 20.0], [5.0, 7.0])
        assert f(0.0) == 0.0 and f(9.999) == 0.0
        assert f(10.0) == 5.0
        assert f(25.0) == 7.0  # constant extension

    def test_integral_matches_dense_quadrature(self):
        rng = np.random.default_rng(0)
        t = np.sort(rng.uniform(0, 100, 40))
        v = rng.uniform(0, 10, 40)
        f = InputFunction(t, v)
        dense = np.linspace(0, 120, 2_000_001)
        ref = np.concatenate(([0.0], np.cumsum(
            0.5 * (f(dense)[1:] + f(dense)[:-1]) * np.diff(dense))))
        for q in [0.0, 15.3, 47.0, 99.9, 110.0]:
            want = np.interp(q, dense, ref)
            assert f.integral(q) == pytest.approx(want, abs=1e-3, rel=1e-6)


class TestImpulseResponse:
    def test_starts_at_k1(self, liver):
        assert impulse_response(liver, 0.0) == pytest.approx(liver.k1)

    def test_limit_is_net_influx(self, liver):
        assert impulse_response(liver, 1e9) == pytest.approx(net_influx(liver))

    def test_liver_asymptote_value(self, liver):
        # 0.611 * 0.014 / (0.793 + 0.014) evaluated to full precision
        assert net_influx(liver) == pytest.approx(0.0106, abs=5e-6)
        assert net_influx(liver) == pytest.approx(0.010599752168525402, rel=1e-12)

    def test_monotone_and_bounded_below(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0, 120, 4000)
        for _ in range(25):
            p = KineticParams(*multi_clamp(rng.normal(0.5, 1.0, size=4)))
            h = impulse_response(p, t)
            assert np.all(np.diff(h) <= 1e-15)
            assert np.all(h >= net_influx(p) - 1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            impulse_response(KineticParams(1.0, 0.0, 0.0, 0.0), 1.0)
        with pytest.raises(DomainError):
            impulse_response(KineticParams(1, 1, 1, 0), -0.5)


class TestNetInflux:
    def test_no_trapping(self):
        assert net_influx(KineticParams(0.7, 0.5, 0.0, 0.0)) == 0.0

    def test_all_trapped(self):
        assert net_influx(KineticParams(0.7, 0.0, 0.3, 0.0)) == pytest.approx(0.7)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            net_influx(KineticParams(1.0, 0.0, 0.0, 0.0))


class TestModelTac:
    def test_vb_one_is_frame_averaged_input(self, aif, schedule):
        tac = model_tac(KineticParams(0.9, 1.1, 0.4, 1.0), aif, schedule)
        assert np.array_equal(tac, frame_average(aif, schedule))

    def test_zero_uptake_zero_blood(self, aif, schedule):
        tac = model_tac(KineticParams(0.0, 0.3, 0.2, 0.0), aif, schedule)
        assert np.all(tac == 0.0)

    def test_liver_matches_ode_oracle(self, aif, schedule, liver):
        m = model_tac(liver, aif, schedule)
        o = ode_tac(liver, aif, schedule)
        assert normalized_max_deviation(m, o) < 1e-4

    def test_linear_in_k1_at_vb_zero(self, model):
        # exact up to floating-point rounding (k1 enters as one multiplier)
        base = model.tac(KineticParams(0.3, 0.9, 0.1, 0.0))
        scaled = model.tac(KineticParams(0.9, 0.9, 0.1, 0.0))
        assert np.allclose(scaled, 3.0 * base, rtol=5e-15, atol=0)

    def test_prefix_schedule_consistency(self, aif, schedule, liver):
        # the first k frames do not depend on the frames that follow
        full = model_tac(liver, aif, schedule)
        for k in (1, 17, 40):
            head = model_tac(liver, aif, schedule.head(k))
            assert np.array_equal(head, full[:k])

    def test_domain_errors(self, aif, schedule):
        with pytest.raises(DomainError):
            model_tac(KineticParams(0.5, 0.0, 0.0, 0.5), aif, schedule)
        short = InputFunction([0.0, 100.0], [0.0, 50.0])
        with pytest.raises(DomainError):
            model_tac(KineticParams(0.5, 0.5, 0.1, 0.0), short, schedule)

    def test_odd_fine_step_still_matches_oracle(self, schedule, lungs):
        # 0.7 s does not divide the frame edges: exercises the partial-segment
        # boundary path. Sample the input on the same 0.7 s grid so both
        # paths see the identical piecewise-linear curve.
        from petkin import default_input_model, synth_input
        aif07 = synth_input(default_input_model(), schedule, fine_step_s=0.7)
        m = model_tac(lungs, aif07, schedule, fine_step_s=0.7)
        o = ode_tac(lungs, aif07, schedule)
        assert normalized_max_deviation(m, o) < 1e-4


class TestForwardModel:
    def test_batch_matches_single(self, model):
        rng = np.random.default_rng(7)
        rows = multi_clamp(rng.normal(0.5, 1.0, size=(20, 4)))
        batch = model.batch_tac(rows)
        for i in range(rows.shape[0]):
            single = model.tac(KineticParams(*rows[i]))
            assert np.array_equal(batch[i], single)

    def test_jacobian_value_consistency(self, model):
        x = np.array([0.6, 0.8, 0.05, 0.2])
        tac, _ = model.tac_and_jacobian(x)
        assert np.allclose(tac, model.tac_array(x), rtol=1e-12, atol=0)

    def test_jacobian_matches_central_differences(self, model):
        rng = np.random.default_rng(11)
        for _ in range(15):
            x = multi_clamp(rng.normal(0.5, 1.0, size=4))
            _, jac = model.tac_and_jacobian(x)
            for k in range(4):
                h = 1e-6 * max(1.0, abs(x[k]))
                xp, xm = x.copy(), x.copy()
                xp[k] += h
                xm[k] -= h
                fd = (model.tac_array(xp) - model.tac_array(xm)) / (2 * h)
                scale = np.max(np.abs(jac[:, k])) + 1e-12
                assert np.max(np.abs(jac[:, k] - fd)) / scale < 1e-6

    def test_tiny_rate_sum_continuous(self, model):
        # value path switches to the s -> 0 limit below 1e-8; the exact
        # formula just above the threshold must agree with the limit
        limit = model.tac_array(np.array([0.5, 0.0, 0.0, 0.1]))
        exact = model.tac_array(np.array([0.5, 6e-9, 6e-9, 0.1]))
        assert np.allclose(limit, exact, rtol=1e-5)
