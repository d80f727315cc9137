import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbvsde.core import ModelParams, NoiseParams, RunSeed, SimGrid, derive_stream, sample_wiener_increments
from hbvsde.hbv import hbv_rhs, hbv_system
from hbvsde.sde import (
    NegativityPolicy,
    NonFiniteState,
    Scheme,
    SdeSystem,
    em_step,
    euler_step,
    gbm_system,
    integrate,
    integrate_ode,
    milstein_correction,
    milstein_step,
)


def zero_system(dim=2):
    return SdeSystem(dim, lambda u, t: np.zeros_like(u), lambda u, t: np.zeros_like(u),
                     lambda u, t: np.zeros_like(u))


class TestSteps:
    def test_gbm_em_arithmetic(self):
        out = em_step([1.0], 0.0, 0.01, np.array([0.1]), gbm_system(0.05, 0.2))
        assert out[0] == pytest.approx(1.0205, abs=1e-15)

    @pytest.mark.parametrize("dW, em, mil", [(0.1, 1.02, 1.02), (0.2, 1.04, 1.0406)])
    def test_gbm_milstein_arithmetic(self, dW, em, mil):
        sys_ = gbm_system(0.0, 0.2)
        assert em_step([1.0], 0, 0.01, np.array([dW]), sys_)[0] == pytest.approx(em, abs=1e-15)
        assert milstein_step([1.0], 0, 0.01, np.array([dW]), sys_)[0] == pytest.approx(mil, abs=1e-15)

    def test_em_at_infection_free_point(self, default_model):
        mp, noise = default_model
        dW = np.array([0.03, -0.02, 0.01])
        out = em_step(np.array([5.0, 0.0, 0.0]), 0.0, 1e-3, dW, hbv_system(mp, noise))
        assert out[0] == 5.0 + 0.5 * 5.0 * 0.03
        assert out[1] == 0.0 and out[2] == 0.0

    def test_zero_noise_equals_euler(self, default_model):
        mp, _ = default_model
        sys0 = hbv_system(mp, NoiseParams(0, 0, 0))
        u = np.array([4.0, 0.7, 1.3])
        dW = np.array([0.05, -0.3, 0.2])
        eul = euler_step(u, 0.0, 1e-3, lambda v, t: hbv_rhs(v, mp))
        assert np.array_equal(em_step(u, 0.0, 1e-3, dW, sys0), eul)
        assert np.array_equal(milstein_step(u, 0.0, 1e-3, dW, sys0), eul)

    def test_correction_vanishes_when_dw2_equals_dt(self, default_model):
        sys_ = hbv_system(*default_model)
        u = np.array([4.0, 0.7, 1.3])
        dt = 0.0625
        dW = np.array([0.25, -0.25, 0.25])  # dW**2 == dt exactly
        assert np.array_equal(milstein_step(u, 0, dt, dW, sys_), em_step(u, 0, dt, dW, sys_))

    @settings(max_examples=60, deadline=None)
    @given(
        u=st.lists(st.floats(0.01, 100.0), min_size=3, max_size=3),
        dW=st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
    )
    def test_milstein_minus_em_is_correction(self, u, dW):
        sys_ = hbv_system(ModelParams(), NoiseParams())
        u, dW, dt = np.array(u), np.array(dW), 1e-3
        diff = milstein_step(u, 0, dt, dW, sys_) - em_step(u, 0, dt, dW, sys_)
        closed = 0.5 * NoiseParams().as_array() ** 2 * u * (dW ** 2 - dt)
        tol = 1e-12 * np.abs(closed) + 8 * np.spacing(np.abs(u) + 100)
        assert np.all(np.abs(diff - closed) <= tol)

    def test_nonfinite(self):
        blow = SdeSystem(1, lambda u, t: u * np.inf, lambda u, t: u)
        with pytest.raises(NonFiniteState):
            em_step([1.0], 0, 0.1, np.array([0.0]), blow)

    def test_milstein_needs_derivative(self):
        s = SdeSystem(1, lambda u, t: u, lambda u, t: u)
        with pytest.raises(ValueError):
            milstein_correction(np.ones(1), 0, 0.1, np.ones(1), s)


class TestIntegrate:
    def test_single_step(self):
        g = SimGrid(0.0, 0.5, 1)
        tr = integrate(gbm_system(0.05, 0.2), [1.0], g, np.array([[0.1]]))
        assert len(tr) == 2
        assert tr.states[0, 0] == 1.0
        assert tr.states[1, 0] == em_step([1.0], 0, 0.5, np.array([0.1]), gbm_system(0.05, 0.2))[0]

    def test_constant_when_inert(self):
        g = SimGrid(0.0, 1.0, 50)
        inc = np.random.default_rng(0).normal(size=(50, 2))
        tr = integrate(zero_system(), [1.5, -2.0], g, inc, Scheme.MILSTEIN)
        assert np.all(tr.states == np.array([1.5, -2.0]))

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            integrate(zero_system(), [1.0, 1.0], SimGrid(0, 1, 10), np.zeros((9, 2)))

    def test_raw_records_but_keeps_negative(self):
        s = SdeSystem(1, lambda u, t: np.full_like(u, -1.0), lambda u, t: np.zeros_like(u))
        g = SimGrid(0.0, 2.0, 4)
        tr = integrate(s, [1.0], g, np.zeros((4, 1)), policy=NegativityPolicy.RAW)
        assert tr.states[:, 0].tolist() == [1.0, 0.5, 0.0, -0.5, -1.0]
        assert tr.negativity_events == [(3, 0)]

    def test_project_to_zero(self):
        s = SdeSystem(1, lambda u, t: np.full_like(u, -1.0), lambda u, t: np.zeros_like(u))
        g = SimGrid(0.0, 2.0, 4)
        tr = integrate(s, [1.0], g, np.zeros((4, 1)), policy=NegativityPolicy.PROJECT_TO_ZERO)
        assert tr.states[:, 0].tolist() == [1.0, 0.5, 0.0, 0.0, 0.0]
        assert tr.negativity_events == [(3, 0), (4, 0)]

    def test_raw_independent_of_bookkeeping(self, default_model):
        g = SimGrid(0.0, 1.0, 1000)
        inc = sample_wiener_increments(g, derive_stream(RunSeed(2)), 3)
        a = integrate(hbv_system(*default_model), [5, 1, 1], g, inc, policy="raw")
        b = integrate(hbv_system(*default_model), [5, 1, 1], g, inc, policy="project")
        if not a.negativity_events:
            assert np.array_equal(a.states, b.states)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_reports_step(self):
        s = SdeSystem(1, lambda u, t: u * u, lambda u, t: np.zeros_like(u))
        with pytest.raises(NonFiniteState) as exc:
            integrate(s, [10.0], SimGrid(0, 100, 100), np.zeros((100, 1)))
        assert exc.value.step > 1

    def test_stride(self):
        g = SimGrid(0.0, 1.0, 10)
        tr = integrate(zero_system(1), [1.0], g, np.zeros((10, 1)), stride=4)
        assert np.allclose(tr.times, [0.0, 0.4, 0.8, 1.0])


class TestOde:
    def test_constant(self):
        tr = integrate_ode(lambda u, t: np.zeros_like(u), [3.0, 4.0], SimGrid(0, 1, 10))
        assert np.all(tr.states == [3.0, 4.0])

    def test_exponential(self):
        tr = integrate_ode(lambda u, t: -u, [1.0], SimGrid(0.0, 1.0, 1000))
        assert abs(tr.states[-1, 0] - math.exp(-1.0)) < 1e-8

    def test_rk4_fourth_order(self):
        errs = [abs(integrate_ode(lambda u, t: -u, [1.0], SimGrid(0, 1, n)).states[-1, 0] - math.exp(-1))
                for n in (10, 20)]
        assert 14 < errs[0] / errs[1] < 18

    def test_hbv_relaxes_to_infection_free(self, default_model):
        mp, _ = default_model
        tr = integrate_ode(lambda u, t: hbv_rhs(u, mp), [1.0, 0.0, 0.0], SimGrid(0, 5, 5000))
        assert tr.states[-1, 0] == pytest.approx(mp.lam / mp.mu1, rel=1e-12)
        assert tr.states[-1, 1] == 0.0 and tr.states[-1, 2] == 0.0

    def test_euler_option(self):
        tr = integrate_ode(lambda u, t: -u, [1.0], SimGrid(0, 1, 4), method="euler")
        assert tr.states[-1, 0] == pytest.approx(0.75 ** 4)
        assert tr.scheme is Scheme.EULER

    def test_zero_noise_trajectory_matches_euler(self, default_model):
        mp, _ = default_model
        g = SimGrid(0.0, 2.0, 2000)
        inc = sample_wiener_increments(g, derive_stream(RunSeed(8)), 3)
        sys0 = hbv_system(mp, NoiseParams(0, 0, 0))
        det = integrate_ode(lambda u, t: hbv_rhs(u, mp), [5, 1, 1], g, "euler").states
        for scheme in ("em", "milstein"):
            assert np.array_equal(integrate(sys0, [5, 1, 1], g, inc, scheme).states, det)
