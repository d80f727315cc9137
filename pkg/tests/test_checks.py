import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbvsde.analysis import ERGODIC, NOT_CONCLUDED, STABLE, check_ergodicity, check_stability
from hbvsde.analysis.checks import stability_matrix, stability_verdict
from hbvsde.core import ModelParams, NoiseParams, SimGrid, StateVec
from hbvsde.sde import Trajectory


class TestStability:
    def test_default_arithmetic(self, default_model):
        r = check_stability(*default_model)
        assert r.gamma_used == 5.0 and r.gamma_source == "default_lam_over_mu1"
        assert r.cond_a_value == pytest.approx(-8.22, abs=1e-12)
        assert r.cond_b_lhs == pytest.approx(48.72, abs=1e-12)
        assert r.cond_b_rhs == pytest.approx(45.0456, abs=1e-12)
        assert r.cond_a_holds and not r.cond_b_holds
        assert r.verdict == NOT_CONCLUDED
        assert any("condition b" in n for n in r.notes)

    def test_symmetric_part_eigenvalues(self, default_model):
        r = check_stability(*default_model)
        m = np.array(r.matrix)
        expect = np.linalg.eigvals(0.5 * (m + m.T))
        np.testing.assert_allclose(sorted(expect), r.sym_eigenvalues, rtol=1e-12)
        assert r.sym_eigenvalues[0] < 0 < r.sym_eigenvalues[1]
        assert not r.negative_definite
        assert r.decay_bound == -0.5 * abs(r.lambda_max)

    @settings(max_examples=50, deadline=None)
    @given(xi=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
           g=st.floats(0.1, 50))
    def test_quadratic_form_sees_only_symmetric_part(self, xi, g):
        m = stability_matrix(ModelParams(), NoiseParams(), g)
        v = np.array(xi)
        assert v @ m @ v == pytest.approx(v @ (0.5 * (m + m.T)) @ v, rel=1e-12, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(s=st.floats(0, 5), ds=st.floats(1e-3, 2))
    def test_cond_a_grows_with_sigma2(self, s, ds):
        lo = check_stability(ModelParams(), NoiseParams(0.5, s, 0.8)).cond_a_value
        hi = check_stability(ModelParams(), NoiseParams(0.5, s + ds, 0.8)).cond_a_value
        assert hi > lo

    def test_gamma_precedence(self, default_model):
        states = np.array([[7.0, 1, 1], [9.0, 1, 1]])
        traj = Trajectory(SimGrid(0, 1, 1), np.array([0.0, 1.0]), states, "em")
        assert check_stability(*default_model, trajectory=traj).gamma_used == 9.0
        r = check_stability(*default_model, gamma=2.0, trajectory=traj)
        assert (r.gamma_used, r.gamma_source) == (2.0, "user")
        with pytest.raises(ValueError):
            check_stability(*default_model, gamma=0.0)

    @pytest.mark.parametrize("cond_a, lhs, rhs, eig, expect", [
        (-1.0, 1.0, 2.0, (-3.0, -0.5), STABLE),
        (-1.0, 2.0, 2.0, (-3.0, -0.5), STABLE),
        (0.0, 1.0, 2.0, (-3.0, -0.5), NOT_CONCLUDED),
        (-1.0, 3.0, 2.0, (-3.0, -0.5), NOT_CONCLUDED),
        (-1.0, 1.0, 2.0, (-3.0, 0.0), NOT_CONCLUDED),
    ])
    def test_verdict_rule(self, cond_a, lhs, rhs, eig, expect):
        assert stability_verdict(cond_a, lhs, rhs, eig) == expect

    def test_verdict_independent_of_check_order(self):
        args = (-1.0, 1.0, 2.0, (-3.0, -0.5))
        direct = stability_verdict(*args)
        ok = [args[0] < 0, args[1] <= args[2], all(e < 0 for e in args[3])]
        for perm in ([2, 1, 0], [1, 0, 2], [0, 2, 1]):
            assert all(ok[i] for i in perm) == (direct == STABLE)

    @settings(max_examples=300, deadline=None)
    @given(a=st.floats(-50, 50), c=st.floats(-50, 50), s2=st.floats(0, 5), s3=st.floats(0, 5))
    def test_symmetric_part_never_negative_definite(self, a, c, s2, s3):
        # determinant of the symmetric part is at most a*c - ((a+c)/2)**2 <= 0
        # once both diagonal entries are negative
        m = np.array([[a + 0.5 * s2 ** 2, c], [a, c + 0.5 * s3 ** 2]])
        eig = np.linalg.eigvalsh(0.5 * (m + m.T))
        assert eig[-1] >= -1e-12 * max(1.0, abs(a), abs(c))

    def test_stable_unreachable_on_parameter_sweep(self, default_model):
        mp, _ = default_model
        for q in (0.5, 5.0, 20.0):
            for g in (0.5, 5.0, 50.0):
                for s in (0.0, 0.3, 1.0):
                    r = check_stability(dataclasses.replace(mp, q=q), NoiseParams(0.5, s, s), gamma=g)
                    assert r.verdict == NOT_CONCLUDED
                    assert not r.negative_definite

    def test_noise_free_note(self, default_model):
        r = check_stability(default_model[0], NoiseParams(0.5, 0.0, 0.0))
        assert any("deterministic-degenerate" in n for n in r.notes)

    def test_to_dict_plain(self, default_model):
        d = check_stability(*default_model).to_dict()
        assert d["verdict"] == NOT_CONCLUDED and d["cond_b_holds"] is False
        assert isinstance(d["matrix"][0], list)


class TestErgodicity:
    def test_default_arithmetic(self, default_model):
        r = check_ergodicity(*default_model)
        assert r.mu_star == 5.0
        np.testing.assert_allclose(r.k, (14.75, 0.44, 5.56), rtol=0, atol=1e-12)
        assert r.equilibrium == StateVec(5.0, 0.0, 0.0)
        assert r.equilibrium_kind == "infection_free"
        assert r.omega == pytest.approx(1.25, abs=1e-12)
        assert r.omega_squared == pytest.approx(6.25, abs=1e-12)
        assert r.verdict == ERGODIC
        assert r.r0 < 1 and any("r0" in n for n in r.notes)
        assert r.statement_discrepancy_note

    def test_zero_k1_boundary(self, default_model):
        mp, _ = default_model
        s1 = math.sqrt(mp.mu1 - min(mp.mu1, mp.mu2))
        r = check_ergodicity(mp, NoiseParams(s1, 0.6, 0.8))
        assert r.k1 == pytest.approx(0.0, abs=1e-12)
        r = check_ergodicity(mp, NoiseParams(s1 * 1.01, 0.6, 0.8))
        assert r.k1 < 0 and r.verdict == NOT_CONCLUDED

    def test_equal_death_rates(self):
        mp = dataclasses.replace(ModelParams(), mu2=20.0)
        r = check_ergodicity(mp, NoiseParams(0.0, 0.6, 0.8))
        assert r.mu_star == 20.0 and r.k1 == 0.0
        assert r.verdict == NOT_CONCLUDED

    def test_zero_noise(self, default_model):
        r = check_ergodicity(default_model[0], NoiseParams(0, 0, 0))
        assert r.omega == 0.0 and r.omega_squared == 0.0
        assert any("deterministic-degenerate" in n for n in r.notes)

    def test_endemic_used_when_it_exists(self):
        mp = dataclasses.replace(ModelParams(), beta=60.0)
        r = check_ergodicity(mp, NoiseParams())
        assert r.equilibrium_kind == "endemic" and r.equilibrium.y > 0

    def test_supplied_equilibrium(self, default_model):
        r = check_ergodicity(*default_model, equilibrium=StateVec(1.0, 2.0, 3.0))
        assert r.equilibrium_kind == "supplied"
        assert r.omega == pytest.approx(0.25 + 0.36 * 2 + 0.64 * 9)
