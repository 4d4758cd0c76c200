import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_sign_ordered_train
from peakonlab.core import PeakonTrain
from peakonlab.dynamics import (
    SpectralData,
    asymptotic_matrix,
    asymptotic_spectrum,
    eigenvalues_real,
    hamiltonian,
    integrate,
    integrate_fixed_rk4,
    jacobi_eigh,
    ode_rhs,
    speed_estimates,
    terminal_speeds,
)
from peakonlab.errors import CollisionDetected, NotPositiveDefinite


class TestRhs:
    def test_single_peakon(self):
        qdot, pdot = ode_rhs(PeakonTrain([3.0], [1.0]))
        assert qdot[0] == pytest.approx(3.0)
        assert pdot[0] == 0.0

    def test_two_equal_peakons(self):
        qdot, pdot = ode_rhs(PeakonTrain([1.0, 1.0], [0.0, 10.0]))
        e = math.exp(-10.0)
        np.testing.assert_allclose(qdot, [1 + e, 1 + e], rtol=1e-15)
        np.testing.assert_allclose(pdot, [-e, e], rtol=1e-15)

    def test_antipeakon_pair(self):
        qdot, _ = ode_rhs(PeakonTrain([-1.0, 1.0], [-5.0, 5.0]))
        e = math.exp(-10.0)
        np.testing.assert_allclose(qdot, [-1 + e, 1 - e], rtol=1e-12)


class TestIntegrate:
    def test_single_peakon_translation(self):
        traj = integrate(PeakonTrain([2.0], [0.0]), 5.0, output_times=[2.5, 5.0])
        st5 = traj.states[-1]
        assert st5.q[0] == pytest.approx(10.0, abs=1e-8)
        assert st5.p[0] == pytest.approx(2.0, abs=1e-10)

    @pytest.mark.parametrize(
        "p,q",
        [
            ([2.0, 1.0], [0.0, 20.0]),  # overtaking, strong interaction
            ([-1.0, 1.0], [-5.0, 5.0]),  # departing antipeakon-peakon
            ([1.0, 2.0], [0.0, 6.0]),  # ordered, separating
        ],
    )
    def test_matches_fixed_step_rk4_oracle(self, p, q):
        tr = PeakonTrain(p, q)
        adaptive = integrate(tr, 5.0, output_times=[5.0]).states[-1]
        ref = integrate_fixed_rk4(tr, 5.0, 1e-5)
        assert np.max(np.abs(adaptive.q - ref.q)) < 1e-6
        assert np.max(np.abs(adaptive.p - ref.p)) < 1e-6

    def test_antipeakon_peakon_separation(self):
        traj = integrate(PeakonTrain([-1.0, 1.0], [-15.0, 15.0]), 10.0,
                         output_times=[10.0])
        q = traj.states[-1].q
        assert q[1] - q[0] > 30.0  # gap grows at ~(c2-c1)

    def test_energy_conservation_through_interaction(self):
        tr = PeakonTrain([2.0, 1.0], [0.0, 20.0])
        traj = integrate(tr, 50.0, rel_tol=1e-10, abs_tol=1e-12,
                         output_times=np.linspace(0, 50, 101))
        es = np.array([hamiltonian(s) for s in traj.states])
        assert np.max(np.abs(es - es[0])) / abs(es[0]) <= 10 * 1e-10

    def test_ordering_preserved_at_outputs(self):
        traj = integrate(PeakonTrain([2.0, 1.0], [0.0, 10.0]), 30.0,
                         output_times=np.linspace(0, 30, 61))
        for s in traj.states:
            assert np.all(np.diff(s.q) > 0)

    def test_translation_equivariance(self):
        tr = PeakonTrain([1.0, 2.0], [0.0, 8.0])
        tout = np.linspace(0, 8, 17)
        t1 = integrate(tr, 8.0, output_times=tout)
        t2 = integrate(tr.translated(13.0), 8.0, output_times=tout)
        for a, b in zip(t1.states, t2.states):
            np.testing.assert_allclose(b.q, a.q + 13.0, atol=1e-8)
            np.testing.assert_allclose(b.p, a.p, atol=1e-9)

    def test_reflection_symmetry(self):
        # u(t,x) -> -u(t,-x) maps solutions to solutions
        tr = PeakonTrain([-0.8, 1.3], [-6.0, 6.0])
        tout = np.linspace(0, 6, 13)
        fwd = integrate(tr, 6.0, output_times=tout)
        refl = integrate(tr.reflected(), 6.0, output_times=tout)
        for a, b in zip(fwd.states, refl.states):
            np.testing.assert_allclose(b.q, a.reflected().q, atol=1e-8)
            np.testing.assert_allclose(b.p, a.reflected().p, atol=1e-8)

    def test_collision_detected(self):
        # peakon chasing an antipeakon: amplitudes blow up as they meet
        tr = PeakonTrain([1.0, -1.0], [0.0, 8.0])
        with pytest.raises(CollisionDetected) as exc:
            integrate(tr, 20.0, output_times=[20.0])
        assert exc.value.t is not None and 0 < exc.value.t < 20.0

    def test_bad_arguments(self):
        tr = PeakonTrain([1.0], [0.0])
        with pytest.raises(ValueError):
            integrate(tr, -1.0)
        with pytest.raises(ValueError):
            integrate(tr, 1.0, rel_tol=0.5)
        with pytest.raises(ValueError):
            integrate(tr, 1.0, output_times=[0.5, 0.25])

    def test_step_budget_exhaustion(self):
        from peakonlab.errors import StepSizeUnderflow

        tr = PeakonTrain([1.0, 2.0], [0.0, 8.0])
        with pytest.raises(StepSizeUnderflow):
            integrate(tr, 1000.0, output_times=[1000.0], max_steps=5)


class TestHamiltonian:
    def test_single(self):
        assert hamiltonian(PeakonTrain([3.0], [7.0])) == pytest.approx(18.0)

    def test_two_far(self):
        e = hamiltonian(PeakonTrain([1.0, 1.0], [0.0, 60.0]))
        assert e == pytest.approx(4.0, abs=1e-12)

    def test_pair_closed_form_vs_quadrature(self):
        from helpers import h1_inner_quadrature

        tr = PeakonTrain([1.0, 1.0], [0.0, 1.0])
        expected = 4.0 + 4.0 * math.exp(-1.0)
        assert hamiltonian(tr) == pytest.approx(expected, rel=1e-14)
        assert h1_inner_quadrature(tr, tr, h=1e-4) == pytest.approx(expected, rel=1e-6)


class TestSpectral:
    def test_matrix_single(self):
        sd = asymptotic_matrix(PeakonTrain([3.0], [5.0]))
        np.testing.assert_allclose(sd.matrix, [[3.0]])
        np.testing.assert_allclose(eigenvalues_real(sd), [3.0])

    def test_matrix_2x2_closed_form(self):
        sd = asymptotic_matrix(PeakonTrain([1.0, 1.0], [0.0, 2 * math.log(2.0)]))
        np.testing.assert_allclose(sd.matrix, [[1.0, 0.5], [0.5, 1.0]], rtol=1e-15)
        np.testing.assert_allclose(eigenvalues_real(sd), [0.5, 1.5], atol=1e-12)

    def test_diagonal_limit(self):
        sd = asymptotic_matrix(PeakonTrain([-1.0, 2.0], [0.0, 40.0]))
        assert abs(sd.matrix[0, 1]) < 1e-8
        np.testing.assert_allclose(eigenvalues_real(sd), [-1.0, 2.0], atol=1e-8)

    def test_against_dense_eigensolver_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            tr = random_sign_ordered_train(rng, n_max=5, gap_min=1.0)
            sd = asymptotic_matrix(tr)
            mine = eigenvalues_real(sd)
            ref = np.sort(np.linalg.eigvals(sd.matrix).real)
            np.testing.assert_allclose(mine, ref, atol=1e-10)

    def test_jacobi_on_known_symmetric(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        vals, vecs = jacobi_eigh(a)
        np.testing.assert_allclose(np.sort(vals), [1.0, 3.0], atol=1e-13)
        np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-12)

    def test_coincident_positions_rejected(self):
        sd = SpectralData(
            np.array([1.0, 1.0]),
            np.array([0.0, 1e-14]),
            np.array([[1.0, 1.0], [1.0, 1.0]]),
        )
        with pytest.raises(NotPositiveDefinite):
            eigenvalues_real(sd)

    @settings(max_examples=30, deadline=None)
    @given(shift=st.floats(-100, 100))
    def test_spectrum_translation_invariant(self, shift):
        tr = PeakonTrain([-0.5, 1.0, 2.0], [-8.0, 0.0, 8.0])
        lam0 = eigenvalues_real(asymptotic_matrix(tr))
        lam1 = eigenvalues_real(asymptotic_matrix(tr.translated(shift)))
        np.testing.assert_allclose(lam1, lam0, atol=1e-12)

    def test_spectrum_real_and_distinct(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            tr = random_sign_ordered_train(rng, n_max=4, gap_min=1.5)
            lam = eigenvalues_real(asymptotic_matrix(tr))
            assert np.all(np.isfinite(lam))
            if tr.n > 1:
                assert np.min(np.diff(lam)) > 0


class TestSpeeds:
    def test_single_peakon_constant(self):
        traj = integrate(PeakonTrain([1.5], [0.0]), 4.0,
                         output_times=np.linspace(0, 4, 9))
        est = speed_estimates(traj)
        np.testing.assert_allclose(est.direct, 1.5, atol=1e-9)
        np.testing.assert_allclose(est.finite_difference, 1.5, atol=1e-7)

    def test_direct_vs_finite_difference_consistency(self):
        tr = PeakonTrain([1.0, 2.0], [0.0, 6.0])
        tout = np.linspace(0, 6, 25)
        traj = integrate(tr, 6.0, output_times=tout)
        est = speed_estimates(traj)
        dt = tout[1] - tout[0]
        err = np.max(np.abs(est.finite_difference - est.direct[1:-1]))
        assert err < 5.0 * dt**2  # second-order differencing

    def test_sorted_terminal_speeds_approach_spectrum(self):
        tr = PeakonTrain([-1.0, 1.0, 2.0], [-10.0, 0.0, 10.0])
        lam = eigenvalues_real(asymptotic_matrix(tr))
        traj = integrate(tr, 200.0, output_times=np.linspace(0, 200, 201))
        late = np.sort(terminal_speeds(traj, 10.0))
        np.testing.assert_allclose(late, lam, atol=1e-3)
