import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import h1_inner_quadrature, random_sign_ordered_train
from peakonlab.core import (
    Grid,
    PeakonTrain,
    Scenario,
    build_perturbed_scenario,
    evaluate_train,
    evaluate_train_derivative,
    grid_for,
    h1_distance_closed_form,
    h1_inner_closed_form,
    reference_train,
    sample_on_grid,
)
from peakonlab.errors import InvalidScenario, SignOrderViolation


class TestPeakonTrain:
    def test_invariants(self):
        with pytest.raises(ValueError):
            PeakonTrain([1.0, 1.0], [1.0, 0.0])  # not increasing
        with pytest.raises(ValueError):
            PeakonTrain([1.0, 0.0], [0.0, 1.0])  # zero amplitude
        with pytest.raises(ValueError):
            PeakonTrain([np.nan], [0.0])

    def test_sign_ordered(self):
        assert PeakonTrain([-1.0, 1.0], [0.0, 1.0]).sign_ordered
        assert PeakonTrain([1.0, 2.0], [0.0, 1.0]).sign_ordered
        assert PeakonTrain([-2.0, -1.0], [0.0, 1.0]).sign_ordered
        assert not PeakonTrain([1.0, -1.0], [0.0, 1.0]).sign_ordered

    def test_immutable(self):
        tr = PeakonTrain([1.0], [0.0])
        with pytest.raises(ValueError):
            tr.p[0] = 2.0


class TestEvaluate:
    def test_unit_peakon_crest(self):
        assert evaluate_train(PeakonTrain([1.0], [0.0]), 0.0) == 1.0

    def test_peakon_profile(self):
        # traveling-wave profile c e^{-|x-q|}
        tr = PeakonTrain([2.0], [3.0])
        assert evaluate_train(tr, 3.0) == pytest.approx(2.0, abs=0)
        assert evaluate_train(tr, 4.0) == pytest.approx(2.0 * math.exp(-1.0))

    def test_antisymmetric_cancellation(self):
        tr = PeakonTrain([-1.0, 1.0], [-5.0, 5.0])
        assert evaluate_train(tr, 0.0) == pytest.approx(0.0, abs=1e-16)

    def test_derivative_crest_convention(self):
        assert evaluate_train_derivative(PeakonTrain([1.0], [0.0]), 0.0) == 0.0

    def test_derivative_right_slope(self):
        tr = PeakonTrain([1.0], [0.0])
        assert evaluate_train_derivative(tr, 1.0) == pytest.approx(-math.exp(-1.0))

    def test_derivative_finite_difference_oracle(self):
        # expected value -2/e confirmed by the centered difference of u
        tr = PeakonTrain([-2.0], [0.0])
        step = 1e-6
        fd = (evaluate_train(tr, -1.0 + step) - evaluate_train(tr, -1.0 - step)) / (
            2 * step
        )
        val = evaluate_train_derivative(tr, -1.0)
        assert val == pytest.approx(-2.0 * math.exp(-1.0), rel=1e-12)
        assert val == pytest.approx(fd, rel=1e-8)

    def test_derivative_matches_fd_away_from_crests(self):
        rng = np.random.default_rng(5)
        tr = random_sign_ordered_train(rng, n_max=3)
        xs = np.linspace(-12, 12, 37)
        xs = xs[np.min(np.abs(xs[:, None] - tr.q[None, :]), axis=1) > 0.3]
        for step in (1e-3, 5e-4):
            fd = (evaluate_train(tr, xs + step) - evaluate_train(tr, xs - step)) / (
                2 * step
            )
            err = np.max(np.abs(fd - evaluate_train_derivative(tr, xs)))
            assert err < 2.0 * step**2  # O(step^2)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(0.0, -1.0, 10)
        with pytest.raises(ValueError):
            Grid(0.0, 1.0, 1)

    def test_sample_on_grid_values(self):
        tr = PeakonTrain([1.0], [0.0])
        g = Grid(-1.0, 1.0, 3)
        f = sample_on_grid(tr, g)
        np.testing.assert_allclose(f.u, [math.exp(-1), 1.0, math.exp(-1)], rtol=0)

    def test_sampling_linearity(self):
        g = Grid(-5.0, 0.25, 41)
        f1 = sample_on_grid(PeakonTrain([1.0], [0.0]), g)
        f2 = sample_on_grid(PeakonTrain([0.5], [0.0]), g)
        np.testing.assert_allclose(f2.u, 0.5 * f1.u, rtol=1e-15)
        np.testing.assert_allclose(f2.ux, 0.5 * f1.ux, rtol=1e-15)

    def test_grid_trapezoid_energy_of_unit_peakon(self):
        from peakonlab.functionals import energy_E

        f = sample_on_grid(PeakonTrain([1.0], [0.0]), grid_for([0.0], 1e-3, 25.0))
        assert energy_E(f) == pytest.approx(2.0, rel=1e-4)


class TestH1ClosedForm:
    def test_single_peakon_energy(self):
        for c in (-2.0, 0.5, 1.0, 3.0):
            tr = PeakonTrain([c], [1.7])
            assert h1_inner_closed_form(tr, tr) == pytest.approx(2 * c * c, rel=1e-15)

    def test_exponential_decoupling(self):
        a = PeakonTrain([1.0], [0.0])
        vals = [
            h1_inner_closed_form(a, PeakonTrain([1.0], [d])) for d in (20.0, 40.0)
        ]
        assert vals[0] < 1e-8 and vals[1] < vals[0]

    def test_cross_term_against_quadrature_oracle(self):
        a = PeakonTrain([1.0], [0.0])
        b = PeakonTrain([1.0], [1.0])
        exact = h1_inner_closed_form(a, b)
        assert exact == pytest.approx(2 * math.exp(-1.0), rel=1e-14)
        assert exact == pytest.approx(h1_inner_quadrature(a, b, h=1e-4), rel=1e-6)

    def test_quadrature_agreement_random(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            a = random_sign_ordered_train(rng, gap_min=3.0)
            b = random_sign_ordered_train(rng, gap_min=3.0)
            exact = h1_inner_closed_form(a, b)
            quad = h1_inner_quadrature(a, b, h=1e-3)
            scale = max(abs(exact), 1.0)
            assert abs(exact - quad) / scale < 1e-4

    @settings(max_examples=40, deadline=None)
    @given(
        p=st.lists(
            st.floats(0.2, 2.0).map(lambda v: round(v, 6)), min_size=1, max_size=5
        ),
        shift=st.floats(-50, 50),
    )
    def test_positive_definite_and_translation_invariant(self, p, shift):
        q = np.cumsum(np.ones(len(p)))
        tr = PeakonTrain(np.array(p), q)
        norm2 = h1_inner_closed_form(tr, tr)
        assert norm2 > 0
        trs = tr.translated(shift)
        assert abs(h1_inner_closed_form(trs, trs) - norm2) <= 1e-12 * norm2

    def test_symmetry_bilinearity(self):
        rng = np.random.default_rng(2)
        a = random_sign_ordered_train(rng)
        b = random_sign_ordered_train(rng)
        assert h1_inner_closed_form(a, b) == pytest.approx(
            h1_inner_closed_form(b, a), rel=1e-15
        )
        b2 = PeakonTrain(2.0 * b.p, b.q)
        assert h1_inner_closed_form(a, b2) == pytest.approx(
            2.0 * h1_inner_closed_form(a, b), rel=1e-14
        )


class TestScenario:
    def test_velocity_validation(self):
        with pytest.raises(InvalidScenario):
            Scenario(velocities=(1.0, -1.0), L=20.0)
        with pytest.raises(InvalidScenario):
            Scenario(velocities=(-1.0, 0.0, 1.0), L=20.0)
        with pytest.raises(InvalidScenario):
            Scenario(velocities=(-1.0, 1.0), L=-3.0)

    def test_k_derived(self):
        s = Scenario(velocities=(-2.0, -1.0, 1.0), L=20.0)
        assert s.k == 2
        with pytest.raises(InvalidScenario):
            Scenario(velocities=(-2.0, -1.0, 1.0), L=20.0, k=1)

    def test_all_negative_rejected(self):
        with pytest.raises(InvalidScenario):
            Scenario(velocities=(-2.0, -1.0), L=20.0)

    def test_lambda_defaults_within_cap(self):
        s = Scenario(velocities=(-1.0, 1.0, 2.0), L=64.0)
        lams = s.resolved_lambdas()
        assert 0.0 in lams and 1.0 in lams and 0.5 in lams
        assert max(lams) <= s.lambda_cap

    def test_default_positions_spacing(self):
        s = Scenario(velocities=(-1.0, 1.0, 2.0), L=30.0)
        z = s.default_positions()
        np.testing.assert_allclose(np.diff(z), 30.0)

    def test_sign_split_midpoint(self):
        s = Scenario(velocities=(-1.0, 1.0), L=30.0)
        assert s.sign_split_position() == pytest.approx(0.0)


class TestPerturbationBuilder:
    def test_zero_epsilon_exact(self):
        s = Scenario(velocities=(-1.0, 1.0), L=30.0, epsilon=0.0)
        tr = build_perturbed_scenario(s)
        ref = reference_train(s)
        assert h1_distance_closed_form(tr, ref) == 0.0

    @pytest.mark.parametrize(
        "mode", ["amplitude-jitter", "position-jitter", "extra-small-peakons", "mixed"]
    )
    def test_distance_hits_eps_squared(self, mode):
        s = Scenario(
            velocities=(-1.0, 1.0), L=30.0, epsilon=0.1, seed=4,
            perturbation_mode=mode,
        )
        tr = build_perturbed_scenario(s)
        d = h1_distance_closed_form(tr, reference_train(s))
        assert d <= 0.01 * (1 + 1e-9)
        assert d >= 0.5 * 0.01  # scaled to (or capped near) the target
        assert tr.sign_ordered

    def test_extra_small_peakons_amplitudes(self):
        s = Scenario(
            velocities=(-1.0, 1.0, 2.0), L=30.0, epsilon=0.05, seed=9,
            perturbation_mode="extra-small-peakons",
        )
        tr = build_perturbed_scenario(s)
        assert tr.n == 5  # two satellites between three bumps
        extras = np.setdiff1d(np.round(tr.q, 6), np.round(reference_train(s).q, 6))
        assert len(extras) == 2
        small = np.sort(np.abs(tr.p))[:2]
        assert np.all(small < 10 * 0.05**2)

    def test_determinism(self):
        s = Scenario(velocities=(-1.0, 1.0), L=25.0, epsilon=0.02, seed=11,
                     perturbation_mode="mixed")
        t1 = build_perturbed_scenario(s)
        t2 = build_perturbed_scenario(s)
        np.testing.assert_array_equal(t1.p, t2.p)
        np.testing.assert_array_equal(t1.q, t2.q)

    def test_jitter_caps_preserve_admissibility(self):
        # scaling caps keep every draw admissible even for absurd targets
        s = Scenario(velocities=(-0.5, 0.5), L=20.0, epsilon=0.9, seed=1,
                     perturbation_mode="mixed")
        tr = build_perturbed_scenario(s)
        assert tr.sign_ordered

    def test_retry_budget_is_bounded(self, monkeypatch):
        # draws that keep violating the pattern surface the error after the
        # configured number of attempts instead of looping
        import peakonlab.core as core

        calls = []

        def always_bad(s, base, target, rng, shrink):
            calls.append(shrink)
            raise SignOrderViolation("synthetic violation")

        monkeypatch.setattr(core, "_draw_perturbed", always_bad)
        s = Scenario(velocities=(-1.0, 1.0), L=20.0, epsilon=0.1, seed=1,
                     max_retries=5)
        with pytest.raises(SignOrderViolation):
            build_perturbed_scenario(s)
        assert len(calls) == 5
        assert calls[-1] == pytest.approx(0.5 ** 4)  # jitter shrinks each retry
