"""Threshold, softmax, table, periodic, and repeated one-stop policies."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from multistop import (
    CONTINUE,
    STOP,
    PeriodicPolicy,
    SoftmaxParams,
    SoftmaxPolicy,
    TablePolicy,
    ThresholdParams,
    ThresholdPolicy,
    ValidationError,
    heuristic_policy,
    linear_threshold_action,
    load_policy,
    periodic_policy,
    policy_monotone_on_lines,
    save_policy,
    softmax_action,
    softmax_probabilities,
    solve,
    theta_from_phi,
)
from multistop.policy import (
    RepeatedSingleStopPolicy,
    feasibility_violations,
    policy_from_dict,
    policy_to_dict,
    threshold_scores,
)
from multistop.structure import sample_lines


ALWAYS_STOP = np.tile([1.0, 5.0], (5, 1))
NEVER_STOP = np.tile([1.0, 0.0], (5, 1))


class TestThetaFromPhi:
    def test_right_angles_reach_the_feasible_corner(self):
        phi = np.full((3, 2), np.pi / 2)
        theta = theta_from_phi(phi)
        assert_allclose(theta[:, 1], (np.pi / 2) ** 2, rtol=0, atol=0)
        assert_allclose(theta[:, 0], 1.0 + (np.pi / 2) ** 2, rtol=0, atol=0)

    def test_zero_last_angle_gives_zero_offsets(self, rng):
        phi = rng.normal(size=(4, 2))
        phi[0, 1] = 0.0
        assert (theta_from_phi(phi)[:, 1] == 0.0).all()

    def test_interior_columns_scale_the_cap_column(self, rng):
        phi = rng.normal(size=(3, 3))
        theta = theta_from_phi(phi)
        shrink = 1.0
        for l in range(3):
            shrink = shrink * np.sin(phi[l, 0]) ** 2
        assert_allclose(theta[:, 0], theta[:, 1] * shrink, rtol=0, atol=0)

    def test_random_draws_are_always_feasible(self, rng):
        for _ in range(2000):
            phi = rng.normal(scale=3.0, size=(5, 3))
            assert feasibility_violations(theta_from_phi(phi)) == []
        for _ in range(2000):
            phi = rng.uniform(-10.0, 10.0, size=(2, 2))
            assert feasibility_violations(theta_from_phi(phi)) == []

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            theta_from_phi(np.zeros((0, 2)))
        with pytest.raises(ValidationError):
            theta_from_phi(np.zeros(3))


class TestFeasibilityViolations:
    def test_constant_rows_are_feasible(self):
        assert feasibility_violations(ALWAYS_STOP) == []
        assert feasibility_violations(NEVER_STOP) == []

    def test_each_constraint_is_reported(self):
        assert any("offset" in v for v in feasibility_violations([[1.0, -0.1]]))
        assert any("cap" in v for v in feasibility_violations([[0.5, 1.0]]))
        assert any(
            "offsets decrease" in v
            for v in feasibility_violations([[1.0, 2.0], [1.0, 1.0]])
        )
        assert any(
            "increases" in v for v in feasibility_violations([[1.0, 1.0], [2.0, 1.0]])
        )
        assert any(
            "above cap" in v for v in feasibility_violations([[2.0, 1.5, 0.0]])
        )

    def test_tolerance_absorbs_rounding(self):
        assert feasibility_violations([[1.0, -1e-12]], tol=1e-9) == []

    def test_params_reject_infeasible_rows(self):
        with pytest.raises(ValidationError):
            ThresholdParams(theta=np.array([[0.5, 1.0]]))


class TestThresholdAction:
    def test_best_vertex_always_stops(self, rng):
        e1 = np.array([1.0, 0.0, 0.0])
        for _ in range(50):
            params = ThresholdParams.from_phi(rng.normal(size=(5, 2)))
            for l in range(1, 6):
                assert linear_threshold_action(params, e1, l) == STOP

    def test_never_stop_rows_stop_only_at_best_vertex(self, rng):
        params = ThresholdParams(theta=NEVER_STOP)
        assert linear_threshold_action(params, [1.0, 0.0, 0.0], 1) == STOP
        assert linear_threshold_action(params, [0.0, 0.0, 1.0], 1) == CONTINUE
        for pi in rng.dirichlet(np.ones(3), size=100):
            if pi[1] + pi[2] > 0:
                assert linear_threshold_action(params, pi, 3) == CONTINUE

    def test_always_stop_rows_stop_everywhere(self, rng):
        params = ThresholdParams(theta=ALWAYS_STOP)
        for pi in rng.dirichlet(np.ones(3), size=100):
            assert linear_threshold_action(params, pi, 2) == STOP

    def test_threshold_policy_is_monotone_on_lines(self, rng):
        policy = ThresholdPolicy(ThresholdParams.from_phi(rng.normal(size=(5, 2))))
        lines = sample_lines(3, 0, 30, rng) + sample_lines(3, 2, 30, rng)
        for l in range(1, 6):
            assert policy_monotone_on_lines(policy, l, lines).holds is True

    def test_stop_regions_nest_across_levels(self, rng):
        theta = theta_from_phi(rng.normal(size=(5, 2)))
        beliefs = rng.dirichlet(np.ones(3), size=500)
        for l in range(2, 6):
            hard = threshold_scores(theta, beliefs, l - 1)
            easy = threshold_scores(theta, beliefs, l)
            assert (easy <= hard + 1e-12).all()

    def test_round_trip_keeps_phi(self, rng):
        params = ThresholdParams.from_phi(rng.normal(size=(3, 2)))
        clone = ThresholdParams.from_dict(params.to_dict())
        assert_allclose(clone.theta, params.theta)
        assert_allclose(clone.phi, params.phi)
        assert clone.L == 3


class TestSoftmax:
    def test_equal_weights_split_evenly(self):
        params = SoftmaxParams(weights=np.zeros((2, 2, 2)))
        assert_allclose(softmax_probabilities(params, [0.2, 0.3, 0.5], 1), [0.5, 0.5])

    def test_probabilities_sum_to_one(self, rng):
        params = SoftmaxParams(weights=rng.normal(size=(3, 2, 2)))
        for pi in rng.dirichlet(np.ones(3), size=50):
            p = softmax_probabilities(params, pi, 2)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert (p >= 0).all()

    def test_bigger_stop_weight_raises_stop_probability(self):
        lo = SoftmaxParams(weights=np.array([[[0.0, 0.0], [0.0, 0.0]]]))
        hi = SoftmaxParams(weights=np.array([[[2.0, 2.0], [0.0, 0.0]]]))
        pi = [0.2, 0.4, 0.4]
        assert (
            softmax_probabilities(hi, pi, 1)[0] > softmax_probabilities(lo, pi, 1)[0]
        )

    def test_empirical_frequency_matches_probability(self, rng):
        params = SoftmaxParams(weights=np.array([[[1.0, 1.0], [0.0, 0.0]]]))
        pi = np.array([0.0, 0.5, 0.5])
        p_stop = softmax_probabilities(params, pi, 1)[0]
        assert p_stop == pytest.approx(np.exp(1) / (1 + np.exp(1)), abs=1e-12)
        n = 100_000
        stops = sum(softmax_action(params, pi, 1, rng) == STOP for _ in range(n))
        se = np.sqrt(p_stop * (1 - p_stop) / n)
        assert stops / n == pytest.approx(p_stop, abs=3 * se)

    def test_extreme_weights_do_not_overflow(self):
        params = SoftmaxParams(weights=np.array([[[1e6, 1e6], [0.0, 0.0]]]))
        p = softmax_probabilities(params, [0.0, 0.5, 0.5], 1)
        assert np.isfinite(p).all()
        assert p[0] == pytest.approx(1.0)

    def test_weight_shape_enforced(self):
        with pytest.raises(ValidationError):
            SoftmaxParams(weights=np.zeros((2, 3, 2)))


class TestFixedRules:
    def test_periodic_clock(self):
        policy = periodic_policy(3)
        got = [policy.act(None, 5, t, None) for t in range(7)]
        assert got == [CONTINUE, CONTINUE, CONTINUE, STOP, CONTINUE, CONTINUE, STOP]

    def test_period_one_skips_time_zero(self):
        policy = periodic_policy(1)
        assert policy.act(None, 3, 0, None) == CONTINUE
        assert [policy.act(None, 3, t, None) for t in (1, 2, 3)] == [STOP] * 3

    def test_period_must_be_positive(self):
        with pytest.raises(ValidationError):
            periodic_policy(0)

    def test_heuristic_reuses_the_single_stop_rule(self, eq16, rng):
        policy = heuristic_policy(eq16)
        single = solve(eq16.with_(L=1, rewards=eq16.rewards[:1]))
        for pi in rng.dirichlet(np.ones(3), size=50):
            want = int(single.action_at(pi, 1))
            for l in (1, 3, 5):
                assert policy.act(pi, l, 0, rng) == want


class TestSerialization:
    def test_threshold_and_softmax_round_trip(self, rng, tmp_path):
        policies = [
            ThresholdPolicy(ThresholdParams.from_phi(rng.normal(size=(5, 2)))),
            SoftmaxPolicy(SoftmaxParams(weights=rng.normal(size=(5, 2, 2)))),
            periodic_policy(4),
        ]
        for policy in policies:
            path = tmp_path / "p.json"
            save_policy(policy, path)
            clone = load_policy(path)
            assert type(clone) is type(policy)
        reloaded = policy_from_dict(policy_to_dict(policies[0]))
        assert_allclose(reloaded.params.theta, policies[0].params.theta)

    def test_table_policies_round_trip(self, eq16_table, rng):
        for policy in (
            TablePolicy(eq16_table),
            RepeatedSingleStopPolicy(eq16_table),
        ):
            clone = policy_from_dict(policy_to_dict(policy))
            assert type(clone) is type(policy)
            for pi in rng.dirichlet(np.ones(3), size=20):
                assert clone.act(pi, 2, 0, rng) == policy.act(pi, 2, 0, rng)

    def test_optimal_token_solves_against_model(self, eq16, eq16_table, tmp_path, rng):
        path = tmp_path / "optimal.json"
        path.write_text(json.dumps({"type": "optimal"}))
        policy = load_policy(path, model=eq16)
        assert isinstance(policy, TablePolicy)
        for pi in rng.dirichlet(np.ones(3), size=20):
            assert policy.act(pi, 5, 0, rng) == int(eq16_table.action_at(pi, 5))

    def test_optimal_token_without_model_rejected(self, tmp_path):
        path = tmp_path / "optimal.json"
        path.write_text(json.dumps({"type": "optimal"}))
        with pytest.raises(ValidationError):
            load_policy(path)

    def test_unknown_type_rejected(self):
        with pytest.raises(ValidationError):
            policy_from_dict({"type": "mystery"})
