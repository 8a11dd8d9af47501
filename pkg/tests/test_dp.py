"""Value iteration against hand-computable cases and an exhaustive decision tree."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from multistop import (
    BeliefGrid,
    ConvergenceError,
    ValidationError,
    ValueTable,
    finite_stop_bound,
    horizon_for_tolerance,
    solve,
    stopping_sets,
    update,
)
from multistop.dp import CONTINUE, STOP

from conftest import make_two_state


def tree_value(model, pi, l, depth):
    """Exhaustive enumeration of every act/observe branch, no discretization.

    Evaluates the same recursion the grid solver fixed-points, but on exact
    beliefs, so it is the ground truth for short horizons.
    """
    if depth == 0 or l == 0:
        return 0.0
    keep = 0.0
    spent = 0.0
    predicted = model.P.T @ pi
    for y in range(model.Y):
        sigma = float(predicted @ model.B[:, y])
        if sigma <= 0.0:
            continue
        post, _ = update(model, pi, y)
        keep += sigma * tree_value(model, post, l, depth - 1)
        spent += sigma * tree_value(model, post, l - 1, depth - 1)
    q_stop = float(model.rewards[l - 1] @ pi) + model.rho * spent
    q_cont = model.rho * keep
    return max(q_stop, q_cont)


class TestBeliefGrid:
    def test_point_count_and_geometry(self):
        grid = BeliefGrid(3, 13)
        assert len(grid) == 105
        assert_allclose(grid.points.sum(axis=1), 1.0)
        assert grid.points.min() >= 0.0

    def test_points_in_ascending_lexicographic_order(self):
        pts = [tuple(p) for p in BeliefGrid(3, 5).points]
        assert pts == sorted(pts)

    def test_from_min_points(self):
        grid = BeliefGrid.from_min_points(3, 100)
        assert grid.resolution == 13
        assert len(BeliefGrid.from_min_points(3, 106)) >= 106

    def test_lookup_is_identity_on_grid_points(self):
        grid = BeliefGrid(3, 7)
        idx = grid.lookup(grid.points)
        assert np.array_equal(idx, np.arange(len(grid)))

    def test_lookup_snaps_to_nearest(self):
        grid = BeliefGrid(2, 10)
        assert_allclose(grid.points[grid.lookup([0.52, 0.48])], [0.5, 0.5])

    def test_lookup_tie_takes_lexicographically_smallest(self):
        grid = BeliefGrid(2, 1)
        # (0.5, 0.5) is equidistant from both vertices
        assert_allclose(grid.points[grid.lookup([0.5, 0.5])], [0.0, 1.0])

    def test_lookup_rejects_wrong_dimension(self):
        with pytest.raises(ValidationError):
            BeliefGrid(3, 5).lookup([0.5, 0.5])


class TestMyopicLimit:
    def test_zero_discount_value_is_immediate_reward(self):
        model = make_two_state(rho=0.0)
        table = solve(model)
        expected = table.grid.points @ model.rewards[0]
        for l in range(1, model.L + 1):
            assert_allclose(table.V[:, l], expected, atol=1e-12)
        assert np.all(table.policy == STOP)

    def test_one_sweep_from_zeros_is_reward_maximum(self, eq16):
        table = solve(eq16, grid=BeliefGrid(3, 13), horizon=1)
        for l in range(1, eq16.L + 1):
            assert_allclose(table.V[:, l], table.grid.points @ eq16.rewards[l - 1])


class TestTreeOracle:
    def test_short_horizon_matches_exhaustive_tree(self, two_state, rng):
        table = solve(two_state, grid=BeliefGrid(2, 500), horizon=4)
        for x in rng.random(20):
            pi = np.array([x, 1.0 - x])
            for l in (1, 2):
                got = float(table.value_at(pi, l))
                want = tree_value(two_state, pi, l, 4)
                assert got == pytest.approx(want, abs=1e-2)

    def test_horizon_values_increase_with_horizon(self, two_state):
        grid = BeliefGrid(2, 100)
        v2 = solve(two_state, grid=grid, horizon=2).V
        v4 = solve(two_state, grid=grid, horizon=4).V
        vinf = solve(two_state, grid=grid).V
        assert np.all(v4 >= v2 - 1e-12)
        assert np.all(vinf >= v4 - 1e-5)


class TestSolvedStructure:
    def test_value_nondecreasing_in_stops_remaining(self, eq16_table):
        assert np.diff(eq16_table.V, axis=1).min() >= -1e-12

    def test_extra_stop_value_shrinks_with_level(self, eq16_table):
        assert np.diff(eq16_table.marginal, axis=1).max() <= 1e-12

    def test_value_monotone_in_likelihood_ratio_order(self, eq16_table):
        pts = eq16_table.grid.points
        # prod[a, b, i, j] = pts[a, i] * pts[b, j]; a dominates b when
        # a_j b_i <= a_i b_j for every index pair i < j
        prod = pts[:, None, :, None] * pts[None, :, None, :]
        ge = np.ones((len(pts), len(pts)), dtype=bool)
        for i in range(3):
            for j in range(i + 1, 3):
                ge &= prod[:, :, j, i] <= prod[:, :, i, j] + 1e-12
        a_idx, b_idx = np.nonzero(ge)
        for l in range(1, eq16_table.L + 1):
            diffs = eq16_table.V[a_idx, l] - eq16_table.V[b_idx, l]
            assert diffs.min() >= -1e-9

    def test_best_state_vertex_always_stops(self, eq16_table):
        sets = stopping_sets(eq16_table)
        e1 = eq16_table.grid.lookup(np.array([1.0, 0.0, 0.0]))
        assert sets[:, e1].all()

    def test_last_stop_has_a_continue_region(self, eq16_table):
        sets = stopping_sets(eq16_table)
        e3 = eq16_table.grid.lookup(np.array([0.0, 0.0, 1.0]))
        assert not sets[0, e3]
        assert sets[0].mean() < 1.0

    def test_converged_table_is_bellman_fixed_point(self, eq16, eq16_table):
        grid = eq16_table.grid
        V = eq16_table.V
        for l in range(1, eq16.L + 1):
            q_stop = np.empty(len(grid))
            q_cont = np.empty(len(grid))
            for g, pi in enumerate(grid.points):
                spent = keep = 0.0
                predicted = eq16.P.T @ pi
                for y in range(eq16.Y):
                    sigma = float(predicted @ eq16.B[:, y])
                    if sigma <= 0.0:
                        continue
                    post, _ = update(eq16, pi, y)
                    n = grid.lookup(post)
                    keep += sigma * V[n, l]
                    spent += sigma * V[n, l - 1]
                q_stop[g] = eq16.rewards[l - 1] @ pi + eq16.rho * spent
                q_cont[g] = eq16.rho * keep
            assert np.max(np.abs(V[:, l] - np.maximum(q_stop, q_cont))) < 2e-6
            want_action = np.where(q_stop >= q_cont - 1e-9, STOP, CONTINUE)
            agree = (eq16_table.policy[:, l - 1] == want_action) | (
                np.abs(q_stop - q_cont) < 1e-6
            )
            assert agree.all()

    def test_high_impatience_stops_everywhere(self):
        table = solve(make_two_state(rho=0.1))
        assert np.all(table.policy == STOP)


class TestBounds:
    def test_finite_stop_bound_scales_with_stops_and_rewards(self, eq16):
        assert finite_stop_bound(eq16.with_(continue_penalty=-1.0)) == 45.0
        one = make_two_state(L=1).with_(continue_penalty=-1.0)
        assert finite_stop_bound(one) == 1.0

    def test_finite_stop_bound_needs_negative_penalty(self, eq16, two_state):
        with pytest.raises(ValidationError):
            finite_stop_bound(eq16)
        with pytest.raises(ValidationError):
            finite_stop_bound(two_state.with_(continue_penalty=0.0))

    def test_finite_stop_bound_needs_positive_reward(self, two_state):
        bad = two_state.with_(rewards=np.array([-1.0, -2.0]), continue_penalty=-1.0)
        with pytest.raises(ValidationError):
            finite_stop_bound(bad)

    def test_horizon_for_tolerance_half_life_case(self):
        model = make_two_state(rho=0.5)
        assert horizon_for_tolerance(model, 0.01) == 8
        assert horizon_for_tolerance(model, 10.0) == 0

    def test_horizon_for_tolerance_matches_linear_scan(self, eq16):
        scale = 9.0
        for eps in (0.1, 1e-3, 1e-6):
            want = 0
            while 0.9**want / 0.1 * scale > eps:
                want += 1
            assert horizon_for_tolerance(eq16, eps) == want

    def test_horizon_for_tolerance_rejects_bad_inputs(self, eq16):
        with pytest.raises(ValidationError):
            horizon_for_tolerance(eq16, 0.0)
        with pytest.raises(ValidationError):
            horizon_for_tolerance(make_two_state(rho=0.0), 0.1)


class TestSolveInterface:
    def test_undiscounted_model_rejected(self, eq16):
        undiscounted = eq16.with_(rho=1.0, continue_penalty=-0.5)
        with pytest.raises(ValidationError):
            solve(undiscounted)

    def test_sweep_limit_raises_with_residual(self, eq16):
        with pytest.raises(ConvergenceError) as info:
            solve(eq16, grid=BeliefGrid(3, 5), tol=1e-15, max_iter=3)
        assert info.value.residual > 0

    def test_zero_horizon_rejected(self, two_state):
        with pytest.raises(ValidationError):
            solve(two_state, horizon=0)

    def test_round_trip_through_dict(self, eq16_table):
        clone = ValueTable.from_dict(eq16_table.to_dict())
        assert_allclose(clone.V, eq16_table.V)
        assert np.array_equal(clone.policy, eq16_table.policy)
        assert clone.iterations == eq16_table.iterations
        pi = np.array([0.2, 0.3, 0.5])
        assert clone.value_at(pi, 3) == eq16_table.value_at(pi, 3)
        assert clone.action_at(pi, 3) == eq16_table.action_at(pi, 3)

    def test_value_at_accepts_batches(self, eq16_table, rng):
        batch = rng.dirichlet(np.ones(3), size=7)
        vals = eq16_table.value_at(batch, 5)
        acts = eq16_table.action_at(batch, 5)
        assert vals.shape == (7,)
        assert set(np.unique(acts)) <= {STOP, CONTINUE}
