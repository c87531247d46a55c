"""Tests for pushplan.transcription module."""

import numpy as np
import pytest

from pushplan.dynamics import euler_step_residual
from pushplan.relaxation import convex_conic_set, relax
from pushplan.transcription import (
    ModeKind,
    ProximityCost,
    SquaredNormCost,
    build_contact_mode,
    build_endpoint_mode,
    build_noncontact_mode,
    evaluate_cost,
    proximity_value,
)
from pushplan.types import InvalidKnots, MismatchedLayout


def free_motion_point(free, pusher_path, pose=(0.0, 0.0, 1.0, 0.0)) -> np.ndarray:
    """Variables of a non-contact mode with a parked slider and the given pusher knots."""
    x = np.zeros(free.num_vars)
    layout = free.layout
    for k, p in enumerate(pusher_path):
        x[layout["p_S"][k]] = pose[0:2]
        x[layout["r"][k]] = pose[2:4]
        x[layout["p_P"][k]] = p
    for k in range(free.num_knots - 1):
        x[layout["v_P"][k]] = (np.asarray(pusher_path[k + 1]) - np.asarray(pusher_path[k])) / free.h
    return x


class TestContactMode:
    """Tests for sticking-contact transcriptions."""

    def test_layout(self, straight_push):
        contact, _, _ = straight_push
        assert contact.num_vars == 3 * 5 + 2 * 2
        assert contact.layout["p_S"].shape == (3, 2)
        assert contact.layout["lam"].shape == (2, 2)
        assert not contact.is_convex

    def test_constraint_counts(self, straight_push):
        contact, _, _ = straight_push
        # two translation rows and one rotation row per interval, one unit-norm row per knot
        assert len(contact.quadratics) == 2 * 3 + 3
        assert len(contact.frame_constraints) == 2 * 2

    def test_straight_push_is_feasible(self, straight_push):
        contact, _, x = straight_push
        residuals = contact.to_qcqp().residuals(x)
        assert max(residuals.values()) < 1e-12

    def test_rotated_push_is_feasible(self, straight_push, push_point):
        contact, model, _ = straight_push
        x = push_point(contact, model, angle=0.3)
        qcqp = contact.to_qcqp()
        xt = qcqp.homogeneous(x)
        assert max(qcqp.residuals(x).values()) < 1e-12
        assert max(abs(qc.value(xt)) for qc in contact.frame_constraints) < 1e-12

    def test_trajectory_matches_dynamics(self, straight_push):
        contact, model, x = straight_push
        traj = contact.trajectory(x)
        np.testing.assert_allclose(traj.states[:, 4:6], [[0.0, -0.11]] * 3, atol=1e-12)
        np.testing.assert_allclose(traj.contact_points, [[0.0, -0.1]] * 2, atol=1e-12)
        for k in range(2):
            residual = euler_step_residual(
                traj.states[k], traj.states[k + 1], traj.inputs[k], contact.h, model, traj.contact_points[k]
            )
            np.testing.assert_allclose(residual, 0.0, atol=1e-12)

    def test_cost_forms_agree(self, straight_push, weights, box_decomp):
        contact, _, x = straight_push
        direct = evaluate_cost(contact.trajectory(x), weights, box_decomp)
        assert contact.objective(x) == pytest.approx(direct)
        assert contact.to_qcqp().objective(x) == pytest.approx(direct)

    def test_squares_lifted_into_cost_matrix(self, straight_push):
        contact, _, _ = straight_push
        qcqp = contact.to_qcqp()
        assert np.any(qcqp.Q0 != 0)
        assert not any(isinstance(c, SquaredNormCost) for c in qcqp.costs)

    def test_groups_fit_relaxation(self, straight_push):
        contact, _, _ = straight_push
        relaxation = relax(contact.to_qcqp())
        assert len(relaxation.blocks) == 2
        assert all(len(block) == 1 + 12 for block in relaxation.blocks)

    def test_invalid_knots(self, box_decomp, friction, weights, straight_push):
        _, model, _ = straight_push
        with pytest.raises(InvalidKnots):
            build_contact_mode(0, box_decomp, model, friction, weights, num_knots=1)


class TestNoncontactMode:
    """Tests for free-motion transcriptions."""

    def test_convex(self, box_decomp, weights):
        free = build_noncontact_mode(0, box_decomp, weights, num_knots=3, h=0.5)
        assert free.is_convex
        assert free.num_vars == 3 * 6 + 2 * 2
        conic_set = convex_conic_set(free.to_qcqp(lift_squares=False))
        assert conic_set.size > free.num_vars + 1

    def test_feasible_motion_and_cost(self, box_decomp, weights):
        free = build_noncontact_mode(0, box_decomp, weights, num_knots=3, h=0.5)
        x = free_motion_point(free, [(0.0, -0.2), (0.05, -0.2), (0.1, -0.2)])
        qcqp = free.to_qcqp(lift_squares=False)
        assert max(qcqp.residuals(x).values()) < 1e-12
        assert any(isinstance(c, SquaredNormCost) for c in qcqp.costs)
        direct = evaluate_cost(free.trajectory(x), weights, box_decomp)
        assert qcqp.objective(x) == pytest.approx(direct)

    def test_pusher_outside_region_violates(self, box_decomp, weights):
        free = build_noncontact_mode(0, box_decomp, weights, num_knots=3, h=0.5)
        x = free_motion_point(free, [(0.0, -0.2), (0.0, 0.0), (0.0, -0.2)])
        assert free.to_qcqp().residuals(x)["affine_ineq"] > 0.1

    def test_slider_pose_held(self, box_decomp, weights):
        free = build_noncontact_mode(0, box_decomp, weights, num_knots=3, h=0.5)
        x = free_motion_point(free, [(0.0, -0.2)] * 3)
        x[free.layout["p_S"][2]] = (0.05, 0.0)
        assert free.to_qcqp().residuals(x)["affine_eq"] == pytest.approx(0.05)

    def test_proximity_uses_region_faces(self, box_decomp, weights):
        free = build_noncontact_mode(0, box_decomp, weights, num_knots=2, h=0.5)
        proximity = [c for c in free.costs if isinstance(c, ProximityCost)]
        assert len(proximity) == 2
        assert proximity[0].G.shape[0] == len(box_decomp.proximity_faces(0))


class TestEndpointMode:
    """Tests for source and target singleton modes."""

    def test_pins_state(self):
        state = np.array([0.1, 0.0, 1.0, 0.0, -0.2, 0.0])
        endpoint = build_endpoint_mode(ModeKind.SOURCE, state)
        qcqp = endpoint.to_qcqp()
        assert qcqp.residuals(state)["affine_eq"] == 0.0
        assert qcqp.residuals(state + 0.1)["affine_eq"] == pytest.approx(0.1)
        np.testing.assert_allclose(endpoint.trajectory(state).states[0], state)
        assert endpoint.objective(state) == 0.0

    def test_state_layout_checked(self):
        with pytest.raises(MismatchedLayout):
            build_endpoint_mode(ModeKind.TARGET, np.zeros(4))


class TestCosts:
    """Tests for cost evaluation helpers."""

    def test_proximity_value_in_contact(self, weights):
        assert proximity_value(0.0, 0.5, weights) == pytest.approx(0.5 * weights.k_T)

    def test_proximity_decays_with_gap(self, weights):
        assert proximity_value(0.1, 0.5, weights) == pytest.approx(0.25 * weights.k_T)

    def test_evaluate_cost_shape_checked(self, straight_push, weights, box_decomp):
        contact, _, x = straight_push
        traj = contact.trajectory(x)
        traj.inputs = traj.inputs[:1]
        with pytest.raises(MismatchedLayout):
            evaluate_cost(traj, weights, box_decomp)
