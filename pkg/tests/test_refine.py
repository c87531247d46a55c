"""Tests for pushplan.refine module."""

import numpy as np
import pytest

from pushplan.audit import audit_plan
from pushplan.planner import Configuration, TaskSpec
from pushplan.refine import Segment, StackedProblem, refine_segments
from pushplan.relaxation import QcqpProblem, QuadraticConstraint
from pushplan.types import MismatchedLayout, RefinementFailed

SCALAR_STATE = np.array([[0.0, 1.0]])


def circle_segment() -> Segment:
    """min (x₀ − 2)² + x₁² on the unit circle with x₀ ≥ 0."""
    Q0 = np.array([[4.0, -2.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    circle = QuadraticConstraint(Q=np.diag([-1.0, 1.0, 1.0]), label="circle")
    qcqp = QcqpProblem(n=2, Q0=Q0, quadratics=(circle,), A_ineq=np.array([[0.0, 1.0, 0.0]]))
    rows = np.array([[0.0, 1.0, 0.0]])
    return Segment("circle", qcqp, rows, rows)


def anchored_segment(name: str, anchor: float) -> Segment:
    """min (x − anchor)² over a scalar whose value is also its state."""
    Q0 = np.array([[anchor**2, -anchor], [-anchor, 1.0]])
    return Segment(name, QcqpProblem(n=1, Q0=Q0), SCALAR_STATE, SCALAR_STATE)


class TestStackedProblem:
    """Tests for stacking segments into one program."""

    def test_continuity_rows(self):
        problem = StackedProblem([anchored_segment("a", 1.0), anchored_segment("b", -1.0)])
        assert problem.size == 2
        np.testing.assert_allclose(problem.C, [[0.0, 1.0, -1.0]])
        assert problem.residuals(np.array([0.5, 0.25]))["continuity"] == pytest.approx(0.25)

    def test_objective_sums_segments(self):
        problem = StackedProblem([anchored_segment("a", 1.0), anchored_segment("b", -1.0)])
        assert problem.objective(np.array([0.0, 0.0])) == pytest.approx(2.0)
        np.testing.assert_allclose(problem.objective_gradient(np.array([0.0, 0.0])), [-2.0, 2.0])

    def test_empty(self):
        with pytest.raises(MismatchedLayout):
            StackedProblem([])

    def test_stack_checks_shapes(self):
        problem = StackedProblem([circle_segment()])
        with pytest.raises(MismatchedLayout):
            problem.stack([np.zeros(3)])
        with pytest.raises(MismatchedLayout):
            problem.stack([np.zeros(2), np.zeros(2)])


class TestRefineSegments:
    """Tests for the local refinement."""

    def test_feasible_guess_unchanged(self):
        result = refine_segments([circle_segment()], [np.array([1.0, 0.0])])
        assert result.method == "unchanged"
        assert result.iterations == 0
        assert result.cost == pytest.approx(1.0)
        assert result.history == []

    def test_reaches_circle_optimum(self):
        result = refine_segments([circle_segment()], [np.array([0.8, 0.3])])
        assert result.cost == pytest.approx(1.0, abs=1e-5)
        np.testing.assert_allclose(result.points[0], [1.0, 0.0], atol=1e-3)
        assert result.residuals["quadratic_eq"] <= 1e-6
        assert len(result.history) == 2

    def test_polish_restores_feasibility(self):
        result = refine_segments([circle_segment()], [np.array([0.8, 0.3])])
        x = result.points[0]
        assert abs(x @ x - 1.0) <= 1e-6

    def test_joins_segments(self):
        segments = [anchored_segment("a", 1.0), anchored_segment("b", -1.0)]
        result = refine_segments(segments, [np.array([0.5]), np.array([-0.5])])
        assert result.cost == pytest.approx(2.0, abs=1e-6)
        assert result.points[0][0] == pytest.approx(result.points[1][0], abs=1e-8)
        assert result.method in ("gauss-newton", "slsqp")

    def test_wrong_guess(self):
        with pytest.raises(MismatchedLayout):
            refine_segments([circle_segment()], [np.zeros(5)])

    def test_infeasible_reports_attempts(self):
        # 1 + x² = 0 has no real solution
        qcqp = QcqpProblem(n=1, Q0=np.zeros((2, 2)), quadratics=(QuadraticConstraint(Q=np.eye(2)),))
        segment = Segment("empty", qcqp, SCALAR_STATE, SCALAR_STATE)
        with pytest.raises(RefinementFailed) as excinfo:
            refine_segments([segment], [np.array([0.3])])
        assert excinfo.value.diagnostics["attempts"]
        assert excinfo.value.diagnostics["initial"]["quadratic_eq"] == pytest.approx(1.09)


class TestContactRefinement:
    """Refined contact segments measured against the independent audit."""

    @pytest.fixture
    def rotated_end(self, straight_push):
        """Feasible push with the last rotation turned by δ, still unit norm."""
        contact, model, x = straight_push
        delta = 9e-7 / model.c_tau
        x = x.copy()
        x[contact.layout["r"][-1]] = [np.cos(delta), np.sin(delta)]
        segment = Segment("contact[0]", contact.to_qcqp(), contact.initial_state_map, contact.terminal_state_map)
        return contact, segment, x, delta

    def test_rows_checked_in_euler_units(self, rotated_end):
        _, segment, x, delta = rotated_end
        residuals = StackedProblem([segment]).residuals(x)
        assert residuals["quadratic_eq"] == pytest.approx(delta, rel=1e-3)

    def test_rotation_error_is_refined_away(self, rotated_end):
        _, segment, x, _ = rotated_end
        result = refine_segments([segment], [x])
        assert result.method != "unchanged"
        assert result.residuals["quadratic_eq"] <= 1e-6

    def test_refined_segment_passes_audit(self, box, rotated_end):
        contact, segment, x, _ = rotated_end
        (point,) = refine_segments([segment], [x]).points
        traj = contact.trajectory(point)
        first, last = traj.states[0], traj.states[-1]
        task = TaskSpec(
            geometry=box,
            initial=Configuration(tuple(first[0:2]), float(np.arctan2(first[3], first[2])), tuple(first[4:6])),
            target=Configuration(tuple(last[0:2]), float(np.arctan2(last[3], last[2])), tuple(last[4:6])),
        )
        report = audit_plan(task, [traj])
        assert report.passed(), report.residuals
