"""Tests for pushplan.planner module."""

import dataclasses
from types import SimpleNamespace

import numpy as np
import pytest

from pushplan import planner
from pushplan.audit import AuditReport, audit_plan
from pushplan.cli import run_batch
from pushplan.conic import ConeKind
from pushplan.gcs import PathCandidate
from pushplan.geometry import SliderGeometry
from pushplan.planner import (
    Configuration,
    PlanResult,
    TaskSpec,
    build_mode_graph,
    certify_gap,
    plan,
)
from pushplan.types import InvalidBound, InvalidKnots, InvalidParams, NoFeasiblePlan

AT_REST = Configuration((0.0, 0.0), 0.0, (-0.2, 0.0))


class TestTaskSpec:
    """Tests for task validation."""

    def test_too_few_knots(self, box):
        with pytest.raises(InvalidKnots):
            TaskSpec(geometry=box, initial=AT_REST, target=AT_REST, num_knots=1)

    def test_timestep_positive(self, box):
        with pytest.raises(InvalidParams, match="Timestep"):
            TaskSpec(geometry=box, initial=AT_REST, target=AT_REST, h=0.0)

    def test_slider_outside_workspace(self, box):
        far = Configuration((0.5, 0.0), 0.0, (-0.2, 0.0))
        with pytest.raises(InvalidParams, match="outside"):
            TaskSpec(geometry=box, initial=AT_REST, target=far)

    def test_pusher_outside_workspace(self, box):
        far = Configuration((0.0, 0.0), 0.0, (-0.35, 0.0))
        with pytest.raises(InvalidParams, match="target pusher position .* outside"):
            TaskSpec(geometry=box, initial=AT_REST, target=far)

    def test_pusher_inside_slider(self, box):
        inside = Configuration((0.0, 0.0), 0.0, (0.0, 0.0))
        with pytest.raises(InvalidParams, match="initial"):
            TaskSpec(geometry=box, initial=inside, target=AT_REST)

    def test_pusher_touching_face_allowed(self, box):
        touching = Configuration((0.0, 0.0), 0.0, (-0.11, 0.0))
        task = TaskSpec(geometry=box, initial=touching, target=AT_REST)
        assert task.decomposition.gap(3, (-0.11, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_configuration_state(self):
        config = Configuration((0.1, 0.2), np.pi / 2, (0.3, 0.0))
        np.testing.assert_allclose(config.state(), [0.1, 0.2, 0.0, 1.0, 0.3, 0.0], atol=1e-12)

    def test_defaults_from_config(self, box_task):
        assert box_task.num_knots == 3
        assert box_task.h == 0.5
        assert box_task.workspace_side == 0.6
        assert box_task.pusher.radius == 0.01


class TestModeGraph:
    """Tests for the contact-pair graph construction."""

    def test_box_counts(self, box_task):
        graph = build_mode_graph(box_task)
        # source, target, 4 contact faces and 15 endpoint pairs of 4 regions
        assert len(graph.gcs.vertices) == 2 + 4 + 15 * 4
        assert graph.interior_vertex_count() == 28

    def test_edges_couple_full_state(self, box_task):
        graph = build_mode_graph(box_task)
        for edge in graph.gcs.edges.values():
            (atom,) = edge.atoms
            assert atom.kind is ConeKind.ZERO
            assert atom.expr.rows == 6

    def test_source_reaches_every_copy_of_its_region(self, box_task):
        graph = build_mode_graph(box_task)
        out = graph.gcs.out_edges("source")
        assert len(out) == 5
        assert all(v.startswith("free[s-") and v.endswith("[3]") for _, v in out)

    def test_contact_start_links_source_to_face(self, box):
        touching = Configuration((0.0, 0.0), 0.0, (-0.11, 0.0))
        task = TaskSpec(geometry=box, initial=touching, target=AT_REST)
        graph = build_mode_graph(task)
        assert ("source", "contact[3]") in graph.gcs.edges
        assert ("contact[3]", "target") not in graph.gcs.edges

    def test_contact_vertices_relaxed(self, box_task):
        graph = build_mode_graph(box_task)
        assert set(graph.relaxations) == {f"contact[{i}]" for i in range(4)}
        assert graph.gcs.metadata["contact[2]"] == {"kind": "contact", "face": 2}

    def test_tee_interior_count(self):
        tee = SliderGeometry.from_preset("tee")
        config = Configuration((0.0, 0.0), 0.0, (0.0, 0.24))
        graph = build_mode_graph(TaskSpec(geometry=tee, initial=config, target=config, num_knots=2))
        assert graph.interior_vertex_count() == 232


class TestCertificate:
    """Tests for the optimality gap."""

    def test_gap(self):
        assert certify_gap(2.0, 2.2) == pytest.approx(0.1)

    def test_tolerates_solver_noise(self):
        assert certify_gap(1.0, 1.0 - 5e-7) == pytest.approx(-5e-7)

    def test_rejects_nonpositive_bound(self):
        with pytest.raises(InvalidBound, match="positive"):
            certify_gap(0.0, 1.0)

    def test_rejects_round_below_bound(self):
        with pytest.raises(InvalidBound, match="below"):
            certify_gap(1.0, 0.9)


class TestPlanResult:
    """Tests for the result container."""

    @pytest.fixture
    def result(self, straight_push):
        contact, _, x = straight_push
        first = contact.trajectory(x)
        second = dataclasses.replace(first, states=first.states + [0.0, 0.2, 0.0, 0.0, 0.0, 0.0])
        second.states[0] = first.states[-1]
        return PlanResult(
            task_name="box-straight",
            seed=4,
            modes=["source", "contact[0]", "contact[0]", "target"],
            segments=[first, second],
            c_relax=1.0,
            c_round=1.1,
            gap=0.1,
            residuals={"dynamics": 1e-9, "contact": 2e-8},
            timings={"relaxation": 1.5},
        )

    def test_states_share_boundaries(self, result):
        assert result.states().shape == (5, 6)

    def test_max_residual(self, result):
        assert result.max_residual == 2e-8

    def test_to_dict_without_timings(self, result):
        data = result.to_dict(include_timings=False)
        assert "timings" not in data
        assert data["seed"] == 4
        assert len(data["segments"]) == 2
        assert result.to_dict()["timings"] == {"relaxation": 1.5}


class TestCandidateSelection:
    """Candidate choice inside plan, with the solver stages stubbed out."""

    @pytest.fixture
    def stub_pipeline(self, monkeypatch, straight_push):
        contact, _, x = straight_push
        cheap, costly = [contact.trajectory(x)], [contact.trajectory(x)]
        costs = {"contact[1]": 1.5, "contact[3]": 1.2}
        flow = SimpleNamespace(outcome=SimpleNamespace(is_optimal=True, diagnostics={}), cost=1.0)
        monkeypatch.setattr(planner, "build_relaxation", lambda gcs: None)
        monkeypatch.setattr(planner, "solve_flow", lambda relaxation, settings: flow)
        monkeypatch.setattr(
            planner,
            "round_paths",
            lambda *args, **kwargs: [
                PathCandidate(("source", "contact[1]", "target")),
                PathCandidate(("source", "contact[3]", "target")),
            ],
        )
        monkeypatch.setattr(planner, "solve_restriction", lambda *args: SimpleNamespace(vertex_values={}))
        monkeypatch.setattr(planner, "initial_guess", lambda *args: [])
        monkeypatch.setattr(planner, "dump_graph", lambda *args: "{}")

        def refine(graph, path, guess, settings):
            trajectories = cheap if path[1] == "contact[3]" else costly
            return trajectories, SimpleNamespace(cost=costs[path[1]])

        monkeypatch.setattr(planner, "nonconvex_refine", refine)
        monkeypatch.setattr(planner, "audit_plan", lambda task, trajectories: AuditReport(residuals={"dynamics": 0.0}))
        return SimpleNamespace(cheap=cheap, costly=costly, costs=costs, monkeypatch=monkeypatch)

    def test_cheapest_audited_candidate_wins(self, box_task, stub_pipeline):
        result = plan(box_task, seed=0)
        assert result.modes == ["source", "contact[3]", "target"]
        assert result.c_round == pytest.approx(1.2)

    def test_audit_failure_skips_cheaper_candidate(self, box_task, stub_pipeline):
        def audit(task, trajectories):
            dynamics = 4e-6 if trajectories is stub_pipeline.cheap else 0.0
            return AuditReport(residuals={"dynamics": dynamics})

        stub_pipeline.monkeypatch.setattr(planner, "audit_plan", audit)
        result = plan(box_task, seed=0)
        assert result.modes == ["source", "contact[1]", "target"]
        assert result.residuals == {"dynamics": 0.0}

    def test_no_audited_candidate(self, box_task, stub_pipeline):
        stub_pipeline.monkeypatch.setattr(
            planner, "audit_plan", lambda task, trajectories: AuditReport(residuals={"dynamics": 1e-3})
        )
        with pytest.raises(NoFeasiblePlan) as excinfo:
            plan(box_task, seed=0)
        failures = excinfo.value.diagnostics["failures"]
        assert [f["stage"] for f in failures] == ["audit", "audit"]
        assert failures[0]["residuals"] == {"dynamics": 1e-3}

    def test_cost_below_bound(self, box_task, stub_pipeline):
        stub_pipeline.costs.update({"contact[1]": 0.5, "contact[3]": 0.5})
        with pytest.raises(NoFeasiblePlan) as excinfo:
            plan(box_task, seed=0)
        diagnostics = excinfo.value.diagnostics
        assert diagnostics["stage"] == "certificate"
        assert diagnostics["c_relax"] == 1.0
        assert diagnostics["c_round"] == 0.5
        assert isinstance(excinfo.value.__cause__, InvalidBound)


@pytest.mark.slow
class TestPlan:
    """End-to-end planning on the box."""

    def test_straight_push(self, box_task):
        result = plan(box_task, seed=0)
        assert result.modes[0] == "source"
        assert result.modes[-1] == "target"
        assert any(m.startswith("contact[") for m in result.modes)
        assert audit_plan(box_task, result.segments).passed()
        assert result.c_round >= result.c_relax - 1e-6
        assert result.gap == pytest.approx((result.c_round - result.c_relax) / result.c_relax)
        np.testing.assert_allclose(result.states()[0], box_task.initial.state(), atol=1e-6)
        np.testing.assert_allclose(result.states()[-1], box_task.target.state(), atol=1e-6)
        assert result.forces

    def test_deterministic(self, box_task):
        first = plan(box_task, seed=1).to_dict(include_timings=False)
        second = plan(box_task, seed=1).to_dict(include_timings=False)
        assert first == second

    def test_pure_translation_certificate(self, box_task):
        result = plan(box_task, seed=0)
        contacts = [m for m in result.modes if m.startswith("contact[")]
        assert contacts == ["contact[3]"]
        angles = np.arctan2(result.states()[:, 3], result.states()[:, 2])
        assert np.max(np.abs(angles)) <= 1e-4
        (segment,) = [s for s in result.segments if s.mode.kind.value == "contact"]
        for f in segment.inputs[:, 0:2]:
            if np.linalg.norm(f) > 1e-6:
                assert abs(f[1]) / np.linalg.norm(f) <= 1e-6
        assert result.gap <= 0.05


@pytest.mark.slow
class TestBatches:
    """Random-instance batches through the batch runner."""

    def test_box_batch(self):
        frame = run_batch("box", 20, seed=0, timings=False)
        assert frame["success"].all()
        assert (frame["c_relax"] <= frame["c_round"] + 1e-6).all()
        assert frame["gap"].median() <= 0.25

    def test_tee_batch(self):
        frame = run_batch("tee", 5, seed=0, timings=False)
        assert frame["success"].all()

    def test_batch_is_reproducible(self):
        first = run_batch("box", 2, seed=3, timings=False)
        second = run_batch("box", 2, seed=3, timings=False)
        assert first.to_csv(index=False) == second.to_csv(index=False)
