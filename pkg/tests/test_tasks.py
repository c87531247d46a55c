"""Tests for pushplan.tasks module."""

import json

import numpy as np
import pytest

from pushplan.tasks import (
    ANTIPODAL_MARGIN,
    load_task,
    parse_task,
    preset_task,
    sample_task,
    task_document,
)
from pushplan.types import TaskFileError

VALID_TASK = """{
  "schema_version": 1,
  "name": "box-straight",
  "geometry": {"preset": "box"},
  "initial": {"slider_position": [0, 0], "slider_angle": 0, "pusher_position": [-0.2, 0]},
  "target": {"slider_position": [0.1, 0], "slider_angle": 0, "pusher_position": [-0.2, 0]},
  "friction": {"mu_pusher": 0.1},
  "knots": 4,
  "seed": 7
}
"""


def document(**overrides) -> str:
    data = json.loads(VALID_TASK)
    data.update(overrides)
    return json.dumps(data, indent=2)


class TestParseTask:
    """Tests for reading and validating task documents."""

    def test_valid(self):
        parsed = parse_task(VALID_TASK)
        assert parsed.seed == 7
        assert parsed.task.name == "box-straight"
        assert parsed.task.num_knots == 4
        assert parsed.task.friction.mu_pusher == 0.1
        assert parsed.task.friction.mu_table == 0.5
        assert parsed.task.geometry.num_faces == 4

    def test_name_defaults_to_file_stem(self):
        data = json.loads(VALID_TASK)
        del data["name"]
        assert parse_task(json.dumps(data), source="tasks/push-left.json").task.name == "push-left"

    def test_unknown_key_has_line(self):
        text = VALID_TASK.replace('"knots": 4,', '"knots": 4,\n  "colour": "red",')
        with pytest.raises(TaskFileError, match=r"<task>:9: colour: unknown key"):
            parse_task(text)

    def test_nested_error_line_follows_enclosing_object(self):
        text = VALID_TASK.replace('"slider_position": [0.1, 0]', '"slider_position": "far"')
        with pytest.raises(TaskFileError, match=r"<task>:6: target.slider_position: expected a list of 2"):
            parse_task(text)

    def test_unknown_nested_key(self):
        text = document(friction={"mu_pushr": 0.1})
        with pytest.raises(TaskFileError, match="friction.mu_pushr: unknown key"):
            parse_task(text)

    def test_missing_schema_version(self):
        data = json.loads(VALID_TASK)
        del data["schema_version"]
        with pytest.raises(TaskFileError, match="schema_version: missing required field"):
            parse_task(json.dumps(data))

    def test_unsupported_version(self):
        with pytest.raises(TaskFileError, match="unsupported version 2"):
            parse_task(document(schema_version=2))

    def test_invalid_json(self):
        with pytest.raises(TaskFileError, match=r"bad.json:1:\d+: invalid JSON"):
            parse_task("{schema_version: 1}", source="bad.json")

    def test_geometry_needs_exactly_one_source(self):
        text = document(geometry={"preset": "box", "vertices": [[0, 0], [1, 0], [0, 1]]})
        with pytest.raises(TaskFileError, match="exactly one"):
            parse_task(text)

    def test_unknown_preset(self):
        with pytest.raises(TaskFileError, match="Available presets"):
            parse_task(document(geometry={"preset": "disk"}))

    def test_wrong_types(self):
        with pytest.raises(TaskFileError, match="knots: expected an integer"):
            parse_task(document(knots=2.5))
        with pytest.raises(TaskFileError, match=r"initial.pusher_position: expected a list of 2"):
            parse_task(
                document(initial={"slider_position": [0, 0], "slider_angle": 0, "pusher_position": [0.2]})
            )

    def test_pusher_inside_slider(self):
        text = document(initial={"slider_position": [0, 0], "slider_angle": 0, "pusher_position": [0.0, 0.0]})
        with pytest.raises(TaskFileError, match="invalid task"):
            parse_task(text)

    def test_too_few_knots(self):
        with pytest.raises(TaskFileError, match="invalid task"):
            parse_task(document(knots=1))


class TestLoadTask:
    """Tests for task files on disk."""

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_task(tmp_path / "missing.json")

    def test_reads_file(self, tmp_path):
        path = tmp_path / "push.json"
        path.write_text(VALID_TASK)
        assert load_task(path).task.name == "box-straight"

    def test_document_round_trip(self, box_task):
        parsed = parse_task(json.dumps(task_document(box_task, seed=3)))
        assert parsed.seed == 3
        assert parsed.task.to_dict() == box_task.to_dict()


class TestSampling:
    """Tests for random and preset tasks."""

    def test_same_seed_same_task(self):
        first = sample_task("box", np.random.default_rng(11))
        second = sample_task("box", np.random.default_rng(11))
        assert first.to_dict() == second.to_dict()

    def test_samples_are_valid(self):
        rng = np.random.default_rng(5)
        for i in range(10):
            task = sample_task("tee", rng, name=f"tee-{i}", num_knots=2)
            delta = abs(task.target.slider_angle - task.initial.slider_angle) % (2 * np.pi)
            assert abs(delta - np.pi) > ANTIPODAL_MARGIN
            assert task.num_knots == 2
            assert max(abs(v) for v in task.initial.slider_position) <= task.workspace_side / 2

    def test_preset_task_is_stationary(self):
        task = preset_task("box", num_knots=2)
        assert task.name == "box"
        assert task.num_knots == 2
        np.testing.assert_allclose(task.initial.state(), task.target.state())
