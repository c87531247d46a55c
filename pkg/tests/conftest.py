"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest

from pushplan.geometry import SliderGeometry, decompose_regions
from pushplan.planner import Configuration, TaskSpec
from pushplan.transcription import build_contact_mode
from pushplan.types import CostWeights, FrictionParams, PusherSpec


@pytest.fixture(autouse=True)
def reset_defaults_cache():
    """Reset the defaults cache before each test.

    This keeps tests isolated from each other's view of defaults.yml.
    """
    from pushplan.config import get_defaults

    get_defaults.cache_clear()

    yield

    get_defaults.cache_clear()


@pytest.fixture
def box():
    """The packaged 0.2 m square slider."""
    return SliderGeometry.from_preset("box")


@pytest.fixture
def box_decomp(box):
    """Region decomposition of the box with a 1 cm pusher in a 0.6 m workspace."""
    return decompose_regions(box, PusherSpec(radius=0.01), 0.6)


@pytest.fixture
def friction():
    return FrictionParams.from_dict()


@pytest.fixture
def weights():
    return CostWeights.from_dict()


def straight_push_point(contact, model, angle: float = 0.0, force: float = 1.0) -> np.ndarray:
    """Variables of a sticking push through the middle of face 0 of the box.

    The force acts along the inward normal at the face midpoint, so it produces
    no torque: the slider translates and keeps its rotation.
    """
    h = contact.h
    r = np.array([np.cos(angle), np.sin(angle)])
    R = np.array([[r[0], -r[1]], [r[1], r[0]]])
    step = h * (R @ np.array([0.0, force])) / model.c_f
    x = np.zeros(contact.num_vars)
    layout = contact.layout
    for k in range(contact.num_knots):
        x[layout["p_S"][k]] = k * step
        x[layout["r"][k]] = r
        x[layout["lam_c"][k]] = 0.1
    for k in range(contact.num_knots - 1):
        x[layout["lam"][k]] = (force, 0.0)
    return x


@pytest.fixture
def straight_push(box_decomp, friction, weights):
    """(transcription, model, variables) of a feasible three-knot push on face 0."""
    from pushplan.dynamics import limit_surface

    model = limit_surface(friction, box_decomp.geometry.characteristic_radius)
    contact = build_contact_mode(0, box_decomp, model, friction, weights, num_knots=3, h=0.5)
    return contact, model, straight_push_point(contact, model)


@pytest.fixture
def box_task(box):
    """Box pushed 10 cm along x with the pusher parked behind its left face."""
    return TaskSpec(
        geometry=box,
        initial=Configuration((0.0, 0.0), 0.0, (-0.2, 0.0)),
        target=Configuration((0.1, 0.0), 0.0, (-0.2, 0.0)),
        name="box-straight",
    )


@pytest.fixture
def push_point():
    """Builder of straight-push variables for other angles and forces."""
    return straight_push_point
