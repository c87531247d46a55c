"""Type definitions shared across the planner.

Holds the frozen configuration dataclasses (each with a ``from_dict`` constructor
that falls back to ``defaults.yml``) and the exception hierarchy.
"""

from dataclasses import asdict, dataclass, field
from typing import Any

from .config import get_defaults

# =============================================================================
# Exceptions
# =============================================================================


class PushPlanError(Exception):
    """Base class for all planner errors."""

    pass


class DegeneratePolygon(PushPlanError):
    """Raised when a slider polygon is not simple or has fewer than three vertices."""

    pass


class NoContainingRegion(PushPlanError):
    """Raised when a pusher position lies in no collision-free region."""

    pass


class InvalidParams(PushPlanError):
    """Raised on physically meaningless friction or model parameters."""

    pass


class MismatchedLayout(PushPlanError):
    """Raised when vector or trajectory dimensions disagree with a layout."""

    pass


class InvalidKnots(PushPlanError):
    """Raised when a transcription is requested with fewer than two knots."""

    pass


class UnsupportedConstraint(PushPlanError):
    """Raised when a quadratic constraint does not fit inside a single band group."""

    pass


class NotSolved(PushPlanError):
    """Raised when solution values are requested from an unsolved program."""

    pass


class IndexOutOfRange(PushPlanError):
    """Raised when a conic atom references a variable outside the program."""

    pass


class DisconnectedGraph(PushPlanError):
    """Raised when the source cannot reach the target in a graph of convex sets."""

    pass


class UnreachableTarget(DisconnectedGraph):
    """Raised when a constructed mode graph has no source-target path."""

    pass


class NoPathFound(PushPlanError):
    """Raised when every rounding traversal dead-ends."""

    pass


class InfeasibleRestriction(PushPlanError):
    """Raised when the convex program of a fixed path is infeasible."""

    pass


class InvalidBound(PushPlanError):
    """Raised when a rounded cost falls below the relaxation lower bound."""

    pass


class TaskFileError(PushPlanError):
    """Raised on malformed or schema-violating task files."""

    pass


class RefinementFailed(PushPlanError):
    """Raised when local refinement cannot reach the feasibility tolerances."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoFeasiblePlan(PushPlanError):
    """Raised when no rounding candidate yields a feasible trajectory."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# =============================================================================
# Configuration
# =============================================================================


def _section(name: str) -> dict:
    return dict(get_defaults().get(name, {}))


@dataclass(frozen=True)
class FrictionParams:
    """Coulomb friction and limit-surface parameters.

    Attributes:
        mu_table: Slider-table friction coefficient (μ_S)
        mu_pusher: Pusher-slider friction coefficient (μ)
        c: Limit-surface integration constant in [0, 1]
        mass: Slider mass in kg
        gravity: Gravitational acceleration in m/s²
    """

    mu_table: float
    mu_pusher: float
    c: float
    mass: float
    gravity: float

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "FrictionParams":
        """Create from a friction JSON/YAML fragment, filling gaps from defaults."""
        merged = _section("friction") | dict(data or {})
        return cls(
            mu_table=float(merged["mu_table"]),
            mu_pusher=float(merged["mu_pusher"]),
            c=float(merged["c"]),
            mass=float(merged["mass"]),
            gravity=float(merged["gravity"]),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostWeights:
    """Weights of the trajectory cost (arc lengths, energies, force and proximity)."""

    k_pP: float
    k_pS: float
    k_vP: float
    k_vS: float
    k_f: float
    k_T: float
    k_phi: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise InvalidParams(f"Cost weight {name} must be positive, got {value}")

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "CostWeights":
        """Create from a weights fragment; unspecified weights take the defaults."""
        merged = _section("weights") | dict(data or {})
        return cls(**{name: float(merged[name]) for name in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PusherSpec:
    """Circular pusher (finger) description."""

    radius: float = 0.0

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidParams(f"Pusher radius must be nonnegative, got {self.radius}")


@dataclass(frozen=True)
class SolverSettings:
    """Conic backend selection and termination tolerances."""

    backend: str = "CLARABEL"
    feasibility_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iterations: int = 500

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "SolverSettings":
        merged = _section("solver") | dict(data or {})
        return cls(
            backend=str(merged["backend"]).upper(),
            feasibility_tol=float(merged["feasibility_tol"]),
            gap_tol=float(merged["gap_tol"]),
            max_iterations=int(merged["max_iterations"]),
        )

    def with_tolerance(self, tol: float) -> "SolverSettings":
        """Return a copy using ``tol`` for both feasibility and gap."""
        return SolverSettings(self.backend, tol, tol, self.max_iterations)


@dataclass(frozen=True)
class RoundingSettings:
    """Flow-guided path rounding parameters."""

    attempts: int = 16
    flow_threshold: float = 1e-4

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "RoundingSettings":
        merged = _section("rounding") | dict(data or {})
        return cls(attempts=int(merged["attempts"]), flow_threshold=float(merged["flow_threshold"]))


@dataclass(frozen=True)
class RefinementSettings:
    """Local nonconvex refinement budget and tolerances."""

    max_iterations: int = 200
    damping: float = 1e-3
    quadratic_tol: float = 1e-6
    affine_tol: float = 1e-8

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "RefinementSettings":
        merged = _section("refinement") | dict(data or {})
        return cls(
            max_iterations=int(merged["max_iterations"]),
            damping=float(merged["damping"]),
            quadratic_tol=float(merged["quadratic_tol"]),
            affine_tol=float(merged["affine_tol"]),
        )


@dataclass(frozen=True)
class PlannerSettings:
    """Bundle of the numerical settings used by one planning run."""

    solver: SolverSettings = field(default_factory=SolverSettings.from_dict)
    rounding: RoundingSettings = field(default_factory=RoundingSettings.from_dict)
    refinement: RefinementSettings = field(default_factory=RefinementSettings.from_dict)
