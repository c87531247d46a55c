"""Quasi-static slider-pusher dynamics.

Covers the ellipsoidal limit surface, the contact Jacobian, friction-cone and
contact-mode constraint templates, the forward-Euler step residual used by the
transcriptions and a forward simulator used to replay plans.

State and input layouts:
    x = (p^S_x, p^S_y, c, s, p^P_x, p^P_y)   slider position (world), rotation, pusher (slider frame)
    u = (f_x, f_y, v^P_x, v^P_y)             contact force and pusher velocity (slider frame)
"""

from dataclasses import dataclass
from ._compat import StrEnum

import numpy as np

from .geometry import cross2, rotation_matrix
from .types import FrictionParams, InvalidParams, MismatchedLayout

# =============================================================================
# Constants
# =============================================================================

STATE_DIM = 6
INPUT_DIM = 4
RESIDUAL_DIM = 5  # translation (2), rotation (1), pusher (2)
STATIONARY_TOL = 1e-8  # |V| below which a knot counts as not moving


@dataclass(frozen=True, eq=False)
class LimitSurfaceModel:
    """Ellipsoidal limit surface H(F) = ½ Fᵀ D F with D = diag(1/c_f, 1/c_f, 1/c_τ)."""

    c_f: float
    c_tau: float

    @property
    def D(self) -> np.ndarray:
        return np.diag([1.0 / self.c_f, 1.0 / self.c_f, 1.0 / self.c_tau])


@dataclass(frozen=True)
class SpatialForce:
    """Planar wrench F = (f_x, f_y, τ) applied to the slider, slider frame."""

    f: tuple[float, float]
    tau: float

    @classmethod
    def from_contact(cls, p_c, f) -> "SpatialForce":
        """Wrench of force ``f`` applied at contact point ``p_c`` (F = Jᵀ f)."""
        wrench = contact_jacobian(p_c).T @ np.asarray(f, dtype=float)
        force = cls(f=(float(wrench[0]), float(wrench[1])), tau=float(wrench[2]))
        expected = cross2(p_c, f)
        if abs(force.tau - expected) > 1e-12 * max(1.0, abs(expected)):
            raise MismatchedLayout(f"Torque {force.tau} does not match p_c x f = {expected}")
        return force

    def as_array(self) -> np.ndarray:
        return np.array([self.f[0], self.f[1], self.tau])


@dataclass(frozen=True)
class SpatialVelocity:
    """Planar twist V = (v_x, v_y, ω)."""

    v: tuple[float, float]
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v[0], self.v[1], self.omega])


@dataclass(frozen=True)
class ContactForceDecomposition:
    """Normal/tangential components of a contact force on one face.

    The Cartesian force is f = −λ_n n̂ + λ_f t̂ (λ_n pushes into the face).
    """

    lambda_n: float
    lambda_f: float
    face_index: int

    def force(self, normal, tangent) -> np.ndarray:
        return -self.lambda_n * np.asarray(normal) + self.lambda_f * np.asarray(tangent)

    @classmethod
    def from_force(cls, f, normal, tangent, face_index: int) -> "ContactForceDecomposition":
        f = np.asarray(f, dtype=float)
        return cls(
            lambda_n=float(-np.asarray(normal) @ f),
            lambda_f=float(np.asarray(tangent) @ f),
            face_index=face_index,
        )


def limit_surface(params: FrictionParams, r_char: float) -> LimitSurfaceModel:
    """Build the ellipsoidal limit surface for a slider.

    Args:
        params: Friction parameters
        r_char: Characteristic radius of the slider in meters

    Returns:
        LimitSurfaceModel with c_f = μ_S m g and c_τ = c r c_f

    Raises:
        InvalidParams: On nonpositive μ_S, mass, gravity or radius, or c outside [0, 1]
    """
    if params.mu_table <= 0:
        raise InvalidParams(f"mu_table must be positive, got {params.mu_table}")
    if params.mass <= 0:
        raise InvalidParams(f"mass must be positive, got {params.mass}")
    if params.gravity <= 0:
        raise InvalidParams(f"gravity must be positive, got {params.gravity}")
    if r_char <= 0:
        raise InvalidParams(f"characteristic radius must be positive, got {r_char}")
    if not 0 < params.c <= 1:
        raise InvalidParams(f"integration constant c must lie in (0, 1], got {params.c}")
    if params.mu_pusher < 0:
        raise InvalidParams(f"mu_pusher must be nonnegative, got {params.mu_pusher}")
    c_f = params.mu_table * params.mass * params.gravity
    return LimitSurfaceModel(c_f=c_f, c_tau=params.c * r_char * c_f)


def contact_jacobian(p_c) -> np.ndarray:
    """Return J(p_c) = [[1, 0, −p_y], [0, 1, p_x]]."""
    return np.array([[1.0, 0.0, -float(p_c[1])], [0.0, 1.0, float(p_c[0])]])


def quasi_static_velocity(model: LimitSurfaceModel, F: SpatialForce) -> SpatialVelocity:
    """Slider twist V = D F for an applied wrench."""
    V = model.D @ F.as_array()
    return SpatialVelocity(v=(float(V[0]), float(V[1])), omega=float(V[2]))


def rescale_forces_to_limit_surface(
    forces: list[SpatialForce],
    velocities: list[SpatialVelocity],
    model: LimitSurfaceModel,
) -> list[SpatialForce]:
    """Scale each moving wrench onto the limit surface H(F) = 1.

    Wrenches whose velocity is zero (within 1e-8) are returned unchanged.
    """
    if len(forces) != len(velocities):
        raise MismatchedLayout(f"{len(forces)} forces but {len(velocities)} velocities")
    scaled = []
    for F, V in zip(forces, velocities):
        vec = F.as_array()
        energy = float(vec @ model.D @ vec)
        if np.linalg.norm(V.as_array()) <= STATIONARY_TOL or energy <= 0:
            scaled.append(F)
            continue
        s = np.sqrt(2.0 / energy)
        scaled.append(SpatialForce(f=(s * F.f[0], s * F.f[1]), tau=s * F.tau))
    return scaled


def limit_surface_value(model: LimitSurfaceModel, F: SpatialForce) -> float:
    """H(F) = ½ Fᵀ D F."""
    vec = F.as_array()
    return 0.5 * float(vec @ model.D @ vec)


def friction_cone_residuals(dec: ContactForceDecomposition, mu: float) -> tuple[float, float]:
    """Return (λ_n, μλ_n − |λ_f|); the force is inside the cone iff both are ≥ 0."""
    return dec.lambda_n, mu * dec.lambda_n - abs(dec.lambda_f)


# =============================================================================
# Contact mode templates
# =============================================================================


class ContactModeKind(StrEnum):
    STICKING = "sticking"
    SLIDING_LEFT = "sliding_left"
    SLIDING_RIGHT = "sliding_right"


@dataclass(frozen=True)
class ContactModeTemplate:
    """Affine rows over z = (v^{c⊥}, λ_n, λ_f): ``equalities @ z = 0`` and ``inequalities @ z ≥ 0``."""

    kind: ContactModeKind
    equalities: np.ndarray
    inequalities: np.ndarray

    def residuals(self, v_perp: float, lambda_n: float, lambda_f: float):
        z = np.array([v_perp, lambda_n, lambda_f])
        return self.equalities @ z, self.inequalities @ z

    def is_satisfied(self, v_perp: float, lambda_n: float, lambda_f: float, tol: float = 1e-9) -> bool:
        eq, ineq = self.residuals(v_perp, lambda_n, lambda_f)
        return bool(np.all(np.abs(eq) <= tol) and np.all(ineq >= -tol))


def mode_constraint_builders(kind: ContactModeKind | str, mu: float) -> ContactModeTemplate:
    """Affine constraint template of a contact mode.

    sticking: v = 0; sliding_left: v ≤ 0, λ_f = −μλ_n; sliding_right: v ≥ 0, λ_f = μλ_n.
    """
    kind = ContactModeKind(kind)
    empty = np.zeros((0, 3))
    if kind is ContactModeKind.STICKING:
        return ContactModeTemplate(kind, np.array([[1.0, 0.0, 0.0]]), empty)
    if kind is ContactModeKind.SLIDING_LEFT:
        return ContactModeTemplate(kind, np.array([[0.0, mu, 1.0]]), np.array([[-1.0, 0.0, 0.0]]))
    return ContactModeTemplate(kind, np.array([[0.0, -mu, 1.0]]), np.array([[1.0, 0.0, 0.0]]))


# =============================================================================
# Euler step
# =============================================================================


def _check_layout(x_k, x_next, u_k):
    x_k = np.asarray(x_k, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    if x_k.shape != (STATE_DIM,) or x_next.shape != (STATE_DIM,):
        raise MismatchedLayout(f"States must have {STATE_DIM} entries, got {x_k.shape} and {x_next.shape}")
    if u_k.shape != (INPUT_DIM,):
        raise MismatchedLayout(f"Inputs must have {INPUT_DIM} entries, got {u_k.shape}")
    return x_k, x_next, u_k


def euler_step_residual(x_k, x_next, u_k, h: float, model: LimitSurfaceModel, contact_point) -> np.ndarray:
    """Forward-Euler residual of the quasi-static dynamics.

    Returns the 5-vector
        Δp^S − h R(r_k) f / c_f                                     (2)
        c_k s_{k+1} − s_k c_{k+1} − h ω_k, ω_k = (p^c × f) / c_τ      (1)
        Δp^P − h v^P                                                 (2)
    The rotation row is the sine of the knot-to-knot rotation, which equals hω
    exactly when both rotations are unit vectors.

    Args:
        x_k, x_next: Consecutive states
        u_k: Input (f, v^P) applied over the interval
        h: Timestep in seconds
        model: Limit surface
        contact_point: Contact point in the slider frame (any point when f = 0)

    Raises:
        MismatchedLayout: If dimensions disagree with the state/input layout
    """
    x_k, x_next, u_k = _check_layout(x_k, x_next, u_k)
    f = u_k[:2]
    omega = cross2(contact_point, f) / model.c_tau
    translation = x_next[:2] - x_k[:2] - h * (rotation_matrix(x_k[2:4]) @ f) / model.c_f
    rotation = x_k[2] * x_next[3] - x_k[3] * x_next[2] - h * omega
    pusher = x_next[4:6] - x_k[4:6] - h * u_k[2:4]
    return np.concatenate([translation, [rotation], pusher])


def euler_step_jacobian(x_k, x_next, u_k, h: float, model: LimitSurfaceModel, contact_point) -> np.ndarray:
    """Jacobian of :func:`euler_step_residual` with respect to (x_k, x_next, u_k).

    Returns:
        Array of shape (5, 16)
    """
    x_k, x_next, u_k = _check_layout(x_k, x_next, u_k)
    c, s = x_k[2], x_k[3]
    fx, fy = u_k[0], u_k[1]
    px, py = float(contact_point[0]), float(contact_point[1])
    J = np.zeros((RESIDUAL_DIM, 2 * STATE_DIM + INPUT_DIM))
    J[0:2, 6:8] = np.eye(2)
    J[0:2, 0:2] = -np.eye(2)
    k = h / model.c_f
    # d(R f)/dc = (fx, fy), d(R f)/ds = (-fy, fx)
    J[0, 2] = -k * fx
    J[1, 2] = -k * fy
    J[0, 3] = k * fy
    J[1, 3] = -k * fx
    J[0:2, 12:14] = -k * rotation_matrix((c, s))

    J[2, 2] = x_next[3]
    J[2, 3] = -x_next[2]
    J[2, 8] = -s
    J[2, 9] = c
    J[2, 12] = h * py / model.c_tau
    J[2, 13] = -h * px / model.c_tau

    J[3:5, 10:12] = np.eye(2)
    J[3:5, 4:6] = -np.eye(2)
    J[3:5, 14:16] = -h * np.eye(2)
    return J


def euler_step(x_k, u_k, h: float, model: LimitSurfaceModel, contact_point) -> np.ndarray:
    """Advance one step so that :func:`euler_step_residual` vanishes.

    The rotation advances by the angle whose sine is hω and the result is
    renormalized to a unit vector.

    Raises:
        ValueError: If |hω| > 1 (no rotation has that sine)
    """
    x_k = np.asarray(x_k, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    _check_layout(x_k, x_k, u_k)
    f = u_k[:2]
    r = x_k[2:4] / np.linalg.norm(x_k[2:4])
    sin_step = h * cross2(contact_point, f) / model.c_tau
    if abs(sin_step) > 1:
        raise ValueError(f"Rotation step sine {sin_step:.3f} exceeds 1; reduce the timestep")
    cos_step = np.sqrt(1.0 - sin_step**2)
    r_next = rotation_matrix((cos_step, sin_step)) @ r
    x_next = np.empty(STATE_DIM)
    x_next[:2] = x_k[:2] + h * (rotation_matrix(r) @ f) / model.c_f
    x_next[2:4] = r_next / np.linalg.norm(r_next)
    x_next[4:6] = x_k[4:6] + h * u_k[2:4]
    return x_next


def simulate(x0, inputs, contact_points, h: float, model: LimitSurfaceModel) -> np.ndarray:
    """Roll out :func:`euler_step` from ``x0``.

    Args:
        x0: Initial state
        inputs: Sequence of inputs, one per interval
        contact_points: Contact point per interval (ignored where the force is zero)
        h: Timestep
        model: Limit surface

    Returns:
        Array of states with shape (len(inputs) + 1, 6)
    """
    if len(inputs) != len(contact_points):
        raise MismatchedLayout(f"{len(inputs)} inputs but {len(contact_points)} contact points")
    states = [np.asarray(x0, dtype=float)]
    for u, p_c in zip(inputs, contact_points):
        states.append(euler_step(states[-1], u, h, model, p_c))
    return np.array(states)
