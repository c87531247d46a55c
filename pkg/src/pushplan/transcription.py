"""Per-mode trajectory transcriptions.

A ModeTranscription is the discrete trajectory problem of one graph vertex:
a flat variable vector x, affine rows over x̃ = (1, x), quadratic equalities
(contact modes only), convex cost atoms and affine maps from x̃ to the state,
input and contact point at every knot.

Contact modes (sticking on face i), per knot k and interval k:
    knot:      p^S_k (2), r_k (2), λ^c_k (1)
    interval:  λ_n,k, λ_f,k
    p^c_k = q_i + λ^c_k t̂_i,  p^P_k = p^c_k + ρ n̂_i,  f_k = −λ_n,k n̂_i + λ_f,k t̂_i

Non-contact modes (pusher in region Q_i), per knot k and interval k:
    knot:      p^S_k (2), r_k (2), p^P_k (2)
    interval:  v^P_k (2)

Variables are ordered knot 0, interval 0, knot 1, ... so that the quadratic
constraints of interval k only touch the band group {knot k, interval k, knot k+1}.
"""

import logging
from dataclasses import dataclass, field, replace
from ._compat import StrEnum

import numpy as np

from .config import transcription_default
from .conic import Affine, AffineBlock, RotatedCone, SecondOrderCone
from .dynamics import INPUT_DIM, STATE_DIM, ContactModeKind, LimitSurfaceModel, mode_constraint_builders
from .geometry import RegionDecomposition, cross2, vertex_world_position
from .relaxation import (
    LoweredCost,
    QcqpProblem,
    QuadraticConstraint,
    TighteningContext,
)
from .types import CostWeights, FrictionParams, InvalidKnots, InvalidParams, MismatchedLayout

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

NORM_SMOOTHING = 1e-12  # below this norm the arc-length gradient is taken as zero

# =============================================================================
# Modes and trajectories
# =============================================================================


class ModeKind(StrEnum):
    CONTACT = "contact"
    NONCONTACT = "noncontact"
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class ModeId:
    """Which mode a transcription describes; ``face`` is the face or region index."""

    kind: ModeKind
    face: int | None = None

    def __str__(self) -> str:
        if self.kind is ModeKind.CONTACT:
            return f"contact[{self.face}]"
        if self.kind is ModeKind.NONCONTACT:
            return f"free[{self.face}]"
        return self.kind.value


@dataclass
class KnotTrajectory:
    """Concrete knot values of one mode.

    Attributes:
        mode: Mode the trajectory belongs to
        h: Timestep in seconds
        states: (N, 6) rows (p^S, r, p^P); p^S world frame, p^P slider frame
        inputs: (N-1, 4) rows (f, v^P) in the slider frame
        contact_points: (N-1, 2) contact points in the slider frame, None without contact
    """

    mode: ModeId
    h: float
    states: np.ndarray
    inputs: np.ndarray
    contact_points: np.ndarray | None = None

    @property
    def num_knots(self) -> int:
        return len(self.states)

    def to_dict(self) -> dict:
        return {
            "mode": str(self.mode),
            "h": self.h,
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "contact_points": None if self.contact_points is None else self.contact_points.tolist(),
        }


# =============================================================================
# Cost atoms
# =============================================================================


@dataclass(frozen=True, eq=False)
class NormCost:
    """weight · ‖M x̃‖₂, lowered to a second-order cone epigraph."""

    weight: float
    M: np.ndarray
    label: str = ""

    def value(self, xt: np.ndarray) -> float:
        return self.weight * float(np.linalg.norm(self.M @ xt))

    def gradient(self, xt: np.ndarray) -> np.ndarray:
        z = self.M @ xt
        norm = np.linalg.norm(z)
        if norm < NORM_SMOOTHING:
            return np.zeros(len(xt) - 1)
        return self.weight * (self.M.T @ z)[1:] / norm

    def lower(self, first_extra: int) -> LoweredCost:
        t = first_extra
        atom = SecondOrderCone(Affine({t: 1.0}), AffineBlock.from_matrix(self.M))
        return LoweredCost(atoms=[atom], cost=Affine({t: self.weight}), num_extra=1)

    def epigraph_values(self, xt: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(self.M @ xt)])


@dataclass(frozen=True, eq=False)
class SquaredNormCost:
    """weight · ‖M x̃‖₂², lowered to the rotated cone t·x̃₀ ≥ weight‖M x̃‖²."""

    weight: float
    M: np.ndarray
    label: str = ""

    def value(self, xt: np.ndarray) -> float:
        z = self.M @ xt
        return self.weight * float(z @ z)

    def gradient(self, xt: np.ndarray) -> np.ndarray:
        return 2.0 * self.weight * (self.M.T @ (self.M @ xt))[1:]

    def matrix(self) -> np.ndarray:
        return self.weight * (self.M.T @ self.M)

    def lower(self, first_extra: int) -> LoweredCost:
        t = first_extra
        atom = RotatedCone(
            Affine({t: 1.0}), Affine({0: 1.0}), AffineBlock.from_matrix(np.sqrt(self.weight) * self.M)
        )
        return LoweredCost(atoms=[atom], cost=Affine({t: 1.0}), num_extra=1)

    def epigraph_values(self, xt: np.ndarray) -> np.ndarray:
        return np.array([self.value(xt)])


@dataclass(frozen=True, eq=False)
class ProximityCost:
    """ψ = max_j scale / (1 + φ_j(x̃)/k_φ) over the gap rows G.

    Lowered with one epigraph variable t and, per row, the rotated cone
    t·(x̃₀ + φ_j/k_φ) ≥ scale·x̃₀².
    """

    scale: float
    k_phi: float
    G: np.ndarray
    label: str = ""

    def _terms(self, xt: np.ndarray) -> np.ndarray:
        denom = 1.0 + (self.G @ xt) / self.k_phi
        return np.where(denom > 0, self.scale / np.maximum(denom, 1e-300), np.inf)

    def value(self, xt: np.ndarray) -> float:
        return float(np.max(self._terms(xt)))

    def gradient(self, xt: np.ndarray) -> np.ndarray:
        terms = self._terms(xt)
        j = int(np.argmax(terms))
        denom = 1.0 + float(self.G[j] @ xt) / self.k_phi
        return -self.scale / (denom**2 * self.k_phi) * self.G[j, 1:]

    def lower(self, first_extra: int) -> LoweredCost:
        t = first_extra
        root = AffineBlock.from_rows([Affine({0: np.sqrt(self.scale)})])
        atoms = []
        for row in self.G:
            v = Affine({k: float(c) / self.k_phi for k, c in enumerate(row) if c != 0}) + Affine({0: 1.0})
            atoms.append(RotatedCone(Affine({t: 1.0}), v, root))
        return LoweredCost(atoms=atoms, cost=Affine({t: 1.0}), num_extra=1)

    def epigraph_values(self, xt: np.ndarray) -> np.ndarray:
        return np.array([self.value(xt)])


@dataclass(frozen=True, eq=False)
class ConstantCost:
    """A fixed amount, carried on the homogenizer."""

    amount: float
    label: str = ""

    def value(self, xt: np.ndarray) -> float:
        return self.amount * float(xt[0])

    def gradient(self, xt: np.ndarray) -> np.ndarray:
        return np.zeros(len(xt) - 1)

    def lower(self, first_extra: int) -> LoweredCost:
        return LoweredCost(atoms=[], cost=Affine({0: self.amount}), num_extra=0)

    def epigraph_values(self, xt: np.ndarray) -> np.ndarray:
        return np.zeros(0)


CostAtom = NormCost | SquaredNormCost | ProximityCost | ConstantCost


# =============================================================================
# Transcription container
# =============================================================================


@dataclass(frozen=True, eq=False)
class ModeTranscription:
    """Discrete trajectory problem of one mode.

    Attributes:
        mode: Mode identifier
        num_knots: Number of state knots N (N - 1 intervals)
        h: Timestep in seconds
        layout: Symbol name to index array, one row per knot or interval
        num_vars: Length of x
        A_eq: Rows of A x̃ = 0
        A_ineq: Rows of A x̃ ≥ 0
        quadratics: Quadratic equalities (empty for convex modes)
        state_maps: (N, 6, n+1) affine maps x̃ → state
        input_maps: (N-1, 4, n+1) affine maps x̃ → input
        contact_maps: (N-1, 2, n+1) affine maps x̃ → contact point, or None
        groups: Band groups over variable indices
        frame_constraints: Slider-frame dynamics equalities used for tightening
        costs: Convex cost atoms
    """

    mode: ModeId
    num_knots: int
    h: float
    layout: dict[str, np.ndarray]
    num_vars: int
    A_eq: np.ndarray
    A_ineq: np.ndarray
    quadratics: tuple[QuadraticConstraint, ...]
    state_maps: np.ndarray
    input_maps: np.ndarray
    contact_maps: np.ndarray | None = None
    groups: tuple[tuple[int, ...], ...] = ()
    frame_constraints: tuple[QuadraticConstraint, ...] = ()
    costs: tuple = field(default=())

    @property
    def is_convex(self) -> bool:
        return not self.quadratics

    @property
    def initial_state_map(self) -> np.ndarray:
        return self.state_maps[0]

    @property
    def terminal_state_map(self) -> np.ndarray:
        return self.state_maps[-1]

    def rotation_indices(self) -> tuple[tuple[int, int], ...]:
        return tuple((int(r[0]), int(r[1])) for r in self.layout["r"])

    def to_qcqp(self, lift_squares: bool | None = None) -> QcqpProblem:
        """The transcription as a QcqpProblem.

        Args:
            lift_squares: Move squared-norm costs into Q₀ so the relaxation lifts
                them through the moment matrix (default: for non-convex modes)
        """
        if lift_squares is None:
            lift_squares = not self.is_convex
        Q0 = np.zeros((self.num_vars + 1, self.num_vars + 1))
        costs = []
        for atom in self.costs:
            if lift_squares and isinstance(atom, SquaredNormCost):
                Q0 += atom.matrix()
            else:
                costs.append(atom)
        return QcqpProblem(
            n=self.num_vars,
            Q0=Q0,
            quadratics=self.quadratics,
            A_ineq=self.A_ineq,
            A_eq=self.A_eq,
            groups=self.groups,
            costs=tuple(costs),
        )

    def tightening_context(self, r_source, r_target) -> TighteningContext:
        return TighteningContext(
            rotation_indices=self.rotation_indices(),
            r_source=np.asarray(r_source, dtype=float),
            r_target=np.asarray(r_target, dtype=float),
            frame_constraints=self.frame_constraints,
        )

    def homogeneous(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            raise MismatchedLayout(f"{self.mode} expects {self.num_vars} variables, got {x.shape}")
        return np.concatenate([[1.0], x])

    def objective(self, x) -> float:
        xt = self.homogeneous(x)
        return sum(atom.value(xt) for atom in self.costs)

    def trajectory(self, x) -> KnotTrajectory:
        """Evaluate the state, input and contact maps at ``x``."""
        xt = self.homogeneous(x)
        return KnotTrajectory(
            mode=self.mode,
            h=self.h,
            states=self.state_maps @ xt,
            inputs=self.input_maps @ xt if len(self.input_maps) else np.zeros((0, INPUT_DIM)),
            contact_points=None if self.contact_maps is None else self.contact_maps @ xt,
        )


# =============================================================================
# Builders
# =============================================================================


class _Layout:
    """Sequential allocator of named variable blocks."""

    def __init__(self):
        self.size = 0
        self.blocks: dict[str, list[list[int]]] = {}

    def add(self, name: str, dim: int) -> list[int]:
        idx = list(range(self.size, self.size + dim))
        self.size += dim
        self.blocks.setdefault(name, []).append(idx)
        return idx

    def freeze(self) -> dict[str, np.ndarray]:
        return {name: np.array(rows, dtype=int) for name, rows in self.blocks.items()}


class _Quadratic:
    """Builder for a symmetric homogeneous quadratic form over x̃."""

    def __init__(self, n: int):
        self.Q = np.zeros((n + 1, n + 1))

    def const(self, c: float) -> "_Quadratic":
        self.Q[0, 0] += c
        return self

    def linear(self, i: int, c: float) -> "_Quadratic":
        self.Q[0, i + 1] += c / 2
        self.Q[i + 1, 0] += c / 2
        return self

    def bilinear(self, i: int, j: int, c: float) -> "_Quadratic":
        self.Q[i + 1, j + 1] += c / 2
        self.Q[j + 1, i + 1] += c / 2
        return self

    def build(self, label: str, scale: float = 1.0) -> QuadraticConstraint:
        return QuadraticConstraint(Q=self.Q, label=label, scale=scale)


def _check_knots(num_knots: int | None, h: float | None) -> tuple[int, float]:
    num_knots = int(transcription_default("knots")) if num_knots is None else int(num_knots)
    h = float(transcription_default("timestep")) if h is None else float(h)
    if num_knots < 2:
        raise InvalidKnots(f"A mode needs at least 2 knots, got {num_knots}")
    if h <= 0:
        raise InvalidParams(f"Timestep must be positive, got {h}")
    return num_knots, h


def _box_rows(n: int, indices, lower: float, upper: float) -> list[np.ndarray]:
    rows = []
    for i in indices:
        lo = np.zeros(n + 1)
        lo[0], lo[i + 1] = -lower, 1.0
        hi = np.zeros(n + 1)
        hi[0], hi[i + 1] = upper, -1.0
        rows.extend([lo, hi])
    return rows


def _vertex_map(state_map: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Affine map x̃ → world position of slider-frame point ν (p^S + R(r)ν)."""
    rotate = np.array([[nu[0], -nu[1]], [nu[1], nu[0]]])
    return state_map[0:2] + rotate @ state_map[2:4]


def _pose_bounds(n: int, layout: dict[str, np.ndarray], half: float) -> list[np.ndarray]:
    rows = _box_rows(n, layout["p_S"].ravel(), -half, half)
    rows += _box_rows(n, layout["r"].ravel(), -1.0, 1.0)
    return rows


def _reflex_ends(decomp: RegionDecomposition, face_index: int) -> tuple[bool, bool]:
    faces = decomp.geometry.faces
    n = len(faces)
    face = faces[face_index]
    prev_face = faces[(face_index - 1) % n]
    next_face = faces[(face_index + 1) % n]
    return cross2(prev_face.tangent, face.tangent) < 0, cross2(face.tangent, next_face.tangent) < 0


def build_contact_mode(
    face_index: int,
    decomp: RegionDecomposition,
    model: LimitSurfaceModel,
    friction: FrictionParams,
    weights: CostWeights,
    num_knots: int | None = None,
    h: float | None = None,
) -> ModeTranscription:
    """Sticking-contact transcription on one face.

    The contact point moves along the face through λ^c, so the pusher sits at
    gap zero by construction. Non-convex terms are the rotation-force products
    of the translation rows, the rotation chord constraint with the λ^c·λ_n
    torque term, and ‖r_k‖² = 1.

    Args:
        face_index: Face in contact
        decomp: Region decomposition (slider geometry, pusher radius, workspace)
        model: Limit surface
        friction: Friction parameters (μ between pusher and slider)
        weights: Cost weights
        num_knots: Knot count N ≥ 2 (package default when omitted)
        h: Timestep (package default when omitted)

    Raises:
        InvalidKnots: If N < 2
    """
    num_knots, h = _check_knots(num_knots, h)
    face = decomp.geometry.faces[face_index]
    rho = decomp.pusher.radius
    q, t_hat, n_hat = face.q_start, face.tangent, face.normal

    layout_builder = _Layout()
    for k in range(num_knots):
        layout_builder.add("p_S", 2)
        layout_builder.add("r", 2)
        layout_builder.add("lam_c", 1)
        if k < num_knots - 1:
            layout_builder.add("lam", 2)
    layout = layout_builder.freeze()
    n = layout_builder.size
    p_s, r, lam_c, lam = layout["p_S"], layout["r"], layout["lam_c"][:, 0], layout["lam"]

    # Affine maps
    state_maps = np.zeros((num_knots, STATE_DIM, n + 1))
    for k in range(num_knots):
        state_maps[k, 0, p_s[k, 0] + 1] = state_maps[k, 1, p_s[k, 1] + 1] = 1.0
        state_maps[k, 2, r[k, 0] + 1] = state_maps[k, 3, r[k, 1] + 1] = 1.0
        state_maps[k, 4:6, 0] = q + rho * n_hat
        state_maps[k, 4:6, lam_c[k] + 1] = t_hat
    input_maps = np.zeros((num_knots - 1, INPUT_DIM, n + 1))
    contact_maps = np.zeros((num_knots - 1, 2, n + 1))
    for k in range(num_knots - 1):
        input_maps[k, 0:2, lam[k, 0] + 1] = -n_hat
        input_maps[k, 0:2, lam[k, 1] + 1] = t_hat
        input_maps[k, 2:4] = (state_maps[k + 1, 4:6] - state_maps[k, 4:6]) / h
        contact_maps[k, :, 0] = q
        contact_maps[k, :, lam_c[k] + 1] = t_hat

    # Affine constraints: mode template over (v^{c⊥}, λ_n, λ_f), bounds, friction cone
    template = mode_constraint_builders(ContactModeKind.STICKING, friction.mu_pusher)
    eq_rows, ineq_rows = [], []
    for k in range(num_knots - 1):
        z = np.zeros((3, n + 1))
        z[0, lam_c[k + 1] + 1], z[0, lam_c[k] + 1] = 1.0 / h, -1.0 / h
        z[1, lam[k, 0] + 1] = 1.0
        z[2, lam[k, 1] + 1] = 1.0
        eq_rows.extend(template.equalities @ z)
        ineq_rows.extend(template.inequalities @ z)
        cone = np.array([[friction.mu_pusher, -1.0], [friction.mu_pusher, 1.0]])
        for row in cone:
            a = np.zeros(n + 1)
            a[lam[k] + 1] = row
            ineq_rows.append(a)
    half = decomp.workspace_side / 2
    force_cap = np.sqrt(2.0) * model.c_f * decomp.workspace_side / h
    ineq_rows += _box_rows(n, lam[:, 0], 0.0, force_cap)
    start_reflex, end_reflex = _reflex_ends(decomp, face_index)
    lo = rho if start_reflex else 0.0
    hi = face.length - (rho if end_reflex else 0.0)
    if lo > hi:
        raise InvalidParams(f"Face {face_index} is shorter than the pusher allows ({face.length:.4f} m)")
    ineq_rows += _box_rows(n, lam_c, lo, hi)
    ineq_rows += _pose_bounds(n, layout, half)

    # Quadratic equalities
    quadratics, frame = [], []
    for k in range(num_knots - 1):
        c, s = r[k]
        ln, lf = lam[k]
        # f = a_n λ_n + a_f λ_f
        a_n, a_f = -n_hat, t_hat
        # world frame: c_f Δp^S − h R(r_k) f = 0, with R f = (c f_x − s f_y, s f_x + c f_y)
        for axis, (cc, sc) in enumerate([((1, 0), (0, -1)), ((0, 1), (1, 0))]):
            quad = _Quadratic(n)
            quad.linear(p_s[k + 1, axis], model.c_f).linear(p_s[k, axis], -model.c_f)
            for var, a in ((ln, a_n), (lf, a_f)):
                # coefficient of c is (cc · a), of s is (sc · a)
                quad.bilinear(c, var, -h * (cc[0] * a[0] + cc[1] * a[1]))
                quad.bilinear(s, var, -h * (sc[0] * a[0] + sc[1] * a[1]))
            quadratics.append(quad.build(f"translation[{k}].{'xy'[axis]}", scale=model.c_f))
        # rotation: c_τ (c_k s_{k+1} − s_k c_{k+1}) − h (q × f + λ^c λ_n) = 0
        quad = _Quadratic(n)
        quad.bilinear(c, r[k + 1, 1], model.c_tau).bilinear(s, r[k + 1, 0], -model.c_tau)
        quad.linear(ln, -h * cross2(q, a_n)).linear(lf, -h * cross2(q, a_f))
        quad.bilinear(lam_c[k], ln, -h * cross2(t_hat, a_n))
        quadratics.append(quad.build(f"rotation[{k}]", scale=model.c_tau))
        # slider frame: c_f R(r_k)ᵀ Δp^S − h f = 0, with Rᵀd = (c d_x + s d_y, −s d_x + c d_y)
        for axis, (cx, sx, cy, sy) in enumerate([(1, 0, 0, 1), (0, -1, 1, 0)]):
            quad = _Quadratic(n)
            for sign, knot in ((1.0, k + 1), (-1.0, k)):
                quad.bilinear(c, p_s[knot, 0], sign * model.c_f * cx)
                quad.bilinear(s, p_s[knot, 0], sign * model.c_f * sx)
                quad.bilinear(c, p_s[knot, 1], sign * model.c_f * cy)
                quad.bilinear(s, p_s[knot, 1], sign * model.c_f * sy)
            quad.linear(ln, -h * a_n[axis]).linear(lf, -h * a_f[axis])
            frame.append(quad.build(f"slider_frame[{k}].{'xy'[axis]}", scale=model.c_f))
    for k in range(num_knots):
        c, s = r[k]
        quad = _Quadratic(n).bilinear(c, c, 1.0).bilinear(s, s, 1.0).const(-1.0)
        quadratics.append(quad.build(f"so2[{k}]"))

    groups = []
    for k in range(num_knots - 1):
        members = list(p_s[k]) + list(r[k]) + [lam_c[k]] + list(lam[k])
        members += list(p_s[k + 1]) + list(r[k + 1]) + [lam_c[k + 1]]
        groups.append(tuple(sorted(int(m) for m in members)))

    skeleton = ModeTranscription(
        mode=ModeId(ModeKind.CONTACT, face_index),
        num_knots=num_knots,
        h=h,
        layout=layout,
        num_vars=n,
        A_eq=np.array(eq_rows).reshape(-1, n + 1),
        A_ineq=np.array(ineq_rows).reshape(-1, n + 1),
        quadratics=tuple(quadratics),
        state_maps=state_maps,
        input_maps=input_maps,
        contact_maps=contact_maps,
        groups=tuple(groups),
        frame_constraints=tuple(frame),
    )
    return replace(skeleton, costs=tuple(cost_terms(skeleton, weights, decomp)))


def build_noncontact_mode(
    region_index: int,
    decomp: RegionDecomposition,
    weights: CostWeights,
    num_knots: int | None = None,
    h: float | None = None,
) -> ModeTranscription:
    """Convex transcription of free pusher motion inside region Q_i.

    The slider pose is a variable held constant over the knots so it can be
    matched to neighbouring modes.

    Raises:
        InvalidKnots: If N < 2
    """
    num_knots, h = _check_knots(num_knots, h)
    layout_builder = _Layout()
    for k in range(num_knots):
        layout_builder.add("p_S", 2)
        layout_builder.add("r", 2)
        layout_builder.add("p_P", 2)
        if k < num_knots - 1:
            layout_builder.add("v_P", 2)
    layout = layout_builder.freeze()
    n = layout_builder.size
    p_s, r, p_p, v_p = layout["p_S"], layout["r"], layout["p_P"], layout["v_P"]

    state_maps = np.zeros((num_knots, STATE_DIM, n + 1))
    for k in range(num_knots):
        for row, idx in enumerate(np.concatenate([p_s[k], r[k], p_p[k]])):
            state_maps[k, row, idx + 1] = 1.0
    input_maps = np.zeros((num_knots - 1, INPUT_DIM, n + 1))
    for k in range(num_knots - 1):
        input_maps[k, 2, v_p[k, 0] + 1] = input_maps[k, 3, v_p[k, 1] + 1] = 1.0

    eq_rows, ineq_rows = [], []
    for k in range(1, num_knots):
        for a, b in zip(np.concatenate([p_s[k], r[k]]), np.concatenate([p_s[0], r[0]])):
            row = np.zeros(n + 1)
            row[a + 1], row[b + 1] = 1.0, -1.0
            eq_rows.append(row)
    for k in range(num_knots - 1):
        for axis in range(2):
            row = np.zeros(n + 1)
            row[p_p[k + 1, axis] + 1], row[p_p[k, axis] + 1], row[v_p[k, axis] + 1] = 1.0, -1.0, -h
            eq_rows.append(row)
    for k in range(num_knots):
        for hs in decomp.bounded_halfspaces(region_index):
            row = np.zeros(n + 1)
            row[0] = -hs.b
            row[p_p[k] + 1] = hs.a
            ineq_rows.append(row)
    ineq_rows += _pose_bounds(n, layout, decomp.workspace_side / 2)

    skeleton = ModeTranscription(
        mode=ModeId(ModeKind.NONCONTACT, region_index),
        num_knots=num_knots,
        h=h,
        layout=layout,
        num_vars=n,
        A_eq=np.array(eq_rows).reshape(-1, n + 1),
        A_ineq=np.array(ineq_rows).reshape(-1, n + 1),
        quadratics=(),
        state_maps=state_maps,
        input_maps=input_maps,
        groups=(tuple(range(n)),),
    )
    return replace(skeleton, costs=tuple(cost_terms(skeleton, weights, decomp)))


def build_endpoint_mode(kind: ModeKind, state, h: float | None = None) -> ModeTranscription:
    """Singleton mode fixing one state; used for the source and target vertices."""
    state = np.asarray(state, dtype=float)
    if state.shape != (STATE_DIM,):
        raise MismatchedLayout(f"Endpoint state must have {STATE_DIM} entries, got {state.shape}")
    h = float(transcription_default("timestep")) if h is None else float(h)
    n = STATE_DIM
    A_eq = np.zeros((n, n + 1))
    A_eq[:, 0] = -state
    A_eq[:, 1:] = np.eye(n)
    state_maps = np.zeros((1, STATE_DIM, n + 1))
    state_maps[0, :, 1:] = np.eye(n)
    return ModeTranscription(
        mode=ModeId(kind),
        num_knots=1,
        h=h,
        layout={"p_S": np.array([[0, 1]]), "r": np.array([[2, 3]]), "p_P": np.array([[4, 5]])},
        num_vars=n,
        A_eq=A_eq,
        A_ineq=np.zeros((0, n + 1)),
        quadratics=(),
        state_maps=state_maps,
        input_maps=np.zeros((0, INPUT_DIM, n + 1)),
        groups=(tuple(range(n)),),
    )


# =============================================================================
# Costs
# =============================================================================


def _is_zero(M: np.ndarray) -> bool:
    return not np.any(M != 0)


def proximity_rows(decomp: RegionDecomposition, region_index: int, pusher_map: np.ndarray) -> np.ndarray:
    """Gap rows φ_j(x̃) for the faces that stay ahead of the pusher in a region.

    Args:
        pusher_map: (2, n+1) affine map x̃ → p^P
    """
    rows = []
    for j in decomp.proximity_faces(region_index):
        region = decomp.regions[j]
        row = region.normal @ pusher_map
        row[0] -= float(region.normal @ region.anchor) + region.pusher_radius
        rows.append(row)
    return np.array(rows)


def cost_terms(transcription: ModeTranscription, weights: CostWeights, decomp: RegionDecomposition) -> list:
    """Convex cost atoms of a transcription.

    Per interval: pusher and mean slider-vertex arc lengths (norms), pusher and
    mean slider-vertex energies (squared norms) and the force regularization
    k_f·h‖f‖². Per knot: the proximity term ψ, constant h·k_T in contact.
    Slider terms are omitted where the pose is held constant.
    """
    mode = transcription.mode
    h = transcription.h
    S = transcription.state_maps
    U = transcription.input_maps
    atoms: list = []
    moving_slider = mode.kind is ModeKind.CONTACT
    vertices = decomp.geometry.vertices
    for k in range(transcription.num_knots - 1):
        delta_pusher = S[k + 1, 4:6] - S[k, 4:6]
        atoms.append(NormCost(weights.k_pP, delta_pusher, f"pusher_arc[{k}]"))
        if moving_slider:
            for i, nu in enumerate(vertices):
                delta = _vertex_map(S[k + 1], nu) - _vertex_map(S[k], nu)
                atoms.append(NormCost(weights.k_pS / len(vertices), delta, f"slider_arc[{k}][{i}]"))
        atoms.append(SquaredNormCost(weights.k_vP, U[k, 2:4], f"pusher_energy[{k}]"))
        if moving_slider:
            for i, nu in enumerate(vertices):
                velocity = (_vertex_map(S[k + 1], nu) - _vertex_map(S[k], nu)) / h
                atoms.append(SquaredNormCost(weights.k_vS / len(vertices), velocity, f"slider_energy[{k}][{i}]"))
        if not _is_zero(U[k, 0:2]):
            atoms.append(SquaredNormCost(weights.k_f * h, U[k, 0:2], f"force[{k}]"))
    for k in range(transcription.num_knots):
        if mode.kind is ModeKind.CONTACT:
            atoms.append(ConstantCost(h * weights.k_T, f"proximity[{k}]"))
        elif mode.kind is ModeKind.NONCONTACT:
            G = proximity_rows(decomp, mode.face, S[k, 4:6])
            atoms.append(ProximityCost(h * weights.k_T, weights.k_phi, G, f"proximity[{k}]"))
    return atoms


def proximity_value(gap: float, h: float, weights: CostWeights) -> float:
    """ψ contribution h·k_T / (1 + φ/k_φ) of a single gap value."""
    return h * weights.k_T / (1.0 + gap / weights.k_phi)


def evaluate_cost(traj: KnotTrajectory, weights: CostWeights, decomp: RegionDecomposition) -> float:
    """Evaluate the trajectory cost directly from knot values.

    Raises:
        MismatchedLayout: If the state or input arrays have the wrong shape
    """
    states = np.asarray(traj.states, dtype=float)
    inputs = np.asarray(traj.inputs, dtype=float)
    if states.ndim != 2 or states.shape[1] != STATE_DIM:
        raise MismatchedLayout(f"States must be (N, {STATE_DIM}), got {states.shape}")
    if inputs.shape != (max(len(states) - 1, 0), INPUT_DIM):
        raise MismatchedLayout(f"Inputs must be ({len(states) - 1}, {INPUT_DIM}), got {inputs.shape}")
    kind = traj.mode.kind
    if kind in (ModeKind.SOURCE, ModeKind.TARGET):
        return 0.0

    h = traj.h
    vertices = decomp.geometry.vertices
    total = 0.0
    for k in range(len(states) - 1):
        x0, x1 = states[k], states[k + 1]
        f, v_pusher = inputs[k, 0:2], inputs[k, 2:4]
        displacement = np.array(
            [
                vertex_world_position((x1[0:2], x1[2:4]), nu) - vertex_world_position((x0[0:2], x0[2:4]), nu)
                for nu in vertices
            ]
        )
        lengths = np.linalg.norm(displacement, axis=1)
        total += weights.k_pP * np.linalg.norm(x1[4:6] - x0[4:6])
        total += weights.k_pS * lengths.mean()
        total += weights.k_vP * float(v_pusher @ v_pusher)
        total += weights.k_vS * float(np.mean(lengths**2)) / h**2
        total += weights.k_f * h * float(f @ f)
    for k in range(len(states)):
        if kind is ModeKind.CONTACT:
            total += h * weights.k_T
        else:
            gaps = [decomp.gap(j, states[k, 4:6]) for j in decomp.proximity_faces(traj.mode.face)]
            total += max(proximity_value(g, h, weights) for g in gaps)
    return float(total)
