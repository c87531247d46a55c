"""Homogeneous QCQPs and their band-sparse Shor relaxation.

A QcqpProblem is stated over the homogeneous vector x̃ = (1, x): the cost is
x̃ᵀQ₀x̃ plus convex cost atoms, quadratic constraints read x̃ᵀQx̃ {=, ≥} 0 and
affine rows read A x̃ {=, ≥} 0.

The relaxation replaces x̃x̃ᵀ by a moment matrix. Only the entries that lie
inside one band group are created; each group gets a PSD block
[[X₀₀, yᵀ], [y, Y]] and neighbouring blocks share the variables of their
overlap, so overlap consistency holds by construction. Affine rows supported
inside a group are multiplied pairwise (RLT) before lifting; affine equalities
are multiplied by every variable of the group.

Local variable numbering of the lifted program:
    0           X₀₀ (homogenizer)
    1..n        first moments y
    n+1..       second moments, in group order
    then        epigraph variables of the convex cost atoms
"""

import logging
from dataclasses import dataclass, field, replace
from ._compat import StrEnum
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .conic import (
    Affine,
    AffineBlock,
    ConeAtom,
    ConicSet,
    Cost,
    NonnegCone,
    PsdCone,
    SolverOutcome,
    ZeroCone,
    assemble,
    solve,
    upper_triangle_pairs,
)
from .types import MismatchedLayout, NotSolved, SolverSettings, UnsupportedConstraint

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

PSD_TOL = 1e-7
CUT_DEGENERACY_TOL = 1e-6


class ConstraintSense(StrEnum):
    EQUAL = "eq"
    NONNEG = "ge"


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """x̃ᵀQx̃ {=, ≥} 0 with Q symmetric of size (n+1)×(n+1).

    ``scale`` converts the row into physical units: tolerances apply to
    value / scale, so a row multiplied through by c_f is checked like the
    Euler residual it encodes.
    """

    Q: np.ndarray
    sense: ConstraintSense = ConstraintSense.EQUAL
    label: str = ""
    scale: float = 1.0

    def value(self, xt: np.ndarray) -> float:
        return float(xt @ self.Q @ xt)

    def scaled_value(self, xt: np.ndarray) -> float:
        return self.value(xt) / self.scale

    def gradient(self, xt: np.ndarray) -> np.ndarray:
        """Gradient with respect to x (the homogenizer column dropped)."""
        return 2.0 * (self.Q @ xt)[1:]

    def support(self) -> set[int]:
        """Variable indices (into x) the constraint touches."""
        rows = np.flatnonzero(np.any(self.Q != 0, axis=1))
        return {int(a) - 1 for a in rows if a > 0}

    def violation(self, xt: np.ndarray) -> float:
        v = self.scaled_value(xt)
        return abs(v) if self.sense is ConstraintSense.EQUAL else max(0.0, -v)


@dataclass
class LoweredCost:
    """Conic encoding of a convex cost atom over x̃ plus epigraph variables."""

    atoms: list[ConeAtom]
    cost: Affine
    num_extra: int


class ConvexCostAtom(Protocol):
    """Convex cost term that can be lowered to cone atoms over first moments."""

    def value(self, xt: np.ndarray) -> float: ...

    def gradient(self, xt: np.ndarray) -> np.ndarray: ...

    def lower(self, first_extra: int) -> LoweredCost: ...

    def epigraph_values(self, xt: np.ndarray) -> np.ndarray: ...


def lower_costs(costs, first_extra: int) -> LoweredCost:
    """Lower a sequence of cost atoms, numbering epigraph variables from ``first_extra``."""
    atoms: list[ConeAtom] = []
    total = Affine()
    extra = 0
    for atom in costs:
        lowered = atom.lower(first_extra + extra)
        atoms.extend(lowered.atoms)
        total = total + lowered.cost
        extra += lowered.num_extra
    return LoweredCost(atoms=atoms, cost=total, num_extra=extra)


# =============================================================================
# QCQP
# =============================================================================


@dataclass(frozen=True, eq=False)
class QcqpProblem:
    """Quadratically constrained quadratic program in homogeneous form.

    Attributes:
        n: Number of variables (x̃ has n + 1 entries)
        Q0: Cost matrix, symmetric (n+1)×(n+1)
        quadratics: Quadratic constraints
        A_ineq: Rows of A x̃ ≥ 0, first column absorbing constants
        A_eq: Rows of A x̃ = 0
        groups: Band groups over variable indices; every quadratic fits in one
        costs: Convex cost atoms added to x̃ᵀQ₀x̃
    """

    n: int
    Q0: np.ndarray
    quadratics: tuple[QuadraticConstraint, ...] = ()
    A_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    groups: tuple[tuple[int, ...], ...] = ()
    costs: tuple = ()

    def __post_init__(self):
        size = self.n + 1
        if self.Q0.shape != (size, size):
            raise MismatchedLayout(f"Cost matrix must be {size}x{size}, got {self.Q0.shape}")
        for qc in self.quadratics:
            if qc.Q.shape != (size, size):
                raise MismatchedLayout(f"Constraint '{qc.label}' matrix must be {size}x{size}, got {qc.Q.shape}")
        for name in ("A_ineq", "A_eq"):
            A = getattr(self, name)
            if A is None:
                object.__setattr__(self, name, np.zeros((0, size)))
            elif A.ndim != 2 or A.shape[1] != size:
                raise MismatchedLayout(f"{name} must have {size} columns, got shape {A.shape}")
        if not self.groups:
            object.__setattr__(self, "groups", (tuple(range(self.n)),))
        covered = set().union(*map(set, self.groups))
        if covered != set(range(self.n)):
            missing = sorted(set(range(self.n)) - covered)
            raise MismatchedLayout(f"Band groups do not cover variables {missing}")

    def homogeneous(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise MismatchedLayout(f"Expected {self.n} variables, got {x.shape}")
        return np.concatenate([[1.0], x])

    def objective(self, x) -> float:
        xt = self.homogeneous(x)
        return float(xt @ self.Q0 @ xt) + sum(c.value(xt) for c in self.costs)

    def objective_gradient(self, x) -> np.ndarray:
        xt = self.homogeneous(x)
        grad = 2.0 * (self.Q0 @ xt)[1:]
        for c in self.costs:
            grad = grad + c.gradient(xt)
        return grad

    def residuals(self, x) -> dict[str, float]:
        """Largest violation per constraint family."""
        xt = self.homogeneous(x)
        eq_quad = [qc.violation(xt) for qc in self.quadratics if qc.sense is ConstraintSense.EQUAL]
        ge_quad = [qc.violation(xt) for qc in self.quadratics if qc.sense is ConstraintSense.NONNEG]
        return {
            "affine_eq": float(np.max(np.abs(self.A_eq @ xt), initial=0.0)),
            "affine_ineq": float(max(0.0, -np.min(self.A_ineq @ xt, initial=0.0))),
            "quadratic_eq": max(eq_quad, default=0.0),
            "quadratic_ineq": max(ge_quad, default=0.0),
        }

    def with_constraints(
        self,
        quadratics: tuple[QuadraticConstraint, ...] = (),
        ineq_rows: np.ndarray | None = None,
        eq_rows: np.ndarray | None = None,
    ) -> "QcqpProblem":
        """Copy with extra constraints appended."""
        A_ineq = self.A_ineq if ineq_rows is None else np.vstack([self.A_ineq, ineq_rows])
        A_eq = self.A_eq if eq_rows is None else np.vstack([self.A_eq, eq_rows])
        return replace(self, quadratics=self.quadratics + tuple(quadratics), A_ineq=A_ineq, A_eq=A_eq)


# =============================================================================
# Relaxation
# =============================================================================


@dataclass(frozen=True, eq=False)
class SemidefiniteRelaxation:
    """Block Shor relaxation of a QcqpProblem.

    ``conic_set`` is homogeneous in local variable 0 (X₀₀), so it can serve
    directly as a vertex set of a graph of convex sets.
    """

    qcqp: QcqpProblem
    blocks: tuple[tuple[int, ...], ...]
    moment_index: dict[tuple[int, int], int]
    conic_set: ConicSet
    num_moments: int

    @property
    def size(self) -> int:
        return self.conic_set.size

    def lift(self, x) -> np.ndarray:
        """Rank-one lift X = x̃x̃ᵀ with epigraph variables at their tight values."""
        xt = self.qcqp.homogeneous(x)
        values = np.zeros(self.size)
        for (a, b), k in self.moment_index.items():
            values[k] = xt[a] * xt[b]
        tight = [c.epigraph_values(xt) for c in self.qcqp.costs]
        if tight:
            extra = np.concatenate(tight)
            values[self.num_moments : self.num_moments + len(extra)] = extra
        return values

    def block_matrix(self, values: np.ndarray, block: int) -> np.ndarray:
        idx = self.blocks[block]
        M = np.empty((len(idx), len(idx)))
        for i, a in enumerate(idx):
            for j, b in enumerate(idx):
                M[i, j] = values[self.moment_index[(min(a, b), max(a, b))]]
        return M

    def to_program(self):
        """Standalone program: the relaxation with X₀₀ fixed to one."""
        parts = list(self.conic_set.atoms)
        parts.append(ZeroCone(AffineBlock.from_rows([Affine({0: 1.0}, -1.0)])))
        parts.append(Cost(self.conic_set.cost))
        return assemble(parts, num_vars=self.size)


@dataclass
class RelaxationSolution:
    relaxation: SemidefiniteRelaxation
    outcome: SolverOutcome

    @property
    def values(self) -> np.ndarray | None:
        return self.outcome.primal

    @property
    def objective(self) -> float | None:
        return self.outcome.objective


@dataclass
class ExtractionReport:
    """First-column estimate of the QCQP solution and per-block tightness.

    Attributes:
        point: Extracted x̂ (first moments divided by X₀₀)
        eigenvalue_ratios: λ₂/λ₁ per block; 0 means rank one
        min_eigenvalues: Smallest eigenvalue per block
    """

    point: np.ndarray
    eigenvalue_ratios: tuple[float, ...]
    min_eigenvalues: tuple[float, ...] = field(default_factory=tuple)

    @property
    def max_ratio(self) -> float:
        return max(self.eigenvalue_ratios, default=0.0)


def _trace_form(Q: np.ndarray, moment_index: dict[tuple[int, int], int], label: str = "") -> Affine:
    """Σ_ab Q_ab X_ab as an affine form over moment variables."""
    coeffs: dict[int, float] = {}
    rows, cols = np.nonzero(np.triu(Q + Q.T))
    for a, b in zip(rows, cols):
        key = (int(a), int(b))
        if key not in moment_index:
            raise UnsupportedConstraint(
                f"Quadratic term {label or 'cost'} couples x̃[{a}] and x̃[{b}], which share no band group"
            )
        weight = Q[a, a] if a == b else Q[a, b] + Q[b, a]
        coeffs[moment_index[key]] = coeffs.get(moment_index[key], 0.0) + float(weight)
    return Affine(coeffs)


def _upper_weights(S: np.ndarray) -> np.ndarray:
    """Coefficients of the upper-triangle moments of trace(S X) for symmetric S."""
    W = S * (2.0 - np.eye(len(S)))
    return W[np.triu_indices(len(S))]


def _block_rows(weights: np.ndarray, columns: np.ndarray) -> AffineBlock:
    """Rows of upper-triangle weights mapped onto moment columns."""
    weights = np.atleast_2d(weights)
    if weights.shape[0] == 0:
        return AffineBlock.from_rows([])
    rows = np.repeat(np.arange(weights.shape[0]), weights.shape[1])
    cols = np.tile(columns, weights.shape[0])
    data = weights.ravel()
    keep = data != 0
    A = sp.csr_matrix(
        (data[keep], (rows[keep], cols[keep])), shape=(weights.shape[0], int(columns.max()) + 1)
    )
    return AffineBlock.from_matrix(A)


def _supported_rows(A: np.ndarray, block: tuple[int, ...]) -> np.ndarray:
    """Rows of A whose nonzeros lie inside ``block`` (x̃ indices), restricted to it."""
    if A.shape[0] == 0:
        return np.zeros((0, len(block)))
    outside = np.ones(A.shape[1], dtype=bool)
    outside[list(block)] = False
    inside = ~np.any(A[:, outside] != 0, axis=1)
    return A[inside][:, list(block)]


def relax(qcqp: QcqpProblem) -> SemidefiniteRelaxation:
    """Build the band-sparse Shor relaxation with RLT products.

    Raises:
        UnsupportedConstraint: If a quadratic constraint does not fit inside one band group
    """
    n = qcqp.n
    blocks = tuple((0,) + tuple(sorted(a + 1 for a in g)) for g in qcqp.groups)
    group_sets = [set(g) for g in qcqp.groups]
    for qc in qcqp.quadratics:
        support = qc.support()
        if not any(support <= g for g in group_sets):
            raise UnsupportedConstraint(
                f"Quadratic constraint '{qc.label}' on variables {sorted(support)} spans several band groups"
            )

    moment_index: dict[tuple[int, int], int] = {(0, a): a for a in range(n + 1)}
    next_index = n + 1
    block_columns = []
    for block in blocks:
        columns = []
        for i, j in upper_triangle_pairs(len(block)):
            key = (block[i], block[j])
            if key not in moment_index:
                moment_index[key] = next_index
                next_index += 1
            columns.append(moment_index[key])
        block_columns.append(np.array(columns))
    num_moments = next_index

    atoms: list[ConeAtom] = []
    for block, columns in zip(blocks, block_columns):
        atoms.append(PsdCone(len(block), _block_rows(np.eye(len(columns)), columns)))

    eq_rows, ge_rows = [], []
    for qc in qcqp.quadratics:
        lifted = _trace_form(qc.Q, moment_index, qc.label)
        (eq_rows if qc.sense is ConstraintSense.EQUAL else ge_rows).append(lifted)
    if eq_rows:
        atoms.append(ZeroCone(AffineBlock.from_rows(eq_rows)))
    if ge_rows:
        atoms.append(NonnegCone(AffineBlock.from_rows(ge_rows)))
    if qcqp.A_eq.shape[0]:
        atoms.append(ZeroCone(AffineBlock.from_matrix(qcqp.A_eq)))
    if qcqp.A_ineq.shape[0]:
        atoms.append(NonnegCone(AffineBlock.from_matrix(qcqp.A_ineq)))

    num_rlt = 0
    for block, columns in zip(blocks, block_columns):
        G = _supported_rows(qcqp.A_ineq, block)
        if len(G) > 1:
            products = [
                _upper_weights(np.outer(G[i], G[j]) + np.outer(G[j], G[i])) / 2.0
                for i in range(len(G))
                for j in range(i + 1, len(G))
            ]
            atoms.append(NonnegCone(_block_rows(np.array(products), columns)))
            num_rlt += len(products)
        E = _supported_rows(qcqp.A_eq, block)
        if len(E):
            products = []
            for row in E:
                for c in range(1, len(block)):
                    unit = np.zeros(len(block))
                    unit[c] = 1.0
                    products.append(_upper_weights(np.outer(row, unit) + np.outer(unit, row)) / 2.0)
            atoms.append(ZeroCone(_block_rows(np.array(products), columns)))
            num_rlt += len(products)

    lowered = lower_costs(qcqp.costs, num_moments)
    atoms.extend(lowered.atoms)
    cost = _trace_form(qcqp.Q0, moment_index) + lowered.cost
    size = num_moments + lowered.num_extra

    logger.debug(
        "Relaxed QCQP: n=%d, %d blocks, %d moments, %d RLT rows", n, len(blocks), num_moments, num_rlt
    )
    return SemidefiniteRelaxation(
        qcqp=qcqp,
        blocks=blocks,
        moment_index=moment_index,
        conic_set=ConicSet(size=size, atoms=tuple(atoms), cost=cost),
        num_moments=num_moments,
    )


def convex_conic_set(qcqp: QcqpProblem) -> ConicSet:
    """Direct conic encoding of a convex QCQP without lifting.

    Only affine constraints and constant quadratic costs are accepted; convex
    quadratic costs must be supplied as cost atoms.

    Raises:
        UnsupportedConstraint: If the program has quadratic constraints or a non-constant Q₀
    """
    if qcqp.quadratics:
        raise UnsupportedConstraint("Quadratic constraints need lifting; use relax()")
    Q0 = qcqp.Q0.copy()
    constant = Q0[0, 0]
    Q0[0, 0] = 0.0
    if np.any(Q0 != 0):
        raise UnsupportedConstraint("Quadratic cost matrix needs lifting; pass squared norms as cost atoms")
    atoms: list[ConeAtom] = []
    if qcqp.A_eq.shape[0]:
        atoms.append(ZeroCone(AffineBlock.from_matrix(qcqp.A_eq)))
    if qcqp.A_ineq.shape[0]:
        atoms.append(NonnegCone(AffineBlock.from_matrix(qcqp.A_ineq)))
    lowered = lower_costs(qcqp.costs, qcqp.n + 1)
    atoms.extend(lowered.atoms)
    cost = Affine({0: constant}) + lowered.cost
    return ConicSet(size=qcqp.n + 1 + lowered.num_extra, atoms=tuple(atoms), cost=cost)


def solve_relaxation(relaxation: SemidefiniteRelaxation, settings: SolverSettings | None = None) -> RelaxationSolution:
    """Solve the standalone relaxation (X₀₀ = 1)."""
    outcome = solve(relaxation.to_program(), settings)
    return RelaxationSolution(relaxation=relaxation, outcome=outcome)


def extract(relaxation: SemidefiniteRelaxation, values: np.ndarray | None) -> ExtractionReport:
    """Read x̂ from the first column of the solved moment blocks.

    ``values`` are the local variables of the relaxation; when X₀₀ differs from one
    (a perspective copy scaled by a flow) the moments are rescaled first.

    Raises:
        NotSolved: If no values are given or their size does not match
    """
    if values is None:
        raise NotSolved("Relaxation has no solution values")
    values = np.asarray(values, dtype=float)
    if values.shape[0] < relaxation.num_moments:
        raise NotSolved(f"Expected at least {relaxation.num_moments} values, got {values.shape[0]}")
    scale = values[0]
    if scale <= 0:
        raise NotSolved(f"Homogenizing moment is {scale:.3g}; the set carries no flow")
    values = values / scale

    ratios, min_eigs = [], []
    for b in range(len(relaxation.blocks)):
        eigs = np.linalg.eigvalsh(relaxation.block_matrix(values, b))[::-1]
        min_eigs.append(float(eigs[-1]))
        if eigs[-1] < -PSD_TOL:
            logger.warning("Moment block %d has eigenvalue %.3g below the PSD tolerance", b, eigs[-1])
        top = eigs[0]
        second = eigs[1] if len(eigs) > 1 else 0.0
        ratios.append(float(np.clip(second / top, 0.0, 1.0)) if top > 0 else 1.0)
    return ExtractionReport(
        point=values[1 : relaxation.qcqp.n + 1].copy(),
        eigenvalue_ratios=tuple(ratios),
        min_eigenvalues=tuple(min_eigs),
    )


# =============================================================================
# Tightening
# =============================================================================


@dataclass(frozen=True, eq=False)
class TighteningContext:
    """Data needed to tighten a contact-mode relaxation.

    Attributes:
        rotation_indices: Variable indices (c, s) of the rotation at each knot
        r_source: Rotation (cos, sin) at the start of the task
        r_target: Rotation (cos, sin) at the end of the task
        frame_constraints: Slider-frame copies of the dynamics equalities
    """

    rotation_indices: tuple[tuple[int, int], ...]
    r_source: np.ndarray
    r_target: np.ndarray
    frame_constraints: tuple[QuadraticConstraint, ...] = ()


def geodesic_cut(r_source, r_target) -> tuple[np.ndarray, float] | None:
    """Halfplane a·r ≥ b containing the short arc between two rotations.

    Returns:
        (a, b) with a the normalized bisector and b = a·r_source, or None when the
        rotations are antipodal and the short arc is not unique
    """
    r_s = np.asarray(r_source, dtype=float)
    r_t = np.asarray(r_target, dtype=float)
    bisector = r_s + r_t
    norm = np.linalg.norm(bisector)
    if norm < CUT_DEGENERACY_TOL:
        return None
    a = bisector / norm
    return a, float(a @ r_s)


def tighten_qcqp(qcqp: QcqpProblem, context: TighteningContext) -> QcqpProblem:
    """Add the slider-frame dynamics and the geodesic cut to a QCQP."""
    cut = geodesic_cut(context.r_source, context.r_target)
    rows = None
    if cut is None:
        logger.info("Rotations are antipodal; skipping the geodesic cut")
    else:
        a, b = cut
        rows = np.zeros((len(context.rotation_indices), qcqp.n + 1))
        for k, (ic, is_) in enumerate(context.rotation_indices):
            rows[k, 0] = -b
            rows[k, ic + 1] = a[0]
            rows[k, is_ + 1] = a[1]
    return qcqp.with_constraints(quadratics=context.frame_constraints, ineq_rows=rows)


def add_tightening(relaxation: SemidefiniteRelaxation, context: TighteningContext) -> SemidefiniteRelaxation:
    """Relaxation of the QCQP with the tightening constraints added."""
    return relax(tighten_qcqp(relaxation.qcqp, context))
