"""Local nonconvex refinement of a fixed mode sequence.

The segments of a path are stacked into one nonlinear program: the variables
of every mode side by side, each mode's affine rows and quadratic equalities,
and continuity rows tying the terminal state of a segment to the initial state
of the next. Starting from the relaxation's estimate, SLSQP improves the cost
and a damped Gauss-Newton polish drives the equality residuals to tolerance.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .relaxation import ConstraintSense, QcqpProblem
from .types import MismatchedLayout, RefinementFailed, RefinementSettings

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

POLISH_ITERATIONS = 25


@dataclass(frozen=True, eq=False)
class Segment:
    """One mode of the path: its QCQP and the maps x̃ → initial/terminal state."""

    name: str
    qcqp: QcqpProblem
    initial_map: np.ndarray
    terminal_map: np.ndarray


@dataclass
class RefinementResult:
    points: list[np.ndarray]
    cost: float
    residuals: dict[str, float]
    iterations: int
    method: str = "unchanged"
    history: list[dict] = field(default_factory=list)


class StackedProblem:
    """All segments of a path as one program over X = (x_1, ..., x_m).

    Affine rows are stored over (1, X); column 0 holds the constants.
    Quadratic rows are divided by their scale, so residuals are in the units
    of the Euler residual.
    """

    def __init__(self, segments: list[Segment]):
        if not segments:
            raise MismatchedLayout("A refinement needs at least one segment")
        self.segments = segments
        self.offsets = np.cumsum([0] + [s.qcqp.n for s in segments])
        self.size = int(self.offsets[-1])

        eq, ineq, continuity = [], [], []
        for i, seg in enumerate(segments):
            eq.append(self._embed(i, seg.qcqp.A_eq))
            ineq.append(self._embed(i, seg.qcqp.A_ineq))
        for i in range(len(segments) - 1):
            continuity.append(
                self._embed(i, segments[i].terminal_map) - self._embed(i + 1, segments[i + 1].initial_map)
            )
        width = self.size + 1
        self.E = np.vstack(eq) if eq else np.zeros((0, width))
        self.G = np.vstack(ineq) if ineq else np.zeros((0, width))
        self.C = np.vstack(continuity) if continuity else np.zeros((0, width))

    def _embed(self, i: int, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(rows)
        out = np.zeros((rows.shape[0], self.size + 1))
        out[:, 0] = rows[:, 0]
        start = self.offsets[i] + 1
        out[:, start : start + rows.shape[1] - 1] = rows[:, 1:]
        return out

    def split(self, X: np.ndarray) -> list[np.ndarray]:
        return [X[self.offsets[i] : self.offsets[i + 1]] for i in range(len(self.segments))]

    def stack(self, points: list[np.ndarray]) -> np.ndarray:
        if len(points) != len(self.segments):
            raise MismatchedLayout(f"Expected {len(self.segments)} segment points, got {len(points)}")
        for seg, x in zip(self.segments, points):
            if np.shape(x) != (seg.qcqp.n,):
                raise MismatchedLayout(f"Segment {seg.name} expects {seg.qcqp.n} variables, got {np.shape(x)}")
        return np.concatenate(points) if points else np.zeros(0)

    def _homogeneous(self, X: np.ndarray) -> np.ndarray:
        return np.concatenate([[1.0], X])

    def objective(self, X: np.ndarray) -> float:
        return float(sum(seg.qcqp.objective(x) for seg, x in zip(self.segments, self.split(X))))

    def objective_gradient(self, X: np.ndarray) -> np.ndarray:
        return np.concatenate([seg.qcqp.objective_gradient(x) for seg, x in zip(self.segments, self.split(X))])

    def _quadratics(self, X: np.ndarray, sense: ConstraintSense) -> tuple[np.ndarray, np.ndarray]:
        values, rows = [], []
        for i, (seg, x) in enumerate(zip(self.segments, self.split(X))):
            xt = np.concatenate([[1.0], x])
            for qc in seg.qcqp.quadratics:
                if qc.sense is not sense:
                    continue
                values.append(qc.scaled_value(xt))
                row = np.zeros(self.size)
                row[self.offsets[i] : self.offsets[i + 1]] = qc.gradient(xt) / qc.scale
                rows.append(row)
        if not values:
            return np.zeros(0), np.zeros((0, self.size))
        return np.array(values), np.array(rows)

    def equalities(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked equality residual and its Jacobian."""
        xt = self._homogeneous(X)
        affine = np.vstack([self.E, self.C])
        q_val, q_jac = self._quadratics(X, ConstraintSense.EQUAL)
        return np.concatenate([affine @ xt, q_val]), np.vstack([affine[:, 1:], q_jac])

    def inequalities(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked values (≥ 0 when satisfied) and Jacobian of the inequalities."""
        xt = self._homogeneous(X)
        q_val, q_jac = self._quadratics(X, ConstraintSense.NONNEG)
        return np.concatenate([self.G @ xt, q_val]), np.vstack([self.G[:, 1:], q_jac])

    def residuals(self, X: np.ndarray) -> dict[str, float]:
        xt = self._homogeneous(X)
        q_eq, _ = self._quadratics(X, ConstraintSense.EQUAL)
        q_ge, _ = self._quadratics(X, ConstraintSense.NONNEG)
        return {
            "affine_eq": float(np.max(np.abs(self.E @ xt), initial=0.0)),
            "affine_ineq": float(max(0.0, -np.min(self.G @ xt, initial=0.0))),
            "continuity": float(np.max(np.abs(self.C @ xt), initial=0.0)),
            "quadratic_eq": float(np.max(np.abs(q_eq), initial=0.0)),
            "quadratic_ineq": float(max(0.0, -np.min(q_ge, initial=0.0))),
        }

    def is_feasible(self, X: np.ndarray, settings: RefinementSettings) -> bool:
        res = self.residuals(X)
        affine = max(res["affine_eq"], res["affine_ineq"], res["continuity"])
        quadratic = max(res["quadratic_eq"], res["quadratic_ineq"])
        return affine <= settings.affine_tol and quadratic <= settings.quadratic_tol


def _polish(problem: StackedProblem, X: np.ndarray, settings: RefinementSettings) -> tuple[np.ndarray, int]:
    """Damped minimum-norm Gauss-Newton steps on the equalities and violated inequalities."""
    X = X.copy()
    for iteration in range(POLISH_ITERATIONS):
        if problem.is_feasible(X, settings):
            return X, iteration
        r_eq, J_eq = problem.equalities(X)
        g, J_g = problem.inequalities(X)
        violated = g < 0
        r = np.concatenate([r_eq, g[violated]])
        J = np.vstack([J_eq, J_g[violated]])
        lam = settings.damping * float(np.linalg.norm(r))
        system = J @ J.T + lam * np.eye(len(r))
        step = -J.T @ np.linalg.lstsq(system, r, rcond=None)[0]
        X = X + step
    return X, POLISH_ITERATIONS


def _slsqp(problem: StackedProblem, X: np.ndarray, settings: RefinementSettings) -> tuple[np.ndarray, int]:
    def fun(z):
        return problem.objective(z), problem.objective_gradient(z)

    constraints = [
        {"type": "eq", "fun": lambda z: problem.equalities(z)[0], "jac": lambda z: problem.equalities(z)[1]},
        {"type": "ineq", "fun": lambda z: problem.inequalities(z)[0], "jac": lambda z: problem.inequalities(z)[1]},
    ]
    result = minimize(
        fun,
        X,
        jac=True,
        method="SLSQP",
        constraints=constraints,
        options={"maxiter": settings.max_iterations, "ftol": 1e-10},
    )
    logger.debug("SLSQP: %s after %d iterations", result.message, result.nit)
    return np.asarray(result.x, dtype=float), int(result.nit)


def refine_segments(
    segments: list[Segment],
    guess: list[np.ndarray],
    settings: RefinementSettings | None = None,
) -> RefinementResult:
    """Refine a stacked guess until every constraint meets its tolerance.

    A guess that already satisfies the tolerances is returned unchanged.
    Otherwise a polish from the guess and an SLSQP solve followed by a polish
    are tried, and the cheaper feasible result is kept.

    Raises:
        MismatchedLayout: If the guess does not match the segments
        RefinementFailed: If no attempt reaches the tolerances
    """
    settings = settings or RefinementSettings.from_dict()
    problem = StackedProblem(segments)
    X0 = problem.stack([np.asarray(x, dtype=float) for x in guess])

    if problem.is_feasible(X0, settings):
        return RefinementResult(
            points=problem.split(X0), cost=problem.objective(X0), residuals=problem.residuals(X0), iterations=0
        )

    attempts: list[tuple[str, np.ndarray, int]] = []
    polished, iterations = _polish(problem, X0, settings)
    attempts.append(("gauss-newton", polished, iterations))
    start = polished if problem.is_feasible(polished, settings) else X0
    try:
        improved, nit = _slsqp(problem, start, settings)
        polished_improved, extra = _polish(problem, improved, settings)
        attempts.append(("slsqp", polished_improved, nit + extra))
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.warning("SLSQP step failed: %s", e)

    history = [
        {"method": name, "cost": problem.objective(X), "iterations": it, **problem.residuals(X)}
        for name, X, it in attempts
    ]
    feasible = [(problem.objective(X), name, X, it) for name, X, it in attempts if problem.is_feasible(X, settings)]
    if not feasible:
        raise RefinementFailed(
            f"Refinement of {len(segments)} segments did not reach tolerance",
            diagnostics={"attempts": history, "initial": problem.residuals(X0)},
        )
    cost, name, X, it = min(feasible, key=lambda item: item[0])
    logger.info("Refinement (%s) converged: cost %.6g after %d iterations", name, cost, it)
    return RefinementResult(
        points=problem.split(X),
        cost=cost,
        residuals=problem.residuals(X),
        iterations=it,
        method=name,
        history=history,
    )
