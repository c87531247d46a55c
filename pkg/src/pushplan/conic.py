"""Solver-neutral conic programs.

A ConicProgram is a list of cone atoms over a flat vector of scalar variables
plus a linear objective. Atoms hold sparse affine maps ``A x + b``:

- ZeroCone:        A x + b = 0
- NonnegCone:      A x + b ≥ 0
- SecondOrderCone: ‖A x + b‖ ≤ t(x)
- RotatedCone:     u(x)·v(x) ≥ ‖A x + b‖², u, v ≥ 0
- PsdCone:         symmetric matrix whose upper triangle (row-major) is A x + b, ⪰ 0

Programs are solved through cvxpy (Clarabel by default) and can be exported to
and imported from the SDPA sparse format.

Example:
    >>> x = VariableSpace()
    >>> t, p = x.allocate(1), x.allocate(2)
    >>> program = assemble([
    ...     ZeroCone(AffineBlock.from_rows([Affine({p[0]: 1}, -3), Affine({p[1]: 1}, -4)])),
    ...     SecondOrderCone(Affine({t[0]: 1}), AffineBlock.from_rows([Affine({p[0]: 1}), Affine({p[1]: 1})])),
    ...     Cost(Affine({t[0]: 1})),
    ... ])
    >>> solve(program).objective  # ≈ 5
"""

import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from ._compat import StrEnum
from pathlib import Path

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .types import IndexOutOfRange, SolverSettings

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# =============================================================================
# Affine expressions
# =============================================================================


class Affine:
    """Scalar affine form Σ a_i x_i + c, stored sparsely."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, float] | None = None, const: float = 0.0):
        self.coeffs = {int(k): float(v) for k, v in (coeffs or {}).items() if v != 0.0}
        self.const = float(const)

    def __add__(self, other: "Affine | float") -> "Affine":
        if not isinstance(other, Affine):
            return Affine(self.coeffs, self.const + float(other))
        merged = dict(self.coeffs)
        for k, v in other.coeffs.items():
            merged[k] = merged.get(k, 0.0) + v
        return Affine(merged, self.const + other.const)

    __radd__ = __add__

    def __mul__(self, scale: float) -> "Affine":
        return Affine({k: v * scale for k, v in self.coeffs.items()}, self.const * scale)

    __rmul__ = __mul__

    def __neg__(self) -> "Affine":
        return self * -1.0

    def __sub__(self, other: "Affine | float") -> "Affine":
        return self + (-other if isinstance(other, Affine) else -float(other))

    def evaluate(self, x: np.ndarray) -> float:
        return sum(v * x[k] for k, v in self.coeffs.items()) + self.const

    def max_index(self) -> int:
        return max(self.coeffs, default=-1)

    @classmethod
    def var(cls, index: int, coeff: float = 1.0) -> "Affine":
        return cls({index: coeff})


@dataclass(frozen=True, eq=False)
class AffineBlock:
    """Stack of affine forms ``A x + b``; A may have fewer columns than the program."""

    A: sp.csr_matrix
    b: np.ndarray

    @classmethod
    def from_rows(cls, rows: list[Affine]) -> "AffineBlock":
        data, cols, ptr = [], [], [0]
        for row in rows:
            for k in sorted(row.coeffs):
                cols.append(k)
                data.append(row.coeffs[k])
            ptr.append(len(cols))
        width = (max(cols) + 1) if cols else 0
        A = sp.csr_matrix((data, cols, ptr), shape=(len(rows), width))
        return cls(A=A, b=np.array([r.const for r in rows], dtype=float))

    @classmethod
    def from_matrix(cls, A, b=None) -> "AffineBlock":
        A = sp.csr_matrix(A)
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
        return cls(A=A, b=b)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def max_index(self) -> int:
        return int(self.A.indices.max()) if self.A.nnz else -1

    def padded(self, n: int) -> sp.csr_matrix:
        """A with exactly ``n`` columns."""
        A = self.A.tocsr()
        if A.shape[1] == n:
            return A
        if self.max_index() >= n:
            raise IndexOutOfRange(f"Variable index {self.max_index()} outside program of size {n}")
        return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], n))

    def remap(self, index_map: np.ndarray) -> "AffineBlock":
        """Rename local column j to global column ``index_map[j]``."""
        A = self.A.tocoo()
        width = int(index_map.max()) + 1 if len(index_map) else 0
        remapped = sp.csr_matrix((A.data, (A.row, index_map[A.col])), shape=(A.shape[0], width))
        return AffineBlock(A=remapped, b=self.b.copy())

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.padded(len(x)) @ x + self.b


def stack(blocks: list[AffineBlock]) -> AffineBlock:
    """Vertically stack affine blocks."""
    if not blocks:
        return AffineBlock.from_rows([])
    width = max(b.A.shape[1] for b in blocks)
    A = sp.vstack([b.padded(width) for b in blocks], format="csr")
    return AffineBlock(A=A, b=np.concatenate([b.b for b in blocks]))


# =============================================================================
# Cone atoms
# =============================================================================


class ConeKind(StrEnum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    ROTATED = "rotated"
    PSD = "psd"


@dataclass(frozen=True, eq=False)
class ZeroCone:
    expr: AffineBlock
    kind = ConeKind.ZERO

    def blocks(self) -> list[AffineBlock]:
        return [self.expr]

    def residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.expr.evaluate(x)), initial=0.0))


@dataclass(frozen=True, eq=False)
class NonnegCone:
    expr: AffineBlock
    kind = ConeKind.NONNEG

    def blocks(self) -> list[AffineBlock]:
        return [self.expr]

    def residual(self, x: np.ndarray) -> float:
        return float(max(0.0, -np.min(self.expr.evaluate(x), initial=0.0)))


@dataclass(frozen=True, eq=False)
class SecondOrderCone:
    t: Affine
    x: AffineBlock
    kind = ConeKind.SOC

    def blocks(self) -> list[AffineBlock]:
        return [AffineBlock.from_rows([self.t]), self.x]

    def residual(self, x: np.ndarray) -> float:
        return max(0.0, float(np.linalg.norm(self.x.evaluate(x)) - self.t.evaluate(x)))


@dataclass(frozen=True, eq=False)
class RotatedCone:
    u: Affine
    v: Affine
    x: AffineBlock
    kind = ConeKind.ROTATED

    def blocks(self) -> list[AffineBlock]:
        return [AffineBlock.from_rows([self.u, self.v]), self.x]

    def residual(self, x: np.ndarray) -> float:
        u, v = self.u.evaluate(x), self.v.evaluate(x)
        w = self.x.evaluate(x)
        return max(0.0, -u, -v, float(w @ w - u * v))


@dataclass(frozen=True, eq=False)
class PsdCone:
    """PSD constraint on a size×size symmetric matrix given by its upper triangle."""

    size: int
    entries: AffineBlock
    kind = ConeKind.PSD

    def __post_init__(self):
        expected = self.size * (self.size + 1) // 2
        if self.entries.rows != expected:
            raise IndexOutOfRange(
                f"PSD block of size {self.size} needs {expected} entries, got {self.entries.rows}"
            )

    def blocks(self) -> list[AffineBlock]:
        return [self.entries]

    def matrix(self, x: np.ndarray) -> np.ndarray:
        values = self.entries.evaluate(x)
        M = np.zeros((self.size, self.size))
        M[np.triu_indices(self.size)] = values
        return M + np.triu(M, 1).T

    def residual(self, x: np.ndarray) -> float:
        return max(0.0, -float(np.linalg.eigvalsh(self.matrix(x))[0]))


def upper_triangle_pairs(size: int) -> list[tuple[int, int]]:
    """Row-major (i, j), i ≤ j, matching the PsdCone entry order."""
    return [(i, j) for i in range(size) for j in range(i, size)]


@dataclass(frozen=True, eq=False)
class Cost:
    """Linear objective contribution."""

    expr: Affine


ConeAtom = ZeroCone | NonnegCone | SecondOrderCone | RotatedCone | PsdCone


# =============================================================================
# Programs
# =============================================================================


class VariableSpace:
    """Allocator for contiguous ranges of scalar variables."""

    def __init__(self):
        self.size = 0
        self.labels: list[tuple[str, int, int]] = []

    def allocate(self, count: int, label: str = "") -> range:
        start = self.size
        self.size += count
        if label:
            self.labels.append((label, start, count))
        return range(start, start + count)


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """Assembled conic program: minimize c·x + c0 subject to the cone atoms."""

    num_vars: int
    constraints: tuple[ConeAtom, ...]
    objective: np.ndarray
    objective_offset: float = 0.0

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x + self.objective_offset)

    def max_violation(self, x: np.ndarray) -> float:
        return max((c.residual(x) for c in self.constraints), default=0.0)


def assemble(parts: list, num_vars: int | None = None) -> ConicProgram:
    """Assemble cone atoms and Cost terms into a ConicProgram.

    Args:
        parts: Cone atoms and Cost objects, kept in insertion order
        num_vars: Size of the variable vector; inferred from the largest index when omitted

    Raises:
        IndexOutOfRange: If an atom references an index outside ``num_vars``
    """
    constraints = []
    costs = []
    largest = -1
    for part in parts:
        if isinstance(part, Cost):
            costs.append(part.expr)
            largest = max(largest, part.expr.max_index())
        else:
            constraints.append(part)
            for block in part.blocks():
                largest = max(largest, block.max_index())
    if num_vars is None:
        num_vars = largest + 1
    if largest >= num_vars:
        raise IndexOutOfRange(f"Variable index {largest} outside program of size {num_vars}")
    if any(min(e.coeffs, default=0) < 0 for e in costs):
        raise IndexOutOfRange("Negative variable index in objective")
    for part in constraints:
        for block in part.blocks():
            if block.A.nnz and block.A.indices.min() < 0:
                raise IndexOutOfRange("Negative variable index in constraint")

    objective = np.zeros(num_vars)
    offset = 0.0
    for expr in costs:
        for k, v in expr.coeffs.items():
            objective[k] += v
        offset += expr.const
    return ConicProgram(
        num_vars=num_vars,
        constraints=tuple(constraints),
        objective=objective,
        objective_offset=offset,
    )


# =============================================================================
# Homogeneous sets
# =============================================================================


def _remap_affine(expr: Affine, index_map: np.ndarray) -> Affine:
    return Affine({int(index_map[k]): v for k, v in expr.coeffs.items()}, expr.const)


def remap_atom(atom: ConeAtom, index_map: np.ndarray) -> ConeAtom:
    """Rename the variables of a cone atom through ``index_map``."""
    if isinstance(atom, ZeroCone | NonnegCone):
        return type(atom)(atom.expr.remap(index_map))
    if isinstance(atom, SecondOrderCone):
        return SecondOrderCone(_remap_affine(atom.t, index_map), atom.x.remap(index_map))
    if isinstance(atom, RotatedCone):
        return RotatedCone(
            _remap_affine(atom.u, index_map), _remap_affine(atom.v, index_map), atom.x.remap(index_map)
        )
    return PsdCone(atom.size, atom.entries.remap(index_map))


@dataclass(frozen=True, eq=False)
class ConicSet:
    """Convex set written homogeneously in local variable 0.

    With variable 0 fixed to one the atoms describe the set itself; with variable
    0 set to a flow y ≥ 0 they describe its perspective y·X, which collapses to
    the origin at y = 0 when X is bounded. ``cost`` is linear and homogeneous too.
    """

    size: int
    atoms: tuple[ConeAtom, ...]
    cost: Affine = field(default_factory=Affine)

    def __post_init__(self):
        largest = max(
            [self.cost.max_index()] + [block.max_index() for atom in self.atoms for block in atom.blocks()]
        )
        if largest >= self.size:
            raise IndexOutOfRange(f"Set of size {self.size} references variable {largest}")
        constant = self.cost.const != 0 or any(
            np.any(block.b != 0) for atom in self.atoms for block in atom.blocks()
        )
        if constant:
            raise ValueError("Conic sets must be homogeneous; put constants on variable 0")

    def instantiate(self, index_map) -> tuple[list[ConeAtom], Affine]:
        """Atoms and cost with local variable j renamed to ``index_map[j]``."""
        index_map = np.asarray(index_map, dtype=int)
        if len(index_map) != self.size:
            raise IndexOutOfRange(f"Index map has {len(index_map)} entries for a set of size {self.size}")
        return [remap_atom(a, index_map) for a in self.atoms], _remap_affine(self.cost, index_map)

    @classmethod
    def point(cls, p) -> "ConicSet":
        """The singleton {p}."""
        p = np.asarray(p, dtype=float)
        rows = [Affine({i + 1: 1.0, 0: -float(v)}) for i, v in enumerate(p)]
        return cls(size=len(p) + 1, atoms=(ZeroCone(AffineBlock.from_rows(rows)),) if rows else ())


# =============================================================================
# Solving
# =============================================================================


class SolverStatus(StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolverOutcome:
    """Result of a conic solve; ``primal`` is present iff the status is optimal."""

    status: SolverStatus
    primal: np.ndarray | None
    objective: float | None
    solve_time: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


_STATUS_MAP = {
    cp.OPTIMAL: SolverStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolverStatus.OPTIMAL,
    cp.INFEASIBLE: SolverStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolverStatus.INFEASIBLE,
    cp.UNBOUNDED: SolverStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolverStatus.UNBOUNDED,
}


def _solver_options(settings: SolverSettings) -> dict:
    if settings.backend == "CLARABEL":
        return {
            "tol_feas": settings.feasibility_tol,
            "tol_gap_abs": settings.gap_tol,
            "tol_gap_rel": settings.gap_tol,
            "max_iter": settings.max_iterations,
        }
    if settings.backend == "SCS":
        return {
            "eps_abs": settings.feasibility_tol,
            "eps_rel": settings.gap_tol,
            "max_iters": 100 * settings.max_iterations,
        }
    return {}


def _cvxpy_constraints(program: ConicProgram, x) -> list:
    n = program.num_vars
    by_kind: dict[ConeKind, list] = defaultdict(list)
    for atom in program.constraints:
        by_kind[atom.kind].append(atom)

    constraints = []
    if by_kind[ConeKind.ZERO]:
        block = stack([a.expr for a in by_kind[ConeKind.ZERO]])
        constraints.append(block.padded(n) @ x + block.b == 0)
    if by_kind[ConeKind.NONNEG]:
        block = stack([a.expr for a in by_kind[ConeKind.NONNEG]])
        constraints.append(block.padded(n) @ x + block.b >= 0)

    # Rotated cones become ‖(2w, u − v)‖ ≤ u + v; cones of equal dimension are batched.
    cones_by_dim: dict[int, list[tuple[AffineBlock, AffineBlock]]] = defaultdict(list)
    for atom in by_kind[ConeKind.SOC]:
        cones_by_dim[atom.x.rows].append((AffineBlock.from_rows([atom.t]), atom.x))
    for atom in by_kind[ConeKind.ROTATED]:
        t = AffineBlock.from_rows([atom.u + atom.v])
        body = stack([AffineBlock(A=atom.x.A * 2.0, b=atom.x.b * 2.0), AffineBlock.from_rows([atom.u - atom.v])])
        cones_by_dim[body.rows].append((t, body))
    for dim in sorted(cones_by_dim):
        group = cones_by_dim[dim]
        t_block = stack([t for t, _ in group])
        body_block = stack([body for _, body in group])
        t_expr = t_block.padded(n) @ x + t_block.b
        body_expr = cp.reshape(body_block.padded(n) @ x + body_block.b, (dim, len(group)), order="F")
        constraints.append(cp.SOC(t_expr, body_expr, axis=0))

    for atom in by_kind[ConeKind.PSD]:
        m = atom.size
        X = cp.Variable((m, m), symmetric=True)
        pairs = upper_triangle_pairs(m)
        select = sp.csr_matrix(
            (np.ones(len(pairs)), (np.arange(len(pairs)), [j * m + i for i, j in pairs])),
            shape=(len(pairs), m * m),
        )
        constraints.append(X >> 0)
        constraints.append(select @ cp.vec(X, order="F") == atom.entries.padded(n) @ x + atom.entries.b)
    return constraints


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> SolverOutcome:
    """Solve a conic program through cvxpy.

    Solver failures are reported through ``SolverOutcome.status`` and never raised.

    Args:
        program: Assembled program
        settings: Backend and tolerances (package defaults when omitted)
    """
    settings = settings or SolverSettings.from_dict()
    if program.num_vars == 0:
        return SolverOutcome(SolverStatus.OPTIMAL, np.zeros(0), program.objective_offset, 0.0)

    x = cp.Variable(program.num_vars)
    objective = cp.Minimize(program.objective @ x + program.objective_offset)
    problem = cp.Problem(objective, _cvxpy_constraints(program, x))

    start = time.perf_counter()
    try:
        problem.solve(solver=settings.backend, **_solver_options(settings))
    except cp.error.SolverError as e:
        elapsed = time.perf_counter() - start
        logger.warning("Conic solve failed in %s: %s", settings.backend, e)
        return SolverOutcome(
            SolverStatus.NUMERICAL_FAILURE, None, None, elapsed, {"error": str(e), "backend": settings.backend}
        )
    elapsed = time.perf_counter() - start

    status = _STATUS_MAP.get(problem.status, SolverStatus.NUMERICAL_FAILURE)
    diagnostics = {"backend": settings.backend, "raw_status": str(problem.status)}
    if problem.status == cp.OPTIMAL_INACCURATE:
        logger.warning("%s returned an inaccurate optimum", settings.backend)
        diagnostics["inaccurate"] = True
    if status is SolverStatus.OPTIMAL and x.value is None:
        status = SolverStatus.NUMERICAL_FAILURE
    if status is not SolverStatus.OPTIMAL:
        logger.info("Conic solve finished with status %s (%.2fs)", status, elapsed)
        return SolverOutcome(status, None, None, elapsed, diagnostics)

    logger.debug("Conic solve: %d vars, objective %.6g (%.2fs)", program.num_vars, problem.value, elapsed)
    return SolverOutcome(status, np.asarray(x.value, dtype=float), float(problem.value), elapsed, diagnostics)


# =============================================================================
# Statistics
# =============================================================================


@dataclass
class ProblemStats:
    """Size of an assembled program, counted the way conic solvers report it."""

    num_constraints: int
    num_scalar_variables: int
    num_psd_blocks: int
    psd_block_sizes: list[int]
    counts_by_cone: dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


def program_stats(program: ConicProgram) -> ProblemStats:
    """Count scalar constraints (cone dimensions summed), variables and PSD blocks."""
    counts = dict.fromkeys([k.value for k in ConeKind], 0)
    total = 0
    sizes = []
    for atom in program.constraints:
        counts[atom.kind.value] += 1
        if atom.kind in (ConeKind.ZERO, ConeKind.NONNEG):
            total += atom.expr.rows
        elif atom.kind is ConeKind.SOC:
            total += atom.x.rows + 1
        elif atom.kind is ConeKind.ROTATED:
            total += atom.x.rows + 2
        else:
            total += atom.entries.rows
            sizes.append(atom.size)
    return ProblemStats(
        num_constraints=total,
        num_scalar_variables=program.num_vars,
        num_psd_blocks=len(sizes),
        psd_block_sizes=sizes,
        counts_by_cone=counts,
    )


# =============================================================================
# SDPA sparse format
# =============================================================================


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _sdpa_blocks(program: ConicProgram):
    """Lower every atom to SDPA blocks: one diagonal LP block and PSD blocks in insertion order.

    Yields (block size, list of (i, j, AffineBlock row-slice)) where entries are
    1-based and the affine form gives the matrix entry.
    """
    n = program.num_vars
    lp_rows: list[AffineBlock] = []
    psd_blocks: list[tuple[int, list[tuple[int, int]], AffineBlock]] = []
    for atom in program.constraints:
        if atom.kind is ConeKind.ZERO:
            lp_rows.append(atom.expr)
            lp_rows.append(AffineBlock(A=-atom.expr.padded(n), b=-atom.expr.b))
        elif atom.kind is ConeKind.NONNEG:
            lp_rows.append(atom.expr)
        elif atom.kind in (ConeKind.SOC, ConeKind.ROTATED):
            if atom.kind is ConeKind.SOC:
                head, tail = AffineBlock.from_rows([atom.t]), AffineBlock.from_rows([atom.t])
            else:
                head, tail = AffineBlock.from_rows([atom.u]), AffineBlock.from_rows([atom.v])
            d = atom.x.rows
            size = d + 1
            pairs = [(0, 0)] + [(0, k + 1) for k in range(d)] + [(k + 1, k + 1) for k in range(d)]
            body = stack([head, atom.x] + [tail] * d)
            psd_blocks.append((size, pairs, body))
        else:
            psd_blocks.append((atom.size, upper_triangle_pairs(atom.size), atom.entries))
    return stack(lp_rows) if lp_rows else None, psd_blocks


def export_sdpa(program: ConicProgram, path: str | Path | None = None) -> str:
    """Write ``program`` in SDPA sparse (.dat-s) format.

    SDPA form: minimize c·x subject to Σ_k x_k F_k − F_0 ⪰ 0. The objective
    constant is stored in a leading comment line. Output is deterministic.

    Returns:
        The file contents
    """
    n = program.num_vars
    lp, psd_blocks = _sdpa_blocks(program)
    block_sizes = []
    entries: list[tuple[int, int, int, int, float]] = []
    block_no = 0
    if lp is not None and lp.rows:
        block_no += 1
        block_sizes.append(-lp.rows)
        A = lp.padded(n).tocoo()
        for r, k, v in zip(A.row, A.col, A.data):
            entries.append((int(k) + 1, block_no, int(r) + 1, int(r) + 1, float(v)))
        for r, const in enumerate(lp.b):
            if const != 0:
                entries.append((0, block_no, r + 1, r + 1, -float(const)))
    for size, pairs, body in psd_blocks:
        block_no += 1
        block_sizes.append(size)
        A = body.padded(n).tocoo()
        for r, k, v in zip(A.row, A.col, A.data):
            i, j = pairs[r]
            entries.append((int(k) + 1, block_no, i + 1, j + 1, float(v)))
        for r, const in enumerate(body.b):
            if const != 0:
                i, j = pairs[r]
                entries.append((0, block_no, i + 1, j + 1, -float(const)))

    # Entries for the same matrix position are summed (pairs can repeat in arrow blocks).
    merged: dict[tuple[int, int, int, int], float] = defaultdict(float)
    for mat, blk, i, j, v in entries:
        merged[(mat, blk, i, j)] += v

    lines = [
        '"pushplan conic program"',
        f"* objective_offset {_fmt(program.objective_offset)}",
        str(n),
        str(len(block_sizes)),
        " ".join(str(s) for s in block_sizes) if block_sizes else "0",
        " ".join(_fmt(c) for c in program.objective) if n else "",
    ]
    for key in sorted(merged):
        value = merged[key]
        if value != 0:
            mat, blk, i, j = key
            lines.append(f"{mat} {blk} {i} {j} {_fmt(value)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def import_sdpa(source: str | Path) -> ConicProgram:
    """Read an SDPA sparse file (or its text) back into an equivalent ConicProgram.

    LP blocks become NonnegCone atoms and matrix blocks become PsdCone atoms.
    """
    text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
    offset = 0.0
    body = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('"') or stripped.startswith("*"):
            if stripped.startswith("* objective_offset"):
                offset = float(stripped.split()[-1])
            continue
        body.append(stripped)

    n = int(body[0])
    num_blocks = int(body[1])
    sizes = [int(s) for s in body[2].replace(",", " ").replace("{", " ").replace("}", " ").split()][:num_blocks]
    cursor = 3
    objective = np.zeros(n)
    if n:
        objective = np.array([float(v) for v in body[3].split()])
        cursor = 4

    # coefficient[block][(i, j)] -> Affine
    forms: list[dict[tuple[int, int], Affine]] = [defaultdict(Affine) for _ in sizes]
    for line in body[cursor:]:
        mat, blk, i, j, value = line.split()
        mat, blk, i, j = int(mat), int(blk) - 1, int(i) - 1, int(j) - 1
        key = (min(i, j), max(i, j))
        v = float(value)
        if mat == 0:
            forms[blk][key] = forms[blk][key] + (-v)
        else:
            forms[blk][key] = forms[blk][key] + Affine({mat - 1: v})

    parts: list = []
    for size, entries in zip(sizes, forms):
        if size < 0:
            rows = [entries.get((r, r), Affine()) for r in range(-size)]
            parts.append(NonnegCone(AffineBlock.from_rows(rows)))
        else:
            rows = [entries.get(pair, Affine()) for pair in upper_triangle_pairs(size)]
            parts.append(PsdCone(size, AffineBlock.from_rows(rows)))
    parts.append(Cost(Affine({k: v for k, v in enumerate(objective)}, offset)))
    return assemble(parts, num_vars=n)


def dump_stats(program: ConicProgram, path: str | Path | None = None) -> str:
    """JSON dump of :func:`program_stats`."""
    text = json.dumps(program_stats(program).to_dict(), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
