"""Direct solves for the coupled step system and the interface field systems.

The pressure space is the full P1 space (plus the optional enrichment
column), so the continuity rows are linearly dependent: their sum is
fixed by the boundary data.  The consistent right-hand side makes the
system solvable; we drop the row and column of one P1 degree of freedom,
factorize the square remainder, and check the residual of the full
system, including the dropped row, after the solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import BlockSystem

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Singular factorization or residual above tolerance."""


@dataclass
class SaddleSolution:
    u: np.ndarray
    p: np.ndarray
    x: np.ndarray
    k: np.ndarray
    residual: float
    rhs_norm: float


def _factor_solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # exactly singular
        raise SolverError(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    return x


def solve_saddle_point(
    system: BlockSystem,
    fixed_dofs: np.ndarray | None = None,
    fixed_values: np.ndarray | None = None,
    pressure_weights: np.ndarray | None = None,
    pin: int = 0,
    n_p1: int | None = None,
    tol: float = DEFAULT_TOL,
) -> SaddleSolution:
    """Solve the step system with prescribed velocity DOFs.

    Parameters
    ----------
    fixed_dofs, fixed_values : velocity DOFs removed from the trial and
        test spaces, and their prescribed values.
    pressure_weights : ``(phi_p, 1)`` for every pressure DOF; when given,
        the returned pressure has zero mean, shifting only the first
        ``n_p1`` (P1) coefficients, which must represent constants.
    pin : P1 pressure DOF whose row and column are dropped.
    """
    A = system.matrix()
    b = system.vector()
    off, n = system.offsets()
    nu = system.sizes["u"]
    fixed = np.zeros(n, dtype=bool)
    x = np.zeros(n)
    if fixed_dofs is not None and len(fixed_dofs):
        fixed[fixed_dofs] = True
        x[fixed_dofs] = 0.0 if fixed_values is None else fixed_values
    skip_row = fixed.copy()
    has_p = system.sizes.get("p", 0) > 0
    if has_p:
        skip_row[off["p"] + pin] = True
        fixed[off["p"] + pin] = True
    free = ~fixed
    rows = ~skip_row
    rhs = b - A @ x
    Ared = A[rows][:, free]
    if Ared.shape[0] != Ared.shape[1]:
        raise SolverError("reduced system is not square")
    x[free] = _factor_solve(Ared, rhs[rows])

    # residual of every equation whose test function is admissible
    test = np.ones(n, dtype=bool)
    test[:nu] = ~(fixed[:nu])
    r = (A @ x - b)[test]
    bn = float(np.linalg.norm(b[test]))
    res = float(np.linalg.norm(r))
    if not res <= tol * (1.0 + bn):
        raise SolverError(f"residual {res:.3e} exceeds {tol:.1e} * (1 + {bn:.3e})")

    parts = {k: x[off[k] : off[k] + system.sizes[k]] if k in off else np.zeros(0) for k in ("u", "p", "x", "k")}
    p = parts["p"].copy()
    if has_p and pressure_weights is not None:
        w = np.asarray(pressure_weights, float)
        n1 = len(p) if n_p1 is None else n_p1
        mean = float(w @ p) / float(w[:n1].sum())
        p[:n1] -= mean
    return SaddleSolution(parts["u"].copy(), p, parts["x"].copy(), parts["k"].copy(), res, bn)


def solve_spd(matrix, rhs: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve a symmetric positive definite system; diagonal systems are divided."""
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, float)
    off = A - sp.diags(A.diagonal())
    if off.count_nonzero() == 0:
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("diagonal system is not positive definite")
        x = b / d
    else:
        x = _factor_solve(A, b)
    res = float(np.linalg.norm(A @ x - b))
    if not res <= tol * max(float(np.linalg.norm(b)), np.finfo(float).tiny):
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x
