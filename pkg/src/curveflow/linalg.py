"""Direct solver for the bordered sparse systems produced by the Newton
linearization.

The systems have a 3N x 3N sparse core

    [ P  Q  ]   rows: velocity (N), curvature (2N)
    [ R  P^T]   cols: position (2N, interleaved), curvature (N)

bordered by up to two dense columns (the multipliers) and the matching dense
rows (the linearized conservation laws).  The core is factored once with
SuperLU; the multipliers come from the small Schur complement, whose
singularity is detected explicitly because it carries the geometric
degeneracy of an equilibrium (constant curvature makes the two border
columns parallel).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .femcore import NewtonBlocks

__all__ = [
    "SolverError",
    "SingularCoreError",
    "EquilibriumDegeneracyError",
    "BorderedSystem",
    "assemble_system",
    "solve_bordered",
    "solve_bordered_dense",
    "residual_norm",
]


class SolverError(Exception):
    """Base class for linear solver failures."""


class SingularCoreError(SolverError):
    """The sparse core block could not be factored."""


class EquilibriumDegeneracyError(SolverError):
    """The multiplier Schur complement is (numerically) singular.

    For the two-multiplier schemes this happens exactly when the curvature
    iterate is constant, i.e. at a discrete equilibrium, where the perimeter
    and area constraints cease to be independent.
    """


@dataclass
class BorderedSystem:
    """Sparse core plus dense borders, rhs ordered [velocity, curvature,
    perimeter?, area?]; unknowns ordered [position (2N), curvature (N),
    lam?, eta?].  nb in {0, 1, 2} counts the borders actually present."""

    core: sp.spmatrix
    border_cols: Optional[np.ndarray]  # (3N, nb)
    border_rows: Optional[np.ndarray]  # (nb, 3N)
    corner: Optional[np.ndarray]  # (nb, nb)
    rhs: np.ndarray  # (3N + nb,)
    nb: int


def assemble_system(blocks: NewtonBlocks) -> BorderedSystem:
    """Pack Newton blocks into one bordered system.

    Border order is always lam before eta, in both the extra columns and the
    extra rows; schemes with a single multiplier get nb = 1.
    """
    n = blocks.Q.shape[0]
    core = sp.bmat([[blocks.P, blocks.Q], [blocks.R, blocks.P.T]], format="csc")

    cols = []
    if blocks.a1 is not None:
        cols.append(np.concatenate((blocks.a1, np.zeros(2 * n))))
    if blocks.a2 is not None:
        cols.append(np.concatenate((blocks.a2, np.zeros(2 * n))))
    rows = []
    tail = []
    if blocks.b1 is not None:
        rows.append(np.concatenate((blocks.b1, blocks.b2)))
        tail.append(blocks.f1)
    if blocks.c is not None:
        rows.append(np.concatenate((blocks.c, np.zeros(n))))
        tail.append(blocks.f2)
    nb = len(cols)
    if len(rows) != nb:
        raise ValueError(f"{nb} border columns but {len(rows)} border rows")

    rhs = np.concatenate((blocks.F1, blocks.F2, np.array(tail)))
    if nb == 0:
        return BorderedSystem(core=core, border_cols=None, border_rows=None, corner=None, rhs=rhs, nb=0)
    return BorderedSystem(
        core=core,
        border_cols=np.column_stack(cols),
        border_rows=np.vstack(rows),
        corner=np.zeros((nb, nb)),
        rhs=rhs,
        nb=nb,
    )


def solve_bordered(system: BorderedSystem) -> np.ndarray:
    """Solve via block elimination: factor the core, eliminate it from the
    border rows, solve the nb x nb Schur complement for the multipliers,
    back-substitute.  Returns the full unknown vector (3N + nb,)."""
    m = system.core.shape[0]
    try:
        lu = spla.splu(system.core.tocsc())
    except RuntimeError as exc:
        raise SingularCoreError(f"core factorization failed: {exc}") from exc
    g = lu.solve(system.rhs[:m])
    if system.nb == 0:
        return g

    Y = lu.solve(system.border_cols)
    if Y.ndim == 1:
        Y = Y[:, None]
    schur = system.corner - system.border_rows @ Y
    h = system.rhs[m:] - system.border_rows @ g

    U, sing, Vt = np.linalg.svd(schur)
    scale = max(
        float(sing[0]),
        float(np.abs(system.border_rows).max(initial=0.0) * np.abs(Y).max(initial=0.0)),
    )
    if sing[-1] <= 1e-13 * scale:
        raise EquilibriumDegeneracyError(
            f"multiplier Schur complement is singular (singular values {sing})"
        )
    mu = Vt.T @ ((U.T @ h) / sing)
    z = g - Y @ mu
    return np.concatenate((z, mu))


def solve_bordered_dense(system: BorderedSystem) -> np.ndarray:
    """Reference solve of the same system as one dense matrix (test oracle;
    refuses cores larger than 3 * 64)."""
    m = system.core.shape[0]
    if m > 192:
        raise ValueError(f"dense fallback limited to cores of size <= 192, got {m}")
    full = np.zeros((m + system.nb, m + system.nb))
    full[:m, :m] = system.core.toarray()
    if system.nb:
        full[:m, m:] = system.border_cols
        full[m:, :m] = system.border_rows
        full[m:, m:] = system.corner
    return np.linalg.solve(full, system.rhs)


def residual_norm(system: BorderedSystem, z: np.ndarray) -> float:
    """Max-norm residual ||M z - rhs||_inf computed blockwise (the full
    matrix is never formed)."""
    m = system.core.shape[0]
    zc = z[:m]
    top = system.core @ zc - system.rhs[:m]
    if system.nb:
        mu = z[m:]
        top += system.border_cols @ mu
        bottom = system.border_rows @ zc + system.corner @ mu - system.rhs[m:]
        return float(max(np.abs(top).max(), np.abs(bottom).max()))
    return float(np.abs(top).max())
