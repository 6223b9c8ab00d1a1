"""Piecewise-linear finite element machinery on a closed reference polygon.

Nodal scalar fields are plain ``(N,)`` float arrays, vector fields are
``(N, 2)`` arrays; for the Newton system vector unknowns are flattened to the
interleaved layout ``(x_0, y_0, x_1, y_1, ...)``.

The Newton linearization of every time-stepping scheme in this package fits a
single template.  With the new curve ``X``, curvature ``kappa`` and the
multipliers ``lam`` (perimeter law) and ``eta`` (area law) as unknowns, and a
frozen reference polygon supplying the lumped masses ``m``, lumped normal
weights ``omega`` and stiffness matrix ``S``, the residual rows are

* velocity row (one per vertex, scaled by ``tau * alpha / delta0`` so that the
  position block of its Jacobian equals the transpose of the curvature
  equation's kappa block),
* curvature row (two per vertex, interleaved),
* optionally a perimeter row and an area row, whose gradients are evaluated
  exactly on the current iterate's polygon.

``SchemeContext`` carries the per-scheme coefficients of the template.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.sparse as sp

from .geometry import _as_vertices, _shoelace, edge_lengths, edge_vectors

__all__ = [
    "lumped_masses",
    "normal_weights",
    "stiffness_matrix",
    "lumped_inner",
    "stiffness_inner",
    "variation_perimeter",
    "variation_area",
    "initial_curvature",
    "interleave",
    "deinterleave",
    "ReferenceGeometry",
    "SchemeContext",
    "NewtonIterate",
    "NewtonBlocks",
    "residual_vector",
    "assemble_newton_blocks",
]


def lumped_masses(curve) -> np.ndarray:
    """Vertex masses m_k = (|h_{k-1}| + |h_k|) / 2 of the lumped inner product."""
    ell = edge_lengths(curve)
    return 0.5 * (ell + np.roll(ell, 1))


def normal_weights(curve) -> np.ndarray:
    """Lumped outward normal weights.

    omega_k = (|h_{k-1}| n_{k-1} + |h_k| n_k) / 2
            = ((y_{k+1} - y_{k-1}) / 2, (x_{k-1} - x_{k+1}) / 2),
    which is exactly the gradient of the shoelace area at vertex k.
    """
    h = edge_vectors(curve)
    ln = np.column_stack((h[:, 1], -h[:, 0]))  # |h_j| n_j without normalizing
    return 0.5 * (ln + np.roll(ln, 1, axis=0))


def stiffness_matrix(curve) -> sp.csr_matrix:
    """Periodic tridiagonal stiffness matrix of arclength derivatives:
    (S u)_k = (u_k - u_{k-1}) / |h_{k-1}| + (u_k - u_{k+1}) / |h_k|."""
    ell = edge_lengths(curve)
    w = 1.0 / ell
    n = len(ell)
    diag = w + np.roll(w, 1)
    rows = np.concatenate((np.arange(n), np.arange(n), np.arange(n)))
    cols = np.concatenate((np.arange(n), (np.arange(n) + 1) % n, (np.arange(n) - 1) % n))
    data = np.concatenate((diag, -w, -np.roll(w, 1)))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _pair_product(u, v, n: int) -> np.ndarray:
    """Pointwise product of two nodal fields, summed over components for
    vector fields; returns an (n,) array."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for name, f in (("first", u), ("second", v)):
        if f.shape not in ((n,), (n, 2)):
            raise ValueError(f"{name} field has shape {f.shape}, expected ({n},) or ({n}, 2)")
    if u.shape != v.shape:
        raise ValueError(f"field shapes differ: {u.shape} vs {v.shape}")
    if u.ndim == 2:
        return (u * v).sum(axis=1)
    return u * v


def lumped_inner(u, v, curve) -> float:
    """Mass-lumped inner product: the composite trapezoidal rule
    (1/2) sum_j |h_j| [ (u.v) at the edge's end + (u.v) at its start ]."""
    vertices = _as_vertices(curve)
    prod = _pair_product(u, v, len(vertices))
    return float(np.dot(lumped_masses(vertices), prod))


def stiffness_inner(u, v, curve) -> float:
    """Inner product of arclength derivatives:
    sum_j (u_{j+1} - u_j)(v_{j+1} - v_j) / |h_j|, components summed."""
    vertices = _as_vertices(curve)
    n = len(vertices)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for name, f in (("first", u), ("second", v)):
        if f.shape not in ((n,), (n, 2)):
            raise ValueError(f"{name} field has shape {f.shape}, expected ({n},) or ({n}, 2)")
    if u.shape != v.shape:
        raise ValueError(f"field shapes differ: {u.shape} vs {v.shape}")
    du = np.roll(u, -1, axis=0) - u
    dv = np.roll(v, -1, axis=0) - v
    prod = (du * dv).sum(axis=1) if u.ndim == 2 else du * dv
    return float(np.dot(prod, 1.0 / edge_lengths(vertices)))


def perimeter_gradient(curve) -> np.ndarray:
    """Exact gradient of the perimeter: grad L_k = u_{k-1} - u_k with unit
    tangents u_j = h_j / |h_j|."""
    h = edge_vectors(curve)
    u = h / np.hypot(h[:, 0], h[:, 1])[:, None]
    return np.roll(u, 1, axis=0) - u


def variation_perimeter(curve, direction) -> float:
    """First variation of the perimeter along a nodal vector field:
    sum_j (h_j . delta h_j) / |h_j|."""
    vertices = _as_vertices(curve)
    d = np.asarray(direction, dtype=float)
    if d.shape != vertices.shape:
        raise ValueError(f"direction has shape {d.shape}, expected {vertices.shape}")
    return stiffness_inner(vertices, d, vertices)


def variation_area(curve, direction) -> float:
    """First variation of the signed area along a nodal vector field; the
    lumped pairing with the outward normal, exact for the shoelace area."""
    vertices = _as_vertices(curve)
    d = np.asarray(direction, dtype=float)
    if d.shape != vertices.shape:
        raise ValueError(f"direction has shape {d.shape}, expected {vertices.shape}")
    return float((d * normal_weights(vertices)).sum())


def initial_curvature(curve) -> np.ndarray:
    """Least-squares nodal curvature of a polygon.

    The overdetermined system kappa_k omega_k = (S X)_k (two equations per
    vertex, one unknown) decouples vertex by vertex; the normal equations give
    kappa_k = omega_k . (S X)_k / |omega_k|^2.
    """
    vertices = _as_vertices(curve)
    omega = normal_weights(vertices)
    v = stiffness_matrix(vertices) @ vertices
    wsq = (omega * omega).sum(axis=1)
    floor = (1e-13 * lumped_masses(vertices)) ** 2
    if (wsq <= floor).any():
        bad = int(np.flatnonzero(wsq <= floor)[0])
        raise ValueError(f"degenerate normal weight at vertex {bad}")
    return (omega * v).sum(axis=1) / wsq


def interleave(field: np.ndarray) -> np.ndarray:
    """(N, 2) vector field -> interleaved (2N,) vector (x0, y0, x1, y1, ...)."""
    return np.ascontiguousarray(field, dtype=float).ravel()


def deinterleave(z: np.ndarray) -> np.ndarray:
    """Interleaved (2N,) vector -> (N, 2) vector field."""
    return np.asarray(z, dtype=float).reshape(-1, 2)


class ReferenceGeometry:
    """Frozen reference polygon with the quantities every Newton assembly
    reuses: lumped masses, normal weights, stiffness matrix and its expansion
    to interleaved vector fields."""

    __slots__ = ("vertices", "lengths", "mass", "omega", "S", "S2", "perimeter")

    def __init__(self, curve) -> None:
        v = _as_vertices(curve)
        self.vertices = np.array(v, dtype=float)
        self.lengths = edge_lengths(self.vertices)
        if (self.lengths == 0.0).any():
            bad = int(np.flatnonzero(self.lengths == 0.0)[0])
            raise ValueError(f"zero-length edge at index {bad}")
        self.mass = 0.5 * (self.lengths + np.roll(self.lengths, 1))
        self.omega = normal_weights(self.vertices)
        self.S = stiffness_matrix(self.vertices)
        # interleaved layout: index 2k + c for vertex k, component c
        self.S2 = sp.kron(self.S, sp.identity(2, format="csr"), format="csr")
        self.perimeter = float(self.lengths.sum())

    @property
    def n(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class SchemeContext:
    """Per-scheme coefficients of the implicit step template.

    The equations solved for (X, kappa, lam, eta) are

      velocity:  omega_ref . (delta0 X + xhist) / tau
                 + S_ref kappa_eff - lam_eff m kappa_eff - eta_eff m = 0
      curvature: kappa_eff omega_ref - S_ref X_eff = 0             (per component)
      perimeter: (dL0 L(X) + Lhist) / tau + kappa_eff^T S_ref kappa_eff = 0
      area:      A(X) - A0 = 0

    with kappa_eff = alpha kappa + kappa_off (and likewise lam_eff, eta_eff)
    and X_eff = alpha_x X + x_off.  Averaged schemes set alpha = alpha_x = 1/2
    with the previous values as offsets; multistep schemes put the history
    combination into xhist and Lhist.  Rows 3 and 4 are present only when the
    corresponding multiplier is an unknown.
    """

    delta0: float
    xhist: np.ndarray
    alpha: float = 1.0
    kappa_off: Union[np.ndarray, float] = 0.0
    lambda_off: float = 0.0
    eta_off: float = 0.0
    alpha_x: float = 1.0
    x_off: Union[np.ndarray, float] = 0.0
    use_perimeter: bool = True
    dL0: float = 1.0
    Lhist: float = 0.0
    use_area: bool = True
    A0: float = 0.0


class NewtonIterate(NamedTuple):
    """Current Newton iterate; lam/eta stay 0 when not unknowns."""

    X: np.ndarray
    kappa: np.ndarray
    lam: float
    eta: float


@dataclass
class NewtonBlocks:
    """Blocks of one Newton step's bordered linear system.

    Core rows/columns: P is the N x 2N velocity-row position block, Q the
    N x N curvature block of the velocity rows (stiffness scaled by the tau
    conventions), R the symmetric 2N x 2N position block of the curvature
    rows whose kappa block is exactly P^T.  Border columns a1 (lam) and a2
    (eta) live in the velocity rows; border rows (b1 | b2) and (c | 0) are the
    linearized perimeter and area laws, with the gradients b1 and c evaluated
    exactly on the iterate's polygon.  F1 (N), F2 (2N), f1, f2 hold the
    negated residuals, i.e. the right-hand side of the Newton direction solve.
    Absent multipliers leave the matching fields None.
    """

    P: sp.spmatrix
    Q: sp.spmatrix
    R: sp.spmatrix
    a1: Optional[np.ndarray]
    a2: Optional[np.ndarray]
    b1: Optional[np.ndarray]
    b2: Optional[np.ndarray]
    c: Optional[np.ndarray]
    F1: np.ndarray
    F2: np.ndarray
    f1: Optional[float]
    f2: Optional[float]


def _effective(ctx: SchemeContext, it: NewtonIterate):
    kappa_eff = ctx.alpha * it.kappa + ctx.kappa_off
    lam_eff = ctx.alpha * it.lam + ctx.lambda_off
    eta_eff = ctx.alpha * it.eta + ctx.eta_off
    x_eff = ctx.alpha_x * it.X + ctx.x_off
    return kappa_eff, lam_eff, eta_eff, x_eff


def residual_vector(ctx: SchemeContext, ref: ReferenceGeometry, it: NewtonIterate, tau: float) -> np.ndarray:
    """Residual of the nonlinear step equations at the iterate, ordered
    [velocity (N), curvature (2N), perimeter?, area?] with the velocity rows
    scaled by tau * alpha / delta0 (pure row scaling; same root)."""
    kappa_eff, lam_eff, eta_eff, x_eff = _effective(ctx, it)
    s_flux = tau * ctx.alpha / ctx.delta0
    s_time = ctx.alpha / ctx.delta0
    Skap = ref.S @ kappa_eff
    r1 = s_time * ((ctx.delta0 * it.X + ctx.xhist) * ref.omega).sum(axis=1) + s_flux * (
        Skap - lam_eff * ref.mass * kappa_eff - eta_eff * ref.mass
    )
    r2 = (kappa_eff[:, None] * ref.omega - ref.S @ x_eff).ravel()
    parts = [r1, r2]
    if ctx.use_perimeter:
        L_it = float(edge_lengths(it.X).sum())
        r3 = (ctx.dL0 * L_it + ctx.Lhist) / tau + float(kappa_eff @ Skap)
        parts.append(np.array([r3]))
    if ctx.use_area:
        parts.append(np.array([_shoelace(it.X) - ctx.A0]))
    return np.concatenate(parts)


def assemble_newton_blocks(ctx: SchemeContext, ref: ReferenceGeometry, it: NewtonIterate, tau: float) -> NewtonBlocks:
    """Exact Jacobian blocks and negated residuals of the step equations at
    the iterate (the quadratic multiplier-times-curvature update product is
    the only dropped term, as the Newton direction requires)."""
    n = ref.n
    kappa_eff, lam_eff, eta_eff, _ = _effective(ctx, it)
    s_flux = tau * ctx.alpha / ctx.delta0
    Skap = ref.S @ kappa_eff

    rows = np.repeat(np.arange(n), 2)
    cols = np.arange(2 * n)
    P = sp.csr_matrix((ctx.alpha * ref.omega.ravel(), (rows, cols)), shape=(n, 2 * n))
    M = sp.diags(ref.mass)
    Q = (s_flux * ctx.alpha) * (ref.S - lam_eff * M)
    R = (-ctx.alpha_x) * ref.S2

    a1 = (-s_flux * ctx.alpha) * (ref.mass * kappa_eff) if ctx.use_perimeter else None
    a2 = (-s_flux * ctx.alpha) * ref.mass if ctx.use_area else None

    res = residual_vector(ctx, ref, it, tau)
    F1 = -res[:n]
    F2 = -res[n : 3 * n]
    pos = 3 * n
    b1 = b2 = c = None
    f1 = f2 = None
    if ctx.use_perimeter:
        b1 = (ctx.dL0 / tau) * interleave(perimeter_gradient(it.X))
        b2 = 2.0 * ctx.alpha * Skap
        f1 = float(-res[pos])
        pos += 1
    if ctx.use_area:
        c = interleave(normal_weights(it.X))
        f2 = float(-res[pos])
    return NewtonBlocks(P=P, Q=Q, R=R, a1=a1, a2=a2, b1=b1, b2=b2, c=c, F1=F1, F2=F2, f1=f1, f2=f2)
