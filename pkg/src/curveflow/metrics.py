"""Run diagnostics, convergence-order tables, and the manifold distance
between closed curves.

The manifold distance |O1 \\ O2| + |O2 \\ O1| of the enclosed regions is
computed from one exact polygon intersection: both boundaries are split at
every mutual crossing or collinear-contact parameter, and each sub-segment
contributes its Green's-theorem term 0.5 * cross(start, end) when it lies on
the boundary of the intersection region.  Sidedness decisions use a floating
point orientation filter with an exact rational fallback, so coincident
geometry (identical curves, shared edges, touching vertices) is classified
deterministically rather than by perturbation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import _as_vertices, _shoelace, is_simple

__all__ = [
    "DiagnosticsRow",
    "DiagnosticsSeries",
    "DIAGNOSTICS_HEADER",
    "write_diagnostics_csv",
    "ConvergenceRow",
    "EOC_HEADER",
    "eoc",
    "write_eoc_csv",
    "multiplier_error",
    "polygon_intersection_area",
    "manifold_distance",
]


# ---------------------------------------------------------------------------
# diagnostics series


@dataclass(frozen=True)
class DiagnosticsRow:
    """One time level of a run: normalized perimeter, relative area change,
    multipliers, mesh ratio, Newton count, perimeter decrement and mode."""

    t: float
    L_norm: float
    dA: float
    lam: float
    eta: float
    psi: float
    newton_iters: int
    deltaL: float
    mode: str


@dataclass
class DiagnosticsSeries:
    """Rows of a run at t = 0, tau, 2 tau, ... plus the mode-switch record."""

    rows: List[DiagnosticsRow]
    switch_time: Optional[float] = None
    forced_switch: bool = False


DIAGNOSTICS_HEADER = "t,L_norm,dA,lambda,eta,psi,newton_iters,deltaL,mode"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_diagnostics_csv(series: DiagnosticsSeries, path_or_file: Union[str, IO[str]]) -> None:
    lines = [DIAGNOSTICS_HEADER]
    for r in series.rows:
        lines.append(
            f"{_fmt(r.t)},{_fmt(r.L_norm)},{_fmt(r.dA)},{_fmt(r.lam)},{_fmt(r.eta)},"
            f"{_fmt(r.psi)},{int(r.newton_iters)},{_fmt(r.deltaL)},{r.mode}"
        )
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="ascii") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# convergence orders


@dataclass(frozen=True)
class ConvergenceRow:
    """One refinement level: time step, mesh size (if known), error against
    the next-finer level, and the order measured against the previous row."""

    tau: float
    h: Optional[float]
    error: float
    order: Optional[float]


EOC_HEADER = "tau,h,error,order"


def eoc(rows: Sequence[Sequence[float]]) -> List[ConvergenceRow]:
    """Experimental orders of convergence from (tau, error) or (tau, h,
    error) rows; order_j = log(e_{j-1}/e_j) / log(tau_{j-1}/tau_j).  Requires
    strictly decreasing tau and positive errors."""
    parsed: List[Tuple[float, Optional[float], float]] = []
    for item in rows:
        vals = tuple(item)
        if len(vals) == 2:
            tau, h, err = float(vals[0]), None, float(vals[1])
        elif len(vals) == 3:
            tau, h, err = float(vals[0]), float(vals[1]), float(vals[2])
        else:
            raise ValueError(f"expected (tau, error) or (tau, h, error), got {vals!r}")
        if err <= 0 or not math.isfinite(err):
            raise ValueError(f"errors must be positive, got {err}")
        parsed.append((tau, h, err))
    for (t0, _, _), (t1, _, _) in zip(parsed, parsed[1:]):
        if not t1 < t0:
            raise ValueError(f"taus must be strictly decreasing, got {t0} then {t1}")
    out: List[ConvergenceRow] = []
    prev: Optional[Tuple[float, float]] = None
    for tau, h, err in parsed:
        order = None
        if prev is not None:
            order = math.log(prev[1] / err) / math.log(prev[0] / tau)
        out.append(ConvergenceRow(tau=tau, h=h, error=err, order=order))
        prev = (tau, err)
    return out


def write_eoc_csv(rows: Sequence[ConvergenceRow], path_or_file: Union[str, IO[str]]) -> None:
    lines = [EOC_HEADER]
    for r in rows:
        h = "" if r.h is None else _fmt(r.h)
        order = "" if r.order is None else _fmt(r.order)
        lines.append(f"{_fmt(r.tau)},{h},{_fmt(r.error)},{order}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="ascii") as fh:
            fh.write(text)


def multiplier_error(value: float) -> float:
    """Terminal-multiplier error: distance of the multiplier from its
    continuous limit 0."""
    return abs(float(value))


# ---------------------------------------------------------------------------
# exact polygon intersection


_FILTER = 3.33e-16  # relative error bound of the two-product orientation test


def _orient(ax: float, ay: float, bx: float, by: float, cx: float, cy: float) -> int:
    """Sign of cross(b - a, c - a): +1 left turn, -1 right turn, 0 collinear.
    Float filter first, exact rational arithmetic when inconclusive."""
    detl = (bx - ax) * (cy - ay)
    detr = (by - ay) * (cx - ax)
    det = detl - detr
    err = _FILTER * (abs(detl) + abs(detr))
    if det > err:
        return 1
    if det < -err:
        return -1
    if err == 0.0:
        return 0
    exact = (Fraction(bx) - Fraction(ax)) * (Fraction(cy) - Fraction(ay)) - (
        Fraction(by) - Fraction(ay)
    ) * (Fraction(cx) - Fraction(ax))
    if exact > 0:
        return 1
    if exact < 0:
        return -1
    return 0


def _strict_inside(x: float, y: float, W: np.ndarray, W1: np.ndarray) -> Optional[bool]:
    """Winding-number test of one point against a closed polygon.  Returns
    True/False for strictly inside/outside and None when the point lies
    exactly on the boundary."""
    wx0, wy0 = W[:, 0], W[:, 1]
    wx1, wy1 = W1[:, 0], W1[:, 1]
    flat = (wy0 == y) & (wy1 == y)
    if flat.any():
        for idx in np.flatnonzero(flat):
            if min(wx0[idx], wx1[idx]) <= x <= max(wx0[idx], wx1[idx]):
                return None
    up = (wy0 <= y) & (wy1 > y)
    dn = (wy1 <= y) & (wy0 > y)
    cand = up | dn
    if not cand.any():
        return False
    detl = (wx1 - wx0) * (y - wy0)
    detr = (wy1 - wy0) * (x - wx0)
    det = detl - detr
    ambiguous = cand & (np.abs(det) <= _FILTER * (np.abs(detl) + np.abs(detr)))
    if ambiguous.any():
        det = det.copy()
        for idx in np.flatnonzero(ambiguous):
            o = _orient(wx0[idx], wy0[idx], wx1[idx], wy1[idx], x, y)
            if o == 0:
                return None
            det[idx] = float(o)
    wn = int(np.count_nonzero(up & (det > 0))) - int(np.count_nonzero(dn & (det < 0)))
    return wn != 0


def _classify_interior(ax, ay, bx, by, t0, t1, W, W1) -> bool:
    # sample an interior point of the sub-segment; resample once if the float
    # sample accidentally lands exactly on the other boundary
    for frac in (0.5, 0.618033988749895):
        t = t0 + frac * (t1 - t0)
        r = _strict_inside(ax + t * (bx - ax), ay + t * (by - ay), W, W1)
        if r is not None:
            return r
    return False


def _collect_params(P: np.ndarray, Q: np.ndarray):
    """Split parameters of every edge of P and Q against the other polygon.

    Returns per-edge parameter lists for both polygons plus the recorded
    collinear-overlap intervals (t_lo, t_hi, other_edge_index); a sub-segment
    contained in such an interval lies exactly on the other boundary, which
    is decided structurally here, never from sampled points.
    """
    nP, nQ = len(P), len(Q)
    P1 = np.roll(P, -1, axis=0)
    Q1 = np.roll(Q, -1, axis=0)
    paramsP: List[List[float]] = [[] for _ in range(nP)]
    paramsQ: List[List[float]] = [[] for _ in range(nQ)]
    overlapsP: List[List[Tuple[float, float, int]]] = [[] for _ in range(nP)]
    overlapsQ: List[List[Tuple[float, float, int]]] = [[] for _ in range(nQ)]

    pminx = np.minimum(P[:, 0], P1[:, 0])
    pmaxx = np.maximum(P[:, 0], P1[:, 0])
    pminy = np.minimum(P[:, 1], P1[:, 1])
    pmaxy = np.maximum(P[:, 1], P1[:, 1])
    qminx = np.minimum(Q[:, 0], Q1[:, 0])
    qmaxx = np.maximum(Q[:, 0], Q1[:, 0])
    qminy = np.minimum(Q[:, 1], Q1[:, 1])
    qmaxy = np.maximum(Q[:, 1], Q1[:, 1])
    mask = (
        (pminx[:, None] <= qmaxx[None, :])
        & (pmaxx[:, None] >= qminx[None, :])
        & (pminy[:, None] <= qmaxy[None, :])
        & (pmaxy[:, None] >= qminy[None, :])
    )

    for i, j in np.argwhere(mask):
        p0x, p0y = P[i]
        p1x, p1y = P1[i]
        q0x, q0y = Q[j]
        q1x, q1y = Q1[j]
        o1 = _orient(q0x, q0y, q1x, q1y, p0x, p0y)
        o2 = _orient(q0x, q0y, q1x, q1y, p1x, p1y)
        o3 = _orient(p0x, p0y, p1x, p1y, q0x, q0y)
        o4 = _orient(p0x, p0y, p1x, p1y, q1x, q1y)
        dpx, dpy = p1x - p0x, p1y - p0y
        dqx, dqy = q1x - q0x, q1y - q0y
        if o1 == 0 and o2 == 0:
            # shared supporting line: record the overlap on both edges
            dd = dpx * dpx + dpy * dpy
            t0 = ((q0x - p0x) * dpx + (q0y - p0y) * dpy) / dd
            t1 = ((q1x - p0x) * dpx + (q1y - p0y) * dpy) / dd
            lo, hi = (t0, t1) if t0 <= t1 else (t1, t0)
            lo, hi = max(0.0, lo), min(1.0, hi)
            if lo < hi:
                paramsP[i] += [lo, hi]
                overlapsP[i].append((lo, hi, j))
            elif lo == hi:
                paramsP[i].append(lo)
            qq = dqx * dqx + dqy * dqy
            s0 = ((p0x - q0x) * dqx + (p0y - q0y) * dqy) / qq
            s1 = ((p1x - q0x) * dqx + (p1y - q0y) * dqy) / qq
            lo, hi = (s0, s1) if s0 <= s1 else (s1, s0)
            lo, hi = max(0.0, lo), min(1.0, hi)
            if lo < hi:
                paramsQ[j] += [lo, hi]
                overlapsQ[j].append((lo, hi, i))
            elif lo == hi:
                paramsQ[j].append(lo)
        elif o1 * o2 < 0 and o3 * o4 < 0:
            # proper interior crossing
            denom = dpx * dqy - dpy * dqx
            t = ((q0x - p0x) * dqy - (q0y - p0y) * dqx) / denom
            s = -((p0x - q0x) * dpy - (p0y - q0y) * dpx) / denom
            paramsP[i].append(min(1.0, max(0.0, t)))
            paramsQ[j].append(min(1.0, max(0.0, s)))
        else:
            # endpoint touches: split the edge the endpoint lands on
            if o3 == 0:
                dd = dpx * dpx + dpy * dpy
                u = (q0x - p0x) * dpx + (q0y - p0y) * dpy
                if 0.0 <= u <= dd:
                    paramsP[i].append(u / dd)
            if o4 == 0:
                dd = dpx * dpx + dpy * dpy
                u = (q1x - p0x) * dpx + (q1y - p0y) * dpy
                if 0.0 <= u <= dd:
                    paramsP[i].append(u / dd)
            if o1 == 0:
                qq = dqx * dqx + dqy * dqy
                u = (p0x - q0x) * dqx + (p0y - q0y) * dqy
                if 0.0 <= u <= qq:
                    paramsQ[j].append(u / qq)
            if o2 == 0:
                qq = dqx * dqx + dqy * dqy
                u = (p1x - q0x) * dqx + (p1y - q0y) * dqy
                if 0.0 <= u <= qq:
                    paramsQ[j].append(u / qq)
    return paramsP, paramsQ, overlapsP, overlapsQ


def _boundary_pieces_area(
    V: np.ndarray,
    V1: np.ndarray,
    params: List[List[float]],
    overlaps: List[List[Tuple[float, float, int]]],
    W: np.ndarray,
    W1: np.ndarray,
    keep_shared: bool,
) -> float:
    """Green's-theorem contribution of this polygon's boundary to the
    intersection area.  A sub-segment counts when strictly inside the other
    region; a sub-segment on the shared boundary counts only from the first
    polygon (keep_shared=True) and only when co-directed with the other
    boundary, so shared arcs enter exactly once."""
    total = 0.0
    for i in range(len(V)):
        ax, ay = V[i]
        bx, by = V1[i]
        cuts = [0.0]
        for t in sorted(params[i]):
            if cuts[-1] + 1e-14 < t < 1.0 - 1e-14:
                cuts.append(t)
        cuts.append(1.0)
        for t0, t1 in zip(cuts, cuts[1:]):
            shared_edge = None
            for lo, hi, j in overlaps[i]:
                if lo - 1e-12 <= t0 and t1 <= hi + 1e-12:
                    shared_edge = j
                    break
            if shared_edge is not None:
                if not keep_shared:
                    continue
                dqx = W1[shared_edge, 0] - W[shared_edge, 0]
                dqy = W1[shared_edge, 1] - W[shared_edge, 1]
                if (bx - ax) * dqx + (by - ay) * dqy <= 0.0:
                    continue
            elif not _classify_interior(ax, ay, bx, by, t0, t1, W, W1):
                continue
            s0x, s0y = ax + t0 * (bx - ax), ay + t0 * (by - ay)
            s1x, s1y = ax + t1 * (bx - ax), ay + t1 * (by - ay)
            total += 0.5 * (s0x * s1y - s1x * s0y)
    return total


def _validated_vertices(curve) -> np.ndarray:
    v = _as_vertices(curve)
    if _shoelace(v) <= 0.0:
        raise ValueError("curve must be positively oriented")
    if not is_simple(v):
        raise ValueError("curve is self-intersecting")
    return np.array(v, dtype=float)


def polygon_intersection_area(A, B) -> float:
    """Area of the intersection of the regions enclosed by two simple,
    positively oriented closed polygons (components summed)."""
    P = _validated_vertices(A)
    Q = _validated_vertices(B)
    areaP = _shoelace(P)
    areaQ = _shoelace(Q)
    if (
        P[:, 0].max() < Q[:, 0].min()
        or Q[:, 0].max() < P[:, 0].min()
        or P[:, 1].max() < Q[:, 1].min()
        or Q[:, 1].max() < P[:, 1].min()
    ):
        return 0.0
    P1 = np.roll(P, -1, axis=0)
    Q1 = np.roll(Q, -1, axis=0)
    paramsP, paramsQ, overlapsP, overlapsQ = _collect_params(P, Q)
    total = _boundary_pieces_area(P, P1, paramsP, overlapsP, Q, Q1, keep_shared=True)
    total += _boundary_pieces_area(Q, Q1, paramsQ, overlapsQ, P, P1, keep_shared=False)
    return float(min(max(total, 0.0), areaP, areaQ))


def manifold_distance(A, B) -> float:
    """Area of the symmetric difference of the enclosed regions:
    |O_A| + |O_B| - 2 |O_A intersect O_B|.  Arguments are canonicalized so
    the result is bitwise symmetric."""
    va = _as_vertices(A)
    vb = _as_vertices(B)
    if (len(va), va.tobytes()) > (len(vb), vb.tobytes()):
        va, vb = vb, va
    inter = polygon_intersection_area(va, vb)
    return max(0.0, _shoelace(va) + _shoelace(vb) - 2.0 * inter)
