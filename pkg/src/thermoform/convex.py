"""Entropy function as the Legendre dual of the linear pressure.

``h(z) = inf_y P(y) - y . z``; the minimiser ``y(z)`` satisfies
``grad P(y) = z`` and ``grad h(z) = -y(z)``.  The infimum is computed by damped
Newton with a finite-difference Hessian of ``y -> z(y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionTooHigh, InputError, NoConvergence
from .shift_model import RotationSet, ShiftModel, reduce_potentials, rotation_set, solve_batch

Y_MAX = 50.0
GRAD_TOL = 1e-10
HULL_SLACK = 1e-9
EDGE_MARGIN = 1e-4
FD_STEP = 1e-5
MAX_NEWTON = 200
# longest Newton step, in the coordinates where Y_MAX is measured
STEP_CAP = 10.0

INTERIOR, NEAR_BOUNDARY, OUTSIDE = "interior", "near_boundary", "outside"


@dataclass(frozen=True)
class EntropyEvaluation:
    z: np.ndarray
    h: float
    dual_y: np.ndarray
    grad_h: np.ndarray
    status: str


@dataclass
class DiagramTable:
    rows: list[EntropyEvaluation]
    grid_spec: dict = field(default_factory=dict)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = np.array([r.z for r in self.rows])
        h = np.array([r.h for r in self.rows])
        g = np.array([r.grad_h for r in self.rows])
        return z, h, g


def _fd_jacobian(model: ShiftModel, Y: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of ``y -> z(y)``: the Hessian of ``P``, shape (n, d, d)."""
    n, d = Y.shape
    J = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        zp = solve_batch(model, Y + e).z
        zm = solve_batch(model, Y - e).z
        J[:, :, j] = (zp - zm) / (2 * step)
    return 0.5 * (J + J.transpose(0, 2, 1))


def dual_solve(model: ShiftModel, Z: np.ndarray, y0: np.ndarray | None = None,
               y_metric: np.ndarray | None = None):
    """Minimise ``P(y) - y . z`` for every row of ``Z`` at once.

    Returns ``(y, h, objective, converged, blown, stalled)`` arrays.  ``h`` is
    the entropy of the Markov measure at ``y``; ``blown`` marks rows whose
    iterate reached the box edge ``|y| = Y_MAX``.

    The residual tolerance ``GRAD_TOL`` shrinks with the relative distance of
    ``z`` to the hull boundary, so points within ``1e-10`` of a face still get
    an accurate dual; a Newton step at rounding level also counts as converged.
    ``y_metric`` maps ``y`` to the coordinates in which ``Y_MAX`` is measured
    (identity by default).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, d = Z.shape
    rs = rotation_set(model)
    rel = np.clip(rs.margin(Z) / max(rs.diameter, 1e-300), 0.0, 1.0)
    tol = np.maximum(GRAD_TOL * rel, 64 * np.finfo(float).eps * np.abs(Z).max(axis=1))
    Y = np.zeros((n, d)) if y0 is None else np.array(np.atleast_2d(y0), dtype=float)
    b = solve_batch(model, Y)
    P, zY, hY = b.pressure, b.z, b.entropy
    obj = P - np.einsum("nd,nd->n", Y, Z)
    size = (lambda V: np.abs(V).max(axis=1)) if y_metric is None else (lambda V: np.abs(V @ y_metric.T).max(axis=1))
    converged = np.zeros(n, dtype=bool)
    blown = np.zeros(n, dtype=bool)
    stalled = np.zeros(n, dtype=bool)
    # Levenberg-Marquardt damping per row, zero while plain Newton steps succeed
    damp = np.zeros(n)
    eye = np.eye(d)
    for _ in range(MAX_NEWTON):
        res = zY - Z
        converged |= np.abs(res).max(axis=1) < tol
        blown |= size(Y) >= Y_MAX
        act = np.flatnonzero(~(converged | blown | stalled))
        if act.size == 0:
            break
        H = _fd_jacobian(model, Y[act])
        floor = 1e-6 * np.trace(H, axis1=1, axis2=2) / d
        pending = np.arange(act.size)
        for attempt in range(80):
            idx = act[pending]
            r = res[idx]
            Hd = H[pending] + damp[idx, None, None] * eye
            try:
                step = np.linalg.solve(Hd, r[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = np.einsum("nij,nj->ni", np.linalg.pinv(Hd), r)
            if attempt == 0:
                # an undamped step at rounding level means the row has converged
                tiny = (damp[idx] == 0) & (np.abs(step).max(axis=1) <= 1e-13 * (1 + np.abs(Y[idx]).max(axis=1)))
                converged[idx[tiny]] = True
                pending, idx, r, step = pending[~tiny], idx[~tiny], r[~tiny], step[~tiny]
                if pending.size == 0:
                    break
            # steps beyond the trust radius count as rejected, so the damping
            # grows and turns them towards the stiff directions
            ok = np.zeros(pending.size, dtype=bool)
            fit = np.flatnonzero(size(step) <= STEP_CAP)
            if fit.size:
                rows, sf, rf = idx[fit], step[fit], r[fit]
                cand = Y[rows] - sf
                cb = solve_batch(model, cand)
                cobj = cb.pressure - np.einsum("nd,nd->n", cand, Z[rows])
                cres = np.abs(cb.z - Z[rows]).max(axis=1)
                scale = np.maximum(1.0, np.abs(obj[rows]))
                gain = obj[rows] - cobj
                pred = np.einsum("nd,nd->n", sf, rf) - 0.5 * np.einsum("nd,nde,ne->n", sf, H[pending[fit]], sf)
                # the quadratic model must predict the decrease unless both are at rounding level;
                # a smaller residual also counts while the objective is flat to rounding
                good = ((gain >= -1e-14 * scale) & ((gain >= 0.25 * pred) | (pred <= 1e-12 * scale))) | (
                    (cres < np.abs(rf).max(axis=1)) & (gain >= -1e-11 * scale)
                )
                acc = rows[good]
                Y[acc], P[acc], zY[acc], hY[acc], obj[acc] = (
                    cand[good], cb.pressure[good], cb.z[good], cb.entropy[good], cobj[good]
                )
                easy = good & (gain > 0.75 * pred)
                er = rows[easy]
                damp[er] /= 3
                damp[er[damp[er] < 1e-6 * floor[pending[fit][easy]]]] = 0.0
                ok[fit] = good
            damp[idx[~ok]] = np.maximum(4 * damp[idx[~ok]], floor[pending[~ok]])
            pending = pending[~ok]
            if pending.size == 0:
                break
        stalled[act[pending]] = True
    # running out of iterations is a stall too
    stalled |= ~(converged | blown)
    # Markov-chain entropy stays accurate when tiny; the objective loses digits
    return Y, hY, obj, converged, blown, stalled


def _hull_status(rs: RotationSet, Z: np.ndarray) -> np.ndarray:
    return rs.margin(Z) >= -HULL_SLACK


def entropy_many(model: ShiftModel, Z: np.ndarray, strict: bool = False):
    """Vectorised :func:`entropy_at`; returns arrays ``(h, y, status)``.

    Affinely dependent potentials are reduced first; the returned dual
    parameter is the minimal-norm lift of the reduced one, and ``Y_MAX`` is
    checked on that lift so the cutoff does not depend on which coordinates
    were kept.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    rs = rotation_set(model)
    inside = _hull_status(rs, Z)
    n, d = Z.shape
    h = np.full(n, -np.inf)
    Y = np.full((n, d), np.nan)
    status = np.full(n, OUTSIDE, dtype=object)
    idx = np.flatnonzero(inside)
    if idx.size:
        reduced, amap = reduce_potentials(model)
        lift = np.linalg.pinv(amap.matrix)
        y, hh, obj, conv, blown, stalled = dual_solve(reduced, Z[idx][:, list(amap.kept)], y_metric=lift.T)
        if strict and stalled.any():
            raise NoConvergence(f"dual Newton stalled at z={Z[idx][stalled][0]}")
        Y[idx] = y @ lift
        # unconverged rows: the dual objective is the best upper bound found
        h[idx] = np.where(conv, hh, obj)
        status[idx] = np.where(conv & ~blown, INTERIOR, NEAR_BOUNDARY)
    return h, Y, status


def entropy_at(model: ShiftModel, z: Sequence[float] | np.ndarray) -> EntropyEvaluation:
    """Entropy function ``h(z)`` with its Legendre dual parameter.

    Points outside the rotation set get ``h = -inf`` and status ``outside``.
    When the minimisation pushes ``|y|`` to ``Y_MAX`` the point is too close
    to the boundary to resolve; the best value found is returned with status
    ``near_boundary``.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    h, Y, status = entropy_many(model, z[None, :], strict=True)
    y = Y[0]
    return EntropyEvaluation(z=z, h=float(h[0]), dual_y=y, grad_h=-y, status=str(status[0]))


def _grid_points(rs: RotationSet, grid: dict, margin: float) -> np.ndarray:
    d = rs.center.size
    n = grid.get("points", 101)
    counts = n if isinstance(n, (list, tuple)) else [n] * d
    if len(counts) != d or min(counts) < 2:
        raise InputError(f"grid needs at least 2 points on each of {d} axes")
    ranges = grid.get("ranges") or [(lo + margin, hi - margin) for lo, hi in rs.bounding_box]
    if len(ranges) != d:
        raise InputError(f"grid needs {d} ranges")
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(ranges, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def diagram(model: ShiftModel, grid: dict | int | None = None) -> DiagramTable:
    """Tabulate the entropy function over a regular grid.

    ``grid`` is either a point count per axis or a mapping with ``points``
    (int or per-axis list) and optional ``ranges`` (list of ``(lo, hi)``).
    Grids live in the reduced coordinates when potentials are affinely
    dependent.  Without ranges the reduced rotation-set bounding box, shrunk
    by the edge margin ``1e-4 * diameter``, is used.  Only points at least
    that far inside the rotation set are kept.
    Rows are in lexicographic order of ``z``.
    """
    if grid is None:
        grid = {}
    elif isinstance(grid, int):
        grid = {"points": grid}
    reduced, amap = reduce_potentials(model)
    if reduced.d > 2:
        raise DimensionTooHigh(f"diagram needs d <= 2 after reduction, have {reduced.d}")
    rs = rotation_set(reduced)
    margin = EDGE_MARGIN * rs.diameter
    Z = _grid_points(rs, grid, margin)
    Z = Z[rs.margin(Z) >= margin * (1 - 1e-9)]
    Z = amap(Z[np.lexsort(Z.T[::-1])])
    h, Y, status = entropy_many(model, Z)
    rows = [EntropyEvaluation(z=Z[i], h=float(h[i]), dual_y=Y[i], grad_h=-Y[i], status=str(status[i]))
            for i in range(len(Z))]
    spec = dict(grid)
    spec["margin"] = margin
    return DiagramTable(rows=rows, grid_spec=spec)
