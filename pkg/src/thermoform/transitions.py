"""Phase transitions along one-parameter families ``beta * F_1``.

A scan solves the nonlinear problem on a grid of ``beta``, follows each local
maximiser as a branch by nearest-point continuation, and reports events:
changes in the number of equilibrium values, slope jumps of the pressure
(first-order kinks), births of non-global branches (metastability) and a
boundary point taking over for good (freezing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._parallel import ordered_map
from .convex import entropy_many
from .errors import (
    BelowCritical,
    DimensionNotOne,
    GridTooCoarse,
    InputError,
    NotFreezingShape,
)
from .nonlinear_pressure import TOL_CLUSTER, TOL_VALUE, EquilibriumReport, NonlinearEnergy, nl_pressure
from .shift_model import ShiftModel, reduce_potentials, rotation_set, zero_temperature_measure

BETA_TOL = 1e-8
KINK_FACTOR = 10.0
KINK_FLOOR = 1e-6
KINK_WINDOW = 8
FREEZE_MARGIN = 0.01
FREEZE_GRID = 100_001
FREEZE_GEOMETRIC = 60
POTTS_SCAN_STEP = 1e-3

EVENT_KINDS = ("count_change", "kink_first_order", "metastable_onset", "freezing_onset")


@dataclass
class BranchPoint:
    z: np.ndarray
    g: float
    is_global: bool
    branch: int
    on_boundary: bool = False


@dataclass
class TransitionEvent:
    kind: str
    beta: float
    evidence: dict = field(default_factory=dict)


@dataclass
class BetaScan:
    betas: np.ndarray
    pressures: np.ndarray
    counts: np.ndarray
    value_branches: list[list[BranchPoint]]
    events: list[TransitionEvent]
    global_branch: np.ndarray

    @property
    def branch_ids(self) -> list[int]:
        return sorted({p.branch for row in self.value_branches for p in row})


# ---------------------------------------------------------------------------
# Branch continuation


def _min_separation(Z: np.ndarray) -> float:
    if len(Z) < 2:
        return math.inf
    D = np.abs(Z[:, None, :] - Z[None, :, :]).max(axis=2)
    return float(D[np.triu_indices(len(Z), 1)].min())


def _match(prev: list[BranchPoint], cur: list, next_id: int) -> tuple[list[BranchPoint], int]:
    """Continue branches from ``prev`` to the local maxima ``cur``.

    Pairs are made greedily by distance and accepted when the displacement is
    below half the smallest separation on the previous side.  When the
    number of maxima is unchanged every point must continue a branch;
    otherwise unmatched points start new branches.
    """
    if not prev:
        out = [BranchPoint(m.z, m.g, m.is_global, next_id + i, m.on_boundary) for i, m in enumerate(cur)]
        return out, next_id + len(cur)
    P = np.array([p.z for p in prev])
    C = np.array([m.z for m in cur]) if cur else np.zeros((0, P.shape[1]))
    half = 0.5 * _min_separation(P)
    D = np.abs(C[:, None, :] - P[None, :, :]).max(axis=2)
    pairs = sorted(((D[i, j], i, j) for i in range(len(C)) for j in range(len(P))))
    owner: dict[int, int] = {}
    used: set[int] = set()
    for dist, i, j in pairs:
        if i in owner or j in used or dist >= half:
            continue
        owner[i] = j
        used.add(j)
    if len(C) == len(P) and len(owner) < len(C):
        worst = max(D[i].min() for i in range(len(C)) if i not in owner)
        raise GridTooCoarse(
            f"branch continuation is ambiguous: displacement {worst:.3g} exceeds half the "
            f"branch separation {half:.3g}; refine the beta grid"
        )
    out = []
    for i, m in enumerate(cur):
        if i in owner:
            bid = prev[owner[i]].branch
        else:
            bid, next_id = next_id, next_id + 1
        out.append(BranchPoint(m.z, m.g, m.is_global, bid, m.on_boundary))
    return out, next_id


# ---------------------------------------------------------------------------
# Event helpers


def _count(report: EquilibriumReport) -> int:
    return report.multiplicity


def _n_local(report: EquilibriumReport) -> int:
    return sum(not m.on_boundary for m in report.local_maxima)


def _frozen(report: EquilibriumReport) -> bool:
    return report.multiplicity == 1 and len(report.boundary_values) == 1


def _bisect_beta(solve, lo: float, hi: float, key, left_key, right_key):
    """Shrink ``[lo, hi]`` keeping ``key(report)`` equal to the end values.

    Stops early when the midpoint shows a third value (a tie band, say).
    Returns the final bracket and the report at its midpoint.
    """
    while hi - lo > BETA_TOL:
        mid = 0.5 * (lo + hi)
        k = key(solve(mid))
        if k == left_key:
            lo = mid
        elif k == right_key:
            hi = mid
        else:
            return mid, mid
    return lo, hi


def _slope_jumps(betas: np.ndarray, pressures: np.ndarray) -> np.ndarray:
    slopes = np.diff(pressures) / np.diff(betas)
    jumps = np.zeros(len(betas))
    jumps[1:-1] = np.abs(np.diff(slopes))
    return jumps


def _kink_nodes(jumps: np.ndarray) -> list[int]:
    """Interior nodes whose slope jump dominates both neighbourhoods."""
    flagged = []
    n = len(jumps)
    for i in range(1, n - 1):
        left = jumps[max(1, i - KINK_WINDOW - 1): max(1, i - 1)]
        right = jumps[min(n - 1, i + 2): min(n - 1, i + KINK_WINDOW + 2)]
        base = max(np.median(left) if left.size else 0.0, np.median(right) if right.size else 0.0)
        if jumps[i] > KINK_FACTOR * base and jumps[i] > KINK_FLOOR:
            flagged.append(i)
    return flagged


def _group(indices: list[int]) -> list[list[int]]:
    groups: list[list[int]] = []
    for i in indices:
        if groups and i - groups[-1][-1] <= 1:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _nearest_g(report: EquilibriumReport, z: np.ndarray) -> tuple[float, np.ndarray]:
    best = min(report.local_maxima, key=lambda m: np.abs(m.z - z).max())
    return best.g, best.z


# ---------------------------------------------------------------------------
# Scan


def scan(
    model: ShiftModel,
    energy1: NonlinearEnergy | Mapping | str,
    betas: Sequence[float],
    *,
    refine: bool = True,
    starts_per_axis: int | None = None,
) -> BetaScan:
    """Solve ``beta * energy1`` on an ascending grid and classify transitions.

    Event locations are refined to ``BETA_TOL`` by bisection unless
    ``refine`` is false.  Raises :class:`GridTooCoarse` when branches cannot
    be followed unambiguously between neighbouring grid points.
    """
    energy1 = NonlinearEnergy.from_spec(energy1)
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or len(betas) < 3:
        raise InputError("a scan needs at least 3 beta values")
    if np.any(np.diff(betas) <= 0):
        raise InputError("beta grid must be strictly ascending")

    def solve(beta: float) -> EquilibriumReport:
        return nl_pressure(model, energy1.scaled(beta), starts_per_axis=starts_per_axis)

    reports = ordered_map(solve, list(betas))
    pressures = np.array([r.pressure for r in reports])
    counts = np.array([_count(r) for r in reports])

    branches: list[list[BranchPoint]] = []
    next_id = 0
    prev: list[BranchPoint] = []
    for r in reports:
        prev, next_id = _match(prev, r.local_maxima, next_id)
        branches.append(prev)
    global_branch = np.array([next(p.branch for p in row if p.is_global) for row in branches])

    events: list[TransitionEvent] = []

    # changes in the number of equilibrium values
    for i in np.flatnonzero(counts[1:] != counts[:-1]):
        lo, hi = float(betas[i]), float(betas[i + 1])
        if refine:
            lo, hi = _bisect_beta(solve, lo, hi, _count, counts[i], counts[i + 1])
        beta = 0.5 * (lo + hi)
        at = solve(beta)
        gs = sorted((m.g for m in at.local_maxima), reverse=True)
        events.append(TransitionEvent("count_change", beta, {
            "left_count": int(counts[i]),
            "right_count": int(counts[i + 1]),
            "count_at_beta": at.multiplicity,
            "pressure": at.pressure,
            "top_branch_values": gs[: max(counts[i], counts[i + 1]) + 1],
        }))

    # first-order kinks: slope jumps where the global branch switches
    jumps = _slope_jumps(betas, pressures)
    for grp in _group(_kink_nodes(jumps)):
        a, b = max(0, grp[0] - 1), min(len(betas) - 1, grp[-1] + 1)
        A, B = int(global_branch[a]), int(global_branch[b])
        if A == B:
            continue
        zA = next(p.z for p in branches[a] if p.branch == A)
        zB = next(p.z for p in branches[b] if p.branch == B)
        lo, hi = float(betas[a]), float(betas[b])
        if refine:
            while hi - lo > BETA_TOL:
                mid = 0.5 * (lo + hi)
                r = solve(mid)
                gA, zA_mid = _nearest_g(r, zA)
                gB, zB_mid = _nearest_g(r, zB)
                if np.abs(zA_mid - zB_mid).max() < TOL_CLUSTER:
                    # one branch vanished here; fall back to the global identity
                    if np.abs(zA_mid - zA).max() <= np.abs(zB_mid - zB).max():
                        lo = mid
                    else:
                        hi = mid
                    continue
                if gA >= gB:
                    lo, zA, zB = mid, zA_mid, zB_mid
                else:
                    hi, zA, zB = mid, zA_mid, zB_mid
        beta = 0.5 * (lo + hi)
        slopes = np.diff(pressures) / np.diff(betas)
        events.append(TransitionEvent("kink_first_order", beta, {
            "slope_left": float(slopes[max(0, a - 1)]) if a > 0 else float(slopes[0]),
            "slope_right": float(slopes[min(len(slopes) - 1, b)]),
            "jump": float(jumps[grp].max()),
            "from_branch": A,
            "to_branch": B,
        }))

    # births of branches that are not global
    n_local = np.array([_n_local(r) for r in reports])
    for i in range(len(betas) - 1):
        old = {p.branch for p in branches[i]}
        born = [p for p in branches[i + 1] if p.branch not in old and not p.on_boundary]
        if not born or any(p.is_global for p in born) or counts[i] != counts[i + 1]:
            continue
        lo, hi = float(betas[i]), float(betas[i + 1])
        if refine and n_local[i] != n_local[i + 1]:
            lo, hi = _bisect_beta(solve, lo, hi, _n_local, n_local[i], n_local[i + 1])
        events.append(TransitionEvent("metastable_onset", 0.5 * (lo + hi), {
            "left_local_maxima": int(n_local[i]),
            "right_local_maxima": int(n_local[i + 1]),
            "new_branches": [p.branch for p in born],
            "new_values": [p.z.tolist() for p in born],
        }))

    # a boundary maximiser taking over for the rest of the grid
    frozen = np.array([_frozen(r) for r in reports])
    if frozen[-1] and not frozen.all():
        i = int(np.flatnonzero(~frozen)[-1])
        lo, hi = float(betas[i]), float(betas[i + 1])
        if refine:
            lo, hi = _bisect_beta(solve, lo, hi, _frozen, False, True)
        events.append(TransitionEvent("freezing_onset", 0.5 * (lo + hi), {
            "ground_value": reports[-1].boundary_values[0].tolist(),
            "pressure_tail": pressures[i + 1:].tolist()[:5],
        }))

    events.sort(key=lambda e: (e.beta, EVENT_KINDS.index(e.kind)))
    return BetaScan(
        betas=betas, pressures=pressures, counts=counts,
        value_branches=branches, events=events, global_branch=global_branch,
    )


# ---------------------------------------------------------------------------
# Potts magnetisation


def potts_critical_beta(n_letters: int) -> float:
    """Inverse temperature where the ordered phases take over."""
    if n_letters < 3:
        raise InputError("need at least 3 letters")
    n = n_letters
    return 2 * (n - 1) / (n - 2) * math.log(n - 1)


def potts_rhs(s: float, n_letters: int, beta: float) -> float:
    e = math.exp(-beta * s)
    return (1 - e) / (1 + (n_letters - 1) * e)


def potts_magnetization(n_letters: int, beta: float) -> float:
    """Largest solution ``s`` in ``(0, 1]`` of the ordered-phase equation.

    Located by a descending scan from ``s = 1`` and refined with Brent's
    method.  Raises :class:`BelowCritical` for ``beta`` below the critical
    value, where the uniform phase is the only equilibrium.
    """
    bc = potts_critical_beta(n_letters)
    if beta < bc * (1 - 1e-12):
        raise BelowCritical(f"beta={beta} is below the critical value {bc}")

    def f(s):
        return s - potts_rhs(s, n_letters, beta)

    hi = 1.0
    fhi = f(hi)
    for lo in np.arange(1.0 - POTTS_SCAN_STEP, 0.0, -POTTS_SCAN_STEP):
        flo = f(lo)
        if flo <= 0 < fhi:
            return float(brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps))
        hi, fhi = lo, flo
    raise BelowCritical(f"no ordered solution at beta={beta}")


def potts_ordered_value(n_letters: int, s: float) -> np.ndarray:
    """Letter frequencies of the ordered phase favouring the first letter."""
    n = n_letters
    z = np.full(n, (1 - s) / n)
    z[0] = (1 + (n - 1) * s) / n
    return z


# ---------------------------------------------------------------------------
# Freezing


def freezing_threshold(
    h_func: Callable[[np.ndarray], np.ndarray],
    F1_func: Callable[[np.ndarray], np.ndarray],
    r: float,
    *,
    h0: float | None = None,
    n_grid: int = FREEZE_GRID,
    n_geometric: int = FREEZE_GEOMETRIC,
) -> tuple[float, float]:
    """``sup_z (h(z) - h(0)) / (F_1(0) - F_1(z))`` over ``r < z < 0``.

    The sup is taken on a uniform grid plus the points ``-2^-i |r|``, then
    refined by bounded scalar minimisation.  Returns ``(value, argmax)``.
    Raises :class:`NotFreezingShape` when the ratio still increases at the
    smallest geometric point, i.e. the sup runs off to ``z = 0``.
    """
    if not r < 0:
        raise InputError("the interval must be [r, 0] with r < 0")
    if h0 is None:
        h0 = float(np.asarray(h_func(np.array([0.0])))[0])
    F0 = float(np.asarray(F1_func(np.array([0.0])))[0])

    def ratio(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(all="ignore"):
            return (h_func(z) - h0) / (F0 - F1_func(z))

    uni = np.linspace(r, 0.0, n_grid)[1:-1]
    geo = -abs(r) * 0.5 ** np.arange(1, n_geometric + 1)
    zs = np.concatenate([uni, geo])
    q = ratio(zs)
    q = np.where(np.isfinite(q), q, -np.inf)
    qg = q[len(uni):]
    finite_g = np.flatnonzero(np.isfinite(qg))
    if finite_g.size >= 2:
        last, before = finite_g[-1], finite_g[-2]
        if qg[last] >= q.max() - 1e-12 * max(1.0, abs(q.max())) and qg[last] > qg[before]:
            raise NotFreezingShape("the freezing ratio grows without bound toward the ground value")
    i = int(np.argmax(q))
    zi = zs[i]
    if i < len(uni):
        lo = uni[max(i - 1, 0)]
        hi = uni[min(i + 1, len(uni) - 1)]
    else:
        lo, hi = zi * 2.0, zi * 0.5
    res = minimize_scalar(lambda t: -float(ratio(np.array([t]))[0]), bounds=(min(lo, hi), max(lo, hi)),
                          method="bounded", options={"xatol": 1e-13})
    if res.success and -res.fun > q[i]:
        return float(-res.fun), float(res.x)
    return float(q[i]), float(zi)


def detect_freezing(
    model: ShiftModel,
    energy1: NonlinearEnergy | Mapping | str,
    beta_max: float,
    *,
    n_check: int = 8,
) -> tuple[float, np.ndarray, dict]:
    """Freezing threshold of the family ``beta * energy1`` and a verdict.

    Requires one effective potential with rotation set ``[r, 0]`` and an
    energy of power or linear kind.  The threshold is
    ``sup (h(z) - h(0)) / (F_1(0) - F_1(z))``.  The verdict solves the family
    on ``n_check`` points above ``beta_0 (1 + margin)`` (up to ``beta_max``)
    and a few below ``beta_0 (1 - margin)``.

    Returns:
        ``(beta_0, ground_value, verdict)`` where ``verdict`` records the
        checks; ``verdict["frozen"]`` is the overall outcome.
    """
    energy1 = NonlinearEnergy.from_spec(energy1)
    if energy1.kind not in ("power", "linear"):
        raise InputError("freezing detection needs a power or linear energy")
    reduced, amap = reduce_potentials(model)
    if reduced.d != 1 or model.d != 1:
        raise DimensionNotOne("freezing detection needs exactly one potential")
    (r, top), = rotation_set(model).bounding_box
    if abs(top) > 1e-12 or not r < 0:
        raise InputError(f"rotation set must be [r, 0]; got [{r}, {top}]")
    ev = energy1.bind(model)
    ground = zero_temperature_measure(model, np.array([1.0]))

    def h_func(z):
        return entropy_many(model, np.asarray(z)[:, None])[0]

    def F1(z):
        return ev.energy_part(np.asarray(z, dtype=float)[:, None])

    beta0, z_arg = freezing_threshold(h_func, F1, r, h0=ground.entropy)
    ground_value = np.array([0.0])

    verdict: dict = {"beta_0": beta0, "argmax_z": z_arg, "margin": FREEZE_MARGIN}
    hi_start = beta0 * (1 + FREEZE_MARGIN)
    above_ok = True
    if beta_max > hi_start:
        bs = np.linspace(hi_start, beta_max, max(n_check, 5))
        reps = ordered_map(lambda b: nl_pressure(model, energy1.scaled(b)), list(bs))
        P = np.array([rep.pressure for rep in reps])
        ground_only = all(
            rep.multiplicity == 1 and np.abs(rep.values[0] - ground_value).max() < TOL_CLUSTER for rep in reps
        )
        X = np.column_stack([bs, np.ones_like(bs)])
        coef, *_ = np.linalg.lstsq(X, P, rcond=None)
        resid = float(np.abs(X @ coef - P).max())
        expected_slope = float(F1(np.array([0.0]))[0])
        above_ok = ground_only and resid < 1e-9 and abs(coef[0] - expected_slope) < 1e-6
        verdict["above"] = {
            "betas": bs.tolist(), "pressures": P.tolist(), "ground_only": ground_only,
            "slope": float(coef[0]), "intercept": float(coef[1]), "residual": resid,
            "expected_slope": expected_slope,
        }
    bs_lo = beta0 * (1 - FREEZE_MARGIN) * np.array([0.5, 0.75, 0.9, 1.0])
    reps = ordered_map(lambda b: nl_pressure(model, energy1.scaled(b)), list(bs_lo))
    interior = [bool(not rep.boundary_values and rep.values[0][0] < -TOL_CLUSTER) for rep in reps]
    verdict["below"] = {
        "betas": bs_lo.tolist(),
        "pressures": [rep.pressure for rep in reps],
        "values": [rep.values[0].tolist() for rep in reps],
        "interior": interior,
    }
    verdict["frozen"] = bool(above_ok and all(interior))
    return beta0, ground_value, verdict
