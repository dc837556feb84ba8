"""Maximisation of nonlinear pressures over the rotation set.

The objective is ``g(z) = G(h(z); z)`` with ``h`` the entropy function.  All
searches run in the dual variable ``y``: ``z = grad P(y)`` sweeps the
interior of the rotation set and ``h = P(y) - y . z`` comes for free from the
Markov measure.  In these coordinates

    grad_y g = dG/dh * Hess P(y) @ (T(y) - y),   T = grad_z G / (dG/dh),

so ``T(y) - y`` is an ascent direction and critical points are the fixed
points of ``T``.  A fixed point is a local maximum exactly when every
eigenvalue of ``D T - I`` has negative real part.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from .convex import EDGE_MARGIN, Y_MAX, dual_solve
from .errors import (
    DimensionNotOne,
    DimensionTooHigh,
    EmptyInterior,
    InadmissibleEnergy,
    InputError,
)
from .shift_model import (
    AffineMap,
    PerronData,
    ShiftModel,
    linear_pressure,
    reduce_potentials,
    rotation_set,
    solve_batch,
    zero_temperature_measure,
)

TOL_VALUE = 1e-9
TOL_CLUSTER = 1e-5
N_SCAN = 20001
N_TAIL = 200
Y_LIMIT = 12800.0
MAX_VALUES = 64
ADMISSIBILITY_SAMPLES = 1024
STARTS_PER_AXIS = {2: 32, 3: 16, 4: 8, 5: 6, 6: 5}
ASCENT_STEPS = 80
APPROACH_STEPS = 40

ENERGY_KINDS = ("linear", "quadratic", "power", "polynomial", "fully_nonlinear")


class ContinuumSuspected(UserWarning):
    """More equilibrium values than expected from an analytic problem."""


# ---------------------------------------------------------------------------
# Energies


@dataclass(frozen=True)
class NonlinearEnergy:
    """A nonlinearity ``G(h; z)``, mostly of the form ``h + F(z)``.

    Kinds and their ``F``:

    * ``linear``: ``beta * c . z`` (``c`` = ``direction``, default all ones)
    * ``quadratic``: ``beta * |z|^2 / 2``
    * ``power``: ``-beta * (-z)^alpha`` for one potential taking values <= 0
    * ``polynomial``: ``beta * sum_j p(z_j)`` with ``p`` given by ascending
      ``coeffs``
    * ``fully_nonlinear``: ``expr`` is a full ``G`` in the symbols ``z0``
      (entropy) and ``z1 .. zd``, with named constants in ``params``
    """

    kind: str
    beta: float = 1.0
    alpha: float = 1.0
    coeffs: tuple[float, ...] = ()
    direction: tuple[float, ...] | None = None
    expr: str = ""
    params: tuple[tuple[str, float], ...] = ()
    domain: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ENERGY_KINDS:
            raise InputError(f"unknown energy kind {self.kind!r}; choose from {', '.join(ENERGY_KINDS)}")
        if not np.isfinite(self.beta):
            raise InputError("beta must be finite")
        if self.kind == "power" and not 0 < self.alpha <= 1:
            raise InadmissibleEnergy(f"power exponent must lie in (0, 1], got {self.alpha}")
        if self.kind == "polynomial" and not self.coeffs:
            raise InputError("polynomial energy needs at least one coefficient")
        if self.kind == "fully_nonlinear" and not self.expr.strip():
            raise InputError("fully_nonlinear energy needs an expression")

    @classmethod
    def from_spec(cls, spec: Any) -> "NonlinearEnergy":
        """Build from a mapping, a JSON string or an inline ``kind:args`` string.

        Inline forms: ``quadratic:2``, ``linear:0.5``, ``power:1.0:0.5``
        (beta then alpha), ``polynomial:0,0,1.5`` (ascending coefficients),
        ``fully_nonlinear:z0 + z1^2``.
        """
        if isinstance(spec, NonlinearEnergy):
            return spec
        if isinstance(spec, str):
            text = spec.strip()
            if text.startswith("{"):
                return cls.from_spec(json.loads(text))
            kind, _, rest = text.partition(":")
            kind = kind.strip()
            try:
                if kind in ("linear", "quadratic"):
                    kw = {"beta": float(rest) if rest else 1.0}
                elif kind == "power":
                    parts = [p for p in rest.split(":") if p]
                    kw = {"beta": float(parts[0]) if parts else 1.0,
                          "alpha": float(parts[1]) if len(parts) > 1 else 1.0}
                elif kind == "polynomial":
                    kw = {"coeffs": tuple(float(c) for c in rest.split(","))}
            except ValueError as exc:
                raise InputError(f"cannot parse energy {spec!r}: {exc}") from None
            if kind in ("linear", "quadratic", "power", "polynomial"):
                return cls(kind, **kw)
            if kind == "fully_nonlinear":
                return cls(kind, expr=rest)
            raise InputError(f"unknown energy kind {kind!r}")
        if not isinstance(spec, Mapping):
            raise InputError(f"energy spec must be a mapping or string, got {type(spec).__name__}")
        d = dict(spec)
        try:
            kind = d.pop("kind")
        except KeyError:
            raise InputError("energy spec needs a 'kind'") from None
        kw: dict[str, Any] = {}
        try:
            if "beta" in d:
                kw["beta"] = float(d.pop("beta"))
            if "alpha" in d:
                kw["alpha"] = float(d.pop("alpha"))
            if "coeffs" in d:
                kw["coeffs"] = tuple(float(c) for c in d.pop("coeffs"))
            if "direction" in d:
                kw["direction"] = tuple(float(c) for c in d.pop("direction"))
            if "expr" in d:
                kw["expr"] = str(d.pop("expr"))
            if "params" in d:
                kw["params"] = tuple(sorted((str(k), float(v)) for k, v in d.pop("params").items()))
            if "domain" in d:
                kw["domain"] = tuple((float(a), float(b)) for a, b in d.pop("domain"))
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad energy field: {exc}") from None
        if d:
            raise InputError(f"unknown energy fields: {', '.join(sorted(d))}")
        return cls(kind, **kw)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "fully_nonlinear":
            out["expr"] = self.expr
            if self.params:
                out["params"] = dict(self.params)
            if self.domain:
                out["domain"] = [list(b) for b in self.domain]
            return out
        out["beta"] = self.beta
        if self.kind == "power":
            out["alpha"] = self.alpha
        if self.kind == "polynomial":
            out["coeffs"] = list(self.coeffs)
        if self.direction is not None:
            out["direction"] = list(self.direction)
        return out

    def scaled(self, beta: float) -> "NonlinearEnergy":
        """Member ``beta`` of the family whose ``beta = 1`` member is ``self``.

        For ``fully_nonlinear`` the expression must use a parameter named
        ``beta``, which is overwritten.
        """
        if self.kind != "fully_nonlinear":
            return replace(self, beta=self.beta * float(beta))
        params = dict(self.params)
        if "beta" not in params and "beta" not in self.expr:
            raise InputError("fully_nonlinear family needs a 'beta' parameter to scale")
        params["beta"] = params.get("beta", 1.0) * float(beta)
        return replace(self, params=tuple(sorted(params.items())))

    def bind(self, model: ShiftModel) -> "Evaluator":
        """Check admissibility on ``model`` and return a vectorised evaluator."""
        d = model.d
        rs = rotation_set(model)
        if self.kind == "linear":
            c = np.ones(d) if self.direction is None else np.asarray(self.direction, dtype=float)
            if c.shape != (d,):
                raise InputError(f"direction must have length {d}")
            return _Separable(lambda Z: self.beta * (Z @ c), lambda Z: np.broadcast_to(self.beta * c, Z.shape).copy())
        if self.kind == "quadratic":
            b = self.beta
            return _Separable(lambda Z: 0.5 * b * np.einsum("nd,nd->n", Z, Z), lambda Z: b * Z)
        if self.kind == "power":
            if d != 1:
                raise InadmissibleEnergy("power energies need exactly one potential")
            top = float(rs.bounding_box[0][1])
            if top > 1e-12:
                raise InadmissibleEnergy(f"power energies need the rotation set in (-inf, 0]; max is {top}")
            b, a = self.beta, self.alpha

            def F(Z):
                return -b * np.maximum(-Z[:, 0], 0.0) ** a

            def dF(Z):
                u = np.maximum(-Z[:, 0], 0.0)
                with np.errstate(divide="ignore"):
                    out = b * a * u ** (a - 1) if a < 1 else np.full_like(u, b)
                return out[:, None]

            return _Separable(F, dF)
        if self.kind == "polynomial":
            p = np.polynomial.Polynomial(np.asarray(self.coeffs) * self.beta)
            dp = p.deriv()
            return _Separable(lambda Z: p(Z).sum(axis=1), lambda Z: dp(Z))
        ev = _Expression(self.expr, dict(self.params), d)
        ev.check_admissible(model, self.domain)
        return ev


class Evaluator:
    """Vectorised ``G`` over arrays ``h`` of shape (n,) and ``Z`` of shape (n, d)."""

    def value(self, h: np.ndarray, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def target(self, h: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """``grad_z G / dG/dh``: the dual parameter a critical point must have."""
        raise NotImplementedError

    def energy_part(self, Z: np.ndarray) -> np.ndarray:
        """``F(z)`` when ``G = h + F(z)``; other nonlinearities raise."""
        raise InputError("this nonlinearity is not of the form h + F(z)")


class _Separable(Evaluator):
    def __init__(self, F, dF):
        self.F, self.dF = F, dF

    def value(self, h, Z):
        return h + self.F(Z)

    def target(self, h, Z):
        return self.dF(Z)

    def energy_part(self, Z):
        return self.F(Z)


class _Expression(Evaluator):
    def __init__(self, expr: str, params: dict, d: int):
        import sympy
        from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

        syms = sympy.symbols(f"z0:{d + 1}")
        local = {f"z{i}": s for i, s in enumerate(syms)}
        local.update({k: sympy.Float(v) for k, v in params.items()})
        try:
            G = parse_expr(expr, local_dict=local, transformations=standard_transformations + (convert_xor,))
        except (SyntaxError, TypeError, sympy.SympifyError) as exc:
            raise InputError(f"cannot parse expression {expr!r}: {exc}") from None
        unknown = {str(s) for s in G.free_symbols} - {str(s) for s in syms}
        if unknown:
            raise InputError(f"expression has unbound symbols: {', '.join(sorted(unknown))}")
        self.d = d
        self._G = sympy.lambdify(syms, G, "numpy")
        self._F = None
        if sympy.simplify(sympy.diff(G, syms[0]) - 1) == 0:
            self._F = sympy.lambdify(syms, G - syms[0], "numpy")
        self._dG = [sympy.lambdify(syms, sympy.diff(G, s), "numpy") for s in syms]

    def _call(self, f, h, Z):
        out = f(h, *[Z[:, j] for j in range(self.d)])
        return np.broadcast_to(np.asarray(out, dtype=float), h.shape).copy()

    def value(self, h, Z):
        return self._call(self._G, h, Z)

    def energy_part(self, Z):
        if self._F is None:
            return super().energy_part(Z)
        return self._call(self._F, np.zeros(len(Z)), Z)

    def partial0(self, h, Z):
        return self._call(self._dG[0], h, Z)

    def target(self, h, Z):
        d0 = self.partial0(h, Z)
        return np.stack([self._call(f, h, Z) for f in self._dG[1:]], axis=1) / d0[:, None]

    def check_admissible(self, model: ShiftModel, domain=None) -> None:
        """Sample ``dG/dh > 0`` on the box of achievable ``(h, z)``; a heuristic."""
        from scipy.stats import qmc

        box = domain or tuple(rotation_set(model).bounding_box)
        if len(box) != self.d:
            raise InputError(f"domain must have {self.d} intervals")
        lo = np.array([0.0] + [b[0] for b in box])
        hi = np.array([np.log(model.k)] + [b[1] for b in box])
        u = qmc.Halton(self.d + 1, scramble=False).random(ADMISSIBILITY_SAMPLES)
        S = lo + u * (hi - lo)
        with np.errstate(all="ignore"):
            d0 = self.partial0(S[:, 0], S[:, 1:])
        if not np.all(np.isfinite(d0) & (d0 > 0)):
            i = int(np.flatnonzero(~(np.isfinite(d0) & (d0 > 0)))[0])
            raise InadmissibleEnergy(f"dG/dh = {d0[i]:.3g} <= 0 at (h, z) = {S[i].tolist()}")


class _Composed(Evaluator):
    """``G`` pulled back through the affine reduction ``z = offset + M zr``."""

    def __init__(self, base: Evaluator, amap: AffineMap):
        self.base, self.amap = base, amap

    def value(self, h, Zr):
        return self.base.value(h, self.amap(Zr))

    def target(self, h, Zr):
        return self.base.target(h, self.amap(Zr)) @ self.amap.matrix

    def energy_part(self, Zr):
        return self.base.energy_part(self.amap(Zr))


def _reduced_problem(model: ShiftModel, energy: NonlinearEnergy):
    ev = NonlinearEnergy.from_spec(energy).bind(model)
    reduced, amap = reduce_potentials(model)
    if reduced.d == 0:
        raise EmptyInterior("the rotation set is a single point")
    if not amap.is_identity:
        ev = _Composed(ev, amap)
    return reduced, amap, ev


# ---------------------------------------------------------------------------
# Reports


@dataclass
class LocalMax:
    """A local maximiser of ``g``; ``z`` and ``y`` are in the model's coordinates."""

    z: np.ndarray
    y: np.ndarray
    g: float
    entropy: float
    on_boundary: bool = False
    is_global: bool = False


@dataclass
class CriticalPoint:
    z: np.ndarray
    g: float
    kind: str  # local_max, local_min or saddle
    y: np.ndarray


@dataclass
class EquilibriumReport:
    pressure: float
    values: list[np.ndarray]
    duals: list[np.ndarray]
    measures: list[PerronData]
    boundary_values: list[np.ndarray] = field(default_factory=list)
    local_maxima: list[LocalMax] = field(default_factory=list)
    continuum_suspected: bool = False
    critical_points: list[CriticalPoint] = field(default_factory=list)

    @property
    def multiplicity(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "pressure": self.pressure,
            "multiplicity": self.multiplicity,
            "values": [v.tolist() for v in self.values],
            "duals": [y.tolist() for y in self.duals],
            "boundary_values": [v.tolist() for v in self.boundary_values],
            "continuum_suspected": self.continuum_suspected,
            "measures": [
                {
                    "stationary": m.stationary.tolist(),
                    "transitions": m.transitions.tolist(),
                    "z": m.z.tolist(),
                    "entropy": m.entropy,
                }
                for m in self.measures
            ],
        }


@dataclass
class _Cand:
    zr: np.ndarray
    yr: np.ndarray
    g: float
    h: float
    on_boundary: bool


# ---------------------------------------------------------------------------
# One-dimensional search on a cached dual table


@dataclass(frozen=True)
class _Table:
    y: np.ndarray
    z: np.ndarray
    h: np.ndarray
    vertex_z: tuple[float, float]
    vertex_h: tuple[float, float]
    vertex_y: tuple[float, float]


@lru_cache(maxsize=64)
def _dual_table(model: ShiftModel) -> _Table:
    """Samples of ``(y, z(y), h)`` covering the interior of a 1-d rotation set.

    ``N_SCAN`` points uniform in ``z`` on the interval shrunk by the edge
    margin, plus tails uniform in ``y`` out to ``+-Y_MAX``.
    """
    (lo, hi), = rotation_set(model).bounding_box
    delta = EDGE_MARGIN * (hi - lo)
    zs = np.linspace(lo + delta, hi - delta, N_SCAN)
    y, h, _, conv, blown, _ = dual_solve(model, zs[:, None])
    keep = conv & ~blown
    ym = y[keep, 0]
    tails = np.concatenate([
        np.linspace(-Y_MAX, ym.min(), N_TAIL, endpoint=False),
        np.linspace(Y_MAX, ym.max(), N_TAIL, endpoint=False),
    ])
    tb = solve_batch(model, tails[:, None])
    Y = np.concatenate([ym, tails])
    Z = np.concatenate([zs[keep], tb.z[:, 0]])
    H = np.concatenate([h[keep], tb.entropy])
    order = np.argsort(Y)
    ends = [zero_temperature_measure(model, np.array([s])) for s in (-1.0, 1.0)]
    return _Table(
        y=Y[order], z=Z[order], h=H[order],
        vertex_z=(float(lo), float(hi)),
        vertex_h=(ends[0].entropy, ends[1].entropy),
        vertex_y=(float(ends[0].y[0]), float(ends[1].y[0])),
    )


def _slope_sign(model, ev, y):
    """``T(y) - y`` at scalar duals ``y``; its sign is the sign of ``g'(z)``."""
    b = solve_batch(model, y[:, None])
    with np.errstate(all="ignore"):
        s = ev.target(b.entropy, b.z)[:, 0] - y
    return s, b


def _bisect(model, ev, lo, hi, s_lo):
    """Refine sign changes of ``T(y) - y`` on brackets ``[lo, hi]`` in ``y``."""
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    pos = s_lo > 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s, b = _slope_sign(model, ev, mid)
        left = (s > 0) == pos
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
        zl = solve_batch(model, lo[:, None]).z[:, 0]
        zh = solve_batch(model, hi[:, None]).z[:, 0]
        if np.all((np.abs(zh - zl) < 1e-12) & (hi - lo < 1e-10 * (1 + np.abs(lo)))):
            break
    return 0.5 * (lo + hi)


def _scan_1d(model: ShiftModel, ev: Evaluator):
    """Interior critical points and boundary candidates of a 1-d problem."""
    tab = _dual_table(model)
    with np.errstate(all="ignore"):
        s = ev.target(tab.h, tab.z[:, None])[:, 0] - tab.y
    s = np.where(np.isnan(s), 0.0, s)
    ys = list(tab.y)
    sg = list(np.sign(s))
    boundary = []
    # continue past the sentinels when the slope still points outward
    for side, direction in ((0, -1.0), (1, 1.0)):
        edge = 0 if side == 0 else -1
        if sg[edge] * direction <= 0:
            continue
        ext = direction * Y_MAX * 2.0 ** np.arange(1, int(np.log2(Y_LIMIT / Y_MAX)) + 1)
        se, _ = _slope_sign(model, ev, ext)
        flips = np.flatnonzero(np.sign(se) * direction <= 0)
        if flips.size == 0:
            boundary.append(side)
            continue
        j = int(flips[0]) + 1
        if side == 0:
            ys = list(ext[:j][::-1]) + ys
            sg = list(np.sign(se[:j])[::-1]) + sg
        else:
            ys = ys + list(ext[:j])
            sg = sg + list(np.sign(se[:j]))
    ys, sg = np.array(ys), np.array(sg)

    crit: list[tuple[float, str]] = []
    # exact zeros at table points
    for i in np.flatnonzero(sg == 0):
        left = sg[i - 1] if i > 0 else 0
        right = sg[i + 1] if i + 1 < len(sg) else 0
        kind = "local_max" if left >= 0 >= right and left != right else (
            "local_min" if left <= 0 <= right and left != right else "saddle")
        crit.append((float(ys[i]), kind))
    nz = np.flatnonzero(sg != 0)
    a, b = nz[:-1], nz[1:]
    change = sg[a] != sg[b]
    # zeros in between were already recorded; only strict brackets remain
    brackets = [(i, j) for i, j in zip(a[change], b[change]) if j == i + 1]
    if brackets:
        lo = np.array([ys[i] for i, _ in brackets])
        hi = np.array([ys[j] for _, j in brackets])
        roots = _bisect(model, ev, lo, hi, np.array([sg[i] for i, _ in brackets]))
        for (i, _), r in zip(brackets, roots):
            crit.append((float(r), "local_max" if sg[i] > 0 else "local_min"))
    crit.sort()
    if crit:
        yc = np.array([c[0] for c in crit])
        bc = solve_batch(model, yc[:, None])
        gc = ev.value(bc.entropy, bc.z)
        points = [
            CriticalPoint(z=bc.z[i], g=float(gc[i]), kind=crit[i][1], y=np.array([yc[i]]))
            for i in range(len(crit))
        ]
        entropies = bc.entropy
    else:
        points, entropies = [], np.array([])
    bcands = []
    for side in boundary:
        zv = np.array([[tab.vertex_z[side]]])
        hv = np.array([tab.vertex_h[side]])
        bcands.append(_Cand(zr=zv[0], yr=np.array([tab.vertex_y[side]]),
                            g=float(ev.value(hv, zv)[0]), h=float(hv[0]), on_boundary=True))
    return points, entropies, bcands


def critical_points_1d(model: ShiftModel, energy: NonlinearEnergy | Mapping | str) -> list[CriticalPoint]:
    """All interior critical points of ``g`` for a one-dimensional problem.

    Sign changes of ``g'`` are located on a dense table and refined by
    bisection; each point is labelled by the signs on either side.  Points
    are ordered by ``z`` and given in the model's own coordinates.
    """
    reduced, amap, ev = _reduced_problem(model, energy)
    if reduced.d != 1:
        raise DimensionNotOne(f"need one effective potential, have {reduced.d}")
    points, _, _ = _scan_1d(reduced, ev)
    return [replace(p, z=amap(p.z), y=amap.lift_dual(p.y)) for p in points]


# ---------------------------------------------------------------------------
# Multi-start search for d >= 2


@lru_cache(maxsize=32)
def _start_duals(model: ShiftModel, per_axis: int) -> np.ndarray:
    """Dual parameters of a regular grid in the shrunk rotation set, plus the
    centroid and points 90% of the way toward each vertex."""
    rs = rotation_set(model)
    axes = [np.linspace(a, b, per_axis) for a, b in rs.bounding_box]
    Z = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    c = rs.extreme_points.mean(axis=0)
    Z = np.vstack([c, c + 0.9 * (rs.extreme_points - c), Z])
    Z = Z[rs.margin(Z) >= EDGE_MARGIN * rs.diameter]
    y, _, _, conv, blown, _ = dual_solve(model, Z)
    return y[conv & ~blown]


def _fd_residual_jacobian(model, ev, Y, step=1e-6):
    n, d = Y.shape
    J = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        rp = _residual(model, ev, Y + e)[0]
        rm = _residual(model, ev, Y - e)[0]
        J[:, :, j] = (rp - rm) / (2 * step)
    return J


def _residual(model, ev, Y):
    b = solve_batch(model, Y)
    with np.errstate(all="ignore"):
        R = ev.target(b.entropy, b.z) - Y
    return R, b


def _ascend(model, ev, Y):
    """Damped fixed-point ascent ``y <- y + t (T(y) - y)``, batched."""
    Y = Y.copy()
    R, b = _residual(model, ev, Y)
    g = ev.value(b.entropy, b.z)
    t = np.ones(len(Y))
    for _ in range(ASCENT_STEPS):
        act = np.flatnonzero(np.abs(R).max(axis=1) > 1e-9 * (1 + np.abs(Y).max(axis=1)))
        if act.size == 0:
            break
        cand = np.clip(Y[act] + t[act, None] * np.nan_to_num(R[act], posinf=Y_LIMIT, neginf=-Y_LIMIT),
                       -Y_LIMIT, Y_LIMIT)
        Rc, bc = _residual(model, ev, cand)
        gc = ev.value(bc.entropy, bc.z)
        ok = gc >= g[act] - 1e-14 * (1 + np.abs(g[act]))
        idx = act[ok]
        Y[idx], R[idx], g[idx] = cand[ok], Rc[ok], gc[ok]
        t[idx] = np.minimum(1.0, 1.5 * t[idx])
        t[act[~ok]] *= 0.5
    return Y, g


def _polish(model, ev, Y, iters=60):
    """Safeguarded Newton on ``T(y) - y``; returns duals and convergence flags."""
    Y = Y.copy()
    R, _ = _residual(model, ev, Y)
    norm = np.abs(R).max(axis=1)
    conv = norm < 1e-11 * (1 + np.abs(Y).max(axis=1))
    for _ in range(iters):
        act = np.flatnonzero(~conv & np.isfinite(norm) & (np.abs(Y).max(axis=1) < Y_LIMIT))
        if act.size == 0:
            break
        J = _fd_residual_jacobian(model, ev, Y[act])
        try:
            step = np.linalg.solve(J, -R[act][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("nij,nj->ni", np.linalg.pinv(J), R[act])
        t = np.ones(act.size)
        pending = np.arange(act.size)
        for _half in range(30):
            idx = act[pending]
            cand = Y[idx] + t[pending, None] * step[pending]
            Rc, _ = _residual(model, ev, cand)
            nc = np.abs(Rc).max(axis=1)
            ok = nc < norm[idx]
            acc = idx[ok]
            Y[acc], R[acc], norm[acc] = cand[ok], Rc[ok], nc[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        conv |= norm < 1e-11 * (1 + np.abs(Y).max(axis=1))
        # no progress at all: stop trying
        conv[act[pending]] |= norm[act[pending]] < 1e-8
        norm[act[pending]] = np.where(conv[act[pending]], norm[act[pending]], np.inf)
    return Y, conv


def _is_local_max(model, ev, Y):
    if len(Y) == 0:
        return np.zeros(0, dtype=bool)
    J = _fd_residual_jacobian(model, ev, Y)
    ev_real = np.linalg.eigvals(J).real
    return (ev_real < 1e-7).all(axis=1)


def _search_nd(model: ShiftModel, ev: Evaluator, per_axis: int | None, seeds) -> list[_Cand]:
    d = model.d
    if per_axis is None:
        if d not in STARTS_PER_AXIS:
            raise DimensionTooHigh(f"multi-start search supports up to {max(STARTS_PER_AXIS)} effective potentials, have {d}")
        per_axis = STARTS_PER_AXIS[d]
    Y0 = _start_duals(model, per_axis)
    if seeds is not None and len(seeds):
        Y0 = np.vstack([np.atleast_2d(seeds), Y0])
    Y, g = _ascend(model, ev, Y0)
    # keep one representative per basin before the expensive polish
    order = np.argsort(-g, kind="stable")
    b = solve_batch(model, Y)
    reps: list[int] = []
    for i in order:
        if not np.isfinite(g[i]):
            continue
        if all(np.abs(b.z[i] - b.z[j]).max() > 1e-4 for j in reps):
            reps.append(int(i))
    Yr = Y[reps]
    Yp, conv = _polish(model, ev, Yr)
    out = []
    inner = np.abs(Yp).max(axis=1) < Y_LIMIT
    good = conv & inner
    ismax = np.zeros(len(Yp), dtype=bool)
    ismax[good] = _is_local_max(model, ev, Yp[good])
    bp = solve_batch(model, Yp)
    gp = ev.value(bp.entropy, bp.z)
    for i in range(len(Yp)):
        if ismax[i]:
            out.append(_Cand(bp.z[i], Yp[i], float(gp[i]), float(bp.entropy[i]), False))
        elif not inner[i]:
            out.append(_Cand(bp.z[i], Yp[i], float(gp[i]), float(bp.entropy[i]), True))
    out.extend(_vertex_probes(model, ev))
    return out


@lru_cache(maxsize=32)
def _approach_table(model: ShiftModel) -> list[tuple]:
    """Per vertex: its zero-temperature measure and the resolved entropies
    at points halving the distance to it from the centroid."""
    rs = rotation_set(model)
    c = rs.extreme_points.mean(axis=0)
    frac = 0.5 ** np.arange(1, APPROACH_STEPS + 1)
    out = []
    for i, v in enumerate(rs.extreme_points):
        m = zero_temperature_measure(model, rs.supporting_direction(i))
        Z = v + frac[:, None] * (c - v)
        _, h, _, conv, blown, _ = dual_solve(model, Z)
        ok = conv & ~blown
        out.append((v.copy(), m, Z[ok], h[ok]))
    return out


def _vertex_probes(model: ShiftModel, ev: Evaluator) -> list[_Cand]:
    """Vertices where ``g`` keeps increasing along a geometric approach."""
    out = []
    for v, m, Z, h in _approach_table(model):
        gv = float(ev.value(np.array([m.entropy]), v[None, :])[0])
        if len(Z) and gv < ev.value(h, Z).max() - TOL_VALUE:
            continue
        out.append(_Cand(v.copy(), m.y.copy(), gv, m.entropy, True))
    return out


# ---------------------------------------------------------------------------
# Assembly


def _cluster(cands: list[_Cand]) -> list[_Cand]:
    """Merge candidates closer than ``TOL_CLUSTER``; interior points win ties."""
    order = sorted(range(len(cands)), key=lambda i: (-cands[i].g, cands[i].on_boundary))
    reps: list[_Cand] = []
    for i in order:
        c = cands[i]
        hit = next((k for k, r in enumerate(reps) if np.abs(r.zr - c.zr).max() < TOL_CLUSTER), None)
        if hit is None:
            reps.append(c)
        elif reps[hit].on_boundary and not c.on_boundary and c.g >= reps[hit].g - TOL_VALUE:
            reps[hit] = c
    return reps


def nl_pressure(
    model: ShiftModel,
    energy: NonlinearEnergy | Mapping | str,
    *,
    starts_per_axis: int | None = None,
    seeds: np.ndarray | None = None,
) -> EquilibriumReport:
    """Nonlinear topological pressure and the set of equilibrium values.

    Affinely dependent potentials are reduced first.  One effective
    potential uses a dense scan of ``g'`` (see :func:`critical_points_1d`);
    more use a batched multi-start ascent in dual coordinates polished by
    Newton.  Hull vertices where ``g`` keeps increasing are kept as boundary
    candidates.  All maximisers within ``TOL_VALUE`` of the best are returned,
    merged when closer than ``TOL_CLUSTER``.

    Args:
        starts_per_axis: grid density for the multi-start (d >= 2).
        seeds: extra starting duals in reduced coordinates, e.g. maxima from a
            neighbouring parameter value.
    """
    reduced, amap, ev = _reduced_problem(model, energy)
    points = []
    if reduced.d == 1:
        points, ent, cands = _scan_1d(reduced, ev)
        for p, h in zip(points, ent):
            if p.kind == "local_max":
                cands.append(_Cand(p.z, p.y, p.g, float(h), False))
    else:
        cands = _search_nd(reduced, ev, starts_per_axis, seeds)
    if not cands:
        raise EmptyInterior("no maximiser found")
    reps = _cluster(cands)
    best = max(r.g for r in reps)
    local = []
    values, duals, measures, boundary = [], [], [], []
    glob = [r for r in reps if r.g >= best - TOL_VALUE]
    glob.sort(key=lambda r: tuple(r.zr))
    for r in reps:
        local.append(LocalMax(
            z=amap(r.zr), y=amap.lift_dual(r.yr), g=r.g, entropy=r.h,
            on_boundary=r.on_boundary, is_global=r.g >= best - TOL_VALUE,
        ))
    local.sort(key=lambda m: tuple(m.z))
    for r in glob:
        z = amap(r.zr)
        y = amap.lift_dual(r.yr)
        values.append(z)
        duals.append(y)
        measures.append(linear_pressure(model, y))
        if r.on_boundary:
            boundary.append(z)
    continuum = len(values) > MAX_VALUES
    if continuum:
        warnings.warn(f"{len(values)} equilibrium values found; the set may be a continuum", ContinuumSuspected)
    return EquilibriumReport(
        pressure=float(best), values=values, duals=duals, measures=measures,
        boundary_values=boundary, local_maxima=local, continuum_suspected=continuum,
        critical_points=[replace(p, z=amap(p.z), y=amap.lift_dual(p.y)) for p in points],
    )


def equilibrium_measures(model: ShiftModel, report: EquilibriumReport) -> list[PerronData]:
    """The Markov measure of each dual parameter in ``report``."""
    return [linear_pressure(model, y) for y in report.duals]


def g_value(model: ShiftModel, energy: NonlinearEnergy | Mapping | str, entropy, z) -> np.ndarray:
    """Evaluate ``G(entropy; z)`` for arrays of entropies and points."""
    ev = NonlinearEnergy.from_spec(energy).bind(model)
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    return ev.value(np.atleast_1d(np.asarray(entropy, dtype=float)), Z)
