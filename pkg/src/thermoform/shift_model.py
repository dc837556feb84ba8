"""Subshifts of finite type with depth-1 potentials and their linear formalism.

A model is an alphabet of ``k`` letters, a 0/1 transition matrix and a
``k x d`` matrix of potential values (row ``a`` holds the vector potential on
the cylinder of letter ``a``).  The linear pressure at a dual parameter ``y``
is the log Perron eigenvalue of the weighted transfer matrix
``M[a, b] = A[a, b] * exp(y . phi[a])`` and the equilibrium measure is the
associated Markov chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull
from scipy.special import xlogy

from .errors import (
    BadDimensions,
    CycleBudgetExceeded,
    NonBinaryAdjacency,
    PerronFailure,
    ReducibleAdjacency,
    ZeroEntropy,
)

PERRON_TOL = 1e-14
PERRON_BUDGET = 100_000
MAX_CYCLE_LETTERS = 12
MAX_SIMPLE_CYCLES = 500_000

BUILTINS = ("curie_weiss", "asymmetric_cw", "potts:<n>", "freezing", "golden_mean")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ShiftModel:
    """An irreducible SFT with a locally constant vector potential.

    Instances are immutable and hashable, so they can key caches.
    """

    adjacency: np.ndarray
    potentials: np.ndarray
    labels: tuple[str, ...]
    period: int = 1
    _key: tuple = field(init=False, repr=False)

    def __post_init__(self):
        adj = _readonly(np.asarray(self.adjacency, dtype=np.int8))
        pot = np.asarray(self.potentials, dtype=float)
        pot = _readonly(pot.reshape(adj.shape[0], pot.size // adj.shape[0] if pot.size else 0))
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "potentials", pot)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        key = (pot.shape, self.labels, adj.tobytes(), pot.tobytes())
        object.__setattr__(self, "_key", key)

    @property
    def k(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.potentials.shape[1]

    @property
    def is_full_shift(self) -> bool:
        return bool(self.adjacency.all())

    @property
    def topological_entropy(self) -> float:
        return linear_pressure(self, np.zeros(self.d)).pressure

    def __eq__(self, other):
        return isinstance(other, ShiftModel) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def to_dict(self) -> dict:
        return {
            "alphabet": list(self.labels),
            "adjacency": self.adjacency.astype(int).tolist(),
            "potentials": self.potentials.tolist(),
        }


@dataclass(frozen=True)
class PerronData:
    """Linear pressure and Markov equilibrium measure at dual parameter ``y``."""

    y: np.ndarray
    eigenvalue: float
    pressure: float
    stationary: np.ndarray
    transitions: np.ndarray
    z: np.ndarray
    entropy: float


def _graph_period(adj: np.ndarray) -> int:
    k = adj.shape[0]
    level = [-1] * k
    level[0] = 0
    queue = [0]
    for u in queue:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(int(v))
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = math.gcd(g, abs(level[u] + 1 - level[v]))
    return g


def validate_model(spec: Any) -> ShiftModel:
    """Build a validated :class:`ShiftModel` from a mapping or an existing model.

    The mapping follows the model-file schema: ``alphabet`` (optional labels),
    ``adjacency`` (optional, defaults to the full shift) and ``potentials``
    (``k`` rows of ``d`` numbers, or a flat list when ``d = 1``).
    """
    if isinstance(spec, ShiftModel):
        spec = spec.to_dict()
    try:
        pot = np.asarray(spec["potentials"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadDimensions(f"potentials missing or not numeric: {exc}") from None
    if pot.ndim == 1:
        pot = pot[:, None]
    if pot.ndim != 2:
        raise BadDimensions("potentials must be a k x d table")
    k, d = pot.shape
    if k < 2 or d < 1:
        raise BadDimensions(f"need k >= 2 letters and d >= 1 potentials, got k={k}, d={d}")
    if not np.all(np.isfinite(pot)):
        raise BadDimensions("potentials must be finite")

    raw_adj = spec.get("adjacency")
    if raw_adj is None:
        adj = np.ones((k, k), dtype=np.int8)
    else:
        a = np.asarray(raw_adj)
        if a.shape != (k, k):
            raise BadDimensions(f"adjacency must be {k}x{k}, got {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise NonBinaryAdjacency("adjacency entries must be 0 or 1")
        adj = a.astype(np.int8)

    labels = spec.get("alphabet") or [chr(ord("a") + i) if k <= 26 else f"s{i}" for i in range(k)]
    if len(labels) != k or len(set(map(str, labels))) != k:
        raise BadDimensions("alphabet must list k distinct symbols")

    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp != 1:
        raise ReducibleAdjacency(f"transition graph has {n_comp} strongly connected components")
    if int(adj.sum()) == k:
        raise ZeroEntropy("transition graph is a single cycle; topological entropy is zero")
    return ShiftModel(adj, pot, tuple(labels), period=_graph_period(adj))


def builtin_model(name: str) -> ShiftModel:
    """Return one of the named example systems."""
    name = name.strip().lower()
    if name == "curie_weiss":
        spec = {"alphabet": ["a", "b"], "potentials": [[-1.0], [1.0]]}
    elif name == "asymmetric_cw":
        spec = {"alphabet": ["a", "b", "c"], "potentials": [[-2.0], [-2.0], [3.0]]}
    elif name == "freezing":
        spec = {"alphabet": ["a", "b"], "potentials": [[0.0], [-1.0]]}
    elif name == "golden_mean":
        spec = {
            "alphabet": ["a", "b"],
            "adjacency": [[1, 1], [1, 0]],
            "potentials": [[-1.0], [1.0]],
        }
    elif name.startswith("potts:"):
        try:
            n = int(name.split(":", 1)[1])
        except ValueError:
            raise BadDimensions(f"bad Potts size in {name!r}") from None
        if n < 2:
            raise BadDimensions("Potts model needs at least 2 letters")
        spec = {"alphabet": [f"t{i + 1}" for i in range(n)], "potentials": np.eye(n).tolist()}
    else:
        raise BadDimensions(f"unknown builtin model {name!r}; choose from {', '.join(BUILTINS)}")
    return validate_model(spec)


# ---------------------------------------------------------------------------
# Perron solver


def _perron_2x2(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Perron root and right eigenvector of nonnegative 2x2 blocks.

    Both differences ``lambda - a`` and ``lambda - d`` are taken in the form
    free of cancellation, and the two parallel eigenvector candidates are
    summed so an underflowed off-diagonal entry cannot zero the result.
    """
    a, b, c, d = W[:, 0, 0], W[:, 0, 1], W[:, 1, 0], W[:, 1, 1]
    gap = a - d
    root = np.sqrt(gap * gap + 4 * b * c)
    lam = 0.5 * (a + d + root)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = 0.5 * (np.abs(gap) + root)
        small = np.where(big > 0, b * c / big, 0.0)
    minus_a = np.where(gap >= 0, small, big)
    minus_d = np.where(gap >= 0, big, small)
    v = np.stack([b + minus_d, minus_a + c], axis=1)
    v /= v.sum(axis=1, keepdims=True)
    return lam, v


def _plain_steps(W, v, lam, done, act, steps):
    """Power steps on rows ``act``; marks converged rows, returns the rest."""
    for _ in range(steps):
        if act.size == 0:
            break
        w = np.einsum("nij,nj->ni", W[act], v[act])
        lam_new = w.sum(axis=1)
        v_new = w / lam_new[:, None]
        ok = (np.abs(lam_new - lam[act]) <= PERRON_TOL * lam_new) & (
            np.abs(v_new - v[act]).max(axis=1) <= 10 * PERRON_TOL
        )
        v[act], lam[act] = v_new, lam_new
        done[act[ok]] = True
        act = act[~ok]
    return act


def _power_iterate(W: np.ndarray, periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Perron eigenvalue and eigenvector (normalised to sum 1) for a batch.

    Two-letter alphabets use the closed form.  Otherwise plain power
    iteration runs first; anything still unconverged (periodic or poorly
    separated spectra) restarts from the dense eigenvector and iterates on the
    shifted matrix ``W + lambda I``, which is primitive.
    """
    n, k, _ = W.shape
    if k == 2:
        return _perron_2x2(W)
    v = np.full((n, k), 1.0 / k)
    lam = np.full(n, np.nan)
    done = np.zeros(n, dtype=bool)
    if not periodic:
        act = _plain_steps(W, v, lam, done, np.arange(n), 64)
        if act.size == 0:
            return lam, v
    todo = np.flatnonzero(~done)
    Wt = W[todo]
    ev, vecs = np.linalg.eig(Wt)
    j = np.argmax(ev.real, axis=1)
    shift = ev.real[np.arange(len(todo)), j]
    u = np.abs(vecs[np.arange(len(todo)), :, j].real)
    u /= u.sum(axis=1, keepdims=True)
    B = Wt + shift[:, None, None] * np.eye(k)
    mu = np.full(len(todo), np.nan)
    act = np.arange(len(todo))
    for _ in range(PERRON_BUDGET):
        w = np.einsum("nij,nj->ni", B[act], u[act])
        mu_new = w.sum(axis=1)
        u_new = w / mu_new[:, None]
        ok = (np.abs(mu_new - mu[act]) <= PERRON_TOL * mu_new) & (
            np.abs(u_new - u[act]).max(axis=1) <= 10 * PERRON_TOL
        )
        u[act], mu[act] = u_new, mu_new
        act = act[~ok]
        if act.size == 0:
            break
    else:
        raise PerronFailure(f"power iteration did not converge in {PERRON_BUDGET} steps")
    lam[todo] = mu - shift
    v[todo] = u
    return lam, v


def _row_entropy(Q: np.ndarray) -> np.ndarray:
    """``-sum_b Q[a,b] log Q[a,b]`` per row, accurate when one entry is near 1.

    The dominant entry's term uses ``log1p`` of minus the remaining mass,
    which small entries carry with full relative precision.
    """
    j = Q.argmax(axis=-1)[..., None]
    mask = np.ones_like(Q, dtype=bool)
    np.put_along_axis(mask, j, False, axis=-1)
    small = -np.where(mask, xlogy(Q, Q), 0.0).sum(axis=-1)
    rest = np.where(mask, Q, 0.0).sum(axis=-1)
    return small - (1.0 - rest) * np.log1p(-rest)


@dataclass
class _Batch:
    pressure: np.ndarray  # (n,)
    z: np.ndarray  # (n, d)
    entropy: np.ndarray  # (n,)
    stationary: np.ndarray | None = None
    transitions: np.ndarray | None = None
    log_lambda: np.ndarray | None = None


def solve_batch(model: ShiftModel, Y: np.ndarray, measures: bool = False) -> _Batch:
    """Vectorised linear pressure for an ``(n, d)`` array of dual parameters."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    phi = model.potentials
    A = model.adjacency.astype(float)
    s = Y @ phi.T
    m = s.max(axis=1)
    W = A[None, :, :] * np.exp(s - m[:, None])[:, :, None]
    lam, r = _power_iterate(W, model.period > 1)
    _, l = _power_iterate(np.ascontiguousarray(W.transpose(0, 2, 1)), model.period > 1)
    p = l * r
    p /= p.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = W * r[:, None, :] / (lam[:, None, None] * r[:, :, None])
    bad = ~np.isfinite(Q).all(axis=2)
    if bad.any():
        rows = A / A.sum(axis=1, keepdims=True)
        Q[bad] = np.broadcast_to(rows, Q.shape)[bad]
    z = p @ phi
    h = np.einsum("na,na->n", p, _row_entropy(Q))
    h = np.maximum(h, 0.0)
    out = _Batch(pressure=np.log(lam) + m, z=z, entropy=h)
    if measures:
        out.stationary, out.transitions, out.log_lambda = p, Q, np.log(lam) + m
    return out


def linear_pressure(model: ShiftModel, y: Sequence[float] | np.ndarray) -> PerronData:
    """Pressure ``P(y)`` and the Markov equilibrium measure of ``y . phi``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (model.d,):
        raise BadDimensions(f"dual parameter must have length {model.d}")
    if not np.all(np.isfinite(y)):
        raise BadDimensions("dual parameter must be finite")
    b = solve_batch(model, y[None, :], measures=True)
    P = float(b.pressure[0])
    return PerronData(
        y=_readonly(y),
        eigenvalue=math.exp(P) if P < 709 else math.inf,
        pressure=P,
        stationary=_readonly(b.stationary[0]),
        transitions=_readonly(b.transitions[0]),
        z=_readonly(b.z[0]),
        entropy=float(b.entropy[0]),
    )


def zero_temperature_measure(model: ShiftModel, direction: np.ndarray) -> PerronData:
    """Equilibrium measure for ``t * direction`` with ``t`` large enough that
    letters off the maximising face carry mass below ``exp(-60)``.

    This is the limit measure at the face of the rotation set exposed by
    ``direction``: the entropy-maximising measure among the maximisers.
    """
    u = np.asarray(direction, dtype=float)
    vals = model.potentials @ u
    gaps = vals.max() - vals
    gaps = gaps[gaps > 1e-12 * max(1.0, abs(vals).max())]
    t = 60.0 * model.k / gaps.min() if gaps.size else 60.0
    return linear_pressure(model, t * u)


# ---------------------------------------------------------------------------
# Rotation set


@dataclass(frozen=True, eq=False)
class RotationSet:
    """Convex hull of the cycle means of the potential.

    ``center`` and ``basis`` span the affine hull; ``effective_dim`` is its
    dimension.  Facet inequalities live in the basis coordinates.
    """

    extreme_points: np.ndarray
    effective_dim: int
    center: np.ndarray
    basis: np.ndarray
    bounding_box: np.ndarray
    approximate: bool = False
    _equations: np.ndarray | None = None
    _interval: tuple[float, float] | None = None

    @property
    def affine_hull(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.effective_dim == self.center.size:
            return None
        return self.center, self.basis

    @property
    def diameter(self) -> float:
        E = self.extreme_points
        return float(np.max(np.linalg.norm(E[:, None, :] - E[None, :, :], axis=2)))

    def coords(self, z: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(z) - self.center) @ self.basis.T

    def margin(self, z: np.ndarray) -> np.ndarray:
        """Signed distance to the relative boundary (positive inside)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = self.coords(z)
        off = np.linalg.norm(z - self.center - x @ self.basis, axis=1)
        if self.effective_dim == 0:
            inner = np.zeros(len(z))
        elif self.effective_dim == 1:
            lo, hi = self._interval
            inner = np.minimum(x[:, 0] - lo, hi - x[:, 0])
        else:
            eq = self._equations
            inner = -(x @ eq[:, :-1].T + eq[:, -1]).max(axis=1)
        return np.where(off > 1e-9, -off, inner)

    def contains(self, z: np.ndarray, slack: float = 1e-9) -> np.ndarray | bool:
        inside = self.margin(z) >= -slack
        return bool(inside[0]) if np.ndim(z) == 1 else inside

    def supporting_direction(self, i: int) -> np.ndarray:
        """A direction whose linear functional is uniquely maximised at vertex ``i``."""
        E = self.coords(self.extreme_points)
        v = E[i]
        others = np.delete(E, i, axis=0)
        r = self.effective_dim
        if r == 0:
            return np.zeros(self.center.size)
        # maximise s subject to u.(v - w) >= s, |u_j| <= 1
        c = np.zeros(r + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-(v - others), np.ones((len(others), 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(others)),
                      bounds=[(-1, 1)] * r + [(None, None)], method="highs")
        u = res.x[:r] if res.success else v - E.mean(axis=0)
        return u @ self.basis


def _simple_cycle_means(model: ShiftModel) -> np.ndarray:
    G = nx.DiGraph()
    G.add_nodes_from(range(model.k))
    G.add_edges_from(zip(*map(np.ndarray.tolist, np.nonzero(model.adjacency))))
    means = []
    for count, cyc in enumerate(nx.simple_cycles(G)):
        if count >= MAX_SIMPLE_CYCLES:
            raise CycleBudgetExceeded(f"more than {MAX_SIMPLE_CYCLES} simple cycles")
        means.append(model.potentials[cyc].mean(axis=0))
    return np.array(means)


def _hull(points: np.ndarray, approximate: bool) -> RotationSet:
    pts = np.unique(np.round(points, 14), axis=0)
    d = pts.shape[1]
    center = pts.mean(axis=0)
    _, S, Vt = np.linalg.svd(pts - center, full_matrices=False)
    scale = max(1.0, float(np.abs(pts).max()))
    rank = int(np.sum(S > 1e-10 * scale))
    basis = Vt[:rank]
    x = (pts - center) @ basis.T
    eqs = interval = None
    if rank == 0:
        ext = pts[:1]
    elif rank == 1:
        lo, hi = int(np.argmin(x[:, 0])), int(np.argmax(x[:, 0]))
        ext = pts[[lo, hi]]
        interval = (float(x[lo, 0]), float(x[hi, 0]))
    else:
        hull = ConvexHull(x)
        ext = pts[np.sort(hull.vertices)]
        eqs = hull.equations
    if rank > 0:
        # re-centre on the extreme points so coordinates are canonical
        center = ext.mean(axis=0)
        x_ext = (ext - center) @ basis.T
        if rank == 1:
            interval = (float(x_ext[:, 0].min()), float(x_ext[:, 0].max()))
        else:
            eqs = ConvexHull(x_ext).equations
    box = np.stack([ext.min(axis=0), ext.max(axis=0)], axis=1)
    return RotationSet(ext, rank, center, basis, box, approximate, eqs, interval)


@lru_cache(maxsize=256)
def rotation_set(model: ShiftModel, max_letters: int = MAX_CYCLE_LETTERS) -> RotationSet:
    """Rotation set of the model's potentials.

    Full shifts use the potential rows directly.  Other SFTs enumerate simple
    cycles when ``k <= max_letters``; larger alphabets fall back to the box
    spanned by equilibrium averages on a coarse dual grid (flagged
    ``approximate``).
    """
    if model.is_full_shift:
        return _hull(model.potentials, approximate=False)
    if model.k <= max_letters:
        return _hull(_simple_cycle_means(model), approximate=False)
    d = model.d
    grid = np.array(np.meshgrid(*[[-50.0, 0.0, 50.0]] * d)).reshape(d, -1).T
    zs = solve_batch(model, grid).z
    lo, hi = zs.min(axis=0), zs.max(axis=0)
    corners = np.array(np.meshgrid(*np.stack([lo, hi], axis=1))).reshape(d, -1).T
    return _hull(corners, approximate=True)


# ---------------------------------------------------------------------------
# Potential reduction


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``z = offset + matrix @ z_reduced`` on the rotation set."""

    offset: np.ndarray
    matrix: np.ndarray
    kept: tuple[int, ...]

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.zeros(d), np.eye(d), tuple(range(d)))

    @property
    def is_identity(self) -> bool:
        return self.matrix.shape[0] == self.matrix.shape[1]

    def __call__(self, zr: np.ndarray) -> np.ndarray:
        return self.offset + np.asarray(zr, dtype=float) @ self.matrix.T

    def pull_dual(self, y: np.ndarray) -> np.ndarray:
        """Reduced dual parameter whose potential differs from ``y . phi`` by a
        constant on invariant measures: ``P(y) = y . offset + P_red(pull_dual(y))``."""
        return np.asarray(y, dtype=float) @ self.matrix

    def lift_dual(self, yr: np.ndarray) -> np.ndarray:
        yr = np.asarray(yr, dtype=float)
        y = np.zeros(yr.shape[:-1] + (self.matrix.shape[0],))
        y[..., list(self.kept)] = yr
        return y


@lru_cache(maxsize=256)
def reduce_potentials(model: ShiftModel) -> tuple[ShiftModel, AffineMap]:
    """Drop potentials that are affinely dependent on the rotation set."""
    rs = rotation_set(model)
    d, r = model.d, rs.effective_dim
    if r == d:
        return model, AffineMap.identity(d)
    E = rs.extreme_points
    Ec = E - E.mean(axis=0)
    tol = 1e-10 * max(1.0, float(np.abs(E).max()))
    kept: list[int] = []
    for j in range(d):
        if len(kept) == r:
            break
        if np.linalg.matrix_rank(Ec[:, kept + [j]], tol=tol) > len(kept):
            kept.append(j)
    design = np.hstack([np.ones((len(E), 1)), E[:, kept]])
    coef, *_ = np.linalg.lstsq(design, E, rcond=None)
    offset, matrix = coef[0], coef[1:].T
    offset[kept] = 0.0
    matrix[kept] = np.eye(r)
    reduced = ShiftModel(model.adjacency, model.potentials[:, kept], model.labels, model.period)
    return reduced, AffineMap(offset, matrix, tuple(kept))
