"""Exact nonlinear partition functions and Gibbs ensembles over n-words.

With depth-1 potentials the energy of an n-word only depends on its letter
counts, so sums over words collapse to sums over count classes weighted by
the number of admissible words in each class.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln, logsumexp

from ._parallel import ordered_map
from .errors import BudgetExceeded, InputError
from .nonlinear_pressure import EquilibriumReport, NonlinearEnergy, nl_pressure
from .shift_model import ShiftModel

MAX_CLASSES = 100_000_000
MAX_DP_CELLS = 200_000_000
MAX_DP_LETTERS = 3
GAP_BAND = 1e-3


class GapNotMonotone(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CountClass:
    counts: np.ndarray
    log_multiplicity: float
    mean_potential: np.ndarray


@dataclass
class ClassTable:
    """Count classes of one word length, stored column-wise."""

    n: int
    counts: np.ndarray  # (m, k) integers
    log_multiplicity: np.ndarray  # (m,)
    mean_potential: np.ndarray  # (m, d)

    def __len__(self) -> int:
        return len(self.log_multiplicity)

    def __iter__(self) -> Iterator[CountClass]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> CountClass:
        return CountClass(self.counts[i], float(self.log_multiplicity[i]), self.mean_potential[i])


@dataclass
class ZetaRow:
    n: int
    log_zeta_over_n: float
    gap: float
    ensemble_mean: np.ndarray
    dist_to_hull_V: float


@dataclass
class GibbsEnsemble:
    row: ZetaRow
    classes: ClassTable
    probabilities: np.ndarray

    def conditional_mean(self, mask: np.ndarray) -> np.ndarray:
        """Ensemble mean of the potentials restricted to the classes in ``mask``."""
        w = self.probabilities[mask]
        if w.sum() <= 0:
            raise ValueError("conditioning on an event of probability zero")
        return (w[:, None] * self.classes.mean_potential[mask]).sum(axis=0) / w.sum()


def _compositions(n: int, k: int) -> np.ndarray:
    """All nonnegative integer k-vectors summing to n, in lexicographic order."""
    rows = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    for _ in range(k - 1):
        reps = n - used + 1
        base = np.repeat(np.arange(len(rows)), reps)
        starts = np.cumsum(reps) - reps
        part = np.arange(reps.sum()) - np.repeat(starts, reps)
        rows = np.column_stack([rows[base], part])
        used = used[base] + part
    return np.column_stack([rows, n - used])


def check_budget(model: ShiftModel, n: int) -> None:
    """Raise :class:`BudgetExceeded` if length-``n`` classes are out of reach."""
    k = model.k
    if model.is_full_shift:
        size = math.comb(n + k - 1, k - 1)
        if size > MAX_CLASSES:
            raise BudgetExceeded(f"{size} count classes exceed the budget of {MAX_CLASSES}")
        return
    if k > MAX_DP_LETTERS:
        raise BudgetExceeded(f"count dynamic programming supports at most {MAX_DP_LETTERS} letters, have {k}")
    cells = k * sum(math.comb(t + k - 1, k - 1) for t in range(1, n + 1))
    if cells > MAX_DP_CELLS:
        raise BudgetExceeded(f"{cells} DP cells exceed the budget of {MAX_DP_CELLS}")


def _full_shift_classes(model: ShiftModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    k = model.k
    counts = _compositions(n, k)
    logm = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    return counts, logm


def _sft_classes(model: ShiftModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Path counts per letter-count vector by dynamic programming in log space.

    State after t letters: (last letter, counts of the first k-1 letters);
    the last count is implied by the length.
    """
    k = model.k
    A = model.adjacency.astype(bool)
    shape = (k,) + (n + 1,) * (k - 1)
    L = np.full(shape, -np.inf)
    for a in range(k):
        idx = [a] + [0] * (k - 1)
        if a < k - 1:
            idx[1 + a] = 1
        L[tuple(idx)] = 0.0
    for t in range(2, n + 1):
        new = np.full(shape, -np.inf)
        for b in range(k):
            preds = np.flatnonzero(A[:, b])
            acc = L[preds[0]]
            for a in preds[1:]:
                acc = np.logaddexp(acc, L[a])
            if b < k - 1:
                # appending letter b raises its count by one
                src = [slice(None)] * (k - 1)
                dst = [slice(None)] * (k - 1)
                src[b] = slice(0, n)
                dst[b] = slice(1, n + 1)
                new[(b, *dst)] = acc[tuple(src)]
            else:
                new[b] = acc
        L = new
    total = logsumexp(L, axis=0)
    grids = np.meshgrid(*[np.arange(n + 1)] * (k - 1), indexing="ij")
    first = np.stack([g.reshape(-1) for g in grids], axis=1)
    last = n - first.sum(axis=1)
    logm = total.reshape(-1)
    keep = (last >= 0) & np.isfinite(logm)
    counts = np.column_stack([first[keep], last[keep]])
    return counts, logm[keep]


def count_classes(model: ShiftModel, n: int) -> ClassTable:
    """Letter-count classes of admissible n-words with their log multiplicities."""
    if n < 1:
        raise InputError("word length must be at least 1")
    check_budget(model, n)
    if model.is_full_shift:
        counts, logm = _full_shift_classes(model, n)
    else:
        counts, logm = _sft_classes(model, n)
    means = counts @ model.potentials / n
    return ClassTable(n=n, counts=counts, log_multiplicity=logm, mean_potential=means)


def _log_weights(model, energy, table: ClassTable) -> np.ndarray:
    ev = NonlinearEnergy.from_spec(energy).bind(model)
    return table.log_multiplicity + table.n * ev.energy_part(table.mean_potential)


def zeta_exact(model: ShiftModel, energy: NonlinearEnergy | Mapping | str, n: int) -> tuple[float, ClassTable]:
    """``log zeta(n)``: log of the sum over admissible n-words of ``exp(n F(mean))``.

    Full shifts enumerate compositions with log-gamma multinomials; other
    graphs with at most three letters use a count-vector DP.  Raises
    :class:`BudgetExceeded` past the class or cell budget.
    """
    table = count_classes(model, n)
    return float(logsumexp(_log_weights(model, energy, table))), table


def _distance_to_hull(points: Sequence[np.ndarray], x: np.ndarray) -> float:
    V = np.array(points, dtype=float)
    if len(V) == 1:
        return float(np.linalg.norm(x - V[0]))
    rho = 1e4 * max(1.0, float(np.abs(V).max()))
    M = np.vstack([V.T, rho * np.ones(len(V))])
    w, _ = nnls(M, np.append(x, rho))
    w /= w.sum()
    return float(np.linalg.norm(V.T @ w - x))


def gibbs_ensemble(
    model: ShiftModel,
    energy: NonlinearEnergy | Mapping | str,
    n: int,
    report: EquilibriumReport | None = None,
) -> GibbsEnsemble:
    """Class probabilities of the nonlinear Gibbs ensemble of n-words.

    ``report`` supplies the pressure and equilibrium values to compare with;
    it is computed when omitted.
    """
    check_budget(model, n)
    if report is None:
        report = nl_pressure(model, energy)
    table = count_classes(model, n)
    lw = _log_weights(model, energy, table)
    logz = logsumexp(lw)
    prob = np.exp(lw - logz)
    mean = prob @ table.mean_potential
    row = ZetaRow(
        n=n,
        log_zeta_over_n=float(logz / n),
        gap=float(logz / n - report.pressure),
        ensemble_mean=mean,
        dist_to_hull_V=_distance_to_hull(report.values, mean),
    )
    return GibbsEnsemble(row=row, classes=table, probabilities=prob)


def convergence_table(
    model: ShiftModel,
    energy: NonlinearEnergy | Mapping | str,
    ns: Sequence[int],
    report: EquilibriumReport | None = None,
) -> list[ZetaRow]:
    """One :class:`ZetaRow` per word length, ascending.

    Warns with :class:`GapNotMonotone` when ``|gap|`` grows by more than
    ``GAP_BAND`` anywhere in the second half of the table.
    """
    ns = sorted(set(int(n) for n in ns))
    for n in ns:
        check_budget(model, n)
    if report is None:
        report = nl_pressure(model, energy)
    rows = ordered_map(lambda n: gibbs_ensemble(model, energy, n, report).row, ns)
    gaps = np.abs([r.gap for r in rows])
    tail = gaps[len(gaps) // 2:]
    if np.any(np.diff(tail) > GAP_BAND):
        warnings.warn("|gap| is not nonincreasing over the second half of the table", GapNotMonotone)
    return rows
