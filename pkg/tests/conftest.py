from contextlib import contextmanager

import numpy as np
import pytest

from thermoform import validate_model


def random_model(rng: np.random.Generator, k: int | None = None, d: int | None = None, golden: bool | None = None):
    """Random full-shift or golden-mean-style model with potentials in [-2, 2]."""
    k = k or int(rng.integers(2, 5))
    d = d or int(rng.integers(1, 3))
    if golden is None:
        golden = bool(rng.integers(0, 2))
    adj = np.ones((k, k), dtype=int)
    if golden:
        adj[k - 1, k - 1] = 0
    pot = rng.uniform(-2, 2, size=(k, d))
    return validate_model({"alphabet": [f"s{i}" for i in range(k)], "adjacency": adj.tolist(), "potentials": pot.tolist()})


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


def _all_words(model, n: int):
    """Every admissible n-word, as (first letter, last letter, potential sum)."""
    k = model.k
    A = model.adjacency.astype(bool)
    powers = k ** np.arange(n, dtype=np.int64)
    words = (np.arange(k**n, dtype=np.int64)[:, None] // powers[None, :]) % k
    ok = A[words[:, :-1], words[:, 1:]].all(axis=1) if n > 1 else np.ones(len(words), dtype=bool)
    words = words[ok]
    return words[:, 0], words[:, -1], model.potentials[words].sum(axis=1)


def brute_log_zeta(model, F, n: int, chunk: int = 1 << 20) -> float:
    """log of the sum over admissible n-words of exp(n F(mean potential)),
    by explicit enumeration of every word.  ``F`` maps an (m, d) array to (m,).

    Each word is split into a prefix and a suffix; every admissible
    concatenation is formed and evaluated individually."""
    from scipy.special import logsumexp

    A = model.adjacency.astype(bool)
    head = n // 2
    if head == 0:
        _, _, sums = _all_words(model, n)
        return float(logsumexp(n * F(sums / n)))
    _, p_last, p_sum = _all_words(model, head)
    s_first, _, s_sum = _all_words(model, n - head)
    step = max(1, chunk // len(s_sum))
    parts = []
    for start in range(0, len(p_sum), step):
        sl = slice(start, start + step)
        joined = A[p_last[sl][:, None], s_first[None, :]]
        sums = (p_sum[sl][:, None, :] + s_sum[None, :, :])[joined]
        if len(sums):
            parts.append(logsumexp(n * F(sums / n)))
    return float(logsumexp(parts))


def quadratic(beta):
    return lambda Z: 0.5 * beta * np.einsum("nd,nd->n", Z, Z)


def power(beta, alpha):
    return lambda Z: -beta * np.maximum(-Z[:, 0], 0.0) ** alpha


# ---------------------------------------------------------------------------
# acceptance reporting

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class Checks:
    """Soft assertions for one acceptance criterion."""

    def __init__(self):
        self.failures: list[str] = []
        self.notes: list[str] = []

    def check(self, ok, message: str) -> None:
        if not ok:
            self.failures.append(message)

    def note(self, message: str) -> None:
        self.notes.append(message)


@contextmanager
def criterion(number: int, title: str):
    """Run one acceptance criterion and record its PASS/FAIL line."""
    checks = Checks()
    try:
        yield checks
    except Exception as exc:
        ACCEPTANCE[number] = (title, False, f"{type(exc).__name__}: {exc}")
        raise
    ok = not checks.failures
    ACCEPTANCE[number] = (title, ok, "; ".join(checks.failures if not ok else checks.notes))
    assert ok, "; ".join(checks.failures)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
