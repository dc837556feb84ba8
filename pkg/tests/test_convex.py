import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from thermoform import DimensionTooHigh, NoConvergence, builtin_model, diagram, entropy_at, linear_pressure, validate_model
from thermoform.convex import entropy_many
from thermoform.shift_model import reduce_potentials, solve_batch

seeds = st.integers(min_value=0, max_value=2**32 - 1)

# independent closed forms: CW h(z) is the binary entropy of (1+z)/2; the
# asymmetric model's h is evaluated from its printed expression
CW_H_HALF = -0.25 * math.log(0.25) - 0.75 * math.log(0.75)
ASYM_H_HALF = (0.5 - 3) / 5 * math.log((3 - 0.5) / 10) - (2 + 0.5) / 5 * math.log((2 + 0.5) / 5)


def asym_entropy(z):
    return (z - 3) / 5 * np.log((3 - z) / 10) - (2 + z) / 5 * np.log((2 + z) / 5)


def test_curie_weiss_center():
    ev = entropy_at(builtin_model("curie_weiss"), [0.0])
    assert ev.h == pytest.approx(math.log(2), abs=1e-12)
    assert ev.dual_y[0] == pytest.approx(0.0, abs=1e-10)
    assert ev.status == "interior"


def test_curie_weiss_half():
    ev = entropy_at(builtin_model("curie_weiss"), [0.5])
    assert ev.h == pytest.approx(CW_H_HALF, abs=1e-12)
    assert ev.dual_y[0] == pytest.approx(math.atanh(0.5), abs=1e-9)
    assert np.array_equal(ev.grad_h, -ev.dual_y)


def test_asymmetric_half():
    ev = entropy_at(builtin_model("asymmetric_cw"), [0.5])
    assert ev.h == pytest.approx(ASYM_H_HALF, abs=1e-12)


def test_asymmetric_near_upper_vertex():
    # close to the boundary the margin-relative tolerance keeps h accurate
    ev = entropy_at(builtin_model("asymmetric_cw"), [2.999999])
    assert ev.h == pytest.approx(float(asym_entropy(2.999999)), rel=1e-6)


def test_outside_and_near_boundary():
    m = builtin_model("curie_weiss")
    assert entropy_at(m, [1.5]).status == "outside"
    assert entropy_at(m, [1.5]).h == -math.inf
    ev = entropy_at(m, [1.0])
    assert ev.status in ("near_boundary", "interior")
    assert 0.0 <= ev.h < 1e-9


def test_freezing_boundary_has_finite_dual():
    # bounded entropy gradient at z = 0: the dual converges at the boundary
    m = builtin_model("freezing")
    ev = entropy_at(m, [-1e-8])
    assert ev.status == "interior"
    assert abs(ev.dual_y[0]) < 30.0
    assert np.allclose(linear_pressure(m, ev.dual_y).z, [-1e-8], rtol=1e-6)


def test_potts_center():
    ev = entropy_at(builtin_model("potts:3"), [1 / 3, 1 / 3, 1 / 3])
    assert ev.h == pytest.approx(math.log(3), abs=1e-12)
    assert ev.status == "interior"


def test_diagram_curie_weiss_symmetric():
    table = diagram(builtin_model("curie_weiss"), {"points": 101, "ranges": [(-0.99, 0.99)]})
    z, h, g = table.arrays()
    assert len(z) == 101
    assert np.allclose(z[:, 0], -z[::-1, 0], atol=1e-15)
    assert np.allclose(h, h[::-1], atol=1e-12)
    assert np.argmax(h) == 50 and h[50] == pytest.approx(math.log(2), abs=1e-12)


def test_diagram_default_grid_size():
    assert len(diagram(builtin_model("curie_weiss"), 101).rows) == 101


def test_diagram_potts_triangle():
    table = diagram(builtin_model("potts:3"), 31)
    z, h, _ = table.arrays()
    i = int(np.argmax(h))
    assert np.allclose(z[i], [1 / 3, 1 / 3, 1 / 3], atol=0.02)
    assert h.max() <= math.log(3) + 1e-12
    assert all(r.status == "interior" for r in table.rows)


def test_diagram_asymmetric_derivative_decreasing():
    table = diagram(builtin_model("asymmetric_cw"), {"points": 501, "ranges": [(-1.99, 2.99)]})
    z, h, g = table.arrays()
    assert np.all(np.diff(np.diff(h) / np.diff(z[:, 0])) < 0)
    assert np.allclose(h, asym_entropy(z[:, 0]), atol=1e-10)


def test_diagram_rejects_three_dims():
    with pytest.raises(DimensionTooHigh):
        diagram(builtin_model("potts:4"), 5)


def test_diagram_duality_round_trip():
    m = builtin_model("asymmetric_cw")
    z, h, _ = diagram(m, 501).arrays()
    for y in np.linspace(-2, 2, 9):
        best = np.max(h + y * z[:, 0])
        assert abs(best - linear_pressure(m, [y]).pressure) < 1e-3


def test_strict_mode_raises_on_stall(monkeypatch):
    import thermoform.convex as cv

    m = builtin_model("curie_weiss")
    monkeypatch.setattr(cv, "MAX_NEWTON", 1)
    with pytest.raises(NoConvergence):
        entropy_at(m, [0.9])


# ---------------------------------------------------------------------------
# properties over random models


def _interior_points(m, rng, n):
    """Potential averages of equilibrium measures, which are interior."""
    Y = rng.uniform(-3, 3, size=(n, m.d))
    return Y, solve_batch(m, Y).z


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_inverse_diffeomorphism(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    _, amap = reduce_potentials(m)
    Y, Z = _interior_points(m, rng, 8)
    h, Yd, status = entropy_many(m, Z)
    assert np.all(status == "interior")
    assert np.allclose(solve_batch(m, Yd).z, Z, atol=1e-6)
    # the dual is unique only up to directions orthogonal to the affine hull
    assert np.allclose(amap.pull_dual(Yd), amap.pull_dual(Y), atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_concavity_and_bounds(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    _, Z1 = _interior_points(m, rng, 6)
    _, Z2 = _interior_points(m, rng, 6)
    h1, _, _ = entropy_many(m, Z1)
    h2, _, _ = entropy_many(m, Z2)
    for t in (0.25, 0.5, 0.75):
        ht, _, _ = entropy_many(m, t * Z1 + (1 - t) * Z2)
        assert np.all(ht >= t * h1 + (1 - t) * h2 - 1e-8)
    assert np.all(h1 >= -1e-12) and np.all(h1 <= math.log(m.k) + 1e-12)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_entropy_below_every_probe(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    _, Z = _interior_points(m, rng, 5)
    h, _, _ = entropy_many(m, Z)
    probes = rng.uniform(-4, 4, size=(30, m.d))
    P = solve_batch(m, probes).pressure
    bound = P[None, :] - Z @ probes.T
    assert np.all(h[:, None] <= bound + 1e-10)


def test_duplicate_columns_match_single_column():
    one = builtin_model("asymmetric_cw")
    two = validate_model({"alphabet": ["a", "b", "c"], "adjacency": [[1] * 3] * 3,
                          "potentials": [[-2.0, -2.0], [-2.0, -2.0], [3.0, 3.0]]})
    assert entropy_at(two, [0.5, 0.5]).h == pytest.approx(entropy_at(one, [0.5]).h, abs=1e-12)
