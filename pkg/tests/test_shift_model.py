import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from thermoform import (
    BadDimensions,
    NonBinaryAdjacency,
    ReducibleAdjacency,
    builtin_model,
    linear_pressure,
    reduce_potentials,
    rotation_set,
    validate_model,
    zero_temperature_measure,
)
from thermoform.shift_model import solve_batch

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_validate_two_letter_full_shift():
    m = validate_model({"alphabet": ["a", "b"], "adjacency": [[1, 1], [1, 1]], "potentials": [[-1.0], [1.0]]})
    assert (m.k, m.d) == (2, 1)
    assert m.is_full_shift


def test_validate_golden_mean():
    m = validate_model({"alphabet": ["a", "b"], "adjacency": [[1, 1], [1, 0]], "potentials": [[0.3], [2.0]]})
    assert not m.is_full_shift


@pytest.mark.parametrize(
    "spec, err",
    [
        ({"alphabet": ["a", "b"], "adjacency": [[1, 0], [0, 1]], "potentials": [[0.0], [1.0]]}, ReducibleAdjacency),
        ({"alphabet": ["a", "b"], "adjacency": [[1, 2], [1, 1]], "potentials": [[0.0], [1.0]]}, NonBinaryAdjacency),
        ({"alphabet": ["a"], "adjacency": [[1]], "potentials": [[0.0]]}, BadDimensions),
        ({"alphabet": ["a", "b"], "adjacency": [[1, 1], [1, 1]], "potentials": [[], []]}, BadDimensions),
    ],
)
def test_validate_rejects(spec, err):
    with pytest.raises(err):
        validate_model(spec)


def test_validate_rejects_nonfinite_potential():
    with pytest.raises(ValueError):
        validate_model({"alphabet": ["a", "b"], "adjacency": [[1, 1], [1, 1]], "potentials": [[float("nan")], [1.0]]})


def test_curie_weiss_at_zero():
    pd = linear_pressure(builtin_model("curie_weiss"), [0.0])
    assert pd.pressure == pytest.approx(math.log(2), abs=1e-12)
    assert pd.z[0] == pytest.approx(0.0, abs=1e-12)
    assert pd.entropy == pytest.approx(math.log(2), abs=1e-12)


@pytest.mark.parametrize("y", np.arange(-3, 3.5, 0.5))
def test_curie_weiss_closed_form(y):
    pd = linear_pressure(builtin_model("curie_weiss"), [y])
    assert pd.pressure == pytest.approx(math.log(2 * math.cosh(y)), abs=1e-12)
    assert pd.z[0] == pytest.approx(math.tanh(y), abs=1e-12)


def test_golden_mean_entropy():
    pd = linear_pressure(builtin_model("golden_mean"), [0.0])
    assert pd.pressure == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-12)


def test_perron_data_structure():
    m = builtin_model("golden_mean")
    pd = linear_pressure(m, [0.7])
    assert np.allclose(pd.stationary @ pd.transitions, pd.stationary, atol=1e-12)
    assert np.allclose(pd.transitions.sum(axis=1), 1.0, atol=1e-12)
    assert pd.transitions[1, 1] == 0.0
    assert pd.entropy + 0.7 * pd.z[0] == pytest.approx(pd.pressure, abs=1e-10)


def test_large_dual_parameter_stays_finite():
    pd = linear_pressure(builtin_model("asymmetric_cw"), [200.0])
    assert pd.z[0] == pytest.approx(3.0, abs=1e-12)
    assert 0.0 <= pd.entropy < 1e-12


def test_zero_temperature_measure_freezing():
    pd = zero_temperature_measure(builtin_model("freezing"), np.array([1.0]))
    assert abs(pd.z[0]) < 1e-40
    assert 0.0 <= pd.entropy < 1e-40
    assert np.allclose(pd.stationary, [1.0, 0.0], atol=1e-40)


def test_rotation_set_examples():
    assert rotation_set(builtin_model("curie_weiss")).extreme_points.ravel().tolist() == [-1.0, 1.0]
    rs = rotation_set(builtin_model("asymmetric_cw"))
    assert sorted(rs.extreme_points.ravel().tolist()) == [-2.0, 3.0]
    rs = rotation_set(builtin_model("potts:3"))
    assert rs.effective_dim == 2
    assert sorted(map(tuple, rs.extreme_points.tolist())) == sorted(map(tuple, np.eye(3).tolist()))


def test_rotation_set_uses_cycles():
    # the b->b loop is forbidden, so the mean of b alone is not a cycle mean
    rs = rotation_set(builtin_model("golden_mean"))
    assert sorted(rs.extreme_points.ravel().tolist()) == [-1.0, 0.0]


def test_reduce_potts():
    m = builtin_model("potts:3")
    red, amap = reduce_potentials(m)
    assert red.d == 2
    zr = np.array([0.2, 0.3])
    assert np.allclose(amap(zr), [0.2, 0.3, 0.5])


def test_reduce_identity_and_duplicate():
    m = builtin_model("curie_weiss")
    red, amap = reduce_potentials(m)
    assert red == m and amap.is_identity
    dup = validate_model({"alphabet": ["a", "b"], "adjacency": [[1, 1], [1, 1]], "potentials": [[-1.0, -1.0], [1.0, 1.0]]})
    red, amap = reduce_potentials(dup)
    assert red.d == 1
    assert np.allclose(amap(np.array([0.4])), [0.4, 0.4])


def test_builtin_round_trip_through_dict():
    for name in ("curie_weiss", "asymmetric_cw", "potts:4", "freezing", "golden_mean"):
        m = builtin_model(name)
        assert validate_model(m.to_dict()) == m


# ---------------------------------------------------------------------------
# properties over random models


def _dual_grid(rng, d, n=12):
    return rng.uniform(-3, 3, size=(n, d))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_variational_identity_and_bounds(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    Y = _dual_grid(rng, m.d)
    b = solve_batch(m, Y)
    assert np.all(b.entropy >= -1e-12)
    assert np.all(b.entropy <= math.log(m.k) + 1e-12)
    assert np.allclose(b.entropy + np.einsum("nd,nd->n", Y, b.z), b.pressure, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_gradient_identity(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    eps = 1e-5
    for y in _dual_grid(rng, m.d, 4):
        z = linear_pressure(m, y).z
        for j in range(m.d):
            e = np.zeros(m.d)
            e[j] = eps
            fd = (linear_pressure(m, y + e).pressure - linear_pressure(m, y - e).pressure) / (2 * eps)
            assert abs(fd - z[j]) < 1e-5


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_pressure_midpoint_convex(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    Y1, Y2 = _dual_grid(rng, m.d), _dual_grid(rng, m.d)
    P1, P2 = solve_batch(m, Y1).pressure, solve_batch(m, Y2).pressure
    Pm = solve_batch(m, (Y1 + Y2) / 2).pressure
    assert np.all(Pm <= (P1 + P2) / 2 + 1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_averages_inside_rotation_set(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    rs = rotation_set(m)
    Z = solve_batch(m, _dual_grid(rng, m.d, 20) * 5).z
    assert np.all(rs.contains(Z, slack=1e-8))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_reduction_round_trip(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    base = rng.uniform(-2, 2, size=(k, 1))
    coeff = rng.uniform(-1, 1, size=2)
    pot = np.hstack([base, coeff[0] + coeff[1] * base])
    adj = np.ones((k, k), dtype=int)
    if rng.integers(0, 2):
        adj[-1, -1] = 0
    m = validate_model({"alphabet": [str(i) for i in range(k)], "adjacency": adj.tolist(), "potentials": pot.tolist()})
    red, amap = reduce_potentials(m)
    assert red.d == 1
    Yr = rng.uniform(-3, 3, size=(100, red.d))
    assert np.allclose(solve_batch(red, Yr).pressure, solve_batch(m, amap.lift_dual(Yr)).pressure, atol=1e-9)


def test_reduction_round_trip_potts():
    rng = np.random.default_rng(5)
    for n in (3, 4, 5):
        m = builtin_model(f"potts:{n}")
        red, amap = reduce_potentials(m)
        Yr = rng.uniform(-3, 3, size=(100, red.d))
        assert np.allclose(solve_batch(red, Yr).pressure, solve_batch(m, amap.lift_dual(Yr)).pressure, atol=1e-9)
