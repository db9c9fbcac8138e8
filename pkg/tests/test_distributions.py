import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldlab.distributions import (
    DeltaWindow,
    Discretized,
    GridTooShort,
    LatticeGrid,
    LatticePmf,
    Pareto,
    ShiftedBy,
    StepPareto,
    almost_decreasing_constant,
    discretize,
    point_mass,
    severity_from_spec,
)

from conftest import INF, MU_PARETO2, UNIT


def test_window_membership_and_parse():
    w = DeltaWindow(1.0)
    assert w.contains(2.0, 3.0) and not w.contains(2.0, 2.0) and not w.contains(2.0, 3.5)
    assert DeltaWindow.parse("inf").contains(0.0, 1e300)
    assert DeltaWindow.parse("inf").spec() == "inf"
    with pytest.raises(ValueError):
        DeltaWindow(0.0)


def test_pareto_tail_and_interval():
    p = Pareto(2.0)
    assert p.tail(0.5) == 1.0
    assert p.tail(4.0) == pytest.approx(1 / 16, rel=1e-15)
    assert p.interval_prob(1.0, UNIT) == pytest.approx(1 - 0.25, rel=1e-15)
    assert p.mean() == pytest.approx(2.0)


def test_step_pareto_values_at_dyadics():
    s = StepPareto(1.0, 1)
    assert s.tail(np.array([1.0, 1.9, 2.0, 3.99, 4.0])).tolist() == [1.0, 1.0, 0.5, 0.5, 0.25]
    assert s.jump == 2.0
    s2 = StepPareto(2.0, 2)
    assert s2.jump == pytest.approx(2.0)
    # mean of atoms 2^(n/2) with P = 2^-(n-1) - 2^-n
    brute = sum(2 ** (n / 2) * (2.0 ** -(n - 1) - 2.0 ** -n) for n in range(1, 400))
    assert s2.mean() == pytest.approx(brute, rel=1e-12)


def test_discretized_pareto_mean_closed_form(pareto2):
    assert pareto2.mean() == pytest.approx(MU_PARETO2, rel=1e-12)
    # P(X_up > k) = P(X > k) for integers k
    k = np.arange(1, 50, dtype=float)
    assert np.allclose(pareto2.tail(k), k ** -2.0, rtol=0, atol=1e-15)
    assert pareto2.tail(2.5) == pareto2.tail(2.0)


def test_rounding_variants_shift():
    up = Discretized(Pareto(2.0), 1.0, rounding="up")
    down = Discretized(Pareto(2.0), 1.0, rounding="down")
    mid = Discretized(Pareto(2.0), 1.0, rounding="midpoint")
    assert up.mean() - down.mean() == pytest.approx(1.0, abs=1e-10)
    assert up.mean() - mid.mean() == pytest.approx(0.5, abs=1e-10)


def test_discretize_residual_and_grid_too_short():
    grid = LatticeGrid(1.0, 0.0, 11)
    lat = discretize(Pareto(2.0), grid)
    assert lat.masses.sum() == pytest.approx(1.0, abs=1e-15)
    assert lat.residual == pytest.approx(0.01)
    with pytest.raises(GridTooShort, match="lengthen the grid"):
        discretize(Pareto(2.0), grid, max_residual=1e-6)


def test_lattice_pmf_csv_roundtrip(tmp_path):
    lat = LatticePmf(1.0, np.array([0.1, 0.2, 0.7]))
    p = tmp_path / "sev.csv"
    lat.to_csv(p)
    back = LatticePmf.from_csv(p)
    assert np.array_equal(back.masses, lat.masses)


def test_point_mass_and_shift():
    pm = point_mass(1.0)
    assert pm.tail(0.5) == 1.0 and pm.tail(1.0) == 0.0
    sh = ShiftedBy(-1.0, pm)
    assert sh.mean() == pytest.approx(0.0)


def test_almost_decreasing_constant_monotone_is_one():
    x = np.geomspace(1.0, 1e3, 100)
    assert almost_decreasing_constant(Pareto(2.0), INF, 1.0, x) == 1.0
    # a lattice law with a hole is not monotone
    lat = LatticePmf(1.0, np.array([0.0, 0.5, 0.1, 0.4]))
    assert almost_decreasing_constant(lat, UNIT, 0.0, [0.0, 1.0, 2.0]) == pytest.approx(4.0)


def test_spec_roundtrip():
    for m in (Pareto(2.0), StepPareto(2.0, 2), Discretized(Pareto(3.0), 0.5),
              ShiftedBy(2.0, point_mass(1.0))):
        back = severity_from_spec(m.spec())
        x = np.array([0.3, 1.7, 5.0, 12.0])
        assert np.array_equal(np.asarray(back.tail(x)), np.asarray(m.tail(x)))
    with pytest.raises(ValueError):
        severity_from_spec({"family": "nope"})


@given(st.floats(1.1, 5.0), st.floats(0.0, 100.0), st.floats(0.1, 10.0))
def test_interval_prob_bounded_by_tail(alpha, x, T):
    p = Pareto(alpha)
    f = p.interval_prob(x, DeltaWindow(T))
    assert 0.0 <= f <= p.tail(x) + 1e-15


@given(st.floats(1.5, 4.0), st.floats(0.0, 200.0))
def test_up_rounding_dominates(alpha, x):
    d = Discretized(Pareto(alpha), 1.0, rounding="up")
    assert d.tail(x) >= Pareto(alpha).tail(x) - 1e-15


@given(st.integers(0, 2 ** 32 - 1))
def test_sampler_matches_tail(seed):
    rng = np.random.default_rng(seed)
    xs = Discretized(Pareto(2.0), 1.0).sample(rng, 4000)
    assert np.all(xs == np.round(xs)) and xs.min() >= 1.0
    p = 0.25  # P(X_up > 2)
    sigma = math.sqrt(p * (1 - p) / 4000)
    assert abs(np.mean(xs > 2) - p) <= 5 * sigma
