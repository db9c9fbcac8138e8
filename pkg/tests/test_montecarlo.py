import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldlab.compound import compound_for
from ldlab.counting import HomPoisson
from ldlab.distributions import LatticePmf, point_mass
from ldlab.montecarlo import (
    CHUNK,
    CompoundPoissonPremium,
    DeterministicLinear,
    RiskModelSpec,
    check_premium_lln,
    chunk_plan,
    component_rng,
    estimate_centered_interval,
    estimate_surplus_interval,
    nu_estimate,
    premium_from_spec,
    sample_values,
)

from conftest import INF, UNIT


def test_chunk_plan():
    assert chunk_plan(3 * CHUNK + 5) == [CHUNK, CHUNK, CHUNK, 5]
    assert sum(chunk_plan(10 ** 6)) == 10 ** 6


def test_streams_are_independent_of_each_other():
    a = component_rng(1, "count", 0).random(5)
    b = component_rng(1, "severity", 0).random(5)
    c = component_rng(1, "count", 1).random(5)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, component_rng(1, "count", 0).random(5))


def test_worker_count_never_changes_results(pareto2):
    x = np.linspace(20.0, 200.0, 7)
    a = estimate_centered_interval(pareto2, HomPoisson(1.0), 20.0, x, UNIT, 50_000, 11)
    b = estimate_centered_interval(pareto2, HomPoisson(1.0), 20.0, x, UNIT, 50_000, 11,
                                   workers=3)
    assert [e.estimate for e in a] == [e.estimate for e in b]


def test_mc_agrees_with_exact(pareto2):
    t = 20.0
    x = np.linspace(5.0, 100.0, 12)
    mu = pareto2.mean()
    exact = compound_for(HomPoisson(1.0), t, pareto2.lattice(400), 300).interval_prob(
        x + mu * t, INF)
    est = estimate_centered_interval(pareto2, HomPoisson(1.0), t, x, INF, 200_000, 5)
    for e, p in zip(est, exact):
        assert abs(e.estimate - p) <= 4 * max(e.stderr, math.sqrt(p * (1 - p) / 200_000))


def test_min_samples():
    with pytest.raises(ValueError):
        estimate_centered_interval(point_mass(1.0), HomPoisson(1.0), 1.0, [0.0], INF, 100, 0)


def test_surplus_sampler_mean(pareto2):
    prem = CompoundPoissonPremium(0.5, point_mass(1.0))
    spec = RiskModelSpec(pareto2, HomPoisson(1.0), prem, 10.0)
    v = sample_values("surplus", pareto2, HomPoisson(1.0), 10.0, 20_000, 4, premium=prem)
    assert spec.mean_surplus() == pytest.approx(10 * pareto2.mean() - 5.0)
    assert v.shape == (20_000,)
    # a lattice-valued surplus (claims and premiums on the integers)
    assert np.all(v == np.round(v))


def test_risk_model_rejects_negative_claims():
    neg = LatticePmf(1.0, np.array([0.5, 0.5]), origin=-1.0)
    with pytest.raises(ValueError):
        RiskModelSpec(neg, HomPoisson(1.0), DeterministicLinear(0.0), 1.0)


def test_premium_checks():
    prem = premium_from_spec({"family": "compound_poisson", "rate": 0.5})
    rep = check_premium_lln(prem, [10.0, 20.0, 40.0, 80.0, 160.0], 0.3)
    assert rep.passed and rep.details["method"] == "exact"
    assert nu_estimate(prem, HomPoisson(1.0), [10.0, 20.0, 40.0]) == pytest.approx(0.5)
    assert check_premium_lln(DeterministicLinear(2.0), [1.0, 2.0], 0.1).values == [0.0, 0.0]


def test_surplus_deterministic_same_seed_identical(pareto2):
    spec = RiskModelSpec(pareto2, HomPoisson(1.0), DeterministicLinear(1.0), 10.0)
    a = estimate_surplus_interval(spec, [1.0, 5.0], INF, 20_000, 9)
    b = estimate_surplus_interval(spec, [1.0, 5.0], INF, 20_000, 9)
    assert [e.estimate for e in a] == [e.estimate for e in b]


@given(st.integers(0, 2 ** 31), st.integers(10_000, 40_000))
def test_hit_counts_are_integers(seed, n):
    x = [0.0, 10.0]
    est = estimate_centered_interval(point_mass(1.0), HomPoisson(1.0), 5.0, x, INF, n, seed)
    for e in est:
        assert float(e.estimate * n).is_integer() or abs(e.estimate * n - round(e.estimate * n)) < 1e-6
        assert 0.0 <= e.estimate <= 1.0
