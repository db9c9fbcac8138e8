import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldlab.counting import (
    DeterministicCount,
    FiniteMixing,
    HomPoisson,
    MixedPoisson,
    ParetoMixing,
    check_condition_31,
    check_condition_32,
    counting_from_spec,
    lower_tail,
    lower_tail_mc,
    truncated_p_moment,
    verify_lemma43,
)

from conftest import INF, UNIT

T_GRID = [10.0, 20.0, 40.0, 80.0, 160.0]

# series oracles, computed with mpmath at 40 digits before the build
P2_POISSON10_DELTA05 = 14.388142467415528913  # sum_{n>=16} n^2 e^-10 10^n / n!
LOWER_POISSON25_DELTA05 = 0.0031441216080975874781  # sum_{n<=12} e^-25 25^n / n!


def test_truncated_moment_oracle():
    v = truncated_p_moment(HomPoisson(1.0), 10.0, 2.0, 0.5)
    assert v.converged and v.value == pytest.approx(P2_POISSON10_DELTA05, rel=1e-13)
    assert 0 < v.value / 10.0 < 2.0


def test_lower_tail_oracle():
    v = lower_tail(HomPoisson(1.0), 25.0, 0.5)
    assert v == pytest.approx(LOWER_POISSON25_DELTA05, rel=1e-12) and v < 0.01


def test_deterministic_count_functionals_vanish():
    d = DeterministicCount(1.0)
    assert d.lam(10.7) == 10.0
    assert truncated_p_moment(d, 10.0, 2.0, 0.5).value == 0.0
    assert lower_tail(d, 10.0, 0.5) == 0.0
    assert check_condition_31(d, 2.0, 0.3, T_GRID).passed


def test_poisson_moment_over_lambda_decreasing():
    vals = [truncated_p_moment(HomPoisson(1.0), t, 2.0, 0.5).value / t for t in (10, 20, 40, 80)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_condition_checks_poisson(pareto2):
    rep = check_condition_31(HomPoisson(1.0), 2.0, 0.3, T_GRID)
    assert rep.passed and rep.condition == "C31"
    for w in (INF, UNIT):
        assert check_condition_32(HomPoisson(1.0), pareto2, w, 0.3, T_GRID).passed
    assert "values" in rep.to_json()


def test_heavy_mixing_fails_condition_31():
    m = MixedPoisson(1.0, ParetoMixing(1.5))
    rep = check_condition_31(m, 2.0, 0.3, [10.0, 20.0])
    assert not rep.passed
    assert rep.details["converged"] == [False, False]


def test_mixed_poisson_pmf_sums_to_one():
    for mix in (FiniteMixing((0.5, 1.5), (0.5, 0.5)), ParetoMixing(1.5)):
        m = MixedPoisson(2.0, mix)
        p = m.pmf(5.0, np.arange(20000))
        assert math.fsum(p) == pytest.approx(1.0, abs=2e-3 if isinstance(mix, ParetoMixing)
                                             else 1e-12)
        assert m.lam(5.0) == 10.0


def test_finite_mixing_needs_unit_mean():
    with pytest.raises(ValueError):
        FiniteMixing((1.0, 2.0), (0.5, 0.5))


def test_xi_statements():
    assert verify_lemma43(HomPoisson(1.0), T_GRID, 0.3, 0.5).details["all_hold"]
    mixed = verify_lemma43(MixedPoisson(1.0, FiniteMixing((0.5, 1.5), (0.5, 0.5))),
                           T_GRID, 0.3, 0.3)
    assert mixed.passed and mixed.details["holds"] == [False, False, False]
    # two-point mixture limit: both atoms 0.5 and 1.5 lie outside [1 - eps, 1 + eps], so P -> 1
    assert mixed.values[-1][0] == pytest.approx(1.0, abs=0.02)
    det = verify_lemma43(DeterministicCount(1.0), T_GRID, 0.3, 0.5)
    assert det.passed and det.values[-1] == [0.0, 0.0, 0.0]


def test_counting_from_spec():
    m = counting_from_spec({"family": "mixed_poisson", "rate": 2.0,
                            "mixing": {"family": "finite", "values": [0.5, 1.5],
                                       "probs": [0.5, 0.5]}})
    assert m.lam(3.0) == 6.0
    with pytest.raises(ValueError):
        counting_from_spec({"family": "renewal"})


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 50.0))
def test_sampler_mean(seed, t):
    rng = np.random.default_rng(seed)
    n = HomPoisson(1.0).sample(rng, t, 100_000)
    assert n.dtype.kind in "iu" and n.min() >= 0
    assert abs(n.mean() - t) <= 4 * math.sqrt(t / 100_000) + 1e-12


@given(st.floats(5.0, 60.0), st.floats(0.05, 0.9))
def test_lower_tail_exact_vs_mc(t, delta):
    p = lower_tail(HomPoisson(1.0), t, delta)
    est = lower_tail_mc(HomPoisson(1.0), t, delta, 20_000, np.random.default_rng(1))
    assert abs(est.value - p) <= 4 * math.sqrt(max(p * (1 - p), 1e-6) / 20_000) + 1e-4


@given(st.floats(5.0, 100.0), st.floats(0.01, 0.9), st.floats(0.0, 0.9))
def test_truncated_moment_monotone_in_delta(t, d1, gap):
    d2 = min(d1 + gap, 0.99)
    a = truncated_p_moment(HomPoisson(1.0), t, 2.0, d1).value
    b = truncated_p_moment(HomPoisson(1.0), t, 2.0, d2).value
    assert b <= a * (1 + 1e-12)


@given(st.floats(5.0, 100.0), st.floats(0.01, 0.98))
def test_lower_tail_monotone_in_delta(t, delta):
    assert lower_tail(HomPoisson(1.0), t, delta) <= lower_tail(HomPoisson(1.0), t, 1e-9) + 1e-15
