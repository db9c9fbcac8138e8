import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldlab.distributions import Discretized, Pareto, StepPareto
from ldlab.indices import (
    TabulatedFunction,
    analytic_indices,
    certify_potter,
    check_lemma44,
    class_flags,
    estimate_indices,
    estimate_local_indices,
    estimate_matuszewska,
    log_grid,
    severity_function,
)

from conftest import INF, UNIT

X = np.geomspace(10.0, 1e6, 200)
EPS = (0.1, 0.03, 0.01, 0.003, 0.001)
DENSE = log_grid(10.0, 1e4, 4700)


def power(k):
    return lambda x: np.asarray(x, dtype=float) ** k


def step_tail():
    return severity_function(StepPareto(1.0, 1), INF)


def test_power_law_matuszewska():
    a, b = estimate_matuszewska(power(-2.0), X)
    assert abs(a + 2) <= 0.05 and abs(b + 2) <= 0.05


def test_constant_gives_zero_exactly():
    assert estimate_matuszewska(lambda x: np.ones_like(x), X) == (0.0, 0.0)


def test_step_pareto_matuszewska():
    a, b = estimate_matuszewska(step_tail(), X)
    assert -1.2 <= b <= a <= -0.8


def test_matuszewska_grid_checks():
    with pytest.raises(ValueError):
        estimate_matuszewska(power(-2.0), np.geomspace(10, 1000, 50))
    with pytest.raises(ValueError):
        estimate_matuszewska(lambda x: -np.ones_like(x), X)


def test_local_indices_power_and_step():
    l, L, trace = estimate_local_indices(power(-2.0), EPS, DENSE)
    assert abs(l - 1) <= 0.02 and abs(L - 1) <= 0.02
    assert len(trace["l"]) == len(EPS)
    l, L, _ = estimate_local_indices(step_tail(), EPS, DENSE)
    assert abs(l / 0.5 - 1) <= 0.1 and abs(L / 2 - 1) <= 0.1


def test_local_indices_log_sine_perturbation():
    # brute-force scan oracle: (2 + sin log x) x^-2 is continuous, so l = L = 1
    f = lambda x: (2 + np.sin(np.log(x))) * np.asarray(x, dtype=float) ** -2.0
    l, L, _ = estimate_local_indices(f, EPS, DENSE)
    assert abs(l - 1) <= 0.05 and abs(L - 1) <= 0.05


def test_local_indices_sparse_grid_names_density():
    with pytest.raises(ValueError, match="points per decade"):
        estimate_local_indices(power(-2.0), EPS, X)


def test_potter_examples():
    y = np.geomspace(1, 100, 41)
    c = certify_potter(power(-2.0), -1.5, X, y)
    assert c.valid and c.c_alpha == 1.0 and c.x_alpha == X[0]
    bad = certify_potter(power(-2.0), -2.5, X, y)
    assert not bad.valid and bad.violations
    st_ = certify_potter(step_tail(), -0.5, log_grid(10, 1e4, 60), y)
    assert st_.valid and st_.c_alpha <= 4
    low = certify_potter(power(-2.0), -2.5, X, y, direction="lower")
    assert low.valid


def test_lemma44_examples():
    x = log_grid(10.0, 1e4, 40)
    rep = check_lemma44(power(-2.0), 3.0, x)
    assert rep.passed and rep.first_over_last == pytest.approx(1e3, rel=1e-9)
    with pytest.raises(ValueError, match="p > \\|beta\\|"):
        check_lemma44(power(-2.0), 1.5, x)
    assert check_lemma44(step_tail(), 2.0, x).passed


def test_analytic_indices():
    e = analytic_indices(Pareto(2.0), INF)
    assert (e.alpha_upper, e.beta_lower, e.l_local, e.L_local) == (-2.0, -2.0, 1.0, 1.0)
    assert analytic_indices(Pareto(2.0), UNIT).alpha_upper == -3.0
    e = analytic_indices(Discretized(StepPareto(2.0, 2), 1.0), INF)
    assert (e.l_local, e.L_local) == pytest.approx((0.5, 2.0))
    with pytest.raises(NotImplementedError):
        analytic_indices(StepPareto(1.0), UNIT)


def test_class_flags():
    est = estimate_indices(power(-2.0), X, local_x_grid=DENSE)
    fl = class_flags(power(-2.0), est, X)
    assert fl.OR and fl.L and fl.IR
    est = estimate_indices(step_tail(), X, local_x_grid=DENSE)
    fl = class_flags(step_tail(), est, DENSE)
    assert fl.OR and not fl.L and not fl.IR


def test_tabulated_function(tmp_path):
    p = tmp_path / "f.csv"
    np.savetxt(p, np.c_[X, X ** -2.0], delimiter=",", header="x,f")
    f = TabulatedFunction.from_csv(p)
    assert f(np.array([123.4]))[0] == pytest.approx(123.4 ** -2, rel=1e-9)


@given(st.floats(1e-3, 1e3))
def test_scale_invariance(kappa):
    f = step_tail()
    g = lambda x: kappa * f(x)
    assert estimate_matuszewska(f, X) == pytest.approx(estimate_matuszewska(g, X), abs=1e-12)
    lf = estimate_local_indices(f, EPS[:2], log_grid(10, 1e4, 500))[:2]
    lg = estimate_local_indices(g, EPS[:2], log_grid(10, 1e4, 500))[:2]
    assert lf == pytest.approx(lg, rel=1e-12)


@given(st.floats(-3.0, 0.0), st.floats(0.0, 1.0))
def test_local_indices_bracket_one(k, amp):
    f = lambda x: (2 + amp * np.sin(3 * np.log(x))) * np.asarray(x, dtype=float) ** k
    l, L, _ = estimate_local_indices(f, EPS[:2], log_grid(10, 1e4, 500))
    assert 0 < l <= 1 <= L


@given(st.floats(-1.9, -0.5), st.floats(0.0, 1.0))
def test_potter_monotone_in_alpha(alpha, bump):
    y = np.geomspace(1, 100, 21)
    c = certify_potter(power(-2.0), alpha, X, y)
    if c.valid:
        c2 = certify_potter(power(-2.0), alpha + bump, X, y)
        assert c2.valid and c2.c_alpha <= c.c_alpha and c2.x_alpha <= c.x_alpha


@given(st.floats(0.0, 0.3))
def test_ir_implies_or_and_l(amp):
    f = lambda x: (2 + amp * np.sin(np.log(x))) * np.asarray(x, dtype=float) ** -2.0
    est = estimate_indices(f, X, local_x_grid=log_grid(10, 1e6, 500), eps_sequence=EPS[:2])
    fl = class_flags(f, est, X)
    assert not fl.IR or (fl.OR and fl.L)
