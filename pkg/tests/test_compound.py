import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldlab.compound import (
    Binomial,
    CompoundPmf,
    KmaxTooSmall,
    NegativeBinomial,
    OutOfGrid,
    Poisson,
    compound_for,
    convolution_pmf,
    nfold_pmf,
    panjer_pmf,
    shifted_interval_probs,
)
from ldlab.counting import DeterministicCount, FiniteMixing, HomPoisson, MixedPoisson
from ldlab.distributions import LatticePmf

from conftest import INF, UNIT

SEV12 = LatticePmf(1.0, np.array([0.0, 0.5, 0.5]))
E2 = math.exp(-2.0)
# brute-force enumeration over N <= 60 in exact rationals: g_k / e^-2
G_POISSON2 = [1, 1, 3 / 2, 7 / 6, 25 / 24, 27 / 40, 331 / 720]
# NegBin(r=2, beta=1) with severity {0: .2, 1: .5, 3: .3}, rational enumeration over N < 200
G_NEGBIN = [0.30864197530864196, 0.17146776406035666, 0.07144490169181528,
            0.12934173313688632, 0.09492175519013399, 0.05069255884786207]


def test_poisson_hand_values():
    g = panjer_pmf(Poisson(2.0), SEV12, 10).masses
    assert abs(g[0] - E2) <= 1e-12 and abs(g[1] - E2) <= 1e-12 and abs(g[2] - 1.5 * E2) <= 1e-12
    assert np.allclose(g[:7], np.array(G_POISSON2) * E2, rtol=1e-13, atol=0)


def test_negbin_enumeration_oracle():
    sev = LatticePmf(1.0, np.array([0.2, 0.5, 0.0, 0.3]))
    g = panjer_pmf(NegativeBinomial(2.0, 1.0), sev, 40).masses
    assert np.allclose(g[:6], G_NEGBIN, rtol=1e-13, atol=0)


def test_binomial_matches_convolution():
    sev = LatticePmf(1.0, np.array([0.1, 0.6, 0.3]))
    a = panjer_pmf(Binomial(12, 0.3), sev, 30)
    b = convolution_pmf(Binomial(12, 0.3), sev, 30)
    assert np.max(np.abs(a.masses - b.masses)) <= 1e-15
    assert a.truncation_bound <= 1e-14


def test_kmax_too_small_names_remedy():
    with pytest.raises(KmaxTooSmall, match="k_max"):
        panjer_pmf(Poisson(50.0), SEV12, 60, tol=1e-10)


def test_tail_and_out_of_grid():
    pmf = panjer_pmf(Poisson(2.0), SEV12, 30)
    assert pmf.tail(-0.5) == pytest.approx(1.0, abs=1e-14)
    assert pmf.tail(0.0) == pytest.approx(1 - E2, rel=1e-13)
    assert pmf.interval_prob(0.0, UNIT) == pytest.approx(E2, rel=1e-13)
    with pytest.raises(OutOfGrid):
        pmf.interval_prob(30.0, UNIT)
    with pytest.raises(OutOfGrid):
        pmf.tail(31.0)


def test_csv_header(tmp_path):
    pmf = panjer_pmf(Poisson(2.0), SEV12, 10)
    pmf.to_csv(tmp_path / "g.csv")
    first = (tmp_path / "g.csv").read_text().splitlines()[0]
    assert first.startswith("# {") and "ldlab.compound_pmf/1" in first


def test_compound_for_families(pareto2):
    lat = pareto2.lattice(400)
    d = compound_for(DeterministicCount(1.0), 5.0, lat, 300)
    assert np.array_equal(d.masses, nfold_pmf(lat, 5, 300).masses)
    mix = MixedPoisson(1.0, FiniteMixing((0.5, 1.5), (0.5, 0.5)))
    m = compound_for(mix, 10.0, lat, 300)
    a = panjer_pmf(Poisson(5.0), lat, 300).masses
    b = panjer_pmf(Poisson(15.0), lat, 300).masses
    assert np.allclose(m.masses, 0.5 * a + 0.5 * b, rtol=0, atol=1e-17)


def test_shifted_zero_matches_compound(pareto2):
    lat = pareto2.lattice(200)
    y = np.arange(20.0, 60.0)
    got, trunc = shifted_interval_probs(lat, 0.0, HomPoisson(1.0), 10.0, y, UNIT, 150)
    want = compound_for(HomPoisson(1.0), 10.0, lat, 150).interval_prob(y, UNIT)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-18) and trunc < 1e-14


severity_st = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=11).filter(
    lambda v: sum(v) > 0.1)


@given(severity_st, st.floats(0.1, 30.0))
def test_panjer_equals_convolution_poisson(masses, lam):
    sev = LatticePmf(1.0, np.asarray(masses) / sum(masses))
    a = panjer_pmf(Poisson(lam), sev, 120)
    b = convolution_pmf(Poisson(lam), sev, 120)
    assert np.max(np.abs(a.masses - b.masses)) <= 1e-10


@given(severity_st, st.floats(0.2, 5.0), st.floats(0.1, 4.0))
def test_panjer_equals_convolution_negbin(masses, r, beta):
    sev = LatticePmf(1.0, np.asarray(masses) / sum(masses))
    a = panjer_pmf(NegativeBinomial(r, beta), sev, 120)
    b = convolution_pmf(NegativeBinomial(r, beta), sev, 120)
    assert np.max(np.abs(a.masses - b.masses)) <= 1e-10


@given(severity_st, st.floats(0.1, 20.0))
def test_masses_nonnegative_and_mean(masses, lam):
    f = np.asarray(masses) / sum(masses)
    sev = LatticePmf(1.0, f)
    pmf = panjer_pmf(Poisson(lam), sev, 400)
    assert np.all(pmf.masses >= 0)
    assert math.fsum(pmf.masses) + pmf.truncation_bound == pytest.approx(1.0, abs=1e-12)
    if pmf.truncation_bound < 1e-13:
        mean = lam * float(np.dot(np.arange(len(f)), f))
        assert pmf.mean_lower() == pytest.approx(mean, rel=1e-9, abs=1e-12)


def test_large_mean_does_not_underflow():
    # e^-1000 underflows; the split recursion must still give the Poisson(1000) law
    import mpmath as mp
    from ldlab.distributions import point_mass
    g = panjer_pmf(Poisson(1000.0), point_mass(1.0), 1400)
    assert g.method.startswith("panjer x")
    with mp.workdps(30):
        for k in (800, 900, 1000, 1100, 1200):
            want = float(mp.e ** -1000 * mp.mpf(1000) ** k / mp.factorial(k))
            assert g.masses[k] == pytest.approx(want, rel=1e-13)
    assert g.truncation_bound < 1e-12
    sev = LatticePmf(1.0, np.array([0.3, 0.4, 0.3]))
    a = panjer_pmf(NegativeBinomial(400.0, 2.0), sev, 2500)
    b = convolution_pmf(NegativeBinomial(400.0, 2.0), sev, 2500)
    assert np.max(np.abs(a.masses - b.masses)) <= 1e-14
