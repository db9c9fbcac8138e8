"""Counting processes N(t), their exact tail functionals and condition checkers."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .distributions import DeltaWindow, SeverityModel

SERIES_RTOL = 1e-16
SERIES_CAP = 1_000_000
_CHUNK = 4096


@dataclass(frozen=True)
class SeriesValue:
    """Result of a truncated series or a simulation estimate."""

    value: float
    n_terms: int = 0
    converged: bool = True
    stderr: Optional[float] = None
    method: str = "series"

    def as_dict(self):
        return asdict(self)


class CountingModel:
    """Base class: ``lam(t)`` is the mean function, ``pmf(t, n)`` the law of N(t)."""

    family = "abstract"

    def lam(self, t: float) -> float:
        raise NotImplementedError

    def pmf(self, t: float, n) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, t: float, k: int) -> float:
        if k < 0:
            return 0.0
        return min(1.0, math.fsum(self.pmf(t, np.arange(int(k) + 1))))

    def sample(self, rng: np.random.Generator, t: float, size=None):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    @property
    def has_pmf(self) -> bool:
        return True


@dataclass(frozen=True)
class HomPoisson(CountingModel):
    rate: float = 1.0
    family = "hom_poisson"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Poisson rate must be positive")

    def lam(self, t):
        return self.rate * t

    def pmf(self, t, n):
        return stats.poisson.pmf(n, self.lam(t))

    def cdf(self, t, k):
        return float(stats.poisson.cdf(k, self.lam(t)))

    def sample(self, rng, t, size=None):
        return rng.poisson(self.lam(t), size)

    def spec(self):
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class FiniteMixing:
    """Mixing law on finitely many positive scales with mean 1."""

    values: tuple
    probs: tuple
    family = "finite"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or np.any(v <= 0) or np.any(p < 0):
            raise ValueError("mixing needs positive values and nonnegative probabilities")
        if abs(p.sum() - 1) > 1e-12 or abs(float(v @ p) - 1) > 1e-12:
            raise ValueError("mixing probabilities must sum to 1 and the mixing mean must be 1")
        object.__setattr__(self, "values", tuple(map(float, v)))
        object.__setattr__(self, "probs", tuple(map(float, p)))

    def sample(self, rng, size=None):
        idx = rng.choice(len(self.values), size=size, p=self.probs)
        return np.asarray(self.values)[idx]

    def spec(self):
        return {"family": self.family, "values": list(self.values), "probs": list(self.probs)}


@dataclass(frozen=True)
class ParetoMixing:
    """Pareto mixing density ``a th_m^a / th^(a+1)`` on ``[th_m, inf)`` with mean 1.

    With shape ``a`` the mixed count has ``E N^p = inf`` for ``p >= a``.
    """

    shape: float = 1.5
    family = "pareto"

    def __post_init__(self):
        if not self.shape > 1:
            raise ValueError("Pareto mixing needs shape > 1 for a finite mean")

    @property
    def theta_min(self):
        return (self.shape - 1) / self.shape

    def sample(self, rng, size=None):
        u = 1.0 - rng.random(size)
        return self.theta_min * u ** (-1.0 / self.shape)

    def spec(self):
        return {"family": self.family, "shape": self.shape}


@dataclass(frozen=True)
class MixedPoisson(CountingModel):
    """``N(t) | Theta ~ Poisson(Theta * rate * t)`` with ``E Theta = 1``."""

    rate: float
    mixing: object
    family = "mixed_poisson"

    def lam(self, t):
        return self.rate * t

    def pmf(self, t, n):
        n = np.asarray(n)
        lam = self.lam(t)
        if isinstance(self.mixing, FiniteMixing):
            out = np.zeros(n.shape, dtype=float)
            for v, p in zip(self.mixing.values, self.mixing.probs):
                out = out + p * stats.poisson.pmf(n, v * lam)
            return out
        return _pareto_mixed_pmf(self.mixing.shape, self.mixing.theta_min * lam, n)

    def cdf(self, t, k):
        if isinstance(self.mixing, FiniteMixing):
            lam = self.lam(t)
            return float(sum(p * stats.poisson.cdf(k, v * lam)
                             for v, p in zip(self.mixing.values, self.mixing.probs)))
        return super().cdf(t, k)

    def sample(self, rng, t, size=None):
        theta = self.mixing.sample(rng, size)
        return rng.poisson(theta * self.lam(t))

    def spec(self):
        return {"family": self.family, "rate": self.rate, "mixing": self.mixing.spec()}


def _pareto_mixed_pmf(a, x0, n):
    """``P(N = n) = a x0^a Gamma(n - a, x0) / n!`` for Pareto mixing."""
    n = np.asarray(n)
    nf = n.astype(float)
    s = nf - a
    out = np.empty(n.shape, dtype=float)
    pos = s > 0
    with np.errstate(divide="ignore"):
        logq = np.log(special.gammaincc(s[pos], x0))
    out[pos] = np.exp(math.log(a) + a * math.log(x0) + logq + special.gammaln(s[pos])
                      - special.gammaln(nf[pos] + 1))
    if np.any(~pos):
        import mpmath  # only the first few terms have nonpositive s
        for i in np.flatnonzero(~pos.ravel()):
            k = int(n.ravel()[i])
            val = a * mpmath.power(x0, a) * mpmath.gammainc(k - a, x0) / mpmath.factorial(k)
            out.ravel()[i] = float(val)
    return out


@dataclass(frozen=True)
class DeterministicCount(CountingModel):
    """``N(t) = floor(rate * t)``, so ``lam(t) = floor(rate * t)``."""

    rate: float = 1.0
    family = "deterministic"

    def lam(self, t):
        return float(math.floor(self.rate * t + 1e-12))

    def pmf(self, t, n):
        return (np.asarray(n) == int(self.lam(t))).astype(float)

    def cdf(self, t, k):
        return 1.0 if k >= self.lam(t) else 0.0

    def sample(self, rng, t, size=None):
        if size is None:
            return int(self.lam(t))
        return np.full(size, int(self.lam(t)), dtype=np.int64)

    def spec(self):
        return {"family": self.family, "rate": self.rate}


def counting_from_spec(spec: dict) -> CountingModel:
    spec = dict(spec)
    family = spec.get("family")
    if family == "hom_poisson":
        return HomPoisson(float(spec.get("rate", 1.0)))
    if family == "deterministic":
        return DeterministicCount(float(spec.get("rate", 1.0)))
    if family == "mixed_poisson":
        m = dict(spec.get("mixing", {}))
        kind = m.get("family", "finite")
        if kind == "finite":
            mixing = FiniteMixing(tuple(m["values"]), tuple(m["probs"]))
        elif kind == "pareto":
            mixing = ParetoMixing(float(m.get("shape", 1.5)))
        else:
            raise ValueError(f"unknown mixing family {kind!r}")
        return MixedPoisson(float(spec.get("rate", 1.0)), mixing)
    raise ValueError(f"unknown counting family {family!r}")


def _series(pmf_fn, n0, weight, rtol=SERIES_RTOL, cap=SERIES_CAP):
    """Sum ``weight(n) pmf(n)`` over ``n >= n0`` until terms are negligible."""
    total = []
    running = 0.0
    n_terms = 0
    start = n0
    while n_terms < cap:
        n = np.arange(start, start + min(_CHUNK, cap - n_terms))
        terms = weight(n.astype(float)) * pmf_fn(n)
        total.append(math.fsum(terms))
        running = math.fsum(total)
        n_terms += len(n)
        start += len(n)
        # stop once the summands are past their peak and below the floor
        if len(terms) > 1 and terms[-1] <= terms[-2] and terms[-1] <= rtol * running:
            return SeriesValue(running, n_terms, True)
    return SeriesValue(running, n_terms, False)


def truncated_p_moment(model: CountingModel, t: float, p: float, delta: float) -> SeriesValue:
    """``E N(t)^p 1{N(t) > (1 + delta) lam(t)}`` by exact series summation.

    The series stops when a summand falls below ``1e-16`` of the running sum
    (after the summands peak) and is flagged non-converged after ``1e6`` terms.
    """
    if p < 1 or not delta > 0:
        raise ValueError("need p >= 1 and delta > 0")
    lam = model.lam(t)
    if isinstance(model, DeterministicCount):
        n = lam
        return SeriesValue(n ** p if n > (1 + delta) * lam else 0.0, 1, True)
    n0 = int(math.floor((1 + delta) * lam)) + 1
    return _series(lambda n: model.pmf(t, n), n0, lambda n: n ** p)


def lower_tail(model: CountingModel, t: float, delta: float) -> float:
    """``P(N(t) <= (1 - delta) lam(t))`` from the pmf."""
    if not 0 < delta < 1:
        raise ValueError("need 0 < delta < 1")
    k = int(math.floor((1 - delta) * model.lam(t) + 1e-12))
    return model.cdf(t, k)


def lower_tail_mc(model: CountingModel, t: float, delta: float, n_samples: int,
                  rng: np.random.Generator) -> SeriesValue:
    """Simulation estimate of :func:`lower_tail` with its binomial standard error."""
    n = np.asarray(model.sample(rng, t, n_samples))
    hits = int(np.count_nonzero(n <= (1 - delta) * model.lam(t) + 1e-12))
    p = hits / n_samples
    return SeriesValue(p, n_samples, True, math.sqrt(p * (1 - p) / n_samples), "mc")


def truncated_p_moment_mc(model: CountingModel, t: float, p: float, delta: float,
                          n_samples: int, rng: np.random.Generator) -> SeriesValue:
    n = np.asarray(model.sample(rng, t, n_samples), dtype=float)
    w = np.where(n > (1 + delta) * model.lam(t), n ** p, 0.0)
    return SeriesValue(float(w.mean()), n_samples, True,
                       float(w.std(ddof=1) / math.sqrt(n_samples)), "mc")


@dataclass
class ConditionReport:
    """Per-t functional values and the threshold rule that decides the verdict."""

    condition: str
    t_grid: list
    delta: Optional[float]
    p: Optional[float]
    values: list
    rule: str
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)


def _nonincreasing(v, rtol=1e-9):
    v = np.asarray(v, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] * (1 + rtol) + 1e-300))


def check_condition_31(model: CountingModel, p: float, delta: float,
                       t_grid: Sequence[float]) -> ConditionReport:
    """Truncated p-th moment over ``lam(t)``: finite, converged and nonincreasing on the top half."""
    t_grid = [float(t) for t in t_grid]
    series = [truncated_p_moment(model, t, p, delta) for t in t_grid]
    values = [s.value / model.lam(t) if model.lam(t) > 0 else math.inf
              for s, t in zip(series, t_grid)]
    top = values[len(values) // 2:]
    converged = all(s.converged for s in series)
    ok = converged and all(math.isfinite(v) for v in values) and _nonincreasing(top)
    return ConditionReport(
        "C31", t_grid, delta, p, values,
        "all series converged; E N^p 1{N > (1+delta) lam} / lam nonincreasing on top half of t grid",
        "pass" if ok else "fail",
        {"n_terms": [s.n_terms for s in series], "converged": [s.converged for s in series]})


def check_condition_32(model: CountingModel, severity: SeverityModel, window: DeltaWindow,
                       delta: float, t_grid: Sequence[float]) -> ConditionReport:
    """``P(N <= (1-delta) lam) / (lam F(lam + Delta))`` must fall by a factor 10 over the grid."""
    t_grid = [float(t) for t in t_grid]
    values = []
    for t in t_grid:
        lam = model.lam(t)
        den = lam * float(severity.interval_prob(lam, window))
        if den <= 0:
            raise ValueError(f"lam(t) F(lam(t) + Delta) vanishes at t={t:g}")
        values.append(lower_tail(model, t, delta) / den)
    first, last = values[0], values[-1]
    ok = last <= first / 10 or (first == 0 and last == 0)
    return ConditionReport("C32", t_grid, delta, None, values,
                           "last <= first / 10 (or identically 0)", "pass" if ok else "fail")


def _xi_functionals(model, t, eps, delta):
    lam = model.lam(t)
    if isinstance(model, DeterministicCount):
        xi = 1.0
        return (float(abs(xi - 1) > eps), xi * (xi > 1 + eps), xi * (xi <= 1 - delta))
    # (ii): E xi 1{xi > 1+eps} via the series, (iii) by a finite sum
    up = _series(lambda n: model.pmf(t, n), int(math.floor((1 + eps) * lam)) + 1,
                 lambda n: n / lam)
    k_low = int(math.floor((1 - delta) * lam + 1e-12))
    n = np.arange(k_low + 1)
    low = math.fsum(n / lam * model.pmf(t, n)) if k_low >= 0 else 0.0
    # (i): P(|xi - 1| > eps)
    k_in_lo = int(math.ceil((1 - eps) * lam - 1e-12)) - 1
    k_in_hi = int(math.floor((1 + eps) * lam + 1e-12))
    p_in = model.cdf(t, k_in_hi) - model.cdf(t, k_in_lo)
    return max(0.0, 1.0 - p_in), up.value, low


def verify_lemma43(model: CountingModel, t_grid: Sequence[float], eps: float,
                   delta: float) -> ConditionReport:
    """Check that the three statements about ``xi = N/lam`` hold or fail together.

    A statement "holds" on the grid when its value falls by a factor 10 from
    the first to the last t (or is identically 0).
    """
    t_grid = [float(t) for t in t_grid]
    vals = np.array([_xi_functionals(model, t, eps, delta) for t in t_grid])
    holds = [bool(vals[-1, j] <= vals[0, j] / 10 or vals[-1, j] == 0) for j in range(3)]
    agree = len(set(holds)) == 1
    return ConditionReport(
        "LemmaA43", t_grid, delta, None, vals.tolist(),
        "each statement holds iff last <= first/10 (or 0); pass iff all three agree",
        "pass" if agree else "fail",
        {"eps": eps, "holds": holds, "all_hold": all(holds),
         "statements": ["P(|xi-1|>eps)", "E xi 1{xi>1+eps}", "E xi 1{xi<=1-delta}"]})
