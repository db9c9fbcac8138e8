"""Monte Carlo for random sums, shifted sums and the claim-surplus process.

Randomness comes from one root seed split into a stream per model
component (count, severity, premium) and per chunk.  The chunk plan depends
only on the sample size, and chunk results are integer hit tallies, so
estimates are bit-identical for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .compound import Poisson, panjer_pmf
from .counting import ConditionReport, CountingModel
from .distributions import DeltaWindow, LatticePmf, SeverityModel, lattice_floor

COMPONENTS = {"count": 0, "severity": 1, "premium": 2}
CHUNK = 16384


def component_rng(seed: int, component: str, chunk: int = 0) -> np.random.Generator:
    """Generator for one model component and chunk, derived from the root seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(COMPONENTS[component], int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class StreamSet:
    """The three independent component streams used for one chunk of draws."""

    count: np.random.Generator
    severity: np.random.Generator
    premium: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int, chunk: int = 0) -> "StreamSet":
        return cls(*(component_rng(seed, c, chunk) for c in ("count", "severity", "premium")))


@dataclass(frozen=True)
class DeterministicLinear:
    """Premium income ``Y(t) = rate * t``."""

    rate: float = 0.0
    family = "deterministic_linear"

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("premium rate must be nonnegative")

    def b(self, t):
        return self.rate * t

    def sample(self, rng, t, size=None):
        if size is None:
            return self.b(t)
        return np.full(size, self.b(t))

    def spec(self):
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class CompoundPoissonPremium:
    """``Y(t) = sum_{i <= M(t)} Z_i`` with ``M`` Poisson of rate ``rate``."""

    rate: float
    increments: SeverityModel
    family = "compound_poisson"

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError("premium rate must be nonnegative")
        if not self.increments.is_nonnegative():
            raise ValueError("premium increments must be nonnegative")

    def b(self, t):
        return self.rate * t * self.increments.mean()

    def sample(self, rng, t, size=None):
        m = rng.poisson(self.rate * t, size)
        if size is None:
            return float(np.sum(self.increments.sample(rng, int(m)))) if m else 0.0
        return _grouped_sums(m, self.increments.sample(rng, int(m.sum())))

    def spec(self):
        return {"family": self.family, "rate": self.rate, "increments": self.increments.spec()}


def premium_from_spec(spec: Optional[dict]):
    from .distributions import severity_from_spec
    if spec is None:
        return DeterministicLinear(0.0)
    family = spec.get("family")
    if family == "deterministic_linear":
        return DeterministicLinear(float(spec.get("rate", 0.0)))
    if family == "compound_poisson":
        inc = spec.get("increments", {"family": "point_mass", "at": 1.0})
        return CompoundPoissonPremium(float(spec["rate"]), severity_from_spec(inc))
    raise ValueError(f"unknown premium family {family!r}")


@dataclass(frozen=True)
class RiskModelSpec:
    severity: SeverityModel
    counting: CountingModel
    premium: object
    t: float

    def __post_init__(self):
        if not self.severity.is_nonnegative():
            raise ValueError("the risk model needs nonnegative claim sizes")
        if not self.t > 0:
            raise ValueError("horizon t must be positive")

    def mean_surplus(self) -> float:
        """``E S(t) = mu lam(t) - b(t)``."""
        return self.severity.mean() * self.counting.lam(self.t) - self.premium.b(self.t)


@dataclass(frozen=True)
class EstimateWithError:
    estimate: float
    stderr: float
    n_samples: int
    seed_spec: dict = field(default_factory=dict)

    @classmethod
    def from_hits(cls, hits: int, n: int, seed_spec=None):
        p = hits / n
        return cls(p, math.sqrt(p * (1 - p) / n), n, dict(seed_spec or {}))

    def as_dict(self):
        return asdict(self)


def _grouped_sums(counts, values):
    """Sum consecutive runs of ``values`` of lengths ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    if values.size == 0:
        return np.zeros(counts.shape)
    owner = np.repeat(np.arange(counts.size), counts)
    return np.bincount(owner, weights=values, minlength=counts.size)


def _draw_chunk(kind, severity, counting, t, size, streams: StreamSet, c=0.0, premium=None):
    n = np.asarray(counting.sample(streams.count, t, size), dtype=np.int64)
    x = np.asarray(severity.sample(streams.severity, int(n.sum())), dtype=float)
    s = _grouped_sums(n, x)
    if kind == "random_sum":
        return s
    if kind == "shifted":
        return s + c * n
    if kind == "surplus":
        return s - np.asarray(premium.sample(streams.premium, t, size), dtype=float)
    raise ValueError(kind)


def simulate_random_sum(severity, counting, t, streams: StreamSet) -> float:
    """One draw of ``S_{N(t)}`` (the empty sum is 0)."""
    return float(_draw_chunk("random_sum", severity, counting, t, 1, streams)[0])


def simulate_shifted_sum(severity, c, counting, t, streams: StreamSet) -> float:
    """One draw of ``sum_{k <= N(t)} (X_k + c)`` from a single joint draw."""
    return float(_draw_chunk("shifted", severity, counting, t, 1, streams, c=c)[0])


def simulate_claim_surplus(spec: RiskModelSpec, streams: StreamSet) -> float:
    """One draw of ``S(t) = sum_{i <= N(t)} X_i - Y(t)``."""
    return float(_draw_chunk("surplus", spec.severity, spec.counting, spec.t, 1, streams,
                             premium=spec.premium)[0])


def sample_values(kind, severity, counting, t, n_samples, seed, c=0.0, premium=None):
    """All draws of the chosen quantity, in chunk-plan order (for tests and diagnostics)."""
    parts = [_draw_chunk(kind, severity, counting, t, size, StreamSet.from_seed(seed, i), c,
                         premium)
             for i, size in enumerate(chunk_plan(n_samples))]
    return np.concatenate(parts) if parts else np.zeros(0)


def chunk_plan(n_samples: int, chunk: int = CHUNK):
    full, rest = divmod(int(n_samples), chunk)
    return [chunk] * full + ([rest] if rest else [])


def _lattice_step(model):
    """Step ``h`` when the model lives on the multiples of ``h``, else None."""
    h = getattr(model, "h", None)
    if h is None:
        return None
    origin = getattr(model, "lattice_origin", getattr(model, "origin", 0.0))
    return h if abs(origin / h - round(origin / h)) < 1e-9 else None


def _value_step(severity, premium):
    h = _lattice_step(severity)
    if premium is None:
        return h
    if isinstance(premium, CompoundPoissonPremium) and _lattice_step(premium.increments) == h:
        return h
    return None


def _snap(a, h):
    # align thresholds that sit within rounding error of a lattice point
    if h is None:
        return a
    return np.where(np.abs(a / h - np.round(a / h)) < 1e-9, np.round(a / h) * h, a)


def _hits(values, lo, hi):
    v = np.sort(values)
    upper = np.searchsorted(v, hi, side="right") if hi is not None else len(v)
    return (upper - np.searchsorted(v, lo, side="right")).astype(np.int64)


def _chunk_task(args):
    kind, severity, counting, t, size, seed, chunk, c, premium, lo, hi = args
    vals = _draw_chunk(kind, severity, counting, t, size, StreamSet.from_seed(seed, chunk),
                       c, premium)
    return _hits(vals, lo, hi)


def _estimate(kind, severity, counting, t, offset, x, window, n_samples, seed, workers,
              c=0.0, premium=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = _value_step(severity, premium)
    lo = _snap(x + offset, h)
    hi = _snap(x + offset + window.T, h) if window.finite else None
    plan = chunk_plan(n_samples)
    tasks = [(kind, severity, counting, t, size, seed, i, c, premium, lo, hi)
             for i, size in enumerate(plan)]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            tallies = list(ex.map(_chunk_task, tasks))
    else:
        tallies = [_chunk_task(a) for a in tasks]
    hits = np.sum(tallies, axis=0)
    seed_spec = {"seed": int(seed), "chunk": CHUNK, "n_chunks": len(plan),
                 "streams": list(COMPONENTS)}
    return [EstimateWithError.from_hits(int(k), int(n_samples), seed_spec) for k in hits]


def estimate_centered_interval(severity, counting, t, x, window: DeltaWindow, n_samples: int,
                               seed: int, workers: int = 1):
    """MC estimates of ``P(S_{N(t)} - mu lam(t) in x + Delta)`` for every ``x``."""
    if n_samples < 10_000:
        raise ValueError("use at least 1e4 samples")
    mu_lam = severity.mean() * counting.lam(t)
    return _estimate("random_sum", severity, counting, t, mu_lam, x, window, n_samples, seed,
                     workers)


def estimate_shifted_interval(severity, c, counting, t, x, window: DeltaWindow,
                              n_samples: int, seed: int, workers: int = 1):
    """MC estimates of ``P(sum (X_k + c) - mu lam(t) in x + Delta)``."""
    mu_lam = severity.mean() * counting.lam(t)
    return _estimate("shifted", severity, counting, t, mu_lam, x, window, n_samples, seed,
                     workers, c=c)


def estimate_surplus_interval(spec: RiskModelSpec, x, window: DeltaWindow, n_samples: int,
                              seed: int, workers: int = 1):
    """MC estimates of ``P(S(t) - E S(t) in x + Delta)`` with analytic centering."""
    return _estimate("surplus", spec.severity, spec.counting, spec.t, spec.mean_surplus(), x,
                     window, n_samples, seed, workers, premium=spec.premium)


def premium_pmf(premium: CompoundPoissonPremium, t: float, k_max: int):
    """Exact lattice law of ``Y(t)`` for lattice increments."""
    if not isinstance(premium.increments, LatticePmf):
        raise NotImplementedError("exact premium law needs lattice increments")
    return panjer_pmf(Poisson(premium.rate * t), premium.increments, k_max)


def check_premium_lln(premium, t_grid: Sequence[float], eps: float, n_samples: int = 100_000,
                      seed: int = 0) -> ConditionReport:
    """``P(|Y(t)/b(t) - 1| > eps)`` on the grid; passes when it falls by a factor 10 (or is 0)."""
    t_grid = [float(t) for t in t_grid]
    values, stderr, method = [], [], "exact"
    for i, t in enumerate(t_grid):
        b = premium.b(t)
        if isinstance(premium, DeterministicLinear):
            values.append(0.0)
            stderr.append(0.0)
            continue
        if isinstance(premium.increments, LatticePmf) and b > 0:
            h = premium.increments.h
            k_max = int(math.ceil((1 + eps) * b / h)) + 1
            y = premium_pmf(premium, t, k_max)
            lo = (1 - eps) * b
            k_lo = int(lattice_floor(lo / h))
            below = float(np.sum(y.masses[:k_lo + 1]))
            if abs(k_lo * h - lo) < 1e-9 * h:
                below -= y.masses[k_lo]  # Y = (1 - eps) b is not an exceedance
            values.append(float(below + y.tail((1 + eps) * b)))
            stderr.append(0.0)
        else:
            method = "mc"
            rng = component_rng(seed, "premium", i)
            ys = np.asarray(premium.sample(rng, t, n_samples), dtype=float)
            p = float(np.mean(np.abs(ys / b - 1) > eps))
            values.append(p)
            stderr.append(math.sqrt(p * (1 - p) / n_samples))
    ok = values[-1] <= values[0] / 10 or all(v == 0 for v in values)
    return ConditionReport("PremiumLLN", t_grid, None, None, values,
                           "P(|Y/b - 1| > eps): last <= first / 10 (or identically 0)",
                           "pass" if ok else "fail",
                           {"eps": eps, "method": method, "stderr": stderr})


def nu_estimate(premium, counting: CountingModel, t_grid: Sequence[float]) -> float:
    """Max of ``b(t) / lam(t)`` over the top half of the grid."""
    t_grid = list(t_grid)
    top = t_grid[len(t_grid) // 2:]
    return max(premium.b(t) / counting.lam(t) for t in top)
