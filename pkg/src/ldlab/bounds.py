"""Explicit truncation bound and uniform ratio scans with their index bands.

A ratio scan compares a local probability of a centred sum with the
single-big-jump approximation ``lam(t) F(x + mu + Delta)`` over a log-spaced
grid ``x in [gamma lam, 10 gamma lam]`` and checks the ratios against the
band ``(l^k, L^k)`` built from the local indices of ``F(. + Delta)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .compound import (CompoundPmf, OutOfGrid, Poisson, compound_for, count_law, nfold_pmf,
                       panjer_pmf, shifted_interval_probs)
from .counting import CountingModel
from .distributions import (DeltaWindow, Discretized, LatticePmf, SeverityModel,
                            almost_decreasing_constant_values, lattice_floor)
from .indices import analytic_indices
from .montecarlo import (CompoundPoissonPremium, DeterministicLinear, RiskModelSpec,
                         estimate_centered_interval, estimate_shifted_interval,
                         estimate_surplus_interval, nu_estimate)

logger = logging.getLogger(__name__)

LOW_PRECISION_RSE = 0.2
BAND_POWER = {"L42": 1, "T31": 2, "C31": 2, "T32": 3}


# ---------------------------------------------------------------- truncation bound

@dataclass(frozen=True)
class Lemma41Bound:
    """``c1 n F(v x + Delta) + c2 (n / x)^(1/v)`` for ``x >= x0``.

    ``c2 = (mu_plus e)^(1/v)`` comes from the exponential Chebyshev step with
    ``h = log(x / (n mu_plus) + 1) / (v x)``; only the closed-form constants
    are exposed.
    """

    severity: SeverityModel
    window: DeltaWindow
    v: float
    c1: float
    c2: float
    x0: float
    mu_plus: float

    def jump_term(self, x, n):
        x = np.asarray(x, dtype=float)
        return self.c1 * n * np.asarray(self.severity.interval_prob(self.v * x, self.window))

    def exp_term(self, x, n):
        x = np.asarray(x, dtype=float)
        return self.c2 * (n / x) ** (1.0 / self.v)

    def __call__(self, x, n):
        """``(bound, jump_term, exp_term)``; all zero for ``n = 0``."""
        if n == 0:
            z = np.zeros_like(np.asarray(x, dtype=float))
            return z, z, z
        if np.any(np.asarray(x) < self.x0):
            raise ValueError(f"bound only holds for x >= x0 = {self.x0:g}")
        j = self.jump_term(x, n)
        e = self.exp_term(x, n)
        return j + e, j, e


def lemma41_constants(severity: SeverityModel, window: DeltaWindow, v: float,
                      x0: Optional[float] = None, probe_grid=None,
                      probe_max: float = 1e4) -> Lemma41Bound:
    """Constants of the truncation bound.

    ``x0`` defaults to the lower support point over ``v`` (so ``F(v x + Delta)``
    is positive), and ``c1`` is the almost-decreasing constant of
    ``F(. + Delta)`` over probe points ``>= v x0``.  For lattice laws the
    lattice points are exact probes because ``F(. + Delta)`` is constant
    between them.
    """
    if not v > 0:
        raise ValueError("v must be positive")
    mu_plus = float(severity.plus_mean())
    if not (0 < mu_plus < math.inf):
        raise ValueError(f"need 0 < E X^+ < inf, got {mu_plus!r}")
    if x0 is None:
        x0 = max(severity.support_min(), 0.0) / v
        if x0 <= 0:
            x0 = 1.0
    z0 = v * x0
    if probe_grid is None:
        h = getattr(severity, "h", None)
        if h is not None:
            k0 = lattice_floor(z0 / h)
            probe_grid = h * np.arange(k0, math.floor(probe_max / h) + 1)
            probe_grid = np.concatenate([[z0], probe_grid[probe_grid > z0]])
        else:
            probe_grid = np.geomspace(z0, max(probe_max, 10 * z0), 2000)
    vals = np.asarray(severity.interval_prob(np.asarray(probe_grid, dtype=float), window))
    c1 = almost_decreasing_constant_values(vals)
    c2 = (mu_plus * math.e) ** (1.0 / v)
    return Lemma41Bound(severity, window, v, c1, c2, float(x0), mu_plus)


def lemma41_bound(severity, window, v, x, n, **kw):
    """Bound value and components at ``(x, n)``."""
    return lemma41_constants(severity, window, v, **kw)(x, n)


@dataclass
class Lemma41Sweep:
    rows: list
    violations: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["v", "T", "n", "x", "exact", "jump_term", "exp_term", "bound", "ok"])
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def lemma41_sweep(severity: Discretized, windows: Sequence[DeltaWindow], vs: Sequence[float],
                  n_max: int = 50, x_max: float = 1e3) -> Lemma41Sweep:
    """Compare the bound with exact ``P(S_n in x + Delta)`` on every lattice ``x``."""
    from .compound import convolution_powers
    h = severity.h
    T_max = max((w.T for w in windows if w.finite), default=0.0)
    k_max = int(math.ceil((x_max + T_max) / h)) + 1
    lat = severity.lattice(k_max + 1)
    from .distributions import LatticeGrid
    grid = LatticeGrid(h, 0.0, k_max + 1)
    rows, bad = [], 0
    bounds = {(v, w.spec()): lemma41_constants(severity, w, v) for v in vs for w in windows}
    for n, s in convolution_powers(lat, n_max, k_max):
        if n == 0:
            continue
        cp = CompoundPmf(grid, s, "convolution", max(0.0, 1.0 - math.fsum(s)))
        for (v, tspec), b in bounds.items():
            w = DeltaWindow.parse(tspec)
            k_lo = int(math.ceil(b.x0 / h - 1e-9))
            x = h * np.arange(k_lo, int(math.floor(x_max / h)) + 1)
            exact = np.asarray(cp.interval_prob(x, w))
            total, j, e = b(x, n)
            ok = exact <= total * (1 + 1e-12)
            bad += int(np.count_nonzero(~ok))
            for i in range(len(x)):
                rows.append((v, tspec, n, float(x[i]), float(exact[i]), float(j[i]),
                             float(e[i]), float(total[i]), bool(ok[i])))
    return Lemma41Sweep(rows, bad)


# ---------------------------------------------------------------- ratio reports

@dataclass
class RatioReport:
    theorem: str
    t: float
    gamma: float
    window: object
    x_grid: list
    numerators: list
    denominators: list
    ratios: list
    provenance: str
    stderr: Optional[list] = None
    low_precision: list = field(default_factory=list)
    sup_ratio: float = math.nan
    inf_ratio: float = math.nan
    band: tuple = (1.0, 1.0)
    slack: float = 0.25
    verdict: str = "NA"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def max_deviation(self) -> float:
        """``max |ratio - 1|`` over the points used for sup/inf."""
        return max(abs(self.sup_ratio - 1), abs(self.inf_ratio - 1))

    def as_dict(self):
        d = asdict(self)
        d["band"] = list(self.band)
        d["schema"] = "ldlab.ratio_report/1"
        return d

    def to_json(self, **kw):
        return json.dumps(_jsonable(self.as_dict()), **kw)

    def csv_rows(self):
        for i, x in enumerate(self.x_grid):
            yield {"theorem": self.theorem, "t": self.t, "gamma": self.gamma,
                   "T": self.window, "x": x, "numerator": self.numerators[i],
                   "stderr": "" if self.stderr is None else self.stderr[i],
                   "denominator": self.denominators[i], "ratio": self.ratios[i],
                   "low_precision": self.low_precision[i], "provenance": self.provenance}


CSV_FIELDS = ["theorem", "t", "gamma", "T", "x", "numerator", "stderr", "denominator", "ratio",
              "low_precision", "provenance"]


def write_ratio_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in reports:
            for row in r.csv_rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def default_x_grid(gamma: float, scale: float, n_points: int = 41, span: float = 10.0):
    """Log-spaced ``[gamma scale, span gamma scale]``."""
    if not gamma * scale > 0:
        raise ValueError("gamma * lam(t) must be positive")
    return np.geomspace(gamma * scale, span * gamma * scale, n_points)


def local_band(severity, window, l_L=None):
    """``(l, L)``: supplied, or the closed-form local indices."""
    if l_L is not None:
        return tuple(map(float, l_L))
    try:
        est = analytic_indices(severity, window)
    except NotImplementedError as exc:
        raise ValueError("no closed-form local indices; pass l_L measured on a grid") from exc
    return est.l_local, est.L_local


def _finish(theorem, t, gamma, window, x, num, den, provenance, stderr, l_L, slack, details):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(den > 0, num / den, np.nan)
    low = np.zeros(len(x), dtype=bool)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = ~(se <= LOW_PRECISION_RSE * num) | (num <= 0)
        if np.any(low):
            logger.warning("%s scan at t=%g: %d of %d grid points LOW-PRECISION "
                           "(stderr/estimate > %.2f); excluded from sup/inf",
                           theorem, t, int(low.sum()), len(x), LOW_PRECISION_RSE)
    k = BAND_POWER[theorem]
    l, L = l_L
    band = (l ** k, L ** k)
    use = ~low & np.isfinite(ratios)
    verdict = "NA"
    sup = inf = math.nan
    if np.any(use) and np.any(num[use] > 0):
        sup = float(np.max(ratios[use]))
        inf = float(np.min(ratios[use]))
        ok = inf >= band[0] * (1 - slack) and sup <= band[1] * (1 + slack)
        verdict = "PASS" if ok else "FAIL"
    return RatioReport(theorem, float(t), float(gamma), window.spec(), [float(v) for v in x],
                       num.tolist(), den.tolist(), ratios.tolist(), provenance,
                       None if stderr is None else [float(s) for s in stderr],
                       low.tolist(), sup, inf, band, slack, verdict, details)


def _lattice_of(severity, k_max):
    if isinstance(severity, Discretized):
        return severity.lattice(k_max + 1)
    if isinstance(severity, LatticePmf):
        return severity
    raise ValueError("exact mode needs a lattice severity (LatticePmf or Discretized)")


def _k_needed(y_max, window, h):
    T = window.T if window.finite else 0.0
    return int(math.ceil((y_max + T) / h - 1e-9)) + 1


def _x_for(gamma, scale, x_grid):
    if x_grid is None:
        return default_x_grid(gamma, scale)
    x = np.asarray(x_grid, dtype=float)
    return x[x >= gamma * scale * (1 - 1e-12)]


def lemma42_ratio_scan(severity, window: DeltaWindow, n: int, gamma: float = 1.0,
                       x_grid=None, l_L=None, slack: float = 0.25) -> RatioReport:
    """Exact ratios ``P(S_n - n mu in x + Delta) / (n F(x + mu + Delta))`` for ``x >= gamma n``."""
    if not gamma > 0 or n < 1:
        raise ValueError("need gamma > 0 and n >= 1")
    mu = severity.mean()
    x = _x_for(gamma, n, x_grid)
    h = severity.h
    k_max = _k_needed(float(x.max()) + n * mu, window, h)
    pmf = nfold_pmf(_lattice_of(severity, k_max), n, k_max)
    num = pmf.interval_prob(x + n * mu, window)
    den = n * np.asarray(severity.interval_prob(x + mu, window))
    return _finish("L42", n, gamma, window, x, num, den, "exact", None,
                   local_band(severity, window, l_L), slack,
                   {"n": n, "mu": mu, "k_max": k_max, "truncation_bound": pmf.truncation_bound})


def theorem31_ratio_scan(severity, counting: CountingModel, t: float, gamma: float,
                         window: DeltaWindow, mode: str = "exact", n_samples: int = 10**6,
                         seed: int = 0, workers: int = 1, x_grid=None, l_L=None,
                         slack: float = 0.25, k_max: Optional[int] = None) -> RatioReport:
    """Ratios ``P(S_{N(t)} - mu lam in x + Delta) / (lam F(x + mu + Delta))``, band ``(l^2, L^2)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lam = counting.lam(t)
    mu = severity.mean()
    x = _x_for(gamma, lam, x_grid)
    den = lam * np.asarray(severity.interval_prob(x + mu, window))
    details = {"lam": lam, "mu": mu, "counting": counting.spec(), "severity": severity.spec()}
    if mode == "exact":
        num, info = _t31_exact(severity, counting, t, x, window, k_max)
        details.update(info)
        stderr = None
        prov = "exact"
    elif mode == "mc":
        est = estimate_centered_interval(severity, counting, t, x, window, n_samples, seed,
                                         workers)
        num = [e.estimate for e in est]
        stderr = [e.stderr for e in est]
        details["seed_spec"] = est[0].seed_spec
        details["n_samples"] = n_samples
        prov = "mc"
    else:
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    if np.all(np.asarray(num) == 0) or np.all(den == 0):
        details["degenerate"] = True
    return _finish("T31", t, gamma, window, x, num, den, prov, stderr,
                   local_band(severity, window, l_L), slack, details)


def _t31_exact(severity, counting, t, x, window, k_max=None):
    lam = counting.lam(t)
    mu = severity.mean()
    h = severity.h
    need = _k_needed(float(np.max(x)) + mu * lam, window, h)
    k_max = need if k_max is None else k_max
    if k_max < need:
        raise OutOfGrid(f"k_max={k_max} does not cover the scan; need k_max >= {need}")
    pmf = compound_for(counting, t, _lattice_of(severity, k_max), k_max)
    num = pmf.interval_prob(x + mu * lam, window)
    return num, {"k_max": k_max, "truncation_bound": pmf.truncation_bound,
                 "low_precision_oracle": pmf.low_precision, "method": pmf.method}


def long_tail_flag(severity, window, z, shift=None, tol=0.05):
    """``F(z + shift + Delta) / F(z + Delta)`` within ``tol`` of 1 at every ``z``."""
    shift = getattr(severity, "h", 1.0) if shift is None else shift
    f0 = np.asarray(severity.interval_prob(z, window))
    f1 = np.asarray(severity.interval_prob(z + shift, window))
    if np.any(f0 <= 0):
        return False
    return bool(np.all(np.abs(f1 / f0 - 1) <= tol))


def corollary31_ratio_scan(severity, c: float, counting: CountingModel, t: float, gamma: float,
                           window: DeltaWindow, mode: str = "exact", n_samples: int = 10**6,
                           seed: int = 0, workers: int = 1, x_grid=None, l_L=None,
                           slack: float = 0.25, check_long_tail: bool = True) -> RatioReport:
    """Shifted summands ``X_k + c``; denominator ``lam F(x - c lam + mu + Delta)``.

    ``c = 0`` returns the :func:`theorem31_ratio_scan` report relabelled, so
    all arrays are identical.
    """
    if not gamma > c:
        raise ValueError(f"need gamma > c, got gamma={gamma:g}, c={c:g}")
    if c == 0:
        rep = theorem31_ratio_scan(severity, counting, t, gamma, window, mode, n_samples, seed,
                                   workers, x_grid, l_L, slack)
        rep.theorem = "C31"
        rep.details["c"] = 0.0
        return rep
    lam = counting.lam(t)
    mu = severity.mean()
    x = _x_for(gamma, lam, x_grid)
    z = x - c * lam + mu
    if check_long_tail and not long_tail_flag(severity, window, z):
        raise ValueError("F(. + Delta) is not flagged long tailed on the scan range; "
                         "the shifted-summand scan requires it")
    den = lam * np.asarray(severity.interval_prob(z, window))
    details = {"lam": lam, "mu": mu, "c": c, "counting": counting.spec(),
               "severity": severity.spec()}
    if mode == "exact":
        h = severity.h
        n_max, _ = count_law(counting, t)
        k_max = _k_needed(float(np.max(x)) + mu * lam + max(0.0, -c) * n_max, window, h)
        num, count_trunc = shifted_interval_probs(_lattice_of(severity, k_max), c, counting, t,
                                                  x + mu * lam, window, k_max)
        details.update({"k_max": k_max, "count_truncation": count_trunc})
        stderr, prov = None, "exact"
    elif mode == "mc":
        est = estimate_shifted_interval(severity, c, counting, t, x, window, n_samples, seed,
                                        workers)
        num = [e.estimate for e in est]
        stderr = [e.stderr for e in est]
        details["seed_spec"] = est[0].seed_spec
        prov = "mc"
    else:
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    return _finish("C31", t, gamma, window, x, num, den, prov, stderr,
                   local_band(severity, window, l_L), slack, details)


class NuViolation(ValueError):
    pass


def theorem32_ratio_scan(spec: RiskModelSpec, gamma: float, window: DeltaWindow,
                         mode: str = "exact", n_samples: int = 10**6, seed: int = 0,
                         workers: int = 1, x_grid=None, l_L=None, slack: float = 0.25,
                         nu_t_grid=None) -> RatioReport:
    """Claim surplus ratios ``P(S(t) - E S(t) in x + Delta) / (lam F(x + mu + Delta))``.

    Requires ``gamma`` above the premium-to-claim mean ratio bound ``nu``
    (estimated on ``nu_t_grid``); band ``(l^3, L^3)``.
    """
    t = spec.t
    nu_grid = nu_t_grid if nu_t_grid is not None else [t / 4, t / 2, t, 2 * t]
    nu = nu_estimate(spec.premium, spec.counting, nu_grid)
    if not gamma > nu:
        raise NuViolation(f"gamma = {gamma:g} must exceed nu = {nu:.6g}, the bound on "
                          f"b(t)/lam(t) (premium mean over claim-count mean)")
    lam = spec.counting.lam(t)
    mu = spec.severity.mean()
    b = spec.premium.b(t)
    x = _x_for(gamma, lam, x_grid)
    den = lam * np.asarray(spec.severity.interval_prob(x + mu, window))
    details = {"lam": lam, "mu": mu, "b": b, "nu_hat": nu, "nu_t_grid": list(map(float, nu_grid)),
               "premium": spec.premium.spec()}
    stderr = None
    if mode == "exact":
        if isinstance(spec.premium, DeterministicLinear):
            # Y(t) - b(t) = 0, so the centred surplus is the centred random sum
            num, info = _t31_exact(spec.severity, spec.counting, t, x, window)
        else:
            num, info = _t32_exact_lattice(spec, x, window)
        details.update(info)
        prov = "exact"
    elif mode == "mc":
        est = estimate_surplus_interval(spec, x, window, n_samples, seed, workers)
        num = [e.estimate for e in est]
        stderr = [e.stderr for e in est]
        details["seed_spec"] = est[0].seed_spec
        prov = "mc"
    else:
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    return _finish("T32", t, gamma, window, x, num, den, prov, stderr,
                   local_band(spec.severity, window, l_L), slack, details)


def _t32_exact_lattice(spec: RiskModelSpec, x, window):
    prem = spec.premium
    if not isinstance(prem, CompoundPoissonPremium):
        raise NotImplementedError("exact surplus law needs a compound Poisson premium")
    h = spec.severity.h
    ypmf = _premium_law(prem, spec.t, h)
    if ypmf is None:
        raise NotImplementedError("exact surplus law needs lattice premium increments on the "
                                  "claim lattice")
    lam = spec.counting.lam(spec.t)
    mu = spec.severity.mean()
    b = prem.b(spec.t)
    a = x + mu * lam - b
    y = ypmf.grid.points
    py = ypmf.masses
    k_max = _k_needed(float(np.max(a)) + float(y[-1]), window, h)
    pmf = compound_for(spec.counting, spec.t, _lattice_of(spec.severity, k_max), k_max)
    # P(S - Y in a + Delta) = sum_y P(Y = y) P(S in a + y + Delta)
    grid = a[:, None] + y[None, :]
    probs = np.asarray(pmf.interval_prob(grid, window))
    num = probs @ py
    return num, {"k_max": k_max, "truncation_bound": pmf.truncation_bound,
                 "premium_truncation": ypmf.truncation_bound, "y_max": float(y[-1])}


def _premium_law(prem, t, h):
    inc = prem.increments
    if not isinstance(inc, LatticePmf) or abs(inc.h - h) > 1e-12 * h:
        return None
    count = Poisson(prem.rate * t)
    top = inc.origin / h + len(inc.masses) - 1
    k_max = int(round(count.n_max() * top))
    return panjer_pmf(count, inc, k_max)


def trend_nonincreasing(values: Sequence[float], slack: float = 0.05) -> bool:
    """Each value at most the previous one plus an additive ``slack``."""
    v = list(values)
    return all(b <= a + slack for a, b in zip(v, v[1:]))
