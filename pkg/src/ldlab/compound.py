"""Exact lattice laws of compound sums: Panjer recursion and direct convolution.

Severities are :class:`LatticePmf` objects on ``origin + k h`` with a
nonnegative origin that is a multiple of ``h``.  A lumped residual in the
severity's last cell is treated as mass beyond the grid end, so all computed
entries are exact for the untruncated lattice law; the compound mass that
falls beyond the grid end is reported as ``truncation_bound``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .counting import (CountingModel, DeterministicCount, FiniteMixing, HomPoisson,
                       MixedPoisson)
from .distributions import DeltaWindow, LatticeGrid, LatticePmf, lattice_floor

DEFAULT_TOL = 1e-10
COUNT_TAIL = 1e-15
LOG_G0_FLOOR = -230.0  # start values below e^-230 are split into convolution factors


class KmaxTooSmall(ValueError):
    def __init__(self, k_max, truncation, tol, required):
        self.k_max = k_max
        self.required = required
        need = f"k_max >= {required}" if required else f"k_max > {64 * k_max}"
        super().__init__(f"k_max={k_max} leaves compound mass {truncation:.3e} beyond the grid "
                         f"(tolerance {tol:.1e}); use {need}")


class OutOfGrid(ValueError):
    """A requested probability needs lattice points the oracle did not compute."""


@dataclass(frozen=True)
class ABZeroCount:
    """Claim-count law in the (a, b, 0) class: ``p_k = (a + b/k) p_{k-1}``."""

    family = "abstract"

    @property
    def a(self) -> float:
        raise NotImplementedError

    @property
    def b(self) -> float:
        raise NotImplementedError

    def pgf(self, z: float) -> float:
        raise NotImplementedError

    def pmf(self, n):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def n_max(self, tail=COUNT_TAIL) -> int:
        """Smallest ``n`` with ``P(N > n) <= tail``."""
        raise NotImplementedError

    def log_pgf(self, z: float) -> float:
        raise NotImplementedError

    def split(self, m: int) -> "ABZeroCount":
        """Law whose ``m``-fold convolution is this one."""
        raise NotImplementedError(f"{self.family} counts cannot be split into equal factors")


@dataclass(frozen=True)
class Poisson(ABZeroCount):
    lam: float
    family = "poisson"

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("Poisson mean must be nonnegative")

    a = property(lambda self: 0.0)
    b = property(lambda self: self.lam)

    def pgf(self, z):
        return math.exp(-self.lam * (1.0 - z))

    def log_pgf(self, z):
        return -self.lam * (1.0 - z)

    def split(self, m):
        return Poisson(self.lam / m)

    def pmf(self, n):
        return stats.poisson.pmf(n, self.lam)

    def mean(self):
        return self.lam

    def n_max(self, tail=COUNT_TAIL):
        return int(stats.poisson.isf(tail, self.lam)) + 1 if self.lam > 0 else 0

    def spec(self):
        return {"family": self.family, "lam": self.lam}


@dataclass(frozen=True)
class NegativeBinomial(ABZeroCount):
    """``P(N = k) = C(k + r - 1, k) (1/(1+beta))^r (beta/(1+beta))^k``."""

    r: float
    beta: float
    family = "negative_binomial"

    def __post_init__(self):
        if not (self.r > 0 and self.beta > 0):
            raise ValueError("negative binomial needs r > 0 and beta > 0")

    a = property(lambda self: self.beta / (1.0 + self.beta))
    b = property(lambda self: (self.r - 1.0) * self.beta / (1.0 + self.beta))

    def pgf(self, z):
        return (1.0 - self.beta * (z - 1.0)) ** (-self.r)

    def log_pgf(self, z):
        return -self.r * math.log1p(-self.beta * (z - 1.0))

    def split(self, m):
        return NegativeBinomial(self.r / m, self.beta)

    def pmf(self, n):
        return stats.nbinom.pmf(n, self.r, 1.0 / (1.0 + self.beta))

    def mean(self):
        return self.r * self.beta

    def n_max(self, tail=COUNT_TAIL):
        return int(stats.nbinom.isf(tail, self.r, 1.0 / (1.0 + self.beta))) + 1

    def spec(self):
        return {"family": self.family, "r": self.r, "beta": self.beta}


@dataclass(frozen=True)
class Binomial(ABZeroCount):
    m: int
    q: float
    family = "binomial"

    def __post_init__(self):
        if int(self.m) < 0 or not 0 <= self.q < 1:
            raise ValueError("binomial needs m >= 0 and 0 <= q < 1")

    a = property(lambda self: -self.q / (1.0 - self.q))
    b = property(lambda self: (self.m + 1) * self.q / (1.0 - self.q))

    def pgf(self, z):
        return (1.0 + self.q * (z - 1.0)) ** self.m

    def log_pgf(self, z):
        return self.m * math.log1p(self.q * (z - 1.0)) if self.q * (1.0 - z) < 1 else -math.inf

    def pmf(self, n):
        return stats.binom.pmf(n, self.m, self.q)

    def mean(self):
        return self.m * self.q

    def n_max(self, tail=COUNT_TAIL):
        return int(self.m)

    def spec(self):
        return {"family": self.family, "m": int(self.m), "q": self.q}


def count_from_spec(spec: dict) -> ABZeroCount:
    family = spec.get("family")
    if family == "poisson":
        return Poisson(float(spec["lam"]))
    if family == "negative_binomial":
        return NegativeBinomial(float(spec["r"]), float(spec["beta"]))
    if family == "binomial":
        return Binomial(int(spec["m"]), float(spec["q"]))
    raise ValueError(f"unknown (a,b,0) count family {family!r}")


@dataclass(frozen=True, eq=False)
class CompoundPmf:
    """Exact compound masses on ``grid``; ``truncation_bound`` is the mass beyond its end."""

    grid: LatticeGrid
    masses: np.ndarray
    method: str
    truncation_bound: float
    count_spec: dict = field(default_factory=dict)
    severity_spec: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "truncation_bound", max(0.0, float(self.truncation_bound)))
        # _up[k] = sum_{j >= k} masses[j]
        object.__setattr__(self, "_up", np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]]))

    @property
    def low_precision(self) -> bool:
        return self.truncation_bound > self.tol

    def _index_above(self, y):
        return lattice_floor((np.asarray(y, dtype=float) - self.grid.origin) / self.grid.h) + 1

    def tail(self, y):
        """``P(S > y)``, including the mass beyond the grid end."""
        y = np.asarray(y, dtype=float)
        if np.any(y > self.grid.end + 1e-9 * self.grid.h):
            raise OutOfGrid(f"tail requested beyond grid end {self.grid.end:g}")
        up = self._up
        k = np.clip(self._index_above(y), 0, len(self.masses)).astype(int)
        out = up[k] + self.truncation_bound
        return float(out) if out.ndim == 0 else out

    def interval_prob(self, y, window: DeltaWindow):
        """``P(S in (y, y + T])``; raises :class:`OutOfGrid` rather than extrapolating."""
        if not window.finite:
            return self.tail(y)
        self.grid.check_window(window)
        y = np.asarray(y, dtype=float)
        if np.any(y + window.T > self.grid.end + 1e-9 * self.grid.h):
            raise OutOfGrid(f"window (y, y+{window.T:g}] reaches beyond grid end "
                            f"{self.grid.end:g}; increase k_max")
        up = self._up
        k0 = np.clip(self._index_above(y), 0, len(self.masses)).astype(int)
        k1 = np.clip(self._index_above(y + window.T), 0, len(self.masses)).astype(int)
        out = np.maximum(up[k0] - up[k1], 0.0)
        return float(out) if out.ndim == 0 else out

    def mean_lower(self) -> float:
        """``E S 1{S <= grid end}``."""
        return math.fsum(self.grid.points * self.masses)

    def to_csv(self, path):
        header = {"schema": "ldlab.compound_pmf/1", "method": self.method,
                  "h": self.grid.h, "origin": self.grid.origin,
                  "truncation_bound": self.truncation_bound,
                  "low_precision": self.low_precision,
                  "count": self.count_spec, "severity": _short_spec(self.severity_spec)}
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["index", "mass"])
            for i, v in enumerate(self.masses):
                w.writerow([i, repr(float(v))])


def _short_spec(spec):
    # inline lattice masses would bloat CSV headers
    if isinstance(spec, dict) and spec.get("family") == "lattice" and "masses" in spec:
        s = dict(spec)
        s["masses"] = f"<{len(spec['masses'])} cells>"
        return s
    return spec


def _severity_vector(severity: LatticePmf, k_max: int) -> np.ndarray:
    """Severity masses on ``0, h, ..., k_max h`` with the residual removed."""
    shift = severity.origin / severity.h
    j0 = int(round(shift))
    if abs(shift - j0) > 1e-9 or j0 < 0:
        raise ValueError("severity lattice must start at a nonnegative multiple of h")
    m = severity.defective_masses()
    f = np.zeros(k_max + 1)
    if j0 <= k_max:
        take = min(len(m), k_max + 1 - j0)
        f[j0:j0 + take] = m[:take]
    covered = j0 + len(m) - 1
    if severity.residual > 0 and covered < k_max:
        raise ValueError(
            f"severity lattice ends at index {covered} with lumped residual "
            f"{severity.residual:.3e}; rediscretize it on at least {k_max + 1} cells")
    return f


def _panjer_core(a, b, g0, f, k_max, compensated=True):
    g = np.zeros(k_max + 1)
    g[0] = g0
    nz = np.flatnonzero(f[1:]) + 1
    j_max = int(nz[-1]) if nz.size else 0
    jf = np.arange(len(f)) * f
    denom = 1.0 - a * f[0]
    for k in range(1, k_max + 1):
        m = min(k, j_max)
        if m == 0:
            break
        gk = g[k - 1::-1][:m]
        terms = (a * f[1:m + 1] + (b / k) * jf[1:m + 1]) * gk
        s = math.fsum(terms) if compensated else float(terms.sum())
        g[k] = max(s, 0.0) / denom
    return g


def panjer_pmf(count: ABZeroCount, severity: LatticePmf, k_max: int,
               tol: Optional[float] = None) -> CompoundPmf:
    """Compound pmf by the (a, b, 0) recursion with compensated inner sums.

    ``g_k = sum_j (a + b j / k) f_j g_{k-j} / (1 - a f_0)`` and ``g_0 = P_N(f_0)``.
    With ``tol`` set, a truncation bound above it raises :class:`KmaxTooSmall`
    naming the required ``k_max``; otherwise the bound is recorded and
    ``low_precision`` tells whether it exceeds the default tolerance.
    """
    k_max = int(k_max)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    f = _severity_vector(severity, k_max)
    g, parts = _panjer_masses(count, f, k_max)
    trunc = max(0.0, 1.0 - math.fsum(g))
    if tol is not None and trunc > tol:
        raise KmaxTooSmall(k_max, trunc, tol, _required_kmax(count, f, k_max, tol, severity))
    return CompoundPmf(LatticeGrid(severity.h, 0.0, k_max + 1), g,
                       "panjer" if parts == 1 else f"panjer x{parts} convolution", trunc,
                       count.spec(), severity.spec(), DEFAULT_TOL if tol is None else tol)


def _panjer_masses(count, f, k_max, compensated=True):
    """Recursion masses and the number of convolution factors used.

    When ``g_0 = P_N(f_0)`` would underflow, the count law is split into
    ``m`` equal factors (infinite divisibility), each factor is run through
    the recursion and the results are convolved by repeated squaring.
    """
    log_g0 = count.log_pgf(f[0])
    m = 1 if log_g0 >= LOG_G0_FLOOR else int(math.ceil(log_g0 / LOG_G0_FLOOR))
    part = count if m == 1 else count.split(m)
    g = _panjer_core(part.a, part.b, math.exp(part.log_pgf(f[0])), f, k_max, compensated)
    if m == 1:
        return g, 1
    out, base, e = None, g, m
    while e:
        if e & 1:
            out = base if out is None else np.convolve(out, base)[:k_max + 1]
        e >>= 1
        if e:
            base = np.convolve(base, base)[:k_max + 1]
    return out, m


def _required_kmax(count, f, k_max, tol, severity):
    # doubling search with the cheap uncompensated recursion
    k = k_max
    while k < 64 * max(k_max, 1):
        k *= 2
        try:
            fk = _severity_vector(severity, k)
        except ValueError:
            return None
        g, _ = _panjer_masses(count, fk, k, compensated=False)
        if 1.0 - g.sum() <= tol:
            # refine by the cumulative mass of the longer run
            c = np.cumsum(g)
            return int(np.searchsorted(c, 1.0 - tol)) + 1
    return None


def convolution_pmf(count_pmf, severity: LatticePmf, k_max: int,
                    n_max: Optional[int] = None) -> CompoundPmf:
    """Compound pmf as the mixture ``sum_n p_n f^{*n}`` by repeated direct convolution.

    ``count_pmf`` is either a vector ``(p_0, ..., p_{n_max})`` or an
    :class:`ABZeroCount` (then truncated where its tail drops below 1e-15).
    Count mass beyond ``n_max`` ends up in ``truncation_bound``.
    """
    k_max = int(k_max)
    spec = {}
    if isinstance(count_pmf, ABZeroCount):
        spec = count_pmf.spec()
        n_max = count_pmf.n_max() if n_max is None else n_max
        p = count_pmf.pmf(np.arange(n_max + 1))
    else:
        p = np.asarray(count_pmf, dtype=float)
        if n_max is not None:
            p = p[:n_max + 1]
        spec = {"family": "tabulated", "n_max": len(p) - 1}
    f = _severity_vector(severity, k_max)
    s = np.zeros(k_max + 1)
    s[0] = 1.0
    out = p[0] * s
    for n in range(1, len(p)):
        s = np.convolve(s, f)[:k_max + 1]
        out = out + p[n] * s
    trunc = max(0.0, 1.0 - math.fsum(out))
    return CompoundPmf(LatticeGrid(severity.h, 0.0, k_max + 1), out, "convolution", trunc,
                       spec, severity.spec())


def convolution_powers(severity: LatticePmf, n_max: int, k_max: int):
    """Yield ``(n, f^{*n})`` on ``0..k_max`` for ``n = 0..n_max``."""
    f = _severity_vector(severity, k_max)
    s = np.zeros(k_max + 1)
    s[0] = 1.0
    yield 0, s
    for n in range(1, n_max + 1):
        s = np.convolve(s, f)[:k_max + 1]
        yield n, s


def nfold_pmf(severity: LatticePmf, n: int, k_max: int) -> CompoundPmf:
    """Exact law of ``S_n`` as a :class:`CompoundPmf` (count degenerate at ``n``)."""
    for _, s in convolution_powers(severity, n, k_max):
        pass
    trunc = max(0.0, 1.0 - math.fsum(s))
    return CompoundPmf(LatticeGrid(severity.h, 0.0, k_max + 1), s, "convolution", trunc,
                       {"family": "degenerate", "n": int(n)}, severity.spec())


def centered_interval_prob(pmf: CompoundPmf, mu: float, lambda_t: float, x, window: DeltaWindow):
    """``P(S - mu lambda_t in x + Delta)`` read off the exact compound masses."""
    return pmf.interval_prob(np.asarray(x, dtype=float) + mu * lambda_t, window)


def compound_for(counting: CountingModel, t: float, severity: LatticePmf, k_max: int,
                 tol: Optional[float] = None) -> CompoundPmf:
    """Exact law of ``S_{N(t)}`` for the counting families that admit one."""
    if isinstance(counting, HomPoisson):
        return panjer_pmf(Poisson(counting.lam(t)), severity, k_max, tol)
    if isinstance(counting, DeterministicCount):
        return nfold_pmf(severity, int(counting.lam(t)), k_max)
    if isinstance(counting, MixedPoisson) and isinstance(counting.mixing, FiniteMixing):
        parts = [panjer_pmf(Poisson(v * counting.lam(t)), severity, k_max)
                 for v in counting.mixing.values]
        masses = sum(p * c.masses for p, c in zip(counting.mixing.probs, parts))
        trunc = sum(p * c.truncation_bound for p, c in zip(counting.mixing.probs, parts))
        return CompoundPmf(parts[0].grid, masses, "panjer", trunc, counting.spec(),
                           severity.spec())
    raise NotImplementedError(f"no exact oracle for counting family {counting.family}")


def count_law(counting: CountingModel, t: float, tail: float = COUNT_TAIL):
    """``(n_max, pmf vector)`` of N(t), truncated where its tail falls below ``tail``."""
    if isinstance(counting, DeterministicCount):
        n = int(counting.lam(t))
        p = np.zeros(n + 1)
        p[n] = 1.0
        return n, p
    if isinstance(counting, HomPoisson):
        n_max = Poisson(counting.lam(t)).n_max(tail)
        return n_max, counting.pmf(t, np.arange(n_max + 1))
    if isinstance(counting, MixedPoisson) and isinstance(counting.mixing, FiniteMixing):
        n_max = Poisson(max(counting.mixing.values) * counting.lam(t)).n_max(tail)
        return n_max, counting.pmf(t, np.arange(n_max + 1))
    raise NotImplementedError(f"no truncated pmf for counting family {counting.family}")


def shifted_interval_probs(severity: LatticePmf, c: float, counting: CountingModel, t: float,
                           y, window: DeltaWindow, k_max: Optional[int] = None):
    """``P(sum_{k <= N(t)} (X_k + c) in y + Delta)`` for an array of offsets ``y``.

    Computed as ``sum_n P(N = n) P(S_n in y - c n + Delta)`` over exact
    convolution powers, so ``c`` need not lie on the severity lattice.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n_max, p = count_law(counting, t)
    T = window.T if window.finite else 0.0
    need = float(np.max(y)) + max(0.0, -c) * n_max + T
    k_req = int(math.ceil(need / severity.h - 1e-9)) + 1
    if k_max is None:
        k_max = k_req
    elif k_max < k_req:
        raise OutOfGrid(f"shifted sums need k_max >= {k_req}, got {k_max}")
    out = np.zeros_like(y)
    h = severity.h
    grid = LatticeGrid(h, 0.0, k_max + 1)
    count_mass = 0.0
    for n, s in convolution_powers(severity, n_max, k_max):
        pn = p[n]
        count_mass += pn
        if pn == 0.0:
            continue
        cp = CompoundPmf(grid, s, "convolution", max(0.0, 1.0 - math.fsum(s)))
        out += pn * cp.interval_prob(y - c * n, window)
    return out, max(0.0, 1.0 - count_mass)
