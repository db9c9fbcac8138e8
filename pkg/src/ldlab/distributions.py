"""Windows, claim-size families and lattice discretization.

Every "local" probability in the package is a probability of a half-open
window ``(x, x + T]``.  Severity models expose the right-continuous survival
function ``tail(x) = P(X > x)`` and everything else (window probabilities,
discretizations, compound oracles) is built from it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

logger = logging.getLogger(__name__)

ROUNDINGS = ("up", "down", "midpoint")

# lattice indices closer than this (in units of h) to an integer are snapped
_SNAP = 1e-9


def _scalar_or_array(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


def lattice_floor(q):
    """``floor`` of lattice coordinates, snapping values within 1e-9 of an integer."""
    q = np.asarray(q, dtype=float)
    r = np.round(q)
    q = np.where(np.abs(q - r) < _SNAP, r, q)
    return np.floor(q)


@dataclass(frozen=True)
class DeltaWindow:
    """The window ``(0, T]``; ``T = inf`` gives the ordinary tail ``(0, inf)``."""

    T: float = math.inf

    def __post_init__(self):
        T = float(self.T)
        if not T > 0 or math.isnan(T):
            raise ValueError(f"window length must be positive, got {self.T!r}")
        object.__setattr__(self, "T", T)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.T)

    def contains(self, x, z):
        """Membership of ``z`` in ``x + (0, T]``; total on the reals."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        out = z > x
        if self.finite:
            out = out & (z <= x + self.T)
        return out if out.ndim else bool(out)

    @classmethod
    def parse(cls, value) -> "DeltaWindow":
        if isinstance(value, str):
            if value.strip().lower() in ("inf", "infinity", "oo"):
                return cls(math.inf)
            value = float(value)
        return cls(float(value))

    def spec(self):
        return "inf" if not self.finite else self.T

    def __str__(self):
        return "(0, inf)" if not self.finite else f"(0, {self.T:g}]"


@dataclass(frozen=True)
class LatticeGrid:
    """Points ``origin + k*h`` for ``k = 0 .. length-1``."""

    h: float
    origin: float = 0.0
    length: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("lattice step must be positive")
        if int(self.length) < 1:
            raise ValueError("lattice length must be a positive integer")
        object.__setattr__(self, "length", int(self.length))

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.length)

    @property
    def end(self) -> float:
        return self.origin + self.h * (self.length - 1)

    def check_window(self, window: DeltaWindow):
        if window.finite:
            ratio = window.T / self.h
            if abs(ratio - round(ratio)) > _SNAP or round(ratio) < 1:
                raise ValueError(
                    f"window length T={window.T} must be an integer multiple of h={self.h}")


class SeverityModel:
    """Base class for claim-size distributions.

    Subclasses implement :meth:`tail`, :meth:`mean`, :meth:`sample` and
    :meth:`spec`; the rest has generic implementations.
    """

    family = "abstract"

    def tail(self, x):
        raise NotImplementedError

    def interval_prob(self, x, window: DeltaWindow):
        """``F(x + Delta) = tail(x) - tail(x + T)`` (just ``tail(x)`` when T is infinite)."""
        x = np.asarray(x, dtype=float)
        if not window.finite:
            return self.tail(x)
        out = np.maximum(np.asarray(self.tail(x)) - np.asarray(self.tail(x + window.T)), 0.0)
        return _scalar_or_array(x, out)

    def mean(self) -> float:
        raise NotImplementedError

    def plus_mean(self) -> float:
        """``E X^+``."""
        if self.is_nonnegative():
            return self.mean()
        val, _ = integrate.quad(lambda y: float(self.tail(y)), 0.0, np.inf, limit=500)
        return val

    def plus_moment(self, r: float) -> float:
        """``E (X^+)^r`` for ``r > 1``; ``inf`` when the moment diverges."""
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        return self._plus_moment_quad(r)

    def _plus_moment_quad(self, r):
        val, _ = integrate.quad(lambda y: r * y ** (r - 1) * float(self.tail(y)),
                                0.0, np.inf, limit=500)
        return val

    def tail_moment_integral(self, r: float, start: float) -> float:
        """``int_start^inf r y^(r-1) tail(y) dy`` for ``start >= 0``."""
        val, _ = integrate.quad(lambda y: r * y ** (r - 1) * float(self.tail(y)),
                                start, np.inf, limit=500)
        return val

    def is_nonnegative(self) -> bool:
        return float(self.tail(-1e-9)) >= 1.0 - 1e-15

    def support_min(self) -> float:
        """Smallest point of the support (left end of where ``tail < 1``)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def lattice_tail_sum(self, z0: float, h: float) -> float:
        """``sum_{k>=0} tail(z0 + k h)``; used for exact lattice means."""
        raise NotImplementedError(f"no lattice tail sum for {self.family}")

    def atoms(self, n_max=None):
        """(values, probabilities) of an atomic law; infinite laws return a head."""
        raise NotImplementedError(f"{self.family} is not atomic")

    def atom_tail_moment(self, power, n_max):
        """Moment contribution of the atoms not returned by ``atoms(n_max)``."""
        return 0.0


@dataclass(frozen=True)
class Pareto(SeverityModel):
    """Classical Pareto law, ``tail(x) = (xm / x)^alpha`` for ``x >= xm``."""

    alpha: float
    xm: float = 1.0
    family = "pareto"

    def __post_init__(self):
        if not (self.alpha > 0 and self.xm > 0):
            raise ValueError("Pareto needs alpha > 0 and xm > 0")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x < self.xm, 1.0, (self.xm / np.maximum(x, self.xm)) ** self.alpha)
        return _scalar_or_array(x, out)

    def mean(self):
        if self.alpha <= 1:
            return math.inf
        return self.alpha * self.xm / (self.alpha - 1)

    def plus_moment(self, r):
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        if r >= self.alpha:
            return math.inf
        return self.alpha * self.xm ** r / (self.alpha - r)

    def tail_moment_integral(self, r, start):
        if r >= self.alpha:
            return math.inf
        if start < self.xm:
            return super().tail_moment_integral(r, start)
        return r * self.xm ** self.alpha * start ** (r - self.alpha) / (self.alpha - r)

    def is_nonnegative(self):
        return True

    def support_min(self):
        return self.xm

    def sample(self, rng, size=None):
        u = 1.0 - rng.random(size)
        return self.xm * u ** (-1.0 / self.alpha)

    def lattice_tail_sum(self, z0, h):
        if self.alpha <= 1:
            return math.inf
        # points below xm have tail 1; the rest is a Hurwitz zeta value
        k_star = max(0, int(math.ceil((self.xm - z0) / h - _SNAP)))
        q = (z0 + k_star * h) / h
        return k_star + (self.xm / h) ** self.alpha * float(special.zeta(self.alpha, q))

    def spec(self):
        return {"family": self.family, "alpha": self.alpha, "xm": self.xm}


@dataclass(frozen=True)
class StepPareto(SeverityModel):
    """Dyadic step tail: ``tail(x) = 2^(-alpha n / m)`` on ``[2^(n/m), 2^((n+1)/m))``.

    ``m`` is the number of steps per octave, so every step multiplies the tail
    by ``2^(-alpha/m)``.  The law is atomic, with atoms at ``2^(n/m)``, n >= 1.
    With ``m = 1`` this is the canonical ``2^(-alpha floor(log2 x))`` tail.
    """

    alpha: float = 1.0
    steps_per_octave: int = 1
    family = "step_pareto"

    def __post_init__(self):
        if not self.alpha > 0 or int(self.steps_per_octave) < 1:
            raise ValueError("StepPareto needs alpha > 0 and steps_per_octave >= 1")

    @property
    def jump(self) -> float:
        """Factor by which the tail drops at each step."""
        return 2.0 ** (self.alpha / self.steps_per_octave)

    def _index(self, x):
        m = self.steps_per_octave
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.floor(m * np.log2(np.maximum(x, 1.0)))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        n = self._index(x)
        out = np.where(x < 1.0, 1.0, 2.0 ** (-self.alpha * n / self.steps_per_octave))
        return _scalar_or_array(x, out)

    def _geometric(self, power):
        # sum_{n>=1} 2^(power n / m) * P(atom n)
        m = self.steps_per_octave
        s = 2.0 ** ((power - self.alpha) / m)
        if s >= 1.0:
            return math.inf
        return (self.jump - 1.0) * 2.0 ** (power / m) * 2.0 ** (-self.alpha / m) / (1.0 - s)

    def mean(self):
        return self._geometric(1.0)

    def plus_moment(self, r):
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        return self._geometric(r)

    def is_nonnegative(self):
        return True

    def support_min(self):
        return 2.0 ** (1.0 / self.steps_per_octave)

    def atoms(self, n_max=None):
        """The first ``n_max`` atoms (default 64 per octave) and their masses."""
        m = self.steps_per_octave
        n_max = 64 * m if n_max is None else int(n_max)
        n = np.arange(1, n_max + 1)
        values = np.exp2(n / m)
        probs = 2.0 ** (-self.alpha * (n - 1) / m) - 2.0 ** (-self.alpha * n / m)
        return values, probs

    def atom_tail_moment(self, power, n_max):
        """``sum_{n > n_max} 2^(power n / m) P(atom n)`` in closed form."""
        m = self.steps_per_octave
        s = 2.0 ** ((power - self.alpha) / m)
        if s >= 1.0:
            return math.inf
        return (self.jump - 1.0) * s ** (n_max + 1) / (1.0 - s)

    def sample(self, rng, size=None):
        n = rng.geometric(1.0 - 2.0 ** (-self.alpha / self.steps_per_octave), size)
        return np.exp2(n / self.steps_per_octave)

    def spec(self):
        return {"family": self.family, "alpha": self.alpha,
                "steps_per_octave": self.steps_per_octave}


@dataclass(frozen=True, eq=False)
class LatticePmf(SeverityModel):
    """Finite lattice law with atoms at ``origin + k*h``.

    ``residual`` is tail mass that did not fit on the lattice and was lumped
    into the last cell (see :func:`discretize`); the compound oracles treat it
    as mass beyond the grid end.
    """

    h: float
    masses: np.ndarray
    origin: float = 0.0
    residual: float = 0.0
    family = "lattice"

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).copy()
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        if not self.h > 0:
            raise ValueError("lattice step must be positive")
        if m.ndim != 1 or m.size == 0:
            raise ValueError("masses must be a nonempty vector")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if abs(math.fsum(m) - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {math.fsum(m)!r}, not 1")
        if self.residual < 0 or self.residual > m[-1] + 1e-15:
            raise ValueError("residual must lie in [0, last mass]")

    @property
    def grid(self) -> LatticeGrid:
        return LatticeGrid(self.h, self.origin, len(self.masses))

    @property
    def positions(self) -> np.ndarray:
        return self.grid.points

    @property
    def _upper(self):
        # _upper[k] = sum_{j >= k} masses[j]
        return np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])

    def index_above(self, x):
        """Index of the first atom strictly greater than ``x``, clipped to [0, len]."""
        k = lattice_floor((np.asarray(x, dtype=float) - self.origin) / self.h) + 1
        return np.clip(k, 0, len(self.masses)).astype(int)

    def tail(self, x):
        out = self._upper[self.index_above(x)]
        return _scalar_or_array(x, out)

    def defective_masses(self) -> np.ndarray:
        m = np.array(self.masses)
        m[-1] -= self.residual
        return np.maximum(m, 0.0)

    def mean(self):
        return math.fsum(self.positions * self.masses)

    def plus_moment(self, r):
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        return math.fsum(np.maximum(self.positions, 0.0) ** r * self.masses)

    def plus_mean(self):
        return math.fsum(np.maximum(self.positions, 0.0) * self.masses)

    def is_nonnegative(self):
        return not np.any(self.masses[self.positions < 0] > 0)

    def support_min(self):
        return float(self.positions[np.flatnonzero(self.masses > 0)[0]])

    def atoms(self, n_max=None):
        keep = self.masses > 0
        return self.positions[keep], self.masses[keep]

    def lattice_tail_sum(self, z0, h):
        last = self.positions[-1]
        if z0 >= last:
            return 0.0
        k = np.arange(int(math.ceil((last - z0) / h)) + 1)
        return math.fsum(self.tail(z0 + k * h))

    def sample(self, rng, size=None):
        cdf = np.cumsum(self.masses)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        idx = np.minimum(idx, len(cdf) - 1)
        return self.origin + self.h * idx

    def lattice(self, length: int) -> "LatticePmf":
        """Same law on ``length`` cells: zero-padded, or truncated with lumping."""
        n = len(self.masses)
        if length == n:
            return self
        if length > n:
            if self.residual:
                raise ValueError("cannot pad a lattice law whose last cell holds a lumped "
                                 "residual; rediscretize on the longer grid")
            m = np.concatenate([self.masses, np.zeros(length - n)])
            return LatticePmf(self.h, m, self.origin)
        m = np.array(self.masses[:length])
        extra = math.fsum(self.masses[length:])
        m[-1] += extra
        return LatticePmf(self.h, m, self.origin, min(extra, m[-1]))

    def spec(self):
        return {"family": self.family, "h": self.h, "origin": self.origin,
                "masses": [float(v) for v in self.masses], "residual": self.residual}

    @classmethod
    def from_csv(cls, path, h: float = 1.0, origin: float = 0.0) -> "LatticePmf":
        """Read ``index,mass`` rows (header optional, ``#`` comments ignored)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((int(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        if not rows:
            raise ValueError(f"{path}: no (index, mass) rows")
        n = max(i for i, _ in rows) + 1
        m = np.zeros(n)
        for i, v in rows:
            if i < 0:
                raise ValueError(f"{path}: negative lattice index {i}")
            m[i] += v
        return cls(h, m, origin)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# h={self.h!r} origin={self.origin!r} residual={self.residual!r}\n")
            w = csv.writer(fh)
            w.writerow(["index", "mass"])
            for i, v in enumerate(self.masses):
                w.writerow([i, repr(float(v))])


def point_mass(at: float = 1.0, h: float = 1.0) -> LatticePmf:
    """Degenerate law at a nonnegative lattice point ``at``."""
    k = int(round(at / h))
    m = np.zeros(k + 1)
    m[k] = 1.0
    return LatticePmf(h, m)


@dataclass(frozen=True)
class ShiftedBy(SeverityModel):
    """Law of ``X + c`` where ``X`` follows ``inner``."""

    c: float
    inner: SeverityModel
    family = "shifted"

    def tail(self, x):
        return self.inner.tail(np.asarray(x, dtype=float) - self.c)

    def mean(self):
        return self.inner.mean() + self.c

    def plus_moment(self, r):
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        if math.isinf(self.inner.plus_moment(r)):
            return math.inf
        if isinstance(self.inner, LatticePmf):
            pos = self.inner.positions + self.c
            return math.fsum(np.maximum(pos, 0.0) ** r * self.inner.masses)
        return self._plus_moment_quad(r)

    def support_min(self):
        return self.inner.support_min() + self.c

    def sample(self, rng, size=None):
        return self.inner.sample(rng, size) + self.c

    def lattice_tail_sum(self, z0, h):
        return self.inner.lattice_tail_sum(z0 - self.c, h)

    def atoms(self, n_max=None):
        if not isinstance(self.inner, LatticePmf):
            raise NotImplementedError("only shifted finite lattice laws are atomic")
        v, p = self.inner.atoms(n_max)
        return v + self.c, p

    def spec(self):
        return {"family": self.family, "c": self.c, "inner": self.inner.spec()}


@dataclass(frozen=True)
class Discretized(SeverityModel):
    """Exact lattice rounding of ``inner`` on the infinite grid ``origin + k h``.

    The cells are ``(z_{k-1}, z_k]``; ``up`` puts a cell's mass on its right
    end, ``down`` on its left end and ``midpoint`` in the middle, so the three
    versions differ by a constant shift.  The first cell is ``(-inf, origin]``.
    Tails and means are analytic, so ratios built on this model carry no
    truncation artefacts; :meth:`lattice` gives a finite :class:`LatticePmf`.
    """

    inner: SeverityModel
    h: float = 1.0
    origin: float = 0.0
    rounding: str = "up"
    family = "discretized"

    def __post_init__(self):
        if self.rounding not in ROUNDINGS:
            raise ValueError(f"rounding must be one of {ROUNDINGS}")
        if not self.h > 0:
            raise ValueError("lattice step must be positive")

    @property
    def offset(self) -> float:
        return {"up": 0.0, "down": -self.h, "midpoint": -0.5 * self.h}[self.rounding]

    @property
    def lattice_origin(self) -> float:
        return self.origin + self.offset

    def _up_tail(self, y):
        # P(X_up > y) = P(X > z0 + h floor((y - z0)/h)) for y >= z0
        y = np.asarray(y, dtype=float)
        k = lattice_floor((y - self.origin) / self.h)
        z = self.origin + self.h * np.maximum(k, 0.0)
        return np.where(y < self.origin, 1.0, np.asarray(self.inner.tail(z), dtype=float))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self._up_tail(x - self.offset))

    def _atomic_moment(self, power):
        """``E (X_d^+)^power`` for atomic inner laws, or None."""
        try:
            v, p = self.inner.atoms()
        except NotImplementedError:
            return None
        k = np.maximum(np.ceil((v - self.origin) / self.h - _SNAP), 0.0)
        pos = np.maximum(self.origin + self.h * k + self.offset, 0.0)
        # far atoms are so large that rounding them is immaterial
        rest = self.inner.atom_tail_moment(power, len(v))
        return math.fsum(pos ** power * p) + rest

    def mean(self):
        if self.lattice_origin >= 0:
            at = self._atomic_moment(1.0)
            if at is not None:
                return at
        s = self.inner.lattice_tail_sum(self.origin, self.h)
        if math.isinf(s):
            return math.inf
        # E X_up = z0 + h sum_k P(X_up > z_k), valid because X_up >= z0
        return self.origin + self.h * s + self.offset

    def plus_moment(self, r):
        if not r > 1:
            raise ValueError("plus_moment needs r > 1")
        if math.isinf(self.inner.plus_moment(r)):
            return math.inf
        at = self._atomic_moment(r)
        if at is not None:
            return at
        return self._lattice_moment_series(r)

    def _lattice_moment_series(self, r, k_direct=200_000):
        # summation by parts over the lattice, integral estimate for the far tail
        z = self.lattice_origin + self.h * np.arange(k_direct + 1)
        zp = np.maximum(z, 0.0) ** r
        ge = self.tail(z[:-1])  # P(X_d >= z_k) = P(X_d > z_{k-1})
        head = zp[0]
        body = math.fsum((zp[1:] - zp[:-1]) * ge)
        return head + body + self.inner.tail_moment_integral(r, max(z[-1], 0.0))

    def plus_mean(self):
        if self.lattice_origin >= 0:
            return self.mean()
        return super().plus_mean()

    def is_nonnegative(self):
        return self.lattice_origin >= 0 or float(self.tail(-1e-9)) >= 1.0 - 1e-15

    def support_min(self):
        s = self.inner.support_min()
        k = max(math.ceil((s - self.origin) / self.h - _SNAP), 0)
        return self.origin + k * self.h + self.offset

    def sample(self, rng, size=None):
        x = np.asarray(self.inner.sample(rng, size), dtype=float)
        k = np.maximum(np.ceil((x - self.origin) / self.h - _SNAP), 0.0)
        out = self.origin + self.h * k + self.offset
        return out if out.ndim else float(out)

    def lattice(self, length: int, max_residual: Optional[float] = None) -> LatticePmf:
        grid = LatticeGrid(self.h, self.origin, length)
        return discretize(self.inner, grid, self.rounding, max_residual=max_residual)

    def lattice_tail_sum(self, z0, h):
        raise NotImplementedError("nested discretization is not supported")

    def spec(self):
        return {"family": self.family, "h": self.h, "origin": self.origin,
                "rounding": self.rounding, "inner": self.inner.spec()}


class GridTooShort(ValueError):
    """Raised when a discretization grid leaves more tail mass than allowed."""

    def __init__(self, residual, allowed, grid):
        self.residual = residual
        self.allowed = allowed
        super().__init__(
            f"lattice of {grid.length} cells (end {grid.end:g}) leaves residual tail "
            f"mass {residual:.3e} > allowed {allowed:.1e}; lengthen the grid")


def discretize(model: SeverityModel, grid: LatticeGrid, rounding: str = "up",
               max_residual: Optional[float] = None) -> LatticePmf:
    """Round ``model`` onto ``grid``.

    Cell ``k`` is ``(z_{k-1}, z_k]`` (cell 0 is ``(-inf, z_0]``).  Mass beyond
    the last grid point is lumped into the last cell and recorded as
    ``residual``; if ``max_residual`` is given and exceeded, :class:`GridTooShort`
    is raised instead.  ``up`` rounding dominates the original law
    stochastically and ``down`` is dominated by it (away from the lumped cell).
    """
    if rounding not in ROUNDINGS:
        raise ValueError(f"rounding must be one of {ROUNDINGS}")
    z = grid.points
    tails = np.asarray(model.tail(z), dtype=float)
    masses = np.empty_like(tails)
    masses[0] = 1.0 - tails[0]
    masses[1:] = tails[:-1] - tails[1:]
    masses = np.maximum(masses, 0.0)
    residual = float(tails[-1])
    if max_residual is not None and residual > max_residual:
        raise GridTooShort(residual, max_residual, grid)
    if residual > 1e-10:
        logger.info("discretize: residual tail %.3e lumped into last cell", residual)
    masses[-1] += residual
    masses /= math.fsum(masses)
    offset = {"up": 0.0, "down": -grid.h, "midpoint": -0.5 * grid.h}[rounding]
    return LatticePmf(grid.h, masses, grid.origin + offset, min(residual, masses[-1]))


def almost_decreasing_constant(model: SeverityModel, window: DeltaWindow, x0: float,
                               probe_grid) -> float:
    """Grid estimate of ``sup_x sup_{u >= x} F(u + Delta) / F(x + Delta)``.

    Both suprema run over ``probe_grid`` points ``>= x0``.  Returns exactly 1.0
    when ``F(. + Delta)`` is nonincreasing on the grid.
    """
    grid = np.asarray(probe_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("probe grid is empty")
    if np.any(grid < x0):
        raise ValueError("probe grid points must be >= x0")
    return almost_decreasing_constant_values(np.asarray(model.interval_prob(np.sort(grid), window)))


def almost_decreasing_constant_values(values) -> float:
    """Same as :func:`almost_decreasing_constant` for a tabulated sequence."""
    g = np.asarray(values, dtype=float)
    if np.any(g <= 0):
        raise ValueError("interval probability vanishes on the probe grid "
                         "(window beyond the support)")
    rev_max = np.maximum.accumulate(g[::-1])[::-1]
    return float(np.max(rev_max / g))


def severity_from_spec(spec: dict) -> SeverityModel:
    """Build a severity model from its ``spec()`` dictionary (config files use the same keys)."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family == "pareto":
        return Pareto(float(spec["alpha"]), float(spec.get("xm", 1.0)))
    if family == "step_pareto":
        return StepPareto(float(spec.get("alpha", 1.0)), int(spec.get("steps_per_octave", 1)))
    if family == "lattice":
        if "csv" in spec:
            return LatticePmf.from_csv(spec["csv"], float(spec.get("h", 1.0)),
                                       float(spec.get("origin", 0.0)))
        return LatticePmf(float(spec.get("h", 1.0)), np.asarray(spec["masses"], dtype=float),
                          float(spec.get("origin", 0.0)), float(spec.get("residual", 0.0)))
    if family == "point_mass":
        return point_mass(float(spec.get("at", 1.0)), float(spec.get("h", 1.0)))
    if family == "shifted":
        return ShiftedBy(float(spec["c"]), severity_from_spec(spec["inner"]))
    if family == "discretized":
        return Discretized(severity_from_spec(spec["inner"]), float(spec.get("h", 1.0)),
                           float(spec.get("origin", 0.0)), spec.get("rounding", "up"))
    raise ValueError(f"unknown severity family {family!r}")
