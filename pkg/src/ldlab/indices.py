"""Dilation indices, local oscillation indices and Potter-type certificates.

All limits are replaced by finite-grid proxies.  Every result carries the
grid it was computed on, so a reader can re-run or refine it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .distributions import (DeltaWindow, Discretized, Pareto, SeverityModel, StepPareto,
                            almost_decreasing_constant_values)

POTTER_LADDER = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 8.0)


def log_grid(lo: float, hi: float, per_decade: int) -> np.ndarray:
    """Log-spaced grid from ``lo`` to ``hi`` with ``per_decade`` points per decade."""
    n = int(math.ceil(per_decade * math.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, n)


def severity_function(model: SeverityModel, window: DeltaWindow) -> Callable:
    """The map ``x -> F(x + Delta)`` as a vectorized function handle."""
    def f(x):
        return np.asarray(model.interval_prob(np.asarray(x, dtype=float), window), dtype=float)
    f.__name__ = f"{model.family}_window_{window.spec()}"
    return f


@dataclass(frozen=True)
class TabulatedFunction:
    """Positive function given by samples, interpolated linearly in log-log scale."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need matching 1-d arrays with at least two samples")
        if np.any(np.diff(x) <= 0) or x[0] <= 0:
            raise ValueError("abscissae must be positive and strictly increasing")
        if np.any(y <= 0):
            raise ValueError("tabulated values must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < self.x[0] * (1 - 1e-12)) or np.any(z > self.x[-1] * (1 + 1e-12)):
            raise ValueError(f"evaluation outside tabulated range [{self.x[0]:g}, {self.x[-1]:g}]")
        return np.exp(np.interp(np.log(z), np.log(self.x), np.log(self.y)))

    @classmethod
    def from_csv(cls, path) -> "TabulatedFunction":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue
        if not rows:
            raise ValueError(f"{path}: no (x, f) rows")
        x, y = map(np.array, zip(*sorted(rows)))
        return cls(x, y)


def _eval_positive(f, x, what="f"):
    v = np.asarray(f(x), dtype=float)
    bad = ~(v > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"{what} must be positive on the grid; got {v[i]!r} at x={np.ravel(x)[i]:g}")
    return v


def _upper_half(x_grid):
    return x_grid[len(x_grid) // 2:]


def _grid_summary(g) -> dict:
    g = np.asarray(g, dtype=float)
    return {"min": float(g.min()), "max": float(g.max()), "n": int(g.size)}


@dataclass
class IndexEstimates:
    alpha_upper: float
    beta_lower: float
    l_local: float
    L_local: float
    method: str
    grid_spec: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


@dataclass
class PotterCertificate:
    alpha: float
    c_alpha: float
    x_alpha: float
    direction: str
    violations: list = field(default_factory=list)
    grid_spec: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.violations

    def as_dict(self):
        d = asdict(self)
        d["valid"] = self.valid
        d["violations"] = [list(v) for v in self.violations[:50]]
        d["n_violations"] = len(self.violations)
        return d


def _check_x_grid(x_grid, min_span=1e3):
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("x grid needs at least 4 points")
    if np.any(np.diff(x) <= 0) or x[0] <= 0:
        raise ValueError("x grid must be positive and increasing")
    if x[-1] / x[0] < min_span * (1 - 1e-9):
        raise ValueError(f"x grid must span a ratio of at least {min_span:g}, "
                         f"got {x[-1] / x[0]:g}")
    return x


def dilation_extremes(f, x_grid, y_grid):
    """Sup and inf over the upper half of ``x_grid`` of ``f(x y) / f(x)``, per ``y``."""
    x = _upper_half(np.asarray(x_grid, dtype=float))
    y = np.asarray(y_grid, dtype=float)
    fx = _eval_positive(f, x)
    fxy = _eval_positive(f, np.outer(x, y))
    r = fxy / fx[:, None]
    return r.max(axis=0), r.min(axis=0)


def _slope(logy, logv):
    if len(logy) == 1:
        return float(logv[0] / logy[0])
    return float(np.polyfit(logy, logv, 1)[0])


def estimate_matuszewska(f, x_grid, y_grid=(2.0, 4.0, 8.0, 16.0), return_trace=False):
    """Grid proxies ``(alpha_upper, beta_lower)`` for the Matuszewska indices.

    For every dilation ``y`` the sup and inf of ``f(xy)/f(x)`` are taken over
    the upper half of ``x_grid``; the indices are the slopes of their logs
    against ``log y`` over the larger half of ``y_grid``.  These are proxies
    for limits and carry the usual pre-asymptotic bias.
    """
    x = _check_x_grid(x_grid)
    y = np.asarray(y_grid, dtype=float)
    if y.ndim != 1 or y.size < 1 or np.any(np.diff(y) <= 0) or y[0] < 2:
        raise ValueError("y grid must be increasing and lie in [2, inf)")
    sup, inf = dilation_extremes(f, x, y)
    keep = slice(len(y) // 2 if len(y) > 1 else 0, None)
    ly = np.log(y[keep])
    a = _slope(ly, np.log(sup[keep]))
    b = _slope(ly, np.log(inf[keep]))
    a, b = _clean(a), _clean(b)
    if return_trace:
        trace = {"y": y.tolist(), "sup_ratio": sup.tolist(), "inf_ratio": inf.tolist()}
        return a, b, trace
    return a, b


def _clean(v, tol=1e-12):
    # constant functions give slopes of order 1e-17; report exact zero
    return 0.0 if abs(v) < tol else v


def _window_bounds(x_all, x, eps):
    lo = np.searchsorted(x_all, x * (1 - eps), side="left")
    hi = np.searchsorted(x_all, x * (1 + eps), side="right")
    return lo, hi


def _range_reduce(ufunc, values, lo, hi):
    # reduceat over interleaved (lo, hi) pairs; odd slots are discarded.  One
    # padding element keeps hi == len(values) a legal index.
    idx = np.empty(2 * len(lo), dtype=np.intp)
    idx[0::2] = lo
    idx[1::2] = hi
    pad = np.concatenate([values, values[-1:]])
    return ufunc.reduceat(pad, idx)[0::2]


def estimate_local_indices(f, eps_sequence=(0.1, 0.03, 0.01, 0.003, 0.001), x_grid=None,
                           min_points=20):
    """Grid proxies ``(l_local, L_local, trace)`` for the local indices.

    For each ``eps`` and each ``x`` in the upper half of ``x_grid``, ``f`` is
    compared with its min and max over the grid points of
    ``[(1-eps)x, (1+eps)x]``.  The liminf/limsup proxies are the min/max of
    those ratios; the values at the smallest ``eps`` are returned and the
    per-eps trace is kept.
    """
    if x_grid is None:
        raise ValueError("x_grid is required")
    x_all = np.asarray(x_grid, dtype=float)
    if x_all.ndim != 1 or np.any(np.diff(x_all) <= 0) or x_all[0] <= 0:
        raise ValueError("x grid must be positive and increasing")
    eps = np.asarray(eps_sequence, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(eps >= 1) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps sequence must be strictly decreasing inside (0, 1)")
    fv = _eval_positive(f, x_all)
    start = len(x_all) // 2
    x = x_all[start:]
    fx = fv[start:]
    for e, need in ((eps[0], min_points), (eps[-1], 3)):
        lo, hi = _window_bounds(x_all, x, e)
        if np.min(hi - lo) < need:
            # the top grid point only sees the lower half of its window
            per_decade = math.ceil(2 * (need - 1) / math.log10((1 + e) / (1 - e)))
            raise ValueError(
                f"x grid too sparse: windows for eps={e:g} need >= {need} grid points; "
                f"use a log-spaced grid with at least {per_decade} points per decade")
    trace = {"eps": eps.tolist(), "l": [], "L": []}
    for e in eps:
        lo, hi = _window_bounds(x_all, x, e)
        wmin = _range_reduce(np.minimum, fv, lo, hi)
        wmax = _range_reduce(np.maximum, fv, lo, hi)
        trace["l"].append(float(np.min(wmin / fx)))
        trace["L"].append(float(np.max(wmax / fx)))
    return trace["l"][-1], trace["L"][-1], trace


def estimate_indices(f, x_grid, y_grid=(2.0, 4.0, 8.0, 16.0),
                     eps_sequence=(0.1, 0.03, 0.01, 0.003, 0.001), local_x_grid=None):
    """All four grid estimates bundled with their grid description."""
    a, b, mtrace = estimate_matuszewska(f, x_grid, y_grid, return_trace=True)
    lx = x_grid if local_x_grid is None else local_x_grid
    l, L, ltrace = estimate_local_indices(f, eps_sequence, lx)
    spec = {"x_grid": _grid_summary(x_grid), "y_grid": [float(v) for v in y_grid],
            "eps_sequence": [float(e) for e in eps_sequence],
            "local_x_grid": _grid_summary(lx),
            "proxy": "upper half of x grid; slopes over the larger half of y grid"}
    return IndexEstimates(a, b, l, L, "grid", spec, {"matuszewska": mtrace, "local": ltrace})


def certify_potter(f, alpha: float, x_grid, y_grid, direction: str = "upper",
                   ladder=POTTER_LADDER) -> PotterCertificate:
    """Search a Potter-type certificate on the grid.

    Upper: ``f(xy)/f(x) <= c y^alpha``; lower: ``f(xy)/f(x) >= y^alpha / c``,
    for all grid ``x >= x_alpha`` and ``y >= 1``.  ``c`` is the first ladder
    value that admits some ``x_alpha`` no larger than the grid median;
    ``x_alpha`` is then the smallest admissible grid point.  When no ladder
    value works the certificate lists the violations at the largest ``c``.
    """
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    x = np.asarray(x_grid, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    if np.any(np.diff(x) <= 0) or x[0] <= 0:
        raise ValueError("x grid must be positive and increasing")
    if np.any(y < 1):
        raise ValueError("Potter bounds need y >= 1")
    fx = _eval_positive(f, x)
    r = _eval_positive(f, np.outer(x, y)) / fx[:, None]
    ya = y[None, :] ** alpha
    median_idx = (len(x) - 1) // 2
    spec = {"x_grid": _grid_summary(x), "y_grid": _grid_summary(y), "ladder": list(ladder)}
    for c in sorted(ladder):
        bad = r > c * ya * (1 + 1e-12) if direction == "upper" else r < ya / c * (1 - 1e-12)
        bad_rows = np.flatnonzero(bad.any(axis=1))
        first_ok = 0 if bad_rows.size == 0 else bad_rows[-1] + 1
        if first_ok <= median_idx:
            return PotterCertificate(alpha, c if direction == "upper" else 1.0 / c,
                                     float(x[first_ok]), direction, [], spec)
    c = max(ladder)
    bad = r > c * ya * (1 + 1e-12) if direction == "upper" else r < ya / c * (1 - 1e-12)
    bad[:median_idx] = False
    ii, jj = np.nonzero(bad)
    viol = [(float(x[i]), float(y[j])) for i, j in zip(ii, jj)]
    return PotterCertificate(alpha, c if direction == "upper" else 1.0 / c,
                             float(x[median_idx]), direction, viol, spec)


@dataclass
class Lemma44Report:
    p: float
    beta_lower: float
    x: list
    ratios: list
    almost_decreasing: float
    first_over_last: float
    passed: bool

    def as_dict(self):
        return asdict(self)


def check_lemma44(f, p: float, x_grid, beta_lower: Optional[float] = None) -> Lemma44Report:
    """Check that ``x^(-p) / f(x)`` decays on the grid (last < first / 10).

    Rejects ``p <= |beta_lower|``; the lower index is estimated on the grid
    when not supplied.
    """
    x = _check_x_grid(x_grid)
    if beta_lower is None:
        _, beta_lower = estimate_matuszewska(f, x)
    if p <= abs(beta_lower):
        raise ValueError(f"need p > |beta| = {abs(beta_lower):.4g}, got p = {p:g}")
    fx = _eval_positive(f, x)
    ratios = x ** (-p) / fx
    ad = almost_decreasing_constant_values(fx)
    passed = bool(ratios[-1] < ratios[0] / 10)
    return Lemma44Report(float(p), float(beta_lower), x.tolist(), ratios.tolist(), ad,
                         float(ratios[0] / ratios[-1]), passed)


@dataclass
class ClassFlags:
    OR: bool
    L: bool
    IR: bool
    shift_ratio_range: tuple

    def as_dict(self):
        return asdict(self)


def class_flags(f, estimates: IndexEstimates, x_grid, shift: float = 1.0,
                tol: float = 0.05, bound: float = 50.0) -> ClassFlags:
    """Membership proxies for the OR, L and IR classes.

    OR: both dilation indices finite and below ``bound`` in size.
    L: ``f(x + shift) / f(x)`` within ``tol`` of 1 on the upper half of the grid.
    IR: local indices within ``tol`` of each other; only reported together
    with OR and L, which it implies.
    """
    is_or = bool(np.isfinite(estimates.alpha_upper) and np.isfinite(estimates.beta_lower)
                 and abs(estimates.alpha_upper) < bound and abs(estimates.beta_lower) < bound)
    x = _upper_half(np.asarray(x_grid, dtype=float))
    rr = _eval_positive(f, x + shift) / _eval_positive(f, x)
    is_l = bool(np.all(np.abs(rr - 1) <= tol))
    ir_local = abs(estimates.L_local - estimates.l_local) <= tol
    return ClassFlags(is_or, is_l, bool(ir_local and is_or and is_l),
                      (float(rr.min()), float(rr.max())))


def analytic_indices(model: SeverityModel, window: DeltaWindow) -> IndexEstimates:
    """Closed-form indices of ``x -> F(x + Delta)`` for the families that have them."""
    inner = model.inner if isinstance(model, Discretized) else model
    spec = {"family": model.family, "window": window.spec()}
    if isinstance(inner, Pareto):
        a = -inner.alpha if not window.finite else -inner.alpha - 1.0
        return IndexEstimates(a, a, 1.0, 1.0, "analytic", spec)
    if isinstance(inner, StepPareto) and not window.finite:
        j = inner.jump
        a = -inner.alpha
        return IndexEstimates(a, a, 1.0 / j, j, "analytic", spec)
    raise NotImplementedError(f"no closed-form indices for {model.family} with window {window}")
