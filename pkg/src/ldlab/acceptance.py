"""Acceptance suite: criteria 1 to 11, each at its stated tolerance."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .bounds import (
    NuViolation,
    corollary31_ratio_scan,
    default_x_grid,
    lemma41_sweep,
    lemma42_ratio_scan,
    theorem31_ratio_scan,
    theorem32_ratio_scan,
    trend_nonincreasing,
)
from .compound import Poisson, convolution_pmf, count_from_spec, panjer_pmf
from .config import load_config, shipped_config
from .counting import HomPoisson, check_condition_31, check_condition_32, counting_from_spec
from .distributions import DeltaWindow, Discretized, LatticePmf, Pareto, StepPareto
from .indices import (
    certify_potter,
    check_lemma44,
    estimate_local_indices,
    estimate_matuszewska,
    log_grid,
    severity_function,
)
from .montecarlo import (
    CompoundPoissonPremium,
    DeterministicLinear,
    RiskModelSpec,
    estimate_centered_interval,
)
from .harness import INDEX_DEFAULTS, _local_grid_density

WINDOWS = (DeltaWindow(math.inf), DeltaWindow(1.0))
T31_T = (50.0, 100.0, 200.0)
TREND_SLACK = 0.05
FINAL_RANGE = (0.5, 1.5)


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    detail: str
    elapsed: float
    limit: Optional[float] = None

    def line(self) -> str:
        lim = f" (limit {self.limit:g}s)" if self.limit else ""
        return (f"criterion {self.id:>2} {'PASS' if self.passed else 'FAIL'}: {self.title} "
                f"[{self.elapsed:.2f}s{lim}] {self.detail}")

    def as_dict(self):
        return asdict(self)


def pareto2():
    return Discretized(Pareto(2.0), 1.0)


def _timed(fn, cid, title, limit=None):
    t0 = time.perf_counter()
    ok, detail = fn()
    el = time.perf_counter() - t0
    if limit is not None and el > limit:
        ok = False
        detail += f"; runtime {el:.1f}s over limit"
    return CriterionResult(cid, title, bool(ok), detail, el, limit)


def _in_range(rep, lo=FINAL_RANGE[0], hi=FINAL_RANGE[1]):
    return lo <= rep.inf_ratio and rep.sup_ratio <= hi


# ---------------------------------------------------------------- 1, 2: oracles

def c1_oracle_suite():
    cfg = load_config(shipped_config("oracle_suite"))
    cases = cfg["panjer"]["cases"]
    diffs = []
    for case in cases:
        count = count_from_spec(case["count"])
        sev = LatticePmf(1.0, np.asarray(case["severity"]["masses"], dtype=float))
        k = int(cfg["panjer"]["k_max"])
        a = panjer_pmf(count, sev, k)
        b = convolution_pmf(count, sev, k)
        diffs.append(float(np.max(np.abs(a.masses - b.masses))))
    ok = len(cases) >= 5 and max(diffs) <= 1e-10
    return ok, f"{len(cases)} cases, max entrywise diff {max(diffs):.2e} (tol 1e-10)"


def brute_force_g(lam, k_max, n_max=40):
    """``P(S = k)`` for severity {1: 1/2, 2: 1/2}: ``S_n = n + Binomial(n, 1/2)``."""
    g = [0.0] * (k_max + 1)
    for n in range(n_max + 1):
        pn = math.exp(-lam) * lam ** n / math.factorial(n)
        for j in range(n + 1):
            k = n + j
            if k <= k_max:
                g[k] += pn * math.comb(n, j) * 0.5 ** n
    return g


def c2_hand_values():
    sev = LatticePmf(1.0, np.array([0.0, 0.5, 0.5]))
    g = panjer_pmf(Poisson(2.0), sev, 10).masses
    want = [math.exp(-2), math.exp(-2), 1.5 * math.exp(-2)]
    bf = brute_force_g(2.0, 2)
    err = max(abs(g[i] - want[i]) for i in range(3))
    err_bf = max(abs(bf[i] - want[i]) for i in range(3))
    return err <= 1e-12 and err_bf <= 1e-12, f"max |g_k - closed form| = {err:.1e} (tol 1e-12)"


# ---------------------------------------------------------------- 3, 4: fixed n

def c3_truncation_bound():
    sweep = lemma41_sweep(pareto2(), WINDOWS, [0.5, 1.0], n_max=50, x_max=1e3)
    return sweep.violations == 0, f"{len(sweep.rows)} (v, T, n, x) points, " \
                                  f"{sweep.violations} violations"


def c4_fixed_n_trend():
    sev = pareto2()
    ok, parts = True, []
    for w in WINDOWS:
        reps = [lemma42_ratio_scan(sev, w, n, 1.0, default_x_grid(1.0, n)) for n in (10, 20, 40)]
        devs = [r.max_deviation() for r in reps]
        good = trend_nonincreasing(devs, TREND_SLACK) and _in_range(reps[-1])
        ok &= good
        parts.append(f"T={w.spec()}: dev {', '.join(f'{d:.3f}' for d in devs)}, final "
                     f"[{reps[-1].inf_ratio:.3f}, {reps[-1].sup_ratio:.3f}]")
    return ok, "; ".join(parts)


# ---------------------------------------------------------------- 5 to 8: ratio scans

def t31_scans(window, mode="exact", **kw):
    sev = pareto2()
    return [theorem31_ratio_scan(sev, HomPoisson(1.0), t, 1.0, window, mode=mode,
                                 x_grid=default_x_grid(1.0, t), **kw) for t in T31_T]


def c5_theorem31():
    ok, parts = True, []
    for w in WINDOWS:
        reps = t31_scans(w)
        devs = [r.max_deviation() for r in reps]
        trend = trend_nonincreasing(devs, TREND_SLACK)
        final = _in_range(reps[-1])
        ok &= trend and final
        parts.append(f"T={w.spec()}: dev {', '.join(f'{d:.3f}' for d in devs)} "
                     f"({'nonincreasing' if trend else 'NOT nonincreasing'}), final "
                     f"[{reps[-1].inf_ratio:.3f}, {reps[-1].sup_ratio:.3f}]"
                     f"{'' if final else ' outside [0.5, 1.5]'}")
    return ok, "; ".join(parts)


def measured_step_local(sev):
    eps = INDEX_DEFAULTS["eps"]
    x = log_grid(10.0, 1e5, _local_grid_density(eps))
    l, L, _ = estimate_local_indices(severity_function(sev, WINDOWS[0]), eps, x)
    return l, L


def c6_step_pareto():
    sev = Discretized(StepPareto(2.0, 2), 1.0)
    l, L = measured_step_local(sev)
    close = abs(l / 0.5 - 1) <= 0.1 and abs(L / 2.0 - 1) <= 0.1
    rep = theorem31_ratio_scan(sev, HomPoisson(1.0), 200.0, 1.0, WINDOWS[0],
                               x_grid=default_x_grid(1.0, 200.0), l_L=(l, L))
    ok = close and rep.sup_ratio <= L ** 2 * 1.25 and rep.inf_ratio >= l ** 2 * 0.75
    return ok, (f"measured (l, L) = ({l:.3f}, {L:.3f}); ratios [{rep.inf_ratio:.3f}, "
                f"{rep.sup_ratio:.3f}] vs [{l ** 2 * 0.75:.3f}, {L ** 2 * 1.25:.3f}]")


def _scan_arrays(rep):
    return json.dumps([rep.x_grid, rep.numerators, rep.denominators, rep.ratios, rep.stderr])


def c7_corollary():
    sev = pareto2()
    lam = 200.0
    x = default_x_grid(1.0, lam)
    ident = True
    for w in WINDOWS:
        a = theorem31_ratio_scan(sev, HomPoisson(1.0), lam, 1.0, w, x_grid=x)
        b = corollary31_ratio_scan(sev, 0.0, HomPoisson(1.0), lam, 1.0, w, x_grid=x)
        ident &= _scan_arrays(a) == _scan_arrays(b)
    # same seed and grid in mc mode
    a = theorem31_ratio_scan(sev, HomPoisson(1.0), lam, 1.0, WINDOWS[0], mode="mc",
                             n_samples=20_000, seed=3, x_grid=x)
    b = corollary31_ratio_scan(sev, 0.0, HomPoisson(1.0), lam, 1.0, WINDOWS[0], mode="mc",
                               n_samples=20_000, seed=3, x_grid=x)
    ident &= _scan_arrays(a) == _scan_arrays(b)
    c = -sev.mean()
    bands, parts = True, []
    for w in WINDOWS:
        rep = corollary31_ratio_scan(sev, c, HomPoisson(1.0), lam, 1.0, w, x_grid=x)
        bands &= rep.passed
        parts.append(f"T={w.spec()} [{rep.inf_ratio:.4f}, {rep.sup_ratio:.4f}] {rep.verdict}")
    return ident and bands, (f"c=0 arrays identical: {ident}; c={c:.4f}: " + "; ".join(parts))


def c8_surplus():
    sev = pareto2()
    lam = 200.0
    x = default_x_grid(1.0, lam)
    diff = 0.0
    for w in WINDOWS:
        a = theorem31_ratio_scan(sev, HomPoisson(1.0), lam, 1.0, w, x_grid=x)
        spec = RiskModelSpec(sev, HomPoisson(1.0), DeterministicLinear(0.5), lam)
        b = theorem32_ratio_scan(spec, 1.0, w, x_grid=x)
        diff = max(diff, float(np.max(np.abs(np.subtract(a.numerators, b.numerators)))))
    prem = CompoundPoissonPremium(0.5, LatticePmf(1.0, np.array([0.0, 1.0])))
    spec = RiskModelSpec(sev, HomPoisson(1.0), prem, lam)
    try:
        theorem32_ratio_scan(spec, 0.4, WINDOWS[0], x_grid=x)
        rejects = False
    except NuViolation:
        rejects = True
    bands, parts = True, []
    for w in WINDOWS:
        rep = theorem32_ratio_scan(spec, 1.0, w, x_grid=x)
        bands &= rep.passed
        parts.append(f"T={w.spec()} [{rep.inf_ratio:.3f}, {rep.sup_ratio:.3f}] "
                     f"vs [0.75, 1.25] {rep.verdict}")
    ok = diff < 1e-12 and rejects and bands
    return ok, (f"deterministic premium numerator diff {diff:.1e}; gamma <= nu rejected: "
                f"{rejects}; compound premium gamma=1: " + "; ".join(parts))


# ---------------------------------------------------------------- 9: conditions

def c9_conditions():
    t_grid = [10.0, 20.0, 40.0, 80.0, 160.0]
    hp = HomPoisson(1.0)
    sev = pareto2()
    reps = [check_condition_31(hp, 2.0, d, t_grid) for d in (0.3, 0.5)]
    reps += [check_condition_32(hp, sev, w, d, t_grid) for d in (0.3, 0.5) for w in WINDOWS]
    poisson_ok = all(r.passed for r in reps)
    heavy_cfg = load_config(shipped_config("conditions_heavy_mixing"))
    heavy = check_condition_31(counting_from_spec(heavy_cfg["counting"]), 2.0, 0.3, t_grid)
    return poisson_ok and not heavy.passed, (
        f"HomPoisson: {sum(r.passed for r in reps)}/{len(reps)} reports pass; heavy mixing "
        f"C31 verdict {heavy.verdict} (converged {heavy.details['converged']})")


# ---------------------------------------------------------------- 10: mc vs exact

def c10_mc_coherence(n_samples=1_000_000, seed=20240601):
    sev = pareto2()
    hits = total = 0
    for w in WINDOWS:
        for t in T31_T:
            x = default_x_grid(1.0, t)
            exact = theorem31_ratio_scan(sev, HomPoisson(1.0), t, 1.0, w, x_grid=x).numerators
            est = estimate_centered_interval(sev, HomPoisson(1.0), t, x, w, n_samples, seed)
            for e, p in zip(est, exact):
                sigma = max(e.stderr, math.sqrt(p * (1 - p) / n_samples))
                hits += abs(e.estimate - p) <= 4 * sigma
                total += 1
    frac = hits / total
    x = default_x_grid(1.0, 200.0)
    a = estimate_centered_interval(sev, HomPoisson(1.0), 200.0, x, WINDOWS[0], n_samples, seed)
    b = estimate_centered_interval(sev, HomPoisson(1.0), 200.0, x, WINDOWS[0], n_samples, seed,
                                   workers=2)
    same = [e.estimate for e in a] == [e.estimate for e in b] and \
        [e.stderr for e in a] == [e.stderr for e in b]
    return frac >= 0.95 and same, (f"{hits}/{total} grid points within 4 sigma ({frac:.1%}); "
                                   f"re-run with same seed (2 workers) identical: {same}")


# ---------------------------------------------------------------- 11: index suite

def c11_index_suite():
    msgs, ok = [], True
    f = severity_function(Pareto(2.0), WINDOWS[0])
    x = np.geomspace(10.0, 1e6, 200)
    a, b = estimate_matuszewska(f, x)
    eps = INDEX_DEFAULTS["eps"]
    l, L, _ = estimate_local_indices(f, eps, log_grid(10.0, 1e6, _local_grid_density(eps)))
    good = abs(a + 2) <= 0.05 and abs(b + 2) <= 0.05 and abs(l - 1) <= 0.02 and abs(L - 1) <= 0.02
    ok &= good
    msgs.append(f"Pareto ({a:.3f}, {b:.3f}, {l:.3f}, {L:.3f})")
    step = severity_function(StepPareto(1.0, 1), WINDOWS[0])
    sl, sL, _ = estimate_local_indices(step, eps, log_grid(10.0, 1e4, _local_grid_density(eps)))
    good = abs(sl / 0.5 - 1) <= 0.1 and abs(sL / 2.0 - 1) <= 0.1
    ok &= good
    msgs.append(f"StepPareto local ({sl:.3f}, {sL:.3f})")
    n_cert = n_valid = 0
    for name in ("indices_pareto", "indices_step_pareto", "indices_discretized_pareto"):
        cfg = load_config(shipped_config(name))
        sec = {**INDEX_DEFAULTS, **cfg["indices"]}
        xg = log_grid(sec["x_min"], sec["x_max"], int(sec["per_decade"]))
        yg = np.geomspace(*sec["potter_y"][:2], int(sec["potter_y"][2]))
        fn = severity_function(cfg.severity, cfg.windows[0])
        for item in sec["potter"]:
            n_cert += 1
            n_valid += certify_potter(fn, item["alpha"], xg, yg, item["direction"]).valid
    ok &= n_cert > 0 and n_valid == n_cert
    msgs.append(f"Potter {n_valid}/{n_cert} valid")
    x3 = log_grid(10.0, 1e4, 40)
    decay = check_lemma44(f, 3.0, x3).passed
    try:
        check_lemma44(f, 1.5, x3)
        rejects = False
    except ValueError:
        rejects = True
    ok &= decay and rejects
    msgs.append(f"decay p=3 {'pass' if decay else 'fail'}, p=1.5 rejected: {rejects}")
    return ok, "; ".join(msgs)


CRITERIA = {
    1: ("Panjer vs convolution oracle suite", c1_oracle_suite, 5.0),
    2: ("hand-derived g0, g1, g2", c2_hand_values, None),
    3: ("truncation bound never violated", c3_truncation_bound, 60.0),
    4: ("fixed-n ratio trend", c4_fixed_n_trend, None),
    5: ("random-sum ratios, IR severity", c5_theorem31, 120.0),
    6: ("random-sum ratios, OR but not IR severity", c6_step_pareto, None),
    7: ("shifted summands", c7_corollary, None),
    8: ("claim surplus", c8_surplus, None),
    9: ("counting condition checkers", c9_conditions, None),
    10: ("Monte Carlo vs exact coherence", c10_mc_coherence, 180.0),
    11: ("index suite", c11_index_suite, None),
}


def run_criterion(cid: int) -> CriterionResult:
    title, fn, limit = CRITERIA[cid]
    return _timed(fn, cid, title, limit)


def run_all(only=None):
    ids = sorted(CRITERIA) if not only else sorted(only)
    return [run_criterion(i) for i in ids]
