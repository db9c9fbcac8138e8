"""Experiment stages behind the command line: each returns its artifacts and verdicts."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (
    _jsonable,
    corollary31_ratio_scan,
    lemma41_sweep,
    lemma42_ratio_scan,
    theorem31_ratio_scan,
    theorem32_ratio_scan,
    trend_nonincreasing,
    default_x_grid,
    write_ratio_csv,
)
from .compound import compound_for, convolution_pmf, count_from_spec, panjer_pmf
from .config import ExperimentConfig
from .counting import check_condition_31, check_condition_32, verify_lemma43
from .distributions import Discretized, LatticePmf, severity_from_spec
from .indices import (
    analytic_indices,
    certify_potter,
    check_lemma44,
    class_flags,
    estimate_indices,
    log_grid,
    severity_function,
)
from .montecarlo import CHUNK, RiskModelSpec, check_premium_lln, chunk_plan

logger = logging.getLogger(__name__)

OUTPUT_ENV = "LDLAB_OUTPUT_DIR"
STAGES = ("indices", "conditions", "panjer", "scan", "bounds")

INDEX_DEFAULTS = {"x_min": 10.0, "x_max": 1e5, "per_decade": 50, "y_grid": [2.0, 4.0, 8.0, 16.0],
                  "eps": [0.1, 0.03, 0.01, 0.003, 0.001], "local_per_decade": None,
                  "potter_y": [1.0, 100.0, 41], "decay_p": None, "expect": None,
                  "expect_tol": [0.05, 0.05, 0.02, 0.02], "potter": []}
CONDITION_DEFAULTS = {"p": 2.0, "deltas": [0.3, 0.5], "t_grid": [10.0, 20.0, 40.0, 80.0, 160.0],
                      "checks": ["C31", "C32", "xi"], "eps": 0.3, "xi_delta": 0.5,
                      "premium_n_samples": 100_000}
BOUND_DEFAULTS = {"v": [0.5, 1.0], "n_max": 50, "x_max": 1e3}
PANJER_CASE_TOL = 1e-10


@dataclass
class StageResult:
    stage: str
    files: dict = field(default_factory=dict)  # name -> path
    verdicts: list = field(default_factory=list)  # (label, verdict)
    resolved: dict = field(default_factory=dict)  # defaulted parameters actually used
    payload: dict = field(default_factory=dict)

    def ok(self) -> bool:
        return all(v in ("PASS", "pass", "NA") for _, v in self.verdicts)


def output_dir(cfg: ExperimentConfig, out=None) -> Path:
    if out is not None:
        d = Path(out)
    else:
        d = Path(os.environ.get(OUTPUT_ENV, "ldlab-out")) / cfg["name"]
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump(obj, path: Path):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _section(cfg, name, defaults):
    given = cfg[name] or {}
    return {**defaults, **given}


def _local_grid_density(eps, need_wide=20, need_narrow=3):
    e_wide, e_narrow = max(eps), min(eps)
    return max(math.ceil(2 * (need_wide - 1) / math.log10((1 + e_wide) / (1 - e_wide))),
               math.ceil(2 * (need_narrow - 1) / math.log10((1 + e_narrow) / (1 - e_narrow))))


# ---------------------------------------------------------------- indices

def run_indices(cfg: ExperimentConfig, out: Path) -> StageResult:
    sec = _section(cfg, "indices", INDEX_DEFAULTS)
    sev = cfg.severity
    x = log_grid(sec["x_min"], sec["x_max"], int(sec["per_decade"]))
    eps = [float(e) for e in sec["eps"]]
    lpd = sec["local_per_decade"] or _local_grid_density(eps)
    sec["local_per_decade"] = lpd
    lx = log_grid(sec["x_min"], sec["x_max"], int(lpd))
    py = np.geomspace(float(sec["potter_y"][0]), float(sec["potter_y"][1]),
                      int(sec["potter_y"][2]))
    res = StageResult("indices", resolved=sec)
    windows = []
    for w in cfg.windows:
        f = severity_function(sev, w)
        est = estimate_indices(f, x, sec["y_grid"], eps, lx)
        entry = {"T": w.spec(), "estimates": est.as_dict(),
                 "flags": class_flags(f, est, x, shift=getattr(sev, "h", 1.0)).as_dict()}
        try:
            entry["analytic"] = analytic_indices(sev, w).as_dict()
        except NotImplementedError:
            entry["analytic"] = None
        if sec["expect"] is not None:
            got = [est.alpha_upper, est.beta_lower, est.l_local, est.L_local]
            ok = all(abs(g - e) <= tol for g, e, tol in zip(got, sec["expect"], sec["expect_tol"]))
            entry["expect"] = {"expected": sec["expect"], "tol": sec["expect_tol"], "got": got}
            res.verdicts.append((f"indices T={w.spec()}", "PASS" if ok else "FAIL"))
        certs = []
        for item in sec["potter"]:
            c = certify_potter(f, float(item["alpha"]), x, py, item.get("direction", "upper"))
            certs.append(c.as_dict())
            res.verdicts.append((f"potter {c.direction} alpha={c.alpha:g} T={w.spec()}",
                                 "PASS" if c.valid else "FAIL"))
        entry["potter"] = certs
        if sec["decay_p"] is not None:
            rep = check_lemma44(f, float(sec["decay_p"]), x, est.beta_lower)
            entry["decay"] = rep.as_dict()
            res.verdicts.append((f"decay p={rep.p:g} T={w.spec()}",
                                 "PASS" if rep.passed else "FAIL"))
        windows.append(entry)
    res.payload = {"schema": "ldlab.indices/1", "severity": sev.spec(), "windows": windows}
    path = out / "indices.json"
    _dump(res.payload, path)
    res.files["indices.json"] = path
    return res


def measured_local(cfg: ExperimentConfig, window) -> tuple:
    """``(l, L)`` from the grid estimators with the [indices] settings."""
    sec = _section(cfg, "indices", INDEX_DEFAULTS)
    eps = [float(e) for e in sec["eps"]]
    lx = log_grid(sec["x_min"], sec["x_max"], int(sec["local_per_decade"] or
                                                  _local_grid_density(eps)))
    from .indices import estimate_local_indices
    l, L, _ = estimate_local_indices(severity_function(cfg.severity, window), eps, lx)
    return l, L


# ---------------------------------------------------------------- conditions

def run_conditions(cfg: ExperimentConfig, out: Path) -> StageResult:
    sec = _section(cfg, "conditions", CONDITION_DEFAULTS)
    counting = cfg.counting
    sev = cfg.severity
    res = StageResult("conditions", resolved=sec)
    reports = []
    for d in sec["deltas"]:
        if "C31" in sec["checks"]:
            reports.append(check_condition_31(counting, float(sec["p"]), float(d),
                                              sec["t_grid"]))
        if "C32" in sec["checks"]:
            for w in cfg.windows:
                r = check_condition_32(counting, sev, w, float(d), sec["t_grid"])
                r.details["T"] = w.spec()
                reports.append(r)
    if "xi" in sec["checks"]:
        reports.append(verify_lemma43(counting, sec["t_grid"], float(sec["eps"]),
                                      float(sec["xi_delta"])))
    if "premium" in sec["checks"]:
        reports.append(check_premium_lln(cfg.premium, sec["t_grid"], float(sec["eps"]),
                                         int(sec["premium_n_samples"]), cfg["seed"]))
    for r in reports:
        label = f"{r.condition} delta={r.delta}" + (f" T={r.details['T']}"
                                                     if "T" in r.details else "")
        res.verdicts.append((label, r.verdict))
    res.payload = {"schema": "ldlab.conditions/1", "counting": counting.spec(),
                   "reports": [r.as_dict() for r in reports]}
    path = out / "conditions.json"
    _dump(res.payload, path)
    res.files["conditions.json"] = path
    return res


# ---------------------------------------------------------------- panjer

def _lattice(sev, k_max):
    if isinstance(sev, Discretized):
        return sev.lattice(k_max + 1)
    if isinstance(sev, LatticePmf):
        return sev
    raise ValueError("the compound oracle needs a lattice severity")


def run_panjer(cfg: ExperimentConfig, out: Path) -> StageResult:
    sec = dict(cfg["panjer"] or {})
    res = StageResult("panjer", resolved=sec)
    cases = sec.get("cases") or []
    payload = {"schema": "ldlab.panjer/1", "cases": [], "pmfs": []}
    for i, case in enumerate(cases):
        count = count_from_spec(case["count"])
        lat = severity_from_spec(case["severity"])
        km = int(case.get("k_max", sec.get("k_max") or 500))
        a = panjer_pmf(count, lat, km)
        b = convolution_pmf(count, lat, km)
        diff = float(np.max(np.abs(a.masses - b.masses)))
        tol = float(case.get("tol", PANJER_CASE_TOL))
        name = f"case{i}"
        a.to_csv(out / f"panjer_{name}.csv")
        res.files[f"panjer_{name}.csv"] = out / f"panjer_{name}.csv"
        payload["cases"].append({"name": name, "count": count.spec(), "k_max": km,
                                 "max_abs_diff": diff, "tol": tol,
                                 "truncation_bound": a.truncation_bound})
        res.verdicts.append((f"panjer vs convolution {name}", "PASS" if diff <= tol else "FAIL"))
    if not cases:
        if sec.get("k_max") is None:
            raise ValueError("panjer needs k_max (config [panjer] k_max or --kmax)")
        km = int(sec["k_max"])
        lat = _lattice(cfg.severity, km)
        for t in cfg["scan"]["t"]:
            pmf = compound_for(cfg.counting, t, lat, km)
            name = f"compound_t{t:g}.csv"
            pmf.to_csv(out / name)
            res.files[name] = out / name
            payload["pmfs"].append({"t": t, "file": name, "k_max": km,
                                    "truncation_bound": pmf.truncation_bound,
                                    "low_precision": pmf.low_precision})
            if pmf.low_precision:
                logger.warning("compound pmf at t=%g LOW-PRECISION: truncation bound %.3g",
                               t, pmf.truncation_bound)
    res.payload = payload
    _dump(payload, out / "panjer.json")
    res.files["panjer.json"] = out / "panjer.json"
    return res


# ---------------------------------------------------------------- ratio scans

def scan_reports(cfg: ExperimentConfig):
    """All ratio reports of the [scan] section, ordered by window then t."""
    r = cfg.resolved
    sc = r["scan"]
    sev = cfg.severity
    counting = cfg.counting
    gamma = float(sc["gamma"])
    kw = dict(mode=r["mode"], n_samples=int(r["n_samples"]), seed=int(r["seed"]),
              workers=int(r["workers"]))
    reports = []
    for w in cfg.windows:
        loc = sc["local"]
        if loc == "measured":
            l_L = measured_local(cfg, w)
        elif loc == "analytic":
            l_L = None
        else:
            l_L = tuple(loc)
        if sc["theorem"] == "L42":
            for n in sc["n"]:
                x = default_x_grid(gamma, n, int(sc["x_points"]), float(sc["x_span"]))
                reports.append(lemma42_ratio_scan(sev, w, int(n), gamma, x, l_L,
                                                  float(r["slack"])))
            continue
        for t in sc["t"]:
            x = default_x_grid(gamma, counting.lam(t), int(sc["x_points"]), float(sc["x_span"]))
            if sc["theorem"] == "T31":
                rep = theorem31_ratio_scan(sev, counting, t, gamma, w, x_grid=x, l_L=l_L,
                                           slack=float(r["slack"]), **kw)
            elif sc["theorem"] == "C31":
                rep = corollary31_ratio_scan(sev, float(sc["c"]), counting, t, gamma, w,
                                             x_grid=x, l_L=l_L, slack=float(r["slack"]), **kw)
            else:
                spec = RiskModelSpec(sev, counting, cfg.premium, t)
                rep = theorem32_ratio_scan(spec, gamma, w, x_grid=x, l_L=l_L,
                                           slack=float(r["slack"]), **kw)
            reports.append(rep)
    return reports


def run_scan(cfg: ExperimentConfig, out: Path) -> StageResult:
    sc = cfg["scan"]
    res = StageResult("scan", resolved=dict(sc))
    reports = scan_reports(cfg)
    by_window = {}
    for rep in reports:
        by_window.setdefault(rep.window, []).append(rep)
    trends = []
    for T, reps in by_window.items():
        use = reps[-1:] if sc["verdict_at"] == "last" else reps
        for rep in use:
            res.verdicts.append((f"{rep.theorem} t={rep.t:g} T={T}", rep.verdict))
        if sc["trend_slack"] is not None and len(reps) > 1:
            devs = [rep.max_deviation() for rep in reps]
            ok = trend_nonincreasing(devs, float(sc["trend_slack"]))
            trends.append({"T": T, "max_deviation": devs, "slack": sc["trend_slack"],
                           "verdict": "PASS" if ok else "FAIL"})
            res.verdicts.append((f"trend T={T}", "PASS" if ok else "FAIL"))
    write_ratio_csv(reports, out / "ratios.csv")
    res.payload = {"schema": "ldlab.ratio_reports/1", "reports": [r.as_dict() for r in reports],
                   "trends": trends, "verdict_at": sc["verdict_at"]}
    _dump(res.payload, out / "ratios.json")
    res.files["ratios.csv"] = out / "ratios.csv"
    res.files["ratios.json"] = out / "ratios.json"
    return res


# ---------------------------------------------------------------- truncation bound sweep

def run_bounds(cfg: ExperimentConfig, out: Path) -> StageResult:
    sec = _section(cfg, "bounds", BOUND_DEFAULTS)
    sev = cfg.severity
    if not isinstance(sev, Discretized):
        raise ValueError("the bound sweep needs a discretized severity")
    sweep = lemma41_sweep(sev, cfg.windows, [float(v) for v in sec["v"]], int(sec["n_max"]),
                          float(sec["x_max"]))
    res = StageResult("bounds", resolved=sec)
    sweep.to_csv(out / "bounds.csv")
    res.files["bounds.csv"] = out / "bounds.csv"
    res.payload = {"rows": len(sweep.rows), "violations": sweep.violations}
    res.verdicts.append(("truncation bound sweep", "PASS" if sweep.violations == 0 else "FAIL"))
    return res


RUNNERS = {"indices": run_indices, "conditions": run_conditions, "panjer": run_panjer,
           "scan": run_scan, "bounds": run_bounds}


def configured_stages(cfg: ExperimentConfig):
    """Stages a full ``run`` executes: those with a section in the config file."""
    if cfg.stages is not None:
        return list(cfg.stages)
    stages = [s for s in STAGES if s in cfg.raw]
    if not stages:
        raise ValueError("config has none of the sections " + ", ".join(STAGES))
    return stages


# ---------------------------------------------------------------- manifest

def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    import scipy
    from . import __version__
    return {"ldlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(cfg: ExperimentConfig, results, out: Path, command: str) -> Path:
    r = cfg.resolved
    files = {}
    for res in results:
        for name, p in res.files.items():
            files[name] = _sha256(p)
    manifest = {
        "schema": "ldlab.manifest/1",
        "command": command,
        "config_path": cfg.path,
        "config_sha256": cfg.config_hash(),
        "config": r,
        "stages": [res.stage for res in results],
        "stage_parameters": {res.stage: res.resolved for res in results},
        "versions": versions(),
        "seeds": {"seed": r["seed"], "mode": r["mode"],
                  "streams": "SeedSequence(seed, spawn_key=(component, chunk)); "
                             "components count=0 severity=1 premium=2",
                  "chunk": CHUNK,
                  "chunk_plan": chunk_plan(int(r["n_samples"])) if r["mode"] == "mc" else []},
        "outputs": files,
        "verdicts": [{"stage": res.stage, "label": lab, "verdict": v}
                     for res in results for lab, v in res.verdicts],
        "all_passed": all(res.ok() for res in results),
    }
    path = out / "manifest.json"
    _dump(manifest, path)
    return path
