"""Experiment configuration files (TOML) and their validation.

Grammar (all sections optional except ``severity``)::

    schema = "ldlab.config/1"
    name = "..."            # used for the default output directory
    seed = 0
    mode = "exact"          # or "mc"
    n_samples = 1000000     # mc mode
    workers = 1
    slack = 0.25            # multiplicative slack on the index bands

    [severity]              # family + parameters, see severity_from_spec
    [window]     T = ["inf", 1]
    [counting]   family = "hom_poisson" | "mixed_poisson" | "deterministic"
    [premium]    family = "deterministic_linear" | "compound_poisson"
    [scan]       theorem = "T31" | "C31" | "T32" | "L42", t = [...], gamma, c, n = [...],
                 x_points, x_span, trend_slack, verdict_at = "all" | "last",
                 local = "analytic" | "measured" | [l, L]
    [indices]    x_min, x_max, per_decade, y_grid, eps, local_per_decade, decay_p,
                 expect = [alpha, beta, l, L], expect_tol, [[indices.potter]] alpha, direction
    [conditions] p, deltas, t_grid, eps (xi equivalence and premium checks), xi_delta
    [bounds]     v = [...], n_max, x_max
    [panjer]     k_max, [[panjer.cases]] count = {...}, severity = {...}, tol

A manifest.json written by the harness is also accepted: its ``config``
entry is the fully resolved configuration.  Validation errors carry the file line of the offending key.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .counting import counting_from_spec
from .distributions import DeltaWindow, severity_from_spec
from .montecarlo import premium_from_spec

SCHEMA = "ldlab.config/1"

DEFAULTS = {
    "schema": SCHEMA,
    "name": None,
    "seed": 0,
    "mode": "exact",
    "n_samples": 1_000_000,
    "workers": 1,
    "slack": 0.25,
    "window": {"T": ["inf"]},
    "counting": {"family": "hom_poisson", "rate": 1.0},
    "premium": None,
    "scan": {"theorem": "T31", "t": [200.0], "gamma": 1.0, "c": 0.0, "n": [10, 20, 40],
             "x_points": 41, "x_span": 10.0, "trend_slack": None, "verdict_at": "all",
             "local": "analytic"},
    "indices": None,
    "conditions": None,
    "bounds": None,
    "panjer": {"k_max": None},
}

THEOREMS = ("T31", "C31", "T32", "L42")


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` is ``path:line: message``."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line if line else 1}: {message}")


def _line_of(text: str, section: Optional[str], key: Optional[str]) -> int:
    """Line number of ``key`` inside ``[section]`` (or of the section header)."""
    current = None
    header_line = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if section is not None and current == section:
                header_line = i
            continue
        if key and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
        if key and section and "." in section and current == section.split(".")[0]:
            # dotted inline keys such as inner.alpha = 2
            if re.match(rf"^{re.escape(section.split('.', 1)[1])}\.{re.escape(key)}\s*=", line):
                return i
    return header_line or 1


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    path: str = "<memory>"
    text: str = ""
    resolved: dict = field(default_factory=dict)
    stages: Optional[list] = None  # set when reloaded from a manifest

    def __post_init__(self):
        self.resolved = _merge(DEFAULTS, self.raw)
        if self.resolved["name"] is None:
            self.resolved["name"] = Path(self.path).stem if self.path != "<memory>" else "experiment"

    # -- convenience accessors
    def __getitem__(self, key):
        return self.resolved[key]

    def error(self, section, key, message):
        return ConfigError(self.path, _line_of(self.text, section, key), message)

    @property
    def severity(self):
        return severity_from_spec(self.resolved["severity"])

    @property
    def windows(self):
        T = self.resolved["window"]["T"]
        return [DeltaWindow.parse(v) for v in (T if isinstance(T, list) else [T])]

    @property
    def counting(self):
        return counting_from_spec(self.resolved["counting"])

    @property
    def premium(self):
        return premium_from_spec(self.resolved["premium"])

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def override(self, **kw):
        """Apply command-line overrides (``None`` values are ignored)."""
        r = self.resolved
        if kw.get("seed") is not None:
            r["seed"] = int(kw["seed"])
        if kw.get("mode") is not None:
            r["mode"] = kw["mode"]
        if kw.get("workers") is not None:
            r["workers"] = int(kw["workers"])
        if kw.get("gamma") is not None:
            r["scan"]["gamma"] = float(kw["gamma"])
        if kw.get("t") is not None:
            r["scan"]["t"] = [float(v) for v in kw["t"]]
        validate(self)
        return self


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    r = cfg.resolved
    if r.get("schema") != SCHEMA:
        raise cfg.error(None, "schema", f"schema must be {SCHEMA!r}, got {r.get('schema')!r}")
    if "severity" not in r:
        raise cfg.error(None, None, "missing [severity] section")
    try:
        sev = cfg.severity
    except (KeyError, ValueError, TypeError, OSError) as exc:
        raise cfg.error("severity", "family", f"invalid severity: {exc}") from None
    try:
        windows = cfg.windows
    except (ValueError, TypeError) as exc:
        raise cfg.error("window", "T", f"invalid window: {exc}") from None
    try:
        counting = cfg.counting
    except (KeyError, ValueError, TypeError) as exc:
        raise cfg.error("counting", "family", f"invalid counting model: {exc}") from None
    try:
        premium = cfg.premium
    except (KeyError, ValueError, TypeError) as exc:
        raise cfg.error("premium", "family", f"invalid premium: {exc}") from None
    if r["mode"] not in ("exact", "mc"):
        raise cfg.error(None, "mode", f"mode must be 'exact' or 'mc', got {r['mode']!r}")
    if not isinstance(r["seed"], int) or r["seed"] < 0:
        raise cfg.error(None, "seed", "seed must be a nonnegative integer")
    if r["mode"] == "mc" and int(r["n_samples"]) < 10_000:
        raise cfg.error(None, "n_samples", "mc mode needs n_samples >= 10000")
    if not float(r["slack"]) >= 0:
        raise cfg.error(None, "slack", "slack must be nonnegative")
    scan = r["scan"]
    if scan["theorem"] not in THEOREMS:
        raise cfg.error("scan", "theorem", f"theorem must be one of {THEOREMS}")
    ts = scan["t"] if isinstance(scan["t"], list) else [scan["t"]]
    scan["t"] = [float(v) for v in ts]
    if not scan["t"] or any(not v > 0 for v in scan["t"]) or \
            any(b <= a for a, b in zip(scan["t"], scan["t"][1:])):
        raise cfg.error("scan", "t", "t grid must be positive and strictly increasing")
    if not float(scan["gamma"]) > 0:
        raise cfg.error("scan", "gamma", "gamma must be positive")
    if scan["verdict_at"] not in ("all", "last"):
        raise cfg.error("scan", "verdict_at", "verdict_at must be 'all' or 'last'")
    if int(scan["x_points"]) < 2 or not float(scan["x_span"]) > 1:
        raise cfg.error("scan", "x_points", "x grid needs >= 2 points and span > 1")
    if scan["theorem"] == "C31" and not float(scan["gamma"]) > float(scan["c"]):
        raise cfg.error("scan", "gamma", f"shifted-summand scan needs gamma > c = {scan['c']}")
    if scan["theorem"] == "T32":
        from .montecarlo import nu_estimate, RiskModelSpec
        if r["premium"] is None:
            raise cfg.error("premium", None, "a T32 scan needs a [premium] section")
        try:
            RiskModelSpec(sev, counting, premium, scan["t"][0])
        except ValueError as exc:
            raise cfg.error("severity", "family", str(exc)) from None
        for t in scan["t"]:
            nu = nu_estimate(premium, counting, [t / 4, t / 2, t, 2 * t])
            if not float(scan["gamma"]) > nu:
                raise cfg.error("scan", "gamma",
                                f"gamma = {scan['gamma']} must exceed nu = {nu:.6g} "
                                f"(bound on premium mean b(t) over claim-count mean lam(t))")
    loc = scan["local"]
    if isinstance(loc, str):
        if loc not in ("analytic", "measured"):
            raise cfg.error("scan", "local", "local must be 'analytic', 'measured' or [l, L]")
    elif len(loc) != 2 or not 0 < loc[0] <= 1 <= loc[1]:
        raise cfg.error("scan", "local", "local must be [l, L] with 0 < l <= 1 <= L")
    if any(w.finite and hasattr(sev, "h") and
           abs(w.T / sev.h - round(w.T / sev.h)) > 1e-9 for w in windows):
        raise cfg.error("window", "T", "window length must be a multiple of the lattice step")
    cond = r.get("conditions")
    if cond is not None:
        if any(not 0 < float(d) < 1 for d in cond.get("deltas", [0.3])):
            raise cfg.error("conditions", "deltas", "deltas must lie in (0, 1)")
        if float(cond.get("p", 2.0)) < 1:
            raise cfg.error("conditions", "p", "p must be >= 1")
    b = r.get("bounds")
    if b is not None and any(not float(v) > 0 for v in b.get("v", [1.0])):
        raise cfg.error("bounds", "v", "v must be positive")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, 1, f"cannot read config: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            man = json.loads(text)
            raw = man["config"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(path, 1, f"not a harness manifest: {exc}") from None
        return validate(ExperimentConfig(raw, str(path), "", stages=man.get("stages")))
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(path, int(m.group(1)) if m else 1, f"TOML syntax: {exc}") from None
    unknown = set(raw) - set(DEFAULTS) - {"severity"}
    if unknown:
        key = sorted(unknown)[0]
        line = _line_of(text, None, key)
        if line == 1:
            line = _line_of(text, key, None)
        raise ConfigError(path, line, f"unknown key or section {key!r}")
    _resolve_paths(raw, path.parent)
    return validate(ExperimentConfig(raw, str(path), text))


def _resolve_paths(node, base: Path):
    # csv inputs are relative to the config file
    if isinstance(node, dict):
        for k, v in node.items():
            if k == "csv" and isinstance(v, str):
                node[k] = str((base / v).resolve())
            else:
                _resolve_paths(v, base)
    elif isinstance(node, list):
        for v in node:
            _resolve_paths(v, base)


def shipped_config(name: str) -> Path:
    """Path of a config shipped inside the package."""
    p = Path(__file__).parent / "configs" / (name if name.endswith(".toml") else name + ".toml")
    if not p.exists():
        raise FileNotFoundError(f"no shipped config named {name!r}")
    return p

