"""Command line: ``ldlab {run,indices,conditions,panjer,scan,bounds,verify}``.

Exit codes: 0 all verdicts pass, 1 some verdict failed, 2 invalid config,
3 numerical coverage error (for example k_max too small).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .compound import KmaxTooSmall, OutOfGrid
from .config import ConfigError, load_config
from .harness import RUNNERS, configured_stages, output_dir, write_manifest

EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="experiment TOML or manifest.json")
    p.add_argument("--t", type=float, nargs="+", help="override the t grid")
    p.add_argument("--gamma", type=float, help="override gamma")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--mode", choices=("exact", "mc"), help="override the numerator mode")
    p.add_argument("--workers", type=int, help="worker processes for mc mode")
    p.add_argument("--out", help="output directory (default $LDLAB_OUTPUT_DIR/<name>)")


def build_parser():
    ap = argparse.ArgumentParser(prog="ldlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [("run", "all configured stages"),
                       ("indices", "index estimates, Potter certificates, decay check"),
                       ("conditions", "counting-process condition checks"),
                       ("panjer", "exact compound pmf CSV / oracle cross-check"),
                       ("scan", "ratio scans"),
                       ("bounds", "truncation bound sweep")]:
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "panjer":
            p.add_argument("--kmax", type=int, help="lattice length of the compound pmf")
    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--only", type=int, nargs="+", help="criterion ids to run")
    p.add_argument("--out", help="write acceptance.json here")
    return ap


def _verify(args):
    from .acceptance import run_all
    results = run_all(args.only)
    for r in results:
        print(r.line())
    if args.out:
        from pathlib import Path
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "acceptance.json", "w") as fh:
            json.dump({"schema": "ldlab.acceptance/1",
                       "criteria": [r.as_dict() for r in results]}, fh, indent=2)
    return 0 if all(r.passed for r in results) else EXIT_FAIL


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return _verify(args)
    try:
        cfg = load_config(args.config)
        cfg.override(seed=args.seed, mode=args.mode, workers=args.workers, gamma=args.gamma,
                     t=args.t)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "kmax", None) is not None:
        cfg.resolved["panjer"]["k_max"] = int(args.kmax)
    out = output_dir(cfg, args.out)
    results = []
    try:
        stages = configured_stages(cfg) if args.command == "run" else [args.command]
        for stage in stages:
            results.append(RUNNERS[stage](cfg, out))
    except (KmaxTooSmall, OutOfGrid) as exc:
        print(f"{cfg.path}: numerical coverage: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, NotImplementedError) as exc:
        print(f"{cfg.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(cfg, results, out, " ".join(["ldlab"] + (argv or sys.argv[1:])))
    for res in results:
        for label, verdict in res.verdicts:
            print(f"{res.stage:<10} {verdict:<4} {label}")
    print(f"outputs: {out}")
    return 0 if all(res.ok() for res in results) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
