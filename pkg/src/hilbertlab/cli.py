"""Command line driver.

    hilbertlab verify --scene builtin:disc-237 --suite all
    hilbertlab experiment --scene scene.json --name entropy --out results/
    hilbertlab describe --scene builtin:deformed-444

Exit codes: 0 on success, 1 on invariant violations or numerical errors,
2 on scene/schema errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HilbertLabError, SceneError

SUITES = ("metric", "busemann", "measures", "barycenter", "cusp", "eccentricity")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_plain) + "\n"


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hilbertlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hilbertlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scene", required=True, help="scene JSON path or builtin:<name>")
    common.add_argument("--seed", type=_seed, help="override the scene seed")
    common.add_argument("--out", type=Path, help="directory for reports and tables")
    common.add_argument("--shards", type=int, default=1, help="work shards (recorded in outputs)")
    common.add_argument("--budget", type=int, help="sample budget for stochastic estimators")

    v = sub.add_parser("verify", parents=[common], help="run invariant suites")
    v.add_argument("--suite", default="all", choices=SUITES + ("all",))

    from .experiments import EXPERIMENTS
    e = sub.add_parser("experiment", parents=[common], help="run an experiment")
    e.add_argument("--name", required=True, choices=EXPERIMENTS)
    e.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="override an experiment parameter (JSON value)")

    sub.add_parser("describe", parents=[common], help="print the scene interpretation")
    return p


def _write(out: Path | None, name: str, text: str):
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _metadata(out: Path | None, name: str, extra: dict):
    """Timestamps live outside the deterministic reports."""
    _write(out, f"{name}.meta.json", dumps({"created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                                            "argv": sys.argv[1:], **extra}))


def cmd_verify(args, built, seed) -> int:
    from .suites import run_suites
    names = SUITES if args.suite == "all" else (args.suite,)
    rows = run_suites(built, names, seed)
    violations = sum(r["violations"] for r in rows)
    report = {"scene": built.scene.name, "scene_digest": built.scene.digest(), "seed": seed,
              "shards": args.shards, "version": __version__, "suites": list(names),
              "invariants": rows, "violations": violations}
    text = dumps(report)
    sys.stdout.write(text)
    _write(args.out, "verify.json", text)
    _metadata(args.out, "verify", {"scene_digest": built.scene.digest()})
    return 0 if violations == 0 else 1


def _overrides(args) -> dict:
    out = {"shards": args.shards, "budget": args.budget}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise SceneError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def cmd_experiment(args, built, seed) -> int:
    from .experiments import run_experiment
    res = run_experiment(built, args.name, seed, _overrides(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(res.columns + ["scene_digest"])
    for row in res.rows:
        w.writerow(list(row) + [built.scene.digest()])
    record = {"experiment": args.name, "scene": built.scene.name, "scene_digest": built.scene.digest(),
              "seed": seed, "version": __version__, "param_hash": res.meta["param_hash"],
              "params": res.meta["params"], "violations": res.violations, "result": res.record}
    text = dumps(record)
    sys.stdout.write(buf.getvalue())
    _write(args.out, f"{args.name}.csv", buf.getvalue())
    _write(args.out, f"{args.name}.json", text)
    _metadata(args.out, args.name, {"scene_digest": built.scene.digest()})
    return 0 if res.violations == 0 else 1


def describe(built) -> dict:
    D, G = built.domain, built.group
    info = {"scene": built.scene.name, "scene_digest": built.scene.digest(), "seed": built.scene.seed,
            "domain": {"type": type(D).__name__, "dim": D.dim, "approximation": bool(D.approximation),
                       "descriptor": built.scene.domain},
            "basepoint": built.basepoint, "params": built.scene.params}
    if G is not None:
        info["group"] = {"label": G.label, "generators": [name for name, _ in G.letters()],
                         "relation_residual": float(max(G.relation_residuals().values(), default=0.0)),
                         "coxeter_orders": None if G.coxeter is None else G.coxeter.orders}
    return info


def cmd_describe(args, built, seed) -> int:
    sys.stdout.write(dumps(describe(built)))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .scene import build, load_scene
    try:
        scene = load_scene(args.scene)
        built = build(scene)
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return 2
    seed = scene.seed if args.seed is None else args.seed
    handler = {"verify": cmd_verify, "experiment": cmd_experiment, "describe": cmd_describe}[args.command]
    try:
        return handler(args, built, seed)
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return 2
    except HilbertLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
