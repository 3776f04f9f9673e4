"""Scene files: a domain, an optional group, basepoints, seeds and parameters.

A scene is a JSON object::

    {"name": "disc-237",
     "domain": {"kind": "unit_ball", "n": 2},
     "group": "triangle237",
     "seed": 0,
     "params": {"entropy": {"R_max": 10}}}

``domain.kind`` is one of ``unit_ball``, ``ellipsoid`` (with ``Q``),
``pball`` (with ``p``) or ``orbit_hull`` (with ``depth`` and optional
``seeds``; the hull is built from the scene's group).  ``group`` is the name
of a built-in group or a full group descriptor.  Built-in scenes are
addressed as ``builtin:<name>``.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domains import ConvexDomain, Ellipsoid, OrbitHull, PNormBall
from .errors import SceneError
from .groups import ProjectiveGroup, builtin_groups

DOMAIN_KINDS = ("unit_ball", "ellipsoid", "pball", "orbit_hull")
TOP_KEYS = {"name", "domain", "group", "basepoints", "seed", "params", "outputs"}

BUILTIN_SCENES = {
    "disc-237": {"name": "disc-237", "domain": {"kind": "unit_ball", "n": 2},
                 "group": "triangle237", "seed": 0},
    "disc-444": {"name": "disc-444", "domain": {"kind": "unit_ball", "n": 2},
                 "group": "triangle444", "seed": 0},
    "ball3": {"name": "ball3", "domain": {"kind": "unit_ball", "n": 3},
              "group": "parabolic-ball3", "seed": 0},
    "cusped-disc": {"name": "cusped-disc", "domain": {"kind": "unit_ball", "n": 2},
                    "group": "triangle23inf", "seed": 0},
    "deformed-444": {"name": "deformed-444", "domain": {"kind": "orbit_hull", "depth": 12},
                     "group": "triangle444-deformed", "seed": 0,
                     "params": {"reference_depth": 14, "rho0": "triangle444"}},
    "pball-disc": {"name": "pball-disc", "domain": {"kind": "pball", "p": 3.0, "n": 2},
                   "seed": 0},
    "non-invariant": {"name": "non-invariant", "domain": {"kind": "unit_ball", "n": 2},
                      "group": {"label": "shear", "generators": [[[1.0, 0.0, 0.0],
                                                                 [0.0, 1.0, 0.6],
                                                                 [0.0, 0.0, 1.0]]],
                                "relations": []},
                      "seed": 0},
}


@dataclass
class Scene:
    name: str
    domain: dict
    group: object = None
    basepoints: list = field(default_factory=list)
    seed: int = 0
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "domain": self.domain, "group": self.group,
                "basepoints": self.basepoints, "seed": self.seed, "params": self.params,
                "outputs": self.outputs}

    def digest(self) -> str:
        """Short hash of the scene contents (parameter provenance)."""
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def param(self, section: str, key: str, default=None):
        return self.params.get(section, {}).get(key, self.params.get(key, default))


def _require(cond, msg):
    if not cond:
        raise SceneError(msg)


def validate_scene(raw) -> Scene:
    _require(isinstance(raw, dict), "scene must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    _require(not unknown, f"unknown scene keys: {sorted(unknown)}")
    _require("domain" in raw, "scene needs a domain")
    _require("seed" in raw, "scene needs a seed")
    seed = raw["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64,
             "seed must be an unsigned 64-bit integer")
    dom = raw["domain"]
    _require(isinstance(dom, dict) and dom.get("kind") in DOMAIN_KINDS,
             f"domain.kind must be one of {DOMAIN_KINDS}")
    kind = dom["kind"]
    if kind == "unit_ball":
        _require(dom.get("n") in (2, 3), "unit_ball needs n in {2, 3}")
    elif kind == "ellipsoid":
        Q = np.asarray(dom.get("Q", []), float)
        _require(Q.ndim == 2 and Q.shape[0] == Q.shape[1] and Q.shape[0] in (3, 4),
                 "ellipsoid needs a 3x3 or 4x4 matrix Q")
    elif kind == "pball":
        _require(isinstance(dom.get("p"), (int, float)) and dom["p"] > 1, "pball needs p > 1")
    elif kind == "orbit_hull":
        _require(isinstance(dom.get("depth"), int) and dom["depth"] >= 1, "orbit_hull needs a depth")
        _require(raw.get("group") is not None, "orbit_hull needs the scene group")
    group = raw.get("group")
    if isinstance(group, str):
        _require(group in builtin_groups(), f"unknown group {group!r}")
    elif group is not None:
        _require(isinstance(group, dict) and "generators" in group, "group descriptor needs generators")
    params = raw.get("params", {})
    _require(isinstance(params, dict), "params must be an object")
    for key in ("rho0",):
        if key in params:
            _require(params[key] in builtin_groups(), f"unknown group {params[key]!r} in params")
    bps = raw.get("basepoints", [])
    _require(isinstance(bps, list), "basepoints must be a list")
    return Scene(raw.get("name", "scene"), dom, group, bps, seed, params, raw.get("outputs", {}))


def load_scene(source: str) -> Scene:
    """Scene from a path, or ``builtin:<name>``."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_SCENES:
            raise SceneError(f"unknown built-in scene {name!r}; known: {sorted(BUILTIN_SCENES)}")
        return validate_scene(copy.deepcopy(BUILTIN_SCENES[name]))
    path = Path(source)
    if not path.exists():
        raise SceneError(f"scene file {source} not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene file is not valid JSON: {exc}") from exc
    return validate_scene(raw)


@dataclass
class Built:
    """Objects a scene resolves to."""
    scene: Scene
    domain: ConvexDomain
    group: ProjectiveGroup | None
    basepoint: np.ndarray        # chart coordinates


def resolve_group(group):
    if group is None:
        return None
    if isinstance(group, str):
        return builtin_groups()[group]()
    try:
        return ProjectiveGroup.from_descriptor(group)
    except (KeyError, ValueError, TypeError) as exc:
        raise SceneError(f"bad group descriptor: {exc}") from exc


def group_basepoint(group, n):
    """Chart point of the chamber for Coxeter groups, else the origin."""
    if group is not None and group.coxeter is not None:
        X = group.coxeter.frame @ group.coxeter.chamber_point()
        return X[1:] / X[0]
    return np.zeros(n)


def build(scene: Scene) -> Built:
    dom = scene.domain
    group = resolve_group(scene.group)
    kind = dom["kind"]
    if kind == "unit_ball":
        domain = Ellipsoid.unit_ball(dom["n"])
    elif kind == "ellipsoid":
        domain = Ellipsoid(np.asarray(dom["Q"], float))
    elif kind == "pball":
        domain = PNormBall(float(dom["p"]), dom.get("frame"), n=dom.get("n", 2))
    else:
        bp = group_basepoint(group, group.dim)
        seeds = dom.get("seeds")
        seeds = group.limit_seeds(4) if seeds in (None, "limit") else np.asarray(seeds, float)
        domain = OrbitHull.from_group(group, seeds, dom["depth"], basepoint=bp)
    if scene.basepoints:
        bp = np.asarray(scene.basepoints[0], float)
    else:
        bp = group_basepoint(group, domain.dim) if group is not None else domain.basepoint
    if bp.size != domain.dim:
        raise SceneError("basepoint dimension does not match the domain")
    if not domain.contains_chart(bp):
        raise SceneError("basepoint is not inside the domain")
    return Built(scene, domain, group, bp)


def reference_hull(built: Built):
    """A deeper hull for orbit-hull scenes, used to cap entropy windows."""
    dom = built.scene.domain
    if dom["kind"] != "orbit_hull":
        return None
    depth = int(built.scene.param("entropy", "reference_depth", dom["depth"] + 2))
    seeds = dom.get("seeds")
    g = built.group
    seeds = g.limit_seeds(4) if seeds in (None, "limit") else np.asarray(seeds, float)
    return OrbitHull.from_group(g, seeds, depth, basepoint=group_basepoint(g, g.dim))
