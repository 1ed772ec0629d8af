"""Experiment configuration: schema, defaults and cross-field validation."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError, LabError
from .floyd import parse_floyd
from .groups import parse_group
from .measures import parse_measure

EXPERIMENTS = ("ball", "green", "floyd", "ancona", "hitting", "boundary", "transition", "report")

REQUIRED = object()


def _int(lo=None, hi=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None
    return check


def _real(lo=None, hi=None, open_lo=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number"
        if lo is not None and (v < lo or (open_lo and v == lo)):
            return f"must be {'>' if open_lo else '>='} {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None
    return check


def _str(choices=None):
    def check(v):
        if not isinstance(v, str):
            return "must be a string"
        if choices and v not in choices:
            return f"must be one of {', '.join(choices)}"
        return None
    return check


def _pairs(v):
    if not isinstance(v, list) or not v:
        return "must be a nonempty list of [x, y] word pairs"
    for p in v:
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(w, str) for w in p)):
            return "each entry must be a pair of words"
    return None


def _reals(lo=None, hi=None):
    def check(v):
        if not isinstance(v, list) or not v:
            return "must be a nonempty list of numbers"
        for x in v:
            err = _real(lo, hi)(x)
            if err:
                return "entries " + err
        return None
    return check


def _weights(v):
    if not isinstance(v, dict) or not v:
        return "must map strata (on, near, far) to weights"
    bad = set(v) - {"on", "near", "far"}
    if bad:
        return f"unknown strata {sorted(bad)}"
    if any(not isinstance(w, (int, float)) or w < 0 for w in v.values()):
        return "weights must be nonnegative numbers"
    if sum(v.values()) <= 0:
        return "weights must not all vanish"
    return None


COMMON = {
    "group": (REQUIRED, _str()),
    "measure": ("srw", None),
    "floyd": ("exp(0.5)", None),
    "seed": (REQUIRED, _int(0)),
}

SCHEMA = {
    "ball": {"R": (REQUIRED, _int(0)), "memory_cap": (10**8, _int(1))},
    "green": {
        "R": (REQUIRED, _int(1)),
        "pairs": ([["e", "e"]], _pairs),
        "tol": (1e-12, _real(0, open_lo=True)),
        "method": ("solve", _str(("solve", "mc", "both"))),
        "N": (100000, _int(1)),
        "horizon": (200, _int(1)),
    },
    "floyd": {
        "R": (REQUIRED, _int(1)),
        "pairs": (REQUIRED, _pairs),
        "basepoint": ("e", _str()),
        "hub": ("single", _str(("single", "components"))),
    },
    "ancona": {
        "R": (REQUIRED, _int(2)),
        "max_radius": (REQUIRED, _int(1)),
        "n_triples": (200, _int(1)),
        "min_triples": (100, _int(1)),
        "weights": ({"on": 0.5, "near": 0.3, "far": 0.2}, _weights),
        "floyd_R": (None, _int(1)),
        "n_bins": (8, _int(1)),
    },
    "hitting": {
        "R": (REQUIRED, _int(2)),
        "max_radius": (REQUIRED, _int(1)),
        "n_triples": (50, _int(1)),
        "eps": ([0.1], _reals(0, 1)),
        "r_max": (None, _int(0)),
        "weights": ({"on": 0.5, "near": 0.3, "far": 0.2}, _weights),
        "floyd_R": (None, _int(1)),
        "n_bins": (6, _int(1)),
    },
    "boundary": {
        "exit": ({"R": 30, "N": 100000, "depth": 2}, None),
        "drift": ({"N": 10000, "T": 2000, "R": 12, "margin": 2}, None),
        "bilateral": ({"N_steps": 500, "M_horizon": 200, "eps": [0.5], "floyd_R": 8}, None),
        "growth_R": (12, _int(4)),
    },
    "transition": {
        "R": (REQUIRED, _int(2)),
        "length": (8, _int(2)),
        "n_geodesics": (60, _int(1)),
        "delta0": ([1.0], _reals(0)),
        "depth": (3, _int(1)),
        "floyd_R": (None, _int(1)),
        "deep_fraction": (0.5, _real(0, 1)),
    },
    "report": {"results": (REQUIRED, _str())},
}

SECTIONS = {
    "exit": {"R": _int(2), "N": _int(1), "depth": _int(1)},
    "drift": {"N": _int(2), "T": _int(1), "R": _int(3), "margin": _int(0)},
    "bilateral": {"N_steps": _int(0), "M_horizon": _int(1), "eps": _reals(0), "floyd_R": _int(1)},
}

# fields that never influence data outputs
VOLATILE = ("workers", "out")


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc}")]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from exc
    if not isinstance(data, dict):
        raise ConfigError([("", "top level must be an object")])
    return data


def validate(config: dict, experiment: str | None = None) -> dict:
    """Fill defaults and check every field; raise ConfigError with all problems."""
    cfg = copy.deepcopy(config)
    problems = []
    exp = experiment or cfg.get("experiment")
    if cfg.get("experiment") not in (None, exp):
        problems.append(("experiment", f"config says {cfg['experiment']!r} but {exp!r} was requested"))
    if exp not in EXPERIMENTS:
        raise ConfigError([("experiment", f"must be one of {', '.join(EXPERIMENTS)}")])
    cfg["experiment"] = exp
    fields = dict(SCHEMA[exp]) if exp == "report" else {**COMMON, **SCHEMA[exp]}
    known = set(fields) | {"experiment", *VOLATILE}
    for k in sorted(set(cfg) - known):
        problems.append((k, "unknown field"))
    for name, (default, check) in fields.items():
        if name not in cfg or cfg[name] is None and default is REQUIRED:
            if default is REQUIRED:
                problems.append((name, "required field is missing"))
                continue
            cfg[name] = copy.deepcopy(default)
        if cfg[name] is not None and check is not None:
            err = check(cfg[name])
            if err:
                problems.append((name, err))
    if exp == "boundary":
        for sec, checks in SECTIONS.items():
            val = cfg.get(sec)
            if val is None:
                continue
            if not isinstance(val, dict):
                problems.append((sec, "must be an object or null"))
                continue
            merged = {**SCHEMA["boundary"][sec][0], **val}
            for k in sorted(set(val) - set(checks)):
                problems.append((f"{sec}.{k}", "unknown field"))
            for k, check in checks.items():
                err = check(merged[k])
                if err:
                    problems.append((f"{sec}.{k}", err))
            cfg[sec] = merged
    if not problems and exp != "report":
        problems.extend(_cross_checks(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def _cross_checks(cfg: dict) -> list:
    out = []
    try:
        spec = parse_group(cfg["group"])
    except LabError as exc:
        return [("group", str(exc))]
    try:
        parse_floyd(cfg["floyd"])
    except LabError as exc:
        out.append(("floyd", str(exc)))
    try:
        m = parse_measure(spec, cfg["measure"])
    except LabError as exc:
        return out + [("measure", str(exc))]
    exp = cfg["experiment"]
    R = cfg.get("R")
    if R is not None and exp != "ball" and m.max_step > R:
        out.append(("measure", f"support element of length {m.max_step} does not fit R={R}"))
    if exp in ("ancona", "hitting") and 2 * cfg["max_radius"] > R:
        out.append(("max_radius", f"2*max_radius must be <= R={R}"))
    if exp == "hitting" and cfg["r_max"] is not None and cfg["r_max"] + 2 * cfg["max_radius"] > R:
        out.append(("r_max", "r_max + 2*max_radius must be <= R"))
    if exp == "transition":
        if cfg["length"] > 2 * R:
            out.append(("length", "length must be <= 2R"))
        if "product" not in cfg["group"]:
            out.append(("group", "transition needs a free product with an abelian factor of rank >= 2"))
    if exp == "boundary":
        ex = cfg.get("exit")
        if ex and ex["depth"] >= ex["R"]:
            out.append(("exit.depth", "depth must be < exit.R"))
        dr = cfg.get("drift")
        if dr and dr["R"] - dr["margin"] < 2 * m.max_step:
            out.append(("drift.R", "drift.R - drift.margin leaves no Green window"))
    return out


def run_id(cfg: dict) -> str:
    """Stable identifier of the data-relevant part of a normalized config."""
    core = {k: v for k, v in cfg.items() if k not in VOLATILE}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
