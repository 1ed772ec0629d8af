"""``lab <experiment> --config PATH [--seed N] [--workers N] [--out DIR]``.

Exit codes: 0 success, 1 an embedded assertion failed, 2 configuration
error, 3 runtime error (details in ``error.json``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ancona import TripleSampler, classify_transitions, defect_survey, hitting_survey, transition_samples
from .boundary import (bilateral_transition_fraction, drift, exit_measure, fundamental_ratio, growth_rate,
                       stationarity_residual)
from .config import EXPERIMENTS, load, run_id, validate
from .errors import AlgebraError, ConfigError, LabError, SamplingError
from .floyd import floyd_graph, parse_floyd
from .green import green_mc, green_solve, tree_oracle
from .groups import FreeGroup, build_ball, inverse, multiply, parse_group, sphere_sizes, word_length
from .measures import parse_measure, srw
from .parallel import resolve_workers

OK, ASSERTION_FAILED, CONFIG_ERROR, RUNTIME_ERROR = 0, 1, 2, 3


def fmt(v) -> str:
    """Serialize a cell; floats get 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode()


class Run:
    """Collects output files and assertions for one experiment invocation."""

    def __init__(self, cfg: dict, out: Path, workers: int):
        self.cfg, self.out, self.workers = cfg, out, workers
        self.id = run_id(cfg)
        self.files: dict[str, bytes] = {}
        self.assertions: list[dict] = []

    def csv(self, name: str, header: list, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*header, "run_id"])
        for r in rows:
            w.writerow([*(fmt(v) for v in r), self.id])
        self.files[name] = buf.getvalue().encode()

    def json(self, name: str, obj) -> None:
        self.files[name] = _json_bytes({**obj, "run_id": self.id})

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})


# ---------------------------------------------------------------------------
# experiments


def _setup(cfg):
    spec = parse_group(cfg["group"])
    return spec, parse_measure(spec, cfg["measure"]), parse_floyd(cfg["floyd"])


def _srw_free_rank(spec, m):
    if isinstance(spec, FreeGroup) and spec.rank >= 2 and m == srw(spec):
        return spec.rank
    return None


def exp_ball(run: Run) -> None:
    cfg = run.cfg
    spec, _, _ = _setup(cfg)
    ball = build_ball(spec, cfg["R"], cfg["memory_cap"])
    expected = sphere_sizes(spec, cfg["R"])
    rows, total = [], 0
    for r in range(cfg["R"] + 1):
        total += len(ball.sphere(r))
        rows.append((r, total))
    run.csv("sizes.csv", ["radius", "size"], rows)
    run.check("sphere sizes match growth series",
              all(len(ball.sphere(r)) == expected[r] for r in range(cfg["R"] + 1)))


def exp_green(run: Run) -> None:
    cfg = run.cfg
    spec, m, _ = _setup(cfg)
    ball = build_ball(spec, cfg["R"])
    rank = _srw_free_rank(spec, m)
    rows = []
    for x, y in cfg["pairs"]:
        xe, ye = ball._as_el(x), ball._as_el(y)
        ests = []
        if cfg["method"] in ("solve", "both"):
            ests.append(green_solve(ball, m, xe, ye, tol=cfg["tol"]))
        if cfg["method"] in ("mc", "both"):
            ests.append(green_mc(spec, m, xe, ye, cfg["N"], cfg["horizon"], cfg["seed"], run.workers))
        for est in ests:
            rows.append((x, y, est.method, est.value, est.error, est.radius, est.samples, est.seed))
            if rank:
                d = word_length(spec, multiply(spec, inverse(spec, xe), ye))
                exact = tree_oracle(rank).green(d)
                tol = 1e-4 * exact if est.method == "Solve" else max(3 * est.error, 1e-12)
                run.check(f"oracle G({x},{y}) {est.method}", abs(est.value - exact) <= tol,
                          f"value {fmt(est.value)} oracle {fmt(exact)}")
    run.csv("green.csv", ["x", "y", "method", "value", "error", "radius", "samples", "seed"], rows)


def exp_floyd(run: Run) -> None:
    cfg = run.cfg
    spec, _, f = _setup(cfg)
    ball = build_ball(spec, cfg["R"])
    v = ball.resolve(cfg["basepoint"])
    g = floyd_graph(ball, f, v, cfg["hub"])
    rows = []
    for x, y in cfg["pairs"]:
        b = g.bounds(ball.resolve(x), ball.resolve(y))
        rows.append((x, y, cfg["basepoint"], b.lower, b.upper, cfg["R"]))
        run.check(f"lower <= upper for ({x},{y})", b.lower <= b.upper)
    run.csv("floyd.csv", ["x", "y", "basepoint", "lower", "upper", "radius"], rows)


def _envelope_rows(env):
    return [(i, env.edges[i], env.edges[i + 1], int(env.counts[i]),
             None if np.isnan(env.raw[i]) else env.raw[i], env.values[i])
            for i in range(len(env.counts))]


def exp_ancona(run: Run) -> None:
    cfg = run.cfg
    spec, m, f = _setup(cfg)
    ball = build_ball(spec, cfg["R"])
    fb = build_ball(spec, cfg["floyd_R"]) if cfg["floyd_R"] else None
    sampler = TripleSampler(cfg["max_radius"], dict(cfg["weights"]))
    sv = defect_survey(ball, m, f, sampler, cfg["n_triples"], cfg["seed"], run.workers,
                       floyd_ball=fb, min_triples=cfg["min_triples"], n_bins=cfg["n_bins"])
    run.csv("defects.csv", ["x", "y", "z", "stratum", "collinear", "defect", "floyd_lower", "floyd_upper"],
            [(r.x, r.y, r.z, r.stratum, r.collinear, r.defect, r.floyd_lower, r.floyd_upper)
             for r in sv.records])
    run.json("envelope.json", sv.envelope.to_dict())
    run.check("defects nonnegative up to 1e-9", min(r.defect for r in sv.records) >= -1e-9)
    run.check("envelope nonincreasing", bool(np.all(np.diff(sv.envelope.values) <= 0)))
    if _srw_free_rank(spec, m):
        col = [r.defect for r in sv.records if r.collinear]
        if col:
            run.check("collinear tree defects <= 1e-6", max(abs(d) for d in col) <= 1e-6)


def exp_hitting(run: Run) -> None:
    cfg = run.cfg
    spec, m, f = _setup(cfg)
    ball = build_ball(spec, cfg["R"])
    fb = build_ball(spec, cfg["floyd_R"]) if cfg["floyd_R"] else None
    sampler = TripleSampler(cfg["max_radius"], dict(cfg["weights"]))
    hs = hitting_survey(ball, m, f, cfg["eps"], sampler, cfg["n_triples"], cfg["seed"], cfg["r_max"],
                        run.workers, floyd_ball=fb, n_bins=cfg["n_bins"])
    rows = []
    for r in hs.records:
        for eps in cfg["eps"]:
            e = float(eps)
            rows.append((r.x, r.y, r.stratum, e, r.radii[e], r.capacity[e], r.floyd_lower, r.floyd_upper))
    run.csv("hitting.csv", ["x", "y", "stratum", "epsilon", "radius", "capacity", "floyd_lower",
                            "floyd_upper"], rows)
    run.csv("hitting_envelope.csv", ["epsilon", "bin", "lo", "hi", "count", "raw", "value"],
            [(float(e), *row) for e in cfg["eps"] for row in _envelope_rows(hs.envelopes[float(e)])])
    for e in cfg["eps"]:
        run.check(f"R(eps={e}) envelope nonincreasing",
                  bool(np.all(np.diff(hs.envelopes[float(e)].values) <= 0)))


def exp_boundary(run: Run) -> None:
    cfg = run.cfg
    spec, m, f = _setup(cfg)
    if cfg["exit"]:
        ex = cfg["exit"]
        em = exit_measure(spec, m, ex["R"], ex["N"], ex["depth"], cfg["seed"], run.workers)
        rows = [(ex["depth"], w, v) for w, v in em.rows()]
        rows += [(ex["depth"] + 1, w, v) for w, v in em.rows(refined=True)]
        run.csv("exit.csv", ["depth", "prefix", "mass"], rows)
        run.check("exit masses sum to 1", abs(math.fsum(em.masses.values()) - 1) <= 1e-12)
        consistent = all(em.counts[p] == sum(c for q, c in em.refined_counts.items() if q[:len(p)] == p)
                         for p in em.counts)
        run.check("depth consistency", consistent)
        try:
            res = stationarity_residual(em, m)
        except AlgebraError:
            res = None
        run.json("stationarity.json", {"residual": res, "radius": ex["R"], "depth": ex["depth"]})
    if cfg["drift"]:
        dr = cfg["drift"]
        ball = build_ball(spec, dr["R"])
        rep = drift(spec, m, dr["N"], dr["T"], cfg["seed"], ball, run.workers, dr["margin"], cfg["growth_R"])
        out = rep.to_dict()
        if rep.green is not None:
            r, ci = fundamental_ratio(rep)
            out.update(ratio=r, ratio_ci=ci)
        run.json("drift.json", out)
    if cfg["bilateral"]:
        bl = cfg["bilateral"]
        rows = [(eps, bilateral_transition_fraction(spec, m, f, bl["N_steps"], bl["M_horizon"], eps,
                                                    cfg["seed"], bl["floyd_R"], run.workers))
                for eps in bl["eps"]]
        run.csv("bilateral.csv", ["epsilon", "fraction"], rows)
    run.json("growth.json", {"growth_rate": growth_rate(spec, cfg["growth_R"]), "R_max": cfg["growth_R"]})


def exp_transition(run: Run) -> None:
    cfg = run.cfg
    spec, m, f = _setup(cfg)
    ball = build_ball(spec, cfg["R"])
    fb = build_ball(spec, cfg["floyd_R"]) if cfg["floyd_R"] else None
    recs = transition_samples(ball, m, f, cfg["n_geodesics"], cfg["length"], cfg["depth"], cfg["seed"],
                              fb, deep_fraction=cfg["deep_fraction"])
    run.csv("transition.csv", ["x", "y", "z", "floyd_lower", "floyd_upper", "depth", "defect"],
            [(r.x, r.y, r.z, r.floyd_lower, r.floyd_upper, r.depth, r.defect) for r in recs])
    rows = []
    for d0 in cfg["delta0"]:
        try:
            rep = classify_transitions(recs, d0, cfg["depth"])
        except SamplingError as exc:
            rows.append((d0, None, None, None, None, None))
            run.check(f"both classes populated at delta0={d0}", False, str(exc))
            continue
        rows.append((d0, rep.counts["transition"], rep.counts["horospherical"], rep.max_transition,
                     rep.max_horospherical, rep.gap))
        run.check(f"max transition defect < max horospherical defect at delta0={d0}",
                  rep.max_transition < rep.max_horospherical,
                  f"gap {fmt(rep.gap)}")
    run.csv("transition_summary.csv", ["delta0", "n_transition", "n_horospherical", "max_transition",
                                       "max_horospherical", "gap"], rows)


RUNNERS = {"ball": exp_ball, "green": exp_green, "floyd": exp_floyd, "ancona": exp_ancona,
           "hitting": exp_hitting, "boundary": exp_boundary, "transition": exp_transition}


# ---------------------------------------------------------------------------
# report


def report(results: Path) -> tuple[int, dict]:
    """Collate manifests under ``results``; returns (exit status, summary)."""
    manifests = sorted(results.rglob("manifest.json")) if results.is_dir() else []
    if not manifests:
        raise LabError(f"no manifest found under {results}")
    rows, warnings = [], []
    for p in manifests:
        try:
            man = json.loads(p.read_text())
            checks = man["assertions"]
            status = "PASS" if all(a["passed"] for a in checks) else "FAIL"
            rows.append({"run": str(p.parent.relative_to(results)) or ".", "experiment": man["experiment"],
                         "run_id": man["run_id"], "status": status,
                         "passed": sum(a["passed"] for a in checks), "total": len(checks)})
        except (OSError, ValueError, KeyError, TypeError) as exc:
            warnings.append(f"skipping corrupt manifest {p}: {exc}")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    failed = any(r["status"] == "FAIL" for r in rows)
    return (ASSERTION_FAILED if failed else OK), {"rows": rows, "warnings": warnings}


def _print_table(rows) -> None:
    head = ("run", "experiment", "status", "passed")
    data = [(r["run"], r["experiment"], r["status"], f"{r['passed']}/{r['total']}") for r in rows]
    widths = [max(len(h), *(len(d[i]) for d in data)) for i, h in enumerate(head)]
    for line in (head, *data):
        print("  ".join(c.ljust(w) for c, w in zip(line, widths)))


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Green function and Floyd boundary experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="worker processes (default: LAB_WORKERS or 1)")
    p.add_argument("--out", help="output directory (for report: the results directory)")
    p.add_argument("--validate-only", action="store_true", help="print the normalized config and stop")
    return p


def _config_error(problems) -> int:
    print(json.dumps({"error": "ConfigError",
                      "problems": [{"field": f, "message": msg} for f, msg in problems]}, indent=2),
          file=sys.stderr)
    return CONFIG_ERROR


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def execute(cfg: dict, out: Path, workers: int) -> int:
    """Run a validated config, write outputs plus manifest; return the exit status."""
    run = Run(cfg, out, workers)
    started = _now()
    try:
        RUNNERS[cfg["experiment"]](run)
    except Exception as exc:  # noqa: BLE001 - every failure must surface as error.json
        err = {"error": type(exc).__name__, "message": str(exc), "experiment": cfg["experiment"],
               "run_id": run.id}
        stats = getattr(exc, "stats", None)
        if stats:
            err["stats"] = stats
        if not isinstance(exc, LabError):
            err["traceback"] = traceback.format_exc()
        _atomic_write(out / "error.json", _json_bytes(err))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    for name, data in run.files.items():
        _atomic_write(out / name, data)
    manifest = {
        "run_id": run.id,
        "experiment": cfg["experiment"],
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": {n: hashlib.sha256(d).hexdigest() for n, d in sorted(run.files.items())},
        "assertions": run.assertions,
    }
    _atomic_write(out / "manifest.json", _json_bytes(manifest))
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    failed = [a for a in run.assertions if not a["passed"]]
    for a in failed:
        print(f"assertion failed: {a['name']} {a['detail']}".rstrip(), file=sys.stderr)
    print(f"{cfg['experiment']} run {run.id}: {len(run.assertions) - len(failed)}/{len(run.assertions)} "
          f"assertions passed -> {out}")
    return ASSERTION_FAILED if failed else OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = load(args.config) if args.config else {}
        if args.experiment == "report":
            if args.out:
                raw["results"] = args.out
            cfg = validate(raw, "report")
        else:
            if args.seed is not None:
                raw["seed"] = args.seed
            cfg = validate(raw, args.experiment)
    except ConfigError as exc:
        return _config_error(exc.problems)
    if args.validate_only:
        print(json.dumps(_jsonable(cfg), indent=2, sort_keys=True))
        return OK
    if args.experiment == "report":
        results = Path(cfg["results"])
        try:
            status, summary = report(results)
        except LabError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return RUNTIME_ERROR
        _print_table(summary["rows"])
        _atomic_write(results / "report.json", _json_bytes(summary))
        return status
    workers = resolve_workers(args.workers if args.workers is not None else cfg.get("workers"))
    out = Path(args.out or cfg.get("out") or f"runs/{cfg['experiment']}-{run_id(cfg)}")
    return execute(cfg, out, workers)


if __name__ == "__main__":
    sys.exit(main())
