"""Acceptance criteria 1-16, one PASS/FAIL line each.

Criteria stated at R=16 run at R=14: a radius-16 ball of F₂ holds 86M
elements and exceeds the default memory cap.  Criterion 14's random
harmonicity check runs at R=12 so that 100 independent column solves fit.
"""

import json
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import F2, Z2Z, ball, record
from greenlab.ancona import (TripleSampler, defect_survey, hitting_survey, naim_identity_residual, sample_triples,
                             transition_experiment)
from greenlab.boundary import drift, exit_measure, fundamental_ratio
from greenlab.cli import main
from greenlab.errors import CapacityError
from greenlab.floyd import floyd_distance, helper_e, helper_e_closed_form, make_floyd
from greenlab.green import (fit_length_tail, green_mc, green_metric, green_row, green_rows, green_solve,
                            harmonicity_defect, hit_probability, length_distribution, martin_kernel, spectral_radius_lb)
from greenlab.groups import build_ball, inverse, multiply, word_length
from greenlab.measures import srw, step_table

EXP = make_floyd("exp", 0.5)
LN3 = math.log(3)
BIG = 14
CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# regression baselines from the first validated runs
HITTING_RAW = [math.nan, 3.0, 2.0, 1.0, 0.0]
TRANSITION_GAP = 2.19619511012054


@pytest.fixture(scope="module")
def f2_big():
    return ball("free(2)", BIG)


def test_radius_sixteen_exceeds_capacity():
    with pytest.raises(CapacityError):
        build_ball(F2, 16)


def test_criterion_01_tree_green_value():
    m = srw(F2)
    t0 = time.perf_counter()
    b = ball("free(2)", BIG)
    solve = green_solve(b, m, "e", "e")
    t_solve = time.perf_counter() - t0
    t0 = time.perf_counter()
    mc = green_mc(F2, m, "e", "e", 10**6, 200, seed=2026)
    t_mc = time.perf_counter() - t0
    ok = (abs(solve.value - 1.5) <= 1e-6 and abs(mc.value - 1.5) <= 0.01
          and abs(mc.value - 1.5) <= mc.error and t_solve < 60 and t_mc < 60)
    record(1, ok, f"solve {solve.value:.9f} (R={BIG}, {t_solve:.1f}s); mc {mc.value:.5f} ± {mc.error:.5f} "
                  f"({t_mc:.1f}s)")
    assert ok


def test_criterion_02_green_metric_linear(f2_big):
    m = srw(F2)
    errs = [abs(green_metric(f2_big, m, "e", f"a^{n}") - n * LN3) for n in range(1, 7)]
    ok = max(errs) <= 1e-3
    record(2, ok, f"max |d_G(e,a^n) - n ln3| = {max(errs):.2e} over n=1..6 (R={BIG})")
    assert ok


def test_criterion_03_ancona_exact_on_tree():
    b = ball("free(2)", 10)
    sv = defect_survey(b, srw(F2), EXP, TripleSampler(5, {"on": 1.0}), 100, seed=303,
                       floyd_ball=ball("free(2)", 8))
    coll = [r for r in sv.records if r.collinear]
    worst = max(abs(r.defect) for r in coll)
    ok = len(coll) == 100 and worst <= 1e-6
    record(3, ok, f"{len(coll)} collinear triples, max |defect| = {worst:.2e}")
    assert ok


def test_criterion_04_spectral_radius():
    m = srw(F2)
    vals = [spectral_radius_lb(ball("free(2)", R), m) for R in (8, 10, 12, BIG)]
    target = math.sqrt(3) / 2
    mono = all(a <= b for a, b in zip(vals, vals[1:]))
    ok = abs(vals[-1] - target) <= 2e-3 and mono
    record(4, ok, f"lambda(R={BIG}) = {vals[-1]:.6f} vs {target:.6f} (gap {target - vals[-1]:.2e}); "
                  f"monotone over R=8..{BIG}: {mono}; values {[round(v, 6) for v in vals]}")
    assert ok


def test_criterion_05_drift(f2_big):
    rep = drift(F2, srw(F2), 10_000, 2000, seed=9, ball=f2_big)
    r, ci = fundamental_ratio(rep)
    ok = abs(rep.word - 0.5) <= 0.01 and abs(r - 1) <= 0.03
    record(5, ok, f"word drift {rep.word:.5f} ± {rep.word_ci:.5f}; fundamental ratio {r:.4f} ± {ci:.4f}")
    assert ok


def test_criterion_06_harmonic_measure():
    ex = exit_measure(F2, srw(F2), 30, 10**5, 1, seed=606)
    d2 = {}
    for q, c in ex.refined_counts.items():
        d2[q] = c
    d1_from_d2 = {}
    for q, c in d2.items():
        d1_from_d2[q[:1]] = d1_from_d2.get(q[:1], 0) + c
    consistent = d1_from_d2 == ex.counts and sum(ex.counts.values()) == 10**5
    dev1 = max(abs(v - 0.25) for v in ex.masses.values())
    dev2 = max(abs(c / 10**5 - 1 / 12) for c in d2.values())
    ok = len(ex.masses) == 4 and len(d2) == 12 and dev1 <= 0.01 and dev2 <= 0.005 and consistent
    record(6, ok, f"max depth-1 deviation {dev1:.4f}, max depth-2 deviation {dev2:.4f}, "
                  f"depth-consistent counts: {consistent}")
    assert ok


def test_criterion_07_floyd_interval():
    ivs = [floyd_distance(ball("free(2)", R), EXP, "e", "a", "a^-1") for R in (6, 8, 10, 12)]
    widths = [iv.width for iv in ivs]
    ok = (all(iv.contains(2.0) and iv.upper == 2.0 for iv in ivs)
          and all(a > b for a, b in zip(widths, widths[1:])))
    record(7, ok, f"upper {[iv.upper for iv in ivs]}, widths {[f'{w:.3e}' for w in widths]}")
    assert ok


def test_criterion_08_horosphere_collapse(f2_big):
    z2 = floyd_distance(ball("abelian(2)", BIG), EXP, "e", "x^10", "y^10").upper
    f2 = floyd_distance(f2_big, EXP, "e", "a^10", "b^10").upper
    ok = z2 <= 0.04 and f2 >= 3.9
    record(8, ok, f"Z² upper {z2:.5f} <= 0.04, F₂ upper {f2:.5f} >= 3.9 (R={BIG})")
    assert ok


def test_criterion_09_helper_e():
    rs = np.linspace(1, 60, 119)
    rel = max(abs(helper_e(EXP, 2.0, r) / helper_e_closed_form(EXP, 2.0, r) - 1) for r in rs)
    es = [helper_e(EXP, 2.0, r) for r in rs]
    dec = all(a > b for a, b in zip(es, es[1:]))
    grow = [(helper_e(EXP, 2.0, r) - helper_e(EXP, 2.0, 2 * r)) / (r * EXP(r)) for r in (5, 10, 20, 40)]
    inc = all(a < b for a, b in zip(grow, grow[1:]))
    ok = rel <= 1e-6 and dec and inc
    record(9, ok, f"max relative error {rel:.1e}; decreasing {dec}; growth ratios increasing {inc}")
    assert ok


def test_criterion_10_harnack_and_two_sided(f2_big):
    m = srw(F2)
    b = ball("free(2)", 12)
    rng = np.random.default_rng(1010)
    sources = [int(s) for s in rng.choice(b.sphere_offsets[4], 20, replace=False)]
    rows, _ = green_rows(b, m, sources)
    table = step_table(b, m)
    mu = np.array([p for _, p in m.support])
    inner = np.arange(b.sphere_offsets[9])
    worst = math.inf
    n_conf = 0
    for j in range(len(sources)):
        ys = rng.choice(inner, 50, replace=False)
        ss = rng.integers(0, len(mu), 50)
        g = rows[:, j]
        slack = g[table[ys, ss]] - mu[ss] * g[ys]
        worst = min(worst, float(slack.min()))
        n_conf += len(ys)
    harnack = n_conf == 1000 and worst >= -1e-10
    row, _ = green_row(f2_big, m, 0)
    logs = np.log(row)
    bound = f2_big.dist.astype(float) * math.log(4)
    bad = np.nonzero(np.abs(logs) > bound)[0]
    two_sided = len(bad) == 0
    where = ", ".join(f"{f2_big.word(int(i))} (log G = {logs[i]:.4f})" for i in bad[:3])
    ok = harnack and two_sided
    record(10, ok, f"Harnack on {n_conf} configurations, min slack {worst:.2e}; two-sided bound violated at "
                   f"{len(bad)} of {len(row)} points{': ' + where if where else ''}")
    assert ok


def test_criterion_11_hitting():
    f2 = ball("free(2)", 10)
    mf = srw(F2)
    on = []
    rng = np.random.default_rng(1111)
    for _ in range(30):
        g, h = (int(t) for t in rng.choice(np.arange(f2.sphere_offsets[1], f2.sphere_offsets[4]), 2))
        x, y = f2.element(g), f2.element(h)
        if word_length(F2, multiply(F2, inverse(F2, x), y)) != word_length(F2, x) + word_length(F2, y):
            continue
        on.append(hit_probability(f2, mf, x, y, "e", 0))
    exact = len(on) >= 10 and all(abs(v - 1.0) <= 1e-10 for v in on)

    z = ball("product(abelian(2), abelian(1))", 8)
    mz = srw(Z2Z)
    triples = sample_triples(z, TripleSampler(2), 80, seed=1112)[:50]
    nondec = True
    for x, y, _ in triples:
        vals = [hit_probability(z, mz, x, y, "e", r) for r in range(5)]
        nondec &= all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    hs = hitting_survey(z, mz, EXP, [0.1], TripleSampler(3), 30, seed=22, n_bins=5)
    env = hs.envelopes[0.1]
    mono = bool(np.all(np.diff(env.values) <= 0))
    baseline = np.array_equal(env.raw, HITTING_RAW, equal_nan=True)
    ok = exact and len(triples) == 50 and nondec and mono and baseline
    record(11, ok, f"{len(on)} on-geodesic hits = 1; nondecreasing in r on {len(triples)} triples: {nondec}; "
                   f"envelope {env.values.tolist()} nonincreasing: {mono}; raw matches baseline: {baseline}")
    assert ok


def test_criterion_12_length_tail():
    b = ball("free(2)", 12)
    fit = fit_length_tail(length_distribution(b, srw(F2), "e", "e", 400), 0)
    ok = fit.ok and 0.8 < fit.phi < 0.93
    record(12, ok, f"phi = {fit.phi:.4f}, bound margin {fit.margin:.2e} (ok={fit.ok})")
    assert ok


def _naim_configs(b, n, seed):
    rng = np.random.default_rng(seed)
    pool = np.arange(b.sphere_offsets[3])
    spec = b.spec
    out = []
    while len(out) < n:
        g, x, y = (b.element(int(t)) for t in rng.choice(pool, 3))
        gi = inverse(spec, g)
        if all(word_length(spec, multiply(spec, gi, w)) <= b.radius - 2 for w in (x, y)):
            out.append((g, x, y))
    return out


def test_criterion_13_naim_identity():
    worst = {}
    for name, text, R in (("F₂", "free(2)", 10), ("Z²*Z", "product(abelian(2), abelian(1))", 8)):
        b = ball(text, R)
        m = srw(b.spec)
        worst[name] = max(naim_identity_residual(b, m, g, x, y) for g, x, y in _naim_configs(b, 100, 1313))
    ok = all(v <= 1e-8 for v in worst.values())
    record(13, ok, "max residual over 100 configurations: " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_14_martin(f2_big):
    m = srw(F2)
    b = ball("free(2)", 12)
    rng = np.random.default_rng(1414)
    worst = 0.0
    for _ in range(100):
        y = int(rng.integers(b.sphere_offsets[10], b.sphere_offsets[11]))
        x = int(rng.integers(0, b.sphere_offsets[5]))
        worst = max(worst, harmonicity_defect(b, m, y, x))
    ka = martin_kernel(f2_big, m, "a", "a^8")
    kb = martin_kernel(f2_big, m, "b", "a^8")
    ok = worst <= 1e-6 and abs(ka - 3) <= 1e-3 and abs(kb - 1 / 3) <= 1e-3
    record(14, ok, f"max harmonicity defect {worst:.2e} (R=12); K(a,a^8) = {ka:.6f}, K(b,a^8) = {kb:.6f} (R={BIG})")
    assert ok


def test_criterion_15_transition():
    b = ball("product(abelian(2), abelian(1))", 8)
    rep = transition_experiment(b, srw(Z2Z), EXP, 60, 8, 1.0, 3, seed=11)
    ok = rep.max_transition < rep.max_horospherical and rep.gap == pytest.approx(TRANSITION_GAP, rel=1e-9)
    record(15, ok, f"max transition defect {rep.max_transition:.4f} < max horospherical {rep.max_horospherical:.4f}; "
                   f"gap {rep.gap:.6f} (baseline {TRANSITION_GAP:.6f}); counts {rep.counts}")
    assert ok


def _data_files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_criterion_16_determinism(tmp_path):
    paths = sorted(CONFIGS.glob("*.json"))
    same = {}
    for p in paths:
        exp = json.loads(p.read_text())["experiment"]
        outs = []
        for workers in (1, 8):
            out = tmp_path / f"{exp}-{workers}"
            assert main([exp, "--config", str(p), "--workers", str(workers), "--out", str(out)]) == 0
            outs.append(_data_files(out))
        same[exp] = outs[0] == outs[1] and bool(outs[0])
        shutil.rmtree(tmp_path / f"{exp}-1")
        shutil.rmtree(tmp_path / f"{exp}-8")
    ok = len(same) == 7 and all(same.values())
    record(16, ok, "byte-identical at workers 1 and 8: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
