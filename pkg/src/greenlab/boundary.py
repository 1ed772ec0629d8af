"""Exit measures, drift, growth and bilateral transition statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import AlgebraError, RecurrenceSuspectError, ValidationError
from .floyd import FloydFunction, floyd_graph
from .green import Z99, green_row
from .groups import (CayleyBall, GroupSpec, build_ball, format_word, from_letters, inverse, layout,
                     letters_of, multiply, sphere_sizes)
from .measures import StepMeasure, reflect, sample_walk, step_table
from .parallel import BLOCK_SIZE, pmap, stream
from .walks import WalkModel, exit_prefixes, final_lengths


@dataclass
class ExitMeasure:
    """Cylinder masses at ``depth`` plus one refinement level.

    Keys are tuples of letters (normal-form prefixes).  ``counts`` are kept
    when the masses come from simulation.
    """

    spec: GroupSpec
    depth: int
    masses: dict
    refined: dict
    radius: int | None = None
    n_walks: int | None = None
    seed: int | None = None
    counts: dict = field(default_factory=dict)
    refined_counts: dict = field(default_factory=dict)

    def word(self, prefix) -> str:
        return format_word(self.spec, from_letters(self.spec, prefix))

    def rows(self, refined: bool = False) -> list:
        src = self.refined if refined else self.masses
        return [(self.word(p), src[p]) for p in sorted(src)]


def _exit_block(model, item):
    seed, b, n, R, depth, cap = item
    inc = model.draw(stream(seed, 3, b), (n, cap))
    pre, times = exit_prefixes(inc, R, depth + 1, model.supp_letters, model.supp_off, model.lf,
                               model.lc, model.ls, model.dims, model.dmax, model.letter_of)
    return pre, times


def exit_measure(spec: GroupSpec, m: StepMeasure, R: int, N: int, depth: int, seed: int,
                 workers: int = 1, step_cap: int | None = None) -> ExitMeasure:
    """First-exit distribution from B_R projected to depth-``depth`` prefixes."""
    if not 1 <= depth < R:
        raise ValidationError("need 1 <= depth < R")
    if N < 1:
        raise ValidationError("N must be >= 1")
    cap = step_cap or 20 * R + 100
    model = WalkModel(m)
    items = [(seed, b, min(BLOCK_SIZE, N - s), R, depth, cap)
             for b, s in enumerate(range(0, N, BLOCK_SIZE))]
    parts = pmap(_exit_block, items, workers, shared=model)
    fine = Counter()
    stuck = 0
    for pre, times in parts:
        stuck += int((times < 0).sum())
        for row in pre[times >= 0]:
            fine[tuple(int(v) for v in row)] += 1
    if stuck:
        raise RecurrenceSuspectError(f"{stuck} of {N} walks did not leave B_{R} within {cap} steps")
    coarse = Counter()
    for p, c in fine.items():
        coarse[p[:depth]] += c
    return ExitMeasure(spec, depth, {p: c / N for p, c in coarse.items()},
                       {p: c / N for p, c in fine.items()}, R, N, seed, dict(coarse), dict(fine))


def stationarity_residual(exit: ExitMeasure, m: StepMeasure) -> float:
    """Total variation between ν and Σ_g μ(g) g_*ν on the depth-m cylinders.

    The translate of a depth-(m+1) cylinder by a letter has a well defined
    depth-m prefix as long as all factors have rank 1 and steps have length
    at most 1; anything else raises AlgebraError.
    """
    spec = exit.spec
    if m.max_step > 1:
        raise AlgebraError("steps longer than one letter need deeper refinement; raise depth")
    if layout(spec).dmax > 1:
        raise AlgebraError("cylinders inside abelian syllables of rank >= 2 are not refinable")
    push = Counter()
    for q, mass in exit.refined.items():
        if len(q) != exit.depth + 1:
            raise AlgebraError("refined cylinders must have length depth + 1")
        for g, p in m.support:
            h = letters_of(spec, from_letters(spec, list(letters_of(spec, g)) + list(q)))
            if len(h) < exit.depth:
                raise AlgebraError("translate is shorter than the cylinder depth")
            push[tuple(h[: exit.depth])] += p * mass
    keys = set(push) | set(exit.masses)
    return 0.5 * math.fsum(abs(exit.masses.get(k, 0.0) - push.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# drift and growth


@dataclass
class DriftReport:
    word: float
    word_ci: float
    green: float | None
    green_ci: float | None
    growth: float | None
    n_walks: int
    steps: int
    window: tuple | None = None
    green_walks: int = 0

    @property
    def ratio(self) -> float | None:
        if self.green is None or not self.growth or not self.word:
            return None
        return self.green / (self.growth * self.word)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("word", "word_ci", "green", "green_ci", "growth",
                                             "n_walks", "steps", "green_walks")}
        out["window"] = list(self.window) if self.window else None
        out["ratio"] = self.ratio
        return out


def _drift_block(shared, item):
    model, table, dgreen, window = shared
    seed, b, n, T = item
    inc = model.draw(stream(seed, 4, b), (n, T))
    lens = final_lengths(inc, model.supp_letters, model.supp_off, model.lf, model.lc, model.ls,
                         model.dims, model.dmax)
    slopes = np.empty(0)
    if dgreen is not None:
        t0, t1 = window
        pos = np.zeros(n, dtype=np.int64)
        ts = np.arange(t0, t1 + 1)
        track = np.empty((n, len(ts)))
        for t in range(1, t1 + 1):
            ok = pos >= 0
            nxt = np.full(n, -1, dtype=np.int64)
            nxt[ok] = table[pos[ok], inc[ok, t - 1]]
            pos = nxt
            if t >= t0:
                track[:, t - t0] = np.where(pos >= 0, dgreen[np.maximum(pos, 0)], np.nan)
        good = ~np.isnan(track).any(axis=1)
        tc = ts - ts.mean()
        slopes = (track[good] - track[good].mean(axis=1, keepdims=True)) @ tc / (tc @ tc)
    return lens, slopes


def drift(spec: GroupSpec, m: StepMeasure, N: int, T: int, seed: int, ball: CayleyBall | None = None,
          workers: int = 1, margin: int = 2, growth_R: int = 12) -> DriftReport:
    """Word drift |ω_T|/T and Green drift along the same trajectories.

    The Green drift is the mean per-walk least-squares slope of d_G(e, ω_t)
    over t in [t_max/2, t_max], t_max = (R - margin) / max_step, using an
    in-ball solve.  This window is short, so the estimator carries a small
    transient bias; it is reported as is.
    """
    if N < 2 or T < 1:
        raise ValidationError("drift needs N >= 2 and T >= 1")
    model = WalkModel(m)
    dgreen = table = window = None
    if ball is not None:
        t1 = (ball.radius - margin) // m.max_step
        t0 = max(1, t1 // 2)
        if t1 < 2 or t1 > T:
            raise ValidationError(f"ball radius {ball.radius} leaves no usable Green window")
        phi, _ = green_row(ball, m, 0)
        with np.errstate(divide="ignore"):
            dgreen = -np.log(phi / phi[0])
        table = step_table(ball, m).astype(np.int64)
        window = (t0, t1)
    items = [(seed, b, min(BLOCK_SIZE, N - s), T) for b, s in enumerate(range(0, N, BLOCK_SIZE))]
    parts = pmap(_drift_block, items, workers, shared=(model, table, dgreen, window))
    lens = np.concatenate([p[0] for p in parts]) / T
    word = float(lens.mean())
    word_ci = float(Z99 * lens.std(ddof=1) / math.sqrt(N))
    green = green_ci = None
    n_green = 0
    if ball is not None:
        slopes = np.concatenate([p[1] for p in parts])
        n_green = len(slopes)
        if n_green < 2:
            raise ValidationError("ball too small: no walk stayed inside for the Green window")
        green = float(slopes.mean())
        green_ci = float(Z99 * slopes.std(ddof=1) / math.sqrt(n_green))
    h = growth_rate(spec, growth_R)
    return DriftReport(word, word_ci, green, green_ci, h, N, T, window, n_green)


def growth_rate(spec: GroupSpec, R_max: int) -> float:
    """Least-squares slope of log|S_R| over the top half of radii."""
    if R_max < 4:
        raise ValidationError("growth_rate needs R_max >= 4")
    sizes = sphere_sizes(spec, R_max)
    rs = np.arange((R_max + 1) // 2, R_max + 1)
    logs = np.log(np.array([float(sizes[r]) for r in rs]))
    return float(np.polyfit(rs, logs, 1)[0])


def fundamental_ratio(report: DriftReport) -> tuple:
    """ℓ_G / (h ℓ_word) with a first-order propagated 99% half-width."""
    if report.green is None:
        raise ValidationError("drift report carries no Green drift")
    r = report.ratio
    rel = math.hypot(report.green_ci / report.green, report.word_ci / report.word)
    return r, abs(r) * rel


# ---------------------------------------------------------------------------
# bilateral paths


def _bilateral_task(shared, item):
    g, path, lo_key, hi_key = shared
    n = item
    spec = g.ball.spec
    wi = inverse(spec, path[n])
    a = multiply(spec, wi, path[lo_key])
    b = multiply(spec, wi, path[hi_key])
    if a == b:
        return 0.0
    return g.lower(a, b)


def bilateral_lower_bounds(spec: GroupSpec, m: StepMeasure, f: FloydFunction, N_steps: int,
                           M_horizon: int, seed: int, floyd_R: int = 8, workers: int = 1) -> np.ndarray:
    """Floyd lower bounds δ^f_{ω_n}(ω_{-M}, ω_{N+M}) for n = 0..N.

    The forward half is walk 0 of stream ``seed`` under m, the backward half
    walk 1 under the reflected measure.
    """
    if N_steps < 0 or M_horizon < 1:
        raise ValidationError("need N_steps >= 0 and M_horizon >= 1")
    fwd = sample_walk(spec, m, seed, N_steps + M_horizon, walk=0)
    bwd = sample_walk(spec, reflect(m), seed, M_horizon, walk=1)
    path = {k: w for k, w in enumerate(fwd)}
    path.update({-k: w for k, w in enumerate(bwd)})
    g = floyd_graph(build_ball(spec, floyd_R), f, 0, "components")
    _ = g.lower_graph
    vals = pmap(_bilateral_task, range(N_steps + 1), workers,
                shared=(g, path, -M_horizon, N_steps + M_horizon))
    return np.array(vals)


def bilateral_transition_fraction(spec: GroupSpec, m: StepMeasure, f: FloydFunction, N_steps: int,
                                  M_horizon: int, eps: float, seed: int, floyd_R: int = 8,
                                  workers: int = 1) -> float:
    """Fraction of n in [0, N] whose Floyd separation of the horizon points exceeds eps.

    For eps <= 0 every n with distinct horizon points counts, since the Floyd
    distance of distinct points is positive even when the lower bound is 0.
    """
    if eps <= 0:
        fwd_end = sample_walk(spec, m, seed, N_steps + M_horizon, walk=0)[-1]
        bwd_end = sample_walk(spec, reflect(m), seed, M_horizon, walk=1)[-1]
        return 1.0 if fwd_end != bwd_end else 0.0
    lows = bilateral_lower_bounds(spec, m, f, N_steps, M_horizon, seed, floyd_R, workers)
    return float(np.mean(lows > eps))
