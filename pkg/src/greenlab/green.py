"""Green functions on Cayley balls: Neumann solves, Monte Carlo, kernels.

All ball solves work with the truncated operator ``P`` of a step measure
(mass leaving the ball is killed).  A restricted Green function forbids a
set of states at interior times only, so endpoints may be forbidden.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import GreenDivergenceError, OutOfBallError, PoleError, ValidationError
from .groups import (CayleyBall, GroupSpec, as_element, build_ball, inverse, multiply,
                     word_length)
from .measures import StepMeasure, iter_step_distributions, step_table, transition_matrix
from .parallel import BLOCK_SIZE, pmap, stream
from .walks import WalkModel, visit_counts

Z99 = 2.5758293035489004  # two-sided 99% normal quantile

TOL = 1e-12
PROBE = 50
STALL = 0.999
CONSECUTIVE = 3


@dataclass
class GreenEstimate:
    value: float
    method: str               # "Oracle" | "Solve" | "MonteCarlo"
    error: float
    radius: int | None = None
    samples: int | None = None
    seed: int | None = None
    sweeps: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class _Series:
    total: np.ndarray
    sweeps: int
    last_increment: float
    ratio: float


def _neumann(step, first, tol=TOL, probe=PROBE, stall=STALL, max_sweeps=200_000) -> _Series:
    """Sum ``first + step(first) + step(step(first)) + ...``.

    Stops after ``CONSECUTIVE`` sweeps with sup-norm increment below ``tol``.
    Raises GreenDivergenceError when the per-sweep decay factor measured over
    the last ``probe`` sweeps is not below ``stall``.
    """
    total = np.array(first, dtype=float, copy=True)
    term = total
    history = [float(np.abs(term).max()) if term.size else 0.0]
    quiet = 0
    ratio = 0.0
    sweeps = 0
    while True:
        term = step(term)
        sweeps += 1
        total += term
        inc = float(np.abs(term).max()) if term.size else 0.0
        history.append(inc)
        if inc == 0.0:
            break
        quiet = quiet + 1 if inc < tol else 0
        if quiet >= CONSECUTIVE:
            break
        if sweeps >= probe:
            old = history[-1 - probe]
            ratio = (inc / old) ** (1.0 / probe) if old > 0 else 0.0
            if ratio >= stall:
                raise GreenDivergenceError(
                    f"increments not decaying: per-sweep factor {ratio:.6f} >= {stall} over the "
                    f"last {probe} sweeps (sweep {sweeps}, increment {inc:.3e}); "
                    "the walk looks recurrent on this ball",
                    stats={"ratio": ratio, "sweeps": sweeps, "increment": inc, "probe": probe})
        if sweeps >= max_sweeps:
            raise GreenDivergenceError(f"no convergence after {max_sweeps} sweeps",
                                       stats={"sweeps": sweeps, "increment": inc})
    if len(history) > 2 and history[-2] > 0:
        ratio = min(ratio or history[-1] / history[-2], 0.999999)
    return _Series(total, sweeps, history[-1], ratio)


def _residual(series: _Series) -> float:
    q = series.ratio
    return series.last_increment * q / (1.0 - q) if q < 1 else math.inf


def _keep_mask(ball: CayleyBall, forbidden):
    if forbidden is None:
        return None
    idx = np.fromiter((ball.resolve(v) for v in forbidden), dtype=np.int64) \
        if not isinstance(forbidden, np.ndarray) else forbidden.astype(np.int64)
    keep = np.ones(len(ball), dtype=bool)
    keep[idx] = False
    return keep


@lru_cache(maxsize=8)
def _transpose(ball, m):
    return transition_matrix(ball, m).T.tocsr()


def green_rows(ball: CayleyBall, m: StepMeasure, sources, forbidden=None, tol=TOL):
    """Columns ``j`` hold ``G(sources[j], ., V)`` for the restricted set V."""
    PT = _transpose(ball, m)
    n = len(ball)
    src = [ball.resolve(s) for s in sources]
    E = np.zeros((n, len(src)))
    E[src, np.arange(len(src))] = 1.0
    keep = _keep_mask(ball, forbidden)
    if keep is None:
        series = _neumann(lambda t: PT @ t, E, tol)
        return series.total, series
    kk = keep[:, None]
    series = _neumann(lambda t: (PT @ t) * kk, E, tol)
    return E + PT @ series.total, series


def green_cols(ball: CayleyBall, m: StepMeasure, targets, forbidden=None, tol=TOL):
    """Columns ``j`` hold ``G(., targets[j], V)``."""
    P = transition_matrix(ball, m)
    n = len(ball)
    tgt = [ball.resolve(t) for t in targets]
    E = np.zeros((n, len(tgt)))
    E[tgt, np.arange(len(tgt))] = 1.0
    keep = _keep_mask(ball, forbidden)
    if keep is None:
        series = _neumann(lambda t: P @ t, E, tol)
        return series.total, series
    kk = keep[:, None]
    series = _neumann(lambda t: P @ (t * kk), P @ E, tol)
    return E + series.total, series


@lru_cache(maxsize=4)
def green_row(ball: CayleyBall, m: StepMeasure, x: int):
    """Unrestricted ``G(x, .)`` as a vector, with its series diagnostics."""
    vals, series = green_rows(ball, m, [x])
    return vals[:, 0], series


@lru_cache(maxsize=4)
def green_column(ball: CayleyBall, m: StepMeasure, y: int):
    vals, series = green_cols(ball, m, [y])
    return vals[:, 0], series


def green_solve(ball: CayleyBall, m: StepMeasure, x, y, forbidden=None, tol=TOL) -> GreenEstimate:
    xi, yi = ball.resolve(x), ball.resolve(y)
    if forbidden is None and tol == TOL:
        vec, series = green_row(ball, m, xi)
    else:
        vals, series = green_rows(ball, m, [xi], forbidden, tol)
        vec = vals[:, 0]
    return GreenEstimate(float(vec[yi]), "Solve", _residual(series), radius=ball.radius,
                         sweeps=series.sweeps)


# ---------------------------------------------------------------------------
# Monte Carlo


def _mc_block(model, item):
    seed, block, n_walks, horizon, tfac, tvec = item
    rng = stream(seed, 1, block)
    inc = model.draw(rng, (n_walks, horizon))
    counts = visit_counts(inc, model.supp_letters, model.supp_off, model.lf, model.lc,
                          model.ls, model.dims, model.dmax, tfac, tvec)
    return int(counts.sum()), int((counts.astype(np.int64) ** 2).sum())


def green_mc(spec: GroupSpec, m: StepMeasure, x, y, N: int, horizon: int, seed: int,
             workers: int = 1) -> GreenEstimate:
    """Mean number of visits to y at times 0..horizon for N walks from x."""
    if N < 1 or horizon < 1:
        raise ValidationError("green_mc needs N >= 1 and horizon >= 1")
    xe, ye = as_element(spec, x), as_element(spec, y)
    target = multiply(spec, inverse(spec, xe), ye)
    model = WalkModel(m)
    tfac, tvec = model.target_arrays(target)
    items = []
    for b, start in enumerate(range(0, N, BLOCK_SIZE)):
        items.append((seed, b, min(BLOCK_SIZE, N - start), horizon, tfac, tvec))
    parts = pmap(_mc_block, items, workers, shared=model)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / N
    if N > 1:
        var = max(s2 - N * mean * mean, 0.0) / (N - 1)
        err = Z99 * math.sqrt(var / N)
    else:
        err = math.inf
    return GreenEstimate(mean, "MonteCarlo", err, samples=N, seed=seed)


# ---------------------------------------------------------------------------
# derived quantities


def green_metric(ball: CayleyBall, m: StepMeasure, x, y) -> float:
    """-log G(x,y)/G(e,e), read from the row at e as G(e, x⁻¹y) when possible."""
    spec = ball.spec
    rel = multiply(spec, inverse(spec, ball._as_el(x)), ball._as_el(y))
    gee = green_solve(ball, m, 0, 0).value
    if word_length(spec, rel) <= ball.radius:
        gxy = green_solve(ball, m, 0, rel).value
    else:
        gxy = green_solve(ball, m, x, y).value
    return -math.log(gxy / gee)


@dataclass
class WeightedGreen:
    value: float
    last_increment: float
    n_terms: int
    diverged: bool


def weighted_green(ball: CayleyBall, m: StepMeasure, x, y, r: float, n_max: int = 2000,
                   tol: float = 1e-14, window: int = 50) -> WeightedGreen:
    """Partial sums of sum_n r^n p^n(x, y) with a growth monitor."""
    if r < 0:
        raise ValidationError("r must be nonnegative")
    yi = ball.resolve(y)
    total = 0.0
    scale = 1.0
    norms = []
    inc = 0.0
    for k, vec, _ in iter_step_distributions(ball, m, x, n_max):
        inc = scale * float(vec[yi])
        total += inc
        norms.append(scale * float(np.abs(vec).max()))
        if r == 0:
            return WeightedGreen(total, inc, 1, False)
        if len(norms) > window and norms[-1] > norms[-1 - window]:
            return WeightedGreen(total, inc, k + 1, True)
        if norms[-1] < tol:
            return WeightedGreen(total, inc, k + 1, False)
        scale *= r
    grew = len(norms) > window and norms[-1] > 0.5 * norms[-1 - window]
    return WeightedGreen(total, inc, n_max + 1, grew)


@lru_cache(maxsize=4)
def _small_ball(spec, r):
    return build_ball(spec, r)


def ball_indices_around(ball: CayleyBall, z, r: int) -> np.ndarray:
    """Indices of ball points within word distance r of z."""
    ze = ball._as_el(z)
    small = _small_ball(ball.spec, r)
    out = []
    for w in small.elements:
        p = multiply(ball.spec, ze, w)
        if word_length(ball.spec, p) <= ball.radius:
            out.append(ball.index(p))
    return np.array(sorted(out), dtype=np.int64)


def hit_probability(ball: CayleyBall, m: StepMeasure, x, y, z, r: int) -> float:
    """P_{x,y}(trajectory meets B(z, r)) = 1 - G(x,y,B(z,r)^c)/G(x,y)."""
    xi, yi = ball.resolve(x), ball.resolve(y)
    if ball.distance(z, xi) <= r or ball.distance(z, yi) <= r:
        return 1.0
    forbidden = ball_indices_around(ball, z, r)
    full = green_solve(ball, m, xi, yi).value
    if full <= 0:
        raise ValidationError("G(x, y) vanishes on this ball")
    restricted = green_solve(ball, m, xi, yi, forbidden=forbidden).value
    return float(min(1.0, max(0.0, 1.0 - restricted / full)))


def spectral_radius_lb(ball: CayleyBall, m: StepMeasure, iterations: int = 500,
                       rtol: float = 1e-13) -> float:
    """Power iteration ratio ||P^{k+1} 1|| / ||P^k 1|| on the truncated operator.

    For symmetric m this ratio increases with k towards the top eigenvalue of
    the truncated operator, which is itself at most the spectral radius.
    """
    if iterations < 10:
        raise ValidationError("iterations must be >= 10")
    P = transition_matrix(ball, m)
    v = np.ones(len(ball)) / math.sqrt(len(ball))
    lam = 0.0
    for _ in range(iterations):
        w = P @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        new = nw / float(np.linalg.norm(v))
        v = w / nw
        if abs(new - lam) <= rtol * new:
            return new
        lam = new
    return lam


def martin_kernel(ball: CayleyBall, m: StepMeasure, x, y) -> float:
    col, _ = green_column(ball, m, ball.resolve(y))
    return float(col[ball.resolve(x)] / col[0])


def harmonicity_defects(ball: CayleyBall, m: StepMeasure, y_target, xs) -> np.ndarray:
    yi = ball.resolve(y_target)
    xi = np.array([ball.resolve(x) for x in xs], dtype=np.int64)
    if np.any(xi == yi):
        raise PoleError("harmonicity defect requested at the pole")
    table = step_table(ball, m)[xi]
    if np.any(table < 0):
        raise OutOfBallError("some x·g leaves the ball")
    col, _ = green_column(ball, m, yi)
    K = col / col[0]
    probs = np.array([p for _, p in m.support])
    return np.abs(K[table] @ probs - K[xi])


def harmonicity_defect(ball: CayleyBall, m: StepMeasure, y_target, x) -> float:
    return float(harmonicity_defects(ball, m, y_target, [x])[0])


# ---------------------------------------------------------------------------
# trajectory lengths


@dataclass
class LengthDistribution:
    probs: np.ndarray
    tail_mass: float
    green: float


def length_distribution(ball: CayleyBall, m: StepMeasure, x, y, n_max: int) -> LengthDistribution:
    yi = ball.resolve(y)
    g = green_solve(ball, m, x, yi).value
    p = np.array([vec[yi] for _, vec, _ in iter_step_distributions(ball, m, x, n_max)])
    probs = p / g
    tail = max(0.0, 1.0 - math.fsum(probs))
    if tail > 1e-3:
        warnings.warn(f"n_max={n_max} leaves tail mass {tail:.3g} > 1e-3", RuntimeWarning)
    return LengthDistribution(probs, tail, g)


@dataclass
class TailFit:
    ok: bool
    phi: float
    D: float
    margin: float
    reason: str = ""
    slope_residual: float = 0.0


def _survival(dist: LengthDistribution):
    p = np.asarray(dist.probs, dtype=float)
    return np.cumsum(p[::-1])[::-1]


def fit_length_tail(dist: LengthDistribution, d_xy: int, max_rms: float = 0.25,
                    slack: float = 1e-10) -> TailFit:
    """Fit P(length >= M) ~ C phi^M and test P(length >= M) <= phi^(M - D d_xy)."""
    p = np.asarray(dist.probs, dtype=float)
    n_max = len(p) - 1
    surv = _survival(dist)
    lo, hi = n_max // 4, (3 * n_max) // 4
    Ms = np.arange(lo, hi + 1)
    nonzero = int(np.count_nonzero(p[lo:]))
    usable = Ms[surv[Ms] > 0]
    if nonzero < 10 or len(usable) < 10:
        return TailFit(False, math.nan, math.nan, math.nan, "too few nonzero tail points")
    A = np.vstack([np.ones(len(usable)), usable]).T
    logs = np.log(surv[usable])
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - logs) ** 2)))
    phi = float(math.exp(coef[1]))
    if not 0 < phi < 1 or rms > max_rms:
        return TailFit(False, phi, math.nan, math.nan, f"non-exponential tail (rms {rms:.3g})", rms)
    beyond = math.exp(coef[0] + coef[1] * (n_max + 1)) / (1 - phi)
    S = surv + beyond
    Mall = np.arange(n_max + 1)
    lphi = math.log(phi)
    if d_xy > 0:
        need = (np.log(S) - Mall * lphi) / (-d_xy * lphi)
        D = float(max(need.max(), 0.0))
    else:
        D = 0.0
    bound = np.exp((Mall - D * d_xy) * lphi)
    margin = float((bound - S).min())
    ok = margin >= -slack
    return TailFit(ok, phi, D, margin, "" if ok else "bound violated", rms)


# ---------------------------------------------------------------------------
# analytic oracle


@dataclass(frozen=True)
class TreeOracle:
    rank: int
    first_passage: float
    green_ee: float
    spectral_radius: float
    drift: float
    green_metric_slope: float

    def green(self, distance: int) -> float:
        return self.green_ee * self.first_passage**distance


def tree_oracle(k: int) -> TreeOracle:
    if k < 2:
        raise ValidationError("the tree oracle needs rank k >= 2 (rank 1 is recurrent)")
    q = 2 * k - 1
    # roots of q F^2 - (q + 1) F + 1 = 0 are 1 and 1/q; the transient one is 1/q
    F = 1.0 / q
    return TreeOracle(k, F, q / (q - 1.0), math.sqrt(q) / k, (k - 1) / k, math.log(q))


# ---------------------------------------------------------------------------
# equivariant kernels


class GreenKernel:
    """Left-invariant Green function read off a single ball solve.

    ``anchor='column'`` uses psi = G(., e) and G(x, y) = psi(y^-1 x);
    ``anchor='row'`` uses phi = G(e, .) and G(x, y) = phi(x^-1 y).
    Both extend the ball values by equivariance; they differ only through
    truncation at the ball boundary.
    """

    def __init__(self, ball: CayleyBall, m: StepMeasure, anchor: str = "column"):
        if anchor not in ("column", "row"):
            raise ValidationError(f"unknown kernel anchor {anchor!r}")
        self.ball, self.m, self.anchor = ball, m, anchor
        vec, series = green_column(ball, m, 0) if anchor == "column" else green_row(ball, m, 0)
        self.values = vec
        self.residual = _residual(series)
        self.spec = ball.spec
        self._memo = {}

    def _arg(self, x, y):
        if self.anchor == "column":
            return multiply(self.spec, inverse(self.spec, y), x)
        return multiply(self.spec, inverse(self.spec, x), y)

    def green(self, x, y) -> float:
        x, y = as_element(self.spec, x), as_element(self.spec, y)
        w = self._arg(x, y)
        if w not in self._memo:
            self._memo[w] = float(self.values[self.ball.index(w)])
        return self._memo[w]

    @property
    def green_ee(self) -> float:
        return float(self.values[0])

    def metric(self, x, y) -> float:
        return -math.log(self.green(x, y) / self.green_ee)

    def theta(self, x, y) -> float:
        e = self.ball.element(0)
        return self.green(x, y) / (self.green(x, e) * self.green(e, y))

    def martin(self, x, y) -> float:
        return self.green(x, y) / self.green(self.ball.element(0), y)


@lru_cache(maxsize=4)
def green_kernel(ball: CayleyBall, m: StepMeasure, anchor: str = "column") -> GreenKernel:
    return GreenKernel(ball, m, anchor)
