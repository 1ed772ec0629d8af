"""Defect surveys, hitting radii, the Θ cocycle and the transition experiment."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .envelope import Envelope, monotone_envelope
from .errors import OutOfBallError, SamplingError, ValidationError
from .floyd import FloydFunction, floyd_graph
from .green import green_kernel, green_rows, hit_probability
from .groups import (CayleyBall, FreeProduct, as_element, format_word, from_blocks, from_letters,
                     inverse, layout, letters_of, multiply, to_blocks, word_length)
from .measures import StepMeasure, reflect
from .parallel import pmap, stream

STRATA = ("on", "near", "far")
DEFAULT_WEIGHTS = {"on": 0.5, "near": 0.3, "far": 0.2}


@dataclass
class DefectRecord:
    x: str
    y: str
    z: str
    defect: float
    floyd_lower: float
    floyd_upper: float
    collinear: bool
    stratum: str = ""
    transition: bool | None = None

    def row(self) -> dict:
        return asdict(self)


def _el(ball, x):
    return as_element(ball.spec, ball.element(x) if isinstance(x, (int, np.integer)) else x)


def centered_greens(ball: CayleyBall, m: StepMeasure, pairs, chunk: int = 32, tol: float = 1e-16):
    """G(x, y), G(x, e), G(e, y) and G(e, e) for pairs around the ball center.

    Every chunk of sources carries its own copy of the row from e, so a pair
    with x = e reproduces G(e, y) bit for bit.  The default tolerance is far
    below the solver default because far pairs have Green values near 1e-6
    and defects are differences of their logarithms.
    """
    idx = [(ball.resolve(x), ball.resolve(y)) for x, y in pairs]
    sources = sorted({i for i, _ in idx} - {0})
    col = {}
    if not sources:
        sources = [0]
    for k in range(0, len(sources), chunk):
        part = [0] + sources[k:k + chunk]
        vals, _ = green_rows(ball, m, part, tol=tol)
        e_row = vals[:, 0]
        for j, s in enumerate(part):
            col[s] = (vals[:, j], e_row)
    out = np.empty((len(idx), 4))
    for t, (i, j) in enumerate(idx):
        row, e_row = col[i]
        out[t] = row[j], row[0], e_row[j], e_row[0]
    return out


def _defect_value(gxy, gxe, gey, gee) -> float:
    return float(math.log(gxy * gee / (gxe * gey)))


def defect(ball: CayleyBall, m: StepMeasure, f: FloydFunction, x, y, z, hub: str = "components",
           floyd_ball: CayleyBall | None = None) -> DefectRecord:
    """d(x,z) + d(z,y) - d(x,y) in the Green metric, with δ^f_z(x, y).

    The triple is translated so that z becomes the ball center; both the
    Green values and the Floyd interval are then read off in that frame.
    """
    spec = ball.spec
    xe, ye, ze = _el(ball, x), _el(ball, y), _el(ball, z)
    zi = inverse(spec, ze)
    xs, ys = multiply(spec, zi, xe), multiply(spec, zi, ye)
    rec = _centered_record(ball, m, f, xs, ys, centered_greens(ball, m, [(xs, ys)])[0],
                           hub, floyd_ball)
    rec.x, rec.y, rec.z = (format_word(spec, w) for w in (xe, ye, ze))
    return rec


def _centered_record(ball, m, f, xs, ys, greens, hub, floyd_ball) -> DefectRecord:
    spec = ball.spec
    g = floyd_graph(floyd_ball or ball, f, 0, hub)
    up = g.upper(xs, ys)
    lo = min(g.lower(xs, ys), up)
    lx, ly = word_length(spec, xs), word_length(spec, ys)
    collinear = lx + ly == word_length(spec, multiply(spec, inverse(spec, xs), ys))
    return DefectRecord(format_word(spec, xs), format_word(spec, ys), "e", _defect_value(*greens),
                        lo, up, collinear)


# ---------------------------------------------------------------------------
# triple sampling


@dataclass(frozen=True)
class TripleSampler:
    """Triples (x, y, e) stratified by the Gromov product (x|y)_e.

    ``on``: product 0, so e lies on a geodesic from x to y; ``near``: product
    in [1, near]; ``far``: larger.  |x| and |y| never exceed ``max_radius``.
    """

    max_radius: int
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    near: int = 2
    attempts: int = 200

    def strata_counts(self, n: int) -> dict:
        w = {s: float(self.weights.get(s, 0.0)) for s in STRATA}
        tot = sum(w.values())
        if tot <= 0:
            raise ValidationError("stratum weights must not all vanish")
        counts = {s: int(math.floor(n * w[s] / tot)) for s in STRATA}
        for s in sorted(STRATA, key=lambda s: -w[s]):
            if sum(counts.values()) >= n:
                break
            counts[s] += 1
        return counts

    def draw(self, ball: CayleyBall, stratum: str, rng):
        spec = ball.spec
        top = self.max_radius
        for _ in range(self.attempts):
            if stratum == "on":
                k = 0
            elif stratum == "near":
                k = int(rng.integers(1, self.near + 1))
            else:
                k = int(rng.integers(self.near + 1, max(self.near + 2, top)))
            if k >= top:
                continue
            p = _random_sphere(ball, k, rng)
            a = int(rng.integers(1, top - k + 1))
            b = int(rng.integers(1, top - k + 1))
            x = multiply(spec, p, _random_sphere(ball, a, rng))
            y = multiply(spec, p, _random_sphere(ball, b, rng))
            lx, ly = word_length(spec, x), word_length(spec, y)
            if x == y or 0 in (lx, ly) or max(lx, ly) > top:
                continue
            gp = (lx + ly - word_length(spec, multiply(spec, inverse(spec, x), y))) / 2
            got = "on" if gp == 0 else ("near" if gp <= self.near else "far")
            if got == stratum:
                return x, y
        return None


def _random_sphere(ball: CayleyBall, r: int, rng):
    rng_ = ball.sphere(r)
    return ball.element(int(rng.integers(rng_.start, rng_.stop)))


def sample_triples(ball: CayleyBall, sampler: TripleSampler, n: int, seed: int) -> list:
    """Return ``[(x, y, stratum), ...]``; triple i uses stream (seed, 5, i)."""
    if 2 * sampler.max_radius > ball.radius:
        raise ValidationError(f"max_radius {sampler.max_radius} needs a ball of radius >= "
                              f"{2 * sampler.max_radius}")
    out = []
    i = 0
    for stratum, cnt in sampler.strata_counts(n).items():
        for _ in range(cnt):
            got = sampler.draw(ball, stratum, stream(seed, 5, i))
            i += 1
            if got is not None:
                out.append((got[0], got[1], stratum))
    return out


def _defect_task(shared, item):
    ball, m, f, hub, fb = shared
    x, y, stratum, greens = item
    rec = _centered_record(ball, m, f, x, y, greens, hub, fb)
    rec.stratum = stratum
    return rec


@dataclass
class Survey:
    records: list
    envelope: Envelope


def defect_survey(ball: CayleyBall, m: StepMeasure, f: FloydFunction, sampler: TripleSampler,
                  n_triples: int, seed: int, workers: int = 1, hub: str = "components",
                  floyd_ball: CayleyBall | None = None, min_triples: int = 100,
                  n_bins: int = 8) -> Survey:
    triples = sample_triples(ball, sampler, n_triples, seed)
    if len(triples) < min_triples:
        raise SamplingError(f"only {len(triples)} valid triples (need {min_triples})")
    greens = centered_greens(ball, m, [(x, y) for x, y, _ in triples])
    floyd_graph(floyd_ball or ball, f, 0, hub).lower_graph  # build before forking
    items = [(x, y, s, gr) for (x, y, s), gr in zip(triples, greens)]
    recs = pmap(_defect_task, items, workers, shared=(ball, m, f, hub, floyd_ball))
    env = monotone_envelope([r.floyd_lower for r in recs], [r.defect for r in recs], n_bins)
    return Survey(recs, env)


# ---------------------------------------------------------------------------
# hitting radii


@dataclass
class HittingRecord:
    x: str
    y: str
    floyd_lower: float
    floyd_upper: float
    radii: dict          # epsilon -> smallest radius, None when capacity ran out
    capacity: dict       # epsilon -> True when the search hit the ball capacity
    stratum: str = ""


def hitting_radius(ball, m, x, y, z, eps: float, r_max: int):
    """Smallest r <= r_max with P(hit B(z, r)) >= 1 - eps, or None."""
    if eps >= 1:
        return 0
    cache = {}

    def hp(r):
        if r not in cache:
            cache[r] = hit_probability(ball, m, x, y, z, r)
        return cache[r]

    if hp(r_max) < 1 - eps:
        return None
    lo, hi = -1, r_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hp(mid) >= 1 - eps:
            hi = mid
        else:
            lo = mid
    return hi


def _hit_task(shared, item):
    ball, m, f, eps_list, r_max, hub, fb = shared
    x, y, stratum = item
    g = floyd_graph(fb or ball, f, 0, hub)
    up = g.upper(x, y)
    lo = min(g.lower(x, y), up)
    radii, cap = {}, {}
    for eps in eps_list:
        r = hitting_radius(ball, m, x, y, ball.element(0), eps, r_max)
        radii[eps] = r
        cap[eps] = r is None
    spec = ball.spec
    return HittingRecord(format_word(spec, x), format_word(spec, y), lo, up, radii, cap, stratum)


@dataclass
class HittingSurvey:
    records: list
    envelopes: dict      # epsilon -> Envelope of the hitting radius against δ


def hitting_survey(ball: CayleyBall, m: StepMeasure, f: FloydFunction, eps_list, sampler: TripleSampler,
                   n_triples: int, seed: int, r_max: int | None = None, workers: int = 1,
                   hub: str = "components", floyd_ball: CayleyBall | None = None,
                   n_bins: int = 6) -> HittingSurvey:
    """Smallest radius around e met with probability 1 - ε, per triple and ε.

    Records whose search runs out of ball enter the envelope at ``r_max + 1``.
    """
    if r_max is None:
        r_max = ball.radius - 2 * sampler.max_radius
    if r_max < 0:
        raise ValidationError("r_max must be nonnegative")
    eps_list = [float(e) for e in eps_list]
    triples = sample_triples(ball, sampler, n_triples, seed)
    if not triples:
        raise SamplingError("no valid triples")
    floyd_graph(floyd_ball or ball, f, 0, hub).lower_graph
    recs = pmap(_hit_task, triples, workers, shared=(ball, m, f, eps_list, r_max, hub, floyd_ball))
    envs = {}
    for eps in eps_list:
        vals = [r_max + 1 if r.radii[eps] is None else r.radii[eps] for r in recs]
        envs[eps] = monotone_envelope([r.floyd_lower for r in recs], vals, n_bins)
    return HittingSurvey(recs, envs)


# ---------------------------------------------------------------------------
# Θ and the cocycle identity


def theta(ball: CayleyBall, m: StepMeasure, x, y) -> float:
    """G(x, y) / (G(x, e) G(e, y)) with e the ball center."""
    gxy, gxe, gey, _ = centered_greens(ball, m, [(_el(ball, x), _el(ball, y))])[0]
    return float(gxy / (gxe * gey))


def rho_green(ball: CayleyBall, m: StepMeasure, x, y) -> float:
    return 0.5 * math.log(theta(ball, m, x, y))


def naim_identity_residual(ball: CayleyBall, m: StepMeasure, g, x, y) -> float:
    """|Θ(g⁻¹x, g⁻¹y) K̂(g, x) K(g, y) / Θ(x, y) - 1|.

    G comes from the column kernel of m, Ĝ from the row kernel of the
    reflected measure; the two are computed by separate solves.
    """
    spec = ball.spec
    g, x, y = _el(ball, g), _el(ball, x), _el(ball, y)
    gi = inverse(spec, g)
    for w in (x, y, multiply(spec, gi, x), multiply(spec, gi, y)):
        if word_length(spec, w) > ball.radius:
            raise OutOfBallError(f"{format_word(spec, w)} is outside the ball")
    K = green_kernel(ball, m, "column")
    Kh = green_kernel(ball, reflect(m), "row")
    e = ball.element(0)
    try:
        lhs = (K.theta(multiply(spec, gi, x), multiply(spec, gi, y))
               * (Kh.green(g, x) / Kh.green(e, x)) * K.martin(g, y))
        return abs(lhs / K.theta(x, y) - 1.0)
    except OutOfBallError as exc:
        raise OutOfBallError(f"kernel argument outside the ball: {exc}") from exc


# ---------------------------------------------------------------------------
# transition points


@dataclass
class TransitionRecord:
    x: str
    y: str
    z: str
    floyd_lower: float
    floyd_upper: float
    depth: int
    cls: str            # "transition" | "horospherical" | "unclassified"
    defect: float


@dataclass
class TransitionReport:
    records: list
    max_transition: float
    max_horospherical: float
    counts: dict

    @property
    def gap(self) -> float:
        return self.max_horospherical - self.max_transition


def _syllable_depth(spec, letters, k) -> int:
    """Depth of prefix position k inside a syllable of an abelian factor of rank >= 2.

    Returns the smaller number of letters of that syllable on either side of
    the cut, or 0 when the cut falls between syllables or in a rank-1 factor.
    """
    lay = layout(spec)
    start = 0
    for j, vec in to_blocks(spec, from_letters(spec, letters)):
        n = sum(abs(c) for c in vec)
        if start < k < start + n:
            return min(k - start, start + n - k) if lay.dims[j] >= 2 else 0
        start += n
    return 0


def _deep_geodesic(ball, length, depth, rng):
    """A geodesic word of the given length whose middle sits inside a long abelian syllable."""
    spec = ball.spec
    lay = layout(spec)
    ab = [j for j, d in enumerate(lay.dims) if d >= 2]
    j = ab[int(rng.integers(len(ab)))]
    d = lay.dims[j]
    n = int(rng.integers(2 * depth, length + 1))
    parts = rng.multinomial(n, np.ones(d) / d)
    signs = rng.choice([-1, 1], size=d)
    vec = [int(s * c) for s, c in zip(signs, parts)]
    if sum(abs(c) for c in vec) != n:
        return None
    mid = from_blocks(spec, [(j, vec)])
    rest = length - n
    a = int(rng.integers(0, rest + 1))
    u = _random_sphere(ball, a, rng)
    w = _random_sphere(ball, rest - a, rng)
    g = multiply(spec, multiply(spec, u, mid), w)
    if word_length(spec, g) != length:
        return None
    return g, a + n // 2


def transition_samples(ball: CayleyBall, m: StepMeasure, f: FloydFunction, n_geodesics: int,
                       length: int, depth: int, seed: int, floyd_ball: CayleyBall | None = None,
                       hub: str = "components", deep_fraction: float = 0.5) -> list:
    """Split random word geodesics [e, g] at a cut point y; return unclassified records.

    A fraction ``deep_fraction`` of the geodesics is built around a long
    abelian syllable and cut in its middle, the rest are uniform on the
    sphere of radius ``length`` and cut at length // 2.  Records live in the
    frame where y is the identity, i.e. as the triple (y⁻¹, e, y⁻¹g).
    """
    spec = ball.spec
    lay = layout(spec)
    if not isinstance(spec, FreeProduct) or max(lay.dims) < 2:
        raise ValidationError("transition experiment needs a free product with an abelian factor of rank >= 2")
    if length > 2 * ball.radius:
        raise ValidationError("geodesic halves must fit the ball")
    fg = floyd_graph(floyd_ball or ball, f, 0, hub)
    rows = []
    for i in range(n_geodesics):
        rng = stream(seed, 6, i)
        got = _deep_geodesic(ball, length, depth, rng) if rng.random() < deep_fraction else None
        if got is None:
            g, k = _random_sphere(ball, length, rng), length // 2
        else:
            g, k = got
        if max(k, length - k) > ball.radius:
            continue
        lets = letters_of(spec, g)
        yi = inverse(spec, from_letters(spec, lets[:k]))
        rows.append((yi, multiply(spec, yi, g), _syllable_depth(spec, lets, k)))
    greens = centered_greens(ball, m, [(xs, zs) for xs, zs, _ in rows])
    recs = []
    for (xs, zs, dep), gr in zip(rows, greens):
        up = fg.upper(xs, zs)
        lo = min(fg.lower(xs, zs), up)
        recs.append(TransitionRecord(format_word(spec, xs), "e", format_word(spec, zs),
                                     lo, up, dep, "unclassified", _defect_value(*gr)))
    return recs


def classify_transitions(records: list, delta0: float, depth: int) -> TransitionReport:
    """Transition: Floyd lower bound >= delta0.  Horospherical: Floyd upper
    bound < delta0 and the cut at least ``depth`` letters inside a syllable of
    an abelian factor of rank >= 2."""
    out = []
    for r in records:
        if r.floyd_lower >= delta0:
            cls = "transition"
        elif r.floyd_upper < delta0 and r.depth >= depth:
            cls = "horospherical"
        else:
            cls = "unclassified"
        out.append(replace(r, cls=cls))
    counts = {c: sum(r.cls == c for r in out) for c in ("transition", "horospherical", "unclassified")}
    for c in ("transition", "horospherical"):
        if counts[c] == 0:
            raise SamplingError(f"no geodesic midpoint fell in the {c} class (delta0={delta0})")
    mt = max(r.defect for r in out if r.cls == "transition")
    mh = max(r.defect for r in out if r.cls == "horospherical")
    return TransitionReport(out, mt, mh, counts)


def transition_experiment(ball: CayleyBall, m: StepMeasure, f: FloydFunction, n_geodesics: int,
                          length: int, delta0: float, depth: int, seed: int,
                          floyd_ball: CayleyBall | None = None, hub: str = "components",
                          deep_fraction: float = 0.5) -> TransitionReport:
    recs = transition_samples(ball, m, f, n_geodesics, length, depth, seed, floyd_ball, hub,
                              deep_fraction)
    return classify_transitions(recs, delta0, depth)
