"""Finitely supported step distributions and the walks they drive."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .groups import (IDENTITY, CayleyBall, GroupSpec, as_element, format_word, generator,
                     inverse, layout, letters_of, multiply, word_length)
from .parallel import stream


@dataclass(frozen=True)
class StepMeasure:
    spec: GroupSpec
    support: tuple  # ((GroupElement, probability), ...)

    def __post_init__(self):
        supp = tuple((as_element(self.spec, g), float(p)) for g, p in self.support)
        object.__setattr__(self, "support", supp)
        if not supp:
            raise ValidationError("a step measure needs at least one atom")
        elems = [g for g, _ in supp]
        if len(set(elems)) != len(elems):
            raise ValidationError("duplicate atoms in step measure")
        if any(not p > 0 or not math.isfinite(p) for _, p in supp):
            raise ValidationError("atom probabilities must be positive")
        total = math.fsum(p for _, p in supp)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")

    @property
    def atoms(self) -> dict:
        return dict(self.support)

    @property
    def max_step(self) -> int:
        return max(word_length(self.spec, g) for g, _ in self.support)

    @property
    def min_prob(self) -> float:
        return min(p for _, p in self.support)

    def is_symmetric(self) -> bool:
        return reflect(self).atoms == self.atoms

    def describe(self) -> str:
        return ", ".join(f"{format_word(self.spec, g)}:{p!r}" for g, p in self.support)


def srw(spec: GroupSpec) -> StepMeasure:
    n = layout(spec).n_letters
    return StepMeasure(spec, tuple((generator(spec, ell), 1.0 / n) for ell in range(n)))


def dirac(spec: GroupSpec, g) -> StepMeasure:
    return StepMeasure(spec, ((as_element(spec, g), 1.0),))


def reflect(m: StepMeasure) -> StepMeasure:
    return StepMeasure(m.spec, tuple((inverse(m.spec, g), p) for g, p in m.support))


def parse_measure(spec: GroupSpec, text) -> StepMeasure:
    """``srw`` or atoms ``word:prob`` separated by commas/semicolons.

    Probabilities may be fractions such as ``2/3``.
    """
    if isinstance(text, StepMeasure):
        return text
    if isinstance(text, dict):
        items = list(text.items())
    else:
        body = str(text).strip()
        if body.lower() == "srw":
            return srw(spec)
        items = []
        for part in body.replace(";", ",").split(","):
            part = part.strip()
            if not part:
                continue
            if ":" not in part:
                raise ValidationError(f"atom {part!r} lacks ':probability'")
            w, p = part.rsplit(":", 1)
            items.append((w.strip(), p.strip()))
    atoms = []
    for w, p in items:
        try:
            if isinstance(p, str) and "/" in p:
                num, den = p.split("/")
                prob = float(num) / float(den)
            else:
                prob = float(p)
        except ValueError as exc:
            raise ValidationError(f"bad probability {p!r}") from exc
        atoms.append((as_element(spec, w), prob))
    return StepMeasure(spec, tuple(atoms))


# ---------------------------------------------------------------------------
# ball operators


@dataclass(frozen=True)
class MomentReport:
    max_step: int
    tail_mass: dict
    exp_moments: dict
    w_function: dict = field(default_factory=dict)


def moment_report(m: StepMeasure, c_values=(2.0,), w_points=()) -> MomentReport:
    lengths = [(word_length(m.spec, g), p) for g, p in m.support]
    K = max(n for n, _ in lengths)
    tail = {n: math.fsum(p for L, p in lengths if L > n) for n in range(K + 1)}
    moments = {c: math.fsum(p * c**L for L, p in lengths) for c in c_values}
    w = {}
    for n in w_points:
        cut = n / 100.0
        sigma = math.fsum(p for L, p in lengths if L > cut)
        w[n] = math.sqrt(n * math.log(1.0 / sigma)) if sigma > 0 else math.inf
    return MomentReport(K, tail, moments, w)


def step_table(ball: CayleyBall, m: StepMeasure) -> np.ndarray:
    """``table[i, s]`` = index of ``x_i · g_s`` or OUTSIDE (-1)."""
    return _step_table(ball, m)


@lru_cache(maxsize=8)
def _step_table(ball, m):
    if m.max_step > ball.radius:
        raise ValidationError(
            f"support element of length {m.max_step} does not fit a ball of radius {ball.radius}")
    n = len(ball)
    table = np.empty((n, len(m.support)), dtype=ball.adjacency.dtype)
    for s, (g, _) in enumerate(m.support):
        cur = np.arange(n, dtype=ball.adjacency.dtype)
        for ell in letters_of(m.spec, g):
            ok = cur >= 0
            nxt = np.full(n, -1, dtype=cur.dtype)
            nxt[ok] = ball.adjacency[cur[ok], ell]
            cur = nxt
        # a letter path can leave the ball and come back; such products are
        # still in the ball, so patch them exactly
        lost = np.nonzero(cur < 0)[0]
        if len(lost) and word_length(m.spec, g) > 1 and layout(m.spec).dmax > 1:
            for i in lost:
                if int(ball.dist[i]) + word_length(m.spec, g) > ball.radius:
                    y = multiply(m.spec, ball.element(int(i)), g)
                    if word_length(m.spec, y) <= ball.radius:
                        cur[i] = ball.index(y)
        table[:, s] = cur
    return table


def transition_matrix(ball: CayleyBall, m: StepMeasure) -> sp.csr_matrix:
    """Truncated substochastic operator ``P[x, x·g] = μ(g)`` on the ball."""
    return _transition_matrix(ball, m)


@lru_cache(maxsize=8)
def _transition_matrix(ball, m):
    table = step_table(ball, m)
    n, k = table.shape
    probs = np.array([p for _, p in m.support])
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = table.ravel().astype(np.int64)
    vals = np.tile(probs, n)
    keep = cols >= 0
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    P.sum_duplicates()
    return P


def iter_step_distributions(ball: CayleyBall, m: StepMeasure, x, n: int):
    """Yield ``(k, p^k(x, ·), absorbed_k)`` for k = 0..n."""
    P = transition_matrix(ball, m)
    PT = P.T.tocsr()
    leak = 1.0 - np.asarray(P.sum(axis=1)).ravel()
    cur = np.zeros(len(ball))
    cur[ball.resolve(x)] = 1.0
    absorbed = 0.0
    yield 0, cur, absorbed
    for k in range(1, n + 1):
        absorbed += float(cur @ leak)
        cur = PT @ cur
        yield k, cur, absorbed


@dataclass
class StepDistributions:
    probs: np.ndarray      # (n + 1, |ball|)
    absorbed: np.ndarray   # (n + 1,)


def n_step_probabilities(ball: CayleyBall, m: StepMeasure, x, n: int) -> StepDistributions:
    rows, absorbed = [], []
    for _, vec, ab in iter_step_distributions(ball, m, x, n):
        rows.append(vec.copy())
        absorbed.append(ab)
    return StepDistributions(np.vstack(rows), np.array(absorbed))


def sample_walk(spec: GroupSpec, m: StepMeasure, seed: int, length: int, walk: int = 0) -> list:
    """Positions ω_0 = e, ω_1, ..., ω_length of the walk with stream (seed, walk)."""
    if length < 0:
        raise ValidationError("walk length must be nonnegative")
    rng = stream(seed, 0, walk)
    steps = _draw(m, rng, length)
    out = [IDENTITY]
    cur = IDENTITY
    elems = [g for g, _ in m.support]
    for s in steps:
        cur = multiply(spec, cur, elems[s])
        out.append(cur)
    return out


def sample_bilateral_walk(spec, m, seed, seed_back, n_forward, n_back) -> dict:
    """Bilateral path: forward half from ``m``, backward half from the reflected measure.

    Returns a mapping n -> ω_n for -n_back <= n <= n_forward.
    """
    fwd = sample_walk(spec, m, seed, n_forward)
    bwd = sample_walk(spec, reflect(m), seed_back, n_back)
    path = {k: w for k, w in enumerate(fwd)}
    path.update({-k: w for k, w in enumerate(bwd)})
    return path


def _draw(m: StepMeasure, rng, size):
    probs = np.array([p for _, p in m.support])
    if np.all(probs == probs[0]):
        return rng.integers(0, len(probs), size=size)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def generates_check(ball: CayleyBall, m: StepMeasure, budget: int) -> bool:
    """Do products of at most ``budget`` atoms reach every element of sphere 1?"""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    spec = m.spec
    need = {ball.element(i) for i in ball.sphere(1)}
    atoms = [g for g, _ in m.support]
    seen = set()
    frontier = {IDENTITY}
    for _ in range(budget):
        frontier = {multiply(spec, a, g) for a in frontier for g in atoms} - seen
        seen |= frontier
        if need <= seen:
            return True
        if not frontier:
            break
    return need <= seen
