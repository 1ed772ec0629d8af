"""Floyd rescaling functions and two-sided Floyd distance bounds on balls."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import integrate, special
from scipy.sparse import csgraph

from .errors import NumericError, OutOfBallError, ValidationError
from .groups import OUTSIDE, CayleyBall, as_element, from_blocks, geodesic, to_blocks, word_length


@dataclass(frozen=True)
class FloydFunction:
    """A nonincreasing summable ``f`` with ``f(n)/f(n+1) <= kappa``.

    kind ``exp``: f(n) = lam**n; kind ``poly``: f(n) = (n+1)**-a; kind
    ``table``: given values, extended geometrically with ratio ``q``.
    """

    kind: str
    params: tuple
    kappa: float

    def __str__(self):
        if self.kind == "table":
            vals = ", ".join(repr(v) for v in self.params[:-1])
            return f"table({vals}; q={self.params[-1]!r})"
        return f"{self.kind}({self.params[0]!r})"

    # values -----------------------------------------------------------
    def _at_int(self, n):
        n = np.asarray(n, dtype=np.int64)
        vals = np.asarray(self.params[:-1])
        q = self.params[-1]
        L = len(vals)
        inside = np.minimum(n, L - 1)
        return np.where(n < L, vals[inside], vals[-1] * q ** (n - L + 1.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exp":
            out = self.params[0] ** t
        elif self.kind == "poly":
            out = (t + 1.0) ** (-self.params[0])
        else:
            lo = np.floor(t)
            frac = t - lo
            out = (1 - frac) * self._at_int(lo) + frac * self._at_int(lo + 1)
        return float(out) if out.ndim == 0 else out

    def tail(self, R: int) -> float:
        return tail(self, R)

    def alpha(self, s: float) -> float:
        """Integral of f over [s, inf)."""
        if self.kind == "exp":
            lam = self.params[0]
            return lam**s / math.log(1.0 / lam)
        if self.kind == "poly":
            a = self.params[0]
            return (s + 1.0) ** (1.0 - a) / (a - 1.0)
        n0 = math.ceil(s)
        head = (n0 - s) * (self(s) + self(n0)) / 2.0
        return head + 0.5 * (tail(self, n0) + tail(self, n0 + 1))


def make_floyd(kind: str, *params) -> FloydFunction:
    kind = kind.lower()
    if kind in ("exp", "exponential"):
        (lam,) = params
        lam = float(lam)
        if not 0.0 < lam < 1.0:
            raise ValidationError(f"exponential Floyd function needs lambda in (0,1), got {lam}")
        return FloydFunction("exp", (lam,), 1.0 / lam)
    if kind in ("poly", "polynomial"):
        (a,) = params
        a = float(a)
        if not a > 1.0:
            raise ValidationError(f"polynomial Floyd function needs a > 1 for summability, got {a}")
        return FloydFunction("poly", (a,), 2.0**a)
    if kind == "table":
        if len(params) == 1 and not np.isscalar(params[0]):
            values, q = list(params[0]), None
        elif len(params) == 2 and not np.isscalar(params[0]):
            values, q = list(params[0]), params[1]
        else:
            values, q = list(params), None
        values = [float(v) for v in values]
        if not values or any(not v > 0 for v in values):
            raise ValidationError("table values must be positive")
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValidationError("table values must be nonincreasing")
        if q is None:
            if len(values) < 2:
                raise ValidationError("a one-entry table needs an explicit tail ratio")
            q = values[-1] / values[-2]
        q = float(q)
        if not 0.0 < q < 1.0:
            raise ValidationError(f"geometric tail ratio must lie in (0,1) for summability, got {q}")
        ratios = [a / b for a, b in zip(values, values[1:])] + [1.0 / q]
        return FloydFunction("table", tuple(values) + (q,), max(ratios))
    raise ValidationError(f"unknown Floyd kind {kind!r}")


_FLOYD_RE = re.compile(r"^\s*(exp|poly|table)\s*\((.*)\)\s*$", re.IGNORECASE)


def parse_floyd(text) -> FloydFunction:
    if isinstance(text, FloydFunction):
        return text
    mt = _FLOYD_RE.match(str(text))
    if not mt:
        raise ValidationError(f"cannot parse Floyd spec {text!r}")
    kind, body = mt.group(1).lower(), mt.group(2)
    q = None
    if ";" in body:
        body, rest = body.split(";", 1)
        rest = rest.strip()
        if rest.startswith("q="):
            rest = rest[2:]
        q = float(rest)
    try:
        nums = [float(t) for t in body.split(",") if t.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad number in Floyd spec {text!r}") from exc
    if kind == "table":
        return make_floyd("table", nums, q) if q is not None else make_floyd("table", nums)
    if len(nums) != 1:
        raise ValidationError(f"{kind} takes exactly one parameter")
    return make_floyd(kind, nums[0])


def tail(f: FloydFunction, R: int) -> float:
    """Sum of f(k) over k >= R."""
    if R < 0:
        raise ValidationError("tail index must be nonnegative")
    if f.kind == "exp":
        lam = f.params[0]
        return lam**R / (1.0 - lam)
    if f.kind == "poly":
        # Hurwitz zeta: sum_{k>=0} (k + R + 1)^-a
        return float(special.zeta(f.params[0], R + 1))
    vals, q = f.params[:-1], f.params[-1]
    L = len(vals)
    if R >= L:
        return vals[-1] * q ** (R - L + 1) / (1.0 - q)
    return math.fsum(vals[R:]) + vals[-1] * q / (1.0 - q)


# ---------------------------------------------------------------------------
# helper function e(r) and h(r)


def _g(f: FloydFunction, tau: float, t: float) -> float:
    s = t / tau
    return f(s) / math.sqrt(f.alpha(s))


def helper_e(f: FloydFunction, tau: float = 2.0, r: float = 1.0) -> float:
    """e(r) = integral over [r, inf) of f(t/tau) / sqrt(alpha(t/tau)).

    The finite part is integrated adaptively; beyond the cut point T the
    antiderivative -2 tau sqrt(alpha(t/tau)) closes the improper tail.
    """
    if not r > 0:
        raise ValidationError("helper_e needs r > 0")
    if not tau > 1:
        raise ValidationError("helper_e needs tau > 1")
    a0 = f.alpha(r / tau)
    cuts = [r]
    while f.alpha(cuts[-1] / tau) > 1e-4 * a0 and len(cuts) < 24:
        cuts.append(2.0 * cuts[-1])
    T = cuts[-1] if len(cuts) > 1 else 2.0 * r
    knots = []
    if f.kind == "table":
        L = len(f.params) - 1
        knots = [tau * k for k in range(math.ceil(r / tau), L + 2) if r < tau * k < T]
    pts = sorted(set(cuts + knots + [T]))
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        val, err, info = integrate.quad(lambda t: _g(f, tau, t), lo, hi, epsabs=0.0,
                                        epsrel=1e-11, limit=400, full_output=1)[:3]
        if err > 1e-9 * max(abs(val), 1e-300):
            raise NumericError(f"quadrature on [{lo}, {hi}] did not converge (err {err:.3g})")
        total += val
    return total + 2.0 * tau * math.sqrt(f.alpha(T / tau))


def helper_e_closed_form(f: FloydFunction, tau: float, r: float) -> float:
    """Closed form for exponential f: (2 tau / sqrt(ln 1/lam)) lam^(r / 2 tau)."""
    if f.kind != "exp":
        raise ValidationError("closed form is available for exponential Floyd functions only")
    lam = f.params[0]
    return 2.0 * tau / math.sqrt(math.log(1.0 / lam)) * lam ** (r / (2.0 * tau))


def h_constant(f: FloydFunction, K: float) -> float:
    """C(K) = kappa^[K/2 + 1] / K with [.] the integer part."""
    return f.kappa ** math.floor(K / 2.0 + 1.0) / K


def h_growth(f: FloydFunction, tau: float, r: float, K: float) -> float:
    if not (r > 0 and K > 0):
        raise ValidationError("h_growth needs r > 0 and K > 0")
    return h_constant(f, K) * (helper_e(f, tau, r) - helper_e(f, tau, tau * r)) / (K * f(r))


# ---------------------------------------------------------------------------
# distances on balls


def ball_bfs(ball: CayleyBall, source: int) -> np.ndarray:
    """Graph distances from ``source`` inside the ball.

    For free products of free abelian groups every pair of ball points is
    joined by a geodesic inside the ball, so these are word distances.
    """
    n = len(ball)
    dist = np.full(n, -1, dtype=np.int32)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    level = 0
    adj = ball.adjacency
    while len(frontier):
        level += 1
        nb = adj[frontier].ravel()
        nb = nb[nb >= 0]
        nb = np.unique(nb[dist[nb] < 0])
        dist[nb] = level
        frontier = nb
    return dist


@dataclass(frozen=True)
class FloydDistanceBound:
    lower: float
    upper: float
    radius_used: int
    basepoint: int
    endpoints: tuple

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


class FloydGraph:
    """Weighted ball graph for a fixed (ball, f, basepoint).

    ``hub='single'`` joins all sphere-R vertices to one zero-cost hub;
    ``hub='components'`` uses one hub per connected component of the
    complement of the ball, which is still a relaxation of every outside
    excursion and also gives far endpoints a node to start from.
    """

    def __init__(self, ball: CayleyBall, f: FloydFunction, v: int = 0, hub: str = "single"):
        if hub not in ("single", "components"):
            raise ValidationError(f"unknown hub mode {hub!r}")
        self.ball, self.f, self.v, self.hub = ball, f, int(v), hub
        self.dv = ball.dist.astype(np.int64) if self.v == 0 else ball_bfs(ball, self.v).astype(np.int64)
        lay = ball.layout
        src, dst = [], []
        for ell in range(0, lay.n_letters, 2):
            t = ball.adjacency[:, ell]
            ok = np.nonzero(t >= 0)[0]
            src.append(ok)
            dst.append(t[ok].astype(np.int64))
        self._a = np.concatenate(src)
        self._b = np.concatenate(dst)
        self._w = np.asarray(f(np.minimum(self.dv[self._a], self.dv[self._b])), dtype=float)
        self._upper = None
        self._lower = None
        self._class = None
        self._comp_lookup = None
        self._cache_up = {}
        self._cache_lo = {}

    # graphs -----------------------------------------------------------
    @property
    def upper_graph(self):
        if self._upper is None:
            n = len(self.ball)
            self._upper = sp.csr_matrix(
                (np.concatenate([self._w, self._w]),
                 (np.concatenate([self._a, self._b]), np.concatenate([self._b, self._a]))),
                shape=(n, n))
        return self._upper

    def _classes(self):
        ball = self.ball
        R = ball.radius
        n = len(ball)
        first = int(ball.sphere_offsets[R])
        cls = np.arange(n, dtype=np.int64)
        if self.hub == "single" or R == 0:
            cls[first:] = first
            return cls, first + 1
        lay = ball.layout
        bnd = np.arange(first, n, dtype=np.int64)
        keys, owners = [], []
        for ell in range(lay.n_letters):
            out = bnd[ball.adjacency[bnd, ell] == OUTSIDE]
            if not len(out):
                continue
            j = int(lay.letter_factor[ell])
            s = int(lay.letter_sign[ell]) if lay.dims[j] == 1 else 0
            merge = ball.factor[out].astype(np.int64) == j
            p = np.where(merge, ball.prefix[out].astype(np.int64), out)
            keys.append(self._comp_key(p, j, s))
            owners.append(out - first)
        keys = np.concatenate(keys)
        owners = np.concatenate(owners)
        ukeys, kid = np.unique(keys, return_inverse=True)
        m = n - first
        g = sp.csr_matrix((np.ones(len(kid)), (owners, m + kid)), shape=(m + len(ukeys),) * 2)
        ncomp, labels = csgraph.connected_components(g, directed=False)
        cls[first:] = first + labels[:m]
        self._comp_lookup = (ukeys, first + labels[m:])
        return cls, first + ncomp

    def _comp_key(self, p, j, s):
        F = self.ball.layout.n_factors
        return (np.asarray(p, dtype=np.int64) * F + j) * 3 + (s + 1)

    @property
    def lower_graph(self):
        if self._lower is None:
            cls, n_nodes = self._classes()
            self._class = cls
            u = cls[self._a]
            w = cls[self._b]
            keep = u != w
            u, w, wt = u[keep], w[keep], self._w[keep]
            uu = np.concatenate([u, w])
            vv = np.concatenate([w, u])
            ww = np.concatenate([wt, wt])
            key = uu * n_nodes + vv
            order = np.lexsort((ww, key))
            key, ww = key[order], ww[order]
            start = np.concatenate([[True], key[1:] != key[:-1]])
            key, ww = key[start], ww[start]
            self._lower = sp.csr_matrix((ww, (key // n_nodes, key % n_nodes)), shape=(n_nodes, n_nodes))
        return self._lower

    # endpoints --------------------------------------------------------
    def node_of(self, x) -> int:
        """Lower-graph node for an in-ball index or any group element."""
        _ = self.lower_graph
        if isinstance(x, (int, np.integer)):
            return int(self._class[int(x)])
        el = as_element(self.ball.spec, x)
        if word_length(self.ball.spec, el) <= self.ball.radius:
            return int(self._class[self.ball.index(el)])
        if self.hub != "components":
            return int(self._class[int(self.ball.sphere_offsets[self.ball.radius])])
        R = self.ball.radius
        blocks = to_blocks(self.ball.spec, el)
        total = 0
        for t, (j, vec) in enumerate(blocks):
            total += sum(abs(c) for c in vec)
            if total > R:
                p = self.ball.index(from_blocks(self.ball.spec, blocks[:t]))
                s = (1 if vec[0] > 0 else -1) if len(vec) == 1 else 0
                key = int(self._comp_key(p, j, s))
                ukeys, nodes = self._comp_lookup
                k = int(np.searchsorted(ukeys, key))
                if k >= len(ukeys) or ukeys[k] != key:
                    raise RuntimeError("outside component not adjacent to the ball boundary")
                return int(nodes[k])
        raise RuntimeError("unreachable")

    def upper_from(self, x: int) -> np.ndarray:
        x = int(x)
        if x not in self._cache_up:
            if len(self._cache_up) > 64:
                self._cache_up.clear()
            self._cache_up[x] = csgraph.dijkstra(self.upper_graph, directed=True, indices=x)
        return self._cache_up[x]

    def lower_from(self, node: int) -> np.ndarray:
        if node not in self._cache_lo:
            if len(self._cache_lo) > 64:
                self._cache_lo.clear()
            self._cache_lo[node] = csgraph.dijkstra(self.lower_graph, directed=True, indices=node)
        return self._cache_lo[node]

    def lower(self, x, y) -> float:
        a, b = self.node_of(x), self.node_of(y)
        if a == b:
            return 0.0
        return float(self.lower_from(a)[b])

    def upper(self, x, y) -> float:
        ball = self.ball
        try:
            xi, yi = ball.resolve(x), ball.resolve(y)
        except OutOfBallError:
            return math.inf
        if xi == yi:
            return 0.0
        return float(self.upper_from(xi)[yi])

    def bounds(self, x, y) -> FloydDistanceBound:
        lo, up = self.lower(x, y), self.upper(x, y)
        lo = min(lo, up)
        return FloydDistanceBound(lo, up, self.ball.radius, self.v, (x, y))


@lru_cache(maxsize=6)
def floyd_graph(ball: CayleyBall, f: FloydFunction, v: int = 0, hub: str = "single") -> FloydGraph:
    return FloydGraph(ball, f, v, hub)


def floyd_distance(ball: CayleyBall, f: FloydFunction, v, x, y, hub: str = "single") -> FloydDistanceBound:
    vi = ball.resolve(v)
    xi, yi = ball.resolve(x), ball.resolve(y)
    return floyd_graph(ball, f, vi, hub).bounds(xi, yi)


def floyd_path_length(ball: CayleyBall, f: FloydFunction, v, path) -> float:
    path = [ball.resolve(p) for p in path]
    if len(path) < 2:
        return 0.0
    for a, b in zip(path, path[1:]):
        if b not in set(int(t) for t in ball.adjacency[a]):
            raise ValidationError(f"path is broken between indices {a} and {b}")
    vi = ball.resolve(v)
    d = [ball.distance(vi, p) for p in path]
    return math.fsum(f(min(d[i], d[i + 1])) for i in range(len(path) - 1))


@dataclass(frozen=True)
class ScatterRecord:
    pair_id: int
    x: str
    y: str
    word_dist_to_geodesic: int
    floyd_lower: float
    floyd_upper: float


def karlsson_scatter(ball: CayleyBall, f: FloydFunction, v, pairs) -> list:
    vi = ball.resolve(v)
    g = floyd_graph(ball, f, vi)
    out = []
    for k, (x, y) in enumerate(pairs):
        xi, yi = ball.resolve(x), ball.resolve(y)
        path = geodesic(ball, xi, yi)
        dgeo = int(min(g.dv[p] for p in path))
        b = g.bounds(xi, yi)
        out.append(ScatterRecord(k, ball.word(xi), ball.word(yi), dgeo, b.lower, b.upper))
    return out
