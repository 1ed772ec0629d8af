"""Normal-form arithmetic and Cayley balls for free groups, free abelian
groups and free products of those.

Every supported group is handled through one flat model: a free product of
free abelian factors ``Z^{d_1} * ... * Z^{d_F}``.  ``free(k)`` contributes
``k`` copies of ``Z`` and nested products are flattened by associativity.
Generators are numbered globally in flattening order; letter ``2*g`` is the
generator ``g`` and letter ``2*g + 1`` its inverse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CapacityError, OutOfBallError, ValidationError

OUTSIDE = -1
DEFAULT_MEMORY_CAP = 10**8  # adjacency entries


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class FreeGroup:
    rank: int

    def __post_init__(self):
        if not isinstance(self.rank, int) or self.rank < 1:
            raise ValidationError(f"free group rank must be >= 1, got {self.rank!r}")

    def __str__(self):
        return f"free({self.rank})"


@dataclass(frozen=True)
class FreeAbelian:
    rank: int

    def __post_init__(self):
        if not isinstance(self.rank, int) or self.rank < 1:
            raise ValidationError(f"abelian rank must be >= 1, got {self.rank!r}")

    def __str__(self):
        return f"abelian({self.rank})"


@dataclass(frozen=True)
class FreeProduct:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) < 2:
            raise ValidationError("a free product needs at least two factors")
        for fac in self.factors:
            if not isinstance(fac, (FreeGroup, FreeAbelian, FreeProduct)):
                raise ValidationError(f"bad factor {fac!r}")

    def __str__(self):
        return "product(" + ", ".join(str(f) for f in self.factors) + ")"


GroupSpec = Union[FreeGroup, FreeAbelian, FreeProduct]

_SPEC_TOKEN = re.compile(r"\s*(free|abelian|product|\(|\)|,|\d+)\s*")


def parse_group(text: str) -> GroupSpec:
    """Parse ``free(2)``, ``abelian(2)`` or ``product(abelian(2), free(1))``."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        mt = _SPEC_TOKEN.match(text, pos)
        if not mt:
            raise ValidationError(f"cannot parse group spec {text!r} at offset {pos}")
        tokens.append(mt.group(1))
        pos = mt.end()

    def expect(tok, i):
        if i >= len(tokens) or tokens[i] != tok:
            raise ValidationError(f"malformed group spec {text!r}: expected {tok!r}")
        return i + 1

    def node(i):
        if i >= len(tokens):
            raise ValidationError(f"malformed group spec {text!r}")
        head = tokens[i]
        i = expect("(", i + 1)
        if head in ("free", "abelian"):
            if i >= len(tokens) or not tokens[i].isdigit():
                raise ValidationError(f"malformed group spec {text!r}: rank expected")
            rank = int(tokens[i])
            i = expect(")", i + 1)
            return (FreeGroup(rank) if head == "free" else FreeAbelian(rank)), i
        if head == "product":
            parts = []
            while True:
                sub, i = node(i)
                parts.append(sub)
                if i < len(tokens) and tokens[i] == ",":
                    i += 1
                    continue
                i = expect(")", i)
                return FreeProduct(tuple(parts)), i
        raise ValidationError(f"unknown group constructor {head!r}")

    spec, end = node(0)
    if end != len(tokens):
        raise ValidationError(f"trailing input in group spec {text!r}")
    return spec


# ---------------------------------------------------------------------------
# flattened layout


def _flat_dims(spec: GroupSpec) -> list:
    if isinstance(spec, FreeGroup):
        return [1] * spec.rank
    if isinstance(spec, FreeAbelian):
        return [spec.rank]
    out = []
    for fac in spec.factors:
        out.extend(_flat_dims(fac))
    return out


_FREE_NAMES = "abcdfghjkmnpqrst"
_ABELIAN_NAMES = "xyzuvw"


class Layout:
    """Flattened description of a spec: factor dimensions and letter tables."""

    def __init__(self, spec: GroupSpec):
        self.spec = spec
        self.dims = tuple(_flat_dims(spec))
        self.n_factors = len(self.dims)
        self.dmax = max(self.dims)
        self.factor_first_gen = np.cumsum((0,) + self.dims[:-1]).astype(np.int64)
        self.n_gens = int(sum(self.dims))
        self.n_letters = 2 * self.n_gens
        gen_factor, gen_coord = [], []
        for j, d in enumerate(self.dims):
            gen_factor += [j] * d
            gen_coord += list(range(d))
        self.gen_factor = np.array(gen_factor, dtype=np.int64)
        self.gen_coord = np.array(gen_coord, dtype=np.int64)
        letters = np.arange(self.n_letters)
        self.letter_gen = letters // 2
        self.letter_sign = np.where(letters % 2 == 0, 1, -1).astype(np.int64)
        self.letter_factor = self.gen_factor[self.letter_gen]
        self.letter_coord = self.gen_coord[self.letter_gen]
        # letter_of[j, c, 0 or 1] -> letter id for sign + / -
        self.letter_of = np.full((self.n_factors, self.dmax, 2), -1, dtype=np.int64)
        for ell in range(self.n_letters):
            s = 0 if self.letter_sign[ell] > 0 else 1
            self.letter_of[self.letter_factor[ell], self.letter_coord[ell], s] = ell
        self.gen_names = self._names()
        self._name_to_gen = {n: g for g, n in enumerate(self.gen_names)}

    def _names(self):
        names = []
        free_pool = iter(_FREE_NAMES)
        ab_pool = iter(_ABELIAN_NAMES)
        for d in self.dims:
            pool = free_pool if d == 1 else ab_pool
            for _ in range(d):
                names.append(next(pool, None))
        if any(n is None for n in names) or len(set(names)) != len(names):
            names = [f"g{i}" for i in range(self.n_gens)]
        return tuple(names)

    def letter_name(self, ell: int) -> str:
        name = self.gen_names[ell // 2]
        return name if ell % 2 == 0 else name.upper()

    def gen_of_name(self, name: str) -> tuple:
        if name in self._name_to_gen:
            return self._name_to_gen[name], 1
        low = name.lower()
        if low != name and low in self._name_to_gen:
            return self._name_to_gen[low], -1
        raise ValidationError(f"unknown generator {name!r} for {self.spec}")


@lru_cache(maxsize=None)
def layout(spec: GroupSpec) -> Layout:
    return Layout(spec)


# ---------------------------------------------------------------------------
# elements


@dataclass(frozen=True)
class GroupElement:
    """Normal form as a tuple of ``(generator id, nonzero exponent)`` syllables."""

    syllables: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "syllables", tuple((int(g), int(e)) for g, e in self.syllables))

    def __len__(self):
        return len(self.syllables)

    @property
    def is_identity(self) -> bool:
        return not self.syllables


IDENTITY = GroupElement(())


def validate_element(spec: GroupSpec, a: GroupElement) -> None:
    lay = layout(spec)
    prev = None
    for g, e in a.syllables:
        if not 0 <= g < lay.n_gens:
            raise ValidationError(f"generator id {g} out of range for {spec}")
        if e == 0:
            raise ValidationError("zero exponent in normal form")
        if prev is not None and lay.gen_factor[prev] == lay.gen_factor[g] and prev >= g:
            raise ValidationError(f"syllables ({prev}, {g}) violate normal form for {spec}")
        prev = g


def to_blocks(spec: GroupSpec, a: GroupElement) -> list:
    """Normal form as a list of ``(factor, coordinate vector)`` blocks."""
    lay = layout(spec)
    blocks = []
    for g, e in a.syllables:
        j = int(lay.gen_factor[g])
        if blocks and blocks[-1][0] == j:
            blocks[-1][1][int(lay.gen_coord[g])] = e
        else:
            vec = [0] * lay.dims[j]
            vec[int(lay.gen_coord[g])] = e
            blocks.append((j, vec))
    return blocks


def from_blocks(spec: GroupSpec, blocks: Iterable) -> GroupElement:
    lay = layout(spec)
    syl = []
    for j, vec in blocks:
        first = int(lay.factor_first_gen[j])
        syl.extend((first + c, int(v)) for c, v in enumerate(vec) if v)
    return GroupElement(tuple(syl))


def multiply(spec: GroupSpec, a: GroupElement, b: GroupElement) -> GroupElement:
    validate_element(spec, a)
    validate_element(spec, b)
    stack = [(j, list(v)) for j, v in to_blocks(spec, a)]
    for j, v in to_blocks(spec, b):
        if stack and stack[-1][0] == j:
            merged = [p + q for p, q in zip(stack[-1][1], v)]
            if any(merged):
                stack[-1] = (j, merged)
            else:
                stack.pop()
        else:
            stack.append((j, list(v)))
    return from_blocks(spec, stack)


def multiply_many(spec: GroupSpec, *elements: GroupElement) -> GroupElement:
    out = IDENTITY
    for el in elements:
        out = multiply(spec, out, el)
    return out


def inverse(spec: GroupSpec, a: GroupElement) -> GroupElement:
    validate_element(spec, a)
    return from_blocks(spec, [(j, [-v for v in vec]) for j, vec in reversed(to_blocks(spec, a))])


def word_length(spec: GroupSpec, a: GroupElement) -> int:
    validate_element(spec, a)
    return sum(abs(e) for _, e in a.syllables)


def distance(spec: GroupSpec, a: GroupElement, b: GroupElement) -> int:
    return word_length(spec, multiply(spec, inverse(spec, a), b))


def letters_of(spec: GroupSpec, a: GroupElement) -> list:
    """Canonical letter sequence of a normal form."""
    out = []
    for g, e in a.syllables:
        out.extend([2 * g + (0 if e > 0 else 1)] * abs(e))
    return out


def from_letters(spec: GroupSpec, letters: Iterable[int]) -> GroupElement:
    out = IDENTITY
    for ell in letters:
        out = multiply(spec, out, GroupElement(((int(ell) // 2, 1 if ell % 2 == 0 else -1),)))
    return out


def generator(spec: GroupSpec, letter: int) -> GroupElement:
    return GroupElement(((letter // 2, 1 if letter % 2 == 0 else -1),))


_WORD_TOKEN = re.compile(r"([A-Za-z]\d*)(?:\^\(?(-?\d+)\)?)?")


def parse_word(spec: GroupSpec, text: str) -> GroupElement:
    """Parse words like ``a^2 B``, ``x^2*c^3*y`` or ``e`` (identity)."""
    lay = layout(spec)
    body = text.strip()
    if body in ("", "e", "1"):
        return IDENTITY
    out = IDENTITY
    pos = 0
    body = body.replace("*", " ").replace("·", " ")
    while pos < len(body):
        if body[pos].isspace():
            pos += 1
            continue
        mt = _WORD_TOKEN.match(body, pos)
        if not mt:
            raise ValidationError(f"cannot parse word {text!r} at offset {pos}")
        gen, sign = lay.gen_of_name(mt.group(1))
        exp = int(mt.group(2)) if mt.group(2) is not None else 1
        if exp:
            out = multiply(spec, out, GroupElement(((gen, sign * exp),)))
        pos = mt.end()
    return out


def format_word(spec: GroupSpec, a: GroupElement) -> str:
    if a.is_identity:
        return "e"
    lay = layout(spec)
    parts = []
    for g, e in a.syllables:
        name = lay.gen_names[g]
        parts.append(name if e == 1 else f"{name}^{e}")
    return " ".join(parts)


def as_element(spec: GroupSpec, value) -> GroupElement:
    if isinstance(value, GroupElement):
        validate_element(spec, value)
        return value
    if isinstance(value, str):
        return parse_word(spec, value)
    raise ValidationError(f"cannot interpret {value!r} as a group element")


# ---------------------------------------------------------------------------
# growth series


def _series_mul(a, b, n):
    out = [0] * (n + 1)
    for i, x in enumerate(a[: n + 1]):
        if x:
            for j, y in enumerate(b[: n + 1 - i]):
                out[i + j] += x * y
    return out


def _series_inv(a, n):
    # a[0] == 1
    out = [0] * (n + 1)
    out[0] = 1
    for k in range(1, n + 1):
        out[k] = -sum(a[i] * out[k - i] for i in range(1, min(k, len(a) - 1) + 1))
    return out


def _abelian_spheres(d, n):
    out = [1] + [0] * n
    for r in range(1, n + 1):
        out[r] = sum(2**k * comb(d, k) * comb(r - 1, k - 1) for k in range(1, min(d, r) + 1))
    return out


def sphere_sizes(spec: GroupSpec, R: int) -> list:
    """Exact sphere sizes |S_0|..|S_R| from the growth series.

    Uses 1/W - 1 = sum_j (1/W_j - 1) for free products; exact integer
    arithmetic, independent of any ball enumeration.
    """
    dims = layout(spec).dims
    acc = [0] * (R + 1)
    for d in dims:
        inv = _series_inv(_abelian_spheres(d, R), R)
        for k in range(R + 1):
            acc[k] += inv[k] - (1 if k == 0 else 0)
    acc[0] += 1
    return _series_inv(acc, R)


# ---------------------------------------------------------------------------
# balls


class CayleyBall:
    """Indexed ball ``B_R(e)`` with generator adjacency.

    Element ``i`` is stored as ``(prefix[i], factor[i], vector[i])``: its
    normal form is the normal form of ``prefix[i]`` followed by the block
    ``vector[i]`` in factor ``factor[i]``.  Index 0 is the identity.
    """

    def __init__(self, spec, radius, prefix, factor, vector, dist, sphere_offsets,
                 adjacency, sphere_keys, key_base):
        self.spec = spec
        self.layout = layout(spec)
        self.radius = radius
        self.prefix = prefix
        self.factor = factor
        self.vector = vector
        self.dist = dist
        self.sphere_offsets = sphere_offsets
        self.adjacency = adjacency
        self._sphere_keys = sphere_keys
        self._key_base = key_base
        self._elements = None

    def __len__(self):
        return int(self.sphere_offsets[-1])

    @property
    def size(self) -> int:
        return len(self)

    def sphere(self, r: int) -> range:
        return range(int(self.sphere_offsets[r]), int(self.sphere_offsets[r + 1]))

    def _key(self, pre: int, fac: int, vec: Sequence[int]) -> int:
        R = self.radius
        code = 0
        for c in range(self.layout.dmax - 1, -1, -1):
            code = code * (2 * R + 1) + (int(vec[c]) + R if c < len(vec) else R)
        return (pre * (self.layout.n_factors + 1) + fac + 1) * self._key_base + code

    def _lookup(self, length: int, key: int) -> int:
        keys, pos = self._sphere_keys[length]
        k = int(np.searchsorted(keys, key))
        if k < len(keys) and keys[k] == key:
            return int(pos[k])
        return OUTSIDE

    def index(self, a) -> int:
        """Ball index of an element; raises OutOfBallError if it is too long."""
        a = as_element(self.spec, a)
        idx = 0
        length = 0
        for j, vec in to_blocks(self.spec, a):
            length += sum(abs(v) for v in vec)
            if length > self.radius:
                raise OutOfBallError(
                    f"{format_word(self.spec, a)} has length > {self.radius}")
            idx = self._lookup(length, self._key(idx, j, vec))
            if idx == OUTSIDE:
                raise RuntimeError("ball lookup failed for an in-range element")
        return idx

    def contains(self, a) -> bool:
        return word_length(self.spec, as_element(self.spec, a)) <= self.radius

    def element(self, i: int) -> GroupElement:
        blocks = []
        i = int(i)
        while i != 0:
            j = int(self.factor[i])
            blocks.append((j, [int(v) for v in self.vector[i, : self.layout.dims[j]]]))
            i = int(self.prefix[i])
        return from_blocks(self.spec, reversed(blocks))

    @property
    def elements(self) -> list:
        if self._elements is None:
            self._elements = [self.element(i) for i in range(len(self))]
        return self._elements

    def word(self, i: int) -> str:
        return format_word(self.spec, self.element(i))

    def resolve(self, x) -> int:
        """Accept an index, element or word and return a ball index."""
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < len(self):
                raise OutOfBallError(f"index {x} outside ball of size {len(self)}")
            return int(x)
        return self.index(x)

    def translate(self, g, x) -> int:
        """Index of g·x, raising OutOfBallError when it leaves the ball."""
        return self.index(multiply(self.spec, as_element(self.spec, g), self._as_el(x)))

    def _as_el(self, x) -> GroupElement:
        if isinstance(x, (int, np.integer)):
            return self.element(int(x))
        return as_element(self.spec, x)

    def distance(self, x, y) -> int:
        return distance(self.spec, self._as_el(x), self._as_el(y))


def build_ball(spec: GroupSpec, R: int, memory_cap: int = DEFAULT_MEMORY_CAP) -> CayleyBall:
    if not isinstance(R, (int, np.integer)) or R < 0:
        raise ValidationError(f"radius must be a nonnegative integer, got {R!r}")
    R = int(R)
    lay = layout(spec)
    sizes = sphere_sizes(spec, R)
    total = sum(sizes)
    entries = total * lay.n_letters
    if entries > memory_cap:
        raise CapacityError(
            f"ball of radius {R} for {spec} has {total} elements "
            f"({entries} adjacency entries) above cap {memory_cap}", count=total)

    F, dmax, S = lay.n_factors, lay.dmax, lay.n_letters
    key_base = (2 * R + 1) ** dmax
    if total * (F + 1) * key_base >= 2**62:
        raise CapacityError(f"key space overflow for {total} elements", count=total)
    idx_t = np.int32 if total < 2**31 - 1 else np.int64

    prefix = np.zeros(total, dtype=idx_t)
    factor = np.full(total, -1, dtype=np.int8 if F < 127 else np.int32)
    vector = np.zeros((total, dmax), dtype=np.int16 if R < 2**15 else np.int32)
    dist = np.zeros(total, dtype=np.int16 if R < 2**15 else np.int32)
    adjacency = np.full((total, S), OUTSIDE, dtype=idx_t)
    offsets = np.zeros(R + 2, dtype=np.int64)
    offsets[1] = 1
    for r in range(1, R + 1):
        offsets[r + 1] = offsets[r] + sizes[r]
        dist[offsets[r]: offsets[r + 1]] = r

    use_int_codes = S ** max(R, 1) < 2**62
    code = np.zeros(total, dtype=np.int64 if use_int_codes else object)
    vweights = (2 * R + 1) ** np.arange(dmax, dtype=np.int64)

    def keys_of(pre, fac, vec):
        vcode = ((vec.astype(np.int64) + R) * vweights).sum(axis=1)
        return (pre.astype(np.int64) * (F + 1) + fac.astype(np.int64) + 1) * key_base + vcode

    sphere_keys = [(np.array([0], dtype=np.int64), np.array([0], dtype=np.int64))]
    # the identity uses key 0: prefix 0, factor -1 contributes 0 and vcode uses a
    # zero vector only for real elements, so reserve 0 explicitly
    sphere_keys[0] = (np.array([-1], dtype=np.int64), np.array([0], dtype=np.int64))

    for r in range(R + 1):
        lo, hi = int(offsets[r]), int(offsets[r + 1])
        idx = np.arange(lo, hi, dtype=np.int64)
        fac_r = factor[lo:hi].astype(np.int64)
        vec_r = vector[lo:hi].astype(np.int64)
        pre_r = prefix[lo:hi].astype(np.int64)
        up_src, up_letter, up_key, up_pre, up_fac, up_vec = [], [], [], [], [], []
        for ell in range(S):
            j = int(lay.letter_factor[ell])
            c = int(lay.letter_coord[ell])
            s = int(lay.letter_sign[ell])
            same = fac_r == j
            vc = vec_r[:, c]
            up = ~same | (s * vc >= 0)
            down = same & (s * vc < 0)
            # down moves (towards the identity)
            if r > 0 and down.any():
                d_idx = idx[down]
                nv = vec_r[down].copy()
                nv[:, c] += s
                empty = ~nv.any(axis=1)
                tgt = np.empty(len(d_idx), dtype=np.int64)
                tgt[empty] = pre_r[down][empty]
                if (~empty).any():
                    keys = keys_of(pre_r[down][~empty], fac_r[down][~empty], nv[~empty])
                    skeys, spos = sphere_keys[r - 1]
                    k = np.searchsorted(skeys, keys)
                    if not np.array_equal(skeys[np.minimum(k, len(skeys) - 1)], keys):
                        raise RuntimeError("ball construction: missing parent")
                    tgt[~empty] = spos[k]
                adjacency[d_idx, ell] = tgt
            if r == R or not up.any():
                continue
            u_idx = idx[up]
            u_same = same[up]
            npre = np.where(u_same, pre_r[up], u_idx)
            nvec = np.where(u_same[:, None], vec_r[up], 0)
            nvec[:, c] += s
            nfac = np.full(len(u_idx), j, dtype=np.int64)
            up_src.append(u_idx)
            up_letter.append(np.full(len(u_idx), ell, dtype=np.int64))
            up_key.append(keys_of(npre, nfac, nvec))
            up_pre.append(npre)
            up_fac.append(nfac)
            up_vec.append(nvec)
        if r == R:
            break
        src = np.concatenate(up_src)
        lets = np.concatenate(up_letter)
        keys = np.concatenate(up_key)
        pres = np.concatenate(up_pre)
        facs = np.concatenate(up_fac)
        vecs = np.concatenate(up_vec)
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        if len(uniq) != sizes[r + 1]:
            raise RuntimeError(
                f"sphere {r + 1}: enumerated {len(uniq)} elements, growth series says {sizes[r + 1]}")
        npre = pres[first]
        nfac = facs[first]
        nvec = vecs[first]
        # letter-lexicographic order inside the sphere
        ncode = _block_codes(lay, code[npre], nfac, nvec, use_int_codes)
        order = np.argsort(ncode, kind="stable")
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        base = int(offsets[r + 1])
        new_index = base + rank
        prefix[new_index] = npre
        factor[new_index] = nfac
        vector[new_index] = nvec
        code[new_index] = ncode
        adjacency[src, lets] = new_index[inv]
        sphere_keys.append((uniq, new_index))

    ball = CayleyBall(spec, R, prefix, factor, vector, dist, offsets, adjacency,
                      sphere_keys, key_base)
    return ball


def _block_codes(lay: Layout, pre_code, fac, vec, use_int):
    """Extend prefix codes (base-S letter strings) by the letters of a block."""
    S = lay.n_letters
    out = pre_code.copy()
    for c in range(lay.dmax):
        v = vec[:, c].astype(np.int64)
        k = np.abs(v)
        valid = k > 0
        if not valid.any():
            continue
        sign_slot = np.where(v >= 0, 0, 1)
        letter = lay.letter_of[fac[valid], c, sign_slot[valid]]
        kk = k[valid]
        if use_int:
            powk = np.power(np.int64(S), kk)
            rep = (powk - 1) // (S - 1)
            out[valid] = out[valid] * powk + letter * rep
        else:
            vals = out[valid]
            res = np.empty(len(vals), dtype=object)
            for t, (pc, lt, n) in enumerate(zip(vals, letter, kk)):
                p = S ** int(n)
                res[t] = int(pc) * p + int(lt) * ((p - 1) // (S - 1))
            out[valid] = res
    return out


# ---------------------------------------------------------------------------
# geodesics and Gromov products


def geodesic(ball: CayleyBall, x, y) -> list:
    """BFS geodesic from x to y; ties broken towards the lowest index."""
    xi, yi = ball.resolve(x), ball.resolve(y)
    d = ball.distance(xi, yi)
    if int(ball.dist[xi]) + d > ball.radius:
        raise OutOfBallError(
            f"|x| + d(x,y) = {int(ball.dist[xi]) + d} exceeds radius {ball.radius}")
    adj = ball.adjacency
    layers = [np.array([xi], dtype=np.int64)]
    seen = {xi: 0}
    for k in range(1, d + 1):
        nb = adj[layers[-1]].ravel()
        nb = np.unique(nb[nb >= 0])
        fresh = [int(t) for t in nb if int(t) not in seen]
        for t in fresh:
            seen[t] = k
        layers.append(np.array(fresh, dtype=np.int64))
    if seen.get(yi) != d:
        raise RuntimeError("geodesic search did not reach the target")
    path = [yi]
    cur = yi
    for k in range(d - 1, -1, -1):
        nb = adj[cur]
        cands = sorted(int(t) for t in nb if t >= 0 and seen.get(int(t)) == k)
        cur = cands[0]
        path.append(cur)
    path.reverse()
    return path


def gromov_product_word(ball: CayleyBall, v, x, y) -> float:
    dvx = ball.distance(v, x)
    dvy = ball.distance(v, y)
    dxy = ball.distance(x, y)
    return 0.5 * (dvx + dvy - dxy)
