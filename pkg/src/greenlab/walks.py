"""Compiled walk kernels on the flattened syllable-stack representation.

A walk position is a stack of blocks ``(factor, vector)``; multiplying by a
letter touches only the top block.  All kernels start walks at the identity
and consume pre-drawn increment indices, so randomness stays in numpy.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .groups import letters_of, layout, to_blocks


class WalkModel:
    """Numeric tables for a (spec, measure) pair, ready for the kernels."""

    def __init__(self, measure):
        spec = measure.spec
        lay = layout(spec)
        self.spec = spec
        self.lf = lay.letter_factor.astype(np.int64)
        self.lc = lay.letter_coord.astype(np.int64)
        self.ls = lay.letter_sign.astype(np.int64)
        self.dims = np.array(lay.dims, dtype=np.int64)
        self.letter_of = lay.letter_of.astype(np.int64)
        self.dmax = lay.dmax
        letters, offsets = [], [0]
        for g, _ in measure.support:
            lets = letters_of(spec, g)
            letters.extend(lets)
            offsets.append(len(letters))
        self.supp_letters = np.array(letters, dtype=np.int64)
        self.supp_off = np.array(offsets, dtype=np.int64)
        self.max_letters = max(1, max(np.diff(self.supp_off)) if len(offsets) > 1 else 1)
        self.probs = np.array([p for _, p in measure.support], dtype=np.float64)
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0
        self.uniform = bool(np.all(self.probs == self.probs[0]))

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        n = len(self.probs)
        if self.uniform:
            return rng.integers(0, n, size=shape, dtype=np.int32)
        return np.searchsorted(self.cdf, rng.random(shape), side="right").astype(np.int32)

    def target_arrays(self, element):
        blocks = to_blocks(self.spec, element)
        fac = np.array([j for j, _ in blocks], dtype=np.int64)
        vec = np.zeros((len(blocks), self.dmax), dtype=np.int64)
        for t, (_, v) in enumerate(blocks):
            vec[t, : len(v)] = v
        return fac, vec


@njit(cache=True)
def _apply(ell, st_fac, st_vec, depth, length, lf, lc, ls, dims):
    """Right-multiply the stack by a letter.

    Returns (depth, length, pos, pushed): ``pos`` is the lowest stack slot whose
    content changed, ``pushed`` tells whether slot ``pos`` is still occupied.
    """
    j = lf[ell]
    c = lc[ell]
    s = ls[ell]
    if depth > 0 and st_fac[depth - 1] == j:
        t = depth - 1
        old = st_vec[t, c]
        new = old + s
        st_vec[t, c] = new
        length += abs(new) - abs(old)
        for k in range(dims[j]):
            if st_vec[t, k] != 0:
                return depth, length, t, True
        return t, length, t, False
    st_fac[depth] = j
    for k in range(st_vec.shape[1]):
        st_vec[depth, k] = 0
    st_vec[depth, c] = s
    return depth + 1, length + 1, depth, True


@njit(cache=True)
def _same_syllable(st_fac, st_vec, t, tfac, tvec):
    if st_fac[t] != tfac[t]:
        return False
    for k in range(st_vec.shape[1]):
        if st_vec[t, k] != tvec[t, k]:
            return False
    return True


@njit(cache=True)
def visit_counts(inc, supp_letters, supp_off, lf, lc, ls, dims, dmax, tfac, tvec):
    """Visits to the target (given as blocks) at times 0..T for walks from e."""
    n_walks, T = inc.shape
    L = tfac.shape[0]
    cap = T * (supp_off[-1] + 1) + 2
    st_fac = np.zeros(cap, dtype=np.int64)
    st_vec = np.zeros((cap, dmax), dtype=np.int64)
    out = np.zeros(n_walks, dtype=np.int64)
    for w in range(n_walks):
        depth = 0
        length = 0
        match = 0
        cnt = 1 if L == 0 else 0
        for t in range(T):
            g = inc[w, t]
            for q in range(supp_off[g], supp_off[g + 1]):
                depth, length, pos, pushed = _apply(supp_letters[q], st_fac, st_vec, depth,
                                                    length, lf, lc, ls, dims)
                if match > pos:
                    match = pos
                if pushed and match == pos and pos < L and _same_syllable(st_fac, st_vec, pos, tfac, tvec):
                    match = pos + 1
            if depth == L and match == L:
                cnt += 1
        out[w] = cnt
    return out


@njit(cache=True)
def final_lengths(inc, supp_letters, supp_off, lf, lc, ls, dims, dmax):
    n_walks, T = inc.shape
    cap = T * (supp_off[-1] + 1) + 2
    st_fac = np.zeros(cap, dtype=np.int64)
    st_vec = np.zeros((cap, dmax), dtype=np.int64)
    out = np.zeros(n_walks, dtype=np.int64)
    for w in range(n_walks):
        depth = 0
        length = 0
        for t in range(T):
            g = inc[w, t]
            for q in range(supp_off[g], supp_off[g + 1]):
                depth, length, pos, pushed = _apply(supp_letters[q], st_fac, st_vec, depth,
                                                    length, lf, lc, ls, dims)
        out[w] = length
    return out


@njit(cache=True)
def exit_prefixes(inc, R, n_prefix, supp_letters, supp_off, lf, lc, ls, dims, dmax, letter_of):
    """First-exit from B_R: returns (prefix letters, exit times); time -1 means no exit."""
    n_walks, T = inc.shape
    cap = T * (supp_off[-1] + 1) + 2
    st_fac = np.zeros(cap, dtype=np.int64)
    st_vec = np.zeros((cap, dmax), dtype=np.int64)
    prefixes = np.full((n_walks, n_prefix), -1, dtype=np.int64)
    times = np.full(n_walks, -1, dtype=np.int64)
    for w in range(n_walks):
        depth = 0
        length = 0
        for t in range(T):
            g = inc[w, t]
            for q in range(supp_off[g], supp_off[g + 1]):
                depth, length, pos, pushed = _apply(supp_letters[q], st_fac, st_vec, depth,
                                                    length, lf, lc, ls, dims)
            if length > R:
                times[w] = t + 1
                break
        if times[w] < 0:
            continue
        k = 0
        for b in range(depth):
            j = st_fac[b]
            for c in range(dims[j]):
                v = st_vec[b, c]
                if v == 0:
                    continue
                ell = letter_of[j, c, 0] if v > 0 else letter_of[j, c, 1]
                for _ in range(abs(v)):
                    if k < n_prefix:
                        prefixes[w, k] = ell
                        k += 1
            if k >= n_prefix:
                break
    return prefixes, times
