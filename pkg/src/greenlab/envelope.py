"""Monotone envelopes over log-spaced bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Envelope:
    edges: np.ndarray       # n_bins + 1 edges, edges[0] = 0
    raw: np.ndarray         # per-bin maxima, nan where the bin is empty
    counts: np.ndarray
    values: np.ndarray      # nonincreasing regularized curve

    def to_dict(self, **extra) -> dict:
        out = dict(extra)
        out.update(bins=[float(e) for e in self.edges],
                   values=[float(v) for v in self.values],
                   raw=[None if np.isnan(v) else float(v) for v in self.raw],
                   counts=[int(c) for c in self.counts])
        return out

    def bin_of(self, delta) -> np.ndarray:
        idx = np.searchsorted(self.edges, np.asarray(delta, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.counts) - 1)


def monotone_envelope(deltas, values, n_bins: int = 8) -> Envelope:
    """Bin ``values`` by ``deltas`` and take the right-to-left cumulative max.

    Bin 0 is ``[0, smallest positive delta)`` so exact zeros have their own
    bin; the remaining edges are geometric.  Empty bins inherit the value to
    their right (or 0 when nothing lies to the right).
    """
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    pos = deltas[deltas > 0]
    if len(pos) == 0:
        edges = np.array([0.0, np.inf])
    else:
        lo, hi = pos.min(), pos.max()
        if hi <= lo:
            hi = lo * 2.0
        edges = np.concatenate([[0.0], np.geomspace(lo, hi * (1 + 1e-9), n_bins)])
    nb = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, deltas, side="right") - 1, 0, nb - 1)
    raw = np.full(nb, np.nan)
    counts = np.zeros(nb, dtype=np.int64)
    for b in range(nb):
        sel = idx == b
        counts[b] = int(sel.sum())
        if counts[b]:
            raw[b] = float(values[sel].max())
    filled = np.where(np.isnan(raw), -np.inf, raw)
    reg = np.maximum.accumulate(filled[::-1])[::-1]
    reg = np.where(np.isinf(reg), 0.0, reg)
    return Envelope(edges, raw, counts, reg)
