"""Pure numpy implementation of the per-scale test kernel.

``evaluate_scale`` evaluates, for every location ``l`` in ``locs`` at scale
``r``, the disjunction dense -> Berk-Jones -> partial-norm and reports which
sub-test fired first.

Arguments
---------
prefix_tm : (n + 1, p) float64, C-contiguous
    Time-major prefix sums (row ``c`` = sum of the first ``c`` observations).
locs : (m,) int64
    Locations at scale ``r``.
r, sigma :
    Scale and noise level used to normalise the CUSUM.
dense_thr, use_dense :
    Dense-test threshold on ``||C||^2 - p`` and whether the dense test runs.
bj_quant : (x0,) int64
    Binomial quantiles for ``x = 1..x0``; empty disables the Berk-Jones test.
sizes, part_thr : (k,) int64 / float64
    Ascending sparsities and their partial-norm thresholds; empty disables.

Returns ``(fired, source, stat, thr)`` with source codes 0 = none, 1 = dense,
2 = Berk-Jones, 3 = partial.  For a firing point ``stat``/``thr`` belong to the
firing sub-test (smallest firing ``x`` or ``s``); otherwise they belong to the
first enabled sub-test.
"""

from __future__ import annotations

import math

import numpy as np

NONE, DENSE, BERK_JONES, PARTIAL = 0, 1, 2, 3

_CHUNK_ELEMS = 1 << 21
# bounds that cannot reach a partial-norm threshold skip the sort; the margin
# absorbs summation-order rounding so both backends prune identically
PRUNE_MARGIN = 1e-9


def evaluate_scale(prefix_tm, locs, r, sigma, dense_thr, use_dense, bj_quant, sizes, part_thr):
    locs = np.asarray(locs, dtype=np.int64)
    m = locs.size
    fired = np.zeros(m, dtype=np.uint8)
    source = np.zeros(m, dtype=np.int8)
    stat = np.zeros(m, dtype=np.float64)
    thr = np.zeros(m, dtype=np.float64)
    if m == 0:
        return fired, source, stat, thr
    p = prefix_tm.shape[1]
    chunk = max(1, _CHUNK_ELEMS // max(p, 1))
    for start in range(0, m, chunk):
        sl = slice(start, min(m, start + chunk))
        _evaluate_chunk(
            prefix_tm, locs[sl], int(r), float(sigma), float(dense_thr), bool(use_dense),
            np.asarray(bj_quant, dtype=np.int64), np.asarray(sizes, dtype=np.int64),
            np.asarray(part_thr, dtype=np.float64),
            fired[sl], source[sl], stat[sl], thr[sl],
        )
    return fired, source, stat, thr


def _evaluate_chunk(prefix_tm, locs, r, sigma, dense_thr, use_dense, bj_quant, sizes, part_thr,
                    fired, source, stat, thr):
    p = prefix_tm.shape[1]
    scale = 1.0 / math.sqrt(2.0 * r * sigma * sigma)
    mid = prefix_tm[locs - 1]
    C = ((prefix_tm[locs + r - 1] - mid) - (mid - prefix_tm[locs - r - 1])) * scale
    sq = C * C
    # sequential accumulation, matching the compiled kernel bit for bit
    ss = np.cumsum(sq, axis=1)[:, -1] if p else np.zeros(len(locs))
    open_ = np.ones(len(locs), dtype=bool)

    if use_dense:
        stat[:] = ss - p
        thr[:] = dense_thr
        hit = ss - p > dense_thr
        fired[hit] = 1
        source[hit] = DENSE
        open_ &= ~hit

    x0 = bj_quant.size
    if x0 and open_.any():
        idx = np.flatnonzero(open_)
        b = np.minimum(np.ceil(np.abs(C[idx])) - 1.0, x0)
        counts = np.stack([(b >= x).sum(axis=1) for x in range(1, x0 + 1)], axis=1)
        over = counts > bj_quant[None, :]
        any_over = over.any(axis=1)
        first = np.argmax(over, axis=1)
        hit = idx[any_over]
        fired[hit] = 1
        source[hit] = BERK_JONES
        stat[hit] = counts[any_over, first[any_over]]
        thr[hit] = bj_quant[first[any_over]]
        if not use_dense:
            miss = idx[~any_over]
            stat[miss] = counts[~any_over, 0]
            thr[miss] = bj_quant[0]
        open_[hit] = False

    if sizes.size and not use_dense and not x0:
        pass
    elif sizes.size:
        # S_s <= min(||C||^2, s * max C_i^2)
        bound = np.minimum(ss[:, None], sizes[None, :] * sq.max(axis=1)[:, None])
        open_ &= (bound * (1.0 + PRUNE_MARGIN) > part_thr[None, :]).any(axis=1)
    if sizes.size and open_.any():
        idx = np.flatnonzero(open_)
        top = -np.sort(-sq[idx], axis=1)
        partial = np.cumsum(top, axis=1)[:, sizes - 1]
        over = partial > part_thr[None, :]
        any_over = over.any(axis=1)
        first = np.argmax(over, axis=1)
        hit = idx[any_over]
        fired[hit] = 1
        source[hit] = PARTIAL
        stat[hit] = partial[any_over, first[any_over]]
        thr[hit] = part_thr[first[any_over]]
        if not use_dense and not x0:
            miss = idx[~any_over]
            stat[miss] = partial[~any_over, 0]
            thr[miss] = part_thr[0]
