"""Bitset fixpoint kernels for post-dominance and transitive closure.

Graphs come in CSR form (``indptr``, ``indices``); sets are rows of packed
uint64 words. Both kernels have a numba-compiled path and a pure numpy path
with identical results. Set ``EVMFIX_DISABLE_NUMBA=1`` to force numpy.
"""

import os

import numpy as np

DISABLE_NUMBA = os.environ.get("EVMFIX_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None
    DISABLE_NUMBA = True

BACKEND = "numpy" if DISABLE_NUMBA else "numba"


def nwords(n):
    return max(1, (n + 63) // 64)


def full_row(n):
    row = np.zeros(nwords(n), dtype=np.uint64)
    for w in range(n // 64):
        row[w] = np.uint64(0xFFFFFFFFFFFFFFFF)
    if n % 64:
        row[n // 64] = np.uint64((1 << (n % 64)) - 1)
    return row


def _postdom_numpy(indptr, indices, order, full):
    n = len(indptr) - 1
    rows = np.tile(full, (n, 1))
    one = np.uint64(1)
    for v in range(n):
        if indptr[v] == indptr[v + 1]:
            rows[v, :] = 0
            rows[v, v >> 6] |= one << np.uint64(v & 63)
    changed = True
    while changed:
        changed = False
        for v in order:
            lo, hi = indptr[v], indptr[v + 1]
            if lo == hi:
                continue
            new = np.bitwise_and.reduce(rows[indices[lo:hi]], axis=0)
            new[v >> 6] |= one << np.uint64(v & 63)
            if not np.array_equal(new, rows[v]):
                rows[v] = new
                changed = True
    return rows


def _closure_numpy(indptr, indices, order, words):
    n = len(indptr) - 1
    rows = np.zeros((n, words), dtype=np.uint64)
    one = np.uint64(1)
    for v in range(n):
        for s in indices[indptr[v]:indptr[v + 1]]:
            rows[v, s >> 6] |= one << np.uint64(s & 63)
    changed = True
    while changed:
        changed = False
        for v in order:
            lo, hi = indptr[v], indptr[v + 1]
            if lo == hi:
                continue
            new = rows[v] | np.bitwise_or.reduce(rows[indices[lo:hi]], axis=0)
            if not np.array_equal(new, rows[v]):
                rows[v] = new
                changed = True
    return rows


if njit is not None:
    @njit(cache=True)
    def _postdom_jit(indptr, indices, order, full):
        n = len(indptr) - 1
        w = full.shape[0]
        rows = np.empty((n, w), dtype=np.uint64)
        one = np.uint64(1)
        for v in range(n):
            if indptr[v] == indptr[v + 1]:
                for k in range(w):
                    rows[v, k] = 0
                rows[v, v >> 6] |= one << np.uint64(v & 63)
            else:
                for k in range(w):
                    rows[v, k] = full[k]
        new = np.empty(w, dtype=np.uint64)
        changed = True
        while changed:
            changed = False
            for v in order:
                lo = indptr[v]
                hi = indptr[v + 1]
                if lo == hi:
                    continue
                for k in range(w):
                    new[k] = rows[indices[lo], k]
                for j in range(lo + 1, hi):
                    s = indices[j]
                    for k in range(w):
                        new[k] &= rows[s, k]
                new[v >> 6] |= one << np.uint64(v & 63)
                for k in range(w):
                    if new[k] != rows[v, k]:
                        rows[v, k] = new[k]
                        changed = True
        return rows

    @njit(cache=True)
    def _closure_jit(indptr, indices, order, words):
        n = len(indptr) - 1
        rows = np.zeros((n, words), dtype=np.uint64)
        one = np.uint64(1)
        for v in range(n):
            for j in range(indptr[v], indptr[v + 1]):
                s = indices[j]
                rows[v, s >> 6] |= one << np.uint64(s & 63)
        changed = True
        while changed:
            changed = False
            for v in order:
                for j in range(indptr[v], indptr[v + 1]):
                    s = indices[j]
                    if s == v:
                        continue
                    for k in range(words):
                        merged = rows[v, k] | rows[s, k]
                        if merged != rows[v, k]:
                            rows[v, k] = merged
                            changed = True
        return rows
else:  # pragma: no cover
    _postdom_jit = _postdom_numpy
    _closure_jit = _closure_numpy


def _prep(indptr, indices, order):
    return (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
            np.asarray(order, dtype=np.int64))


def postdom_bits(indptr, indices, order, use_numba=None):
    """Post-dominator sets: pd(v) = {v} | AND of pd(s) over successors s.

    Nodes without successors are sinks and post-dominate only themselves.
    """
    indptr, indices, order = _prep(indptr, indices, order)
    full = full_row(len(indptr) - 1)
    jit = (not DISABLE_NUMBA) if use_numba is None else use_numba
    return (_postdom_jit if jit else _postdom_numpy)(indptr, indices, order, full)


def closure_bits(indptr, indices, order, use_numba=None):
    """Reachability in one or more steps, as packed rows."""
    indptr, indices, order = _prep(indptr, indices, order)
    words = nwords(len(indptr) - 1)
    jit = (not DISABLE_NUMBA) if use_numba is None else use_numba
    return (_closure_jit if jit else _closure_numpy)(indptr, indices, order, words)


def row_members(row, n):
    bits = np.unpackbits(row.view(np.uint8), bitorder="little")[:n]
    return np.flatnonzero(bits)


def to_csr(n, succ):
    """``succ`` maps node index -> iterable of successor indices."""
    indptr = np.zeros(n + 1, dtype=np.int64)
    flat = []
    for v in range(n):
        s = sorted(set(succ.get(v, ())))
        flat.extend(s)
        indptr[v + 1] = indptr[v] + len(s)
    return indptr, np.asarray(flat, dtype=np.int64)


def postorder(n, indptr, indices, roots=None):
    """Iterative DFS postorder (successors before predecessors); covers all nodes."""
    seen = np.zeros(n, dtype=bool)
    out = []
    starts = list(roots) if roots is not None else []
    starts += range(n)
    for root in starts:
        if seen[root]:
            continue
        seen[root] = True
        stack = [(root, indptr[root])]
        while stack:
            v, j = stack[-1]
            if j < indptr[v + 1]:
                stack[-1] = (v, j + 1)
                s = indices[j]
                if not seen[s]:
                    seen[s] = True
                    stack.append((s, indptr[s]))
            else:
                stack.pop()
                out.append(v)
    return out
