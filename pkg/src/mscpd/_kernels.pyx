# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-scale test evaluation.

Same contract as :func:`mscpd._kernels_py.evaluate_scale`; see that module for
the argument description.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


# bounds that cannot reach a partial-norm threshold skip the sort; the margin
# absorbs summation-order rounding so both backends prune identically
DEF PRUNE_MARGIN = 1e-9


cdef inline void _sort_desc(double* a, Py_ssize_t n) noexcept nogil:
    """In-place descending sort: quicksort with an insertion-sort cutoff."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, top = 0
    cdef Py_ssize_t stack[128]
    cdef double piv, t
    while True:
        while hi - lo > 16:
            # median of three pivot
            i = lo + (hi - lo) // 2
            if a[i] > a[lo]:
                t = a[i]; a[i] = a[lo]; a[lo] = t
            if a[hi] > a[lo]:
                t = a[hi]; a[hi] = a[lo]; a[lo] = t
            if a[hi] > a[i]:
                t = a[hi]; a[hi] = a[i]; a[i] = t
            piv = a[i]
            i = lo
            j = hi
            while i <= j:
                while a[i] > piv:
                    i += 1
                while a[j] < piv:
                    j -= 1
                if i <= j:
                    t = a[i]; a[i] = a[j]; a[j] = t
                    i += 1
                    j -= 1
            # recurse into the smaller half first to bound the stack
            if j - lo < hi - i:
                stack[top] = i; stack[top + 1] = hi
                hi = j
            else:
                stack[top] = lo; stack[top + 1] = j
                lo = i
            top += 2
        for i in range(lo + 1, hi + 1):
            t = a[i]
            j = i - 1
            while j >= lo and a[j] < t:
                a[j + 1] = a[j]
                j -= 1
            a[j + 1] = t
        if top == 0:
            break
        top -= 2
        lo = stack[top]
        hi = stack[top + 1]


def evaluate_scale(
    const double[:, ::1] prefix_tm,
    const cnp.int64_t[::1] locs,
    long r,
    double sigma,
    double dense_thr,
    bint use_dense,
    const cnp.int64_t[::1] bj_quant,
    const cnp.int64_t[::1] sizes,
    const double[::1] part_thr,
):
    cdef Py_ssize_t m = locs.shape[0]
    cdef Py_ssize_t p = prefix_tm.shape[1]
    cdef Py_ssize_t x0 = bj_quant.shape[0]
    cdef Py_ssize_t ns = sizes.shape[0]
    cdef double scale = 1.0 / sqrt(2.0 * r * sigma * sigma)

    fired_arr = np.zeros(m, dtype=np.uint8)
    source_arr = np.zeros(m, dtype=np.int8)
    stat_arr = np.zeros(m, dtype=np.float64)
    thr_arr = np.zeros(m, dtype=np.float64)
    cdef unsigned char[::1] fired = fired_arr
    cdef signed char[::1] source = source_arr
    cdef double[::1] stat = stat_arr
    cdef double[::1] thr = thr_arr

    cdef double* c = <double*>malloc(p * sizeof(double))
    cdef cnp.int64_t* hist = <cnp.int64_t*>malloc((x0 + 2) * sizeof(cnp.int64_t))
    if c == NULL or hist == NULL:
        free(c)
        free(hist)
        raise MemoryError()

    cdef Py_ssize_t j, i, x, k, b
    cdef cnp.int64_t l, cnt
    cdef double v, ss, a, acc, mx
    cdef bint need_sort
    cdef const double* pa
    cdef const double* pb
    cdef const double* pc
    cdef bint done

    try:
        with nogil:
            for j in range(m):
                l = locs[j]
                pa = &prefix_tm[l + r - 1, 0]
                pb = &prefix_tm[l - 1, 0]
                pc = &prefix_tm[l - r - 1, 0]
                ss = 0.0
                mx = 0.0
                for i in range(p):
                    v = ((pa[i] - pb[i]) - (pb[i] - pc[i])) * scale
                    c[i] = v
                    ss = ss + v * v
                    if v * v > mx:
                        mx = v * v
                done = False

                if use_dense:
                    stat[j] = ss - p
                    thr[j] = dense_thr
                    if ss - p > dense_thr:
                        fired[j] = 1
                        source[j] = 1
                        done = True

                if not done and x0 > 0:
                    for x in range(x0 + 2):
                        hist[x] = 0
                    for i in range(p):
                        a = fabs(c[i])
                        v = ceil(a) - 1.0
                        if v >= 1.0:
                            if v > x0:
                                b = x0
                            else:
                                b = <Py_ssize_t>v
                            hist[b] += 1
                    cnt = 0
                    # walk x downward accumulating N_x, remember smallest firing x
                    k = -1
                    for x in range(x0, 0, -1):
                        cnt = cnt + hist[x]
                        if cnt > bj_quant[x - 1]:
                            k = x
                            acc = <double>cnt
                    if k > 0:
                        fired[j] = 1
                        source[j] = 2
                        stat[j] = acc
                        thr[j] = <double>bj_quant[k - 1]
                        done = True
                    elif not use_dense:
                        stat[j] = <double>(cnt)
                        thr[j] = <double>bj_quant[0]

                if not done and ns > 0:
                    need_sort = (not use_dense) and x0 == 0
                    for k in range(ns):
                        a = sizes[k] * mx
                        if ss < a:
                            a = ss
                        if a * (1.0 + PRUNE_MARGIN) > part_thr[k]:
                            need_sort = True
                            break
                    if not need_sort:
                        continue
                    for i in range(p):
                        c[i] = c[i] * c[i]
                    _sort_desc(c, p)
                    acc = 0.0
                    i = 0
                    for k in range(ns):
                        while i < sizes[k]:
                            acc = acc + c[i]
                            i = i + 1
                        if k == 0 and not use_dense and x0 == 0:
                            stat[j] = acc
                            thr[j] = part_thr[0]
                        if acc > part_thr[k]:
                            fired[j] = 1
                            source[j] = 3
                            stat[j] = acc
                            thr[j] = part_thr[k]
                            break
    finally:
        free(c)
        free(hist)

    return fired_arr, source_arr, stat_arr, thr_arr
