# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the exact aggregate-loss pmf.

Same contract and identical operation order as the pure-Python twin in
``parinsure._kernels._pure``; see that module for the algorithm notes and
the numerical-stability rationale.
"""


def de_pril_dense(double[::1] probs, long long[::1] units, double[::1] out):
    """Fill ``out`` with the pmf of ``sum(units[i] * Bernoulli(probs[i]))``.

    ``probs`` must lie strictly inside (0, 1), ``units`` are positive
    integer payouts on the grid, and ``out`` is a zero-initialised buffer
    of length ``sum(units) + 1``.
    """
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t i, x
    cdef long long li, reach
    cdef double p, q

    out[0] = 1.0
    reach = 0
    for i in range(n):
        li = units[i]
        p = probs[i]
        q = 1.0 - p
        reach += li
        for x in range(reach, li - 1, -1):
            out[x] = q * out[x] + p * out[x - li]
        for x in range(li - 1, -1, -1):
            out[x] = q * out[x]
