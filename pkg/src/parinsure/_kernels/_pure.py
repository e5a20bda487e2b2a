"""Pure-Python twin of the compiled aggregate-loss kernel.

Computes the exact pmf of ``L = sum(l_i * Bernoulli(p_i))`` on an integer
grid by folding in one policy at a time:

    f_0 = point mass at 0
    f_k(x) = (1 - p_k) * f_{k-1}(x) + p_k * f_{k-1}(x - l_k)

evaluated in place, descending in ``x``, so memory stays at one grid.

Why this form: the one-array recursion through the auxiliary terms
``v_i(x) = p_i/(1-p_i) * (l_i*f(x-l_i) - v_i(x-l_i))``,
``f(x) = (1/x)*sum_i v_i(x)`` (the reconstruction of the usual printed
recursion -- both are verified against exhaustive enumeration in the test
suite) is algebraically identical but multiplies rounding error by
``p/(1-p)`` per grid step, which destroys float64 accuracy whenever some
``p > 1/2``.  The fold uses only non-negative multiply-adds, keeping the
error at a few ulps regardless of the probabilities, with the same
``O(n * grid)`` cost.

Operation order matches the compiled kernel (built with FP contraction
off) so both backends agree bit-for-bit on IEEE-754 hardware.
"""

from __future__ import annotations


def de_pril_dense(probs, units, out) -> None:
    """Fill ``out`` with the pmf of ``sum(units[i] * Bernoulli(probs[i]))``.

    ``probs`` must lie strictly inside (0, 1), ``units`` are positive
    integer payouts on the grid, and ``out`` is a zero-initialised buffer
    of length ``sum(units) + 1``.  Accepts any indexable float/int
    sequences; mutates ``out`` in place.
    """
    n = len(probs)
    f = list(out) if not isinstance(out, list) else out
    f[0] = 1.0

    reach = 0  # highest grid point with mass so far
    for i in range(n):
        li = units[i]
        p = probs[i]
        q = 1.0 - p
        reach += li
        for x in range(reach, li - 1, -1):
            f[x] = q * f[x] + p * f[x - li]
        for x in range(li - 1, -1, -1):
            f[x] = q * f[x]

    if f is not out:
        out[:] = f
