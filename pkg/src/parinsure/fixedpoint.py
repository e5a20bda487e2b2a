"""EVM-style integer arithmetic shared by every monetary computation.

All protocol quantities are plain Python ints at fixed scales:

* Wei      -- 10**-18 ETH, the base unit for balances, payouts, premiums.
* token    -- protocol token amounts, also carried at a 10**18-quantum scale.
* Myriad   -- 10**-4 fixed point for probabilities, premium loadings and
              normal quantiles (e.g. 0.7164 is stored as 7164).
* Wei^2    -- variance accumulators; per-policy variance terms are floored
              to this scale once and reused, see :mod:`parinsure.riskmodel`.

Every division floors and every unsigned result is bounds-checked against
the uint256 range, mirroring Solidity semantics.  No floating point is used
anywhere in a state transition.  All functions are pure and thread-safe.
"""

from __future__ import annotations

import math

# One ETH in Wei.
WEI_SCALE = 10**18
# One unit of probability/loading at Myriad scale (10**-4 fixed point).
MYRIAD = 10**4
# Unsigned word size of the reference EVM target.
UINT256_MAX = 2**256 - 1


class FixedPointError(ArithmeticError):
    """Base class for arithmetic faults."""


class AmountOverflowError(FixedPointError):
    """Unsigned result exceeded the uint256 range."""


class AmountUnderflowError(FixedPointError):
    """Unsigned subtraction would have produced a negative value."""


class DivisionByZeroError(FixedPointError):
    """Division with a zero denominator."""


def _check_unsigned(value: int, what: str = "value") -> int:
    if value < 0:
        raise AmountUnderflowError(f"{what} is negative: {value}")
    if value > UINT256_MAX:
        raise AmountOverflowError(f"{what} exceeds uint256: {value}")
    return value


def isqrt(n: int) -> int:
    """Floor of the square root of a non-negative integer.

    The result ``r`` satisfies ``r*r <= n < (r+1)*(r+1)``.
    """
    if n < 0:
        raise AmountUnderflowError(f"isqrt of negative value: {n}")
    return math.isqrt(n)


def mul_div(a: int, b: int, d: int) -> int:
    """``floor(a * b / d)`` with a full-width intermediate product.

    Used for every rate conversion (``y = x * Ybar / X`` and its inverse)
    so that the product never truncates before the division.
    """
    if d == 0:
        raise DivisionByZeroError("mul_div denominator is zero")
    if a < 0 or b < 0 or d < 0:
        raise AmountUnderflowError("mul_div operands must be non-negative")
    return _check_unsigned(a * b // d, "mul_div result")


def checked_add(a: int, b: int) -> int:
    """Unsigned addition with an explicit overflow check."""
    return _check_unsigned(a + b, "sum")


def checked_sub(a: int, b: int) -> int:
    """Unsigned subtraction; going below zero is a reported error."""
    if b > a:
        raise AmountUnderflowError(f"subtraction underflow: {a} - {b}")
    return a - b


def require_myriad_probability(value: int, what: str = "probability") -> int:
    """Validate a probability at Myriad scale.

    The event oracle emits values in ``0..10000`` inclusive (10000 is a
    certain event), so the closed upper bound is ``MYRIAD`` itself.
    """
    if not 0 <= value <= MYRIAD:
        raise ValueError(f"{what} out of range [0, {MYRIAD}]: {value}")
    return value


def require_myriad_nonnegative(value: int, what: str = "loading") -> int:
    """Validate a loading or quantile at Myriad scale (unbounded above)."""
    if value < 0:
        raise ValueError(f"{what} must be non-negative: {value}")
    return value


def eth_to_wei(text: str) -> int:
    """Parse a decimal ETH amount into Wei, exactly.

    Accepts plain decimal strings such as ``"0.06"`` or ``"12"``.  More
    than 18 fractional digits cannot be represented in Wei and are
    rejected rather than rounded.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty amount")
    negative = text.startswith("-")
    if negative:
        raise ValueError(f"negative amount not allowed: {text!r}")
    if text.startswith("+"):
        text = text[1:]
    whole, _, frac = text.partition(".")
    whole = whole or "0"
    if not whole.isdigit() or (frac and not frac.isdigit()):
        raise ValueError(f"malformed decimal amount: {text!r}")
    if len(frac) > 18:
        raise ValueError(f"more than 18 fractional digits: {text!r}")
    return int(whole) * WEI_SCALE + int(frac.ljust(18, "0") or "0")


def wei_to_eth(value: int) -> str:
    """Render a Wei amount as a decimal ETH string (exact, no exponent)."""
    sign = "-" if value < 0 else ""
    value = abs(value)
    whole, frac = divmod(value, WEI_SCALE)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{str(frac).zfill(18).rstrip('0')}"
