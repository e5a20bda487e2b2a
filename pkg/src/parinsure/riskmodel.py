"""Aggregate-loss distribution of the open portfolio and solvency capitals.

Two backends coexist:

* an **exact** backend (:func:`brute_force_pmf`, :func:`de_pril_pmf`,
  :func:`quantile`, :func:`exact_scr`) that computes the full distribution
  of the aggregate liability on an integer payout grid -- used for tests,
  calibration and the ``risk-compare`` command;
* a **recursive normal-approximation** backend (:class:`SolvencyState`,
  :func:`solvency_add`, :func:`solvency_remove`, :func:`capital`) that the
  live protocol uses: it maintains two integer sums and derives the SCR and
  MCR in O(1) per update.

Integer scale conventions (see :mod:`parinsure.fixedpoint`):

* per-policy variance term  ``theta*(10^4-theta)*payout^2 // 10^8``  [Wei^2]
* per-policy loaded mean    ``(eta1+eta2)*theta*payout // 10^8``     [Wei]
* commercial premium        ``(10^4+eta1+eta2)*theta*payout // 10^8``[Wei]

Each floor is applied exactly once per policy, and the same term value is
used on the way in and the way out, so add followed by remove restores the
previous state bit-for-bit.

All operations are pure; states are values and freely shareable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Sequence

import numpy as np

from parinsure import _kernels
from parinsure.fixedpoint import (
    MYRIAD,
    checked_sub,
    isqrt,
    require_myriad_nonnegative,
    require_myriad_probability,
)

# Two Myriad factors cancel in every per-policy term.
_MYRIAD_SQ = MYRIAD * MYRIAD

# Hard cap on the exact backend's grid length.
MAX_GRID_POINTS = 1_000_000

# Exhaustive enumeration cap (2^20 outcomes).
MAX_BRUTE_FORCE_POLICIES = 20

# Mass bookkeeping tolerance for the exact backends.
PMF_TOLERANCE = 1e-12

CapitalKind = Literal["SCR", "MCR"]


class RiskModelError(Exception):
    """Base class for exact-backend failures."""


class PortfolioTooLargeError(RiskModelError):
    """Brute-force enumeration requested for more than 20 policies."""


class GridTooLargeError(RiskModelError):
    """Payout grid exceeds MAX_GRID_POINTS after GCD reduction."""


class DegenerateProbabilityError(RiskModelError):
    """theta == 1: treat the policy as a deterministic liability instead."""


class SolvencyUnderflowError(RiskModelError):
    """Removing a policy that was never added; the registry is corrupt."""


@dataclass(frozen=True)
class PolicyRisk:
    """Risk characteristics of one parametric contract, loadings frozen.

    ``theta`` is the event probability at Myriad scale (0..10000 inclusive;
    the oracle can emit exactly 10000), ``payout`` the compensation in Wei,
    ``eta1``/``eta2`` the loading components fixed at underwriting time.
    """

    theta: int
    payout: int
    eta1: int = 0
    eta2: int = 0

    def __post_init__(self) -> None:
        require_myriad_probability(self.theta, "theta")
        if self.payout < 0:
            raise ValueError(f"payout must be non-negative: {self.payout}")
        require_myriad_nonnegative(self.eta1, "eta1")
        require_myriad_nonnegative(self.eta2, "eta2")

    def variance_term(self) -> int:
        """``theta*(1-theta)*payout^2`` floored to Wei^2."""
        return self.theta * (MYRIAD - self.theta) * self.payout * self.payout // _MYRIAD_SQ

    def loaded_mean_term(self) -> int:
        """``(eta1+eta2)*theta*payout`` floored to Wei."""
        return (self.eta1 + self.eta2) * self.theta * self.payout // _MYRIAD_SQ

    def premium(self) -> int:
        """Commercial premium ``(1+eta)*theta*payout`` floored to Wei."""
        return (MYRIAD + self.eta1 + self.eta2) * self.theta * self.payout // _MYRIAD_SQ

    def refund_value(self) -> int:
        """Liquidation refund ``(1+eta1)*theta*payout`` floored to Wei.

        The participation loading ``eta2`` was already returned as tokens,
        so it is excluded from the refund.
        """
        return (MYRIAD + self.eta1) * self.theta * self.payout // _MYRIAD_SQ

    def token_reward_value(self) -> int:
        """ETH value of the policyholder token reward, ``eta2*theta*payout``."""
        return self.eta2 * self.theta * self.payout // _MYRIAD_SQ


@dataclass(frozen=True)
class LossDistribution:
    """Probability mass of the aggregate liability on an integer grid.

    ``probs[k]`` is the probability that the loss equals ``k * grid_unit``
    Wei.  The grid unit is the greatest common divisor of the payouts.
    """

    grid_unit: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.grid_unit <= 0:
            raise ValueError("grid_unit must be positive")
        if len(self.probs) == 0:
            raise ValueError("empty probability vector")
        if float(self.probs.min()) < 0.0:
            raise ValueError("negative probability mass")
        total = float(self.probs.sum())
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise ValueError(f"probability mass sums to {total!r}, not 1")

    @property
    def support(self) -> list[int]:
        """Loss levels in Wei (ascending, dense grid)."""
        return [k * self.grid_unit for k in range(len(self.probs))]

    def __len__(self) -> int:
        return len(self.probs)


def _point_mass_at_zero() -> LossDistribution:
    return LossDistribution(grid_unit=1, probs=np.array([1.0]))


def _grid(payouts: Sequence[int]) -> tuple[int, list[int]]:
    """GCD grid unit and per-policy payouts in grid units."""
    unit = math.gcd(*payouts) if payouts else 0
    if unit == 0:
        return 1, []
    return unit, [p // unit for p in payouts]


def brute_force_pmf(portfolio: Sequence[PolicyRisk]) -> LossDistribution:
    """Exact pmf by enumeration of all 2^n claim outcomes.

    Independent oracle for the recursive backend; capped at 20 policies.
    """
    if len(portfolio) > MAX_BRUTE_FORCE_POLICIES:
        raise PortfolioTooLargeError(
            f"{len(portfolio)} policies; enumeration is capped at {MAX_BRUTE_FORCE_POLICIES}"
        )
    effective = [p for p in portfolio if p.payout > 0]
    if not effective:
        return _point_mass_at_zero()
    unit, units = _grid([p.payout for p in effective])

    # Path-wise enumeration: after policy i the arrays hold one entry per
    # outcome of the first i policies (no merging").
    losses = np.zeros(1, dtype=np.int64)
    weights = np.ones(1, dtype=np.float64)
    for policy, u in zip(effective, units):
        q = policy.theta / MYRIAD
        losses = np.concatenate([losses, losses + u])
        weights = np.concatenate([weights * (1.0 - q), weights * q])

    grid_len = sum(units) + 1
    probs = np.bincount(losses, weights=weights, minlength=grid_len)
    return LossDistribution(grid_unit=unit, probs=probs)


def de_pril_pmf(portfolio: Sequence[PolicyRisk]) -> LossDistribution:
    """Exact pmf via the one-policy-at-a-time recursion on the GCD grid.

    Matches :func:`brute_force_pmf` to within ``PMF_TOLERANCE`` wherever
    both are feasible; scales to portfolios far beyond the enumeration
    cap (see :mod:`parinsure._kernels._pure` for the recursion and the
    reasons it is evaluated in this order).  Raises
    :class:`DegenerateProbabilityError` for ``theta == 1`` policies, which
    the recursion family excludes (``1 - theta`` denominators); callers
    should account for those as deterministic liabilities.
    """
    for policy in portfolio:
        if policy.theta >= MYRIAD and policy.payout > 0:
            raise DegenerateProbabilityError(
                "theta == 1 policy: add its payout as a deterministic liability "
                "instead of including it in the recursion"
            )
    effective = [p for p in portfolio if p.payout > 0 and p.theta > 0]
    if not effective:
        return _point_mass_at_zero()
    unit, units = _grid([p.payout for p in effective])
    grid_len = sum(units) + 1
    if grid_len > MAX_GRID_POINTS:
        raise GridTooLargeError(
            f"payout grid needs {grid_len} points (cap {MAX_GRID_POINTS}); "
            "payouts share too small a common divisor"
        )

    probs_in = np.array([p.theta / MYRIAD for p in effective], dtype=np.float64)
    units_in = np.array(units, dtype=np.int64)
    out = np.zeros(grid_len, dtype=np.float64)
    _kernels.de_pril_dense(probs_in, units_in, out)
    return LossDistribution(grid_unit=unit, probs=out)


def quantile(dist: LossDistribution, alpha: int, premium_offset: int = 0) -> int:
    """Left-continuous quantile of the loss net of premiums, in Wei.

    Returns ``min{x : P(L <= x) >= alpha/10^4} - premium_offset`` by
    bisection over the support index.  ``alpha`` is at Myriad scale and
    must satisfy ``0 < alpha < 10^4``.
    """
    if not 0 < alpha < MYRIAD:
        raise ValueError(f"alpha must be strictly inside (0, {MYRIAD}): {alpha}")
    target = alpha / MYRIAD
    cdf = np.cumsum(dist.probs)
    lo, hi = 0, len(cdf) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo * dist.grid_unit - premium_offset


def portfolio_premium(portfolio: Iterable[PolicyRisk]) -> int:
    """Sum of commercial premiums, the collected-but-unearned total."""
    return sum(p.premium() for p in portfolio)


def exact_scr(portfolio: Sequence[PolicyRisk], alpha: int) -> int:
    """Exact capital requirement: quantile of ``L - Pi`` at level ``alpha``.

    Reference value for tests and ``risk-compare``; the live protocol uses
    :func:`capital` instead.
    """
    dist = de_pril_pmf(portfolio)
    return quantile(dist, alpha, portfolio_premium(portfolio))


@dataclass(frozen=True)
class SolvencyState:
    """Sufficient statistics of the normal approximation.

    ``sum_var`` accumulates the per-policy variance terms (Wei^2) and
    ``sum_loaded_mean`` the loading portions of the premiums (Wei); both
    capitals derive from them in O(1).  ``q_scr``/``q_mcr`` are standard
    normal quantiles at Myriad scale.
    """

    q_scr: int
    q_mcr: int
    sum_var: int = 0
    sum_loaded_mean: int = 0

    def __post_init__(self) -> None:
        require_myriad_nonnegative(self.q_scr, "q_scr")
        require_myriad_nonnegative(self.q_mcr, "q_mcr")
        if self.sum_var < 0 or self.sum_loaded_mean < 0:
            raise ValueError("solvency sums must be non-negative")


def solvency_add(state: SolvencyState, policy: PolicyRisk) -> SolvencyState:
    """State after underwriting ``policy`` (adds both per-policy terms)."""
    return replace(
        state,
        sum_var=state.sum_var + policy.variance_term(),
        sum_loaded_mean=state.sum_loaded_mean + policy.loaded_mean_term(),
    )


def solvency_remove(state: SolvencyState, policy: PolicyRisk) -> SolvencyState:
    """Exact inverse of :func:`solvency_add` for a previously added policy.

    Underflow means the policy's terms were never added and the registry
    is corrupt.
    """
    try:
        sum_var = checked_sub(state.sum_var, policy.variance_term())
        sum_loaded_mean = checked_sub(state.sum_loaded_mean, policy.loaded_mean_term())
    except ArithmeticError as exc:
        raise SolvencyUnderflowError(f"policy was never added: {exc}") from exc
    return replace(state, sum_var=sum_var, sum_loaded_mean=sum_loaded_mean)


def capital(state: SolvencyState, which: CapitalKind) -> int:
    """Approximate capital requirement in Wei; may be negative.

    ``sqrt(sum_var) * q / 10^4 - sum_loaded_mean`` with the square root and
    the division floored.  Callers comparing against thresholds clamp the
    result at zero (a capital requirement below zero behaves as zero).
    """
    if which == "SCR":
        q = state.q_scr
    elif which == "MCR":
        q = state.q_mcr
    else:
        raise ValueError(f"capital kind must be 'SCR' or 'MCR': {which!r}")
    return isqrt(state.sum_var) * q // MYRIAD - state.sum_loaded_mean


def load_portfolio(path: str) -> list[PolicyRisk]:
    """Read a portfolio file: CSV rows ``description,theta,payout,eta1,eta2``.

    ``description`` is informational (quote it if it contains commas);
    ``theta``/``eta1``/``eta2`` are Myriad integers and ``payout`` is Wei.
    Blank lines and lines starting with ``#`` are skipped.
    """
    policies: list[PolicyRisk] = []
    with open(path, newline="", encoding="utf-8") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                policies.append(
                    PolicyRisk(
                        theta=int(row[1]),
                        payout=int(row[2]),
                        eta1=int(row[3]),
                        eta2=int(row[4]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return policies
