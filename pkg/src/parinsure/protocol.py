"""Smart-contract state machine: funding, underwriting, burning, settlement.

One :class:`InsuranceContract` owns one :class:`ContractState` and applies
operations strictly sequentially (single writer).  Every accepted operation
emits exactly one ledger event; every rejected operation raises before any
mutation, leaving the state bit-identical.

Monetary bookkeeping, all in integer Wei:

* ``balance``  (B): everything the contract holds.
* ``surplus``  (X): funds free to back new risk.  ``B - X`` always equals
  the collected-but-unearned premiums of the open policies.
* tokens (Y, total supply Ybar): minted against incoming funds at the
  live exchange rate ``X / Ybar`` and burned back at the same rate; the
  rate is never stored, conversions always use the live ratio, with a
  rate of 1 whenever ``Ybar == 0`` or ``X == 0``.

Solvency gating uses the recursive normal approximation from
:mod:`parinsure.riskmodel`: underwriting requires the post-inclusion SCR
to stay below the surplus, withdrawals may not push the surplus below the
SCR, and a settlement that drags the surplus to or below the MCR triggers
liquidation (refund open policies, distribute the remainder to token
holders, reset).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import IntEnum
from json import dumps as _json_dumps
from typing import Optional

from parinsure import oracle
from parinsure.fixedpoint import MYRIAD, mul_div, require_myriad_nonnegative
from parinsure.ledger import EventLog, EventRecord
from parinsure.riskmodel import (
    PolicyRisk,
    SolvencyState,
    capital,
    solvency_add,
    solvency_remove,
)

_ADDRESS_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")

#: Placeholder owner used when replaying logs (authority was already proven
#: when the events were accepted).
ZERO_ADDRESS = "0x" + "0" * 40


class ProtocolError(Exception):
    """Base class for rejected operations; state is untouched."""


class NotOwnerError(ProtocolError):
    """Owner-only operation attempted by another address."""


class ZeroAmountError(ProtocolError):
    """Amount or payout must be positive."""


class SolvencyGateError(ProtocolError):
    """Operation would violate the SCR constraint."""


class InsufficientTokensError(ProtocolError):
    """Burning more tokens than the holder owns."""


class InsufficientBalanceError(ProtocolError):
    """Withdrawal exceeds the contract balance."""


class UnknownPolicyError(ProtocolError):
    """No policy with that id."""


class PolicyNotOpenError(ProtocolError):
    """Policy already settled or canceled."""


class InvariantViolationError(ProtocolError):
    """Internal accounting broke (e.g. balance cannot cover a payout)."""


def canonical_address(address: str) -> str:
    """Validate an Ethereum-style address and normalise it to lowercase."""
    if not isinstance(address, str) or not _ADDRESS_RE.match(address):
        raise ValueError(f"not a 20-byte hex address: {address!r}")
    return address.lower()


class PolicyStatus(IntEnum):
    OPEN = 0
    CLOSED_NOT_COMPENSATED = 1
    CLOSED_COMPENSATED = 2
    CANCELED = 3


@dataclass(frozen=True)
class Params:
    """Owner-adjustable parameters, all at Myriad scale.

    ``q_scr >= q_mcr`` keeps MCR below SCR but is deliberately not
    enforced; the shipped demonstration scenario drives them together.
    """

    eta1: int
    eta2: int
    q_scr: int
    q_mcr: int

    def __post_init__(self) -> None:
        require_myriad_nonnegative(self.eta1, "eta1")
        require_myriad_nonnegative(self.eta2, "eta2")
        require_myriad_nonnegative(self.q_scr, "q_scr")
        require_myriad_nonnegative(self.q_mcr, "q_mcr")


@dataclass
class PolicyRecord:
    """One parametric contract with loadings frozen at underwriting."""

    id: int
    holder: str
    description: str
    risk: PolicyRisk
    premium: int
    status: PolicyStatus
    underwritten_at: int

    def is_open(self) -> bool:
        return self.status == PolicyStatus.OPEN


@dataclass
class ContractState:
    """Full protocol state; mutated only by :class:`InsuranceContract`."""

    owner: str
    params: Params
    solvency: SolvencyState
    balance: int = 0
    surplus: int = 0
    policies: dict[int, PolicyRecord] = field(default_factory=dict)
    tokens: dict[str, int] = field(default_factory=dict)
    total_supply: int = 0
    holders_ever: int = 0
    policies_ever: int = 0

    def open_policies(self) -> list[PolicyRecord]:
        return [p for p in self.policies.values() if p.is_open()]

    def open_premium_total(self) -> int:
        return sum(p.premium for p in self.open_policies())

    def snapshot(self) -> str:
        """Canonical text rendering (documented field order).

        One line per field: owner, balance, surplus, total_supply,
        holders_ever, policies_ever, params, solvency, then one ``policy``
        line per policy in ascending id and one ``token`` line per address
        in first-seen order.  All amounts are decimal integers at their
        native scale; descriptions are JSON-quoted.
        """
        lines = [
            f"owner {self.owner}",
            f"balance {self.balance}",
            f"surplus {self.surplus}",
            f"total_supply {self.total_supply}",
            f"holders_ever {self.holders_ever}",
            f"policies_ever {self.policies_ever}",
            f"params {self.params.eta1} {self.params.eta2} {self.params.q_scr} {self.params.q_mcr}",
            f"solvency {self.solvency.sum_var} {self.solvency.sum_loaded_mean}",
        ]
        for pid in sorted(self.policies):
            p = self.policies[pid]
            lines.append(
                "policy "
                f"{p.id} {p.holder} {int(p.status)} {p.risk.theta} {p.risk.payout} "
                f"{p.risk.eta1} {p.risk.eta2} {p.premium} {p.underwritten_at} "
                + _json_dumps(p.description)
            )
        for addr, amount in self.tokens.items():
            lines.append(f"token {addr} {amount}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LiquidationReport:
    """Every outbound transfer of a bankruptcy liquidation, plus the dust.

    ``surplus_at_liquidation`` is the (possibly negative) post-settlement
    surplus that tripped the MCR.  ``dust`` is whatever part of the final
    balance the distribution rules did not assign: flooring residue plus
    the unearned participation-loading margin of the open policies.
    """

    surplus_at_liquidation: int
    refund_pool: int
    refunds: tuple[tuple[int, str, int], ...]
    distributions: tuple[tuple[str, int], ...]
    canceled_policies: tuple[int, ...]
    dust: int

    def total_outbound(self) -> int:
        return sum(a for _, _, a in self.refunds) + sum(a for _, a in self.distributions)


@dataclass(frozen=True)
class SettlementResult:
    compensated: bool
    liquidation: Optional[LiquidationReport] = None


class InsuranceContract:
    """Single-writer protocol state machine emitting ledger events.

    The state value can be snapshotted and read concurrently; mutation must
    stay serialized on one thread.
    """

    def __init__(self, owner: str, params: Params, log: Optional[EventLog] = None):
        self.log = log if log is not None else EventLog()
        if len(self.log) != 0:
            raise ValueError("InsuranceContract requires a fresh event log")
        self.state = ContractState(
            owner=canonical_address(owner),
            params=params,
            solvency=SolvencyState(q_scr=params.q_scr, q_mcr=params.q_mcr),
        )
        self._emit_params(params)

    # ------------------------------------------------------------------
    # event plumbing

    def _emit(self, kind: str, payload: dict) -> EventRecord:
        record = EventRecord(ordinal=len(self.log), kind=kind, payload=payload)
        self.log.append(record)
        return record

    def _emit_params(self, params: Params) -> None:
        self._emit(
            "ParametersUpdated",
            {
                "newEta1": params.eta1,
                "newEta2": params.eta2,
                "newQAlphaSCR": params.q_scr,
                "newQAlphaMCR": params.q_mcr,
            },
        )

    # ------------------------------------------------------------------
    # derived quantities

    def scr(self) -> int:
        """Current SCR (signed; clamp at zero before threshold use)."""
        return capital(self.state.solvency, "SCR")

    def mcr(self) -> int:
        """Current MCR (signed; clamp at zero before threshold use)."""
        return capital(self.state.solvency, "MCR")

    def _scr_floor(self) -> int:
        return max(0, self.scr())

    def _credit_tokens(self, address: str, minted: int) -> None:
        state = self.state
        if address not in state.tokens:
            state.tokens[address] = 0
            state.holders_ever += 1
        state.tokens[address] += minted
        state.total_supply += minted

    def _mint_amount(self, value: int) -> int:
        """Tokens minted for ``value`` Wei at the live rate (1 when empty)."""
        state = self.state
        if state.total_supply == 0 or state.surplus == 0:
            return value
        return mul_div(value, state.total_supply, state.surplus)

    # ------------------------------------------------------------------
    # participant operations

    def fund(self, sender: str, amount: int) -> int:
        """Lock ``amount`` Wei; returns the tokens minted to ``sender``."""
        sender = canonical_address(sender)
        if amount <= 0:
            raise ZeroAmountError("funding amount must be positive")
        minted = self._mint_amount(amount)
        state = self.state
        state.balance += amount
        state.surplus += amount
        self._credit_tokens(sender, minted)
        self._emit("Fund", {"from": sender, "x": amount, "y": minted})
        return minted

    def underwrite(self, customer: str, description: str, payout: int) -> int:
        """Open a policy on the described event; returns the policy id.

        The premium is charged to ``customer`` at the current loadings, the
        participation loading flows back as freshly minted tokens, and the
        post-inclusion SCR must not exceed the surplus.
        """
        customer = canonical_address(customer)
        if payout <= 0:
            raise ZeroAmountError("payout must be positive")
        theta = oracle.event_probability(description)
        state = self.state
        risk = PolicyRisk(
            theta=theta, payout=payout, eta1=state.params.eta1, eta2=state.params.eta2
        )
        candidate = solvency_add(state.solvency, risk)
        required = max(0, capital(candidate, "SCR"))
        if state.surplus < required:
            raise SolvencyGateError(
                f"underwriting needs surplus >= {required}, have {state.surplus}"
            )
        minted = self._mint_amount(risk.token_reward_value())

        state.policies_ever += 1
        policy_id = state.policies_ever
        state.policies[policy_id] = PolicyRecord(
            id=policy_id,
            holder=customer,
            description=description,
            risk=risk,
            premium=risk.premium(),
            status=PolicyStatus.OPEN,
            underwritten_at=len(self.log),
        )
        state.balance += risk.premium()
        state.solvency = candidate
        self._credit_tokens(customer, minted)
        self._emit(
            "InsuranceUnderwritten",
            {
                "contractId": policy_id,
                "customer": customer,
                "eventDescription": description,
                "payoutAmount": payout,
                "status": int(PolicyStatus.OPEN),
            },
        )
        return policy_id

    def burn(self, sender: str, tokens: int) -> int:
        """Burn ``tokens`` and withdraw their value; returns the Wei paid.

        Allowed when the holder owns the tokens, the balance covers the
        payment and the surplus stays at or above the SCR floor.
        """
        sender = canonical_address(sender)
        if tokens <= 0:
            raise ZeroAmountError("token amount must be positive")
        state = self.state
        if tokens > state.tokens.get(sender, 0):
            raise InsufficientTokensError(
                f"burning {tokens} but holder owns {state.tokens.get(sender, 0)}"
            )
        value = mul_div(tokens, state.surplus, state.total_supply)
        if value > state.balance:
            raise InsufficientBalanceError(f"withdrawal {value} exceeds balance {state.balance}")
        headroom = state.surplus - self._scr_floor()
        if value > headroom:
            raise SolvencyGateError(f"withdrawal {value} exceeds surplus headroom {headroom}")
        state.balance -= value
        state.surplus -= value
        state.tokens[sender] -= tokens
        state.total_supply -= tokens
        self._emit("Burn", {"from": sender, "x": value, "y": tokens})
        return value

    def max_burnable(self, sender: str) -> int:
        """Largest token amount ``sender`` could burn right now (0 if none).

        Binary search over the token amount; the paid value is monotone in
        the tokens burned, so the predicate is monotone too.
        """
        sender = canonical_address(sender)
        state = self.state
        held = state.tokens.get(sender, 0)
        if held == 0 or state.total_supply == 0:
            return 0
        headroom = state.surplus - self._scr_floor()
        lo, hi = 0, held
        while lo < hi:
            mid = (lo + hi + 1) // 2
            value = mul_div(mid, state.surplus, state.total_supply)
            if value <= headroom and value <= state.balance:
                lo = mid
            else:
                hi = mid - 1
        return lo

    # ------------------------------------------------------------------
    # owner operations

    def update_params(self, caller: str, params: Params) -> None:
        """Replace the loadings and quantiles (owner only).

        Open policies keep their frozen loadings; future SCR/MCR readings
        apply the new quantiles to the existing solvency sums.
        """
        if canonical_address(caller) != self.state.owner:
            raise NotOwnerError("only the owner may update parameters")
        self._apply_params(params)

    def _apply_params(self, params: Params) -> None:
        state = self.state
        state.params = params
        state.solvency = replace(state.solvency, q_scr=params.q_scr, q_mcr=params.q_mcr)
        self._emit_params(params)

    def settle(self, caller: str, policy_id: int, observed: str) -> SettlementResult:
        """Resolve a policy against the observed event (owner only).

        No compensation: the premium is earned into the surplus.  With
        compensation: the payout leaves the balance; if the adjusted
        surplus sinks to or below the MCR floor the contract liquidates.
        """
        if canonical_address(caller) != self.state.owner:
            raise NotOwnerError("only the owner may settle policies")
        policy = self._open_policy(policy_id)
        compensated = oracle.is_compensated(policy.description, observed)
        return self._settle_with_outcome(policy_id, compensated)

    def _open_policy(self, policy_id: int) -> PolicyRecord:
        policy = self.state.policies.get(policy_id)
        if policy is None:
            raise UnknownPolicyError(f"no policy #{policy_id}")
        if not policy.is_open():
            raise PolicyNotOpenError(f"policy #{policy_id} is {policy.status.name}")
        return policy

    def _settle_with_outcome(self, policy_id: int, compensated: bool) -> SettlementResult:
        """Settlement branch shared by :meth:`settle` and ledger replay."""
        state = self.state
        policy = self._open_policy(policy_id)
        reduced = solvency_remove(state.solvency, policy.risk)

        if not compensated:
            policy.status = PolicyStatus.CLOSED_NOT_COMPENSATED
            state.solvency = reduced
            state.surplus += policy.premium
            self._emit(
                "ClaimSettled",
                {
                    "contractId": policy_id,
                    "customer": policy.holder,
                    "payoutTransferred": False,
                    "Xt": state.surplus,
                },
            )
            return SettlementResult(compensated=False)

        payout = policy.risk.payout
        if payout > state.balance:
            raise InvariantViolationError(
                f"balance {state.balance} cannot cover payout {payout}; "
                "the approximation gate under-covered this policy"
            )
        adjusted_surplus = state.surplus - payout + policy.premium  # may be negative
        policy.status = PolicyStatus.CLOSED_COMPENSATED
        state.solvency = reduced
        state.balance -= payout

        report: Optional[LiquidationReport] = None
        if adjusted_surplus > max(0, capital(reduced, "MCR")):
            state.surplus = adjusted_surplus
        else:
            report = self._liquidate(adjusted_surplus)
        self._emit(
            "ClaimSettled",
            {
                "contractId": policy_id,
                "customer": policy.holder,
                "payoutTransferred": True,
                "Xt": state.surplus,
            },
        )
        return SettlementResult(compensated=True, liquidation=report)

    # ------------------------------------------------------------------
    # bankruptcy

    def _liquidate(self, adjusted_surplus: int) -> LiquidationReport:
        """Refund open policies, distribute the rest, reset the contract.

        Open policyholders are repaid their premium net of the
        participation loading; if the surplus cannot cover that pool they
        share it pro rata (floored) and token holders get nothing.  All
        shares floor; unassigned residue is recorded as dust, not paid.
        Iteration order is deterministic: ascending policy id, then token
        holders in first-seen order.
        """
        state = self.state
        open_policies = [state.policies[pid] for pid in sorted(state.policies) if state.policies[pid].is_open()]
        full_refunds = [(p.id, p.holder, p.risk.refund_value()) for p in open_policies]
        pool = sum(amount for _, _, amount in full_refunds)

        refunds: list[tuple[int, str, int]] = []
        distributions: list[tuple[str, int]] = []
        if adjusted_surplus > pool:
            refunds = full_refunds
            residual = adjusted_surplus - pool
            if state.total_supply > 0:
                distributions = [
                    (addr, mul_div(held, residual, state.total_supply))
                    for addr, held in state.tokens.items()
                    if held > 0
                ]
        elif adjusted_surplus > 0:
            refunds = [
                (pid, holder, mul_div(adjusted_surplus, amount, pool))
                for pid, holder, amount in full_refunds
            ]

        total_out = sum(a for _, _, a in refunds) + sum(a for _, a in distributions)
        if total_out > state.balance:
            raise InvariantViolationError(
                f"liquidation would pay {total_out} from balance {state.balance}"
            )

        for policy in open_policies:
            policy.status = PolicyStatus.CANCELED
        dust = state.balance - total_out
        state.balance = 0
        state.surplus = 0
        state.solvency = replace(state.solvency, sum_var=0, sum_loaded_mean=0)
        for addr in state.tokens:
            state.tokens[addr] = 0
        state.total_supply = 0

        return LiquidationReport(
            surplus_at_liquidation=adjusted_surplus,
            refund_pool=pool,
            refunds=tuple(refunds),
            distributions=tuple(distributions),
            canceled_policies=tuple(p.id for p in open_policies),
            dust=dust,
        )
