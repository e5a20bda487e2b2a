"""Contract state machine: operations, gates, settlement, liquidation."""

import math
import random
from fractions import Fraction

import pytest

from parinsure.fixedpoint import MYRIAD
from parinsure.ledger import EventLog
from parinsure.protocol import (
    InsuranceContract,
    InsufficientBalanceError,
    InsufficientTokensError,
    InvariantViolationError,
    NotOwnerError,
    Params,
    PolicyNotOpenError,
    PolicyStatus,
    SolvencyGateError,
    UnknownPolicyError,
    ZeroAmountError,
    canonical_address,
)

ETH = 10**18
OWNER = "0xe8e79b8b8c0481fa33a8e0fca902ad5754bfe1c3"
SP = "0x2cf8ed1664616483c12ef3113f6f62e68f1a810a"
PH = "0xd34a37613a382ba503f1599f514c9788df3659c4"

PAPER_PARAMS = Params(eta1=1000, eta2=500, q_scr=25758, q_mcr=10364)
# Quantiles at zero disable both capital gates; handy for plumbing tests.
FREE_PARAMS = Params(eta1=1000, eta2=500, q_scr=0, q_mcr=0)


def fresh(params: Params = PAPER_PARAMS) -> InsuranceContract:
    return InsuranceContract(OWNER, params)


def check_accounting(contract: InsuranceContract) -> None:
    state = contract.state
    assert state.balance >= state.surplus >= 0
    assert state.balance - state.surplus == state.open_premium_total()
    assert state.total_supply == sum(state.tokens.values())


class TestAddress:
    def test_canonicalises_case(self):
        assert canonical_address("0xE8e79B8B8c0481fa33a8E0fcA902ad5754BfE1C3") == OWNER

    @pytest.mark.parametrize("bad", ["", "0x123", OWNER[2:], "0x" + "g" * 40])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            canonical_address(bad)


class TestFund:
    def test_first_fund_mints_one_to_one(self):
        contract = fresh()
        minted = contract.fund(SP, ETH // 10)
        assert minted == ETH // 10
        assert contract.state.balance == contract.state.surplus == ETH // 10
        check_accounting(contract)

    def test_second_fund_at_unit_rate(self):
        contract = fresh()
        contract.fund(SP, ETH // 10)
        assert contract.fund(OWNER, 8 * ETH // 100) == 8 * ETH // 100
        assert contract.state.holders_ever == 2

    def test_mint_tracks_live_rate(self):
        contract = fresh()
        contract.fund(SP, 1)
        # White-box: surplus 2 per token 1 (a settled-premium history).
        contract.state.balance = 2
        contract.state.surplus = 2
        assert contract.fund(OWNER, 1) == 0  # floor(1 * 1 / 2)
        check_accounting(contract)

    def test_zero_amount(self):
        contract = fresh()
        before = contract.state.snapshot()
        with pytest.raises(ZeroAmountError):
            contract.fund(SP, 0)
        assert contract.state.snapshot() == before


class TestUnderwrite:
    def test_accepts_and_prices_rain_policy(self):
        contract = fresh()
        contract.fund(SP, ETH // 10)
        contract.fund(OWNER, 8 * ETH // 100)
        policy_id = contract.underwrite(PH, "rain", 6 * ETH // 100)
        policy = contract.state.policies[policy_id]

        premium = math.floor(
            Fraction(MYRIAD + 1500, MYRIAD) * Fraction(7164, MYRIAD) * (6 * ETH // 100)
        )
        reward_value = math.floor(Fraction(500, MYRIAD) * Fraction(7164, MYRIAD) * (6 * ETH // 100))
        assert policy.premium == premium
        assert policy.status == PolicyStatus.OPEN
        assert contract.state.balance == 18 * ETH // 100 + premium
        assert contract.state.surplus == 18 * ETH // 100  # unchanged
        assert contract.state.tokens[PH] == reward_value  # rate still 1
        check_accounting(contract)

    def test_rejected_when_gate_fails(self):
        contract = fresh()
        before = contract.state.snapshot()
        with pytest.raises(SolvencyGateError):
            contract.underwrite(PH, "rain", ETH)
        assert contract.state.snapshot() == before
        assert len(contract.log) == 1  # deploy only

    def test_zero_probability_policy_is_free(self):
        # "oe2" hashes to probability 0 (see oracle tests).
        contract = fresh()
        policy_id = contract.underwrite(PH, "oe2", ETH)
        policy = contract.state.policies[policy_id]
        assert policy.premium == 0
        assert contract.scr() == 0
        check_accounting(contract)

    def test_certain_event_has_zero_variance(self):
        # "kau" hashes to probability 1: pure premium equals the payout.
        contract = fresh(FREE_PARAMS)
        contract.fund(SP, ETH)
        policy_id = contract.underwrite(PH, "kau", ETH // 10)
        policy = contract.state.policies[policy_id]
        assert policy.risk.variance_term() == 0
        assert policy.premium == math.floor(Fraction(11500, MYRIAD) * (ETH // 10))
        check_accounting(contract)

    def test_zero_payout(self):
        contract = fresh()
        with pytest.raises(ZeroAmountError):
            contract.underwrite(PH, "rain", 0)

    def test_loadings_frozen_at_underwriting(self):
        contract = fresh()
        contract.fund(SP, ETH)
        pid = contract.underwrite(PH, "hail", ETH // 100)
        contract.update_params(OWNER, Params(eta1=0, eta2=0, q_scr=25758, q_mcr=10364))
        assert contract.state.policies[pid].risk.eta1 == 1000


class TestBurn:
    def test_full_round_trip_on_fresh_contract(self):
        contract = fresh()
        minted = contract.fund(SP, ETH // 10)
        paid = contract.burn(SP, minted)
        assert paid == ETH // 10
        assert contract.state.surplus == 0
        assert contract.state.total_supply == 0
        check_accounting(contract)

    def test_more_than_held(self):
        contract = fresh()
        contract.fund(SP, ETH // 10)
        before = contract.state.snapshot()
        with pytest.raises(InsufficientTokensError):
            contract.burn(SP, ETH)
        assert contract.state.snapshot() == before

    def test_solvency_gate_blocks_withdrawal(self):
        contract = fresh()
        contract.fund(SP, ETH)
        contract.underwrite(PH, "snow", ETH // 2)  # theta 0.5328, sizeable SCR
        assert contract.scr() > 0
        # Burning everything would pay out rougly the whole surplus, far
        # beyond the SCR headroom.
        with pytest.raises(SolvencyGateError):
            contract.burn(SP, contract.state.tokens[SP])

    def test_insufficient_balance_distinct_error(self):
        contract = fresh(FREE_PARAMS)
        contract.fund(SP, ETH)
        # White-box: drain the balance below the surplus conversion value.
        contract.state.balance = ETH // 2
        with pytest.raises(InsufficientBalanceError):
            contract.burn(SP, ETH)

    def test_zero_tokens(self):
        contract = fresh()
        with pytest.raises(ZeroAmountError):
            contract.burn(SP, 0)

    def test_max_burnable_is_maximal(self):
        contract = fresh()
        contract.fund(SP, ETH)
        contract.underwrite(PH, "rain", ETH // 2)
        best = contract.max_burnable(SP)
        assert best > 0
        snapshot = contract.state.snapshot()
        with pytest.raises(SolvencyGateError):
            contract.burn(SP, best + 1)
        assert contract.state.snapshot() == snapshot
        contract.burn(SP, best)
        assert contract.state.surplus >= max(0, contract.scr())
        check_accounting(contract)

    def test_max_burnable_zero_without_tokens(self):
        contract = fresh()
        assert contract.max_burnable(SP) == 0


class TestSettle:
    def _underwritten(self, params=PAPER_PARAMS):
        contract = fresh(params)
        contract.fund(SP, ETH // 2)
        pid = contract.underwrite(PH, "hail", ETH // 100)
        return contract, pid

    def test_owner_only(self):
        contract, pid = self._underwritten()
        with pytest.raises(NotOwnerError):
            contract.settle(SP, pid, "hail1")

    def test_unknown_policy(self):
        contract, _ = self._underwritten()
        with pytest.raises(UnknownPolicyError):
            contract.settle(OWNER, 99, "hail1")

    def test_no_compensation_earns_premium(self):
        contract, pid = self._underwritten()
        surplus_before = contract.state.surplus
        premium = contract.state.policies[pid].premium
        result = contract.settle(OWNER, pid, "hail1")  # 4496 > 315
        assert result.compensated is False
        assert contract.state.policies[pid].status == PolicyStatus.CLOSED_NOT_COMPENSATED
        assert contract.state.surplus == surplus_before + premium
        check_accounting(contract)

    def test_settled_policy_cannot_settle_again(self):
        contract, pid = self._underwritten()
        contract.settle(OWNER, pid, "hail1")
        with pytest.raises(PolicyNotOpenError):
            contract.settle(OWNER, pid, "hail1")

    def test_compensation_pays_holder(self):
        contract = fresh()
        contract.fund(SP, ETH)
        pid = contract.underwrite(PH, "snow", ETH // 10)
        policy = contract.state.policies[pid]
        balance_before = contract.state.balance
        surplus_before = contract.state.surplus
        result = contract.settle(OWNER, pid, "snow2")  # 2058 < 5328
        assert result.compensated is True
        assert result.liquidation is None  # survives comfortably
        assert contract.state.balance == balance_before - ETH // 10
        assert contract.state.surplus == surplus_before - ETH // 10 + policy.premium
        check_accounting(contract)

    def test_payout_beyond_balance_is_invariant_violation(self):
        contract = fresh(FREE_PARAMS)
        contract.fund(SP, 10**12)
        pid = contract.underwrite(PH, "snow", ETH)  # gate off, premium tiny
        before = contract.state.snapshot()
        with pytest.raises(InvariantViolationError):
            contract.settle(OWNER, pid, "snow2")
        assert contract.state.snapshot() == before


class TestLiquidation:
    def test_exact_zero_surplus_clean_reset(self):
        # Engineer an adjusted surplus of exactly zero with no other open
        # policies: everyone receives nothing, state resets.
        contract = fresh(FREE_PARAMS)
        payout = ETH // 10
        premium = math.floor(Fraction(11500, MYRIAD) * Fraction(7164, MYRIAD) * payout)
        contract.fund(SP, payout - premium)
        pid = contract.underwrite(PH, "rain", payout)
        result = contract.settle(OWNER, pid, "oe2")  # 0 < 7164: compensated
        report = result.liquidation
        assert report is not None
        assert report.surplus_at_liquidation == 0
        assert report.refunds == ()
        assert report.distributions == ()
        state = contract.state
        assert (state.balance, state.surplus, state.total_supply) == (0, 0, 0)
        assert all(v == 0 for v in state.tokens.values())
        assert state.policies[pid].status == PolicyStatus.CLOSED_COMPENSATED

    def test_full_refund_and_residual_distribution(self):
        # One open policy, surplus above the refund pool, single funder.
        params = Params(eta1=1000, eta2=500, q_scr=0, q_mcr=10**6)
        contract = fresh(params)
        contract.fund(SP, ETH)
        open_pid = contract.underwrite(PH, "rain", ETH // 10)
        hit_pid = contract.underwrite(PH, "snow", ETH // 10)
        open_policy = contract.state.policies[open_pid]
        hit_policy = contract.state.policies[hit_pid]
        surplus_before = contract.state.surplus
        sp_tokens = contract.state.tokens[SP]
        ph_tokens = contract.state.tokens[PH]
        supply = contract.state.total_supply

        result = contract.settle(OWNER, hit_pid, "snow2")  # huge q_mcr forces liquidation
        report = result.liquidation
        assert report is not None

        adjusted = surplus_before - ETH // 10 + hit_policy.premium
        refund = math.floor(Fraction(MYRIAD + 1000, MYRIAD) * Fraction(7164, MYRIAD) * (ETH // 10))
        assert report.surplus_at_liquidation == adjusted
        assert report.refund_pool == refund
        assert report.refunds == ((open_pid, PH, refund),)
        residual = adjusted - refund
        assert report.distributions == (
            (SP, sp_tokens * residual // supply),
            (PH, ph_tokens * residual // supply),
        )
        assert report.canceled_policies == (open_pid,)
        assert contract.state.policies[open_pid].status == PolicyStatus.CANCELED
        assert report.total_outbound() + report.dust + (ETH // 10) == (
            ETH + open_policy.premium + hit_policy.premium
        )
        state = contract.state
        assert (state.balance, state.surplus, state.total_supply) == (0, 0, 0)

    def test_prorata_refunds_when_pool_exceeds_surplus(self):
        params = Params(eta1=1000, eta2=500, q_scr=0, q_mcr=10**6)
        contract = fresh(params)
        contract.fund(SP, ETH // 4)
        a = contract.underwrite(PH, "rain", ETH // 10)
        b = contract.underwrite(SP, "hail", ETH // 10)
        hit = contract.underwrite(PH, "snow", 45 * ETH // 100)
        surplus_before = contract.state.surplus
        hit_premium = contract.state.policies[hit].premium
        refunds_full = {
            pid: contract.state.policies[pid].risk.refund_value() for pid in (a, b)
        }
        result = contract.settle(OWNER, hit, "snow2")
        report = result.liquidation
        assert report is not None
        adjusted = surplus_before - 45 * ETH // 100 + hit_premium
        pool = sum(refunds_full.values())
        assert 0 < adjusted <= pool
        expected = {
            pid: adjusted * amount // pool for pid, amount in refunds_full.items()
        }
        assert {pid: amt for pid, _, amt in report.refunds} == expected
        assert report.distributions == ()

    def test_negative_adjusted_surplus_pays_nobody(self):
        contract = fresh(FREE_PARAMS)
        contract.fund(SP, 10**15)
        keep = contract.underwrite(PH, "rain", ETH // 100)  # premium pads B
        hit = contract.underwrite(PH, "snow", 3 * 10**15)
        result = contract.settle(OWNER, hit, "snow2")
        report = result.liquidation
        assert report is not None
        assert report.surplus_at_liquidation < 0
        assert report.refunds == () and report.distributions == ()
        assert contract.state.policies[keep].status == PolicyStatus.CANCELED

    def test_fund_after_reset_restarts_at_unit_rate(self):
        contract = fresh(FREE_PARAMS)
        payout = ETH // 10
        premium = math.floor(Fraction(11500, MYRIAD) * Fraction(7164, MYRIAD) * payout)
        contract.fund(SP, payout - premium)
        pid = contract.underwrite(PH, "rain", payout)
        contract.settle(OWNER, pid, "oe2")
        assert contract.fund(SP, ETH) == ETH
        check_accounting(contract)


class TestUpdateParams:
    def test_owner_only(self):
        contract = fresh()
        with pytest.raises(NotOwnerError):
            contract.update_params(SP, PAPER_PARAMS)

    def test_identical_params_only_emit_event(self):
        contract = fresh()
        before = contract.state.snapshot()
        events_before = len(contract.log)
        contract.update_params(OWNER, PAPER_PARAMS)
        assert contract.state.snapshot() == before
        assert len(contract.log) == events_before + 1

    def test_quantile_change_moves_capitals(self):
        contract = fresh()
        contract.fund(SP, ETH)
        contract.underwrite(PH, "snow", ETH // 2)
        mcr_before = contract.mcr()
        contract.update_params(OWNER, Params(eta1=1000, eta2=500, q_scr=25758, q_mcr=21701))
        assert contract.mcr() > mcr_before


class TestRandomOperationInvariants:
    """Mini-fuzz: accounting identities after every accepted operation."""

    def test_invariants_and_transactional_rejections(self):
        rng = random.Random(31415)
        actors = [OWNER, SP, PH]
        descriptions = ["rain", "hail", "snow", "sun", "wind", "storm", "heat", "oe2"]
        accepted = 0
        contract = fresh()
        for step in range(2500):
            if step % 400 == 399:  # fresh contract, fresh parameters
                contract = fresh(
                    Params(
                        eta1=rng.randrange(0, 3000),
                        eta2=rng.randrange(0, 2000),
                        q_scr=rng.choice((0, 10364, 25758)),
                        q_mcr=rng.choice((0, 10364, 21701)),
                    )
                )
                accepted = 0
            op = rng.randrange(5)
            snapshot = contract.state.snapshot()
            try:
                if op == 0:
                    contract.fund(rng.choice(actors), rng.randrange(0, 10**18))
                elif op == 1:
                    contract.underwrite(
                        rng.choice(actors), rng.choice(descriptions), rng.randrange(0, 10**17)
                    )
                elif op == 2:
                    contract.burn(rng.choice(actors), rng.randrange(0, 10**17))
                elif op == 3:
                    contract.settle(
                        rng.choice(actors if rng.random() < 0.3 else [OWNER]),
                        rng.randrange(1, 8),
                        rng.choice(descriptions),
                    )
                else:
                    contract.update_params(
                        rng.choice(actors if rng.random() < 0.3 else [OWNER]),
                        Params(
                            eta1=rng.randrange(0, 3000),
                            eta2=rng.randrange(0, 2000),
                            q_scr=rng.choice((0, 10364, 25758)),
                            q_mcr=rng.choice((0, 10364, 21701)),
                        ),
                    )
            except Exception:
                assert contract.state.snapshot() == snapshot
            else:
                accepted += 1
                check_accounting(contract)
                assert len(contract.log) == accepted + 1  # one event per accepted op
