"""Shared test helpers.

``reference_scenario_trace`` is an independent straight-line re-computation
of the shipped demonstration scenario: plain integer arithmetic, no imports
from the package under test, event probabilities pinned to their published
values.  Tests compare the protocol's behaviour against it step by step.
"""

from __future__ import annotations

import math

ETH = 10**18
MYRIAD = 10**4

OWNER = "0xe8e79b8b8c0481fa33a8e0fca902ad5754bfe1c3"
SP = "0x2cf8ed1664616483c12ef3113f6f62e68f1a810a"
PH = "0xd34a37613a382ba503f1599f514c9788df3659c4"

# Published probabilities of the scenario's event descriptions.
THETA = {"rain": 7164, "hail": 315, "snow": 5328, "sun": 4188, "wind": 4835}


def reference_scenario_trace() -> dict:
    """Replay the 18-step demonstration scenario with standalone math.

    Returns per-step state tuples and the liquidation transfers.  Kept
    deliberately free of any parinsure import so it can serve as an
    oracle for the real implementation.
    """

    def var_term(theta, payout):
        return theta * (MYRIAD - theta) * payout * payout // 10**8

    def loaded_term(theta, payout, eta):
        return eta * theta * payout // 10**8

    def premium(theta, payout, eta):
        return (MYRIAD + eta) * theta * payout // 10**8

    state = {
        "B": 0,
        "X": 0,
        "Y": {},
        "Ybar": 0,
        "sum_var": 0,
        "loaded": 0,
        "eta1": 1000,
        "eta2": 500,
        "q_scr": 25758,
        "q_mcr": 10364,
        "open": {},
        "next_id": 1,
    }
    steps: list[tuple] = []
    result = {"steps": steps}

    def capital(q):
        return math.isqrt(state["sum_var"]) * q // MYRIAD - state["loaded"]

    def record(label):
        steps.append(
            (label, state["B"], state["X"], capital(state["q_scr"]), capital(state["q_mcr"]),
             dict(state["Y"]), state["Ybar"])
        )

    def fund(who, x):
        y = x if (state["Ybar"] == 0 or state["X"] == 0) else x * state["Ybar"] // state["X"]
        state["B"] += x
        state["X"] += x
        state["Y"][who] = state["Y"].get(who, 0) + y
        state["Ybar"] += y

    def underwrite(who, desc, payout):
        theta = THETA[desc]
        eta = state["eta1"] + state["eta2"]
        sum_var = state["sum_var"] + var_term(theta, payout)
        loaded = state["loaded"] + loaded_term(theta, payout, eta)
        gate = max(0, math.isqrt(sum_var) * state["q_scr"] // MYRIAD - loaded)
        assert state["X"] >= gate, "oracle scenario must not hit the gate"
        reward = state["eta2"] * theta * payout // 10**8
        y = reward if (state["Ybar"] == 0 or state["X"] == 0) else reward * state["Ybar"] // state["X"]
        state["B"] += premium(theta, payout, eta)
        state["Y"][who] = state["Y"].get(who, 0) + y
        state["Ybar"] += y
        state["sum_var"], state["loaded"] = sum_var, loaded
        pid = state["next_id"]
        state["next_id"] += 1
        state["open"][pid] = (theta, payout, state["eta1"], state["eta2"])

    def burn_quote(tokens):
        return tokens * state["X"] // state["Ybar"]

    def burn(who, tokens):
        x = burn_quote(tokens)
        assert tokens <= state["Y"][who] and x <= state["B"]
        assert x <= state["X"] - max(0, capital(state["q_scr"]))
        state["B"] -= x
        state["X"] -= x
        state["Y"][who] -= tokens
        state["Ybar"] -= tokens
        return x

    def max_burn(who):
        limit = state["X"] - max(0, capital(state["q_scr"]))
        lo, hi = 0, state["Y"][who]
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if burn_quote(mid) <= limit and burn_quote(mid) <= state["B"]:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def settle(pid, compensated):
        theta, payout, eta1, eta2 = state["open"].pop(pid)
        pi = premium(theta, payout, eta1 + eta2)
        state["sum_var"] -= var_term(theta, payout)
        state["loaded"] -= loaded_term(theta, payout, eta1 + eta2)
        if not compensated:
            state["X"] += pi
            return None
        state["B"] -= payout
        adjusted = state["X"] - payout + pi
        if adjusted > max(0, capital(state["q_mcr"])):
            state["X"] = adjusted
            return None
        pool = sum((MYRIAD + e1) * th * po // 10**8 for th, po, e1, _ in state["open"].values())
        refunds = {}
        distributions = {}
        if adjusted > pool:
            for opid, (th, po, e1, _) in state["open"].items():
                refunds[opid] = (MYRIAD + e1) * th * po // 10**8
            residual = adjusted - pool
            for who, held in state["Y"].items():
                if held > 0:
                    distributions[who] = held * residual // state["Ybar"]
        elif adjusted > 0:
            for opid, (th, po, e1, _) in state["open"].items():
                refunds[opid] = adjusted * ((MYRIAD + e1) * th * po // 10**8) // pool
        paid = sum(refunds.values()) + sum(distributions.values())
        report = {
            "surplus_at_liquidation": adjusted,
            "pool": pool,
            "refunds": refunds,
            "distributions": distributions,
            "dust": state["B"] - paid,
        }
        state["B"] = 0
        state["X"] = 0
        state["Y"] = {k: 0 for k in state["Y"]}
        state["Ybar"] = 0
        state["sum_var"] = 0
        state["loaded"] = 0
        state["open"].clear()
        return report

    record("deploy")
    fund(SP, ETH // 10); record("fund sp")
    fund(OWNER, 8 * ETH // 100); record("fund owner")
    underwrite(PH, "rain", 6 * ETH // 100); record("uw rain")
    underwrite(PH, "hail", ETH // 100); record("uw hail")
    state["eta1"], state["eta2"] = 250, 250; record("params")
    underwrite(PH, "snow", ETH // 10); record("uw snow")
    settle(2, False); record("settle hail")
    result["burn_step9"] = burn(OWNER, 2 * ETH // 100); record("burn owner")
    settle(3, True); record("settle snow")
    underwrite(PH, "sun", 8 * ETH // 100); record("uw sun")
    result["max_step12"] = max_burn(SP)
    result["paid_step12"] = burn(SP, result["max_step12"]); record("burn sp max")
    state["q_mcr"] = 21701; record("params mcr")
    settle(4, True); record("settle sun")
    underwrite(PH, "wind", 2 * ETH // 100); record("uw wind")
    state["q_mcr"] = 25758; record("params mcr2")
    result["max_step17"] = max_burn(OWNER)
    result["paid_step17"] = burn(OWNER, result["max_step17"]); record("burn owner max")
    result["liquidation"] = settle(5, True); record("settle wind")
    assert result["liquidation"] is not None
    return result
