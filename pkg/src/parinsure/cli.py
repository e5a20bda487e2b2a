"""Command-line interface.

Subcommands
-----------
run-scenario   execute a scenario script against a fresh contract
gen-example1   SCR/MCR trajectory of a random portfolio (seeded)
risk-compare   exact vs normal-approximation capital for a portfolio file
replay         rebuild the state trajectory from an event log
ingest         parse a chain transaction listing (file or live endpoint)

Exit codes: 0 success, 1 user error (bad input, unexpected rejection,
unreachable source), 2 internal invariant violation (broken log integrity
or accounting).  ``ingest`` reads its API key from the environment
variable named by ``--api-key-env`` (default ``ETHERSCAN_API_KEY``).

The shipped demonstration scenario and chain fixture are addressable by
name: ``parinsure run-scenario paper`` and ``parinsure ingest fixture``.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from importlib import resources
from pathlib import Path
from statistics import NormalDist

from parinsure import ledger, scenario
from parinsure.fixedpoint import MYRIAD, WEI_SCALE
from parinsure.ledger import LedgerError, ReplayError, SchemaError, TransportError
from parinsure.protocol import InvariantViolationError
from parinsure.riskmodel import (
    PolicyRisk,
    RiskModelError,
    SolvencyState,
    capital,
    exact_scr,
    load_portfolio,
    solvency_add,
    solvency_remove,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_INVARIANT = 2


class UserError(Exception):
    """Invalid input or a scripted expectation that did not hold."""


def _packaged(name: str) -> str:
    return str(resources.files("parinsure").joinpath("data", name))


def _read_scenario_source(source: str) -> str:
    if Path(source).is_file():
        return Path(source).read_text(encoding="utf-8")
    if source in ("paper", "paper_scenario", "paper_scenario.txt"):
        return Path(_packaged("paper_scenario.txt")).read_text(encoding="utf-8")
    raise UserError(f"scenario script not found: {source}")


def _cmd_run_scenario(args: argparse.Namespace) -> int:
    text = _read_scenario_source(args.script)
    try:
        script = scenario.parse_scenario(text)
    except scenario.ScenarioParseError as exc:
        raise UserError(str(exc)) from exc
    try:
        outcome = scenario.run_scenario(script, out_dir=args.out_dir)
    except scenario.ScenarioStepError as exc:
        raise UserError(str(exc)) from exc

    state = outcome.contract.state
    print(f"executed {len(script.steps)} steps, {len(outcome.contract.log)} events")
    print(f"balance={state.balance} surplus={state.surplus} total_supply={state.total_supply}")
    if outcome.rejected_steps:
        print(f"scripted rejections: {len(outcome.rejected_steps)}")
    if outcome.liquidations:
        last = outcome.liquidations[-1]
        print(
            "liquidation: refunded "
            f"{len(last.refunds)} open policies (pool {last.refund_pool}), "
            f"distributed to {len(last.distributions)} holders, dust {last.dust}"
        )
    print(f"outputs written to {args.out_dir}")
    return EXIT_OK


def _cmd_gen_example1(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise UserError("--n must be at least 1")
    # MT19937 via random.Random(seed): stable across platforms and runs.
    rng = random.Random(args.seed)
    state = SolvencyState(q_scr=args.q_scr, q_mcr=args.q_mcr)
    policies = []
    for _ in range(args.n):
        theta = rng.randrange(MYRIAD + 1)  # matches the oracle's 0..10000 range
        payout = rng.choice((1, 5)) * WEI_SCALE
        policies.append(PolicyRisk(theta=theta, payout=payout, eta1=args.eta1, eta2=args.eta2))

    lines = ["step,action,theta,payout,scr,mcr"]
    step = 0
    for policy in policies:
        state = solvency_add(state, policy)
        step += 1
        lines.append(
            f"{step},underwrite,{policy.theta},{policy.payout},"
            f"{capital(state, 'SCR')},{capital(state, 'MCR')}"
        )
    for policy in policies:
        state = solvency_remove(state, policy)
        step += 1
        lines.append(
            f"{step},settle,{policy.theta},{policy.payout},"
            f"{capital(state, 'SCR')},{capital(state, 'MCR')}"
        )
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {2 * args.n} trajectory rows to {args.out}")
    return EXIT_OK


def _quantile_myriad(alpha: float) -> int:
    if not 0.5 <= alpha < 1.0:
        raise UserError(f"--alpha must lie in [0.5, 1): {alpha}")
    return round(NormalDist().inv_cdf(alpha) * MYRIAD)


def _cmd_risk_compare(args: argparse.Namespace) -> int:
    try:
        portfolio = load_portfolio(args.portfolio)
    except (OSError, ValueError) as exc:
        raise UserError(str(exc)) from exc
    alpha_myriad = round(args.alpha * MYRIAD)
    if not 0 < alpha_myriad < MYRIAD:
        raise UserError(f"--alpha out of range: {args.alpha}")

    exact = exact_scr(portfolio, alpha_myriad)

    state = SolvencyState(q_scr=_quantile_myriad(args.alpha), q_mcr=_quantile_myriad(args.alpha))
    for policy in portfolio:
        state = solvency_add(state, policy)
    approx = capital(state, "SCR")

    gap = abs(approx - exact)
    print(f"policies:              {len(portfolio)}")
    print(f"alpha:                 {args.alpha}")
    print(f"exact capital:         {exact}")
    print(f"normal approximation:  {approx}")
    print(f"absolute gap:          {gap}")
    if exact != 0:
        print(f"relative gap:          {gap / abs(exact):.6f}")
    else:
        print("relative gap:          n/a (exact capital is zero)")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        log = ledger.EventLog.read(args.log)
    except OSError as exc:
        raise UserError(str(exc)) from exc
    rows = ledger.replay(log)
    ledger.write_trajectory_csv(rows, args.out)
    if args.flows:
        ledger.write_flows_csv(rows, args.flows)
    print(f"replayed {len(rows)} events to {args.out}")
    return EXIT_OK


def _cmd_ingest(args: argparse.Namespace) -> int:
    source = args.source
    if source == "fixture":
        source = _packaged("etherscan_txlist.json")
    if source.startswith("http://") or source.startswith("https://"):
        import os

        api_key = os.environ.get(args.api_key_env, "")
        records = ledger.fetch_transactions(source, args.address, api_key)
    else:
        try:
            payload = json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UserError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise UserError(f"{source}: not valid JSON: {exc}") from exc
        records = ledger.parse_transactions(payload)
    ledger.write_transactions_csv(records, args.out_transactions)
    ledger.write_fees_csv(records, args.out_fees)
    print(f"parsed {len(records)} transactions; wrote {args.out_transactions} and {args.out_fees}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parinsure",
        description="Parametric-insurance protocol simulator and ledger tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-scenario", help="execute a scenario script")
    p.add_argument("script", help="path to a scenario file, or 'paper' for the shipped one")
    p.add_argument("--out-dir", default="scenario_out", help="output directory")
    p.set_defaults(func=_cmd_run_scenario)

    p = sub.add_parser("gen-example1", help="seeded random-portfolio SCR/MCR trajectory")
    p.add_argument("--n", type=int, required=True, help="number of policies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--eta1", type=int, default=0)
    p.add_argument("--eta2", type=int, default=0)
    p.add_argument("--q-scr", type=int, default=25758)
    p.add_argument("--q-mcr", type=int, default=10364)
    p.set_defaults(func=_cmd_gen_example1)

    p = sub.add_parser("risk-compare", help="exact vs approximate capital")
    p.add_argument("portfolio", help="portfolio CSV: description,theta,payout,eta1,eta2")
    p.add_argument("--alpha", type=float, default=0.995)
    p.set_defaults(func=_cmd_risk_compare)

    p = sub.add_parser("replay", help="rebuild a trajectory from an event log")
    p.add_argument("log", help="events.jsonl path")
    p.add_argument("--out", required=True, help="trajectory CSV")
    p.add_argument("--flows", help="optional per-address ETH flow CSV")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("ingest", help="parse a chain transaction listing")
    p.add_argument("source", help="JSON file, URL, or 'fixture' for the shipped sample")
    p.add_argument("--address", default="", help="contract address (live endpoints)")
    p.add_argument("--out-transactions", default="transactions.csv")
    p.add_argument("--out-fees", default="fees.csv")
    p.add_argument("--api-key-env", default="ETHERSCAN_API_KEY")
    p.set_defaults(func=_cmd_ingest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (TransportError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ReplayError, InvariantViolationError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (LedgerError, RiskModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    raise SystemExit(main())
