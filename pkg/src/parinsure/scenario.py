"""Scenario scripts: a small text format driving one contract end to end.

Grammar (one statement per line; ``#`` starts a comment)::

    cast <name> <0x-address>
    deploy <name> eta1=<myriad> eta2=<myriad> q_scr=<myriad> q_mcr=<myriad>
    fund <name> <eth-amount>
    underwrite <name> "<event description>" <eth-payout>
    burn <name> <token-amount | max>
    settle <policy-id> "<observed description>"
    update-params eta1=<myriad> eta2=<myriad> q_scr=<myriad> q_mcr=<myriad>

Any step other than ``cast``/``deploy`` may end with ``expect: reject``,
which makes a protocol rejection part of the script: the runner then
requires the step to fail and carries on.  ETH and token amounts are
decimal strings converted exactly (at most 18 fractional digits).  A
``burn`` amount of ``max`` resolves, by binary search, to the largest
token amount the solvency rules allow at that point.

Running a scenario writes, deterministically (byte-identical across
runs): the event log (``events.jsonl``), the replayed state trajectory
(``trajectory.csv``), per-address cumulative ETH flows (``balances.csv``),
the final state snapshot (``final_state.txt``) and, when a bankruptcy
occurred, ``liquidation.json``.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from parinsure import ledger
from parinsure.fixedpoint import eth_to_wei
from parinsure.protocol import (
    InsuranceContract,
    LiquidationReport,
    Params,
    ProtocolError,
    canonical_address,
)


class ScenarioError(Exception):
    """Base class for scenario failures; message carries the line number."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioStepError(ScenarioError):
    pass


@dataclass(frozen=True)
class ScenarioStep:
    lineno: int
    op: str
    args: tuple[str, ...]
    expect_reject: bool = False


@dataclass
class Scenario:
    cast: dict[str, str] = field(default_factory=dict)
    deploy_actor: str = ""
    deploy_params: Optional[Params] = None
    deploy_lineno: int = 0
    steps: list[ScenarioStep] = field(default_factory=list)


@dataclass
class ScenarioOutcome:
    contract: InsuranceContract
    trajectory: list[ledger.TrajectoryRow]
    liquidations: list[LiquidationReport]
    rejected_steps: list[tuple[int, str]]


def _parse_params(tokens: list[str], lineno: int) -> Params:
    values: dict[str, int] = {}
    for token in tokens:
        key, sep, raw = token.partition("=")
        if not sep or key not in ("eta1", "eta2", "q_scr", "q_mcr"):
            raise ScenarioParseError(f"line {lineno}: expected eta1/eta2/q_scr/q_mcr assignments, got {token!r}")
        try:
            values[key] = int(raw)
        except ValueError:
            raise ScenarioParseError(f"line {lineno}: {key} must be an integer, got {raw!r}") from None
    missing = {"eta1", "eta2", "q_scr", "q_mcr"} - values.keys()
    if missing:
        raise ScenarioParseError(f"line {lineno}: missing parameters {sorted(missing)}")
    try:
        return Params(**values)
    except ValueError as exc:
        raise ScenarioParseError(f"line {lineno}: {exc}") from exc


_STEP_ARITY = {"fund": 2, "underwrite": 3, "burn": 2, "settle": 2}


def parse_scenario(text: str) -> Scenario:
    """Parse a script; raises :class:`ScenarioParseError` with line numbers."""
    scenario = Scenario()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        try:
            tokens = shlex.split(raw_line, comments=True)
        except ValueError as exc:
            raise ScenarioParseError(f"line {lineno}: {exc}") from exc
        if not tokens:
            continue
        expect_reject = False
        if len(tokens) >= 2 and tokens[-2] == "expect:" and tokens[-1] == "reject":
            expect_reject = True
            tokens = tokens[:-2]
        op, args = tokens[0], tokens[1:]

        if op == "cast":
            if len(args) != 2:
                raise ScenarioParseError(f"line {lineno}: cast needs <name> <address>")
            if scenario.deploy_params is not None:
                raise ScenarioParseError(f"line {lineno}: cast lines must precede deploy")
            try:
                scenario.cast[args[0]] = canonical_address(args[1])
            except ValueError as exc:
                raise ScenarioParseError(f"line {lineno}: {exc}") from exc
        elif op == "deploy":
            if scenario.deploy_params is not None:
                raise ScenarioParseError(f"line {lineno}: duplicate deploy")
            if scenario.steps:
                raise ScenarioParseError(f"line {lineno}: deploy must be the first step")
            if not args:
                raise ScenarioParseError(f"line {lineno}: deploy needs <actor> and parameters")
            if args[0] not in scenario.cast:
                raise ScenarioParseError(f"line {lineno}: unknown actor {args[0]!r}")
            scenario.deploy_actor = args[0]
            scenario.deploy_params = _parse_params(list(args[1:]), lineno)
            scenario.deploy_lineno = lineno
        elif op in ("fund", "underwrite", "burn", "settle", "update-params"):
            if scenario.deploy_params is None:
                raise ScenarioParseError(f"line {lineno}: {op} before deploy")
            if op != "update-params" and len(args) != _STEP_ARITY[op]:
                raise ScenarioParseError(f"line {lineno}: {op} takes {_STEP_ARITY[op]} arguments")
            if op in ("fund", "underwrite", "burn") and args[0] not in scenario.cast:
                raise ScenarioParseError(f"line {lineno}: unknown actor {args[0]!r}")
            scenario.steps.append(
                ScenarioStep(lineno=lineno, op=op, args=tuple(args), expect_reject=expect_reject)
            )
        else:
            raise ScenarioParseError(f"line {lineno}: unknown statement {op!r}")
    if scenario.deploy_params is None:
        raise ScenarioParseError("script never deploys a contract")
    return scenario


def _wei(amount: str, lineno: int) -> int:
    try:
        return eth_to_wei(amount)
    except ValueError as exc:
        raise ScenarioParseError(f"line {lineno}: {exc}") from exc


def run_scenario(scenario: Scenario, out_dir: Optional[str] = None) -> ScenarioOutcome:
    """Execute the steps against a fresh contract; optionally write outputs.

    A step that raises is fatal unless marked ``expect: reject``; a step
    marked ``expect: reject`` that succeeds is fatal too.  Output files are
    only written when every step behaved as scripted.
    """
    owner = scenario.cast[scenario.deploy_actor]
    contract = InsuranceContract(owner, scenario.deploy_params)
    liquidations: list[LiquidationReport] = []
    rejected: list[tuple[int, str]] = []

    for step in scenario.steps:
        try:
            if step.op == "fund":
                contract.fund(scenario.cast[step.args[0]], _wei(step.args[1], step.lineno))
            elif step.op == "underwrite":
                contract.underwrite(
                    scenario.cast[step.args[0]], step.args[1], _wei(step.args[2], step.lineno)
                )
            elif step.op == "burn":
                actor = scenario.cast[step.args[0]]
                if step.args[1] == "max":
                    tokens = contract.max_burnable(actor)
                    if tokens == 0:
                        raise ProtocolError("no burnable amount under the solvency rules")
                else:
                    tokens = _wei(step.args[1], step.lineno)
                contract.burn(actor, tokens)
            elif step.op == "settle":
                try:
                    policy_id = int(step.args[0])
                except ValueError:
                    raise ScenarioParseError(f"line {step.lineno}: policy id must be an integer") from None
                result = contract.settle(owner, policy_id, step.args[1])
                if result.liquidation is not None:
                    liquidations.append(result.liquidation)
            elif step.op == "update-params":
                contract.update_params(owner, _parse_params(list(step.args), step.lineno))
        except ProtocolError as exc:
            if not step.expect_reject:
                raise ScenarioStepError(f"line {step.lineno}: {step.op} rejected: {exc}") from exc
            rejected.append((step.lineno, str(exc)))
            continue
        if step.expect_reject:
            raise ScenarioStepError(
                f"line {step.lineno}: step was expected to be rejected but succeeded"
            )

    trajectory = ledger.replay(contract.log)
    outcome = ScenarioOutcome(
        contract=contract,
        trajectory=trajectory,
        liquidations=liquidations,
        rejected_steps=rejected,
    )
    if out_dir is not None:
        _write_outputs(outcome, out_dir)
    return outcome


def _write_outputs(outcome: ScenarioOutcome, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcome.contract.log.write(str(out / "events.jsonl"))
    ledger.write_trajectory_csv(outcome.trajectory, str(out / "trajectory.csv"))
    ledger.write_flows_csv(outcome.trajectory, str(out / "balances.csv"))
    (out / "final_state.txt").write_text(outcome.contract.state.snapshot(), encoding="utf-8")
    if outcome.liquidations:
        payload = [asdict(report) for report in outcome.liquidations]
        (out / "liquidation.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
