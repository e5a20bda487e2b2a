"""Event/transaction records, append-only log, deterministic replay.

Event-log file format
---------------------
Newline-delimited JSON, one event per line, canonical key order
(``ordinal``, ``kind``, then the payload fields in schema order), compact
separators.  Serialising the same log twice yields identical bytes, so
logs are suitable as golden files.

Replay re-executes every event through the protocol state machine and
*re-emits* it; the re-emitted record must equal the stored one field for
field.  That turns every redundant payload field into an integrity check:
in particular the ``Xt`` surplus carried by ``ClaimSettled`` events is
recomputed and any divergence fails loudly.

Chain ingestion (Etherscan-compatible ``account/txlist`` listings) is
split into a pure parser over stored JSON payloads and a thin transport;
tests exercise the parser on fixtures, no network required.  The live
transport reads its API key from an environment variable (see the CLI).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

import requests

#: Payload fields per event kind, in canonical serialisation order.
EVENT_SCHEMAS: dict[str, tuple[str, ...]] = {
    "ParametersUpdated": ("newEta1", "newEta2", "newQAlphaSCR", "newQAlphaMCR"),
    "Fund": ("from", "x", "y"),
    "Burn": ("from", "x", "y"),
    "InsuranceUnderwritten": (
        "contractId",
        "customer",
        "eventDescription",
        "payoutAmount",
        "status",
    ),
    "ClaimSettled": ("contractId", "customer", "payoutTransferred", "Xt"),
}


class LedgerError(Exception):
    """Base class for ledger failures."""


class OrdinalError(LedgerError):
    """Appended or loaded event breaks the gap-free ordinal sequence."""


class ReplayError(LedgerError):
    """Replay hit a malformed or inconsistent event; carries the ordinal."""

    def __init__(self, ordinal: int, message: str):
        super().__init__(f"event {ordinal}: {message}")
        self.ordinal = ordinal


class SchemaError(LedgerError):
    """A record field failed to parse; names the offending field."""


class TransportError(LedgerError):
    """The remote endpoint could not be reached or answered garbage."""


@dataclass(frozen=True)
class EventRecord:
    """One protocol event, payload fields at native protocol scales."""

    ordinal: int
    kind: str
    payload: dict

    def __post_init__(self) -> None:
        if self.ordinal < 0:
            raise ValueError(f"negative ordinal: {self.ordinal}")
        schema = EVENT_SCHEMAS.get(self.kind)
        if schema is None:
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if tuple(self.payload.keys()) != schema:
            raise ValueError(
                f"{self.kind} payload must have fields {schema}, got {tuple(self.payload)}"
            )

    def to_json(self) -> str:
        body = {"ordinal": self.ordinal, "kind": self.kind, **self.payload}
        return json.dumps(body, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        body = json.loads(line)
        ordinal = body.pop("ordinal")
        kind = body.pop("kind")
        return cls(ordinal=ordinal, kind=kind, payload=body)


class EventLog:
    """Append-only, write-once sequence of events with gap-free ordinals."""

    def __init__(self) -> None:
        self._events: list[EventRecord] = []

    def append(self, event: EventRecord) -> None:
        if event.ordinal != len(self._events):
            raise OrdinalError(
                f"expected ordinal {len(self._events)}, got {event.ordinal}"
            )
        self._events.append(event)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._events)

    def __getitem__(self, index: int) -> EventRecord:
        return self._events[index]

    def to_bytes(self) -> bytes:
        return "".join(e.to_json() + "\n" for e in self._events).encode("utf-8")

    def write(self, path: str) -> None:
        with open(path, "wb") as handle:
            handle.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "EventLog":
        log = cls()
        for lineno, line in enumerate(data.decode("utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                record = EventRecord.from_json(line)
            except (ValueError, KeyError) as exc:
                raise ReplayError(lineno, f"unparseable event: {exc}") from exc
            log.append(record)
        return log

    @classmethod
    def read(cls, path: str) -> "EventLog":
        with open(path, "rb") as handle:
            return cls.from_bytes(handle.read())


@dataclass
class TrajectoryRow:
    """State visible after one event: capitals signed, balances in Wei."""

    ordinal: int
    kind: str
    balance: int
    surplus: int
    scr: int
    mcr: int
    tokens: dict[str, int] = field(default_factory=dict)
    flows: dict[str, int] = field(default_factory=dict)


def replay(log: EventLog) -> list[TrajectoryRow]:
    """Reconstruct the full state trajectory from events alone.

    Re-executes each event through a fresh contract; the re-emitted event
    must match the stored one exactly (this is where the ``ClaimSettled``
    ``Xt`` cross-check lives).  Returns one row per event with balance,
    surplus, signed SCR/MCR, token balances and cumulative ETH flow per
    address (positive = received from the contract).
    """
    from parinsure.protocol import (  # deferred: protocol imports this module
        EventLog as _EventLog,
        InsuranceContract,
        Params,
        ProtocolError,
        ZERO_ADDRESS,
    )

    rows: list[TrajectoryRow] = []
    contract: Optional[InsuranceContract] = None
    flows: dict[str, int] = {}

    for position, event in enumerate(log):
        if event.ordinal != position:
            raise ReplayError(position, f"ordinal gap (found {event.ordinal})")
        payload = event.payload
        try:
            if contract is None:
                if event.kind != "ParametersUpdated":
                    raise ReplayError(position, "log must start with the deployment parameters")
                contract = InsuranceContract(
                    ZERO_ADDRESS,
                    Params(
                        eta1=payload["newEta1"],
                        eta2=payload["newEta2"],
                        q_scr=payload["newQAlphaSCR"],
                        q_mcr=payload["newQAlphaMCR"],
                    ),
                )
            elif event.kind == "ParametersUpdated":
                contract._apply_params(
                    Params(
                        eta1=payload["newEta1"],
                        eta2=payload["newEta2"],
                        q_scr=payload["newQAlphaSCR"],
                        q_mcr=payload["newQAlphaMCR"],
                    )
                )
            elif event.kind == "Fund":
                contract.fund(payload["from"], payload["x"])
                flows[payload["from"]] = flows.get(payload["from"], 0) - payload["x"]
            elif event.kind == "Burn":
                paid = contract.burn(payload["from"], payload["y"])
                flows[payload["from"]] = flows.get(payload["from"], 0) + paid
            elif event.kind == "InsuranceUnderwritten":
                policy_id = contract.underwrite(
                    payload["customer"], payload["eventDescription"], payload["payoutAmount"]
                )
                premium = contract.state.policies[policy_id].premium
                flows[payload["customer"]] = flows.get(payload["customer"], 0) - premium
            elif event.kind == "ClaimSettled":
                policy = contract.state.policies.get(payload["contractId"])
                if policy is None:
                    raise ReplayError(position, f"settling unknown policy #{payload['contractId']}")
                result = contract._settle_with_outcome(
                    payload["contractId"], payload["payoutTransferred"]
                )
                if result.compensated:
                    holder = policy.holder
                    flows[holder] = flows.get(holder, 0) + policy.risk.payout
                if result.liquidation is not None:
                    for _, holder, amount in result.liquidation.refunds:
                        flows[holder] = flows.get(holder, 0) + amount
                    for holder, amount in result.liquidation.distributions:
                        flows[holder] = flows.get(holder, 0) + amount
            else:  # pragma: no cover - EventRecord validates kinds
                raise ReplayError(position, f"unknown kind {event.kind!r}")
        except ProtocolError as exc:
            raise ReplayError(position, f"event not applicable: {exc}") from exc
        except ValueError as exc:
            raise ReplayError(position, f"malformed payload: {exc}") from exc

        emitted = contract.log[position]
        if emitted != event:
            detail = "; ".join(
                f"{name}: log={event.payload[name]!r} replay={emitted.payload[name]!r}"
                for name in event.payload
                if event.payload[name] != emitted.payload.get(name)
            )
            raise ReplayError(position, f"{event.kind} cross-check failed ({detail})")

        rows.append(
            TrajectoryRow(
                ordinal=position,
                kind=event.kind,
                balance=contract.state.balance,
                surplus=contract.state.surplus,
                scr=contract.scr(),
                mcr=contract.mcr(),
                tokens=dict(contract.state.tokens),
                flows=dict(flows),
            )
        )
    return rows


def _address_columns(rows: Iterable[TrajectoryRow], attribute: str) -> list[str]:
    seen: dict[str, None] = {}
    for row in rows:
        for addr in getattr(row, attribute):
            seen.setdefault(addr)
    return list(seen)


def write_trajectory_csv(rows: list[TrajectoryRow], path: str) -> None:
    """CSV: ordinal, B, X, SCR, MCR, then one token-balance column per address."""
    addresses = _address_columns(rows, "tokens")
    lines = ["ordinal,B,X,SCR,MCR" + "".join(f",{a}" for a in addresses)]
    for row in rows:
        cells = [row.ordinal, row.balance, row.surplus, row.scr, row.mcr]
        cells += [row.tokens.get(a, 0) for a in addresses]
        lines.append(",".join(str(c) for c in cells))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def write_flows_csv(rows: list[TrajectoryRow], path: str) -> None:
    """CSV: ordinal, then one cumulative net ETH-flow column per address."""
    addresses = _address_columns(rows, "flows")
    lines = ["ordinal" + "".join(f",{a}" for a in addresses)]
    for row in rows:
        cells = [row.ordinal] + [row.flows.get(a, 0) for a in addresses]
        lines.append(",".join(str(c) for c in cells))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# chain transaction ingestion

_TX_INT_FIELDS = (
    "blockNumber",
    "timeStamp",
    "transactionIndex",
    "value",
    "gas",
    "gasPrice",
    "gasUsed",
)
_TX_STR_FIELDS = (
    "blockHash",
    "hash",
    "from",
    "to",
    "methodId",
    "contractAddress",
    "input",
    "functionName",
)


@dataclass(frozen=True)
class TransactionRecord:
    """One chain transaction as listed by an Etherscan-style endpoint."""

    blockNumber: int
    timeStamp: int
    transactionIndex: int
    value: int
    gas: int
    gasPrice: int
    gasUsed: int
    blockHash: str
    hash: str
    sender: str
    to: str
    methodId: str
    contractAddress: str
    input: str
    functionName: str

    def fee(self) -> int:
        """Transaction cost in Wei: gasPrice * gasUsed."""
        return self.gasPrice * self.gasUsed


def parse_transactions(payload) -> list[TransactionRecord]:
    """Parse an ``account/txlist`` response body into records.

    Accepts either the full response object (``{"status": .., "result":
    [..]}``) or a bare list of transaction objects.  Field-level failures
    report the offending field by name.
    """
    if isinstance(payload, dict):
        result = payload.get("result")
        if not isinstance(result, list):
            raise SchemaError(f"'result' is not a transaction list: {type(result).__name__}")
    elif isinstance(payload, list):
        result = payload
    else:
        raise SchemaError(f"unsupported payload type: {type(payload).__name__}")

    records = []
    for index, entry in enumerate(result):
        if not isinstance(entry, dict):
            raise SchemaError(f"transaction {index} is not an object")
        values: dict = {}
        for name in _TX_INT_FIELDS:
            raw = entry.get(name, "0")
            try:
                values[name] = int(raw) if raw != "" else 0
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"transaction {index}: field {name!r} is not an integer: {raw!r}") from exc
        for name in _TX_STR_FIELDS:
            raw = entry.get(name, "")
            if not isinstance(raw, str):
                raise SchemaError(f"transaction {index}: field {name!r} is not text: {raw!r}")
            values["sender" if name == "from" else name] = raw
        records.append(TransactionRecord(**values))
    return records


def _http_transport(endpoint: str, params: dict) -> dict:
    try:
        response = requests.get(endpoint, params=params, timeout=30)
        response.raise_for_status()
        return response.json()
    except (requests.RequestException, ValueError) as exc:
        raise TransportError(f"cannot fetch {endpoint}: {exc}") from exc


def fetch_transactions(
    endpoint: str,
    contract: str,
    api_key: str = "",
    transport: Optional[Callable[[str, dict], dict]] = None,
) -> list[TransactionRecord]:
    """Fetch and parse the transaction listing for ``contract``.

    ``transport`` is injectable so tests run against stored fixtures; the
    default issues an HTTP GET with Etherscan-compatible query parameters.
    """
    transport = transport or _http_transport
    payload = transport(
        endpoint,
        {
            "module": "account",
            "action": "txlist",
            "address": contract,
            "sort": "asc",
            "apikey": api_key,
        },
    )
    return parse_transactions(payload)


def fee_series(records: list[TransactionRecord]) -> list[tuple[int, int]]:
    """Per-transaction fees in listing order: ``(ordinal, gasPrice*gasUsed)``."""
    return [(index, record.fee()) for index, record in enumerate(records)]


def write_transactions_csv(records: list[TransactionRecord], path: str) -> None:
    """CSV of the parsed transaction listing plus a derived fee column."""
    header = (
        "blockNumber,timeStamp,transactionIndex,hash,blockHash,from,to,value,"
        "gas,gasPrice,gasUsed,fee,methodId,functionName,contractAddress"
    )
    lines = [header]
    for r in records:
        lines.append(
            ",".join(
                str(c)
                for c in (
                    r.blockNumber,
                    r.timeStamp,
                    r.transactionIndex,
                    r.hash,
                    r.blockHash,
                    r.sender,
                    r.to,
                    r.value,
                    r.gas,
                    r.gasPrice,
                    r.gasUsed,
                    r.fee(),
                    r.methodId,
                    r.functionName,
                    r.contractAddress,
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def write_fees_csv(records: list[TransactionRecord], path: str) -> None:
    """CSV of the fee series: ordinal, fee (Wei)."""
    lines = ["ordinal,fee"]
    for ordinal, fee in fee_series(records):
        lines.append(f"{ordinal},{fee}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
