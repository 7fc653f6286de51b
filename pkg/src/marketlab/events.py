"""Append-only session event log: the single source of truth for replay
and analytics.

One record per line, JSON-encoded with sorted keys, so a log is both
human-greppable and byte-stable: identical sessions serialize to identical
bytes. The field names and kinds here are the contract shared by the live
server, the simulator, and the analytics pipeline.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable


class EventKind(str, Enum):
    SESSION_START = "SESSION_START"
    PERIOD_START = "PERIOD_START"
    ORDER_POSTED = "ORDER_POSTED"
    ORDER_CANCELLED = "ORDER_CANCELLED"
    TRADE = "TRADE"
    DIVIDEND = "DIVIDEND"
    PERIOD_END = "PERIOD_END"
    QUESTIONNAIRE_RESPONSE = "QUESTIONNAIRE_RESPONSE"
    PAYOUT = "PAYOUT"
    SESSION_END = "SESSION_END"


@dataclass(frozen=True)
class EventRecord:
    seq: int  # strictly increasing within a session
    wall_time: float  # seconds into the session, per the driver's clock
    session_id: str
    period: int | None  # None for session-level events
    kind: EventKind
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "wall_time": self.wall_time,
            "session_id": self.session_id,
            "period": self.period,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "EventRecord":
        return cls(
            seq=data["seq"],
            wall_time=data["wall_time"],
            session_id=data["session_id"],
            period=data["period"],
            kind=EventKind(data["kind"]),
            payload=data["payload"],
        )

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        return cls.from_dict(json.loads(line))


def dumps_log(records: Iterable[EventRecord]) -> str:
    return "".join(rec.to_json() + "\n" for rec in records)


def write_log(records: Iterable[EventRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_log(records), encoding="utf-8")


def read_log(path: str | Path) -> list[EventRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(EventRecord.from_json(line))
    return records


TRADES_CSV_COLUMNS = [
    "session_id",
    "period",
    "trade_seq",
    "price_cents",
    "quantity",
    "buyer_id",
    "seller_id",
    "seconds_into_period",
]


def trades_csv(records: Iterable[EventRecord]) -> str:
    """Render every TRADE in the log as CSV, one row per execution."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRADES_CSV_COLUMNS)
    period_start: dict[int, float] = {}
    for rec in records:
        if rec.kind is EventKind.PERIOD_START:
            period_start[rec.payload["period"]] = rec.wall_time
        elif rec.kind is EventKind.TRADE:
            p = rec.payload
            writer.writerow(
                [
                    rec.session_id,
                    rec.period,
                    p["trade_id"],
                    p["price_cents"],
                    p["quantity"],
                    p["buyer_id"],
                    p["seller_id"],
                    rec.wall_time - period_start.get(rec.period, 0.0),
                ]
            )
    return buf.getvalue()


def write_trades_csv(records: Iterable[EventRecord], path: str | Path) -> None:
    Path(path).write_text(trades_csv(list(records)), encoding="utf-8")
