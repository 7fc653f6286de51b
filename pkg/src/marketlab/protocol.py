"""Wire protocol between trading clients and the session server.

Frames are newline-delimited JSON objects over a persistent bidirectional
byte stream. Every frame carries a ``type`` tag; unknown fields are
ignored (tolerant reader) so clients and servers can evolve independently.
The full message-by-message reference with byte-exact examples lives in
protocol.md at the repository root.

Communication through this protocol is structurally restricted to order
flow: there is no chat or free-text message type, and no server message
ever names which trader owns a resting order or took the other side of a
trade.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Any, ClassVar


class DecodeError(Exception):
    """A frame could not be decoded; ``offset`` is the failing byte position."""

    def __init__(self, detail: str, offset: int = 0):
        super().__init__(f"{detail} (byte offset {offset})")
        self.offset = offset


class ProtocolViolation(Exception):
    """Structurally valid frame with an unknown or out-of-place type."""


@dataclass(frozen=True)
class Message:
    TYPE: ClassVar[str] = ""

    def to_dict(self) -> dict:
        data: dict[str, Any] = {"type": self.TYPE}
        for f in dataclass_fields(self):
            data[f.name] = getattr(self, f.name)
        return data


# ----------------------------------------------------------- client -> server

@dataclass(frozen=True)
class Hello(Message):
    TYPE: ClassVar[str] = "HELLO"
    token: str = ""


@dataclass(frozen=True)
class SubmitQuestionnaire(Message):
    TYPE: ClassVar[str] = "SUBMIT_QUESTIONNAIRE"
    declared_values: list[int] = field(default_factory=list)  # one per period, cents
    assessments: list[dict] = field(default_factory=list)  # {item_id, item_group, rating}


@dataclass(frozen=True)
class PostOrder(Message):
    TYPE: ClassVar[str] = "POST_ORDER"
    side: str = "BID"  # BID | ASK
    price_cents: int = 0
    quantity: int = 1


@dataclass(frozen=True)
class CancelOrder(Message):
    TYPE: ClassVar[str] = "CANCEL_ORDER"
    order_id: int = 0


@dataclass(frozen=True)
class Ping(Message):
    TYPE: ClassVar[str] = "PING"


CLIENT_TYPES = (Hello, SubmitQuestionnaire, PostOrder, CancelOrder, Ping)


# ----------------------------------------------------------- server -> client

@dataclass(frozen=True)
class Welcome(Message):
    TYPE: ClassVar[str] = "WELCOME"
    trader_id: str = ""
    session_id: str = ""


@dataclass(frozen=True)
class SessionInfo(Message):
    """Public session state; sent after WELCOME, on PING, and on reconnect.

    ``config`` holds every public market parameter (the dividend RNG seed
    is withheld so the dividend sequence cannot be predicted).
    """

    TYPE: ClassVar[str] = "SESSION_INFO"
    phase: str = ""  # QUESTIONNAIRE | TRADING | SUMMARY | PAYOUT
    period: int = 0
    config: dict = field(default_factory=dict)
    cash_cents: int = 0
    shares: int = 0


@dataclass(frozen=True)
class PeriodStart(Message):
    TYPE: ClassVar[str] = "PERIOD_START"
    period: int = 0
    period_seconds: float = 0.0
    server_time: float = 0.0  # seconds into the session, server clock
    intrinsic_value_cents: int = 0
    max_present_value_cents: int = 0


@dataclass(frozen=True)
class BookUpdate(Message):
    """Anonymous depth snapshot; entries are [price_cents, quantity, mine]
    with ``mine`` computed per recipient."""

    TYPE: ClassVar[str] = "BOOK_UPDATE"
    period: int = 0
    best_bid: int | None = None
    best_ask: int | None = None
    bids: list[list] = field(default_factory=list)
    asks: list[list] = field(default_factory=list)


@dataclass(frozen=True)
class TradeNotice(Message):
    """Broadcast per execution. Counterparty identity is revealed to no
    one; the two involved traders see only their own side and balances."""

    TYPE: ClassVar[str] = "TRADE_NOTICE"
    period: int = 0
    trade_seq: int = 0
    price_cents: int = 0
    quantity: int = 0
    own_side: str | None = None  # BUY | SELL for the two parties, else None
    cash_cents: int | None = None
    shares: int | None = None


@dataclass(frozen=True)
class OrderAck(Message):
    """Acknowledges the recipient's own POST_ORDER or CANCEL_ORDER."""

    TYPE: ClassVar[str] = "ORDER_ACK"
    order_id: int = 0
    side: str = ""
    price_cents: int = 0
    quantity: int = 0
    resting: bool = False  # False when fully executed on arrival
    cancelled: bool = False  # True when acknowledging a cancel


@dataclass(frozen=True)
class OrderReject(Message):
    TYPE: ClassVar[str] = "ORDER_REJECT"
    reason: str = ""
    detail: str = ""


@dataclass(frozen=True)
class PeriodSummary(Message):
    TYPE: ClassVar[str] = "PERIOD_SUMMARY"
    period: int = 0
    dividend_cents_per_share: int = 0
    trades_made: int = 0
    dividend_income_cents: int = 0
    cash_cents: int = 0
    shares: int = 0


@dataclass(frozen=True)
class FinalPayout(Message):
    TYPE: ClassVar[str] = "FINAL_PAYOUT"
    cash_cents: int = 0
    showup_fee_cents: int = 0
    total_cents: int = 0


@dataclass(frozen=True)
class Error(Message):
    TYPE: ClassVar[str] = "ERROR"
    reason: str = ""
    detail: str = ""


SERVER_TYPES = (
    Welcome,
    SessionInfo,
    PeriodStart,
    BookUpdate,
    TradeNotice,
    OrderAck,
    OrderReject,
    PeriodSummary,
    FinalPayout,
    Error,
)

_REGISTRY: dict[str, type[Message]] = {cls.TYPE: cls for cls in CLIENT_TYPES + SERVER_TYPES}


def encode_message(msg: Message) -> bytes:
    """One message to one newline-terminated frame."""
    return json.dumps(msg.to_dict(), sort_keys=True, separators=(",", ":")).encode() + b"\n"


def decode_message(frame: bytes | str) -> Message:
    """One frame back to a message. Unknown fields are ignored; a missing
    or unknown ``type`` raises ProtocolViolation, anything unparsable
    raises DecodeError with the failing byte offset."""
    if isinstance(frame, bytes):
        text = frame.decode("utf-8", errors="replace")
    else:
        text = frame
    text = text.strip("\r\n")
    if not text:
        raise DecodeError("empty frame", 0)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed frame: {exc.msg}", exc.pos) from exc
    if not isinstance(data, dict):
        raise DecodeError("frame is not a JSON object", 0)
    msg_type = data.get("type")
    cls = _REGISTRY.get(msg_type)
    if cls is None:
        raise ProtocolViolation(f"unknown message type {msg_type!r}")
    known = {f.name for f in dataclass_fields(cls)}
    kwargs = {k: v for k, v in data.items() if k in known}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise DecodeError(f"bad fields for {msg_type}: {exc}", 0) from exc
