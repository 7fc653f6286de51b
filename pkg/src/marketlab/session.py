"""Session orchestration: period lifecycle, dividend draws, questionnaires,
payouts, and the append-only event log.

A :class:`Session` is a pure state machine driven by commands in a total
order. It never reads a clock; every command carries its own timestamp
(``at``, seconds into the session) assigned by whichever driver is in
charge — the live server, the simulator, or a scripted schedule. That is
what makes simulated and replayed sessions exactly reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from itertools import count
from typing import Iterable, Sequence

from .events import EventKind, EventRecord
from .exchange import (
    ExchangeError,
    NotFound,
    Order,
    OrderBook,
    PostOutcome,
    Side,
    Trade,
    TraderAccount,
)


class SessionError(Exception):
    pass


class PeriodOutOfRange(SessionError):
    pass


class WrongPhase(SessionError):
    pass


class SessionNotEnded(SessionError):
    pass


class SessionAborted(SessionError):
    pass


class ReplayMismatch(SessionError):
    """The log does not reproduce itself under deterministic re-execution."""


class CorruptLog(SessionError):
    pass


RATING_MIN, RATING_MAX = 1, 7  # Likert scale for assessment items


@dataclass(frozen=True)
class SessionConfig:
    """All market parameters for one experimental session.

    Money is integer cents throughout. The defaults describe the base
    design: six traders, ten 120-second periods, and a 20-cent dividend
    paid with probability one half at the end of every period.
    """

    n_traders: int = 6
    n_periods: int = 10
    period_seconds: float = 120.0
    dividend_value: int = 20  # cents per share
    dividend_prob: float = 0.5
    endowment_shares: int = 3
    endowment_cash: int = 600  # cents
    showup_fee: int = 500  # cents
    rng_seed: int = 0
    session_id: str = "session"

    def __post_init__(self) -> None:
        if self.n_traders < 2:
            raise ValueError("n_traders must be at least 2")
        if self.n_periods < 1:
            raise ValueError("n_periods must be at least 1")
        if self.period_seconds < 1:
            raise ValueError("period_seconds must be at least 1")
        if not 0 <= self.dividend_prob <= 1:
            raise ValueError("dividend_prob must lie in [0, 1]")
        if self.dividend_value < 0:
            raise ValueError("dividend_value must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n_traders": self.n_traders,
            "n_periods": self.n_periods,
            "period_seconds": self.period_seconds,
            "dividend_value": self.dividend_value,
            "dividend_prob": self.dividend_prob,
            "endowment_shares": self.endowment_shares,
            "endowment_cash": self.endowment_cash,
            "showup_fee": self.showup_fee,
            "rng_seed": self.rng_seed,
            "session_id": self.session_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def intrinsic_value(config: SessionConfig, t: int) -> int:
    """Expected value of all remaining dividends at the start of period t.

    Computed as p * d * (T - t + 1) in exact rational arithmetic and
    rounded half-up to integer cents only at the boundary.
    """
    _check_period(config, t)
    p = Fraction(str(config.dividend_prob))
    value = p * config.dividend_value * (config.n_periods - t + 1)
    return _round_half_up(value)


def max_present_value(config: SessionConfig, t: int) -> int:
    """Sum of the highest possible remaining dividends: d * (T - t + 1).

    An absolute upper bound on any rational valuation of the asset.
    """
    _check_period(config, t)
    return config.dividend_value * (config.n_periods - t + 1)


def intrinsic_schedule(config: SessionConfig) -> list[int]:
    return [intrinsic_value(config, t) for t in range(1, config.n_periods + 1)]


def _check_period(config: SessionConfig, t: int) -> None:
    if not 1 <= t <= config.n_periods:
        raise PeriodOutOfRange(f"period {t} outside 1..{config.n_periods}")


def draw_dividend(rng: random.Random, config: SessionConfig) -> int:
    """Draw one period dividend: d with probability p, else 0.

    Consumes exactly one RNG draw so dividend streams are reproducible
    under a fixed seed regardless of what else happens in a period.
    """
    return config.dividend_value if rng.random() < config.dividend_prob else 0


def final_payout(account: TraderAccount, config: SessionConfig) -> int:
    """Cash plus show-up fee; shares are worthless after the last period."""
    return account.cash + config.showup_fee


@dataclass(frozen=True)
class DeclaredPrices:
    trader_id: str
    declared_value_per_period: list[int]  # cents, one value per period


class ItemGroup(str, Enum):
    SELF_PRECISION = "SELF_PRECISION"
    OTHERS_PRECISION = "OTHERS_PRECISION"


@dataclass(frozen=True)
class AssessmentResponse:
    trader_id: str
    item_id: str
    item_group: ItemGroup
    rating: int  # Likert 1..7


class Phase(Enum):
    SETUP = "SETUP"
    PRE_TRADE = "PRE_TRADE"  # questionnaires open, no periods yet
    TRADING = "TRADING"
    SETTLED = "SETTLED"  # between periods / after the last period
    ENDED = "ENDED"


@dataclass(frozen=True)
class PeriodState:
    period: int
    phase: Phase
    clock_remaining: float
    dividend_realized: int | None  # present iff SETTLED


@dataclass(frozen=True)
class PeriodResult:
    period: int
    dividend: int  # cents per share
    trades: list[Trade]
    summaries: dict[str, dict]


class Session:
    """One experimental session: accounts, the current book, and the log."""

    def __init__(self, config: SessionConfig, trader_ids: Sequence[str] | None = None):
        self.config = config
        if trader_ids is None:
            trader_ids = [f"t{i}" for i in range(1, config.n_traders + 1)]
        if len(trader_ids) != config.n_traders:
            raise ValueError(f"expected {config.n_traders} trader ids, got {len(trader_ids)}")
        if len(set(trader_ids)) != len(trader_ids):
            raise ValueError("trader ids must be unique")
        self.trader_ids = list(trader_ids)
        self.accounts = {
            tid: TraderAccount(tid, cash=config.endowment_cash, shares=config.endowment_shares)
            for tid in self.trader_ids
        }
        self.records: list[EventRecord] = []
        self.phase = Phase.SETUP
        self.period = 0
        self.period_started_at = 0.0
        self.book: OrderBook | None = None
        self.last_trade_price: int | None = None
        self.declared: dict[str, DeclaredPrices] = {}
        self.assessments: list[AssessmentResponse] = []
        self._dividend_rng = random.Random(config.rng_seed)
        self._seq = count(1)
        self._order_ids = count(1)
        self._trade_ids = count(1)
        self._last_dividend: int | None = None
        self._period_trades: list[Trade] = []
        self._period_trade_count: dict[str, int] = {}

    # --------------------------------------------------------------- lifecycle

    def begin(self, at: float = 0.0) -> None:
        self._require(Phase.SETUP)
        self.phase = Phase.PRE_TRADE
        self._append(
            EventKind.SESSION_START,
            {"config": self.config.to_dict(), "traders": list(self.trader_ids)},
            at=at,
            period=None,
        )

    def begin_period(self, at: float | None = None) -> int:
        if self.phase not in (Phase.PRE_TRADE, Phase.SETTLED):
            raise WrongPhase(f"cannot start a period from {self.phase.value}")
        if self.period >= self.config.n_periods:
            raise PeriodOutOfRange("all periods already traded")
        self.period += 1
        if at is None:
            at = (self.period - 1) * self.config.period_seconds
        self.period_started_at = at
        self.phase = Phase.TRADING
        self.book = OrderBook(self.period, trade_ids=self._trade_ids)
        self._last_dividend = None
        self._period_trades = []
        self._period_trade_count = {tid: 0 for tid in self.trader_ids}
        self._append(
            EventKind.PERIOD_START,
            {
                "period": self.period,
                "intrinsic_value_cents": intrinsic_value(self.config, self.period),
                "max_present_value_cents": max_present_value(self.config, self.period),
            },
            at=at,
        )
        return self.period

    def post_order(
        self, trader_id: str, side: Side, price: int, quantity: int = 1, at: float = 0.0
    ) -> PostOutcome:
        self._require(Phase.TRADING)
        if trader_id not in self.accounts:
            raise NotFound(f"unknown trader {trader_id!r}")
        assert self.book is not None
        # Probe first so a rejected order consumes no ids and leaves no trace.
        probe = Order(0, trader_id, side, price, quantity, 0)
        self.book.check_order(probe, self.accounts[trader_id])
        oid = next(self._order_ids)
        order = Order(oid, trader_id, side, price, quantity, submitted_seq=oid)
        outcome = self.book.post_order(order, self.accounts, timestamp=at)
        self._append(
            EventKind.ORDER_POSTED,
            {
                "order_id": order.order_id,
                "trader_id": trader_id,
                "side": side.value,
                "price_cents": price,
                "quantity": quantity,
                "submitted_seq": order.submitted_seq,
            },
            at=at,
        )
        for trade in outcome.trades:
            self.last_trade_price = trade.price
            self._period_trades.append(trade)
            self._period_trade_count[trade.buyer_id] += 1
            self._period_trade_count[trade.seller_id] += 1
            self._append(
                EventKind.TRADE,
                {
                    "trade_id": trade.trade_id,
                    "price_cents": trade.price,
                    "quantity": trade.quantity,
                    "buyer_id": trade.buyer_id,
                    "seller_id": trade.seller_id,
                    "resting_order_id": trade.resting_order_id,
                    "aggressor_order_id": trade.aggressor_order_id,
                },
                at=at,
            )
        return outcome

    def cancel_order(self, trader_id: str, order_id: int, at: float = 0.0) -> None:
        self._require(Phase.TRADING)
        assert self.book is not None
        self.book.cancel_order(trader_id, order_id)
        self._append(
            EventKind.ORDER_CANCELLED,
            {"order_id": order_id, "trader_id": trader_id},
            at=at,
        )

    def end_period(self, at: float | None = None) -> PeriodResult:
        self._require(Phase.TRADING)
        assert self.book is not None
        if at is None:
            at = self.period_started_at + self.config.period_seconds
        self.book.clear()  # resting orders expire at period end
        dividend = draw_dividend(self._dividend_rng, self.config)
        credits = {}
        holdings = {}
        for tid in self.trader_ids:
            acct = self.accounts[tid]
            amount = dividend * acct.shares
            acct.cash += amount
            acct.dividend_income += amount
            credits[tid] = amount
            holdings[tid] = acct.shares
        self._append(
            EventKind.DIVIDEND,
            {"amount_per_share_cents": dividend, "credits": credits, "holdings": holdings},
            at=at,
        )
        summaries = {
            tid: {
                "trades": self._period_trade_count[tid],
                "dividend_income_cents": credits[tid],
                "cash_cents": self.accounts[tid].cash,
                "shares": self.accounts[tid].shares,
            }
            for tid in self.trader_ids
        }
        self._append(EventKind.PERIOD_END, {"period": self.period, "summaries": summaries}, at=at)
        self.phase = Phase.SETTLED
        self._last_dividend = dividend
        return PeriodResult(
            period=self.period,
            dividend=dividend,
            trades=list(self._period_trades),
            summaries=summaries,
        )

    def finish(self, at: float | None = None) -> dict[str, int]:
        if self.phase is not Phase.SETTLED or self.period != self.config.n_periods:
            raise WrongPhase("session can only finish after the last period settles")
        if at is None:
            at = self.config.n_periods * self.config.period_seconds
        payouts = {}
        for tid in self.trader_ids:
            total = final_payout(self.accounts[tid], self.config)
            payouts[tid] = total
            self._append(
                EventKind.PAYOUT,
                {
                    "trader_id": tid,
                    "cash_cents": self.accounts[tid].cash,
                    "showup_fee_cents": self.config.showup_fee,
                    "total_cents": total,
                },
                at=at,
                period=None,
            )
        self._append(
            EventKind.SESSION_END,
            {"final_accounts": self.account_states()},
            at=at,
            period=None,
        )
        self.phase = Phase.ENDED
        return payouts

    def final_payout(self, trader_id: str) -> int:
        if self.phase is not Phase.ENDED:
            raise SessionNotEnded("payouts are defined only after the session ends")
        return final_payout(self.accounts[trader_id], self.config)

    # ------------------------------------------------------------ questionnaires

    def record_declared_prices(self, declared: DeclaredPrices, at: float = 0.0) -> int:
        self._require(Phase.PRE_TRADE, "questionnaires are collected before trading")
        values = declared.declared_value_per_period
        if len(values) != self.config.n_periods:
            raise ValueError(
                f"expected {self.config.n_periods} declared values, got {len(values)}"
            )
        if any(type(v) is not int or v < 0 for v in values):
            raise ValueError("declared values must be non-negative integer cents")
        if declared.trader_id not in self.accounts:
            raise NotFound(f"unknown trader {declared.trader_id!r}")
        self.declared[declared.trader_id] = declared
        rec = self._append(
            EventKind.QUESTIONNAIRE_RESPONSE,
            {
                "trader_id": declared.trader_id,
                "questionnaire": "declared_prices",
                "declared_value_per_period": list(values),
            },
            at=at,
            period=None,
        )
        return rec.seq

    def record_assessment(self, responses: Sequence[AssessmentResponse], at: float = 0.0) -> int:
        self._require(Phase.PRE_TRADE, "questionnaires are collected before trading")
        for resp in responses:
            if not RATING_MIN <= resp.rating <= RATING_MAX:
                raise ValueError(
                    f"rating {resp.rating} outside {RATING_MIN}..{RATING_MAX} for {resp.item_id}"
                )
            if resp.trader_id not in self.accounts:
                raise NotFound(f"unknown trader {resp.trader_id!r}")
        self.assessments.extend(responses)
        trader_id = responses[0].trader_id if responses else None
        rec = self._append(
            EventKind.QUESTIONNAIRE_RESPONSE,
            {
                "trader_id": trader_id,
                "questionnaire": "assessment",
                "items": [
                    {"item_id": r.item_id, "item_group": r.item_group.value, "rating": r.rating}
                    for r in responses
                ],
            },
            at=at,
            period=None,
        )
        return rec.seq

    # ----------------------------------------------------------------- queries

    def period_state(self, now: float | None = None) -> PeriodState:
        remaining = 0.0
        if self.phase is Phase.TRADING:
            if now is None:
                remaining = self.config.period_seconds
            else:
                remaining = max(0.0, self.period_started_at + self.config.period_seconds - now)
        return PeriodState(
            period=self.period,
            phase=self.phase,
            clock_remaining=remaining,
            dividend_realized=self._last_dividend if self.phase is Phase.SETTLED else None,
        )

    def account_states(self) -> dict[str, dict]:
        return {
            tid: {
                "cash_cents": acct.cash,
                "shares": acct.shares,
                "dividend_income_cents": acct.dividend_income,
                "trading_pnl_cents": acct.trading_pnl,
            }
            for tid, acct in sorted(self.accounts.items())
        }

    # --------------------------------------------------------------- internals

    def _require(self, phase: Phase, hint: str = "") -> None:
        if self.phase is not phase:
            raise WrongPhase(hint or f"operation requires {phase.value}, session is {self.phase.value}")

    def _append(
        self, kind: EventKind, payload: dict, at: float, period: int | None | str = "auto"
    ) -> EventRecord:
        rec = EventRecord(
            seq=next(self._seq),
            wall_time=at,
            session_id=self.config.session_id,
            period=self.period if period == "auto" else period,
            kind=kind,
            payload=payload,
        )
        self.records.append(rec)
        return rec


# ----------------------------------------------------------------- schedules

@dataclass(frozen=True)
class ScriptedOrder:
    trader_id: str
    side: Side
    price: int
    quantity: int = 1


@dataclass(frozen=True)
class ScriptedCancel:
    trader_id: str
    order_id: int


@dataclass(frozen=True)
class QuestionnaireSubmission:
    trader_id: str
    declared_value_per_period: list[int]
    assessments: list[AssessmentResponse] = field(default_factory=list)


@dataclass(frozen=True)
class CommandSchedule:
    """A fully scripted session: questionnaire submissions in order, then an
    ordered command list per period. Used by scripted bots, loopback tests,
    and the in-process reference run they are compared against."""

    questionnaires: list[QuestionnaireSubmission]
    periods: list[list[ScriptedOrder | ScriptedCancel]]


def run_schedule(
    config: SessionConfig,
    schedule: CommandSchedule,
    trader_ids: Sequence[str] | None = None,
) -> Session:
    """Apply a scripted command schedule with the scripted-pacing clock.

    Timestamps follow the same rule the server uses under scripted pacing:
    period t starts at (t-1) * period_seconds and every applied command
    advances the virtual clock by one second. Rejected commands advance
    nothing, so the log is a pure function of the applied schedule.
    """
    if len(schedule.periods) != config.n_periods:
        raise ValueError(
            f"schedule covers {len(schedule.periods)} periods, config has {config.n_periods}"
        )
    session = Session(config, trader_ids)
    session.begin(at=0.0)
    for sub in schedule.questionnaires:
        session.record_declared_prices(
            DeclaredPrices(sub.trader_id, list(sub.declared_value_per_period)), at=0.0
        )
        if sub.assessments:
            session.record_assessment(sub.assessments, at=0.0)
    for commands in schedule.periods:
        session.begin_period()
        applied = 0
        for cmd in commands:
            at = (session.period - 1) * config.period_seconds + (applied + 1) * 1.0
            try:
                if isinstance(cmd, ScriptedOrder):
                    session.post_order(cmd.trader_id, cmd.side, cmd.price, cmd.quantity, at=at)
                else:
                    session.cancel_order(cmd.trader_id, cmd.order_id, at=at)
            except ExchangeError:
                continue
            applied += 1
        session.end_period()
    session.finish()
    return session


# -------------------------------------------------------------------- replay

_INPUT_KINDS = {
    EventKind.SESSION_START,
    EventKind.PERIOD_START,
    EventKind.ORDER_POSTED,
    EventKind.ORDER_CANCELLED,
    EventKind.QUESTIONNAIRE_RESPONSE,
    EventKind.DIVIDEND,  # triggers end_period; payload is then verified
    EventKind.PAYOUT,  # first one triggers finish
}


def replay_log(records: Sequence[EventRecord]) -> Session:
    """Re-execute a log's commands and verify it reproduces itself exactly.

    Command events are re-applied with their logged timestamps; everything
    derived (trades, dividends, summaries, payouts, final accounts) is
    regenerated and compared byte-for-byte against the original records.
    Raises :class:`ReplayMismatch` at the first divergence and
    :class:`CorruptLog` if the log cannot be interpreted at all.
    """
    if not records:
        raise CorruptLog("empty log")
    if records[0].kind is not EventKind.SESSION_START:
        raise CorruptLog("log must open with SESSION_START")
    session: Session | None = None
    finished = False
    try:
        for rec in records:
            if rec.kind not in _INPUT_KINDS:
                continue
            if rec.kind is EventKind.SESSION_START:
                if session is not None:
                    raise CorruptLog("duplicate SESSION_START")
                config = SessionConfig.from_dict(rec.payload["config"])
                session = Session(config, rec.payload["traders"])
                session.begin(at=rec.wall_time)
                continue
            if session is None:
                raise CorruptLog("event before SESSION_START")
            p = rec.payload
            if rec.kind is EventKind.PERIOD_START:
                session.begin_period(at=rec.wall_time)
            elif rec.kind is EventKind.ORDER_POSTED:
                session.post_order(
                    p["trader_id"],
                    Side(p["side"]),
                    p["price_cents"],
                    p["quantity"],
                    at=rec.wall_time,
                )
            elif rec.kind is EventKind.ORDER_CANCELLED:
                session.cancel_order(p["trader_id"], p["order_id"], at=rec.wall_time)
            elif rec.kind is EventKind.QUESTIONNAIRE_RESPONSE:
                if p["questionnaire"] == "declared_prices":
                    session.record_declared_prices(
                        DeclaredPrices(p["trader_id"], list(p["declared_value_per_period"])),
                        at=rec.wall_time,
                    )
                else:
                    session.record_assessment(
                        [
                            AssessmentResponse(
                                p["trader_id"],
                                item["item_id"],
                                ItemGroup(item["item_group"]),
                                item["rating"],
                            )
                            for item in p["items"]
                        ],
                        at=rec.wall_time,
                    )
            elif rec.kind is EventKind.DIVIDEND:
                session.end_period(at=rec.wall_time)
            elif rec.kind is EventKind.PAYOUT and not finished:
                session.finish(at=rec.wall_time)
                finished = True
    except (ExchangeError, SessionError, KeyError, ValueError) as exc:
        if isinstance(exc, ReplayMismatch):
            raise
        raise CorruptLog(f"log could not be re-executed: {exc}") from exc

    assert session is not None
    for i, (logged, derived) in enumerate(zip(records, session.records)):
        if logged.to_json() != derived.to_json():
            raise ReplayMismatch(
                f"record seq {logged.seq} diverges on replay: "
                f"logged {logged.to_json()} != derived {derived.to_json()}"
            )
    if len(session.records) != len(records):
        raise ReplayMismatch(
            f"log has {len(records)} records, replay produced {len(session.records)}"
        )
    return session


def verify_replay(records: Sequence[EventRecord]) -> Session:
    return replay_log(records)
