"""Session server: admits one client per seat, relays anonymous market
state, and drives the session through questionnaires, trading periods, and
payout.

Concurrency model: each connection has a reader task that forwards decoded
messages into a single queue; one sequencer task consumes the queue, applies
commands to the session in receipt order, and writes every outbound frame.
All session state is touched only by the sequencer, so every client
observes the same broadcast order and every state change corresponds to
exactly one event record.

Two pacing modes:

* ``real``  — periods end on a wall-clock timer; timestamps are seconds
  since the session began.
* ``ping``  — scripted pacing for bots and tests: a period ends when every
  seat has sent PING, and the virtual clock advances one second per
  applied command, which makes the event log a pure function of the
  command schedule (and therefore equal to an in-process
  :func:`marketlab.session.run_schedule` run of the same schedule).
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field
from pathlib import Path

from . import protocol as wire
from .events import EventRecord, write_log
from .exchange import ExchangeError, Side
from .session import (
    AssessmentResponse,
    DeclaredPrices,
    ItemGroup,
    Phase,
    Session,
    SessionAborted,
    SessionConfig,
)


class BindFailure(Exception):
    pass


@dataclass
class ServerOptions:
    host: str = "127.0.0.1"
    port: int = 0  # 0 picks an ephemeral port; see bound_address
    tokens: list[str] | None = None  # one join token per seat; default seat-1..seat-N
    pacing: str = "real"  # real | ping
    summary_seconds: float = 3.0  # pause on the summary screen (real pacing)
    grace_seconds: float = 30.0  # disconnect grace before the session aborts
    broadcast_trades: bool = True  # anonymous trade tape for everyone
    log_path: str | Path | None = None


@dataclass
class _Seat:
    index: int
    trader_id: str
    token: str
    writer: asyncio.StreamWriter | None = None
    questionnaire_done: bool = False
    pinged: bool = False
    grace_task: asyncio.Task | None = None


class _Conn:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer
        self.seat: _Seat | None = None


class ExchangeServer:
    """One server instance runs exactly one session and then stops."""

    def __init__(self, config: SessionConfig, options: ServerOptions | None = None):
        self.config = config
        self.options = options or ServerOptions()
        if self.options.pacing not in ("real", "ping"):
            raise ValueError("pacing must be 'real' or 'ping'")
        tokens = self.options.tokens or [f"seat-{i}" for i in range(1, config.n_traders + 1)]
        if len(tokens) != config.n_traders:
            raise ValueError(f"need {config.n_traders} seat tokens, got {len(tokens)}")
        self.session = Session(config)
        self.seats = [
            _Seat(index=i, trader_id=tid, token=tokens[i])
            for i, tid in enumerate(self.session.trader_ids)
        ]
        self._by_token = {seat.token: seat for seat in self.seats}
        self._queue: asyncio.Queue = asyncio.Queue()
        self._done = asyncio.Event()
        self._aborted: str | None = None
        self._t0 = 0.0
        self._applied_in_period = 0
        self._period_timer: asyncio.Task | None = None
        self._ui_phase = "LOBBY"
        self.bound_address: tuple[str, int] | None = None

    # ------------------------------------------------------------------ serve

    async def serve(self) -> list[EventRecord]:
        try:
            server = await asyncio.start_server(
                self._on_connect, self.options.host, self.options.port
            )
        except OSError as exc:
            raise BindFailure(f"cannot bind {self.options.host}:{self.options.port}: {exc}") from exc
        self.bound_address = server.sockets[0].getsockname()[:2]
        self._t0 = asyncio.get_running_loop().time()
        sequencer = asyncio.create_task(self._sequencer())
        try:
            async with server:
                await self._done.wait()
        finally:
            sequencer.cancel()
            for seat in self.seats:
                if seat.grace_task:
                    seat.grace_task.cancel()
                if seat.writer is not None:
                    seat.writer.close()
        if self._aborted is not None:
            raise SessionAborted(f"trader {self._aborted} left and never returned")
        if self.options.log_path is not None:
            write_log(self.session.records, self.options.log_path)
        return self.session.records

    # ------------------------------------------------------------ connections

    async def _on_connect(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn = _Conn(reader, writer)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    msg = wire.decode_message(line)
                except wire.DecodeError as exc:
                    await self._queue.put(("bad_frame", conn, str(exc)))
                    continue
                except wire.ProtocolViolation as exc:
                    await self._queue.put(("bad_type", conn, str(exc)))
                    continue
                await self._queue.put(("frame", conn, msg))
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            await self._queue.put(("gone", conn, None))

    # -------------------------------------------------------------- sequencer

    async def _sequencer(self) -> None:
        while not self._done.is_set():
            kind, conn, payload = await self._queue.get()
            if kind == "bad_frame":
                await self._send_conn(conn, wire.Error(reason="malformed_message", detail=payload))
            elif kind == "bad_type":
                await self._send_conn(conn, wire.Error(reason="protocol_violation", detail=payload))
            elif kind == "gone":
                await self._handle_gone(conn)
            elif kind == "period_timeout":
                if payload == self.session.period and self.session.phase is Phase.TRADING:
                    await self._end_period()
            elif kind == "next_period":
                if self.session.phase is Phase.SETTLED:
                    await self._begin_period()
            elif kind == "grace_expired":
                seat = payload
                if seat.writer is None and self._ui_phase not in ("LOBBY", "PAYOUT"):
                    await self._abort(seat.trader_id)
            elif kind == "frame":
                await self._handle_frame(conn, payload)

    async def _handle_frame(self, conn: _Conn, msg: wire.Message) -> None:
        if conn.seat is None:
            if isinstance(msg, wire.Hello):
                await self._handle_hello(conn, msg)
            else:
                await self._send_conn(
                    conn, wire.Error(reason="not_authenticated", detail="send HELLO first")
                )
            return
        seat = conn.seat
        if isinstance(msg, wire.Hello):
            await self._send(seat, wire.Error(reason="protocol_violation", detail="already joined"))
        elif isinstance(msg, wire.Ping):
            await self._send(seat, self._session_info(seat))
            if self.options.pacing == "ping" and self.session.phase is Phase.TRADING:
                seat.pinged = True
                if all(s.pinged for s in self.seats):
                    await self._end_period()
        elif isinstance(msg, wire.SubmitQuestionnaire):
            await self._handle_questionnaire(seat, msg)
        elif isinstance(msg, wire.PostOrder):
            await self._handle_post_order(seat, msg)
        elif isinstance(msg, wire.CancelOrder):
            await self._handle_cancel(seat, msg)

    async def _handle_hello(self, conn: _Conn, msg: wire.Hello) -> None:
        seat = self._by_token.get(msg.token)
        if seat is None or seat.writer is not None:
            await self._send_conn(
                conn,
                wire.Error(
                    reason="seat_exhausted",
                    detail="no free seat for that token" if seat is None else "seat already connected",
                ),
            )
            conn.writer.close()
            return
        seat.writer = conn.writer
        conn.seat = seat
        if seat.grace_task is not None:
            seat.grace_task.cancel()
            seat.grace_task = None
        await self._send(seat, wire.Welcome(trader_id=seat.trader_id, session_id=self.config.session_id))
        await self._send(seat, self._session_info(seat))
        if self.session.phase is Phase.TRADING:
            await self._send(seat, self._book_update(seat))
        if self._ui_phase == "LOBBY" and all(s.writer is not None for s in self.seats):
            await self._begin_session()

    async def _handle_gone(self, conn: _Conn) -> None:
        seat = conn.seat
        conn.seat = None
        if seat is None or seat.writer is not conn.writer:
            return
        seat.writer = None
        if self._ui_phase == "LOBBY":
            return  # seat simply frees up again
        if self._done.is_set() or self._ui_phase == "PAYOUT":
            return
        seat.grace_task = asyncio.create_task(self._grace(seat))

    async def _grace(self, seat: _Seat) -> None:
        await asyncio.sleep(self.options.grace_seconds)
        await self._queue.put(("grace_expired", None, seat))

    # ------------------------------------------------------------- lifecycle

    async def _begin_session(self) -> None:
        self.session.begin(at=0.0 if self.options.pacing == "ping" else self._now())
        self._ui_phase = "QUESTIONNAIRE"
        for seat in self.seats:
            await self._send(seat, self._session_info(seat))

    async def _handle_questionnaire(self, seat: _Seat, msg: wire.SubmitQuestionnaire) -> None:
        if self._ui_phase != "QUESTIONNAIRE":
            await self._send(seat, wire.OrderReject(reason="wrong_phase", detail="questionnaires are closed"))
            return
        if seat.questionnaire_done:
            await self._send(seat, wire.Error(reason="duplicate_submission", detail=""))
            return
        at = 0.0 if self.options.pacing == "ping" else self._now()
        try:
            self.session.record_declared_prices(
                DeclaredPrices(seat.trader_id, list(msg.declared_values)), at=at
            )
            if msg.assessments:
                self.session.record_assessment(
                    [
                        AssessmentResponse(
                            seat.trader_id,
                            item["item_id"],
                            ItemGroup(item["item_group"]),
                            item["rating"],
                        )
                        for item in msg.assessments
                    ],
                    at=at,
                )
        except (ValueError, KeyError) as exc:
            await self._send(seat, wire.Error(reason="invalid_questionnaire", detail=str(exc)))
            return
        seat.questionnaire_done = True
        if all(s.questionnaire_done for s in self.seats):
            await self._begin_period()

    async def _begin_period(self) -> None:
        at = None if self.options.pacing == "ping" else self._now()
        period = self.session.begin_period(at=at)
        self._applied_in_period = 0
        for seat in self.seats:
            seat.pinged = False
        self._ui_phase = "TRADING"
        start = self.session.records[-1].wall_time
        notice = wire.PeriodStart(
            period=period,
            period_seconds=self.config.period_seconds,
            server_time=start,
            intrinsic_value_cents=self.session.records[-1].payload["intrinsic_value_cents"],
            max_present_value_cents=self.session.records[-1].payload["max_present_value_cents"],
        )
        for seat in self.seats:
            await self._send(seat, notice)
            await self._send(seat, self._book_update(seat))
        if self.options.pacing == "real":
            self._period_timer = asyncio.create_task(self._period_alarm(period))

    async def _period_alarm(self, period: int) -> None:
        await asyncio.sleep(self.config.period_seconds)
        await self._queue.put(("period_timeout", None, period))

    async def _handle_post_order(self, seat: _Seat, msg: wire.PostOrder) -> None:
        if self.session.phase is not Phase.TRADING:
            await self._send(seat, wire.OrderReject(reason="wrong_phase", detail="no period is trading"))
            return
        try:
            side = Side(msg.side)
        except ValueError:
            await self._send(seat, wire.OrderReject(reason="invalid_side", detail=msg.side))
            return
        at = self._command_time()
        try:
            outcome = self.session.post_order(
                seat.trader_id, side, msg.price_cents, msg.quantity, at=at
            )
        except ExchangeError as exc:
            await self._send(seat, wire.OrderReject(reason=exc.code, detail=exc.detail))
            return
        self._applied_in_period += 1
        order_event = next(
            rec
            for rec in reversed(self.session.records)
            if rec.kind.value == "ORDER_POSTED"
        )
        await self._send(
            seat,
            wire.OrderAck(
                order_id=order_event.payload["order_id"],
                side=msg.side,
                price_cents=msg.price_cents,
                quantity=msg.quantity,
                resting=outcome.resting_order_id is not None,
            ),
        )
        for trade in outcome.trades:
            for other in self.seats:
                own_side = None
                if other.trader_id == trade.buyer_id:
                    own_side = "BUY"
                elif other.trader_id == trade.seller_id:
                    own_side = "SELL"
                if own_side is None and not self.options.broadcast_trades:
                    continue
                acct = self.session.accounts[other.trader_id]
                await self._send(
                    other,
                    wire.TradeNotice(
                        period=trade.period,
                        trade_seq=trade.trade_id,
                        price_cents=trade.price,
                        quantity=trade.quantity,
                        own_side=own_side,
                        cash_cents=acct.cash if own_side else None,
                        shares=acct.shares if own_side else None,
                    ),
                )
        for other in self.seats:
            await self._send(other, self._book_update(other))

    async def _handle_cancel(self, seat: _Seat, msg: wire.CancelOrder) -> None:
        if self.session.phase is not Phase.TRADING:
            await self._send(seat, wire.OrderReject(reason="wrong_phase", detail="no period is trading"))
            return
        at = self._command_time()
        try:
            self.session.cancel_order(seat.trader_id, msg.order_id, at=at)
        except ExchangeError as exc:
            await self._send(seat, wire.OrderReject(reason=exc.code, detail=exc.detail))
            return
        self._applied_in_period += 1
        await self._send(seat, wire.OrderAck(order_id=msg.order_id, cancelled=True))
        for other in self.seats:
            await self._send(other, self._book_update(other))

    async def _end_period(self) -> None:
        if self._period_timer is not None:
            self._period_timer.cancel()
            self._period_timer = None
        at = None if self.options.pacing == "ping" else self._now()
        result = self.session.end_period(at=at)
        self._ui_phase = "SUMMARY"
        for seat in self.seats:
            summary = result.summaries[seat.trader_id]
            await self._send(
                seat,
                wire.PeriodSummary(
                    period=result.period,
                    dividend_cents_per_share=result.dividend,
                    trades_made=summary["trades"],
                    dividend_income_cents=summary["dividend_income_cents"],
                    cash_cents=summary["cash_cents"],
                    shares=summary["shares"],
                ),
            )
        if self.session.period >= self.config.n_periods:
            await self._finish()
        elif self.options.pacing == "ping":
            await self._begin_period()
        else:
            asyncio.create_task(self._summary_pause())

    async def _summary_pause(self) -> None:
        await asyncio.sleep(self.options.summary_seconds)
        await self._queue.put(("next_period", None, None))

    async def _finish(self) -> None:
        at = None if self.options.pacing == "ping" else self._now()
        payouts = self.session.finish(at=at)
        self._ui_phase = "PAYOUT"
        for seat in self.seats:
            await self._send(
                seat,
                wire.FinalPayout(
                    cash_cents=self.session.accounts[seat.trader_id].cash,
                    showup_fee_cents=self.config.showup_fee,
                    total_cents=payouts[seat.trader_id],
                ),
            )
            if seat.writer is not None:
                try:
                    await seat.writer.drain()
                except ConnectionError:
                    pass
        self._done.set()

    async def _abort(self, trader_id: str) -> None:
        self._aborted = trader_id
        for seat in self.seats:
            await self._send(
                seat, wire.Error(reason="session_aborted", detail="a seat left the session")
            )
        self._done.set()

    # ---------------------------------------------------------------- helpers

    def _now(self) -> float:
        return asyncio.get_running_loop().time() - self._t0

    def _command_time(self) -> float:
        if self.options.pacing == "ping":
            period_start = (self.session.period - 1) * self.config.period_seconds
            return period_start + (self._applied_in_period + 1) * 1.0
        return self._now()

    def _session_info(self, seat: _Seat) -> wire.SessionInfo:
        config = self.config.to_dict()
        config.pop("rng_seed")  # the dividend stream must not be predictable
        acct = self.session.accounts[seat.trader_id]
        return wire.SessionInfo(
            phase=self._ui_phase,
            period=self.session.period,
            config=config,
            cash_cents=acct.cash,
            shares=acct.shares,
        )

    def _book_update(self, seat: _Seat) -> wire.BookUpdate:
        book = self.session.book
        assert book is not None
        snap = book.snapshot(viewer=seat.trader_id)
        return wire.BookUpdate(
            period=self.session.period,
            best_bid=snap.best_bid,
            best_ask=snap.best_ask,
            bids=[[e.price, e.quantity, e.mine] for e in snap.bids],
            asks=[[e.price, e.quantity, e.mine] for e in snap.asks],
        )

    async def _send(self, seat: _Seat, msg: wire.Message) -> None:
        if seat.writer is None:
            return
        try:
            seat.writer.write(wire.encode_message(msg))
            await seat.writer.drain()
        except ConnectionError:
            seat.writer = None

    async def _send_conn(self, conn: _Conn, msg: wire.Message) -> None:
        try:
            conn.writer.write(wire.encode_message(msg))
            await conn.writer.drain()
        except ConnectionError:
            pass


async def serve_session(config: SessionConfig, options: ServerOptions | None = None) -> list[EventRecord]:
    """Run one complete session and return its event log."""
    return await ExchangeServer(config, options).serve()
