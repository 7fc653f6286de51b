"""Scripted protocol clients for loopback sessions.

A :class:`BotClient` is a plain protocol speaker: it records every frame it
receives (the transcript) and lets a driver await specific message types.
:func:`run_scripted_session` connects one bot per seat and plays a
:class:`~marketlab.session.CommandSchedule` against a server in ``ping``
pacing, awaiting each acknowledgement so commands reach the server in
schedule order.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field

from . import protocol as wire
from .session import CommandSchedule, ScriptedCancel, ScriptedOrder


class BotClient:
    def __init__(self, token: str):
        self.token = token
        self.trader_id: str | None = None
        self.transcript: list[wire.Message] = []
        self.raw_frames: list[bytes] = []
        self._incoming: asyncio.Queue[wire.Message] = asyncio.Queue()
        self._reader_task: asyncio.Task | None = None
        self._writer: asyncio.StreamWriter | None = None

    async def connect(self, host: str, port: int) -> None:
        reader, writer = await asyncio.open_connection(host, port)
        self._writer = writer
        self._reader_task = asyncio.create_task(self._read_loop(reader))

    async def _read_loop(self, reader: asyncio.StreamReader) -> None:
        while True:
            line = await reader.readline()
            if not line:
                break
            self.raw_frames.append(line)
            msg = wire.decode_message(line)
            self.transcript.append(msg)
            await self._incoming.put(msg)

    async def send(self, msg: wire.Message) -> None:
        assert self._writer is not None
        self._writer.write(wire.encode_message(msg))
        await self._writer.drain()

    async def expect(
        self,
        *types: type[wire.Message],
        where=None,
        timeout: float = 10.0,
    ) -> wire.Message:
        """Wait for the next message of one of the given types (and matching
        ``where`` if given); broadcasts arriving in between stay in the
        transcript and are skipped."""
        while True:
            msg = await asyncio.wait_for(self._incoming.get(), timeout)
            if isinstance(msg, types) and (where is None or where(msg)):
                return msg

    async def hello(self) -> wire.Welcome:
        await self.send(wire.Hello(token=self.token))
        welcome = await self.expect(wire.Welcome, wire.Error)
        if isinstance(welcome, wire.Error):
            raise ConnectionError(f"join refused: {welcome.reason}")
        self.trader_id = welcome.trader_id
        return welcome

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
        if self._reader_task is not None:
            self._reader_task.cancel()


@dataclass
class ScriptedRun:
    bots: dict[str, BotClient]
    payouts: dict[str, int] = field(default_factory=dict)


async def run_scripted_session(
    host: str,
    port: int,
    schedule: CommandSchedule,
    seat_tokens: dict[str, str],
) -> ScriptedRun:
    """Play a command schedule through real client connections.

    ``seat_tokens`` maps trader id to join token; all seats must be covered
    because the server starts only when every seat is filled. Commands are
    pushed strictly in schedule order: each one is acknowledged before the
    next is sent, so the server's event log matches the in-process
    ``run_schedule`` of the same schedule.
    """
    bots: dict[str, BotClient] = {}
    for trader_id, token in seat_tokens.items():
        bot = BotClient(token)
        await bot.connect(host, port)
        bots[trader_id] = bot
    try:
        for trader_id in seat_tokens:
            await bots[trader_id].hello()

        for bot in bots.values():  # questionnaire phase opens once all join
            await bot.expect(wire.SessionInfo, where=lambda m: m.phase == "QUESTIONNAIRE")

        for i, sub in enumerate(schedule.questionnaires):
            bot = bots[sub.trader_id]
            await bot.send(
                wire.SubmitQuestionnaire(
                    declared_values=list(sub.declared_value_per_period),
                    assessments=[
                        {
                            "item_id": a.item_id,
                            "item_group": a.item_group.value,
                            "rating": a.rating,
                        }
                        for a in sub.assessments
                    ],
                )
            )
            if i < len(schedule.questionnaires) - 1:
                # Sync so the next submission arrives after this one.
                await bot.send(wire.Ping())
                await bot.expect(wire.SessionInfo)

        for period_commands in schedule.periods:
            for bot in bots.values():
                await bot.expect(wire.PeriodStart)
            for cmd in period_commands:
                bot = bots[cmd.trader_id]
                if isinstance(cmd, ScriptedOrder):
                    await bot.send(
                        wire.PostOrder(
                            side=cmd.side.value, price_cents=cmd.price, quantity=cmd.quantity
                        )
                    )
                    await bot.expect(wire.OrderAck, wire.OrderReject)
                else:
                    assert isinstance(cmd, ScriptedCancel)
                    await bot.send(wire.CancelOrder(order_id=cmd.order_id))
                    await bot.expect(wire.OrderAck, wire.OrderReject)
            for trader_id in seat_tokens:  # done markers end the period
                await bots[trader_id].send(wire.Ping())
                await bots[trader_id].expect(wire.SessionInfo)
            for bot in bots.values():
                await bot.expect(wire.PeriodSummary)

        run = ScriptedRun(bots=bots)
        for trader_id, bot in bots.items():
            payout = await bot.expect(wire.FinalPayout)
            run.payouts[trader_id] = payout.total_cents
        return run
    finally:
        for bot in bots.values():
            await bot.close()
