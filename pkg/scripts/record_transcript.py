#!/usr/bin/env python3
"""Record a server transcript for the browser-client conformance tests.

Runs a full loopback session (2 seats, 10 periods, scripted order flow)
and writes every frame that seat t1 received, one frame per line, to
frontend/tests/fixtures/transcript.jsonl. Re-run after any protocol or
server change, then re-run the frontend tests.
"""

from __future__ import annotations

import asyncio
import random
import sys
from pathlib import Path

from marketlab.bots import run_scripted_session
from marketlab.server import ExchangeServer, ServerOptions
from marketlab.session import (
    AssessmentResponse,
    CommandSchedule,
    ItemGroup,
    QuestionnaireSubmission,
    ScriptedOrder,
    SessionConfig,
    intrinsic_value,
    max_present_value,
)
from marketlab.exchange import Side

OUT_PATH = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures" / "transcript.jsonl"


def build_schedule(config: SessionConfig) -> CommandSchedule:
    rng = random.Random(17)
    periods = []
    for t in range(1, config.n_periods + 1):
        f_t = intrinsic_value(config, t)
        periods.append(
            [
                ScriptedOrder("t1", Side.BID, f_t + rng.randint(-3, 5)),
                ScriptedOrder("t2", Side.ASK, f_t + rng.randint(-5, 3)),
                ScriptedOrder("t2", Side.BID, f_t + rng.randint(-3, 5)),
                ScriptedOrder("t1", Side.ASK, f_t + rng.randint(-5, 3)),
            ]
        )
    return CommandSchedule(
        questionnaires=[
            QuestionnaireSubmission(
                "t1",
                [intrinsic_value(config, t) for t in range(1, config.n_periods + 1)],
                [
                    AssessmentResponse("t1", "self-1", ItemGroup.SELF_PRECISION, 4),
                    AssessmentResponse("t1", "self-2", ItemGroup.SELF_PRECISION, 5),
                    AssessmentResponse("t1", "others-1", ItemGroup.OTHERS_PRECISION, 4),
                    AssessmentResponse("t1", "others-2", ItemGroup.OTHERS_PRECISION, 4),
                ],
            ),
            QuestionnaireSubmission(
                "t2",
                [max_present_value(config, t) for t in range(1, config.n_periods + 1)],
            ),
        ],
        periods=periods,
    )


async def main() -> int:
    config = SessionConfig(n_traders=2, n_periods=10, session_id="transcript", rng_seed=17)
    schedule = build_schedule(config)
    server = ExchangeServer(config, ServerOptions(pacing="ping", grace_seconds=10.0))
    task = asyncio.create_task(server.serve())
    while server.bound_address is None:
        await asyncio.sleep(0.005)
    host, port = server.bound_address
    run = await run_scripted_session(host, port, schedule, {"t1": "seat-1", "t2": "seat-2"})
    await task
    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT_PATH, "wb") as handle:
        for frame in run.bots["t1"].raw_frames:
            handle.write(frame)
    print(f"{len(run.bots['t1'].raw_frames)} frames -> {OUT_PATH}")
    return 0


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
