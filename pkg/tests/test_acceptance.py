"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s` to see the
criterion lines and timings.
"""

import random
import statistics
import time
from pathlib import Path

import pytest

from marketlab.agents import preset_roster, run_simulation
from marketlab.analytics import (
    DegenerateSeries,
    SessionData,
    build_period_series,
    build_report,
    cronbach_alpha,
    decompose,
    haessel_r2,
    napd,
    amplitude,
    PeriodSeries,
    TradeRow,
)
from marketlab.events import EventKind, dumps_log, read_log
from marketlab.exchange import Order, OrderBook, Side, TraderAccount
from marketlab.session import (
    SessionConfig,
    intrinsic_value,
    max_present_value,
    replay_log,
    run_schedule,
    verify_replay,
)
from reference_matching import BruteForceMarket, RefAccount, RefOrder

GOLDEN_DIR = Path(__file__).parent / "golden"


def report_line(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" — {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


class TestAcceptance:
    def test_intrinsic_value_schedule(self):
        started = time.perf_counter()
        config = SessionConfig()
        intrinsic = [intrinsic_value(config, t) for t in range(1, 11)]
        max_pv = [max_present_value(config, t) for t in range(1, 11)]
        elapsed = time.perf_counter() - started
        ok = (
            intrinsic == [100, 90, 80, 70, 60, 50, 40, 30, 20, 10]
            and max_pv == [200, 180, 160, 140, 120, 100, 80, 60, 40, 20]
            and elapsed < 0.001
        )
        report_line(
            "intrinsic-value schedule (100..10 / 200..20, < 1 ms)",
            ok,
            f"{elapsed * 1e6:.0f} us",
        )

    def test_matching_engine_oracle(self):
        started = time.perf_counter()
        sequences = 10_000
        for seed in range(sequences):
            rng = random.Random(seed)
            n_traders = rng.randint(2, 4)
            n_orders = rng.randint(1, 20)
            accounts = {
                f"t{i}": TraderAccount(f"t{i}", cash=rng.randint(0, 1500), shares=rng.randint(0, 5))
                for i in range(1, n_traders + 1)
            }
            ref = BruteForceMarket(
                {tid: RefAccount(a.cash, a.shares) for tid, a in accounts.items()}
            )
            book = OrderBook(period=1)
            engine_trades = []
            for oid in range(1, n_orders + 1):
                trader = f"t{rng.randint(1, n_traders)}"
                side = rng.choice((Side.BID, Side.ASK))
                price = rng.randint(1, 150)
                qty = rng.randint(1, 3)
                order = Order(oid, trader, side, price, qty, submitted_seq=oid)
                try:
                    outcome = book.post_order(order, accounts)
                    engine_trades.extend(outcome.trades)
                    status = "accepted"
                except Exception:
                    status = "rejected"
                ref_status = ref.submit(RefOrder(oid, trader, side, price, qty, seq=oid))
                assert status == ref_status, f"seed {seed} order {oid}"
            got = [
                (t.price, t.quantity, t.buyer_id, t.seller_id, t.resting_order_id)
                for t in engine_trades
            ]
            want = [
                (t.price, t.quantity, t.buyer_id, t.seller_id, t.resting_order_id)
                for t in ref.trades
            ]
            assert got == want, f"seed {seed}"
        elapsed = time.perf_counter() - started
        report_line(
            "matching-engine oracle (10^4 random sequences, < 10 s)",
            elapsed < 10,
            f"{elapsed:.2f} s",
        )

    def test_conservation_suite(self):
        started = time.perf_counter()
        config = SessionConfig(session_id="conserve")
        roster = preset_roster("all-zic", config.n_traders)
        for seed in range(100):
            records = run_simulation(config, roster, seed=seed, ticks_per_period=8)
            shares_start = config.n_traders * config.endowment_shares
            dividends = 0
            payouts = 0
            for rec in records:
                if rec.kind is EventKind.DIVIDEND:
                    dividends += sum(rec.payload["credits"].values())
                    assert sum(rec.payload["holdings"].values()) == shares_start
                elif rec.kind is EventKind.PAYOUT:
                    payouts += rec.payload["total_cents"]
                elif rec.kind is EventKind.SESSION_END:
                    finals = rec.payload["final_accounts"]
                    assert sum(a["shares"] for a in finals.values()) == shares_start
            expected = (
                config.n_traders * config.endowment_cash
                + dividends
                + config.n_traders * config.showup_fee
            )
            assert payouts == expected, f"seed {seed}: {payouts} != {expected}"
        elapsed = time.perf_counter() - started
        report_line(
            "conservation suite (100 sessions, exact integer equality, < 30 s)",
            elapsed < 30,
            f"{elapsed:.2f} s",
        )

    def test_decomposition_identity(self):
        rng = random.Random(2024)
        for _ in range(10_000):
            n = rng.randint(2, 8)
            prices = [rng.uniform(1, 300) for _ in range(n)]
            fundamental = rng.uniform(1, 300)
            dispersion, common, msd, _ = decompose(prices, fundamental)
            assert msd == pytest.approx(dispersion + common, rel=1e-9, abs=1e-12)
        dispersion, common, msd, _ = decompose([90, 100, 110], 80)
        ok = (
            abs(dispersion - 200 / 3) < 1e-6
            and abs(common - 400.0) < 1e-6
            and abs(msd - 1400 / 3) < 1e-6
        )
        report_line(
            "decomposition identity (msd = dispersion + common, worked example)",
            ok,
            f"dispersion={dispersion:.4f} common={common:.1f}",
        )

    def test_metric_oracles(self):
        rng = random.Random(77)
        for _ in range(1000):
            n = rng.randint(3, 10)
            x = [rng.uniform(1, 200) for _ in range(n)]
            y = [rng.uniform(1, 200) for _ in range(n)]
            try:
                base = haessel_r2(x, y)
            except DegenerateSeries:
                continue
            a, b = rng.uniform(0.1, 4.0), rng.uniform(-30, 30)
            assert haessel_r2([a * v + b for v in x], y) == pytest.approx(base, rel=1e-9)

        assert cronbach_alpha([[2, 2], [5, 5], [3, 3], [6, 6]]) == pytest.approx(1.0)

        schedule = [intrinsic_value(SessionConfig(), t) for t in range(1, 11)]
        for _ in range(500):
            trades = [
                TradeRow(t, schedule[t - 1] + rng.choice([-4, 0, 4]), 1, "b", "s", 0.0)
                for t in rng.sample(range(1, 11), k=rng.randint(2, 10))
            ]
            off = any(tr.price != schedule[tr.period - 1] for tr in trades)
            assert (napd(trades, schedule) > 0) == off
            mean_price = {}
            for tr in trades:
                mean_price[tr.period] = float(tr.price)
            prices = [mean_price.get(t) for t in range(1, 11)]
            series = PeriodSeries(
                periods=list(range(1, 11)),
                mean_price=prices,
                trade_count=[1 if p is not None else 0 for p in prices],
                intrinsic=schedule,
                max_pv=[2 * f for f in schedule],
                mean_declared=[None] * 10,
            )
            deviations = {p - schedule[t - 1] for t, p in mean_price.items()}
            assert (amplitude(series) > 0) == (len(deviations) > 1)
        report_line("metric oracles (affine invariance, alpha=1, zero-iff)", True)

    def test_replay_determinism_on_goldens(self):
        started = time.perf_counter()
        goldens = sorted(GOLDEN_DIR.glob("*.jsonl"))
        assert goldens, "golden logs missing"
        for log_path in goldens:
            records = read_log(log_path)
            replayed = replay_log(records)
            assert dumps_log(replayed.records) == dumps_log(records)
            report_path = log_path.with_name(log_path.stem + "-report.json")
            assert build_report(records).to_json() == report_path.read_text()
        elapsed = time.perf_counter() - started
        report_line(
            f"replay determinism ({len(goldens)} golden logs, byte-identical, < 5 s)",
            elapsed < 5,
            f"{elapsed:.2f} s",
        )

    def test_bubble_phenomenology(self):
        started = time.perf_counter()
        config = SessionConfig(session_id="pheno")
        seeds = range(30)

        fund_r2, fund_share = [], []
        for seed in seeds:
            records = run_simulation(config, preset_roster("all-fundamentalist", 6), seed=seed)
            report = build_report(records, validate=False)
            fund_r2.append(report.haessel_r2_trading)
            fund_share.append(report.mean_common_share)
        fund_ok = all(r2 is not None and r2 >= 0.9 for r2 in fund_r2) and (
            statistics.mean(s for s in fund_share if s is not None) < 0.5
        )
        report_line(
            "bubble phenomenology (a): all-fundamentalist r2 >= 0.9, common share < 0.5",
            fund_ok,
            f"min r2={min(fund_r2):.3f} mean share={statistics.mean(fund_share):.3f}",
        )

        spec_above = 0
        spec_shares, spec_trends = [], []
        for seed in seeds:
            records = run_simulation(config, preset_roster("speculator-majority", 6), seed=seed)
            report = build_report(records, validate=False)
            series = report.series
            if any(
                series.mean_price[i] is not None and series.mean_price[i] > series.max_pv[i]
                for i in range(len(series.periods))
            ):
                spec_above += 1
            spec_shares.append(report.mean_common_share)
            if report.common_share_trend is not None:
                spec_trends.append(report.common_share_trend)
        above_ok = spec_above >= len(list(seeds)) / 2
        share_ok = statistics.mean(s for s in spec_shares if s is not None) > 0.5
        trend_ok = statistics.median(spec_trends) > 0
        elapsed = time.perf_counter() - started
        report_line(
            "bubble phenomenology (b): speculators exceed max PV in >= 50% of seeds",
            above_ok,
            f"{spec_above}/30 seeds",
        )
        report_line(
            "bubble phenomenology (b): speculator common share > 0.5, trend median > 0",
            share_ok and trend_ok and elapsed < 120,
            f"mean share={statistics.mean(spec_shares):.3f} "
            f"median trend={statistics.median(spec_trends):.3f} in {elapsed:.1f} s",
        )

    def test_mechanism_ordering(self):
        # discriminating signature across the three rosters, 30 seeds each
        config = SessionConfig(session_id="order")
        means = {}
        for name in ("all-fundamentalist", "all-zic", "speculator-majority"):
            shares = []
            for seed in range(30):
                records = run_simulation(
                    config, preset_roster(name, 6), seed=seed, ticks_per_period=20
                )
                report = build_report(records, validate=False)
                if report.mean_common_share is not None:
                    shares.append(report.mean_common_share)
            means[name] = statistics.mean(shares)
        ok = (
            means["all-fundamentalist"]
            < means["all-zic"]
            < means["speculator-majority"]
        )
        report_line(
            "mechanism ordering: fundamentalist < zic < speculator common share",
            ok,
            " / ".join(f"{k}={v:.3f}" for k, v in means.items()),
        )

    def test_end_to_end_network_session(self):
        import asyncio
        import json as json_mod

        from marketlab.bots import run_scripted_session
        from marketlab.server import ExchangeServer, ServerOptions
        from marketlab.session import (
            AssessmentResponse,
            CommandSchedule,
            ItemGroup,
            QuestionnaireSubmission,
            ScriptedCancel,
            ScriptedOrder,
        )

        started = time.perf_counter()
        config = SessionConfig(n_traders=2, n_periods=10, session_id="wire-e2e", rng_seed=21)
        declared = {
            "t1": [intrinsic_value(config, t) for t in range(1, 11)],
            "t2": [max_present_value(config, t) for t in range(1, 11)],
        }
        rng = random.Random(99)
        periods = []
        for t in range(1, 11):
            f_t = intrinsic_value(config, t)
            cmds = [
                ScriptedOrder("t1", Side.BID, f_t + rng.randint(-3, 6)),
                ScriptedOrder("t2", Side.ASK, f_t + rng.randint(-6, 3)),
                ScriptedOrder("t2", Side.BID, f_t + rng.randint(-3, 6)),
                ScriptedOrder("t1", Side.ASK, f_t + rng.randint(-6, 3)),
            ]
            if t % 3 == 0:
                cmds.append(ScriptedOrder("t1", Side.BID, max(1, f_t - 20)))
            periods.append(cmds)
        schedule = CommandSchedule(
            questionnaires=[
                QuestionnaireSubmission(
                    "t1",
                    declared["t1"],
                    [
                        AssessmentResponse("t1", "self-1", ItemGroup.SELF_PRECISION, 4),
                        AssessmentResponse("t1", "others-1", ItemGroup.OTHERS_PRECISION, 4),
                    ],
                ),
                QuestionnaireSubmission("t2", declared["t2"]),
            ],
            periods=periods,
        )

        async def scenario():
            server = ExchangeServer(config, ServerOptions(pacing="ping", grace_seconds=10.0))
            task = asyncio.create_task(server.serve())
            while server.bound_address is None:
                await asyncio.sleep(0.005)
            host, port = server.bound_address
            run = await run_scripted_session(
                host, port, schedule, {"t1": "seat-1", "t2": "seat-2"}
            )
            records = await task
            return run, records

        run, records = asyncio.run(asyncio.wait_for(scenario(), timeout=25))
        verify_replay(records)
        reference = run_schedule(config, schedule)
        logs_equal = dumps_log(records) == dumps_log(reference.records)
        elapsed = time.perf_counter() - started
        report_line(
            "end-to-end network session (replay OK, log equals in-process run, < 30 s)",
            logs_equal and elapsed < 30,
            f"{len(records)} events in {elapsed:.2f} s",
        )
