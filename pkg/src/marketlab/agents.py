"""Deterministic simulated traders for desk-scale market sessions.

Three policies span the space of pricing behavior the platform is built to
discriminate between:

* ``FUNDAMENTALIST`` prices off the dividend stream: bids at or below the
  intrinsic value, asks at or above it, with uniform noise of width
  ``noise_width`` cents. It never pays more than intrinsic value.
* ``ZIC`` is a budget-constrained zero-intelligence trader in the
  Gode-Sunder style: uniform random price in [1, 2 * f_1], random side,
  feasible or it holds. Pure uncorrelated noise.
* ``ANCHOR_SPECULATOR`` ignores the dividend fundamentals and quotes a
  markup over a reference anchored on the most recent trade price. Because
  every speculator shares the anchor, their pricing errors are correlated
  and feed back on themselves — the minimal mechanism for a self-sustaining
  bubble, implemented without any agent communication. It is an
  operationalization choice of this project, not a calibrated model of
  human traders.

Simulations run the same session engine as live markets on a virtual
clock with a fixed number of decision ticks per period, so identical
(config, roster, seed) inputs produce byte-identical event logs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction

from .events import EventRecord
from .exchange import ExchangeError, Side
from .session import (
    AssessmentResponse,
    DeclaredPrices,
    ItemGroup,
    Session,
    SessionConfig,
    SessionError,
    intrinsic_schedule,
    intrinsic_value,
)

DEFAULT_TICKS_PER_PERIOD = 40


class RosterSizeMismatch(SessionError):
    pass


class PolicyKind(str, Enum):
    FUNDAMENTALIST = "FUNDAMENTALIST"
    ZIC = "ZIC"
    ANCHOR_SPECULATOR = "ANCHOR_SPECULATOR"


@dataclass(frozen=True)
class AgentPolicy:
    kind: PolicyKind
    noise_width: int = 4  # sigma, cents; FUNDAMENTALIST only
    anchor_weight: float = 0.9  # lambda in [0, 1]; ANCHOR_SPECULATOR only
    markup: int = 5  # m, cents; ANCHOR_SPECULATOR only

    def __post_init__(self) -> None:
        if self.noise_width < 0:
            raise ValueError("noise_width must be non-negative")
        if not 0.0 <= self.anchor_weight <= 1.0:
            raise ValueError("anchor_weight must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "noise_width": self.noise_width,
            "anchor_weight": self.anchor_weight,
            "markup": self.markup,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AgentPolicy":
        data = dict(data)
        kind = PolicyKind(data.pop("kind"))
        return cls(kind=kind, **data)


@dataclass(frozen=True)
class MarketView:
    """The information set a single trader acts on. Contains nothing about
    any other trader's private state."""

    period: int
    seconds_remaining: float
    intrinsic_value: int  # f_t for the current period
    initial_intrinsic_value: int  # f_1; public, fixed for the session
    best_bid: int | None
    best_ask: int | None
    last_trade_price: int | None
    cash: int
    shares: int
    resting_bid_cents: int  # own committed bid exposure
    resting_ask_shares: int  # own committed ask shares

    @property
    def free_cash(self) -> int:
        return self.cash - self.resting_bid_cents

    @property
    def free_shares(self) -> int:
        return self.shares - self.resting_ask_shares


@dataclass(frozen=True)
class OrderIntent:
    side: Side
    price: int
    quantity: int = 1


def _round_half_up(x: float) -> int:
    return int((Fraction(x) + Fraction(1, 2)).__floor__())


def decide(policy: AgentPolicy, view: MarketView, rng: random.Random) -> OrderIntent | None:
    """One decision: an order intent, or None to hold.

    Intents that are infeasible against the trader's own free cash/shares
    degrade to a hold. The RNG is consumed identically either way, so a
    seat's decision stream depends only on its policy, seed, and views.
    """
    side = rng.choice((Side.BID, Side.ASK))
    if policy.kind is PolicyKind.FUNDAMENTALIST:
        noise = rng.randint(0, policy.noise_width) if policy.noise_width > 0 else 0
        price = view.intrinsic_value - noise if side is Side.BID else view.intrinsic_value + noise
    elif policy.kind is PolicyKind.ZIC:
        price = rng.randint(1, max(1, 2 * view.initial_intrinsic_value))
    else:  # ANCHOR_SPECULATOR: feedback on market prices, ignoring the f_t drift
        last = view.last_trade_price if view.last_trade_price is not None else view.intrinsic_value
        reference = policy.anchor_weight * last + (1.0 - policy.anchor_weight) * view.intrinsic_value
        price = _round_half_up(reference) + policy.markup
    return _feasible(OrderIntent(side, price), view)


def _feasible(intent: OrderIntent, view: MarketView) -> OrderIntent | None:
    if intent.price < 1:
        return None
    if intent.side is Side.BID:
        if intent.price * intent.quantity > view.free_cash:
            return None
    elif intent.quantity > view.free_shares:
        return None
    return intent


def _declared_schedule(
    policy: AgentPolicy, config: SessionConfig, rng: random.Random
) -> list[int]:
    schedule = intrinsic_schedule(config)
    if policy.kind is PolicyKind.FUNDAMENTALIST:
        return schedule
    if policy.kind is PolicyKind.ZIC:
        top = max(1, 2 * schedule[0])
        return [rng.randint(1, top) for _ in schedule]
    # Anchored speculators declare a flat value: right level, no decline.
    return [schedule[0] for _ in schedule]


ASSESSMENT_ITEMS = 3  # items per group in the simulated assessment form


def _assessment_items(
    policy: AgentPolicy, trader_id: str, rng: random.Random
) -> list[AssessmentResponse]:
    items = []
    for group, prefix in ((ItemGroup.SELF_PRECISION, "self"), (ItemGroup.OTHERS_PRECISION, "others")):
        for i in range(1, ASSESSMENT_ITEMS + 1):
            if policy.kind is PolicyKind.FUNDAMENTALIST:
                rating = 4
            elif policy.kind is PolicyKind.ZIC:
                rating = rng.randint(1, 7)
            else:
                rating = rng.randint(5, 7) if group is ItemGroup.SELF_PRECISION else rng.randint(2, 4)
            items.append(AssessmentResponse(trader_id, f"{prefix}-{i}", group, rating))
    return items


def run_simulation(
    config: SessionConfig,
    roster: list[AgentPolicy],
    seed: int | None = None,
    ticks_per_period: int = DEFAULT_TICKS_PER_PERIOD,
    questionnaires: bool = True,
) -> list[EventRecord]:
    """Run a full session with simulated traders on a virtual clock.

    Each period has ``ticks_per_period`` decision ticks; at every tick each
    seat, in order, gets one decision. The returned event log is a pure
    function of (config, roster, seed, ticks_per_period).
    """
    if len(roster) != config.n_traders:
        raise RosterSizeMismatch(
            f"roster has {len(roster)} policies, config wants {config.n_traders}"
        )
    if seed is not None:
        config = replace(config, rng_seed=seed)
    session = Session(config)
    rngs = [random.Random(f"{config.rng_seed}:seat:{i}") for i in range(config.n_traders)]
    f1 = intrinsic_value(config, 1)

    session.begin(at=0.0)
    if questionnaires:
        for i, tid in enumerate(session.trader_ids):
            session.record_declared_prices(
                DeclaredPrices(tid, _declared_schedule(roster[i], config, rngs[i])), at=0.0
            )
            session.record_assessment(_assessment_items(roster[i], tid, rngs[i]), at=0.0)

    dt = config.period_seconds / ticks_per_period
    for t in range(1, config.n_periods + 1):
        session.begin_period()
        f_t = intrinsic_value(config, t)
        for k in range(ticks_per_period):
            at = (t - 1) * config.period_seconds + k * dt
            for i, tid in enumerate(session.trader_ids):
                view = _build_view(session, tid, f_t, f1, config.period_seconds - k * dt)
                intent = decide(roster[i], view, rngs[i])
                if intent is None:
                    continue
                try:
                    session.post_order(tid, intent.side, intent.price, intent.quantity, at=at)
                except ExchangeError:
                    continue  # e.g. a self cross: degrade to hold
        session.end_period()
    session.finish()
    return session.records


def _build_view(
    session: Session, trader_id: str, f_t: int, f1: int, seconds_remaining: float
) -> MarketView:
    assert session.book is not None
    acct = session.accounts[trader_id]
    bid_cents, ask_shares = session.book.resting_exposure(trader_id)
    return MarketView(
        period=session.period,
        seconds_remaining=seconds_remaining,
        intrinsic_value=f_t,
        initial_intrinsic_value=f1,
        best_bid=session.book.best_bid(),
        best_ask=session.book.best_ask(),
        last_trade_price=session.last_trade_price,
        cash=acct.cash,
        shares=acct.shares,
        resting_bid_cents=bid_cents,
        resting_ask_shares=ask_shares,
    )


# ------------------------------------------------------------------- rosters

PRESET_ROSTERS = ("all-fundamentalist", "all-zic", "speculator-majority")


def preset_roster(name: str, n_traders: int) -> list[AgentPolicy]:
    if name == "all-fundamentalist":
        return [AgentPolicy(PolicyKind.FUNDAMENTALIST)] * n_traders
    if name == "all-zic":
        return [AgentPolicy(PolicyKind.ZIC)] * n_traders
    if name == "speculator-majority":
        # All but one seat speculates; the last seat prices fundamentals.
        # Markups differ per seat so each speculator keeps a persistent
        # idiosyncratic price level on top of the shared anchor; the shared
        # anchor still correlates everyone's deviations.
        roster = [
            AgentPolicy(PolicyKind.ANCHOR_SPECULATOR, anchor_weight=0.9, markup=2 + 3 * (i % 5))
            for i in range(n_traders - 1)
        ]
        return roster + [AgentPolicy(PolicyKind.FUNDAMENTALIST)]
    raise ValueError(f"unknown roster preset {name!r}; choose from {PRESET_ROSTERS}")


def load_roster(data: list[dict]) -> list[AgentPolicy]:
    return [AgentPolicy.from_dict(item) for item in data]


def dump_roster(roster: list[AgentPolicy]) -> list[dict]:
    return [policy.to_dict() for policy in roster]
