"""Limit order book with continuous double-auction matching for one asset.

All prices are integer cents and all quantities integer shares. Matching is
price-time priority and executions settle immediately at the *resting*
order's price. There is no short selling and no margin: at any moment a
trader's resting bids must be fully covered by cash and resting asks by
shares, counting all of their open orders together.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Iterator


class Side(Enum):
    BID = "BID"
    ASK = "ASK"

    @property
    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class ExchangeError(Exception):
    """Base class for rejected order operations.

    When one of these is raised the book and all accounts are untouched.
    ``code`` is the stable machine-readable reason used on the wire.
    """

    code = "rejected"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail


class InvalidPrice(ExchangeError):
    code = "invalid_price"


class InvalidQuantity(ExchangeError):
    code = "invalid_quantity"


class InsufficientCash(ExchangeError):
    code = "insufficient_cash"


class InsufficientShares(ExchangeError):
    code = "insufficient_shares"


class SelfCross(ExchangeError):
    code = "self_cross"


class NotFound(ExchangeError):
    code = "not_found"


class NotOwner(ExchangeError):
    code = "not_owner"


@dataclass(frozen=True)
class Order:
    order_id: int
    trader_id: str
    side: Side
    price: int  # cents, >= 1
    quantity: int = 1  # shares, >= 1
    submitted_seq: int = 0

    def __post_init__(self) -> None:
        if type(self.price) is not int or self.price < 1:
            raise InvalidPrice(f"price must be a positive integer cent amount, got {self.price!r}")
        if type(self.quantity) is not int or self.quantity < 1:
            raise InvalidQuantity(f"quantity must be a positive integer, got {self.quantity!r}")


@dataclass(frozen=True)
class Trade:
    trade_id: int
    period: int
    price: int
    quantity: int
    buyer_id: str
    seller_id: str
    resting_order_id: int
    aggressor_order_id: int
    timestamp: float


@dataclass
class TraderAccount:
    trader_id: str
    cash: int  # cents, never negative
    shares: int  # never negative
    dividend_income: int = 0
    trading_pnl: int = 0  # net cash flow from trades (sell proceeds - buy cost)


@dataclass
class _Resting:
    order: Order
    remaining: int


@dataclass(frozen=True)
class PostOutcome:
    """Result of a successful order post: zero or more trades, plus the id
    of the resting remainder if any quantity was left on the book."""

    trades: list[Trade]
    resting_order_id: int | None

    @property
    def executed(self) -> bool:
        return bool(self.trades)


@dataclass(frozen=True)
class SnapshotEntry:
    price: int
    quantity: int
    mine: bool


@dataclass(frozen=True)
class Snapshot:
    best_bid: int | None
    best_ask: int | None
    bids: list[SnapshotEntry]  # price-descending, arrival order within a price
    asks: list[SnapshotEntry]  # price-ascending, arrival order within a price


def validate_order(
    account: TraderAccount, resting_exposure: tuple[int, int], order: Order
) -> ExchangeError | None:
    """Check an order against the owner's account net of their open orders.

    ``resting_exposure`` is (committed bid cents, committed ask shares) from
    the trader's other resting orders. Returns the violation rather than
    raising so callers can use it as a pure verdict.
    """
    bid_cents, ask_shares = resting_exposure
    if order.side is Side.BID:
        needed = order.price * order.quantity + bid_cents
        if needed > account.cash:
            return InsufficientCash(f"bid needs {needed} cents, cash is {account.cash}")
    else:
        needed = order.quantity + ask_shares
        if needed > account.shares:
            return InsufficientShares(f"ask needs {needed} shares, holding {account.shares}")
    return None


class OrderBook:
    """Price-time-prioritized book for a single trading period.

    The book never ends an operation crossed: an incoming order that crosses
    the opposite side executes immediately, in priority order, at each
    resting order's price; any remainder rests. An order that would execute
    against its own owner's resting order is rejected outright.
    """

    def __init__(self, period: int = 1, trade_ids: Iterator[int] | None = None):
        self.period = period
        self.bids: list[_Resting] = []  # sorted best-first: (-price, seq)
        self.asks: list[_Resting] = []  # sorted best-first: (price, seq)
        self._trade_ids = trade_ids if trade_ids is not None else count(1)

    # ------------------------------------------------------------------ views

    def best_bid(self) -> int | None:
        return self.bids[0].order.price if self.bids else None

    def best_ask(self) -> int | None:
        return self.asks[0].order.price if self.asks else None

    def resting_orders(self, trader_id: str | None = None) -> list[_Resting]:
        out = self.bids + self.asks
        if trader_id is not None:
            out = [r for r in out if r.order.trader_id == trader_id]
        return out

    def resting_exposure(self, trader_id: str) -> tuple[int, int]:
        """(committed bid cents, committed ask shares) for one trader."""
        bid_cents = sum(
            r.order.price * r.remaining for r in self.bids if r.order.trader_id == trader_id
        )
        ask_shares = sum(r.remaining for r in self.asks if r.order.trader_id == trader_id)
        return bid_cents, ask_shares

    def snapshot(self, viewer: str | None = None) -> Snapshot:
        """Read-only view of the book; ``mine`` flags are computed for the
        viewer so ownership of other traders' orders is never revealed."""
        entry = lambda r: SnapshotEntry(
            r.order.price, r.remaining, viewer is not None and r.order.trader_id == viewer
        )
        return Snapshot(
            best_bid=self.best_bid(),
            best_ask=self.best_ask(),
            bids=[entry(r) for r in self.bids],
            asks=[entry(r) for r in self.asks],
        )

    # ------------------------------------------------------------ order entry

    def check_order(self, order: Order, account: TraderAccount) -> None:
        """Raise the rejection this order would get, without mutating anything."""
        verdict = validate_order(account, self.resting_exposure(order.trader_id), order)
        if verdict is not None:
            raise verdict
        self._match_plan(order)

    def post_order(
        self, order: Order, accounts: dict[str, TraderAccount], timestamp: float = 0.0
    ) -> PostOutcome:
        account = accounts[order.trader_id]
        verdict = validate_order(account, self.resting_exposure(order.trader_id), order)
        if verdict is not None:
            raise verdict
        plan = self._match_plan(order)  # raises SelfCross before any mutation

        trades: list[Trade] = []
        remaining = order.quantity
        for resting, qty in plan:
            price = resting.order.price
            if order.side is Side.BID:
                buyer_id, seller_id = order.trader_id, resting.order.trader_id
            else:
                buyer_id, seller_id = resting.order.trader_id, order.trader_id
            self._settle(accounts, buyer_id, seller_id, price, qty)
            trades.append(
                Trade(
                    trade_id=next(self._trade_ids),
                    period=self.period,
                    price=price,
                    quantity=qty,
                    buyer_id=buyer_id,
                    seller_id=seller_id,
                    resting_order_id=resting.order.order_id,
                    aggressor_order_id=order.order_id,
                    timestamp=timestamp,
                )
            )
            resting.remaining -= qty
            remaining -= qty
        if plan:
            opposite = self.asks if order.side is Side.BID else self.bids
            opposite[:] = [r for r in opposite if r.remaining > 0]

        resting_order_id = None
        if remaining > 0:
            self._insert(_Resting(order, remaining))
            resting_order_id = order.order_id
        return PostOutcome(trades=trades, resting_order_id=resting_order_id)

    def cancel_order(self, trader_id: str, order_id: int) -> Order:
        for side_list in (self.bids, self.asks):
            for i, resting in enumerate(side_list):
                if resting.order.order_id == order_id:
                    if resting.order.trader_id != trader_id:
                        raise NotOwner(f"order {order_id} belongs to another trader")
                    del side_list[i]
                    return resting.order
        raise NotFound(f"no resting order {order_id}")

    def clear(self) -> None:
        """Expire all resting orders (period end)."""
        self.bids.clear()
        self.asks.clear()

    # -------------------------------------------------------------- internals

    def _match_plan(self, order: Order) -> list[tuple[_Resting, int]]:
        opposite = self.asks if order.side is Side.BID else self.bids
        plan: list[tuple[_Resting, int]] = []
        remaining = order.quantity
        for resting in opposite:
            if order.side is Side.BID:
                crosses = resting.order.price <= order.price
            else:
                crosses = resting.order.price >= order.price
            if not crosses:
                break
            if resting.order.trader_id == order.trader_id:
                raise SelfCross(f"order would execute against own order {resting.order.order_id}")
            take = min(remaining, resting.remaining)
            plan.append((resting, take))
            remaining -= take
            if remaining == 0:
                break
        return plan

    def _insert(self, resting: _Resting) -> None:
        if resting.order.side is Side.BID:
            insort(self.bids, resting, key=lambda r: (-r.order.price, r.order.submitted_seq))
        else:
            insort(self.asks, resting, key=lambda r: (r.order.price, r.order.submitted_seq))

    @staticmethod
    def _settle(
        accounts: dict[str, TraderAccount], buyer_id: str, seller_id: str, price: int, qty: int
    ) -> None:
        buyer, seller = accounts[buyer_id], accounts[seller_id]
        value = price * qty
        buyer.cash -= value
        buyer.shares += qty
        buyer.trading_pnl -= value
        seller.cash += value
        seller.shares -= qty
        seller.trading_pnl += value
        assert buyer.cash >= 0 and seller.shares >= 0, "settlement broke a holdings invariant"
