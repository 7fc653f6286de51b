import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marketlab.exchange import OrderBook, TraderAccount
from marketlab.session import SessionConfig


@pytest.fixture
def config():
    return SessionConfig()


@pytest.fixture
def book():
    return OrderBook(period=1)


@pytest.fixture
def accounts():
    def make(n=4, cash=10_000, shares=10):
        return {f"t{i}": TraderAccount(f"t{i}", cash=cash, shares=shares) for i in range(1, n + 1)}

    return make
