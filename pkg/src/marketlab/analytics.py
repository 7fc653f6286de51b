"""Bubble metrics computed from a session event log.

Everything here is a pure function over immutable inputs. Metrics that are
not defined for a given log (no trades, degenerate variance, missing
questionnaire data) raise a typed error at the operation level and are
surfaced as explicit ``None`` markers in the assembled report — never as a
silent zero.

Conventions pinned here because the surrounding literature varies:

* A trader's per-period price ``x_i`` pools their buys and sells,
  volume-weighted.
* The discrepancy decomposition uses the unweighted cross-trader mean:
  ``dispersion = mean_i (x_i - xbar)^2``, ``common = (xbar - f)^2`` and
  ``msd = mean_i (x_i - f)^2 = dispersion + common`` by construction.
  When ``msd`` is exactly zero every trade sat on the fundamental and the
  common share is reported as 0.
* NAPD is the volume-weighted mean absolute deviation of trade prices from
  the per-period fundamental, normalized by the mean fundamental over all
  periods.
* Price amplitude is the range of per-period mean deviations from the
  fundamental, normalized by the period-1 fundamental.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .events import EventKind, EventRecord
from .session import (
    CorruptLog,
    ItemGroup,
    ReplayMismatch,
    SessionConfig,
    SessionError,
    intrinsic_schedule,
    max_present_value,
    verify_replay,
)


class MetricError(SessionError):
    pass


class DegenerateSeries(MetricError):
    pass


class InsufficientTraders(MetricError):
    pass


class NoTrades(MetricError):
    pass


class InsufficientPeriods(MetricError):
    pass


class DegenerateVariance(MetricError):
    pass


class MissingGroup(MetricError):
    pass


# ------------------------------------------------------------------ measures

def haessel_r2(observed: Sequence[float], reference: Sequence[float]) -> float:
    """Squared sample correlation between an observed and a reference series.

    A goodness-of-fit measure in [0, 1] that is invariant under positive
    affine transforms of either series. Both series must have positive
    variance; otherwise the fit is undefined and DegenerateSeries is raised
    (callers report it as undefined, never as 0).
    """
    if len(observed) != len(reference):
        raise ValueError(f"series lengths differ: {len(observed)} vs {len(reference)}")
    if len(observed) < 2:
        raise ValueError("need at least two points")
    obs = np.asarray(observed, dtype=float)
    ref = np.asarray(reference, dtype=float)
    d_obs = obs - obs.mean()
    d_ref = ref - ref.mean()
    var_obs = float(d_obs @ d_obs)
    var_ref = float(d_ref @ d_ref)
    if var_obs == 0.0 or var_ref == 0.0:
        raise DegenerateSeries("a series with zero variance has no defined fit")
    r = float(d_obs @ d_ref) / math.sqrt(var_obs * var_ref)
    return r * r


def decompose(
    trader_prices: Mapping[str, float] | Sequence[float], fundamental: float
) -> tuple[float, float, float, float]:
    """Split mean squared price discrepancy into dispersion and common parts.

    ``trader_prices`` holds one mean transaction price per trader for a
    single period. Returns (dispersion, common, msd, common_share) where

        dispersion = mean_i (x_i - xbar)^2     uncorrelated individual error
        common     = (xbar - f)^2              shared, correlated mispricing
        msd        = mean_i (x_i - f)^2 = dispersion + common

    With msd == 0 all prices sat exactly on the fundamental; the common
    share of nothing is reported as 0.
    """
    values = list(trader_prices.values()) if isinstance(trader_prices, Mapping) else list(trader_prices)
    if len(values) < 2:
        raise InsufficientTraders("decomposition needs at least two active traders")
    x = np.asarray(values, dtype=float)
    xbar = float(x.mean())
    dispersion = float(np.mean((x - xbar) ** 2))
    common = (xbar - fundamental) ** 2
    msd = float(np.mean((x - fundamental) ** 2))
    common_share = common / msd if msd > 0 else 0.0
    return dispersion, common, msd, common_share


def napd(trades: Sequence["TradeRow"], f_schedule: Sequence[int]) -> float:
    """Normalized average price deviation over all trades in a session.

    Volume-weighted mean of |price - f_t| divided by the mean fundamental
    over all periods. Zero exactly when every trade sits on the schedule.
    """
    if not trades:
        raise NoTrades("no trades in the log")
    mean_f = sum(f_schedule) / len(f_schedule)
    total_qty = sum(tr.quantity for tr in trades)
    weighted = sum(tr.quantity * abs(tr.price - f_schedule[tr.period - 1]) for tr in trades)
    return weighted / (total_qty * mean_f)


def amplitude(series: "PeriodSeries") -> float:
    """Range of per-period mean deviations from the fundamental, over f_1.

    Only periods that traded contribute; at least two are required.
    """
    deviations = [
        series.mean_price[i] - series.intrinsic[i]
        for i in range(len(series.periods))
        if series.mean_price[i] is not None
    ]
    if len(deviations) < 2:
        raise InsufficientPeriods("amplitude needs at least two periods with trades")
    return (max(deviations) - min(deviations)) / series.intrinsic[0]


def cronbach_alpha(items: Sequence[Sequence[float]]) -> float:
    """Internal-consistency reliability of a respondents x items matrix.

    alpha = (k / (k - 1)) * (1 - sum_i var(item_i) / var(total)) with
    sample variances (n - 1 denominator). The total score must vary across
    respondents; otherwise DegenerateVariance is raised.
    """
    matrix = np.asarray(items, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("items must be a 2-d respondents x items matrix")
    n, k = matrix.shape
    if k < 2:
        raise ValueError("need at least two items")
    if n < 2:
        raise DegenerateVariance("need at least two respondents")
    item_vars = matrix.var(axis=0, ddof=1)
    total_var = float(matrix.sum(axis=1).var(ddof=1))
    if total_var == 0.0:
        raise DegenerateVariance("total score does not vary across respondents")
    return (k / (k - 1)) * (1.0 - float(item_vars.sum()) / total_var)


@dataclass(frozen=True)
class OverconfidenceIndex:
    per_trader: dict[str, float]  # mean(SELF_PRECISION) - mean(OTHERS_PRECISION)
    pooled_mean: float
    n_positive: int
    n_negative: int
    n_zero: int
    sign_test_p: float | None  # two-sided exact binomial; None if all ties

    def to_dict(self) -> dict:
        return {
            "per_trader": dict(sorted(self.per_trader.items())),
            "pooled_mean": self.pooled_mean,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "n_zero": self.n_zero,
            "sign_test_p": self.sign_test_p,
        }


def overconfidence_index(responses: Sequence["AssessmentRow"]) -> OverconfidenceIndex:
    """Self-minus-others precision gap per trader, pooled, with a sign test.

    An index of 0 means traders rate their own price assessments exactly as
    precise as everyone else's — no overconfidence.
    """
    by_trader: dict[str, dict[ItemGroup, list[int]]] = {}
    for row in responses:
        by_trader.setdefault(row.trader_id, {}).setdefault(row.item_group, []).append(row.rating)
    per_trader = {}
    for tid, groups in sorted(by_trader.items()):
        if ItemGroup.SELF_PRECISION not in groups or ItemGroup.OTHERS_PRECISION not in groups:
            raise MissingGroup(f"trader {tid} lacks items in one assessment group")
        self_mean = sum(groups[ItemGroup.SELF_PRECISION]) / len(groups[ItemGroup.SELF_PRECISION])
        others_mean = sum(groups[ItemGroup.OTHERS_PRECISION]) / len(
            groups[ItemGroup.OTHERS_PRECISION]
        )
        per_trader[tid] = self_mean - others_mean
    if not per_trader:
        raise MissingGroup("no assessment responses")
    diffs = list(per_trader.values())
    n_pos = sum(1 for d in diffs if d > 0)
    n_neg = sum(1 for d in diffs if d < 0)
    n_zero = len(diffs) - n_pos - n_neg
    return OverconfidenceIndex(
        per_trader=per_trader,
        pooled_mean=sum(diffs) / len(diffs),
        n_positive=n_pos,
        n_negative=n_neg,
        n_zero=n_zero,
        sign_test_p=_sign_test_p(n_pos, n_neg),
    )


def _sign_test_p(n_pos: int, n_neg: int) -> float | None:
    """Exact two-sided binomial sign test on non-tied differences."""
    n = n_pos + n_neg
    if n == 0:
        return None
    k = min(n_pos, n_neg)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2**n
    return min(1.0, 2.0 * tail)


def spearman_rank_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rho with average ranks for ties.

    Raises DegenerateSeries when either input has no rank variation.
    """
    if len(x) != len(y):
        raise ValueError("series lengths differ")
    if len(x) < 2:
        raise ValueError("need at least two points")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    return haessel_r2_signed(rx, ry)


def haessel_r2_signed(x: Sequence[float], y: Sequence[float]) -> float:
    # Plain Pearson r (signed), shared by the rank correlation.
    ax = np.asarray(x, dtype=float)
    ay = np.asarray(y, dtype=float)
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateSeries("zero variance")
    return float(dx @ dy) / math.sqrt(vx * vy)


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for idx in order[i : j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


# --------------------------------------------------------------- log parsing

@dataclass(frozen=True)
class TradeRow:
    period: int
    price: int
    quantity: int
    buyer_id: str
    seller_id: str
    timestamp: float


@dataclass(frozen=True)
class AssessmentRow:
    trader_id: str
    item_id: str
    item_group: ItemGroup
    rating: int


@dataclass(frozen=True)
class SessionData:
    """Everything analytics needs, parsed once from an event log."""

    config: SessionConfig
    traders: list[str]
    trades: list[TradeRow]
    declared: dict[str, list[int]]
    assessments: list[AssessmentRow]

    @classmethod
    def from_records(cls, records: Sequence[EventRecord]) -> "SessionData":
        if not records or records[0].kind is not EventKind.SESSION_START:
            raise CorruptLog("log must open with SESSION_START")
        config = SessionConfig.from_dict(records[0].payload["config"])
        traders = list(records[0].payload["traders"])
        trades: list[TradeRow] = []
        declared: dict[str, list[int]] = {}
        assessments: list[AssessmentRow] = []
        for rec in records:
            if rec.kind is EventKind.TRADE:
                p = rec.payload
                trades.append(
                    TradeRow(
                        period=rec.period,
                        price=p["price_cents"],
                        quantity=p["quantity"],
                        buyer_id=p["buyer_id"],
                        seller_id=p["seller_id"],
                        timestamp=rec.wall_time,
                    )
                )
            elif rec.kind is EventKind.QUESTIONNAIRE_RESPONSE:
                p = rec.payload
                if p["questionnaire"] == "declared_prices":
                    declared[p["trader_id"]] = list(p["declared_value_per_period"])
                else:
                    for item in p["items"]:
                        assessments.append(
                            AssessmentRow(
                                trader_id=p["trader_id"],
                                item_id=item["item_id"],
                                item_group=ItemGroup(item["item_group"]),
                                rating=item["rating"],
                            )
                        )
        return cls(
            config=config,
            traders=traders,
            trades=trades,
            declared=declared,
            assessments=assessments,
        )


# ------------------------------------------------------------- period series

@dataclass(frozen=True)
class PeriodSeries:
    """Per-period aggregates behind the session's price chart."""

    periods: list[int]
    mean_price: list[float | None]  # volume-weighted; None when no trades
    trade_count: list[int]
    intrinsic: list[int]
    max_pv: list[int]
    mean_declared: list[float | None]

    def to_rows(self) -> list[dict]:
        return [
            {
                "period": self.periods[i],
                "mean_price": self.mean_price[i],
                "trade_count": self.trade_count[i],
                "intrinsic": self.intrinsic[i],
                "max_pv": self.max_pv[i],
                "mean_declared": self.mean_declared[i],
            }
            for i in range(len(self.periods))
        ]


def build_period_series(data: SessionData) -> PeriodSeries:
    config = data.config
    schedule = intrinsic_schedule(config)
    periods = list(range(1, config.n_periods + 1))
    mean_price: list[float | None] = []
    trade_count: list[int] = []
    for t in periods:
        rows = [tr for tr in data.trades if tr.period == t]
        qty = sum(tr.quantity for tr in rows)
        trade_count.append(len(rows))
        if qty == 0:
            mean_price.append(None)
        else:
            mean_price.append(sum(tr.price * tr.quantity for tr in rows) / qty)
    mean_declared: list[float | None] = []
    for t in periods:
        values = [vals[t - 1] for vals in data.declared.values()]
        mean_declared.append(sum(values) / len(values) if values else None)
    return PeriodSeries(
        periods=periods,
        mean_price=mean_price,
        trade_count=trade_count,
        intrinsic=schedule,
        max_pv=[max_present_value(config, t) for t in periods],
        mean_declared=mean_declared,
    )


# -------------------------------------------------------------- decomposition

@dataclass(frozen=True)
class PeriodDecomposition:
    period: int
    trader_mean_price: dict[str, float] | None
    mean_price: float | None  # unweighted cross-trader mean of x_i
    dispersion: float | None
    common: float | None
    msd: float | None
    common_share: float | None

    @property
    def defined(self) -> bool:
        return self.msd is not None

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "trader_mean_price": (
                dict(sorted(self.trader_mean_price.items())) if self.trader_mean_price else None
            ),
            "mean_price": self.mean_price,
            "dispersion": self.dispersion,
            "common": self.common,
            "msd": self.msd,
            "common_share": self.common_share,
        }


def trader_mean_prices(trades: Sequence[TradeRow], period: int) -> dict[str, float]:
    """Volume-weighted mean transaction price per trader, buys and sells pooled."""
    value: dict[str, int] = {}
    qty: dict[str, int] = {}
    for tr in trades:
        if tr.period != period:
            continue
        for tid in (tr.buyer_id, tr.seller_id):
            value[tid] = value.get(tid, 0) + tr.price * tr.quantity
            qty[tid] = qty.get(tid, 0) + tr.quantity
    return {tid: value[tid] / qty[tid] for tid in value}


def decompose_periods(
    data: SessionData, per_trade: bool = False
) -> list[PeriodDecomposition]:
    """Decompose every period; periods without two active traders (or, with
    ``per_trade``, two trades) are returned undefined rather than imputed."""
    schedule = intrinsic_schedule(data.config)
    out = []
    for t in range(1, data.config.n_periods + 1):
        f_t = schedule[t - 1]
        if per_trade:
            prices = [
                float(tr.price) for tr in data.trades if tr.period == t for _ in range(tr.quantity)
            ]
            units: dict[str, float] | list[float] = prices
            trader_means = None
            enough = len(prices) >= 2
        else:
            means = trader_mean_prices(data.trades, t)
            units = means
            trader_means = means
            enough = len(means) >= 2
        if not enough:
            out.append(PeriodDecomposition(t, None, None, None, None, None, None))
            continue
        dispersion, common, msd, common_share = decompose(units, f_t)
        values = list(units.values()) if isinstance(units, Mapping) else list(units)
        out.append(
            PeriodDecomposition(
                period=t,
                trader_mean_price=trader_means,
                mean_price=float(np.mean(values)),
                dispersion=dispersion,
                common=common,
                msd=msd,
                common_share=common_share,
            )
        )
    return out


# ------------------------------------------------------------------- report

@dataclass(frozen=True)
class MetricsReport:
    session_id: str
    n_periods: int
    series: PeriodSeries
    haessel_r2_trading: float | None
    haessel_r2_declared: float | None
    napd: float | None
    amplitude: float | None
    decomposition: list[PeriodDecomposition]
    mean_common_share: float | None
    common_share_trend: float | None  # rank correlation of common_share_t vs t
    declared_grand_mean: float | None
    cronbach_alpha: dict[str, float | None]  # per item group
    overconfidence: OverconfidenceIndex | None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "n_periods": self.n_periods,
            "series": self.series.to_rows(),
            "haessel_r2_trading": self.haessel_r2_trading,
            "haessel_r2_declared": self.haessel_r2_declared,
            "napd": self.napd,
            "amplitude": self.amplitude,
            "decomposition": [d.to_dict() for d in self.decomposition],
            "mean_common_share": self.mean_common_share,
            "common_share_trend": self.common_share_trend,
            "declared_grand_mean": self.declared_grand_mean,
            "cronbach_alpha": self.cronbach_alpha,
            "overconfidence": self.overconfidence.to_dict() if self.overconfidence else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def _undefined_on(error_types, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except error_types:
        return None


def build_report(
    records: Sequence[EventRecord], per_trade: bool = False, validate: bool = True
) -> MetricsReport:
    """Assemble every session measure from an event log.

    With ``validate`` the log is first re-executed and checked against
    itself; a log that does not replay raises :class:`CorruptLog`.
    """
    if validate:
        try:
            verify_replay(records)
        except ReplayMismatch as exc:
            raise CorruptLog(str(exc)) from exc
    data = SessionData.from_records(records)
    series = build_period_series(data)
    schedule = intrinsic_schedule(data.config)

    traded = [i for i in range(len(series.periods)) if series.mean_price[i] is not None]
    r2_trading = None
    if len(traded) >= 2:
        r2_trading = _undefined_on(
            DegenerateSeries,
            haessel_r2,
            [series.mean_price[i] for i in traded],
            [schedule[i] for i in traded],
        )
    r2_declared = None
    if data.declared:
        r2_declared = _undefined_on(
            DegenerateSeries,
            haessel_r2,
            [m for m in series.mean_declared],
            schedule,
        )

    napd_value = _undefined_on(NoTrades, napd, data.trades, schedule)
    amplitude_value = _undefined_on(InsufficientPeriods, amplitude, series)

    decomposition = decompose_periods(data, per_trade=per_trade)
    shares = [(d.period, d.common_share) for d in decomposition if d.defined]
    mean_common_share = sum(s for _, s in shares) / len(shares) if shares else None
    trend = None
    if len(shares) >= 2:
        trend = _undefined_on(
            DegenerateSeries,
            spearman_rank_correlation,
            [s for _, s in shares],
            [t for t, _ in shares],
        )

    declared_all = [v for vals in data.declared.values() for v in vals]
    declared_grand_mean = sum(declared_all) / len(declared_all) if declared_all else None

    alphas: dict[str, float | None] = {}
    for group in ItemGroup:
        matrix = _assessment_matrix(data.assessments, group)
        if matrix is None:
            alphas[group.value] = None
        else:
            alphas[group.value] = _undefined_on(
                (DegenerateVariance, ValueError), cronbach_alpha, matrix
            )

    overconfidence = _undefined_on(MissingGroup, overconfidence_index, data.assessments)

    return MetricsReport(
        session_id=data.config.session_id,
        n_periods=data.config.n_periods,
        series=series,
        haessel_r2_trading=r2_trading,
        haessel_r2_declared=r2_declared,
        napd=napd_value,
        amplitude=amplitude_value,
        decomposition=decomposition,
        mean_common_share=mean_common_share,
        common_share_trend=trend,
        declared_grand_mean=declared_grand_mean,
        cronbach_alpha=alphas,
        overconfidence=overconfidence,
    )


AGGREGATE_FIELDS = (
    "haessel_r2_trading",
    "haessel_r2_declared",
    "napd",
    "amplitude",
    "mean_common_share",
    "common_share_trend",
)


def aggregate_reports(reports: Mapping[int, MetricsReport]) -> dict:
    """Summarize a seed batch: per-seed metric values plus their means
    (and the median trend) over the seeds where each metric is defined."""
    per_seed = {
        str(seed): {name: getattr(report, name) for name in AGGREGATE_FIELDS}
        for seed, report in sorted(reports.items())
    }
    summary: dict[str, float | None] = {}
    for name in AGGREGATE_FIELDS:
        values = [v[name] for v in per_seed.values() if v[name] is not None]
        summary[f"mean_{name}"] = sum(values) / len(values) if values else None
    trends = sorted(
        v["common_share_trend"] for v in per_seed.values() if v["common_share_trend"] is not None
    )
    summary["median_common_share_trend"] = (
        trends[len(trends) // 2] if len(trends) % 2 == 1 else
        (trends[len(trends) // 2 - 1] + trends[len(trends) // 2]) / 2 if trends else None
    )
    return {"n_seeds": len(per_seed), "per_seed": per_seed, "summary": summary}


def _assessment_matrix(
    assessments: Sequence[AssessmentRow], group: ItemGroup
) -> list[list[int]] | None:
    """Respondents x items matrix for one group; None unless every
    responding trader answered the same item set."""
    rows = [a for a in assessments if a.item_group is group]
    if not rows:
        return None
    item_ids = sorted({a.item_id for a in rows})
    by_trader: dict[str, dict[str, int]] = {}
    for a in rows:
        by_trader.setdefault(a.trader_id, {})[a.item_id] = a.rating
    matrix = []
    for tid in sorted(by_trader):
        ratings = by_trader[tid]
        if set(ratings) != set(item_ids):
            return None
        matrix.append([ratings[item] for item in item_ids])
    return matrix


# ------------------------------------------------------------------- figures

FIGURE1_COLUMNS = ["t", "mean_price", "intrinsic", "max_pv", "mean_declared"]
FIGURE2_COLUMNS = ["t", "common_component", "common_share"]


def figure1_csv(report: MetricsReport) -> str:
    """Per-period price series: traded mean, intrinsic value, maximum
    present value, and mean declared value. Undefined cells are empty."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(FIGURE1_COLUMNS)
    s = report.series
    for i, t in enumerate(s.periods):
        writer.writerow(
            [
                t,
                _cell(s.mean_price[i]),
                s.intrinsic[i],
                s.max_pv[i],
                _cell(s.mean_declared[i]),
            ]
        )
    return buf.getvalue()


def figure2_csv(report: MetricsReport) -> str:
    """Per-period common component of the price discrepancy and its share."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(FIGURE2_COLUMNS)
    for d in report.decomposition:
        writer.writerow([d.period, _cell(d.common), _cell(d.common_share)])
    return buf.getvalue()


def export_figure_data(report: MetricsReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig1 = out / "figure1.csv"
    fig2 = out / "figure2.csv"
    fig1.write_text(figure1_csv(report), encoding="utf-8")
    fig2.write_text(figure2_csv(report), encoding="utf-8")
    return fig1, fig2


def _cell(value: float | None) -> str | float:
    return "" if value is None else value
