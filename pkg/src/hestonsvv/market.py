"""Option-chain ingestion, cleaning and forward extraction.

Input CSV schema (header required, comma-separated, UTF-8):

    quote_date,underlying,kind,expiry,strike,bid,ask,last,volume,open_interest

with ISO-8601 dates.  bid/ask/last may be empty; quote prices for
calibration are mid = (bid+ask)/2, falling back to last when a side is
missing.  Forwards come from put-call parity at the strike where
|C - P| is smallest; cleaning applies five filters in order (in-the-money,
moneyness outside (75%, 125%), zero volume, zero open interest, maturity
beyond one year) and tallies rejections per rule.  Day count is ACT/365.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters, NoStraddle, OutOfBounds, ParseError
from .implied import implied_vol

HEADER = [
    "quote_date",
    "underlying",
    "kind",
    "expiry",
    "strike",
    "bid",
    "ask",
    "last",
    "volume",
    "open_interest",
]

RULES = ("itm", "moneyness", "zero_volume", "zero_open_interest", "maturity")


@dataclass(frozen=True)
class OptionQuote:
    quote_date: dt.date
    underlying: str  # "spx" | "vix"
    kind: str  # "call" | "put"
    expiry: dt.date
    strike: float
    bid: float | None
    ask: float | None
    last: float | None
    volume: int
    open_interest: int

    def __post_init__(self):
        if self.strike <= 0:
            raise InvalidParameters(f"strike must be positive, got {self.strike}")
        if self.expiry <= self.quote_date:
            raise InvalidParameters("expiry must fall after the quote date")

    @property
    def mid(self) -> float | None:
        if self.bid is not None and self.ask is not None:
            return 0.5 * (self.bid + self.ask)
        return self.last


@dataclass(frozen=True)
class VolQuote:
    underlying: str
    kind: str
    forward: float
    strike: float
    expiry_tau: float
    implied_vol: float


@dataclass
class CleanedSurface:
    quote_date: dt.date
    underlying: str
    forwards: dict  # expiry date -> forward level
    quotes: list  # retained VolQuote
    rejects: dict  # rule name -> count
    retained_raw: list = field(default_factory=list)  # matching OptionQuote


@dataclass(frozen=True)
class CleanConfig:
    rate: float = 0.0
    moneyness_lo: float = 0.75
    moneyness_hi: float = 1.25
    max_tau: float = 1.0
    day_count: float = 365.0


def _parse_field(raw: str, column: str, line: int, conv, optional=False):
    raw = raw.strip()
    if raw == "":
        if optional:
            return None
        raise ParseError(f"line {line}: missing {column}", line, column)
    try:
        return conv(raw)
    except (ValueError, TypeError):
        raise ParseError(
            f"line {line}: cannot parse {column} from {raw!r}", line, column
        ) from None


def load_chain(path) -> list:
    """Parse an option-chain CSV into OptionQuote rows.

    Raises ParseError carrying the 1-based line number and column name
    of the first malformed cell.
    """
    quotes = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header", 1, "header") from None
        if [h.strip() for h in header] != HEADER:
            raise ParseError(f"unexpected header {header}", 1, "header")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                raise ParseError(
                    f"line {line_no}: expected {len(HEADER)} columns, got {len(row)}",
                    line_no,
                    "row",
                )
            vals = dict(zip(HEADER, row))
            date = lambda s: dt.date.fromisoformat(s)  # noqa: E731
            kind = vals["kind"].strip().lower()
            underlying = vals["underlying"].strip().lower()
            if kind not in ("call", "put"):
                raise ParseError(f"line {line_no}: bad kind {kind!r}", line_no, "kind")
            if underlying not in ("spx", "vix"):
                raise ParseError(
                    f"line {line_no}: bad underlying {underlying!r}",
                    line_no,
                    "underlying",
                )
            try:
                quote = OptionQuote(
                    quote_date=_parse_field(vals["quote_date"], "quote_date", line_no, date),
                    underlying=underlying,
                    kind=kind,
                    expiry=_parse_field(vals["expiry"], "expiry", line_no, date),
                    strike=_parse_field(vals["strike"], "strike", line_no, float),
                    bid=_parse_field(vals["bid"], "bid", line_no, float, optional=True),
                    ask=_parse_field(vals["ask"], "ask", line_no, float, optional=True),
                    last=_parse_field(vals["last"], "last", line_no, float, optional=True),
                    volume=_parse_field(vals["volume"], "volume", line_no, int),
                    open_interest=_parse_field(
                        vals["open_interest"], "open_interest", line_no, int
                    ),
                )
            except InvalidParameters as exc:
                raise ParseError(f"line {line_no}: {exc}", line_no, "row") from None
            quotes.append(quote)
    return quotes


def extract_forward(quotes, discount: float = 1.0) -> float:
    """Put-call-parity forward from the most at-the-money straddle.

    F = K* + (C(K*) - P(K*)) / discount where K* minimizes |C - P|
    over strikes quoted on both sides.
    """
    calls, puts = {}, {}
    for q in quotes:
        side = calls if q.kind == "call" else puts
        if q.mid is not None:
            side.setdefault(q.strike, q.mid)
    shared = sorted(set(calls) & set(puts))
    if not shared:
        raise NoStraddle("no strike has both a call and a put quote")
    k_star = min(shared, key=lambda k: abs(calls[k] - puts[k]))
    return float(k_star + (calls[k_star] - puts[k_star]) / discount)


def clean(
    quotes,
    spot_or_future: float | None = None,
    config: CleanConfig = CleanConfig(),
) -> CleanedSurface:
    """Apply the five cleaning rules and invert retained quotes to vols.

    Rules run in order per quote; a quote is tallied against the first
    rule it violates.  Moneyness bounds are exclusive: strictly below
    75% or strictly above 125% of the forward is rejected.
    """
    if not quotes:
        return CleanedSurface(None, None, {}, [], {r: 0 for r in RULES})
    quote_date = quotes[0].quote_date
    underlying = quotes[0].underlying
    if any(q.quote_date != quote_date or q.underlying != underlying for q in quotes):
        raise InvalidParameters("clean expects one underlying and one quote date")

    rejects = {r: 0 for r in RULES}
    by_expiry = {}
    for q in quotes:
        by_expiry.setdefault(q.expiry, []).append(q)

    forwards, taus = {}, {}
    for expiry, group in by_expiry.items():
        tau = (expiry - quote_date).days / config.day_count
        taus[expiry] = tau
        discount = float(np.exp(-config.rate * tau))
        try:
            forwards[expiry] = extract_forward(group, discount)
        except NoStraddle:
            if spot_or_future is None:
                raise
            forwards[expiry] = spot_or_future

    retained, retained_raw = [], []
    for expiry, group in by_expiry.items():
        fwd, tau = forwards[expiry], taus[expiry]
        discount = float(np.exp(-config.rate * tau))
        for q in group:
            if (q.kind == "call" and q.strike < fwd) or (
                q.kind == "put" and q.strike > fwd
            ):
                rejects["itm"] += 1
                continue
            money = q.strike / fwd
            if money < config.moneyness_lo or money > config.moneyness_hi:
                rejects["moneyness"] += 1
                continue
            if q.volume == 0:
                rejects["zero_volume"] += 1
                continue
            if q.open_interest == 0:
                rejects["zero_open_interest"] += 1
                continue
            if tau > config.max_tau:
                rejects["maturity"] += 1
                continue
            price = q.mid
            if price is None:
                rejects.setdefault("no_price", 0)
                rejects["no_price"] += 1
                continue
            try:
                vol = implied_vol(price, fwd, q.strike, tau, discount, q.kind)
            except OutOfBounds:
                rejects.setdefault("unpriceable", 0)
                rejects["unpriceable"] += 1
                continue
            retained.append(
                VolQuote(
                    underlying=q.underlying,
                    kind=q.kind,
                    forward=fwd,
                    strike=q.strike,
                    expiry_tau=tau,
                    implied_vol=vol,
                )
            )
            retained_raw.append(q)

    forwards = {e: f for e, f in forwards.items() if any(
        rq.expiry == e for rq in retained_raw
    )}
    return CleanedSurface(
        quote_date=quote_date,
        underlying=underlying,
        forwards=forwards,
        quotes=retained,
        rejects=rejects,
        retained_raw=retained_raw,
    )


def write_surface(surface: CleanedSurface, path) -> None:
    """Cleaned quotes as CSV: input schema plus forward and implied_vol."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER + ["forward", "implied_vol"])
        for raw, vq in zip(surface.retained_raw, surface.quotes):
            writer.writerow(
                [
                    raw.quote_date.isoformat(),
                    raw.underlying,
                    raw.kind,
                    raw.expiry.isoformat(),
                    f"{raw.strike:.10g}",
                    "" if raw.bid is None else f"{raw.bid:.10g}",
                    "" if raw.ask is None else f"{raw.ask:.10g}",
                    "" if raw.last is None else f"{raw.last:.10g}",
                    raw.volume,
                    raw.open_interest,
                    f"{vq.forward:.10g}",
                    f"{vq.implied_vol:.10g}",
                ]
            )


def write_rejects(surface: CleanedSurface, path) -> None:
    """Sidecar rule -> count summary as plain key=value text."""
    with open(path, "w", encoding="utf-8") as fh:
        for rule, count in surface.rejects.items():
            fh.write(f"{rule}={count}\n")
        fh.write(f"retained={len(surface.quotes)}\n")
