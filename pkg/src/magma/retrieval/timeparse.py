"""Rule-based temporal tagger.

Resolves absolute dates and a small set of relative expressions against a
reference instant and returns whole-day windows in UTC epoch seconds.
"""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Callable

from ..model import from_epoch, to_epoch

Window = tuple[int, int]

WEEKDAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
MONTHS = [m.lower() for m in calendar.month_name[1:]]
_MONTH_ABBR = {m[:3]: i + 1 for i, m in enumerate(MONTHS)}
_NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}

_MONTH_RE = r"(jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|" \
            r"sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)"
_WD_RE = r"(monday|tuesday|wednesday|thursday|friday|saturday|sunday)"
_NUM_RE = r"(\d+|" + "|".join(_NUMBER_WORDS) + r")"


def day_window(d: date) -> Window:
    start = datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
    return to_epoch(start), to_epoch(start) + 86399


def span_window(first: date, last: date) -> Window:
    return day_window(first)[0], day_window(last)[1]


def _month_span(year: int, month: int) -> Window:
    last = calendar.monthrange(year, month)[1]
    return span_window(date(year, month, 1), date(year, month, last))


def _shift_month(d: date, delta: int) -> tuple[int, int]:
    idx = d.year * 12 + (d.month - 1) + delta
    return idx // 12, idx % 12 + 1


def _week_of(d: date) -> Window:
    monday = d - timedelta(days=d.weekday())
    return span_window(monday, monday + timedelta(days=6))


def _num(token: str) -> int:
    return int(token) if token.isdigit() else _NUMBER_WORDS[token]


@dataclass(frozen=True)
class TemporalMatch:
    text: str
    start: int
    window: Window


def _safe_date(y: int, m: int, d: int) -> date | None:
    try:
        return date(y, m, d)
    except ValueError:
        return None


# Each rule: (pattern, resolver(match, today) -> window | None)
Rule = tuple[re.Pattern, Callable[[re.Match, date], "Window | None"]]


def _iso(m: re.Match, today: date) -> Window | None:
    d = _safe_date(int(m[1]), int(m[2]), int(m[3]))
    return day_window(d) if d else None


def _dmy(m: re.Match, today: date) -> Window | None:
    d = _safe_date(int(m[3]), _MONTH_ABBR[m[2][:3]], int(m[1]))
    return day_window(d) if d else None


def _mdy(m: re.Match, today: date) -> Window | None:
    d = _safe_date(int(m[3]), _MONTH_ABBR[m[1][:3]], int(m[2]))
    return day_window(d) if d else None


def _relative_day(m: re.Match, today: date) -> Window:
    offset = {"yesterday": -1, "today": 0, "tonight": 0, "tomorrow": 1}[m[1]]
    return day_window(today + timedelta(days=offset))


def _weekday(m: re.Match, today: date) -> Window:
    qualifier, target = m[1], WEEKDAYS.index(m[2])
    diff = today.weekday() - target
    if qualifier == "next":
        ahead = (target - today.weekday()) % 7 or 7
        return day_window(today + timedelta(days=ahead))
    if qualifier == "this":
        return day_window(today + timedelta(days=-today.weekday() + target))
    if qualifier == "last":
        back = diff % 7 or 7
        return day_window(today - timedelta(days=back))
    # bare weekday: most recent occurrence, today included
    return day_window(today - timedelta(days=diff % 7))


def _period(m: re.Match, today: date) -> Window:
    qualifier, unit = m[1], m[2]
    step = {"last": -1, "past": -1, "previous": -1, "this": 0, "next": 1}[qualifier]
    if unit == "week":
        return _week_of(today + timedelta(weeks=step))
    if unit == "month":
        return _month_span(*_shift_month(today, step))
    return span_window(date(today.year + step, 1, 1), date(today.year + step, 12, 31))


def _ago(m: re.Match, today: date) -> Window:
    n, unit = _num(m[1]), m[2]
    if unit.startswith("day"):
        return day_window(today - timedelta(days=n))
    if unit.startswith("week"):
        return _week_of(today - timedelta(weeks=n))
    if unit.startswith("month"):
        return _month_span(*_shift_month(today, -n))
    return span_window(date(today.year - n, 1, 1), date(today.year - n, 12, 31))


RULES: list[Rule] = [
    (re.compile(r"\b(\d{4})-(\d{2})-(\d{2})\b"), _iso),
    (re.compile(r"\b(\d{1,2})(?:st|nd|rd|th)?\s+" + _MONTH_RE + r",?\s+(\d{4})\b"), _dmy),
    (re.compile(r"\b" + _MONTH_RE + r"\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})\b"), _mdy),
    (re.compile(r"\b(yesterday|today|tonight|tomorrow)\b"), _relative_day),
    (re.compile(r"\b(?:(last|next|this)\s+)?" + _WD_RE + r"\b"), _weekday),
    (re.compile(r"\b(last|past|previous|this|next)\s+(week|month|year)\b"), _period),
    (re.compile(r"\b" + _NUM_RE + r"\s+(days?|weeks?|months?|years?)\s+ago\b"), _ago),
]


def find_temporal(text: str, now: int | datetime | str) -> list[TemporalMatch]:
    """Every recognised expression in ``text``, in order of appearance."""
    today = from_epoch(to_epoch(now)).date()
    lowered = text.lower()
    found: list[TemporalMatch] = []
    claimed: list[tuple[int, int]] = []
    for pattern, resolve in RULES:
        for m in pattern.finditer(lowered):
            if any(s < m.end() and m.start() < e for s, e in claimed):
                continue
            window = resolve(m, today)
            if window is None:
                continue
            claimed.append(m.span())
            found.append(TemporalMatch(text[m.start():m.end()], m.start(), window))
    found.sort(key=lambda t: t.start)
    return found


def parse_time(query: str, session_now: int | datetime | str) -> Window | None:
    """Window for the first temporal expression in ``query``, or None."""
    matches = find_temporal(query, session_now)
    return matches[0].window if matches else None
