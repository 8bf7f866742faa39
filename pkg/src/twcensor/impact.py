"""Windowed pre/post impact analysis of withholding events.

For an event day ``t`` and window ``W`` the pre interval is ``[t - W, t - 1]``
(W days) and the post interval ``[t, t + W]`` (W + 1 days). Each account
contributes one value per metric and interval; the paired differences
(post minus pre) are tested with the Wilcoxon signed-rank test.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datamodel import AccountTimeline, WithholdingEvent, day_ordinal, ordinal_day
from .errors import CohortEmpty, InsufficientSpan, RangeOutsideSeries
from .ingest import DailySeries, SeriesFrame, series_frame
from .stats import WilcoxonResult, wilcoxon_signed_rank

DEFAULT_WINDOWS = (30, 45, 60, 75, 90, 120, 150)
METRICS = ("med_retweets", "med_likes", "posts_per_day", "avg_follower_gain")
MIN_TWEETS_PER_INTERVAL = 2
SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class DateRange:
    """Inclusive range of UTC days."""

    start: _dt.date
    end: _dt.date

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1

    def __contains__(self, day: _dt.date) -> bool:
        return self.start <= day <= self.end

    def overlaps(self, other: "DateRange") -> bool:
        return self.start <= other.end and other.start <= self.end


def make_intervals(t_i: _dt.date, W: int) -> tuple[DateRange, DateRange]:
    if W < 1:
        raise ValueError(f"window must be >= 1 day, got {W}")
    one = _dt.timedelta(days=1)
    span = _dt.timedelta(days=W)
    return DateRange(t_i - span, t_i - one), DateRange(t_i, t_i + span)


@dataclass(frozen=True)
class IntervalMetrics:
    account_id: int
    window: str
    med_retweets: float
    med_likes: float
    posts_per_day: float
    avg_follower_gain: float
    tweet_count_in_interval: int

    def value(self, metric: str) -> float:
        return getattr(self, metric)


def _frame(series) -> SeriesFrame:
    if isinstance(series, SeriesFrame):
        return series
    if isinstance(series, AccountTimeline):
        return series_frame(series)
    return SeriesFrame.from_rows(list(series))


def _followers_at(frame: SeriesFrame, ordinal: int) -> int:
    """End-of-day follower count, carried forward past the series and back-filled before it."""
    j = min(max(ordinal - frame.start, 0), len(frame) - 1)
    return int(frame.followers[j])


def _window_slice(frame: SeriesFrame, lo: int, hi: int, column: np.ndarray) -> np.ndarray:
    """Daily values over ordinals ``lo..hi``; days outside the series count as zero activity."""
    out = np.zeros(hi - lo + 1, dtype=np.float64)
    a, b = max(lo, frame.start), min(hi, frame.end)
    if a <= b:
        out[a - lo: b - lo + 1] = column[a - frame.start: b - frame.start + 1]
    return out


def interval_metrics(series, interval: DateRange, window: str = "") -> IntervalMetrics:
    """Aggregate one account's daily series over an interval.

    Daily engagement medians include zero-activity days. Follower gain is the
    endpoint difference between the last day of the interval and the day
    before its first day, divided by the interval length.
    """
    frame = _frame(series)
    lo, hi = day_ordinal(interval.start), day_ordinal(interval.end)
    if hi < frame.start or lo > frame.end:
        raise RangeOutsideSeries(
            f"{interval.start}..{interval.end} outside series {frame.first_day}..{frame.last_day}"
        )
    days = hi - lo + 1
    tweets = _window_slice(frame, lo, hi, frame.tweets)
    n_tweets = int(tweets.sum())
    gain = _followers_at(frame, hi) - _followers_at(frame, lo - 1)
    return IntervalMetrics(
        account_id=frame.account_id,
        window=window,
        med_retweets=float(np.median(_window_slice(frame, lo, hi, frame.retweets))),
        med_likes=float(np.median(_window_slice(frame, lo, hi, frame.likes))),
        posts_per_day=n_tweets / days,
        avg_follower_gain=gain / days,
        tweet_count_in_interval=n_tweets,
    )


@dataclass(frozen=True)
class ImpactRow:
    account_id: int
    W: int
    metric: str
    pre_value: float
    post_value: float
    D: float


@dataclass(frozen=True)
class ImpactTest:
    W: int
    metric: str
    group: str
    n: int
    pre_median: float
    post_median: float
    p_value: float
    significant: bool
    wilcoxon: WilcoxonResult = field(repr=False)

    @property
    def relative_change(self) -> float:
        """``post_median / pre_median - 1``; NaN when the pre median is zero."""
        if self.pre_median == 0:
            return float("nan")
        return self.post_median / self.pre_median - 1.0


@dataclass
class ImpactAnalysis:
    group: str
    windows: tuple[int, ...]
    cohort: tuple[int, ...]
    excluded: tuple[int, ...]
    rows: list[ImpactRow]
    tests: list[ImpactTest]

    def test(self, W: int, metric: str) -> ImpactTest:
        for t in self.tests:
            if t.W == W and t.metric == metric:
                return t
        raise KeyError((W, metric))

    def accounts_at(self, W: int) -> set[int]:
        return {r.account_id for r in self.rows if r.W == W}


def _frames(timelines: Mapping[int, object], ids: Iterable[int]) -> dict[int, SeriesFrame]:
    return {a: _frame(timelines[a]) for a in ids}


def run_impact_analysis(
    events: Mapping[int, WithholdingEvent] | Iterable[WithholdingEvent],
    timelines: Mapping[int, object],
    windows: Sequence[int] = DEFAULT_WINDOWS,
    metrics: Sequence[str] = METRICS,
    group: str = "withheld",
) -> ImpactAnalysis:
    """Pre/post comparison across windows on a fixed cohort.

    The cohort is the set of accounts with at least two tweets in both
    intervals of the first window; it is reused unchanged for every later
    window. ``timelines`` maps account id to an :class:`AccountTimeline`,
    :class:`SeriesFrame` or list of :class:`DailySeries`.
    """
    if isinstance(events, Mapping):
        events = list(events.values())
    events = sorted(events, key=lambda e: e.account_id)
    windows = tuple(int(w) for w in windows)
    if not windows:
        raise ValueError("no windows given")
    if list(windows) != sorted(windows):
        raise ValueError("windows must be sorted ascending")

    frames = _frames(timelines, [e.account_id for e in events])
    first = windows[0]
    cohort, excluded = [], []
    for e in events:
        pre, post = make_intervals(e.t_i, first)
        frame = frames[e.account_id]
        try:
            m_pre = interval_metrics(frame, pre)
            m_post = interval_metrics(frame, post)
        except RangeOutsideSeries:
            excluded.append(e.account_id)
            continue
        if min(m_pre.tweet_count_in_interval, m_post.tweet_count_in_interval) < MIN_TWEETS_PER_INTERVAL:
            excluded.append(e.account_id)
        else:
            cohort.append(e)
    if not cohort:
        raise CohortEmpty(f"no {group} account has {MIN_TWEETS_PER_INTERVAL}+ tweets in both W={first} intervals")

    rows: list[ImpactRow] = []
    tests: list[ImpactTest] = []
    for W in windows:
        pre_vals = {m: [] for m in metrics}
        post_vals = {m: [] for m in metrics}
        for e in cohort:
            pre, post = make_intervals(e.t_i, W)
            m_pre = interval_metrics(frames[e.account_id], pre, "pre")
            m_post = interval_metrics(frames[e.account_id], post, "post")
            for m in metrics:
                a, b = m_pre.value(m), m_post.value(m)
                pre_vals[m].append(a)
                post_vals[m].append(b)
                rows.append(ImpactRow(e.account_id, W, m, a, b, b - a))
        for m in metrics:
            pre_arr = np.asarray(pre_vals[m])
            post_arr = np.asarray(post_vals[m])
            result = wilcoxon_signed_rank(post_arr - pre_arr)
            tests.append(ImpactTest(
                W=W, metric=m, group=group, n=len(cohort),
                pre_median=float(np.median(pre_arr)),
                post_median=float(np.median(post_arr)),
                p_value=result.p_two_sided,
                significant=result.p_two_sided < SIGNIFICANCE,
                wilcoxon=result,
            ))
    return ImpactAnalysis(
        group=group,
        windows=windows,
        cohort=tuple(e.account_id for e in cohort),
        excluded=tuple(excluded),
        rows=rows,
        tests=tests,
    )


# -- matched controls ----------------------------------------------------------

@dataclass(frozen=True)
class ControlMatch:
    withheld_account_id: int
    control_account_id: int
    synthetic_t_i: _dt.date

    def event(self) -> WithholdingEvent:
        ts = day_ordinal(self.synthetic_t_i) * 86400
        return WithholdingEvent(self.control_account_id, self.synthetic_t_i, ts, synthetic=True)


class Matches(list):
    """List of :class:`ControlMatch`; ``unmatched`` holds withheld ids with no candidate in band."""

    unmatched: list[int]

    def __init__(self, items=(), unmatched=()):
        super().__init__(items)
        self.unmatched = list(unmatched)

    def events(self) -> dict[int, WithholdingEvent]:
        return {m.control_account_id: m.event() for m in self}


def mean_follower_count(timeline: AccountTimeline) -> float:
    return float(np.mean([t.follower_count_at_post for t in timeline.tweets]))


def activity_midpoint(timeline: AccountTimeline) -> _dt.date:
    first, last = day_ordinal(timeline.first_day), day_ordinal(timeline.last_day)
    return ordinal_day(first + (last - first) // 2)


def match_controls(
    withheld_cohort: Iterable[int],
    candidate_pool: Mapping[int, AccountTimeline],
    timelines: Mapping[int, AccountTimeline] | None = None,
    band: float = 0.10,
    seed: int = 0,
) -> Matches:
    """Pick one never-withheld control per withheld account.

    A candidate is eligible when its mean follower count lies within
    ``band`` (relative) of the withheld account's mean. Picks are uniform
    among eligible candidates, without replacement, in ascending withheld id
    order. ``timelines`` supplies the withheld accounts' timelines and
    defaults to ``candidate_pool``.
    """
    timelines = candidate_pool if timelines is None else timelines
    rng = np.random.default_rng(seed)
    cand_ids = np.array(sorted(candidate_pool), dtype=np.int64)
    cand_means = np.array([mean_follower_count(candidate_pool[c]) for c in cand_ids], dtype=float)
    available = np.ones(len(cand_ids), dtype=bool)
    matches, unmatched = [], []
    for a in sorted(set(withheld_cohort)):
        target = mean_follower_count(timelines[a])
        eligible = np.flatnonzero(available & (np.abs(cand_means - target) <= band * target))
        if eligible.size == 0:
            unmatched.append(a)
            continue
        j = int(eligible[rng.integers(eligible.size)])
        available[j] = False
        c = int(cand_ids[j])
        matches.append(ControlMatch(a, c, activity_midpoint(candidate_pool[c])))
    return Matches(matches, unmatched)


# -- relative follower growth ------------------------------------------------------

@dataclass(frozen=True)
class GrowthRow:
    account_id: int
    followers_at_t_i: int
    pre_rate: float
    post_rate: float
    defined: bool = True
    audience_tag: str = ""


def relative_growth(series, event: WithholdingEvent, horizon: int = 90, audience_tag: str = "") -> GrowthRow:
    """Average daily follower gain relative to the follower count at interval start.

    Pre: gain over ``[t - horizon, t - 1]`` divided by the count entering
    ``t - horizon``. Post: gain over ``[t, t + horizon]`` divided by the count
    entering ``t``. A zero baseline makes the row undefined (NaN rates).
    """
    frame = _frame(series)
    t = day_ordinal(event.t_i)
    if frame.start > t - 1 or frame.end < t:
        raise InsufficientSpan(f"account {frame.account_id}: series does not straddle {event.t_i}")
    pre, post = make_intervals(event.t_i, horizon)
    gain_pre = interval_metrics(frame, pre).avg_follower_gain
    gain_post = interval_metrics(frame, post).avg_follower_gain
    base_pre = _followers_at(frame, t - horizon - 1)
    base_post = _followers_at(frame, t - 1)
    defined = base_pre > 0 and base_post > 0
    nan = float("nan")
    return GrowthRow(
        account_id=frame.account_id,
        followers_at_t_i=base_post,
        pre_rate=gain_pre / base_pre if base_pre > 0 else nan,
        post_rate=gain_post / base_post if base_post > 0 else nan,
        defined=defined,
        audience_tag=audience_tag,
    )


def never_withheld(timelines: Mapping[int, AccountTimeline]) -> dict[int, AccountTimeline]:
    """Accounts without a single withheld tweet (the control candidate pool)."""
    return {a: tl for a, tl in timelines.items() if not any(t.withheld for t in tl.tweets)}


@dataclass
class StudyResult:
    withheld: ImpactAnalysis
    control: ImpactAnalysis | None = None
    matches: Matches | None = None

    @property
    def tests(self) -> list[ImpactTest]:
        out = list(self.withheld.tests)
        if self.control is not None:
            out += self.control.tests
        return out


def run_study(
    timelines: Mapping[int, AccountTimeline],
    events: Mapping[int, WithholdingEvent],
    windows: Sequence[int] = DEFAULT_WINDOWS,
    with_controls: bool = True,
    band: float = 0.10,
    seed: int = 0,
) -> StudyResult:
    """Withheld-group analysis plus, optionally, the matched-control analysis."""
    withheld = run_impact_analysis(events, timelines, windows, group="withheld")
    if not with_controls:
        return StudyResult(withheld)
    pool = never_withheld(timelines)
    matches = match_controls(withheld.cohort, pool, timelines, band=band, seed=seed)
    if not matches:
        raise CohortEmpty("no control account falls within the follower band")
    control = run_impact_analysis(matches.events(), timelines, windows, group="control")
    return StudyResult(withheld, control, matches)
