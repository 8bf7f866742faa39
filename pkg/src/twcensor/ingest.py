"""Tweet archive ingestion: JSONL parsing, timelines, daily series, events, cohorts."""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import struct
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .datamodel import (
    AccountProfile,
    AccountTimeline,
    TweetRecord,
    WithholdingEvent,
    day_ordinal,
    ordinal_day,
    validate_timeline,
    validate_tweet_record,
)
from .errors import CorruptInput, EmptyTimeline, ValidationError

log = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.5


class JsonlReader:
    """Iterate validated :class:`TweetRecord` objects from a JSONL file.

    Malformed lines (bad JSON or failed validation) are skipped and counted.
    Once the file is exhausted, more than 50% malformed lines raises
    :class:`CorruptInput`. Optional ``screen_name``/``display_name``/
    ``description`` keys are collected into :attr:`profiles` (last seen wins).
    """

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise FileNotFoundError(f"no such input file: {self.path}")
        self.n_lines = 0
        self.n_records = 0
        self.n_skipped = 0
        self.skip_reasons: dict[str, int] = defaultdict(int)
        self.profiles: dict[int, AccountProfile] = {}

    def __iter__(self) -> Iterator[TweetRecord]:
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                self.n_lines += 1
                try:
                    raw = json.loads(line)
                    if not isinstance(raw, dict):
                        raise ValidationError("line is not a JSON object")
                    record = validate_tweet_record(raw)
                except (json.JSONDecodeError, ValidationError) as exc:
                    self.n_skipped += 1
                    self.skip_reasons[type(exc).__name__] += 1
                    continue
                self._collect_profile(raw, record.account_id)
                self.n_records += 1
                yield record
        if self.n_lines and self.n_skipped / self.n_lines > MAX_MALFORMED_FRACTION:
            raise CorruptInput(
                f"{self.n_skipped} of {self.n_lines} lines malformed in {self.path}"
            )

    def _collect_profile(self, raw: Mapping, account_id: int) -> None:
        name = raw.get("screen_name")
        if name:
            self.profiles[account_id] = AccountProfile(
                account_id=account_id,
                screen_name=str(name),
                display_name=str(raw.get("display_name") or ""),
                description=str(raw.get("description") or ""),
            )


def parse_jsonl_stream(path) -> JsonlReader:
    return JsonlReader(path)


def record_to_raw(record: TweetRecord, profile: AccountProfile | None = None) -> dict:
    """Inverse of :func:`validate_tweet_record`, with ISO-8601 timestamps."""
    raw = {
        "tweet_id": record.tweet_id,
        "account_id": record.account_id,
        "created_at": record.datetime.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "text": record.text,
        "retweet_count": record.retweet_count,
        "like_count": record.like_count,
        "follower_count": record.follower_count_at_post,
        "friend_count": record.friend_count_at_post,
        "statuses_count": record.statuses_count_at_post,
        "withheld_in_countries": list(record.withheld_in),
        "is_retweet": record.is_retweet,
    }
    if record.retweeted_account_id is not None:
        raw["retweeted_account_id"] = record.retweeted_account_id
    if profile is not None:
        raw.update(screen_name=profile.screen_name, display_name=profile.display_name,
                   description=profile.description)
    return raw


def write_jsonl(path, records: Iterable[TweetRecord], profiles: Mapping[int, AccountProfile] | None = None) -> Path:
    path = Path(path)
    profiles = profiles or {}
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_raw(rec, profiles.get(rec.account_id)), ensure_ascii=False))
            fh.write("\n")
    return path


class Timelines(dict):
    """``account_id -> AccountTimeline`` in ascending account order."""

    duplicates: int = 0


def build_timelines(records: Iterable[TweetRecord]) -> Timelines:
    """Group records by account and sort each timeline.

    Later occurrences of an already-seen ``tweet_id`` are dropped.
    """
    seen: set[int] = set()
    grouped: dict[int, list[TweetRecord]] = defaultdict(list)
    duplicates = 0
    for rec in records:
        if rec.tweet_id in seen:
            duplicates += 1
            continue
        seen.add(rec.tweet_id)
        grouped[rec.account_id].append(rec)
    if duplicates:
        log.warning("dropped %d duplicate tweet ids", duplicates)
    out = Timelines()
    for account_id in sorted(grouped):
        out[account_id] = validate_timeline(grouped[account_id])
    out.duplicates = duplicates
    return out


def infer_withholding_event(timeline: AccountTimeline) -> WithholdingEvent | None:
    """Proxy withholding time: start of the maximal trailing run of withheld tweets."""
    tweets = timeline.tweets
    if not tweets or not tweets[-1].withheld:
        return None
    k = len(tweets) - 1
    while k > 0 and tweets[k - 1].withheld:
        k -= 1
    first = tweets[k]
    return WithholdingEvent(account_id=timeline.account_id, t_i=first.day, timestamp=first.created_at)


def infer_events(timelines: Mapping[int, AccountTimeline]) -> dict[int, WithholdingEvent]:
    events = {}
    for account_id, timeline in timelines.items():
        event = infer_withholding_event(timeline)
        if event is not None:
            events[account_id] = event
    return events


@dataclass(frozen=True, slots=True)
class DailySeries:
    account_id: int
    day: _dt.date
    tweets_posted: int
    retweets_received_total: int
    likes_received_total: int
    follower_count_end_of_day: int
    statuses_count_end_of_day: int


@dataclass
class SeriesFrame:
    """Columnar view of one account's contiguous daily series.

    ``start`` is the day ordinal of the first row; row ``j`` is day ``start + j``.
    """

    account_id: int
    start: int
    tweets: np.ndarray
    retweets: np.ndarray
    likes: np.ndarray
    followers: np.ndarray
    statuses: np.ndarray

    def __len__(self) -> int:
        return len(self.tweets)

    @property
    def end(self) -> int:
        return self.start + len(self.tweets) - 1

    @property
    def first_day(self) -> _dt.date:
        return ordinal_day(self.start)

    @property
    def last_day(self) -> _dt.date:
        return ordinal_day(self.end)

    def rows(self) -> list[DailySeries]:
        return [
            DailySeries(
                account_id=self.account_id,
                day=ordinal_day(self.start + j),
                tweets_posted=int(self.tweets[j]),
                retweets_received_total=int(self.retweets[j]),
                likes_received_total=int(self.likes[j]),
                follower_count_end_of_day=int(self.followers[j]),
                statuses_count_end_of_day=int(self.statuses[j]),
            )
            for j in range(len(self))
        ]

    @classmethod
    def from_rows(cls, rows: list[DailySeries]) -> "SeriesFrame":
        if not rows:
            raise EmptyTimeline("empty daily series")
        start = day_ordinal(rows[0].day)
        for j, row in enumerate(rows):
            if day_ordinal(row.day) != start + j:
                raise ValueError("daily series is not contiguous")
        col = lambda name: np.array([getattr(r, name) for r in rows], dtype=np.int64)
        return cls(
            account_id=rows[0].account_id,
            start=start,
            tweets=col("tweets_posted"),
            retweets=col("retweets_received_total"),
            likes=col("likes_received_total"),
            followers=col("follower_count_end_of_day"),
            statuses=col("statuses_count_end_of_day"),
        )


def series_frame(timeline: AccountTimeline) -> SeriesFrame:
    """Build the contiguous daily series of one timeline in columnar form.

    Engagement is summed over tweets posted that day. Follower and status
    counts are the last snapshot of the day, carried forward over gap days.
    """
    if not timeline.tweets:
        raise EmptyTimeline("timeline has no tweets")
    n = len(timeline.tweets)
    days = np.empty(n, dtype=np.int64)
    rts = np.empty(n, dtype=np.int64)
    likes = np.empty(n, dtype=np.int64)
    followers = np.empty(n, dtype=np.int64)
    statuses = np.empty(n, dtype=np.int64)
    for j, t in enumerate(timeline.tweets):
        days[j] = t.created_at // 86400
        rts[j] = t.retweet_count
        likes[j] = t.like_count
        followers[j] = t.follower_count_at_post
        statuses[j] = t.statuses_count_at_post
    start = int(days[0])
    idx = days - start
    length = int(idx[-1]) + 1
    out = SeriesFrame(
        account_id=timeline.account_id,
        start=start,
        tweets=np.bincount(idx, minlength=length).astype(np.int64),
        retweets=np.bincount(idx, weights=rts, minlength=length).astype(np.int64),
        likes=np.bincount(idx, weights=likes, minlength=length).astype(np.int64),
        followers=np.zeros(length, dtype=np.int64),
        statuses=np.zeros(length, dtype=np.int64),
    )
    # tweets are time-sorted, so the last write per day is the end-of-day snapshot
    is_last = np.append(idx[1:] != idx[:-1], True)
    observed = np.zeros(length, dtype=bool)
    out.followers[idx[is_last]] = followers[is_last]
    out.statuses[idx[is_last]] = statuses[is_last]
    observed[idx] = True
    last = np.maximum.accumulate(np.where(observed, np.arange(length), 0))
    out.followers = out.followers[last]
    out.statuses = out.statuses[last]
    return out


def build_daily_series(timeline: AccountTimeline) -> list[DailySeries]:
    return series_frame(timeline).rows()


@dataclass(frozen=True, slots=True)
class CohortLabelRecord:
    account_id: int
    label: int


def build_classification_cohort(
    timelines: Mapping[int, AccountTimeline],
    events: Mapping[int, WithholdingEvent],
    min_own_tweets: int = 1,
) -> list[CohortLabelRecord]:
    """Withheld accounts (label 1) plus similar-interest negatives (label 0).

    A negative candidate has no withholding event, retweeted at least one
    withheld account of this store, and posted ``min_own_tweets`` or more
    non-retweet tweets. Retweet targets are resolved within the store only.
    """
    withheld = set(events)
    cohort = []
    for account_id in sorted(timelines):
        if account_id in withheld:
            cohort.append(CohortLabelRecord(account_id, 1))
            continue
        tweets = timelines[account_id].tweets
        own = sum(1 for t in tweets if not t.is_retweet)
        if own < min_own_tweets:
            continue
        if any(t.is_retweet and t.retweeted_account_id in withheld for t in tweets):
            cohort.append(CohortLabelRecord(account_id, 0))
    return cohort


# -- on-disk store -------------------------------------------------------------

STORE_MAGIC = b"TWSTORE\0"
STORE_VERSION = 1
_TWEET_COLUMNS = (
    "tweet_id", "account_id", "created_at", "text", "retweet_count", "like_count",
    "follower_count_at_post", "friend_count_at_post", "statuses_count_at_post",
    "withheld_in", "is_retweet", "retweeted_account_id",
)


@dataclass
class Store:
    timelines: Timelines
    profiles: dict[int, AccountProfile] = field(default_factory=dict)
    _events: dict[int, WithholdingEvent] | None = field(default=None, repr=False)

    @property
    def events(self) -> dict[int, WithholdingEvent]:
        if self._events is None:
            self._events = infer_events(self.timelines)
        return self._events

    @property
    def n_records(self) -> int:
        return sum(len(t) for t in self.timelines.values())

    def manifest(self) -> dict[str, int]:
        return {
            "format_version": STORE_VERSION,
            "records": self.n_records,
            "accounts": len(self.timelines),
            "withheld_events": len(self.events),
            "profiles": len(self.profiles),
            "duplicates_dropped": self.timelines.duplicates,
        }


def save_store(store: Store, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tweets = [
        [getattr(t, c) for c in _TWEET_COLUMNS]
        for timeline in store.timelines.values()
        for t in timeline.tweets
    ]
    profiles = [
        [p.account_id, p.screen_name, p.display_name, p.description]
        for p in store.profiles.values()
    ]
    payload = json.dumps(
        {"columns": _TWEET_COLUMNS, "tweets": tweets, "profiles": profiles,
         "duplicates": store.timelines.duplicates},
        ensure_ascii=False,
    ).encode("utf-8")
    blob = STORE_MAGIC + struct.pack("<I", STORE_VERSION) + zlib.compress(payload, 6)
    tmp = directory / "timelines.bin.tmp"
    tmp.write_bytes(blob)
    os.replace(tmp, directory / "timelines.bin")
    lines = [f"{k}={v}" for k, v in store.manifest().items()]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def load_store(directory) -> Store:
    path = Path(directory) / "timelines.bin"
    if not path.is_file():
        raise FileNotFoundError(f"no store at {directory}")
    blob = path.read_bytes()
    if blob[:8] != STORE_MAGIC:
        raise CorruptInput(f"{path} is not a timeline store")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != STORE_VERSION:
        raise CorruptInput(f"unsupported store version {version}")
    try:
        payload = json.loads(zlib.decompress(blob[12:]).decode("utf-8"))
    except (zlib.error, ValueError) as exc:
        raise CorruptInput(f"{path}: {exc}") from None
    columns = payload["columns"]
    records = []
    for row in payload["tweets"]:
        kw = dict(zip(columns, row))
        kw["withheld_in"] = tuple(kw["withheld_in"])
        records.append(TweetRecord(**kw))
    timelines = build_timelines(records)
    timelines.duplicates = payload.get("duplicates", 0)
    profiles = {
        row[0]: AccountProfile(account_id=row[0], screen_name=row[1], display_name=row[2], description=row[3])
        for row in payload["profiles"]
    }
    return Store(timelines=timelines, profiles=profiles)


def ingest_jsonl(path) -> tuple[Store, JsonlReader]:
    reader = parse_jsonl_stream(path)
    timelines = build_timelines(reader)
    return Store(timelines=timelines, profiles=dict(sorted(reader.profiles.items()))), reader


__all__ = [
    "CohortLabelRecord", "DailySeries", "JsonlReader", "SeriesFrame", "Store", "Timelines",
    "build_classification_cohort", "build_daily_series", "build_timelines", "infer_events",
    "infer_withholding_event", "ingest_jsonl", "load_store", "parse_jsonl_stream",
    "record_to_raw", "save_store", "series_frame", "write_jsonl",
]
