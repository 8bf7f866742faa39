"""Canonical record types shared by the impact and classification pipelines.

All timestamps are normalised to integer UTC seconds. Calendar days are UTC
days and are represented as :class:`datetime.date`.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import BadCount, BadTimestamp, EmptyTimeline, MissingField, MixedAccounts

UTC = _dt.timezone.utc
_EPOCH = _dt.date(1970, 1, 1)

REQUIRED_FIELDS = ("tweet_id", "account_id", "created_at", "text")

# canonical name -> accepted raw keys, first match wins
COUNT_FIELDS = {
    "retweet_count": ("retweet_count",),
    "like_count": ("like_count", "favorite_count"),
    "follower_count_at_post": ("follower_count", "follower_count_at_post", "followers_count"),
    "friend_count_at_post": ("friend_count", "friend_count_at_post", "friends_count"),
    "statuses_count_at_post": ("statuses_count", "statuses_count_at_post"),
}

_TWITTER_CLASSIC = "%a %b %d %H:%M:%S %z %Y"


def parse_timestamp(value: Any) -> int:
    """Parse ISO-8601, the classic Twitter format, or epoch seconds into UTC seconds."""
    if isinstance(value, bool):
        raise BadTimestamp(f"unparseable timestamp {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, _dt.datetime):
        moment = value
    elif isinstance(value, str):
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            moment = _dt.datetime.fromisoformat(text)
        except ValueError:
            try:
                moment = _dt.datetime.strptime(text, _TWITTER_CLASSIC)
            except ValueError:
                raise BadTimestamp(f"unparseable timestamp {value!r}") from None
    else:
        raise BadTimestamp(f"unparseable timestamp {value!r}")
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=UTC)
    return int(moment.timestamp())


def utc_day(ts: int) -> _dt.date:
    return _EPOCH + _dt.timedelta(days=ts // 86400)


def day_ordinal(day: _dt.date) -> int:
    """Days since 1970-01-01."""
    return (day - _EPOCH).days


def ordinal_day(n: int) -> _dt.date:
    return _EPOCH + _dt.timedelta(days=int(n))


@dataclass(frozen=True, slots=True)
class TweetRecord:
    tweet_id: int
    account_id: int
    created_at: int
    text: str
    retweet_count: int = 0
    like_count: int = 0
    follower_count_at_post: int = 0
    friend_count_at_post: int = 0
    statuses_count_at_post: int = 0
    withheld_in: tuple[str, ...] = ()
    is_retweet: bool = False
    retweeted_account_id: int | None = None
    defaulted: tuple[str, ...] = ()

    @property
    def withheld(self) -> bool:
        return bool(self.withheld_in)

    @property
    def day(self) -> _dt.date:
        return utc_day(self.created_at)

    @property
    def datetime(self) -> _dt.datetime:
        return _dt.datetime.fromtimestamp(self.created_at, tz=UTC)

    def meta_vector(self) -> list[int]:
        """Per-tweet metadata in the order the classifier consumes it."""
        return [
            self.retweet_count,
            self.like_count,
            self.follower_count_at_post,
            self.friend_count_at_post,
            self.statuses_count_at_post,
        ]


@dataclass(frozen=True, slots=True)
class AccountProfile:
    account_id: int
    screen_name: str
    display_name: str = ""
    description: str = ""

    def __post_init__(self):
        if not self.screen_name:
            raise MissingField("screen_name must be non-empty")

    @property
    def text(self) -> str:
        return f"{self.screen_name} {self.display_name} {self.description}"


@dataclass(frozen=True)
class AccountTimeline:
    account_id: int
    tweets: tuple[TweetRecord, ...] = field(repr=False)

    @property
    def n_tweets(self) -> int:
        return len(self.tweets)

    def __len__(self) -> int:
        return len(self.tweets)

    @property
    def first_day(self) -> _dt.date:
        return self.tweets[0].day

    @property
    def last_day(self) -> _dt.date:
        return self.tweets[-1].day


@dataclass(frozen=True, slots=True)
class WithholdingEvent:
    account_id: int
    t_i: _dt.date
    timestamp: int
    synthetic: bool = False


def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool):
        raise BadCount(f"{name} must be an integer, got {value!r}")
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise BadCount(f"{name} must be an integer, got {value!r}") from None
    if out != value and not isinstance(value, str):
        raise BadCount(f"{name} must be an integer, got {value!r}")
    return out


def validate_tweet_record(raw: Mapping[str, Any]) -> TweetRecord:
    """Normalise one raw field map into a :class:`TweetRecord`.

    Missing engagement/count fields default to 0 and are listed in
    ``record.defaulted``. Negative counts raise :class:`BadCount`.
    """
    for name in REQUIRED_FIELDS:
        if raw.get(name) is None:
            raise MissingField(f"missing required field {name!r}")
    tweet_id = _as_int(raw["tweet_id"], "tweet_id")
    account_id = _as_int(raw["account_id"], "account_id")
    created_at = parse_timestamp(raw["created_at"])
    text = raw["text"]
    if not isinstance(text, str):
        raise MissingField("text must be a string")

    counts: dict[str, int] = {}
    defaulted = []
    for canonical, aliases in COUNT_FIELDS.items():
        value = next((raw[k] for k in aliases if raw.get(k) is not None), None)
        if value is None:
            counts[canonical] = 0
            defaulted.append(canonical)
            continue
        n = _as_int(value, canonical)
        if n < 0:
            raise BadCount(f"{canonical} must be non-negative, got {n}")
        counts[canonical] = n

    withheld = raw.get("withheld_in_countries", raw.get("withheld_in")) or ()
    if isinstance(withheld, str):
        withheld = [withheld]
    withheld_in = tuple(str(c).upper() for c in withheld)

    rt_account = raw.get("retweeted_account_id")
    return TweetRecord(
        tweet_id=tweet_id,
        account_id=account_id,
        created_at=created_at,
        text=text,
        withheld_in=withheld_in,
        is_retweet=bool(raw.get("is_retweet", False)),
        retweeted_account_id=None if rt_account is None else _as_int(rt_account, "retweeted_account_id"),
        defaulted=tuple(defaulted),
        **counts,
    )


def validate_timeline(tweets: Iterable[TweetRecord]) -> AccountTimeline:
    """Group-check and sort tweets of one account by ``(created_at, tweet_id)``."""
    tweets = list(tweets)
    if not tweets:
        raise EmptyTimeline("timeline has no tweets")
    account_id = tweets[0].account_id
    if any(t.account_id != account_id for t in tweets):
        raise MixedAccounts("tweets belong to more than one account")
    tweets.sort(key=lambda t: (t.created_at, t.tweet_id))
    return AccountTimeline(account_id=account_id, tweets=tuple(tweets))
