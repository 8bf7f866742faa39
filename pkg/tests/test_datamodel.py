import datetime as dt

import pytest
from hypothesis import given, strategies as st

from twcensor.datamodel import (
    AccountProfile,
    parse_timestamp,
    utc_day,
    validate_timeline,
    validate_tweet_record,
)
from twcensor.errors import BadCount, BadTimestamp, EmptyTimeline, MissingField, MixedAccounts

from conftest import tweet

RAW = {
    "tweet_id": 7,
    "account_id": 3,
    "created_at": "2021-03-04T05:06:07Z",
    "text": "merhaba",
    "retweet_count": 2,
    "like_count": 5,
    "follower_count_at_post": 100,
    "friend_count_at_post": 10,
    "statuses_count_at_post": 40,
    "withheld_in_countries": ["TR"],
}


def test_full_record_is_withheld():
    rec = validate_tweet_record(RAW)
    assert rec.withheld and rec.withheld_in == ("TR",)
    assert rec.defaulted == ()
    assert rec.day == dt.date(2021, 3, 4)
    assert rec.meta_vector() == [2, 5, 100, 10, 40]


def test_missing_created_at():
    raw = dict(RAW)
    del raw["created_at"]
    with pytest.raises(MissingField):
        validate_tweet_record(raw)


def test_negative_count_rejected():
    with pytest.raises(BadCount):
        validate_tweet_record({**RAW, "retweet_count": -1})


def test_missing_counts_default_to_zero():
    raw = {k: RAW[k] for k in ("tweet_id", "account_id", "created_at", "text")}
    rec = validate_tweet_record(raw)
    assert rec.retweet_count == 0 and rec.like_count == 0
    assert "retweet_count" in rec.defaulted and "like_count" in rec.defaulted
    assert not rec.withheld


def test_bad_timestamp():
    with pytest.raises(BadTimestamp):
        validate_tweet_record({**RAW, "created_at": "yesterday-ish"})


@pytest.mark.parametrize("value, expected", [
    ("2021-03-04T05:06:07Z", 1614834367),
    ("Thu Mar 04 05:06:07 +0000 2021", 1614834367),
    (1614834367, 1614834367),
    ("2021-03-04T08:06:07+03:00", 1614834367),
])
def test_timestamp_formats(value, expected):
    assert parse_timestamp(value) == expected


def test_utc_day_boundary():
    assert utc_day(1614816000 - 1) == dt.date(2021, 3, 3)
    assert utc_day(1614816000) == dt.date(2021, 3, 4)


def test_timeline_sorted():
    tl = validate_timeline([tweet(3, day=2), tweet(1, day=0), tweet(2, day=1)])
    assert [t.tweet_id for t in tl.tweets] == [1, 2, 3]
    assert tl.n_tweets == 3


def test_empty_timeline():
    with pytest.raises(EmptyTimeline):
        validate_timeline([])


def test_same_timestamp_tiebreak():
    tl = validate_timeline([tweet(9, sec=100), tweet(4, sec=100)])
    assert [t.tweet_id for t in tl.tweets] == [4, 9]


def test_mixed_accounts():
    with pytest.raises(MixedAccounts):
        validate_timeline([tweet(1, account=1), tweet(2, account=2)])


def test_profile_needs_screen_name():
    with pytest.raises(Exception):
        AccountProfile(1, "", "x", "y")


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 86399)), min_size=1, max_size=40, unique=True),
       st.randoms())
def test_sort_and_idempotence(stamps, rnd):
    tweets = [tweet(i + 1, day=d, sec=s) for i, (d, s) in enumerate(stamps)]
    rnd.shuffle(tweets)
    tl = validate_timeline(tweets)
    keys = [(t.created_at, t.tweet_id) for t in tl.tweets]
    assert keys == sorted(keys)
    assert validate_timeline(tl.tweets) == tl
