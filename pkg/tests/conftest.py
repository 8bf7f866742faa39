import datetime as dt

import numpy as np
import pytest

from twcensor.datamodel import TweetRecord, day_ordinal

DAY = 86400


def tweet(tid, account=1, day=0, sec=43200, withheld=(), rts=0, likes=0, followers=100,
          statuses=10, text=None, is_retweet=False, rt_of=None, start=dt.date(2021, 1, 1)):
    return TweetRecord(
        tweet_id=tid,
        account_id=account,
        created_at=(day_ordinal(start) + day) * DAY + sec,
        text=text if text is not None else f"tweet {tid}",
        retweet_count=rts,
        like_count=likes,
        follower_count_at_post=followers,
        friend_count_at_post=5,
        statuses_count_at_post=statuses,
        withheld_in=tuple(withheld),
        is_retweet=is_retweet,
        retweeted_account_id=rt_of,
    )


@pytest.fixture
def make_tweet():
    return tweet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
