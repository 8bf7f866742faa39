"""Seeded synthetic tweet archives with known ground truth.

Two generators: an impact study (withheld accounts whose engagement and
follower growth drop by known factors after the withholding day, plus a
pool of never-withheld accounts for control matching) and a classification
corpus (withheld accounts and similar-interest retweeters, with an embedding
store whose vectors carry a tunable class signal).
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

import numpy as np

from .datamodel import AccountProfile, TweetRecord, day_ordinal, ordinal_day
from .encoder import EMBED_DIM, EmbeddingStore, hash_vector, profile_text, signal_injection_encode, text_key
from .ingest import Timelines, build_classification_cohort, build_timelines, infer_events

_WORDS = ("news", "today", "state", "people", "report", "city", "war", "media", "vote", "border",
          "video", "live", "update", "world", "truth", "channel", "official", "breaking", "story", "photo")


@dataclass
class SyntheticImpactStudy:
    records: list[TweetRecord]
    withheld_ids: list[int]
    pool_ids: list[int]
    true_t: dict[int, _dt.date]


def _account_tweets(rng, account_id, first_day, n_days, posts_per_day, rt_level, like_level,
                    followers0, daily_gain, noise, tweet_id0, change_day=None, engagement_factor=1.0,
                    gain_factor=1.0, withheld_from=None):
    """Tweets of one account over ``n_days`` days starting at ordinal ``first_day``."""
    days = np.arange(n_days)
    gains = daily_gain * rng.lognormal(0.0, noise, n_days)
    if change_day is not None:
        gains = np.where(days >= change_day, gains * gain_factor, gains)
    followers = followers0 + np.cumsum(gains)
    counts = rng.poisson(posts_per_day, n_days)
    if change_day is not None and counts[change_day] == 0:
        counts[change_day] = 1
    statuses = 1000 + np.cumsum(counts)
    out = []
    tid = tweet_id0
    for d in np.flatnonzero(counts):
        factor = engagement_factor if change_day is not None and d >= change_day else 1.0
        k = counts[d]
        rts = np.rint(rt_level * factor * rng.lognormal(0.0, noise, k)).astype(int)
        likes = np.rint(like_level * factor * rng.lognormal(0.0, noise, k)).astype(int)
        secs = np.sort(rng.integers(0, 86400, k))
        withheld = ("TR",) if withheld_from is not None and d >= withheld_from else ()
        for j in range(k):
            out.append(TweetRecord(
                tweet_id=tid,
                account_id=account_id,
                created_at=int((first_day + d) * 86400 + secs[j]),
                text=f"account {account_id} tweet {tid}",
                retweet_count=int(rts[j]),
                like_count=int(likes[j]),
                follower_count_at_post=int(followers[d]),
                friend_count_at_post=500,
                statuses_count_at_post=int(statuses[d]),
                withheld_in=withheld,
            ))
            tid += 1
    return out, tid


def impact_study(
    n_withheld: int = 200,
    n_pool: int | None = None,
    engagement_drop: float = 0.25,
    follower_gain_drop: float = 0.90,
    noise: float = 0.10,
    span_days: int = 320,
    posts_per_day: float = 2.0,
    seed: int = 0,
    start: _dt.date = _dt.date(2019, 1, 1),
) -> SyntheticImpactStudy:
    """Withheld accounts with known post-event drops plus a stationary control pool.

    Each withheld account is active for ``span_days`` days with its event
    in the middle. Engagement per tweet is multiplied by
    ``1 - engagement_drop`` and daily follower gains by
    ``1 - follower_gain_drop`` from the event day on; posting rate is
    unchanged. Noise is multiplicative log-normal with sigma ``noise``.
    """
    rng = np.random.default_rng(seed)
    n_pool = 2 * n_withheld if n_pool is None else n_pool
    base = day_ordinal(start)
    records: list[TweetRecord] = []
    true_t = {}
    tid = 1
    withheld_ids, pool_ids = [], []
    for j in range(n_withheld + n_pool):
        account_id = 1000 + j
        treated = j < n_withheld
        first = base + int(rng.integers(0, 365))
        followers0 = float(rng.lognormal(np.log(20000), 0.8))
        kwargs = dict(
            posts_per_day=posts_per_day,
            rt_level=float(rng.lognormal(np.log(10), 0.4)),
            like_level=float(rng.lognormal(np.log(12), 0.4)),
            followers0=followers0,
            daily_gain=followers0 * float(rng.uniform(0.002, 0.006)),
            noise=noise,
        )
        if treated:
            change = span_days // 2
            recs, tid = _account_tweets(rng, account_id, first, span_days, tweet_id0=tid, change_day=change,
                                        engagement_factor=1 - engagement_drop,
                                        gain_factor=1 - follower_gain_drop, withheld_from=change, **kwargs)
            true_t[account_id] = ordinal_day(first + change)
            withheld_ids.append(account_id)
        else:
            recs, tid = _account_tweets(rng, account_id, first, span_days, tweet_id0=tid, **kwargs)
            pool_ids.append(account_id)
        records.extend(recs)
    return SyntheticImpactStudy(records, withheld_ids, pool_ids, true_t)


@dataclass
class SyntheticCorpus:
    timelines: Timelines
    profiles: dict[int, AccountProfile]
    store: EmbeddingStore
    direction: np.ndarray

    @property
    def records(self) -> list[TweetRecord]:
        return [t for tl in self.timelines.values() for t in tl.tweets]

    def cohort(self):
        return build_classification_cohort(self.timelines, infer_events(self.timelines))


def classification_corpus(
    n_users: int = 300,
    positive_fraction: float = 0.5,
    min_tweets: int = 5,
    max_tweets: int = 30,
    strength: float = 2.0,
    meta_shift: float = 0.0,
    embed_dim: int = EMBED_DIM,
    seed: int = 0,
    start: _dt.date = _dt.date(2020, 1, 1),
) -> SyntheticCorpus:
    """Labelled accounts whose tweet embeddings carry a class signal of ``strength``.

    Positive accounts have every tweet withheld. Negative accounts open with
    a retweet of a random positive account, which places them in the
    similar-interest pool. Tweet vectors are hash vectors pushed towards
    ``+direction`` (positives) or ``-direction`` (negatives). ``meta_shift``
    multiplies positive accounts' retweet and like counts by
    ``1 + meta_shift`` so metadata alone can separate the classes. Profile
    vectors carry no signal.
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(embed_dim)
    direction /= np.linalg.norm(direction)
    n_pos = int(round(n_users * positive_fraction))
    ids = [5000 + j for j in range(n_users)]
    positives = ids[:n_pos]
    base = day_ordinal(start)
    records: list[TweetRecord] = []
    vectors: dict[int, np.ndarray] = {}
    profiles = {}
    tid = 10_000_000
    for j, account_id in enumerate(ids):
        label = 1 if j < n_pos else 0
        sign = 1.0 if label else -1.0
        n = int(rng.integers(min_tweets, max_tweets + 1))
        days = np.sort(rng.integers(0, 200, n))
        followers = int(rng.lognormal(np.log(3000), 1.0))
        level = 1.0 + (meta_shift if label else 0.0)
        screen = f"user{account_id}"
        for k in range(n):
            is_rt = (not label) and k == 0
            words = " ".join(rng.choice(_WORDS, 6))
            target = int(rng.choice(positives)) if is_rt and positives else None
            text = (f"RT @user{target}: {words} #{tid}" if is_rt else f"{words} #{tid}")
            records.append(TweetRecord(
                tweet_id=tid,
                account_id=account_id,
                created_at=int((base + days[k]) * 86400 + rng.integers(0, 86400)),
                text=text,
                retweet_count=int(rng.poisson(5 * level)),
                like_count=int(rng.poisson(10 * level)),
                follower_count_at_post=followers + k,
                friend_count_at_post=int(rng.integers(50, 2000)),
                statuses_count_at_post=100 + k,
                withheld_in=("TR",) if label else (),
                is_retweet=is_rt,
                retweeted_account_id=target,
            ))
            vectors[text_key(text)] = signal_injection_encode(text, sign * direction, strength, embed_dim, seed)
            tid += 1
        prof = AccountProfile(account_id, screen, f"User {account_id}", " ".join(rng.choice(_WORDS, 4)))
        profiles[account_id] = prof
        vectors[text_key(profile_text(prof))] = hash_vector(profile_text(prof), embed_dim, seed)
    store = EmbeddingStore(dim=embed_dim, entries=vectors,
                           comment=f"synthetic signal-injection store, strength={strength}, seed={seed}")
    return SyntheticCorpus(build_timelines(records), profiles, store, direction)
