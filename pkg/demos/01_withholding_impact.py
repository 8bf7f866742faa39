"""
Does withholding hurt an account?
=================================

We build a synthetic archive where we know the answer: 200 accounts lose a
quarter of their engagement and nine tenths of their follower growth on the
day they get withheld, and 400 comparable accounts carry on as before. Then
we run the pre/post pipeline and see what it recovers.
"""

# %%
# A synthetic archive
# -------------------
# Every account posts about twice a day for 320 days. Withheld accounts
# switch regime halfway through; the rest are stationary.
import numpy as np

from twcensor import synthetic
from twcensor.impact import DEFAULT_WINDOWS, relative_growth, run_study
from twcensor.ingest import build_timelines, infer_events

study = synthetic.impact_study(n_withheld=200, seed=0)
timelines = build_timelines(study.records)
print(f"{len(study.records)} tweets from {len(timelines)} accounts")

# %%
# Recovering the withholding day
# ------------------------------
# The event is the start of the trailing run of withheld tweets. Because the
# generator forces a tweet on the switch day, inference should be exact.
events = infer_events(timelines)
hits = sum(events[a].t_i == t for a, t in study.true_t.items())
print(f"withholding day recovered for {hits}/{len(study.true_t)} accounts")

# %%
# Pre versus post
# ---------------
# For each window W the pre interval holds W days and the post interval
# W + 1. Accounts need two tweets on both sides at the first window; that
# cohort is then frozen.
result = run_study(timelines, events, DEFAULT_WINDOWS, with_controls=True, seed=0)
print(f"cohort {len(result.withheld.cohort)}, matched controls {len(result.matches)}")
print()
print(f"{'W':>4} {'metric':<18} {'group':<9} {'pre':>9} {'post':>9} {'change':>8} {'p':>10}")
for t in result.tests:
    if t.W in (30, 90, 150):
        print(f"{t.W:>4} {t.metric:<18} {t.group:<9} {t.pre_median:>9.2f} {t.post_median:>9.2f} "
              f"{t.relative_change:>+8.1%} {t.p_value:>10.2e}")

# %%
# The withheld rows show the injected drops; posting rate does not move.
# Control rows should mostly be non-significant, but with seven windows
# and two engagement metrics a stray p just under 0.05 is expected now and
# then: each of those fourteen tests has a 5% false-positive rate.
n_sig = sum(t.significant for t in result.control.tests if t.metric in ("med_retweets", "med_likes"))
print(f"\nsignificant control engagement tests: {n_sig} of {2 * len(DEFAULT_WINDOWS)}")

# %%
# Relative follower growth
# ------------------------
# Growth per day divided by audience size, over 90 days either side.
rows = [relative_growth(timelines[a], events[a], horizon=90) for a in result.withheld.cohort]
pre = np.array([r.pre_rate for r in rows])
post = np.array([r.post_rate for r in rows])
print(f"median daily relative growth: before {np.median(pre):.5f}, after {np.median(post):.5f}")
