"""Withheld-account analysis on Twitter archives.

Two halves: a pre/post impact study of withholding on engagement and
follower growth (``impact``, ``stats``), and a censorship classifier over
precomputed tweet embeddings (``censornet``, ``trainer``) built on a small
numpy layer library (``nn``).
"""

from .datamodel import AccountProfile, AccountTimeline, TweetRecord, WithholdingEvent
from .errors import TwCensorError

__version__ = "0.1.0"

__all__ = ["AccountProfile", "AccountTimeline", "TweetRecord", "TwCensorError", "WithholdingEvent", "__version__"]
