"""Topic trend statistics over the corpus.

Counting is cumulative: an occurrence is one (paper, topic) pair, and the
count at year t covers everything published up to and including t. The trend
profile for a year is the relative frequency of each topic; it estimates the
likelihood of a random member being interested in that topic and acts as the
source term of the diffusion model.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import InterestProfile
from .ingest import CorpusEvent
from .lexicon import TopicLexicon

__all__ = ["TrendSeries", "compute_trends"]


class TrendSeries:
    """Cumulative per-topic occurrence counts with derived yearly statistics."""

    def __init__(self, cumulative: np.ndarray, from_year: int):
        # cumulative: (n_topics, n_years) non-decreasing along axis 1
        self._cum = cumulative
        self.from_year = int(from_year)
        self.n_topics = cumulative.shape[0]

    @property
    def to_year(self) -> int:
        return self.from_year + self._cum.shape[1] - 1

    @property
    def years(self) -> range:
        return range(self.from_year, self.to_year + 1)

    def _col(self, year: int) -> np.ndarray | None:
        if year < self.from_year:
            return None
        idx = min(year, self.to_year) - self.from_year
        return self._cum[:, idx]

    def occurrences(self, topic: int, year: int) -> int:
        col = self._col(year)
        return 0 if col is None else int(col[topic])

    def total(self, year: int) -> int:
        col = self._col(year)
        return 0 if col is None else int(col.sum())

    def topic_count(self, year: int) -> int:
        """Number of distinct topics that occurred by the given year."""
        col = self._col(year)
        return 0 if col is None else int(np.count_nonzero(col))

    def avg_frequency(self, year: int) -> float | None:
        """Mean occurrences per seen topic; None before the first occurrence."""
        n = self.topic_count(year)
        return None if n == 0 else self.total(year) / n

    def support(self, year: int) -> np.ndarray:
        """Topic ids with at least one occurrence by the given year."""
        col = self._col(year)
        if col is None:
            return np.empty(0, dtype=np.intp)
        return np.flatnonzero(col)

    def profile(self, year: int) -> InterestProfile | None:
        """Relative-frequency trend profile; None for years with no occurrences."""
        col = self._col(year)
        if col is None:
            return None
        total = col.sum()
        if total == 0:
            return None
        idx = np.flatnonzero(col)
        return InterestProfile(
            {int(k): float(col[k]) / total for k in idx}, self.n_topics
        )

    def entropy(self, year: int) -> float | None:
        """Shannon entropy of the topic frequencies, an index of dispersion."""
        col = self._col(year)
        if col is None:
            return None
        total = col.sum()
        if total == 0:
            return None
        p = col[col > 0] / total
        return float(-(p * np.log(p)).sum())


def compute_trends(
    events: Iterable[CorpusEvent],
    lexicon: TopicLexicon,
    window: tuple[int, int] | None = None,
) -> TrendSeries:
    """Aggregate indexed events into a TrendSeries.

    Events must already carry topics (see index_events). The window defaults
    to the span of event years actually present.
    """
    per_year: dict[int, dict[int, int]] = {}
    name_to_id = {t.canonical: t.id for t in lexicon.topics}
    seen_years: list[int] = []
    for event in events:
        seen_years.append(event.year)
        if not event.topics:
            continue
        bucket = per_year.setdefault(event.year, {})
        for name in set(event.topics):
            topic_id = name_to_id.get(name)
            if topic_id is None:
                raise KeyError(f"event topic {name!r} not in lexicon")
            bucket[topic_id] = bucket.get(topic_id, 0) + 1
    if window is not None:
        from_year, to_year = window
    elif seen_years:
        from_year, to_year = min(seen_years), max(seen_years)
    else:
        from_year, to_year = 0, 0
    n_years = to_year - from_year + 1
    deltas = np.zeros((lexicon.n_topics, n_years), dtype=np.int64)
    for year, bucket in per_year.items():
        if year < from_year or year > to_year:
            continue
        for topic_id, count in bucket.items():
            deltas[topic_id, year - from_year] += count
    return TrendSeries(np.cumsum(deltas, axis=1), from_year)
