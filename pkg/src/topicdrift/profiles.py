"""Per-member semantic profiles and the deviation rows the estimators consume.

A member's profile at year t is the share of their indexed papers (published
up to and including t) falling on each topic. Members with no indexed papers
carry the trivial profile; they are excluded from fitting but still dilute
their neighbors' averages.

"Treatable" members published in at least two distinct years; "semantically
treatable" members additionally have indexed papers in at least two distinct
years, which is what makes a profile change observable at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol

import numpy as np

from .core import InterestProfile, IsolatedMemberError, SocialGraph, WeightedInterestGraph, mean_profile
from .ingest import CorpusEvent, GraphSeries
from .lexicon import TopicLexicon

__all__ = [
    "TreatabilityRecord",
    "ProfileSeries",
    "build_profiles",
    "neighbor_average",
    "DeviationGroup",
    "Deviations",
    "compute_deviations",
    "write_profile_dump",
]


@dataclass(frozen=True)
class TreatabilityRecord:
    member: str
    treatable: bool
    semantically_treatable: bool
    active_years: tuple[int, ...]
    indexed_years: tuple[int, ...]


class ProfileSource(Protocol):
    """What compute_deviations needs from a profile container."""

    n_topics: int

    def members(self) -> Iterable[str]: ...

    def profile(self, member: str, year: int) -> InterestProfile: ...

    def fit_members(self) -> Iterable[str]: ...

    def first_profile_year(self, member: str) -> int | None: ...


class ProfileSeries:
    """Cumulative (member, year) topic counts built from an indexed event log."""

    def __init__(self, n_topics: int, window: tuple[int, int]):
        self.n_topics = n_topics
        self.from_year, self.to_year = window
        # per member: year -> {topic -> new occurrences that year}
        self._deltas: dict[str, dict[int, dict[int, int]]] = {}
        self._active_years: dict[str, set[int]] = {}
        self._indexed_years: dict[str, set[int]] = {}
        # per member: number of authored events (the success index)
        self.paper_counts: dict[str, int] = {}

    def add_event(self, event: CorpusEvent, topic_ids: Iterable[int]) -> None:
        ids = set(topic_ids)
        for author in set(event.authors):
            self._active_years.setdefault(author, set()).add(event.year)
            self.paper_counts[author] = self.paper_counts.get(author, 0) + 1
            if not ids:
                continue
            self._indexed_years.setdefault(author, set()).add(event.year)
            bucket = self._deltas.setdefault(author, {}).setdefault(event.year, {})
            for t in ids:
                bucket[t] = bucket.get(t, 0) + 1

    def members(self):
        return self._active_years.keys()

    def counts(self, member: str, year: int) -> dict[int, int]:
        """Cumulative (paper, topic) occurrence counts through the given year."""
        acc: dict[int, int] = {}
        for y, bucket in self._deltas.get(member, {}).items():
            if y <= year:
                for t, c in bucket.items():
                    acc[t] = acc.get(t, 0) + c
        return acc

    def profile(self, member: str, year: int) -> InterestProfile:
        return InterestProfile.from_counts(self.counts(member, year), self.n_topics)

    def first_profile_year(self, member: str) -> int | None:
        years = self._indexed_years.get(member)
        return min(years) if years else None

    def treatability(self, member: str) -> TreatabilityRecord:
        active = tuple(sorted(self._active_years.get(member, ())))
        indexed = tuple(sorted(self._indexed_years.get(member, ())))
        treatable = len(active) >= 2
        return TreatabilityRecord(
            member=member,
            treatable=treatable,
            semantically_treatable=treatable and len(indexed) >= 2,
            active_years=active,
            indexed_years=indexed,
        )

    def treatable_members(self) -> list[str]:
        return sorted(m for m in self.members() if len(self._active_years[m]) >= 2)

    def fit_members(self) -> list[str]:
        """Members eligible for fitting: semantically treatable ones."""
        return sorted(m for m in self.members() if self.treatability(m).semantically_treatable)

    def wig(self, year: int) -> WeightedInterestGraph:
        rows = {m: self.profile(m, year) for m in self.members()}
        return WeightedInterestGraph(rows, year, self.n_topics)

    def iter_year_deltas(self, member_filter: set[str] | None = None) -> Iterator[tuple[int, dict[str, dict[int, int]]]]:
        """Yield (year, {member -> topic delta counts}) in ascending year order."""
        per_year: dict[int, dict[str, dict[int, int]]] = {}
        for member, by_year in self._deltas.items():
            if member_filter is not None and member not in member_filter:
                continue
            for year, bucket in by_year.items():
                per_year.setdefault(year, {})[member] = bucket
        for year in sorted(per_year):
            yield year, per_year[year]


def build_profiles(
    events: Iterable[CorpusEvent],
    lexicon: TopicLexicon,
    window: tuple[int, int] | None = None,
) -> ProfileSeries:
    """Fold an indexed event log into cumulative per-member profiles."""
    events = list(events) if window is None else events
    if window is None:
        years = [e.year for e in events]
        window = (min(years), max(years)) if years else (0, 0)
    series = ProfileSeries(lexicon.n_topics, window)
    name_to_id = {t.canonical: t.id for t in lexicon.topics}
    for event in events:
        series.add_event(event, (name_to_id[t] for t in event.topics))
    return series


def neighbor_average(member: str, year: int, graph: SocialGraph, profiles) -> InterestProfile:
    """Average profile of the member's neighbors, trivial profiles included."""
    if member not in graph:
        raise IsolatedMemberError(f"{member!r} not in the graph at year {year}")
    neighbors = graph.neighbors(member)
    if not neighbors:
        raise IsolatedMemberError(f"{member!r} has no neighbors at year {year}")
    return mean_profile((profiles.profile(n, year) for n in neighbors), profiles.n_topics)


@dataclass
class DeviationGroup:
    """All deviation rows of one member for one consecutive-year pair t -> t+1.

    Arrays are aligned on ``topics`` (the union support of the member at t and
    t+1, the neighbors at t, and the trend profile at t). ``d_neigh`` is None
    when the member had no neighbors at t; such rows enter the trend-only fit
    but not the neighbor-aware ones.
    """

    member: str
    year: int
    topics: np.ndarray
    d_xi: np.ndarray
    d_trend: np.ndarray
    d_neigh: np.ndarray | None
    n_neighbors: int


class Deviations:
    """A re-iterable collection of deviation groups.

    Backed either by a generator factory (constant memory, recomputed per
    pass) or by a materialized list.
    """

    def __init__(self, factory: Callable[[], Iterator[DeviationGroup]], n_topics: int):
        self._factory = factory
        self.n_topics = n_topics

    @classmethod
    def from_groups(cls, groups: Iterable[DeviationGroup], n_topics: int) -> "Deviations":
        stored = list(groups)
        return cls(lambda: iter(stored), n_topics)

    def groups(self) -> Iterator[DeviationGroup]:
        return self._factory()

    def __iter__(self) -> Iterator[DeviationGroup]:
        return self._factory()

    def materialize(self) -> "Deviations":
        return Deviations.from_groups(list(self), self.n_topics)

    def map_groups(self, transform: Callable[[DeviationGroup], DeviationGroup]) -> "Deviations":
        factory = self._factory
        return Deviations(lambda: (transform(g) for g in factory()), self.n_topics)

    def to_jsonl(self, destination) -> int:
        own = isinstance(destination, (str, Path))
        fp = open(destination, "w", encoding="utf-8") if own else destination
        count = 0
        try:
            for g in self:
                rec = {
                    "member": g.member,
                    "year": g.year,
                    "topics": [int(t) for t in g.topics],
                    "d_xi": [float(v) for v in g.d_xi],
                    "d_trend": [float(v) for v in g.d_trend],
                    "d_neigh": None if g.d_neigh is None else [float(v) for v in g.d_neigh],
                    "n_neighbors": g.n_neighbors,
                }
                fp.write(json.dumps(rec, ensure_ascii=False))
                fp.write("\n")
                count += 1
        finally:
            if own:
                fp.close()
        return count


def _shares(counts: dict[int, int]) -> dict[int, float]:
    total = sum(counts.values())
    if total == 0:
        return {}
    return {t: c / total for t, c in counts.items()}


def compute_deviations(profiles, trends, graphs, window: tuple[int, int] | None = None) -> Deviations:
    """Observed profile changes and their trend/neighbor regressors.

    For each fit-eligible member and each consecutive-year pair t -> t+1
    inside the window, emits the change of the member's profile, its deviation
    from the trend profile at t, and (when the member has neighbors at t) its
    deviation from the neighbors' average profile at t.

    ``profiles`` is any ProfileSource, ``trends`` anything with a
    ``profile(year)`` method returning the source profile or None, and
    ``graphs`` a GraphSeries, a {year: SocialGraph} mapping, or a single
    static SocialGraph.
    """
    n_topics = profiles.n_topics

    if window is not None:
        from_year, to_year = window
    else:
        from_year = getattr(profiles, "from_year")
        to_year = getattr(profiles, "to_year")

    if isinstance(graphs, SocialGraph):
        graph_at = lambda year: graphs
    elif isinstance(graphs, GraphSeries):
        graph_at = graphs.at
    else:
        graph_at = lambda year: graphs[year]

    def generate() -> Iterator[DeviationGroup]:
        eligible = sorted(profiles.fit_members())
        starts = {m: profiles.first_profile_year(m) for m in eligible}
        for t in range(from_year, to_year):
            source = trends.profile(t)
            if source is None:
                continue
            graph = graph_at(t)
            source_w = source.weights
            # profiles at t are requested repeatedly (once per co-authorship)
            cache: dict[str, InterestProfile] = {}

            def profile_at_t(m: str) -> InterestProfile:
                prof = cache.get(m)
                if prof is None:
                    prof = cache[m] = profiles.profile(m, t)
                return prof

            for member in eligible:
                start = starts[member]
                if start is None or t < start:
                    continue
                prof_t = profile_at_t(member)
                if prof_t.is_trivial():
                    continue
                prof_t1 = profiles.profile(member, t + 1)
                if member in graph and graph.degree(member) > 0:
                    neighbors = graph.neighbors(member)
                    neigh = mean_profile(
                        (profile_at_t(n) for n in neighbors), n_topics
                    )
                    n_neighbors = len(neighbors)
                else:
                    neigh = None
                    n_neighbors = 0
                support = set(prof_t.weights) | set(prof_t1.weights) | set(source_w)
                if neigh is not None:
                    support |= set(neigh.weights)
                topics = np.fromiter(sorted(support), dtype=np.intp, count=len(support))
                xi_t = np.array([prof_t.weights.get(int(k), 0.0) for k in topics])
                xi_t1 = np.array([prof_t1.weights.get(int(k), 0.0) for k in topics])
                d_trend = np.array([source_w.get(int(k), 0.0) for k in topics]) - xi_t
                d_neigh = None
                if neigh is not None:
                    d_neigh = np.array([neigh.weights.get(int(k), 0.0) for k in topics]) - xi_t
                yield DeviationGroup(
                    member=member,
                    year=t,
                    topics=topics,
                    d_xi=xi_t1 - xi_t,
                    d_trend=d_trend,
                    d_neigh=d_neigh,
                    n_neighbors=n_neighbors,
                )

    return Deviations(generate, n_topics)


def write_profile_dump(profiles, years: Iterable[int], destination) -> int:
    """Newline-delimited JSON profile dump: {member, year, shares}."""
    own = isinstance(destination, (str, Path))
    fp = open(destination, "w", encoding="utf-8") if own else destination
    count = 0
    try:
        for member in sorted(profiles.members()):
            for year in years:
                prof = profiles.profile(member, year)
                if prof.is_trivial():
                    continue
                rec = {
                    "member": member,
                    "year": year,
                    "shares": {str(k): v for k, v in sorted(prof.weights.items())},
                }
                fp.write(json.dumps(rec, ensure_ascii=False))
                fp.write("\n")
                count += 1
    finally:
        if own:
            fp.close()
    return count
