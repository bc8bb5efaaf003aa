"""Core domain types: interest profiles, the co-authorship graph, and the
weighted member-topic graph, plus the small euclidean algebra on profiles.

Profiles are stored sparse (topic index -> weight): the topic set can run to
thousands of entries while a typical member touches only a few dozen. Dense
vectors are materialized only where an inner loop needs them.

All types here are immutable after construction and safe to share across
workers; mutation happens upstream, in the corpus builders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

PROFILE_SUM_TOL = 1e-9


class TopicDimensionError(ValueError):
    """Two profiles built against different topic sets were combined."""


class IsolatedMemberError(LookupError):
    """A neighborhood operation was requested for a member with no neighbors."""


@dataclass(frozen=True)
class Member:
    """A network member. Ids are unique; display names may collide, because
    name ambiguity is real in bibliographic corpora."""

    id: str
    display_name: str


class InterestProfile:
    """Sparse vector of per-topic likelihoods in [0, 1].

    A profile built from shares of interest sums to 1; the all-zero profile is
    legal and means "no indexed publications yet".
    """

    __slots__ = ("weights", "n_topics")

    def __init__(self, weights: Mapping[int, float], n_topics: int):
        self.weights = {int(k): float(v) for k, v in weights.items() if v != 0.0}
        self.n_topics = int(n_topics)

    @classmethod
    def trivial(cls, n_topics: int) -> "InterestProfile":
        return cls({}, n_topics)

    @classmethod
    def from_dense(cls, vec) -> "InterestProfile":
        arr = np.asarray(vec, dtype=float)
        return cls({i: w for i, w in enumerate(arr) if w != 0.0}, arr.shape[0])

    @classmethod
    def from_counts(cls, counts: Mapping[int, float], n_topics: int) -> "InterestProfile":
        """Normalize raw counts into shares; all-zero counts give the trivial profile."""
        total = float(sum(counts.values()))
        if total == 0.0:
            return cls.trivial(n_topics)
        return cls({k: v / total for k, v in counts.items()}, n_topics)

    def weight(self, topic: int) -> float:
        return self.weights.get(topic, 0.0)

    def sum(self) -> float:
        return float(sum(self.weights.values()))

    def is_trivial(self) -> bool:
        return not self.weights

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n_topics)
        for k, v in self.weights.items():
            out[k] = v
        return out

    def topics(self):
        return self.weights.keys()

    def __eq__(self, other) -> bool:
        if not isinstance(other, InterestProfile):
            return NotImplemented
        return self.n_topics == other.n_topics and self.weights == other.weights

    def __hash__(self):
        raise TypeError("InterestProfile is not hashable")

    def __repr__(self) -> str:
        return f"InterestProfile({self.weights!r}, n_topics={self.n_topics})"


def _check_dims(a: InterestProfile, b: InterestProfile) -> None:
    if a.n_topics != b.n_topics:
        raise TopicDimensionError(
            f"profiles indexed against different topic sets ({a.n_topics} vs {b.n_topics})"
        )


def profile_dot(a: InterestProfile, b: InterestProfile) -> float:
    """Scalar product of two profiles over the shared topic set."""
    _check_dims(a, b)
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    return float(sum(v * large.get(k, 0.0) for k, v in small.items()))


def profile_distance_sq(a: InterestProfile, b: InterestProfile) -> float:
    """Quadratic distance between two profiles; smaller means closer interests."""
    _check_dims(a, b)
    total = 0.0
    for k in a.weights.keys() | b.weights.keys():
        d = a.weights.get(k, 0.0) - b.weights.get(k, 0.0)
        total += d * d
    return float(total)


def mean_profile(profiles: Iterable[InterestProfile], n_topics: int) -> InterestProfile:
    """Plain average of profiles, trivial ones included (they pull toward zero)."""
    acc: dict[int, float] = {}
    n = 0
    for p in profiles:
        if p.n_topics != n_topics:
            raise TopicDimensionError(
                f"profiles indexed against different topic sets ({p.n_topics} vs {n_topics})"
            )
        n += 1
        for k, v in p.weights.items():
            acc[k] = acc.get(k, 0.0) + v
    if n == 0:
        raise ValueError("mean of no profiles")
    return InterestProfile({k: v / n for k, v in acc.items()}, n_topics)


class SocialGraph:
    """Undirected co-authorship graph at one calendar year: no self-loops,
    symmetric adjacency, sorted neighbor lists."""

    __slots__ = ("year", "_adj")

    def __init__(self, adjacency: Mapping[str, Iterable[str]], year: int):
        self.year = int(year)
        self._adj = {m: tuple(sorted(set(ns))) for m, ns in adjacency.items()}

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], nodes: Iterable[str] = (), year: int = 0) -> "SocialGraph":
        adj: dict[str, set[str]] = {m: set() for m in nodes}
        for a, b in edges:
            if a == b:
                continue
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        return cls(adj, year)

    def nodes(self):
        return self._adj.keys()

    def __contains__(self, member: str) -> bool:
        return member in self._adj

    def __len__(self) -> int:
        return len(self._adj)

    def neighbors(self, member: str) -> tuple[str, ...]:
        return self._adj[member]

    def degree(self, member: str) -> int:
        return len(self._adj[member])

    def has_edge(self, a: str, b: str) -> bool:
        return b in set(self._adj.get(a, ()))

    def edges(self) -> Iterator[tuple[str, str]]:
        """Each undirected edge once, as (smaller, larger)."""
        for m, ns in self._adj.items():
            for n in ns:
                if m < n:
                    yield (m, n)

    def n_edges(self) -> int:
        return sum(len(ns) for ns in self._adj.values()) // 2

    def connected_components(self) -> list[set[str]]:
        seen: set[str] = set()
        comps = []
        for start in self._adj:
            if start in seen:
                continue
            comp = {start}
            frontier = [start]
            while frontier:
                m = frontier.pop()
                for n in self._adj[m]:
                    if n not in comp:
                        comp.add(n)
                        frontier.append(n)
            seen |= comp
            comps.append(comp)
        return comps


class WeightedInterestGraph:
    """Member -> interest profile rows at one calendar year (the weighted
    member-topic bipartite graph)."""

    __slots__ = ("rows", "year", "n_topics")

    def __init__(self, rows: Mapping[str, InterestProfile], year: int, n_topics: int | None = None):
        self.rows = dict(rows)
        self.year = int(year)
        if n_topics is None:
            if not self.rows:
                raise ValueError("n_topics required for an empty graph")
            n_topics = next(iter(self.rows.values())).n_topics
        self.n_topics = int(n_topics)

    def members(self):
        return self.rows.keys()

    def profile(self, member: str) -> InterestProfile:
        return self.rows.get(member) or InterestProfile.trivial(self.n_topics)


@dataclass(frozen=True)
class WigViolation:
    """One data-quality finding from validate_wig; violations are data, not faults."""

    member: str
    kind: str  # "range" or "sum"
    topic: int | None
    value: float


def validate_wig(wig: WeightedInterestGraph) -> list[WigViolation]:
    """Check every weight lies in [0, 1] and every non-trivial row sums to 1.

    Returns an empty list for a valid graph; range violations are reported per
    topic, sum violations once per row.
    """
    violations: list[WigViolation] = []
    for member in sorted(wig.rows):
        profile = wig.rows[member]
        for topic in sorted(profile.weights):
            w = profile.weights[topic]
            if w < 0.0 or w > 1.0:
                violations.append(WigViolation(member, "range", topic, w))
        if not profile.is_trivial():
            total = profile.sum()
            if abs(total - 1.0) > PROFILE_SUM_TOL:
                violations.append(WigViolation(member, "sum", None, total))
    return violations
