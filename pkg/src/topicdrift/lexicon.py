"""Topic lexicon handling and title indexing.

A lexicon maps multi-word lexemes to dense topic indices. Titles are matched
after a deterministic normalization (lowercase, punctuation to spaces,
whitespace collapse, split on spaces); no stemming, no language tooling.
Matching is longest-first over contiguous token runs and each token span is
consumed by at most one topic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "LexiconError",
    "Topic",
    "TopicLexicon",
    "normalize_tokens",
    "index_title",
    "validate_lexicon",
]


class LexiconError(ValueError):
    """The lexicon file or entry set cannot be used for indexing."""


# Single-token entries from this list are almost certainly extraction noise.
STOPWORDS = frozenset(
    "a an and are as at be by for from in is it of on or the to with".split()
)


def normalize_tokens(text: str) -> tuple[str, ...]:
    """Lowercase, fold punctuation to spaces, collapse runs, split on spaces."""
    out = []
    word = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return tuple(out)


@dataclass(frozen=True)
class Topic:
    """One entry of the basic topic set; ids form a contiguous [0, n) range."""

    id: int
    canonical: str


@dataclass
class TopicLexicon:
    topics: list[Topic]
    _by_tokens: dict[tuple[str, ...], int] = field(repr=False)
    _max_len: int = field(repr=False)
    duplicates: list[str] = field(default_factory=list, repr=False)

    @property
    def n_topics(self) -> int:
        return len(self.topics)

    def canonical(self, topic_id: int) -> str:
        return self.topics[topic_id].canonical

    def id_of(self, lexeme: str) -> int | None:
        return self._by_tokens.get(normalize_tokens(lexeme))

    def lexemes(self) -> Iterable[tuple[tuple[str, ...], int]]:
        return self._by_tokens.items()

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[str, Sequence[str]]]) -> "TopicLexicon":
        """Build from (canonical lexeme, alias lexemes) pairs.

        Lexemes repeated across entries are kept on their first entry only and
        recorded for validate_lexicon to report.
        """
        topics: list[Topic] = []
        by_tokens: dict[tuple[str, ...], int] = {}
        duplicates: list[str] = []
        max_len = 0
        for canonical, aliases in entries:
            canon_tokens = normalize_tokens(canonical)
            if not canon_tokens:
                raise LexiconError(f"empty lexeme in entry {canonical!r}")
            topic_id = len(topics)
            topics.append(Topic(topic_id, " ".join(canon_tokens)))
            for lexeme in (canonical, *aliases):
                tokens = normalize_tokens(lexeme)
                if not tokens:
                    raise LexiconError(f"empty alias in entry {canonical!r}")
                if tokens in by_tokens:
                    duplicates.append(" ".join(tokens))
                    continue
                by_tokens[tokens] = topic_id
                max_len = max(max_len, len(tokens))
        return cls(topics, by_tokens, max_len, duplicates)

    @classmethod
    def from_file(cls, path) -> "TopicLexicon":
        """Load the one-topic-per-line format: aliases after '|', '#' comments."""
        entries = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split("|")]
            parts = [p for p in parts if p]
            if not parts:
                raise LexiconError(f"no lexeme on line {raw!r}")
            entries.append((parts[0], parts[1:]))
        if not entries:
            raise LexiconError(f"no topics in lexicon file {path}")
        return cls.from_entries(entries)


def index_title(title: str, lexicon: TopicLexicon) -> set[int]:
    """Topics whose lexeme occurs as a contiguous token run of the normalized title.

    The scan is left to right; at each unconsumed position the longest matching
    lexeme wins and consumes its span. An empty result is legal: many titles
    fall outside any practical topic set.
    """
    tokens = normalize_tokens(title)
    found: set[int] = set()
    i = 0
    n = len(tokens)
    while i < n:
        matched = 0
        for length in range(min(lexicon._max_len, n - i), 0, -1):
            topic_id = lexicon._by_tokens.get(tokens[i : i + length])
            if topic_id is not None:
                found.add(topic_id)
                matched = length
                break
        i += matched if matched else 1
    return found


def validate_lexicon(lexicon: TopicLexicon) -> list[str]:
    """Data-quality warnings: duplicates, contained lexemes, stopword entries.

    Containment (one lexeme being a contiguous token run of another) signals
    likely similarity between topics, which the estimation stage is known to be
    sensitive to. Coverage against a corpus is reported by the indexing stage,
    not here.
    """
    warnings = [f"duplicate lexeme {d!r} (kept first entry)" for d in sorted(set(lexicon.duplicates))]
    all_lexemes = sorted(lexicon._by_tokens)
    for tokens in all_lexemes:
        if len(tokens) == 1 and tokens[0] in STOPWORDS:
            warnings.append(f"single stopword entry {' '.join(tokens)!r}")
    for short in all_lexemes:
        for long in all_lexemes:
            if len(short) >= len(long) or short == long:
                continue
            if any(long[i : i + len(short)] == short for i in range(len(long) - len(short) + 1)):
                warnings.append(
                    f"lexeme {' '.join(short)!r} is contained in {' '.join(long)!r} (similarity risk)"
                )
    return warnings
