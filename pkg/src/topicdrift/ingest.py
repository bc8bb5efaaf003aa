"""Stream a DBLP-style XML corpus into dated publication events.

The parser is single-pass expat streaming and never loads the whole document.
Each direct child of the root element is treated as one publication record;
author names come from <author> children, the title from <title> (nested
inline markup such as <i> is flattened), the year from <year>.

Character entities: real DBLP dumps declare Latin-1 entities in an external
DTD. When the document references a local DTD file that exists next to the
input it is parsed; otherwise a built-in table covering the HTML 4 entity set
is used, so standalone files with &uuml;-style references still parse.
"""

from __future__ import annotations

import gzip
import io
import json
import xml.parsers.expat as expat
from dataclasses import dataclass, field, replace
from html.entities import entitydefs
from pathlib import Path
from typing import IO, Iterable, Iterator

from .core import SocialGraph
from .lexicon import TopicLexicon, index_title

__all__ = [
    "CorpusEvent",
    "CorpusFilter",
    "CorpusFormatError",
    "parse_corpus",
    "index_events",
    "write_event_log",
    "read_event_log",
    "GraphSeries",
    "build_graph_series",
]

# Record tags with a dedicated publication kind; anything else is "other".
KIND_BY_TAG = {
    "article": "journal",
    "inproceedings": "conference",
    "incollection": "chapter",
}
DEFAULT_KINDS = ("journal", "conference", "chapter")

_BUILTIN_ENTITY_DTD = "\n".join(
    f'<!ENTITY {name} "&#{ord(ch)};">'
    for name, ch in sorted(entitydefs.items())
    if len(ch) == 1 and name not in ("lt", "gt", "amp", "quot", "apos")
)


class CorpusFormatError(ValueError):
    """The input is not well-formed corpus XML; message carries the byte offset."""


@dataclass(frozen=True)
class CorpusEvent:
    """One dated publication: the raw expression of interest.

    An empty title is legal; the event then contributes co-authorship edges
    but no topics. ``topics`` holds canonical lexemes and is filled by
    indexing.
    """

    year: int
    kind: str
    authors: tuple[str, ...]
    title: str
    topics: tuple[str, ...] = ()


@dataclass(frozen=True)
class CorpusFilter:
    """Observation window and admitted publication kinds."""

    from_year: int = 1950
    to_year: int = 2012
    kinds: tuple[str, ...] = DEFAULT_KINDS

    def admits(self, year: int, kind: str) -> bool:
        return self.from_year <= year <= self.to_year and kind in self.kinds


class _RecordCollector:
    """Expat handler state for one pass over the document."""

    def __init__(self):
        self.stack: list[str] = []
        self.pending: list[tuple[str, list[str], str, int | None]] = []
        self.tag = None
        self.authors: list[str] = []
        self.title_parts: list[str] = []
        self.year_parts: list[str] = []
        self.author_parts: list[str] = []
        self.seen_title = False
        self.seen_year = False

    def start(self, name, attrs):
        self.stack.append(name)
        depth = len(self.stack)
        if depth == 2:
            self.tag = name
            self.authors = []
            self.title_parts = []
            self.year_parts = []
            self.seen_title = False
            self.seen_year = False
        elif depth == 3 and self.tag is not None:
            if name == "author":
                self.author_parts = []
            elif name == "title" and not self.seen_title:
                self.title_parts = []
            elif name == "year" and not self.seen_year:
                self.year_parts = []

    def end(self, name):
        depth = len(self.stack)
        if depth == 3 and self.tag is not None:
            if name == "author":
                author = " ".join("".join(self.author_parts).split())
                if author:
                    self.authors.append(author)
                self.author_parts = []
            elif name == "title":
                self.seen_title = True
            elif name == "year":
                self.seen_year = True
        elif depth == 2 and self.tag is not None:
            year = None
            year_text = "".join(self.year_parts).strip()
            if year_text:
                try:
                    year = int(year_text)
                except ValueError:
                    year = None
            title = " ".join("".join(self.title_parts).split())
            self.pending.append((self.tag, list(self.authors), title, year))
            self.tag = None
        self.stack.pop()

    def chars(self, data):
        if self.tag is None or len(self.stack) < 3:
            return
        inner = self.stack[2]
        if inner == "author" and self.stack[-1] == "author":
            self.author_parts.append(data)
        elif inner == "title" and not self.seen_title:
            # nested markup (<i>, <sub>, ...) is flattened into the title text
            self.title_parts.append(data)
        elif inner == "year" and not self.seen_year and self.stack[-1] == "year":
            self.year_parts.append(data)


def _open_source(source) -> tuple[IO[bytes], Path | None, bool]:
    """Return (binary stream, directory for DTD lookup, whether we opened it)."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        stream = gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")
        return stream, path.parent, True
    if isinstance(source, io.TextIOBase):
        buffer = getattr(source, "buffer", None)
        if buffer is None:
            raise TypeError("text stream without a binary buffer; pass bytes")
        return buffer, None, False
    return source, None, False


def parse_corpus(source, corpus_filter: CorpusFilter | None = None) -> Iterator[CorpusEvent]:
    """Stream publication events from a file path, .gz path, or binary stream.

    Events outside the filter are dropped. Records without a usable year or
    without authors cannot enter the network and are skipped. Unknown record
    tags are kept with kind "other".
    """
    if corpus_filter is None:
        corpus_filter = CorpusFilter()
    stream, base_dir, owned = _open_source(source)
    parser = expat.ParserCreate()
    parser.UseForeignDTD(True)
    parser.SetParamEntityParsing(expat.XML_PARAM_ENTITY_PARSING_UNLESS_STANDALONE)

    def resolve_dtd(context, base, system_id, public_id):
        sub = parser.ExternalEntityParserCreate(context)
        dtd_text = _BUILTIN_ENTITY_DTD
        if system_id and base_dir is not None and "//" not in system_id:
            candidate = base_dir / system_id
            if candidate.is_file():
                dtd_text = candidate.read_text(encoding="utf-8", errors="replace")
        sub.Parse(dtd_text, True)
        return 1

    parser.ExternalEntityRefHandler = resolve_dtd
    collector = _RecordCollector()
    parser.StartElementHandler = collector.start
    parser.EndElementHandler = collector.end
    parser.CharacterDataHandler = collector.chars

    def drain() -> Iterator[CorpusEvent]:
        for tag, authors, title, year in collector.pending:
            if year is None or not authors:
                continue
            kind = KIND_BY_TAG.get(tag, "other")
            if corpus_filter.admits(year, kind):
                yield CorpusEvent(year, kind, tuple(authors), title)
        collector.pending.clear()

    try:
        while True:
            chunk = stream.read(1 << 16)
            if not chunk:
                break
            try:
                parser.Parse(chunk, False)
            except expat.ExpatError as exc:
                raise CorpusFormatError(
                    f"malformed corpus XML at byte {parser.ErrorByteIndex} "
                    f"(line {parser.ErrorLineNumber}, column {parser.ErrorColumnNumber}): {exc}"
                ) from exc
            yield from drain()
        try:
            parser.Parse(b"", True)
        except expat.ExpatError as exc:
            raise CorpusFormatError(
                f"malformed corpus XML at byte {parser.ErrorByteIndex} "
                f"(line {parser.ErrorLineNumber}, column {parser.ErrorColumnNumber}): {exc}"
            ) from exc
        yield from drain()
    finally:
        if owned:
            stream.close()


def index_events(events: Iterable[CorpusEvent], lexicon: TopicLexicon) -> Iterator[CorpusEvent]:
    """Attach canonical topic lexemes to each event by indexing its title."""
    for event in events:
        ids = index_title(event.title, lexicon) if event.title else set()
        topics = tuple(lexicon.canonical(i) for i in sorted(ids))
        yield replace(event, topics=topics)


def write_event_log(events: Iterable[CorpusEvent], destination) -> int:
    """Write the newline-delimited JSON event log; returns the event count."""
    own = isinstance(destination, (str, Path))
    fp = open(destination, "w", encoding="utf-8") if own else destination
    count = 0
    try:
        for e in events:
            record = {
                "year": e.year,
                "kind": e.kind,
                "authors": list(e.authors),
                "topics": list(e.topics),
            }
            fp.write(json.dumps(record, ensure_ascii=False))
            fp.write("\n")
            count += 1
    finally:
        if own:
            fp.close()
    return count


def read_event_log(source) -> Iterator[CorpusEvent]:
    """Read events back from the newline-delimited JSON log."""
    own = isinstance(source, (str, Path))
    fp = open(source, "r", encoding="utf-8") if own else source
    try:
        for line_no, line in enumerate(fp, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                yield CorpusEvent(
                    int(rec["year"]),
                    str(rec["kind"]),
                    tuple(rec["authors"]),
                    str(rec.get("title", "")),
                    tuple(rec.get("topics", ())),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"bad event log record on line {line_no}: {exc}") from exc
    finally:
        if own:
            fp.close()


@dataclass
class GraphSeries:
    """Cumulative co-authorship: an edge, once formed, is never removed.

    Stores the first year of each node and edge; full graphs for a given year
    are materialized on demand.
    """

    node_year: dict[str, int] = field(default_factory=dict)
    edge_year: dict[tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def from_events(cls, events: Iterable[CorpusEvent]) -> "GraphSeries":
        series = cls()
        series.add_events(events)
        return series

    def add_events(self, events: Iterable[CorpusEvent]) -> None:
        node_year = self.node_year
        edge_year = self.edge_year
        for event in events:
            authors = sorted(set(event.authors))
            for a in authors:
                prev = node_year.get(a)
                if prev is None or event.year < prev:
                    node_year[a] = event.year
            for i, a in enumerate(authors):
                for b in authors[i + 1 :]:
                    key = (a, b)
                    prev = edge_year.get(key)
                    if prev is None or event.year < prev:
                        edge_year[key] = event.year

    def years(self) -> list[int]:
        return sorted(set(self.node_year.values()))

    def at(self, year: int) -> SocialGraph:
        nodes = [m for m, y in self.node_year.items() if y <= year]
        edges = [e for e, y in self.edge_year.items() if y <= year]
        return SocialGraph.from_edges(edges, nodes=nodes, year=year)


def build_graph_series(events: Iterable[CorpusEvent], years: Iterable[int] | None = None) -> dict[int, SocialGraph]:
    """Materialize the cumulative graph for each requested year.

    With no explicit years, every year in which an event occurred is covered.
    For large corpora prefer GraphSeries and materialize single years.
    """
    series = GraphSeries()
    event_years: set[int] = set()
    def watch(evs):
        for e in evs:
            event_years.add(e.year)
            yield e

    series.add_events(watch(events))
    wanted = sorted(years) if years is not None else sorted(event_years)
    return {y: series.at(y) for y in wanted}
