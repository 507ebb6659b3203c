"""Corpus ingestion, BM25 retrieval, and evidence formatting.

Source texts arrive pre-extracted (one text file per document, pages
separated by form feeds).  Ingestion chunks each page with a sliding window
over whitespace tokens and builds an inverted index.  Indexes are immutable
after build and safe for concurrent readers.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

INDEX_VERSION = 1

DEFAULT_WINDOW = 512
DEFAULT_OVERLAP = 64
DEFAULT_K = 8

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class CorpusError(ValueError):
    pass


class EmptyCorpus(CorpusError):
    pass


class IngestError(CorpusError):
    def __init__(self, doc_id: str, reason: str):
        self.doc_id = doc_id
        super().__init__(f"cannot ingest document {doc_id!r}: {reason}")


class EmptyQuery(CorpusError):
    pass


class IndexVersionMismatch(CorpusError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, no stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    organization: str
    url: str = ""
    page_count: int = 0

    def __post_init__(self):
        if not self.title:
            raise CorpusError(f"document {self.doc_id!r} has empty title")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    page: int  # 1-based, or 0 when the source is unpaginated
    ordinal: int
    text: str
    token_count: int

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.page, self.ordinal)


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    document: Document
    score: float
    rank: int


def sliding_windows(tokens: list[str], window: int, overlap: int) -> list[list[str]]:
    """Token windows of size `window`, each sharing `overlap` tokens with the last."""
    if not 0 <= overlap < window:
        raise CorpusError(f"need 0 <= overlap < window, got overlap={overlap} window={window}")
    if not tokens:
        return []
    stride = window - overlap
    out = []
    start = 0
    while True:
        piece = tokens[start:start + window]
        out.append(piece)
        if start + window >= len(tokens):
            break
        start += stride
    return out


class CorpusIndex:
    """Inverted index over chunks with Okapi BM25 scoring."""

    def __init__(self, documents: dict[str, Document], chunks: list[Chunk]):
        if not chunks:
            raise EmptyCorpus("corpus has no chunks")
        self.documents = dict(documents)
        self.chunks = sorted(chunks, key=lambda c: c.key)
        self._postings: dict[str, list[tuple[int, int]]] = {}
        self._doc_len: list[int] = []
        for i, chunk in enumerate(self.chunks):
            toks = tokenize(chunk.text)
            self._doc_len.append(len(toks))
            for term, tf in sorted(Counter(toks).items()):
                self._postings.setdefault(term, []).append((i, tf))
        self._n = len(self.chunks)
        self._avgdl = sum(self._doc_len) / self._n

    def idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        if df == 0:
            return 0.0
        return math.log(1.0 + (self._n - df + 0.5) / (df + 0.5))

    def retrieve(self, query: str, k: int = DEFAULT_K) -> list[RetrievalHit]:
        """Top-k chunks under BM25; ties broken by (doc_id, page, ordinal)."""
        if k < 1:
            raise CorpusError(f"k must be >= 1, got {k}")
        terms = tokenize(query)
        if not terms:
            raise EmptyQuery(f"query {query!r} tokenizes to nothing")
        scores: dict[int, float] = {}
        for term in sorted(set(terms)):
            idf = self.idf(term)
            if idf == 0.0:
                continue
            for i, tf in self._postings[term]:
                dl = self._doc_len[i]
                denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self._avgdl)
                scores[i] = scores.get(i, 0.0) + idf * tf * (BM25_K1 + 1.0) / denom
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], self.chunks[kv[0]].key))
        hits = []
        for rank, (i, score) in enumerate(ranked[:k], start=1):
            chunk = self.chunks[i]
            hits.append(RetrievalHit(chunk, self.documents[chunk.doc_id], score, rank))
        return hits

    # -- persistence ------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "version": INDEX_VERSION,
            "documents": [vars(d) for d in self.documents.values()],
            "chunks": [vars(c) for c in self.chunks],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "CorpusIndex":
        payload = json.loads(Path(path).read_text())
        if payload.get("version") != INDEX_VERSION:
            raise IndexVersionMismatch(
                f"index version {payload.get('version')!r} != {INDEX_VERSION}"
            )
        docs = {d["doc_id"]: Document(**d) for d in payload["documents"]}
        chunks = [Chunk(**c) for c in payload["chunks"]]
        return cls(docs, chunks)


def _read_manifest(manifest_path: str | Path) -> list[dict]:
    entries = []
    for line in Path(manifest_path).read_text().splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries


def ingest_corpus(
    manifest_path: str | Path,
    window: int = DEFAULT_WINDOW,
    overlap: int = DEFAULT_OVERLAP,
) -> CorpusIndex:
    """Chunk every manifest document and build an index.

    Manifest is JSON-lines with fields doc_id, title, organization, url,
    text_path.  Pages inside a text file are separated by form feeds; files
    without form feeds count as a single unpaginated page (page 0).
    """
    if not 0 <= overlap < window:
        raise CorpusError(f"need 0 <= overlap < window, got overlap={overlap} window={window}")
    entries = _read_manifest(manifest_path)
    if not entries:
        raise EmptyCorpus(f"manifest {manifest_path} lists no documents")

    base = Path(manifest_path).parent
    documents: dict[str, Document] = {}
    chunks: list[Chunk] = []
    for entry in entries:
        doc_id = entry.get("doc_id", "")
        try:
            text_path = Path(entry["text_path"])
            if not text_path.is_absolute():
                text_path = base / text_path
            raw = text_path.read_text()
        except (KeyError, OSError) as exc:
            raise IngestError(doc_id or "<missing doc_id>", str(exc)) from exc
        if doc_id in documents:
            raise IngestError(doc_id, "duplicate doc_id")

        if "\f" in raw:
            pages = [(i + 1, p) for i, p in enumerate(raw.split("\f"))]
            page_count = len(pages)
        else:
            pages = [(0, raw)]
            page_count = 0
        documents[doc_id] = Document(
            doc_id=doc_id,
            title=entry["title"],
            organization=entry.get("organization", ""),
            url=entry.get("url", ""),
            page_count=page_count,
        )
        for page_no, page_text in pages:
            tokens = page_text.split()
            for ordinal, piece in enumerate(sliding_windows(tokens, window, overlap)):
                chunks.append(Chunk(
                    doc_id=doc_id,
                    page=page_no,
                    ordinal=ordinal,
                    text=" ".join(piece),
                    token_count=len(piece),
                ))
    if not chunks:
        raise EmptyCorpus("no text content in any manifest document")
    return CorpusIndex(documents, chunks)


def format_evidence(hits: list[RetrievalHit]) -> str:
    """Render hits as citation blocks, in rank order, byte-deterministic."""
    blocks = []
    for hit in hits:
        doc = hit.document
        header = (
            f"Reference: {doc.title}, Page: {hit.chunk.page}, "
            f"ORG: {doc.organization}, URL: {doc.url}"
        )
        blocks.append(f"{header}\n{hit.chunk.text}")
    return "\n\n".join(blocks)
