"""Okapi BM25 over an in-memory inverted index.

Scoring uses the plus-one idf variant, which keeps every idf positive even
for terms present in most documents:

    idf(t)  = ln(1 + (N - df + 0.5) / (df + 0.5))
    score   = sum over query tokens of
              idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

Duplicate query tokens contribute once per occurrence. Tokenization is
lowercase runs of ASCII letters and digits; no stemming, no stopwords.
"""

from __future__ import annotations

import math
import re
from collections import Counter

from .errors import IndexNotBuiltError, ParseError, UnknownDocError

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_TOKEN = re.compile(r"[a-z0-9]+")

SNAPSHOT_TAG = "bm25-index"
SNAPSHOT_VERSION = 1

TokenStream = list[str]


def tokenize(text: str) -> TokenStream:
    """Lowercase alphanumeric runs, in order: "Co-occur 2x!" -> [co, occur, 2x]."""
    return _TOKEN.findall(text.lower())


class Bm25Index:
    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        if k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= b <= 1.0:
            raise ValueError("b must lie in [0, 1]")
        self.k1 = k1
        self.b = b
        self._postings: dict[str, dict[int, int]] = {}
        self._doc_len: list[int] = []
        self._avgdl = 0.0
        self._built = False

    def build(self, documents: list[str] | tuple[str, ...]) -> "Bm25Index":
        """Index documents; ids are their positions. Build once, then read-only."""
        if self._built:
            raise ValueError("index already built; create a new one instead")
        for doc_id, text in enumerate(documents):
            tokens = tokenize(text)
            self._doc_len.append(len(tokens))
            for term, tf in Counter(tokens).items():
                self._postings.setdefault(term, {})[doc_id] = tf
        n = len(self._doc_len)
        self._avgdl = (sum(self._doc_len) / n) if n else 0.0
        self._built = True
        return self

    @property
    def n_docs(self) -> int:
        self._require_built()
        return len(self._doc_len)

    @property
    def avgdl(self) -> float:
        self._require_built()
        return self._avgdl

    def doc_length(self, doc_id: int) -> int:
        self._require_built()
        self._require_doc(doc_id)
        return self._doc_len[doc_id]

    def term_frequency(self, term: str, doc_id: int) -> int:
        self._require_built()
        self._require_doc(doc_id)
        return self._postings.get(term, {}).get(doc_id, 0)

    def doc_frequency(self, term: str) -> int:
        self._require_built()
        return len(self._postings.get(term, ()))

    def idf(self, term: str) -> float:
        """Plus-one idf; strictly positive for every term, seen or not."""
        self._require_built()
        n = len(self._doc_len)
        df = self.doc_frequency(term)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def score(self, query: TokenStream, doc_id: int) -> float:
        """BM25 score of one document; absent query terms contribute zero."""
        self._require_built()
        self._require_doc(doc_id)
        dl = self._doc_len[doc_id]
        total = 0.0
        for term in query:
            tf = self._postings.get(term, {}).get(doc_id, 0)
            if tf == 0:
                continue
            denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self._avgdl)
            total += self.idf(term) * tf * (self.k1 + 1.0) / denom
        return total

    def score_all(self, query: TokenStream) -> list[float]:
        """Scores for every document, accumulated through the postings."""
        self._require_built()
        scores = [0.0] * len(self._doc_len)
        for term in query:
            postings = self._postings.get(term)
            if not postings:
                continue
            idf = self.idf(term)
            for doc_id, tf in postings.items():
                dl = self._doc_len[doc_id]
                denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self._avgdl)
                scores[doc_id] += idf * tf * (self.k1 + 1.0) / denom
        return scores

    def top_k(self, query: TokenStream, k: int) -> list[tuple[int, float]]:
        """Best min(k, N) documents by (score desc, doc id asc)."""
        if k < 0:
            raise ValueError("k must be >= 0")
        scores = self.score_all(query)
        order = sorted(range(len(scores)), key=lambda d: (-scores[d], d))
        return [(d, scores[d]) for d in order[:k]]

    def _require_built(self) -> None:
        if not self._built:
            raise IndexNotBuiltError("index not built yet")

    def _require_doc(self, doc_id: int) -> None:
        if not isinstance(doc_id, int) or not 0 <= doc_id < len(self._doc_len):
            raise UnknownDocError(f"no document with id {doc_id}")

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Line-oriented text snapshot; see docs/formats.md. Lossless."""
        self._require_built()
        lines = [f"{SNAPSHOT_TAG} {SNAPSHOT_VERSION}",
                 f"params {self.k1!r} {self.b!r}",
                 f"ndocs {len(self._doc_len)}",
                 "lengths " + " ".join(str(n) for n in self._doc_len)]
        for term in sorted(self._postings):
            postings = self._postings[term]
            cells = " ".join(f"{d}:{postings[d]}" for d in sorted(postings))
            lines.append(f"term {term} {cells}")
        lines.append("end")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Bm25Index":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        if not lines or not lines[0].startswith(SNAPSHOT_TAG):
            raise ParseError("not a bm25 snapshot", path, 1)
        if int(lines[0].split()[1]) != SNAPSHOT_VERSION:
            raise ParseError(f"unsupported snapshot version {lines[0].split()[1]}", path, 1)
        try:
            _, k1_text, b_text = lines[1].split()
            index = cls(float(k1_text), float(b_text))
            n = int(lines[2].split()[1])
            length_parts = lines[3].split()[1:]
            if len(length_parts) != n:
                raise ParseError(f"expected {n} lengths, got {len(length_parts)}", path, 4)
            index._doc_len = [int(tok) for tok in length_parts]
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad snapshot header: {exc}", path) from None
        for lineno, line in enumerate(lines[4:], start=5):
            if line == "end":
                break
            parts = line.split()
            if parts[0] != "term" or len(parts) < 2:
                raise ParseError(f"unexpected snapshot line {line!r}", path, lineno)
            term = parts[1]
            postings: dict[int, int] = {}
            for cell in parts[2:]:
                doc_text, _, tf_text = cell.partition(":")
                postings[int(doc_text)] = int(tf_text)
            index._postings[term] = postings
        else:
            raise ParseError("snapshot missing end marker", path)
        index._avgdl = (sum(index._doc_len) / n) if n else 0.0
        index._built = True
        return index
