"""Pair-scoring heuristics: which two statements should combine next?

Every heuristic scores unordered premise pairs against a target statement
(the goal during search, the annotated deduction in conditioned
evaluations). Higher is better. Three families are provided:

* additive: cosine between the sum of the pair's embeddings and the
  target embedding, the vector-arithmetic view of deduction;
* sparse: BM25 over the concatenated pair texts queried with the target;
* external: a separately trained scorer reached over HTTP (or mocked from
  a lookup table in tests).

The BM25 family is marked ``dynamic_rescoring`` because its scores depend
on corpus statistics over the current candidate set, so the search
re-scores the whole fringe before each pop instead of trusting scores
computed at enqueue time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .bm25 import DEFAULT_B, DEFAULT_K1, Bm25Index, tokenize
from .core import Vector, cosine, normalize_text, vec_sum
from .encoders import Encoder
from .errors import ProofPlanError, RemoteFailureError, UnknownTripleError
from .remote import DEFAULT_RETRIES, DEFAULT_TIMEOUT, RemoteClient


def additive_score(e_left: Vector, e_right: Vector, e_target: Vector) -> float:
    """cosine(e_left + e_right, e_target); the additive deduction signal."""
    return cosine(vec_sum(e_left, e_right), e_target)


class PairRanker:
    """Interface: batch-score (left, right) text pairs against a target."""

    dynamic_rescoring = False

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        raise NotImplementedError


class AdditiveHeuristic(PairRanker):
    def __init__(self, encoder: Encoder):
        self.encoder = encoder

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        e_target = self.encoder.encode(target)
        scores = []
        for left, right in pairs:
            try:
                scores.append(additive_score(
                    self.encoder.encode(left), self.encoder.encode(right), e_target))
            except ProofPlanError as exc:
                raise type(exc)(f"scoring pair ({left!r}, {right!r}): {exc}") from exc
        return scores


class Bm25Heuristic(PairRanker):
    """Each pair becomes the document "left right"; the target is the query."""

    dynamic_rescoring = True

    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        index = Bm25Index(self.k1, self.b).build([f"{left} {right}" for left, right in pairs])
        query = tokenize(target)
        return [index.score(query, doc_id) for doc_id in range(len(pairs))]


@dataclass(frozen=True)
class PairScoreRequest:
    left_text: str
    right_text: str
    goal_text: str

    def normalized(self) -> tuple[str, str, str]:
        return (normalize_text(self.left_text),
                normalize_text(self.right_text),
                normalize_text(self.goal_text))


class MockPairScorer(PairRanker):
    """Table-backed external scorer for tests and offline fixtures.

    Keys are normalized (left, right, goal) triples. With symmetric=True a
    lookup canonicalizes the pair order, so (b, a, g) hits the (a, b, g)
    entry. Unknown triples raise unless a default score is supplied.
    """

    def __init__(self, table: Mapping[tuple[str, str, str], float], *,
                 default: float | None = None, symmetric: bool = False):
        self.symmetric = symmetric
        self.default = default
        self._table: dict[tuple[str, str, str], float] = {}
        for (left, right, goal), value in table.items():
            key = self._key(left, right, goal)
            self._table[key] = float(value)

    def _key(self, left: str, right: str, goal: str) -> tuple[str, str, str]:
        l, r, g = normalize_text(left), normalize_text(right), normalize_text(goal)
        if self.symmetric and r < l:
            l, r = r, l
        return (l, r, g)

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        scores = []
        for left, right in pairs:
            value = self._table.get(self._key(left, right, target))
            if value is None:
                if self.default is None:
                    raise UnknownTripleError(
                        f"no score for ({left!r}, {right!r}) against {target!r}")
                value = self.default
            scores.append(value)
        return scores


class RemotePairScorer(PairRanker):
    """HTTP scorer: POST {"pairs": [{left,right,goal}...]} -> {"logits": [...]}.

    The service sees pairs in their given order; with both_orders=True each
    pair is also scored flipped and the max of the two logits is used.
    """

    def __init__(self, url: str, *, both_orders: bool = False,
                 timeout: float = DEFAULT_TIMEOUT, retries: int = DEFAULT_RETRIES,
                 backoff: float = 0.25, max_inflight: int = 4, session=None):
        self.both_orders = both_orders
        self._client = RemoteClient(url, timeout=timeout, retries=retries,
                                    backoff=backoff, max_inflight=max_inflight,
                                    session=session)

    def _post_pairs(self, requests_: list[PairScoreRequest]) -> list[float]:
        payload = {"pairs": [
            {"left": r.left_text, "right": r.right_text, "goal": r.goal_text}
            for r in requests_]}
        body = self._client.post(payload)
        logits = body.get("logits")
        if not isinstance(logits, list) or len(logits) != len(requests_):
            raise RemoteFailureError(
                f"{self._client.url}: expected {len(requests_)} logits")
        try:
            return [float(x) for x in logits]
        except (TypeError, ValueError) as exc:
            raise RemoteFailureError(f"{self._client.url}: bad logit: {exc}") from None

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        forward = self._post_pairs(
            [PairScoreRequest(left, right, target) for left, right in pairs])
        if not self.both_orders:
            return forward
        flipped = self._post_pairs(
            [PairScoreRequest(right, left, target) for left, right in pairs])
        return [max(a, b) for a, b in zip(forward, flipped)]


@dataclass(frozen=True)
class ScoredPair:
    left: str
    right: str
    score: float
    seq: int  # position in the input pair list


def rank_pairs(pairs: Sequence[tuple[str, str]], target: str,
               ranker: PairRanker) -> list[ScoredPair]:
    """Score and sort descending; ties keep input order. Every input
    appears exactly once in the output."""
    scores = ranker.score_pairs(pairs, target)
    scored = [ScoredPair(left, right, score, seq)
              for seq, ((left, right), score) in enumerate(zip(pairs, scores))]
    return sorted(scored, key=lambda sp: (-sp.score, sp.seq))


def pessimistic_rank(scores: Sequence[float], gold_position: int) -> int:
    """1-based rank of the gold item, counting every tie as ranked above it.

    With ties the gold pair takes the worst rank in its tie group, so a
    heuristic gets no credit for scoring everything equal.
    """
    gold = scores[gold_position]
    return sum(1 for s in scores if s > gold) + sum(1 for s in scores if s == gold)
