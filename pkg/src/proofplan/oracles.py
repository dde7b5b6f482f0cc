"""Deterministic oracle backings built from gold annotations.

These replace the neural step model, entailment model, and heuristic in
tests and offline runs: they replay annotated conclusions for annotated
premise pairs and behave blandly everywhere else, so search behavior can
be checked exactly against the annotations.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

from .core import ProofInstance, normalize_text
from .errors import NoGoldTreeError
from .heuristics import PairRanker

FILLER_TAG = "[no-deduction]"


def _pair_key(left_text: str, right_text: str) -> tuple[str, str]:
    a, b = normalize_text(left_text), normalize_text(right_text)
    return (a, b) if a <= b else (b, a)


def _gold_steps_with_texts(instance: ProofInstance):
    """Yield (left_text, right_text, conclusion) for each gold step."""
    tree = instance.gold_tree
    if tree is None:
        raise NoGoldTreeError(f"instance {instance.instance_id!r} has no gold tree")
    texts = {p.id: p.text for p in instance.premises}
    for step in tree.steps:
        yield texts[step.left_id], texts[step.right_id], step.conclusion
        texts[step.conclusion.id] = step.conclusion.text


class OracleStepModel:
    """Replays the annotated conclusion for an annotated premise pair.

    With filler=True (default) unknown pairs get a single tagged filler
    sentence (deterministic per pair) so searches driven by weak heuristics
    still make novel pool entries instead of stalling. Filler text is not
    drawn from any vocabulary, so pass filler=False when a strict synthetic
    encoder has to embed or re-score kept generations; unknown pairs then
    yield nothing and pop unproductively.
    """

    def __init__(self, instances: Iterable[ProofInstance], *, filler: bool = True):
        self.filler = filler
        self._table: dict[tuple[str, str], str] = {}
        for instance in instances:
            for left_text, right_text, conclusion in _gold_steps_with_texts(instance):
                self._table[_pair_key(left_text, right_text)] = conclusion.text

    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        known = self._table.get(_pair_key(left_text, right_text))
        if known is not None:
            return [known]
        if not self.filler:
            return []
        a, b = _pair_key(left_text, right_text)
        return [f"{FILLER_TAG} {a} | {b}"]


class OracleEntailment:
    """Scores 1.0 on normalized text equality (plus configured extras), else 0.0."""

    def __init__(self, extra_pairs: Iterable[tuple[str, str]] = ()):
        self._extra = {(normalize_text(p), normalize_text(h)) for p, h in extra_pairs}

    def score(self, premise_text: str, hypothesis_text: str) -> float:
        p, h = normalize_text(premise_text), normalize_text(hypothesis_text)
        if p == h or (p, h) in self._extra:
            return 1.0
        return 0.0


class OraclePairRanker(PairRanker):
    """Scores annotated step pairs in replay order, everything else zero.

    Step i of an n-step tree scores n - i, so the annotated steps pop in
    dependency order and the search replays the gold tree exactly.
    """

    def __init__(self, instances: Iterable[ProofInstance]):
        self._table: dict[tuple[str, str], float] = {}
        for instance in instances:
            steps = list(_gold_steps_with_texts(instance))
            for i, (left_text, right_text, _) in enumerate(steps):
                self._table[_pair_key(left_text, right_text)] = float(len(steps) - i)

    def score_pairs(self, pairs: Sequence[tuple[str, str]], target: str) -> list[float]:
        return [self._table.get(_pair_key(left, right), 0.0) for left, right in pairs]


class ScriptedStepModel:
    """Exact-script step model: a map from unordered premise-pair texts to
    the generations to emit, nothing at all for unscripted pairs."""

    def __init__(self, script: dict[tuple[str, str], Sequence[str]]):
        self._table = {_pair_key(a, b): list(gens) for (a, b), gens in script.items()}

    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        return list(self._table.get(_pair_key(left_text, right_text), ()))[:k]


class UnionStepModel:
    """Synthetic-world step model: the deduction of two concept-set texts
    is the union of their tokens, rendered sorted."""

    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        tokens = set(normalize_text(left_text).split()) | set(normalize_text(right_text).split())
        return [" ".join(sorted(tokens))]


class NoisyConceptStepModel:
    """Synthetic-world step model emitting pseudo-random concept subsets.

    Deterministic per (pair, seed): the RNG is seeded from a hash of the
    normalized pair plus the caller's seed. Some samples repeat inputs or
    earlier outputs on purpose, which exercises the duplicate filters and
    the agreement validator.
    """

    def __init__(self, extra_tokens: Sequence[str] = ()):
        self.extra_tokens = list(extra_tokens)

    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        a, b = _pair_key(left_text, right_text)
        digest = hashlib.sha256(f"{a}|{b}|{seed}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        pool = sorted(set(a.split()) | set(b.split()) | set(self.extra_tokens))
        out = []
        for _ in range(k):
            if rng.random() < 0.15:
                out.append(a if rng.random() < 0.5 else b)  # deliberate input duplicate
                continue
            size = int(rng.integers(1, len(pool) + 1))
            picks = rng.choice(len(pool), size=size, replace=False)
            out.append(" ".join(pool[i] for i in sorted(picks)))
        return out
