"""Generators for the synthetic additive world.

The synthetic world gives every concept its own basis direction, so the
encoding of a disjoint union of concept sets is exactly the sum of the
parts. That makes ideal-condition behavior checkable: the additive
heuristic must rank the annotated pair first with no tolerance, searches
must replay annotated trees exactly, and distribution gaps must order
gold above partial above random.

All generators draw from a caller-supplied numpy Generator and touch no
global state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GoldStep, GoldTree, Origin, ProofInstance, Statement
from .encoders import ConceptLexicon

_SUBJECTS = ["the heron", "the archivist", "the glacier", "the orchard",
             "the ferry", "the beacon", "the quarry", "the observatory"]
_VERBS = ["shelters", "signals", "feeds", "predates", "overlooks",
          "supplies", "borders", "outlasts"]
_OBJECTS = ["the cove", "the ledger", "the meadow", "the channel",
            "the ridge", "the harbor", "the cellar", "the plateau"]


def make_lexicon(size: int, prefix: str = "c") -> ConceptLexicon:
    return ConceptLexicon([f"{prefix}{i}" for i in range(size)])


def concept_text(concepts) -> str:
    return " ".join(sorted(concepts))


@dataclass(frozen=True)
class AdditiveInstance:
    instance: ProofInstance
    lexicon: ConceptLexicon
    gold_pair_ids: tuple[str, str]


def random_additive_instance(rng: np.random.Generator, *,
                             lexicon_size: int | None = None,
                             n_premises: int | None = None,
                             allow_goal_overlap: bool = False) -> AdditiveInstance:
    """One single-step instance whose goal is the disjoint union of a gold pair.

    Every distractor premise carries at least one concept outside the goal
    set, which guarantees no distractor pair can sum to a multiple of the
    goal vector; the gold pair is therefore the strict argmax under the
    additive heuristic. With allow_goal_overlap distractors may also reuse
    goal concepts (a harder ranking problem, same guarantee).
    """
    lex_size = int(lexicon_size if lexicon_size is not None else rng.integers(8, 17))
    if lex_size < 6:
        raise ValueError("lexicon must hold at least 6 concepts")
    lexicon = make_lexicon(lex_size)
    tokens = list(lexicon.tokens)

    n = int(n_premises if n_premises is not None else rng.integers(4, 13))
    if n < 4:
        raise ValueError("need at least 4 premises")

    # keep enough off-goal tokens to build n - 2 distinct distractor sets
    reserve = 4 if not allow_goal_overlap else 1
    max_goal = max(2, lex_size - reserve)
    size_a = int(rng.integers(1, min(3, max_goal - 1) + 1))
    size_b = int(rng.integers(1, min(3, max_goal - size_a) + 1))

    goal_idx = rng.choice(lex_size, size=size_a + size_b, replace=False)
    set_a = frozenset(tokens[i] for i in goal_idx[:size_a])
    set_b = frozenset(tokens[i] for i in goal_idx[size_a:])
    goal_set = set_a | set_b
    off_goal = [t for t in tokens if t not in goal_set]

    taken = {set_a, set_b}
    distractors: list[frozenset[str]] = []
    while len(distractors) < n - 2:
        size = int(rng.integers(1, 4))
        anchor = off_goal[int(rng.integers(len(off_goal)))]
        pool = [t for t in (tokens if allow_goal_overlap else off_goal) if t != anchor]
        extra = rng.choice(len(pool), size=min(size - 1, len(pool)), replace=False)
        candidate = frozenset([anchor] + [pool[i] for i in extra])
        if candidate in taken:
            continue
        taken.add(candidate)
        distractors.append(candidate)

    sets: list[tuple[frozenset[str], str]] = [(set_a, "a"), (set_b, "b")]
    sets += [(d, "x") for d in distractors]
    order = rng.permutation(len(sets))
    premises = []
    gold_a_id = gold_b_id = ""
    for position, original in enumerate(order):
        concept_set, role = sets[int(original)]
        statement = Statement(f"p{position}", concept_text(concept_set))
        premises.append(statement)
        if role == "a":
            gold_a_id = statement.id
        elif role == "b":
            gold_b_id = statement.id

    goal_text = concept_text(goal_set)
    conclusion = Statement("d0", goal_text, Origin.INTERMEDIATE)
    tree = GoldTree(steps=(GoldStep(gold_a_id, gold_b_id, conclusion),), root_id="d0")
    instance = ProofInstance(
        instance_id=f"syn-{rng.integers(1 << 30)}",
        premises=tuple(premises),
        goal=Statement("g", goal_text, Origin.GOAL),
        gold_tree=tree,
    )
    return AdditiveInstance(instance, lexicon, (gold_a_id, gold_b_id))


def random_gold_tree_instance(rng: np.random.Generator, uid: str, *,
                              n_internal: int | None = None,
                              extra_premises: int | None = None) -> ProofInstance:
    """A multi-step annotated instance with unique natural-ish texts.

    The tree is a random binary combination of n_internal + 1 leaf
    premises; the goal text equals the root conclusion text so the oracle
    entailment model proves exactly at the root. Distractor premises sit
    outside the tree.
    """
    steps_wanted = int(n_internal if n_internal is not None else rng.integers(2, 7))
    if steps_wanted < 1:
        raise ValueError("need at least one internal node")
    n_leaves = steps_wanted + 1
    n_extra = int(extra_premises if extra_premises is not None else rng.integers(0, 3))

    def phrase(tag: str) -> str:
        subject = _SUBJECTS[int(rng.integers(len(_SUBJECTS)))]
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        obj = _OBJECTS[int(rng.integers(len(_OBJECTS)))]
        return f"{subject} {verb} {obj} in case {tag}"

    premises = [Statement(f"p{i}", phrase(f"{uid}p{i}")) for i in range(n_leaves + n_extra)]
    texts = {p.id: p.text for p in premises}

    available = [p.id for p in premises[:n_leaves]]
    steps: list[GoldStep] = []
    for j in range(steps_wanted):
        first = available.pop(int(rng.integers(len(available))))
        second = available.pop(int(rng.integers(len(available))))
        conclusion = Statement(f"i{j}", phrase(f"{uid}s{j}"), Origin.INTERMEDIATE)
        steps.append(GoldStep(first, second, conclusion))
        texts[conclusion.id] = conclusion.text
        available.append(conclusion.id)

    root_id = steps[-1].conclusion.id
    return ProofInstance(
        instance_id=f"tree-{uid}",
        premises=tuple(premises),
        goal=Statement("g", texts[root_id], Origin.GOAL),
        gold_tree=GoldTree(steps=tuple(steps), root_id=root_id),
    )


@dataclass(frozen=True)
class SearchWorld:
    instance: ProofInstance
    lexicon: ConceptLexicon


def random_search_world(rng: np.random.Generator, uid: str) -> SearchWorld:
    """A small concept-set instance (no gold tree) for stress searches."""
    lex_size = int(rng.integers(5, 9))
    lexicon = make_lexicon(lex_size, prefix="w")
    tokens = list(lexicon.tokens)
    n = int(rng.integers(4, 7))

    seen: set[frozenset[str]] = set()
    premises = []
    while len(premises) < n:
        size = int(rng.integers(1, 4))
        picks = rng.choice(lex_size, size=size, replace=False)
        concept_set = frozenset(tokens[i] for i in picks)
        if concept_set in seen:
            continue
        seen.add(concept_set)
        premises.append(Statement(f"p{len(premises)}", concept_text(concept_set)))

    goal_size = int(rng.integers(2, min(4, lex_size)))
    goal_picks = rng.choice(lex_size, size=goal_size, replace=False)
    goal_text = concept_text(tokens[i] for i in goal_picks)
    instance = ProofInstance(
        instance_id=f"world-{uid}",
        premises=tuple(premises),
        goal=Statement("g", goal_text, Origin.GOAL),
    )
    return SearchWorld(instance, lexicon)
