"""Intrinsic and extrinsic evaluation of pair heuristics.

Three protocols:

* ranking: per annotated deduction, rank all candidate premise pairs and
  report mean reciprocal rank (deduction- or goal-conditioned);
* distributions: cosine of summed pair embeddings against the annotated
  deduction, grouped into random / partial / gold pair populations, plus
  model-generated deduction comparisons when a step model is supplied;
* extrinsic: run the full search per instance and report the solved
  fraction and mean productive steps over solved instances.

A fourth protocol, the single-step reasoning contrast set, ranks each
annotated premise pair against systematically perturbed variants and
aggregates mean reciprocal rank by reasoning category and perturbation.

Candidate pools are exhaustive up to ``SAMPLE_CAP`` pool statements; past
that, a fixed-seed uniform sample of ``SAMPLE_SIZE`` non-gold pairs keeps
the cost bounded. Ties always count against the gold pair.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import ProofInstance, Statement, cosine, vec_sum
from .encoders import Encoder
from .errors import (
    EmptyDatasetError,
    MissingVariantsError,
    ProofPlanError,
    TooFewPremisesError,
)
from .heuristics import PairRanker, pessimistic_rank
from .search import EntailmentScorer, SearchConfig, SearchResult, StepModel, run_search

SAMPLE_CAP = 40     # exhaustive pair enumeration up to this pool size
SAMPLE_SIZE = 500   # sampled non-gold pairs past the cap


# ---------------------------------------------------------------------------
# pair partitions


@dataclass(frozen=True)
class PairSets:
    """Unordered index pairs over a candidate pool, split by gold overlap."""

    gold: tuple[tuple[int, int], ...]
    partial: tuple[tuple[int, int], ...]
    random: tuple[tuple[int, int], ...]

    @property
    def all_pairs(self) -> tuple[tuple[int, int], ...]:
        return self.gold + self.partial + self.random


def build_pair_sets(pool_size: int, gold_pair: tuple[int, int]) -> PairSets:
    """Partition every unordered pair of pool indices by gold membership.

    gold: the annotated pair itself; partial: exactly one gold premise;
    random: no gold premise. The three sets tile all C(pool_size, 2) pairs.
    """
    a, b = gold_pair
    if a == b or not (0 <= a < pool_size and 0 <= b < pool_size):
        raise ValueError(f"bad gold pair {gold_pair} for pool of {pool_size}")
    if pool_size < 3:
        raise TooFewPremisesError(f"pool of {pool_size} cannot form a partition")
    gold_set = {a, b}
    gold, partial, random_ = [], [], []
    for i, j in itertools.combinations(range(pool_size), 2):
        overlap = len(gold_set & {i, j})
        if overlap == 2:
            gold.append((i, j))
        elif overlap == 1:
            partial.append((i, j))
        else:
            random_.append((i, j))
    return PairSets(tuple(gold), tuple(partial), tuple(random_))


@dataclass(frozen=True)
class RankingTask:
    """One annotated step turned into a ranking problem.

    The pool holds the instance premises plus conclusions of earlier
    steps, i.e. everything available when the step fired.
    """

    instance_id: str
    step_index: int
    pool: tuple[Statement, ...]
    gold: tuple[int, int]
    deduction_text: str
    goal_text: str


def ranking_tasks(instance: ProofInstance) -> list[RankingTask]:
    """One task per annotated step; empty when no gold tree or pools are
    too small to rank."""
    if instance.gold_tree is None:
        return []
    pool: list[Statement] = list(instance.premises)
    position = {s.id: i for i, s in enumerate(pool)}
    tasks = []
    for step_index, step in enumerate(instance.gold_tree.steps):
        left = position[step.left_id]
        right = position[step.right_id]
        if len(pool) >= 3:
            tasks.append(RankingTask(
                instance_id=instance.instance_id,
                step_index=step_index,
                pool=tuple(pool),
                gold=(left, right) if left < right else (right, left),
                deduction_text=step.conclusion.text,
                goal_text=instance.goal.text,
            ))
        position[step.conclusion.id] = len(pool)
        pool.append(step.conclusion)
    return tasks


def _task_rng(seed: int, task: RankingTask) -> np.random.Generator:
    digest = hashlib.sha256(
        f"{task.instance_id}|{task.step_index}".encode("utf-8")).digest()
    return np.random.default_rng((seed, int.from_bytes(digest[:8], "big")))


def _candidate_pairs(task: RankingTask, seed: int) -> tuple[list[tuple[int, int]], bool]:
    """All pool pairs, or gold plus a fixed-seed sample when the pool is big.

    Returns (pairs, sampled); the gold pair is always present.
    """
    sets = build_pair_sets(len(task.pool), task.gold)
    others = list(sets.partial + sets.random)
    if len(task.pool) <= SAMPLE_CAP or len(others) <= SAMPLE_SIZE:
        return list(sets.all_pairs), False
    rng = _task_rng(seed, task)
    picks = rng.choice(len(others), size=SAMPLE_SIZE, replace=False)
    sampled = [others[i] for i in sorted(picks)]
    return list(sets.gold) + sampled, True


# ---------------------------------------------------------------------------
# mean reciprocal rank


class Conditioning(enum.Enum):
    DEDUCTION = "deduction"
    GOAL = "goal"


@dataclass(frozen=True)
class RankEntry:
    instance_id: str
    step_index: int
    rank: int
    n_pairs: int
    sampled: bool

    @property
    def reciprocal(self) -> float:
        return 1.0 / self.rank


@dataclass(frozen=True)
class MrrReport:
    conditioning: Conditioning
    entries: tuple[RankEntry, ...]
    skipped_small_pools: int

    @property
    def mrr(self) -> float:
        return sum(e.reciprocal for e in self.entries) / len(self.entries)

    @property
    def n_examples(self) -> int:
        return len(self.entries)


def mrr(instances: Sequence[ProofInstance], ranker: PairRanker,
        conditioning: Conditioning = Conditioning.DEDUCTION, *,
        seed: int = 0) -> MrrReport:
    """Rank the annotated pair per step; ties count against it."""
    entries = []
    skipped = 0
    for instance in instances:
        tasks = ranking_tasks(instance)
        if instance.gold_tree is not None:
            skipped += len(instance.gold_tree.steps) - len(tasks)
        for task in tasks:
            pairs, sampled = _candidate_pairs(task, seed)
            target = (task.deduction_text if conditioning is Conditioning.DEDUCTION
                      else task.goal_text)
            texts = [(task.pool[i].text, task.pool[j].text) for i, j in pairs]
            scores = ranker.score_pairs(texts, target)
            gold_position = pairs.index(task.gold)
            rank = pessimistic_rank(scores, gold_position)
            entries.append(RankEntry(task.instance_id, task.step_index,
                                     rank, len(pairs), sampled))
    if not entries:
        raise EmptyDatasetError("no rankable annotated steps in the dataset")
    return MrrReport(conditioning, tuple(entries), skipped)


# ---------------------------------------------------------------------------
# score distributions


DIST_SETTINGS = ("random", "partial", "gold", "model", "gold_to_model")


@dataclass(frozen=True)
class DistributionReport:
    values: Mapping[str, tuple[float, ...]]

    def mean(self, setting: str) -> float:
        population = self.values[setting]
        if not population:
            raise EmptyDatasetError(f"no values collected for setting {setting!r}")
        return sum(population) / len(population)

    @property
    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name, vals in self.values.items() if vals}


def distribution_report(instances: Sequence[ProofInstance], encoder: Encoder, *,
                        step_model: StepModel | None = None,
                        seed: int = 0) -> DistributionReport:
    """Cosine populations of summed pair embeddings against annotated
    deductions, and against model deductions when a step model is given."""
    values: dict[str, list[float]] = {name: [] for name in DIST_SETTINGS}
    n_tasks = 0
    for instance in instances:
        for task in ranking_tasks(instance):
            n_tasks += 1
            e_deduction = encoder.encode(task.deduction_text)
            sets = build_pair_sets(len(task.pool), task.gold)
            pairs, _ = _candidate_pairs(task, seed)
            partial = set(sets.partial)
            gold_sum = None
            for i, j in pairs:
                pair_sum = vec_sum(encoder.encode(task.pool[i].text),
                                   encoder.encode(task.pool[j].text))
                value = cosine(pair_sum, e_deduction)
                if (i, j) == task.gold:
                    values["gold"].append(value)
                    gold_sum = pair_sum
                elif (i, j) in partial:
                    values["partial"].append(value)
                else:
                    values["random"].append(value)
            if step_model is not None and gold_sum is not None:
                left, right = task.gold
                generated = step_model.generate(task.pool[left].text,
                                                task.pool[right].text, 1, seed)
                if generated:
                    e_generated = encoder.encode(generated[0])
                    values["model"].append(cosine(gold_sum, e_generated))
                    values["gold_to_model"].append(cosine(e_deduction, e_generated))
    if n_tasks == 0:
        raise EmptyDatasetError("no annotated steps to build distributions from")
    return DistributionReport({name: tuple(vals) for name, vals in values.items()})


# ---------------------------------------------------------------------------
# extrinsic search evaluation


@dataclass(frozen=True)
class InstanceOutcome:
    instance_id: str
    proved: bool
    termination: str
    steps: int
    error: str | None = None


@dataclass(frozen=True)
class ExtrinsicReport:
    outcomes: tuple[InstanceOutcome, ...]

    @property
    def n_instances(self) -> int:
        return len(self.outcomes)

    @property
    def solved_fraction(self) -> float:
        return sum(1 for o in self.outcomes if o.proved) / len(self.outcomes)

    @property
    def mean_steps_solved(self) -> float | None:
        solved = [o.steps for o in self.outcomes if o.proved]
        if not solved:
            return None
        return sum(solved) / len(solved)

    @property
    def failures(self) -> tuple[InstanceOutcome, ...]:
        return tuple(o for o in self.outcomes if o.error is not None)


def extrinsic(instances: Sequence[ProofInstance], ranker: PairRanker,
              step_model: StepModel, entailment: EntailmentScorer,
              config: SearchConfig | None = None, *, encoder: Encoder | None = None,
              jobs: int = 1,
              on_result: Callable[[SearchResult], None] | None = None) -> ExtrinsicReport:
    """Search every instance; failures are recorded, never counted solved.

    With jobs > 1 instances run on a thread pool; outcomes keep dataset
    order either way.
    """
    if not instances:
        raise EmptyDatasetError("no instances to search")
    base = config or SearchConfig()

    def solve(instance: ProofInstance) -> InstanceOutcome:
        try:
            result = run_search(instance, ranker, step_model, entailment,
                                SearchConfig(**vars(base)), encoder=encoder)
        except ProofPlanError as exc:
            return InstanceOutcome(instance.instance_id, False, "error", 0,
                                   error=str(exc))
        if on_result is not None:
            on_result(result)
        return InstanceOutcome(instance.instance_id, result.proved,
                               result.termination.value, result.step_count)

    if jobs <= 1:
        outcomes = [solve(instance) for instance in instances]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(solve, instances))
    return ExtrinsicReport(tuple(outcomes))


# ---------------------------------------------------------------------------
# single-step reasoning contrast set


class Category(enum.Enum):
    ANALOGY = "Analogy"
    CATEGORICAL_SYLLOGISM = "Categorical Syllogism"
    CAUSAL_REASONING = "Causal Reasoning"
    CLASSIFICATION = "Classification"
    COMPARISON = "Comparison"
    COMPOSITION = "Composition"
    DIVISION = "Division"
    MODUS_PONENS = "Modus Ponens"
    MODUS_TOLLENS = "Modus Tollens"
    DEFINITION = "Definition"
    TEMPORAL_LOGIC = "Temporal Logic"
    PROPOSITIONAL_LOGIC = "Propositional Logic"
    QUANTIFICATIONAL_LOGIC = "Quantificational Logic"
    SPATIAL_RELATIONSHIP = "Spatial Relationship"


# accepted spelling variants seen in the wild, normalized -> canonical
CATEGORY_ALIASES = {
    "causal reasoning": Category.CAUSAL_REASONING,
    "comparative reasoning": Category.COMPARISON,
    "comparison reasoning": Category.COMPARISON,
    "divisions": Category.DIVISION,
    "quantification logic": Category.QUANTIFICATIONAL_LOGIC,
    "quantificational logic": Category.QUANTIFICATIONAL_LOGIC,
    "spatial reasoning": Category.SPATIAL_RELATIONSHIP,
    "spatial relationship": Category.SPATIAL_RELATIONSHIP,
    "temporal reasoning": Category.TEMPORAL_LOGIC,
    "temporal logic": Category.TEMPORAL_LOGIC,
}


class Perturbation(enum.Enum):
    NEGATION = "negation"
    FALSE_PREMISE = "false_premise"
    IRRELEVANT_FACT = "irrelevant_fact"
    INCORRECT_QUANTIFIER = "incorrect_quantifier"


@dataclass(frozen=True)
class SlotVariants:
    """Perturbed stand-ins for the first and second gold premise."""

    first: tuple[str, ...]
    second: tuple[str, ...]

    @property
    def empty(self) -> bool:
        return not self.first and not self.second


@dataclass(frozen=True)
class SsrcExample:
    example_id: str
    category: Category
    premise_first: str
    premise_second: str
    conclusion: str
    variants: Mapping[Perturbation, SlotVariants]


def ssrc_candidate_pairs(example: SsrcExample,
                         perturbation: Perturbation) -> list[tuple[str, str]]:
    """Cross product of slot candidates; the gold pair is element 0.

    Slot candidates are the gold premise plus its perturbed variants, so
    one perturbed slot of v variants gives (1+v) pairs and two perturbed
    slots give (1+v1)(1+v2); same-slot variants never pair with each other.
    """
    variants = example.variants.get(perturbation)
    if variants is None or variants.empty:
        raise MissingVariantsError(
            f"example {example.example_id!r} has no variants for {perturbation.value}")
    firsts = [example.premise_first, *variants.first]
    seconds = [example.premise_second, *variants.second]
    return [(f, s) for f in firsts for s in seconds]


@dataclass(frozen=True)
class SsrcCell:
    category: Category
    perturbation: Perturbation
    reciprocals: tuple[float, ...]

    @property
    def mrr(self) -> float:
        return sum(self.reciprocals) / len(self.reciprocals)


@dataclass(frozen=True)
class SsrcReport:
    cells: tuple[SsrcCell, ...]

    def cell(self, category: Category, perturbation: Perturbation) -> SsrcCell | None:
        for c in self.cells:
            if c.category is category and c.perturbation is perturbation:
                return c
        return None

    @property
    def per_category(self) -> dict[Category, float]:
        out = {}
        for category in Category:
            cells = [c.mrr for c in self.cells if c.category is category]
            if cells:
                out[category] = sum(cells) / len(cells)
        return out

    @property
    def per_perturbation(self) -> dict[Perturbation, float]:
        out = {}
        for perturbation in Perturbation:
            cells = [c.mrr for c in self.cells if c.perturbation is perturbation]
            if cells:
                out[perturbation] = sum(cells) / len(cells)
        return out

    @property
    def overall(self) -> float:
        """Mean over categories of the per-category perturbation means."""
        per_cat = self.per_category
        if not per_cat:
            raise EmptyDatasetError("contrast report holds no cells")
        return sum(per_cat.values()) / len(per_cat)


def ssrc_breakdown(examples: Sequence[SsrcExample], ranker: PairRanker) -> SsrcReport:
    """Rank each gold pair against its perturbed variants, cell by cell."""
    if not examples:
        raise EmptyDatasetError("no contrast examples supplied")
    buckets: dict[tuple[Category, Perturbation], list[float]] = {}
    for example in examples:
        for perturbation, variants in example.variants.items():
            if variants.empty:
                raise MissingVariantsError(
                    f"example {example.example_id!r} lists {perturbation.value} "
                    "with no variant premises")
            pairs = ssrc_candidate_pairs(example, perturbation)
            scores = ranker.score_pairs(pairs, example.conclusion)
            rank = pessimistic_rank(scores, 0)
            buckets.setdefault((example.category, perturbation), []).append(1.0 / rank)
    cells = [SsrcCell(category, perturbation, tuple(vals))
             for (category, perturbation), vals in sorted(
                 buckets.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))]
    return SsrcReport(tuple(cells))
