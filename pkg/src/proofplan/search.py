"""Best-first deduction search over scored premise pairs.

The fringe holds unordered pairs of pool nodes (input premises plus kept
generated deductions), each scored by a pair heuristic against the goal.
One iteration pops the best-scoring pair (ties go to the earliest
enqueued), samples up to k candidate deductions from the step model,
validates each, and lets every kept deduction join the pool: it is paired
with all premises and all earlier kept deductions, subject to the
validators below. The run stops as soon as a kept deduction entails the
goal at or above the entailment threshold, when the fringe empties, or
when the productive-step budget is spent.

Validators applied to each sampled deduction, in order:

1. parents still alive: a deduction whose branch was pruned earlier in the
   same pop is dropped with it;
2. duplicate of either input text (exact, normalized);
3. duplicate of any previously kept deduction (exact, normalized);
4. deduction agreement: cosine between the summed parent embeddings and
   the deduction embedding, averaged along the deduction's intermediate
   ancestor chain including itself. Once the chain holds at least
   ``agreement_min_count`` deductions and the running mean sits below the
   agreement threshold, the branch is pruned: the deduction is dropped and
   every fringe pair touching the chain or its descendants is removed.
   Requires an encoder; silently disabled without one.

Consanguinity is enforced at enqueue time instead: a node is never queued
against itself or either of its direct parents.

A pop whose samples are all filtered does not count against the step
budget; it is flagged in the trace and the loop moves on. Each popped
step's model call receives ``config.seed + pop_index`` so reruns are
exactly reproducible with deterministic backends.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from .core import (
    CandidateStep,
    Intermediate,
    NodeKind,
    NodeRef,
    Origin,
    ProofInstance,
    Statement,
    Vector,
    canonical_pair,
    cosine,
    intermediate_ref,
    normalize_text,
    premise_ref,
    vec_sum,
)
from .encoders import Encoder
from .errors import (
    EncodingFailureError,
    EntailmentFailureError,
    NodeNotFoundError,
    NoGoldTreeError,
    ProofPlanError,
    RemoteFailureError,
    StepModelFailureError,
)
from .heuristics import PairRanker
from .remote import DEFAULT_RETRIES, DEFAULT_TIMEOUT, RemoteClient


class Termination(enum.Enum):
    PROVED = "proved"
    FRINGE_EXHAUSTED = "fringe_exhausted"
    MAX_STEPS = "max_steps"


class FilterReason(enum.Enum):
    DUPLICATE_OF_INPUT = "duplicate_of_input"
    DUPLICATE_GENERATION = "duplicate_generation"
    AGREEMENT_PRUNED = "agreement_pruned"


@dataclass
class SearchConfig:
    max_steps: int = 10
    k_samples: int = 5
    entailment_threshold: float = 0.9
    agreement_threshold: float = 0.6
    agreement_min_count: int = 2
    filter_duplicates: bool = True
    filter_consanguinity: bool = True
    filter_agreement: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.k_samples < 1:
            raise ValueError("k_samples must be >= 1")
        if not 0.0 < self.entailment_threshold <= 1.0:
            raise ValueError("entailment_threshold must lie in (0, 1]")
        if not -1.0 <= self.agreement_threshold <= 1.0:
            raise ValueError("agreement_threshold must lie in [-1, 1]")
        if self.agreement_min_count < 1:
            raise ValueError("agreement_min_count must be >= 1")


@runtime_checkable
class StepModel(Protocol):
    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        """Up to k candidate deduction texts for the premise pair."""


@runtime_checkable
class EntailmentScorer(Protocol):
    def score(self, premise_text: str, hypothesis_text: str) -> float:
        """Entailment confidence in [0, 1] that premise entails hypothesis."""


class RemoteStepModel:
    """POST {"left","right","k","seed"} -> {"generations": [...]}."""

    def __init__(self, url: str, *, timeout: float = DEFAULT_TIMEOUT,
                 retries: int = DEFAULT_RETRIES, backoff: float = 0.25,
                 max_inflight: int = 4, session=None):
        self._client = RemoteClient(url, timeout=timeout, retries=retries,
                                    backoff=backoff, max_inflight=max_inflight,
                                    session=session)

    def generate(self, left_text: str, right_text: str, k: int, seed: int) -> list[str]:
        body = self._client.post(
            {"left": left_text, "right": right_text, "k": k, "seed": seed})
        generations = body.get("generations")
        if not isinstance(generations, list) or len(generations) > k:
            raise RemoteFailureError(f"{self._client.url}: bad generations payload")
        if not all(isinstance(g, str) and g.strip() for g in generations):
            raise RemoteFailureError(f"{self._client.url}: empty generation in payload")
        return generations


class RemoteEntailment:
    """POST {"premise","hypothesis"} -> {"score": x} with x in [0, 1]."""

    def __init__(self, url: str, *, timeout: float = DEFAULT_TIMEOUT,
                 retries: int = DEFAULT_RETRIES, backoff: float = 0.25,
                 max_inflight: int = 4, session=None):
        self._client = RemoteClient(url, timeout=timeout, retries=retries,
                                    backoff=backoff, max_inflight=max_inflight,
                                    session=session)

    def score(self, premise_text: str, hypothesis_text: str) -> float:
        body = self._client.post({"premise": premise_text, "hypothesis": hypothesis_text})
        raw = body.get("score")
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise RemoteFailureError(f"{self._client.url}: bad score {raw!r}") from None
        if not 0.0 <= value <= 1.0:
            raise RemoteFailureError(f"{self._client.url}: score {value} outside [0, 1]")
        return value


@dataclass(frozen=True)
class AgreementResult:
    agreement: float
    branch_mean: float
    count: int
    prune: bool


def deduction_agreement(pair_sum: Vector, gen_embedding: Vector,
                        branch_agreements: Sequence[float],
                        min_count: int, threshold: float) -> AgreementResult:
    """Agreement of one deduction plus the branch-level prune decision.

    ``branch_agreements`` are the agreement values of the deduction's
    intermediate ancestors; the new deduction extends that chain. Pruning
    needs both a branch of at least ``min_count`` deductions and a running
    mean below ``threshold``, so a single early outlier never kills a
    branch on its own.
    """
    agreement = cosine(pair_sum, gen_embedding)
    count = len(branch_agreements) + 1
    branch_mean = (sum(branch_agreements) + agreement) / count
    prune = count >= min_count and branch_mean < threshold
    return AgreementResult(agreement, branch_mean, count, prune)


@dataclass
class GenerationRecord:
    text: str
    kept: bool
    reason: FilterReason | None = None
    node_index: int | None = None
    agreement: float | None = None
    branch_mean: float | None = None
    entailment: float | None = None


@dataclass
class StepRecord:
    step: CandidateStep
    left_text: str
    right_text: str
    generations: list[GenerationRecord] = field(default_factory=list)

    @property
    def kept(self) -> list[GenerationRecord]:
        return [g for g in self.generations if g.kept]


@dataclass(frozen=True)
class ProofNode:
    statement: Statement
    children: tuple["ProofNode", "ProofNode"] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass(frozen=True)
class ProofTree:
    root: ProofNode

    def internal_count(self) -> int:
        def count(node: ProofNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + count(node.children[0]) + count(node.children[1])
        return count(self.root)

    def leaf_texts(self) -> list[str]:
        out: list[str] = []

        def walk(node: ProofNode) -> None:
            if node.is_leaf:
                out.append(node.statement.text)
            else:
                walk(node.children[0])
                walk(node.children[1])
        walk(self.root)
        return out

    def canonical(self):
        """Order-insensitive structural form keyed by normalized text."""
        def canon(node: ProofNode):
            if node.is_leaf:
                return ("leaf", normalize_text(node.statement.text))
            a = canon(node.children[0])
            b = canon(node.children[1])
            if b < a:
                a, b = b, a
            return ("node", normalize_text(node.statement.text), a, b)
        return canon(self.root)


def trees_isomorphic(a: ProofTree, b: ProofTree) -> bool:
    """Equality up to child order, comparing normalized statement texts."""
    return a.canonical() == b.canonical()


def proof_tree_from_gold(instance: ProofInstance) -> ProofTree:
    """The annotated tree as a ProofTree (ancestors of the root only)."""
    tree = instance.gold_tree
    if tree is None:
        raise NoGoldTreeError(f"instance {instance.instance_id!r} has no gold tree")
    by_conclusion = {step.conclusion.id: step for step in tree.steps}
    premise_ids = {p.id: p for p in instance.premises}

    def build(node_id: str) -> ProofNode:
        if node_id in by_conclusion:
            step = by_conclusion[node_id]
            return ProofNode(step.conclusion, (build(step.left_id), build(step.right_id)))
        if node_id in premise_ids:
            return ProofNode(premise_ids[node_id])
        raise NodeNotFoundError(f"gold tree references unknown id {node_id!r}")

    return ProofTree(build(tree.root_id))


@dataclass
class SearchResult:
    instance_id: str
    proved: bool
    termination: Termination
    steps_taken: list[StepRecord]
    intermediates: list[Intermediate]
    proof: ProofTree | None
    goal_entailment: float | None
    trace: list[dict]

    @property
    def step_count(self) -> int:
        return len(self.steps_taken)


def extract_proof(premises: Sequence[Statement], intermediates: Sequence[Intermediate],
                  proving_index: int) -> ProofTree:
    """Minimal tree above one kept deduction: exactly its ancestors.

    Leaves are always input premises; shared ancestors are expanded in each
    position they occupy.
    """
    if not 0 <= proving_index < len(intermediates):
        raise NodeNotFoundError(f"no kept deduction with index {proving_index}")

    def build(ref: NodeRef) -> ProofNode:
        if ref.kind is NodeKind.PREMISE:
            if not 0 <= ref.index < len(premises):
                raise NodeNotFoundError(f"premise index {ref.index} out of range")
            return ProofNode(premises[ref.index])
        node = intermediates[ref.index]
        return ProofNode(node.statement,
                         (build(node.parents[0]), build(node.parents[1])))

    return ProofTree(build(intermediate_ref(proving_index)))


@dataclass
class _FringeEntry:
    left: NodeRef
    right: NodeRef
    left_text: str
    right_text: str
    score: float
    seq: int


class _Search:
    def __init__(self, instance: ProofInstance, ranker: PairRanker,
                 step_model: StepModel, entailment: EntailmentScorer,
                 config: SearchConfig, encoder: Encoder | None):
        self.instance = instance
        self.ranker = ranker
        self.step_model = step_model
        self.entailment = entailment
        self.config = config
        self.encoder = encoder
        self.agreement_on = config.filter_agreement and encoder is not None

        self.premises = list(instance.premises)
        self.goal_text = instance.goal.text
        self.intermediates: list[Intermediate] = []
        self.ancestor_chains: list[frozenset[int]] = []
        self.kept_norms: set[str] = set()
        self.pruned: set[int] = set()
        self.fringe: dict[int, _FringeEntry] = {}
        self.enqueued: set[tuple[NodeRef, NodeRef]] = set()
        self.seq_counter = 0
        self.pop_counter = 0
        self.steps_taken: list[StepRecord] = []
        self.trace: list[dict] = []

    # -- plumbing ----------------------------------------------------------

    def _event(self, kind: str, **fields) -> None:
        self.trace.append({"event": kind, **fields})

    def _node_text(self, ref: NodeRef) -> str:
        if ref.kind is NodeKind.PREMISE:
            return self.premises[ref.index].text
        return self.intermediates[ref.index].statement.text

    def _encode(self, text: str) -> Vector:
        try:
            return self.encoder.encode(text)
        except ProofPlanError as exc:
            raise EncodingFailureError(f"encoding failed: {exc}", partial=self.trace) from exc

    def _score_pairs(self, texts: list[tuple[str, str]]) -> list[float]:
        try:
            return self.ranker.score_pairs(texts, self.goal_text)
        except ProofPlanError as exc:
            raise EncodingFailureError(
                f"heuristic scoring failed: {exc}", partial=self.trace) from exc

    def _generate(self, left_text: str, right_text: str, seed: int) -> list[str]:
        try:
            generations = self.step_model.generate(
                left_text, right_text, self.config.k_samples, seed)
        except ProofPlanError as exc:
            raise StepModelFailureError(
                f"step model failed: {exc}", partial=self.trace) from exc
        if len(generations) > self.config.k_samples:
            raise StepModelFailureError(
                f"step model returned {len(generations)} generations for k="
                f"{self.config.k_samples}", partial=self.trace)
        for text in generations:
            if not isinstance(text, str) or not normalize_text(text):
                raise StepModelFailureError(
                    "step model produced an empty generation", partial=self.trace)
        return generations

    def _entail(self, premise_text: str) -> float:
        try:
            value = self.entailment.score(premise_text, self.goal_text)
        except ProofPlanError as exc:
            raise EntailmentFailureError(
                f"entailment scoring failed: {exc}", partial=self.trace) from exc
        if not 0.0 <= value <= 1.0:
            raise EntailmentFailureError(
                f"entailment score {value} outside [0, 1]", partial=self.trace)
        return value

    # -- fringe ------------------------------------------------------------

    def _enqueue_pairs(self, pairs: list[tuple[NodeRef, NodeRef]]) -> None:
        """Canonicalize, dedup, score (static rankers), and queue new pairs."""
        fresh: list[tuple[NodeRef, NodeRef]] = []
        for a, b in pairs:
            key = canonical_pair(a, b)
            if key in self.enqueued:
                continue
            self.enqueued.add(key)
            fresh.append(key)
        if not fresh:
            return
        texts = [(self._node_text(a), self._node_text(b)) for a, b in fresh]
        if self.ranker.dynamic_rescoring:
            scores = [0.0] * len(fresh)  # recomputed at every pop
        else:
            scores = self._score_pairs(texts)
        for (a, b), (lt, rt), score in zip(fresh, texts, scores):
            entry = _FringeEntry(a, b, lt, rt, score, self.seq_counter)
            self.fringe[self.seq_counter] = entry
            self._event("enqueued", seq=entry.seq, left=a.as_json(), right=b.as_json(),
                        score=None if self.ranker.dynamic_rescoring else score)
            self.seq_counter += 1

    def _pop(self) -> _FringeEntry:
        if self.ranker.dynamic_rescoring:
            entries = [self.fringe[seq] for seq in sorted(self.fringe)]
            scores = self._score_pairs([(e.left_text, e.right_text) for e in entries])
            for entry, score in zip(entries, scores):
                entry.score = score
        best = min(self.fringe.values(), key=lambda e: (-e.score, e.seq))
        del self.fringe[best.seq]
        self._event("popped", seq=best.seq, score=best.score,
                    left=best.left.as_json(), right=best.right.as_json())
        return best

    def _prune_branch(self, chain: frozenset[int]) -> None:
        """Drop a low-agreement branch: the chain, its descendants, and
        every fringe pair touching any of them."""
        doomed = set(chain)
        for idx, node_chain in enumerate(self.ancestor_chains):
            if idx not in doomed and node_chain & doomed:
                doomed.add(idx)
        self.pruned.update(doomed)
        removed = []
        for seq, entry in list(self.fringe.items()):
            for ref in (entry.left, entry.right):
                if ref.kind is NodeKind.INTERMEDIATE and ref.index in doomed:
                    removed.append(seq)
                    del self.fringe[seq]
                    break
        self._event("branch_pruned", nodes=sorted(doomed), removed_steps=sorted(removed))

    # -- validation --------------------------------------------------------

    def _validate(self, entry: _FringeEntry, text: str) -> GenerationRecord:
        record = GenerationRecord(text=text, kept=False)
        norm = normalize_text(text)

        for ref in (entry.left, entry.right):
            if ref.kind is NodeKind.INTERMEDIATE and ref.index in self.pruned:
                record.reason = FilterReason.AGREEMENT_PRUNED
                return record

        if self.config.filter_duplicates:
            if norm in (normalize_text(entry.left_text), normalize_text(entry.right_text)):
                record.reason = FilterReason.DUPLICATE_OF_INPUT
                return record
            if norm in self.kept_norms:
                record.reason = FilterReason.DUPLICATE_GENERATION
                return record

        chain: frozenset[int] = frozenset()
        for ref in (entry.left, entry.right):
            if ref.kind is NodeKind.INTERMEDIATE:
                chain = chain | self.ancestor_chains[ref.index]

        if self.agreement_on:
            pair_sum = vec_sum(self._encode(entry.left_text), self._encode(entry.right_text))
            gen_vec = self._encode(text)
            branch_agreements = [self.intermediates[i].agreement for i in sorted(chain)]
            result = deduction_agreement(
                pair_sum, gen_vec, branch_agreements,
                self.config.agreement_min_count, self.config.agreement_threshold)
            record.agreement = result.agreement
            record.branch_mean = result.branch_mean
            if result.prune:
                record.reason = FilterReason.AGREEMENT_PRUNED
                self._prune_branch(chain)
                return record
            embedding: Vector | None = gen_vec
        else:
            embedding = None

        index = len(self.intermediates)
        statement = Statement(id=f"gen{index}", text=text, origin=Origin.INTERMEDIATE)
        node = Intermediate(statement=statement, parents=(entry.left, entry.right),
                            embedding=embedding, agreement=record.agreement,
                            branch_agreement_mean=record.branch_mean)
        self.intermediates.append(node)
        self.ancestor_chains.append(chain | {index})
        self.kept_norms.add(norm)
        record.kept = True
        record.node_index = index
        return record

    def _expand(self, new_index: int) -> None:
        """Pair a fresh deduction with all premises and all earlier kept
        deductions, minus consanguine, pruned, and already-seen pairs."""
        me = intermediate_ref(new_index)
        parents = self.intermediates[new_index].parents
        partners: list[NodeRef] = [premise_ref(i) for i in range(len(self.premises))]
        partners.extend(intermediate_ref(j) for j in range(new_index))
        pairs = []
        for partner in partners:
            if partner.kind is NodeKind.INTERMEDIATE and partner.index in self.pruned:
                continue
            if self.config.filter_consanguinity and partner in parents:
                continue
            pairs.append((me, partner))
        self._enqueue_pairs(pairs)

    # -- main loop ---------------------------------------------------------

    def run(self) -> SearchResult:
        self._event("search_started", instance=self.instance.instance_id,
                    premises=len(self.premises), goal=self.goal_text,
                    agreement_validator=self.agreement_on)
        if self.encoder is not None:
            try:
                self.encoder.encode_batch([p.text for p in self.premises] + [self.goal_text])
            except ProofPlanError as exc:
                raise EncodingFailureError(
                    f"encoding premise pool failed: {exc}", partial=self.trace) from exc

        self._enqueue_pairs([
            (premise_ref(i), premise_ref(j))
            for i, j in itertools.combinations(range(len(self.premises)), 2)])

        proved_index: int | None = None
        proved_score: float | None = None

        while self.fringe and len(self.steps_taken) < self.config.max_steps:
            entry = self._pop()
            generations = self._generate(entry.left_text, entry.right_text,
                                         self.config.seed + self.pop_counter)
            self.pop_counter += 1
            records: list[GenerationRecord] = []
            for text in generations:
                record = self._validate(entry, text)
                records.append(record)
                self._event("generation",
                            text=text, kept=record.kept,
                            reason=record.reason.value if record.reason else None,
                            node=record.node_index, agreement=record.agreement,
                            branch_mean=record.branch_mean)
                if not record.kept:
                    continue
                score = self._entail(record.text)
                record.entailment = score
                if score >= self.config.entailment_threshold:
                    proved_index = record.node_index
                    proved_score = score
                    self._event("proved", node=record.node_index, score=score)
                    break
                self._expand(record.node_index)

            step = CandidateStep(entry.left, entry.right, entry.score, entry.seq)
            step_record = StepRecord(step, entry.left_text, entry.right_text, records)
            if step_record.kept:
                self.steps_taken.append(step_record)
            else:
                self._event("unproductive_pop", seq=entry.seq)
            if proved_index is not None:
                break

        if proved_index is not None:
            termination = Termination.PROVED
            proof = extract_proof(self.premises, self.intermediates, proved_index)
        elif len(self.steps_taken) >= self.config.max_steps:
            termination = Termination.MAX_STEPS
            proof = None
        else:
            termination = Termination.FRINGE_EXHAUSTED
            proof = None

        self._event("finished", termination=termination.value,
                    steps=len(self.steps_taken), kept_nodes=len(self.intermediates))
        return SearchResult(
            instance_id=self.instance.instance_id,
            proved=proved_index is not None,
            termination=termination,
            steps_taken=self.steps_taken,
            intermediates=self.intermediates,
            proof=proof,
            goal_entailment=proved_score,
            trace=self.trace,
        )


def run_search(instance: ProofInstance, ranker: PairRanker, step_model: StepModel,
               entailment: EntailmentScorer, config: SearchConfig | None = None,
               encoder: Encoder | None = None) -> SearchResult:
    """Run best-first deduction search on one instance.

    ``encoder`` powers the deduction-agreement validator; when omitted it
    is taken from the ranker when available (the additive heuristic carries
    one), and the validator switches off when neither supplies it.
    """
    config = config or SearchConfig()
    config.validate()
    if encoder is None:
        encoder = getattr(ranker, "encoder", None)
    return _Search(instance, ranker, step_model, entailment, config, encoder).run()
