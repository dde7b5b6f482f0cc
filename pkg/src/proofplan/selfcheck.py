"""Offline self-verification suite.

Seven checks cover the load-bearing machinery with independently computed
expectations: additive ranking on constructed instances, BM25 against a
direct-formula evaluation, hand-written gradients against central
differences, identity-at-init of the projection path, full search replay
against annotated trees, validator behavior audited from traces, and the
pair-partition combinatorics. The CLI ``selftest`` subcommand and the test
suite both run exactly this module, so a shipped binary can re-verify
itself without the tests installed.

All checks are deterministic, need no network or datasets, and finish in
well under a minute together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bm25 import Bm25Index, tokenize
from .core import NodeKind, Origin, ProofInstance, Statement, Vector, normalize_text
from .encoders import ConceptLexicon, ProjectedEncoder, SyntheticAdditiveEncoder
from .evaluation import Conditioning, build_pair_sets, mrr
from .heuristics import AdditiveHeuristic, MockPairScorer, rank_pairs
from .oracles import (
    NoisyConceptStepModel,
    OracleEntailment,
    OraclePairRanker,
    OracleStepModel,
    ScriptedStepModel,
)
from .projection import ProjectionHead
from .search import (
    SearchConfig,
    proof_tree_from_gold,
    run_search,
    trees_isomorphic,
)
from .synthetic import (
    random_additive_instance,
    random_gold_tree_instance,
    random_search_world,
)
from .tuning import Triplet, gradient_check, infonce_loss


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    @property
    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# 1. additive ranking on constructed instances


def check_synthetic_additivity(n_instances: int = 200, seed: int = 7201) -> CheckResult:
    """Goal built as the disjoint union of one pair's concepts must rank
    that pair first on every instance: aggregate MRR exactly 1.0."""
    rng = np.random.default_rng(seed)
    reciprocals = []
    for _ in range(n_instances):
        built = random_additive_instance(rng)
        ranker = AdditiveHeuristic(SyntheticAdditiveEncoder(built.lexicon))
        report = mrr([built.instance], ranker, Conditioning.DEDUCTION)
        reciprocals.extend(e.reciprocal for e in report.entries)
    overall = sum(reciprocals) / len(reciprocals)
    return CheckResult(
        "synthetic additive ranking",
        overall == 1.0,
        f"MRR {overall} over {n_instances} instances (want exactly 1.0)")


# ---------------------------------------------------------------------------
# 2. BM25 against a direct-formula evaluation


_BM25_DOCS = ("the cat sat on the mat",
              "the dog sat on the log",
              "cats and dogs play")

# computed once by a standalone direct-formula script over _BM25_DOCS
# (k1=1.2, b=0.75, plus-one idf); frozen so any scoring drift is caught
_BM25_EXPECTED = {
    "the cat sat": (2.0045585306470235, 1.0714452953493814, 0.0),
    "cat cat mat": (2.799339705892927, 0.0, 0.0),
    "dogs play chess": (0.0, 0.0, 2.1851385889881496),
    "the": (0.6243067075264112, 0.6243067075264112, 0.0),
}


def brute_force_bm25(documents: tuple[str, ...], query: str,
                     k1: float = 1.2, b: float = 0.75) -> list[float]:
    """Independent scorer: plain token counting, no index, no postings."""
    doc_tokens = [tokenize(d) for d in documents]
    n = len(documents)
    avgdl = sum(len(t) for t in doc_tokens) / n if n else 0.0
    out = []
    for tokens in doc_tokens:
        total = 0.0
        for term in tokenize(query):
            tf = tokens.count(term)
            if tf == 0:
                continue
            df = sum(1 for other in doc_tokens if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1.0) / (
                tf + k1 * (1.0 - b + b * len(tokens) / avgdl))
        out.append(total)
    return out


def check_bm25(n_corpora: int = 1000, seed: int = 7202) -> CheckResult:
    index = Bm25Index().build(list(_BM25_DOCS))
    for query, expected in _BM25_EXPECTED.items():
        got = [index.score(tokenize(query), d) for d in range(len(_BM25_DOCS))]
        for d, (g, e) in enumerate(zip(got, expected)):
            if abs(g - e) > 1e-9:
                return CheckResult(
                    "bm25 scoring", False,
                    f"fixture query {query!r} doc {d}: {g} vs frozen {e}")

    rng = np.random.default_rng(seed)
    vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta",
             "theta", "iota", "kappa"]
    for trial in range(n_corpora):
        n_docs = int(rng.integers(1, 51))
        docs = tuple(
            " ".join(rng.choice(vocab, size=rng.integers(1, 12)))
            for _ in range(n_docs))
        query = " ".join(rng.choice(vocab, size=rng.integers(1, 5)))
        k = int(rng.integers(1, n_docs + 3))
        index = Bm25Index().build(list(docs))
        got = index.top_k(tokenize(query), k)
        truth = brute_force_bm25(docs, query)
        want = sorted(range(n_docs), key=lambda d: (-truth[d], d))[:k]
        if [d for d, _ in got] != want:
            return CheckResult("bm25 scoring", False,
                               f"trial {trial}: top_k order diverges from brute force")
        for d, score in got:
            if abs(score - truth[d]) > 1e-9:
                return CheckResult("bm25 scoring", False,
                                   f"trial {trial}: doc {d} score {score} vs {truth[d]}")
    return CheckResult(
        "bm25 scoring", True,
        f"4 frozen fixture queries at 1e-9; top_k == brute force on {n_corpora} corpora")


# ---------------------------------------------------------------------------
# 3. gradients against central differences


def check_gradients(n_configs: int = 100, tolerance: float = 1e-4) -> CheckResult:
    taus = (0.05, 0.1, 1.0)
    worst = 0.0
    for config in range(n_configs):
        rng = np.random.default_rng(9000 + config)
        dim = int(rng.integers(2, 9))
        batch_size = int(rng.integers(1, 7))
        tau = taus[config % len(taus)]
        head = ProjectionHead.initialize(dim, seed=int(rng.integers(1 << 30)))
        for name, arr in head.params().items():
            if "value" in name:
                arr += rng.normal(0.0, 0.3, size=arr.shape)
        batch = [Triplet(_rand_vec(rng, dim), _rand_vec(rng, dim),
                         _rand_vec(rng, dim), tree_id=f"t{i}")
                 for i in range(batch_size)]
        report = gradient_check(batch, head, tau)
        worst = max(worst, report.max_rel_err)
        if report.max_rel_err >= tolerance:
            return CheckResult(
                "gradient check", False,
                f"config {config} (dim {dim}, N {batch_size}, tau {tau}): "
                f"rel err {report.max_rel_err:.3e} at {report.worst_param}")
    return CheckResult(
        "gradient check", True,
        f"max rel err {worst:.3e} < {tolerance:g} over {n_configs} configurations")


def _rand_vec(rng: np.random.Generator, dim: int) -> Vector:
    return Vector(rng.normal(0.0, 1.0, size=dim))


# ---------------------------------------------------------------------------
# 4. identity at init and loss pins


def check_identity_and_loss(seed: int = 7204) -> CheckResult:
    rng = np.random.default_rng(seed)
    for trial in range(20):
        built = random_additive_instance(rng)
        base = SyntheticAdditiveEncoder(built.lexicon)
        head = ProjectionHead.initialize(base.lexicon.dim, seed=trial)
        projected = ProjectedEncoder(base, head)
        texts = [p.text for p in built.instance.premises]
        pairs = [(texts[i], texts[j]) for i in range(len(texts))
                 for j in range(i + 1, len(texts))]
        goal = built.instance.goal.text
        base_ranked = rank_pairs(pairs, goal, AdditiveHeuristic(base))
        proj_ranked = rank_pairs(pairs, goal, AdditiveHeuristic(projected))
        if base_ranked != proj_ranked:
            return CheckResult("identity at init", False,
                               f"trial {trial}: projected ranking diverged from base")

    dim = 5
    head = ProjectionHead.initialize(dim, seed=seed)
    single = [Triplet(_rand_vec(rng, dim), _rand_vec(rng, dim),
                      _rand_vec(rng, dim), tree_id="solo")]
    loss_one, _ = infonce_loss(single, head)
    if loss_one != 0.0:
        return CheckResult("identity at init", False,
                           f"singleton batch loss {loss_one} != 0")

    for n in (2, 3, 6):
        a = Vector(np.ones(dim))
        d = Vector(np.arange(1.0, dim + 1.0))
        batch = [Triplet(a, a, d, tree_id=f"t{i}") for i in range(n)]
        loss_n, _ = infonce_loss(batch, ProjectionHead.identity(dim))
        if abs(loss_n - math.log(n)) > 1e-12:
            return CheckResult("identity at init", False,
                               f"all-equal logits N={n}: loss {loss_n} vs ln {n}")
    return CheckResult(
        "identity at init", True,
        "fresh head reproduces base rankings; loss pins (N=1 -> 0, equal logits -> ln N) hold")


# ---------------------------------------------------------------------------
# 5. oracle search replay


def check_oracle_replay(n_trees: int = 50, seed: int = 7205) -> CheckResult:
    rng = np.random.default_rng(seed)
    for trial in range(n_trees):
        instance = random_gold_tree_instance(rng, uid=str(trial))
        ranker = OraclePairRanker([instance])
        result = run_search(instance, ranker, OracleStepModel([instance]),
                            OracleEntailment(), SearchConfig(seed=trial))
        gold = proof_tree_from_gold(instance)
        wanted_steps = len(instance.gold_tree.steps)
        if not result.proved:
            return CheckResult("oracle replay", False,
                               f"tree {trial}: not proved ({result.termination.value})")
        if result.step_count != wanted_steps:
            return CheckResult(
                "oracle replay", False,
                f"tree {trial}: {result.step_count} steps, annotation has {wanted_steps}")
        if not trees_isomorphic(result.proof, gold):
            return CheckResult("oracle replay", False,
                               f"tree {trial}: extracted proof not isomorphic to annotation")
    return CheckResult(
        "oracle replay", True,
        f"{n_trees} annotated trees replayed: all proved, step counts and shapes match")


# ---------------------------------------------------------------------------
# 6. validator behavior


def _audit_trace(trace: list[dict]) -> str | None:
    """Replay a trace checking enqueue-time consanguinity and duplicate
    filtering; returns a complaint or None."""
    parents: dict[int, tuple[list, list]] = {}
    kept_norms: list[str] = []
    current_pair = None

    for event in trace:
        kind = event["event"]
        if kind == "popped":
            current_pair = (event["left"], event["right"])
        elif kind == "generation":
            if event["kept"]:
                norm = normalize_text(event["text"])
                if norm in kept_norms:
                    return f"kept duplicate generation {event['text']!r}"
                kept_norms.append(norm)
                parents[event["node"]] = current_pair
        elif kind == "enqueued":
            left, right = event["left"], event["right"]
            if left == right:
                return f"self-pair enqueued: {left}"
            for ref, other in ((left, right), (right, left)):
                if ref[0] == NodeKind.INTERMEDIATE.value:
                    mother, father = parents[ref[1]]
                    if other == mother or other == father:
                        return f"consanguine pair enqueued: {left} x {right}"
    return None


def check_validators(n_searches: int = 1000, seed: int = 7206) -> CheckResult:
    rng = np.random.default_rng(seed)
    total_events = 0
    for trial in range(n_searches):
        world = random_search_world(rng, uid=str(trial))
        encoder = SyntheticAdditiveEncoder(world.lexicon)
        ranker = AdditiveHeuristic(encoder)
        result = None
        try:
            result = run_search(
                world.instance, ranker, NoisyConceptStepModel(),
                OracleEntailment(),
                SearchConfig(max_steps=4, k_samples=3, seed=trial,
                             filter_agreement=False))
        except Exception as exc:  # audit failures must name the trial
            return CheckResult("validator audit", False, f"search {trial} raised {exc!r}")
        complaint = _audit_trace(result.trace)
        if complaint:
            return CheckResult("validator audit", False, f"search {trial}: {complaint}")
        total_events += len(result.trace)

    complaint = _agreement_scenario()
    if complaint:
        return CheckResult("validator audit", False, complaint)
    return CheckResult(
        "validator audit", True,
        f"{n_searches} traces clean ({total_events} events); "
        "running-mean pruning fires exactly as documented")


def _agreement_scenario() -> str | None:
    """Hand-built run where the second deduction drives its branch mean to
    (0 + 1/sqrt(5))/2 ~ 0.224 < 0.6 at count 2, forcing one prune.

    Pool: "a", "b", "c d" over a 4-concept one-hot space. The scripted
    step "a"+"b" -> "c" has agreement cosine 0 (kept, count 1); the next
    scripted step "c"+"c d" -> "d" has cosine 1/sqrt(5); its chain mean
    falls short at count 2, so the branch below "c" must vanish.
    """
    lexicon = ConceptLexicon(["a", "b", "c", "d"])
    instance = ProofInstance(
        "agreement-script",
        (Statement("p0", "a"), Statement("p1", "b"), Statement("p2", "c d")),
        Statement("g", "a b c d", Origin.GOAL))
    goal = instance.goal.text
    ranker = MockPairScorer({("a", "b", goal): 2.0, ("c", "c d", goal): 1.0},
                            default=0.0, symmetric=True)
    steps = ScriptedStepModel({("a", "b"): ["c"], ("c", "c d"): ["d"]})
    result = run_search(
        instance, ranker, steps, OracleEntailment(),
        SearchConfig(max_steps=3, k_samples=1, agreement_threshold=0.6,
                     agreement_min_count=2),
        encoder=SyntheticAdditiveEncoder(lexicon))

    if result.proved:
        return "agreement scenario: run proved unexpectedly"
    prune_events = [e for e in result.trace if e["event"] == "branch_pruned"]
    if len(prune_events) != 1 or prune_events[0]["nodes"] != [0]:
        return f"agreement scenario: prune events {prune_events!r}"
    rejected = [e for e in result.trace
                if e["event"] == "generation" and e["reason"] == "agreement_pruned"]
    if len(rejected) != 1:
        return f"agreement scenario: {len(rejected)} rejections, wanted 1"
    mean = rejected[0]["branch_mean"]
    expected = (0.0 + 1.0 / math.sqrt(5.0)) / 2.0
    if abs(mean - expected) > 1e-12:
        return f"agreement scenario: branch mean {mean} vs expected {expected}"
    if len(result.intermediates) != 1 or result.intermediates[0].statement.text != "c":
        return "agreement scenario: kept pool should hold only the first deduction"
    return None


# ---------------------------------------------------------------------------
# 7. pair partition combinatorics


def check_pair_partition(n_trials: int = 1000, seed: int = 7207) -> CheckResult:
    rng = np.random.default_rng(seed)
    for trial in range(n_trials):
        pool = int(rng.integers(3, 13))
        a, b = rng.choice(pool, size=2, replace=False)
        gold = (min(int(a), int(b)), max(int(a), int(b)))
        sets = build_pair_sets(pool, gold)
        n_pairs = pool * (pool - 1) // 2
        all_pairs = sets.all_pairs
        if len(all_pairs) != n_pairs or len(set(all_pairs)) != n_pairs:
            return CheckResult("pair partition", False,
                               f"trial {trial}: tiling broken for pool {pool}")
        if sets.gold != (gold,):
            return CheckResult("pair partition", False,
                               f"trial {trial}: gold set {sets.gold!r}")
        if len(sets.partial) != 2 * (pool - 2):
            return CheckResult("pair partition", False,
                               f"trial {trial}: partial count {len(sets.partial)}")
        if len(sets.random) != (pool - 2) * (pool - 3) // 2:
            return CheckResult("pair partition", False,
                               f"trial {trial}: random count {len(sets.random)}")
    return CheckResult(
        "pair partition", True,
        f"partitions tile C(n,2) with exact set sizes on {n_trials} random pools")


# ---------------------------------------------------------------------------


CHECKS: tuple[tuple[str, Callable[[], CheckResult]], ...] = (
    ("synthetic additive ranking", check_synthetic_additivity),
    ("bm25 scoring", check_bm25),
    ("gradient check", check_gradients),
    ("identity at init", check_identity_and_loss),
    ("oracle replay", check_oracle_replay),
    ("validator audit", check_validators),
    ("pair partition", check_pair_partition),
)


def run_all(fast: bool = False) -> list[CheckResult]:
    """Run every check; ``fast`` shrinks the trial counts for smoke use."""
    if fast:
        return [
            check_synthetic_additivity(30),
            check_bm25(60),
            check_gradients(10),
            check_identity_and_loss(),
            check_oracle_replay(10),
            check_validators(60),
            check_pair_partition(100),
        ]
    return [check() for _, check in CHECKS]
