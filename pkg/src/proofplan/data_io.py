"""Dataset loading, format adapters, and run artifact persistence.

The native interchange format is line-delimited JSON, one proving instance
per line:

    {"id": "...", "goal": "...", "goal_id": "goal",
     "premises": {"p1": "...", "p2": "..."},
     "instance_facts": ["p2"],
     "steps": [{"left": "p1", "right": "p2", "id": "i1", "text": "..."}],
     "root": "i1"}

``premises`` is an ordered id-to-text map; ``steps`` lists annotated
deductions in dependency order; ``instance_facts`` names the premises
specific to this instance (the rest count as general knowledge);
``goal_id``, ``root``, ``instance_facts``, and ``steps`` are optional.

Adapters convert two published layouts into this shape: entailment-tree
lines (records carrying ``hypothesis``, ``meta.triples``,
``meta.intermediate_conclusions``, and a proof string) and contrast-set
lines (records carrying ``category``, two ``premises``, a ``conclusion``,
and per-perturbation variant lists). Proof steps citing three or more
children are left-binarized into a chain of two-child steps; the invented
inner nodes reuse the annotated conclusion text. Single-child steps cannot
become deductions over a pair, so such proofs are rejected in strict mode
and dropped (instance kept, annotation discarded) in lenient mode.
"""

from __future__ import annotations

import enum
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .bm25 import Bm25Index, tokenize
from .core import GoldStep, GoldTree, Origin, ProofInstance, Statement
from .encoders import Encoder
from .errors import (
    DanglingReferenceError,
    NoGoldTreeError,
    ParseError,
    UnknownCategoryError,
    UnknownPerturbationError,
)
from .evaluation import (
    CATEGORY_ALIASES,
    Category,
    Perturbation,
    SlotVariants,
    SsrcExample,
)
from .tuning import Triplet


class DatasetFormat(enum.Enum):
    NATIVE = "native"
    ENTAILMENT_TREE = "entailment_tree"
    SSRC = "ssrc"


@dataclass(frozen=True)
class DatasetDescriptor:
    path: str
    format: DatasetFormat | None = None   # None: sniff from the first record
    split: str = ""


def _json_lines(path) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc.msg}", path, lineno) from None
            if not isinstance(record, dict):
                raise ParseError("record is not an object", path, lineno)
            yield lineno, record


def detect_format(path) -> DatasetFormat:
    """Sniff the layout from the first record's fields."""
    for lineno, record in _json_lines(path):
        if isinstance(record.get("premises"), dict):
            return DatasetFormat.NATIVE
        if "category" in record:
            return DatasetFormat.SSRC
        if "hypothesis" in record or "meta" in record:
            return DatasetFormat.ENTAILMENT_TREE
        raise ParseError("unrecognizable record layout", path, lineno)
    raise ParseError("file holds no records", path)


# ---------------------------------------------------------------------------
# native instance format


def _require(record: dict, field: str, path, lineno):
    if field not in record:
        raise ParseError(f"record missing {field!r}", path, lineno)
    return record[field]


def _native_instance(record: dict, path, lineno: int) -> ProofInstance:
    instance_id = str(_require(record, "id", path, lineno))
    premises_map = _require(record, "premises", path, lineno)
    if not isinstance(premises_map, dict) or not premises_map:
        raise ParseError("premises must be a nonempty id-to-text map", path, lineno)
    goal_text = str(_require(record, "goal", path, lineno))
    goal_id = str(record.get("goal_id", "goal"))
    instance_fact_ids = set(record.get("instance_facts", []))
    unknown_facts = instance_fact_ids - set(premises_map)
    if unknown_facts:
        raise DanglingReferenceError(
            f"instance_facts cite unknown premises {sorted(unknown_facts)}", path, lineno)

    premises = tuple(
        Statement(pid, str(text),
                  Origin.INSTANCE if pid in instance_fact_ids else Origin.GENERAL)
        for pid, text in premises_map.items())
    goal = Statement(goal_id, goal_text, Origin.GOAL)

    gold_tree = None
    raw_steps = record.get("steps") or []
    if raw_steps:
        known = set(premises_map)
        steps = []
        for raw in raw_steps:
            if not isinstance(raw, dict):
                raise ParseError("each step must be an object", path, lineno)
            left = str(_require(raw, "left", path, lineno))
            right = str(_require(raw, "right", path, lineno))
            step_id = str(_require(raw, "id", path, lineno))
            text = str(_require(raw, "text", path, lineno))
            for child in (left, right):
                if child not in known:
                    raise DanglingReferenceError(
                        f"step {step_id!r} cites unknown id {child!r}", path, lineno)
            steps.append(GoldStep(left, right,
                                  Statement(step_id, text, Origin.INTERMEDIATE)))
            known.add(step_id)
        root_id = str(record.get("root", steps[-1].conclusion.id))
        try:
            gold_tree = GoldTree(tuple(steps), root_id)
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None

    try:
        return ProofInstance(instance_id, premises, goal, gold_tree)
    except ValueError as exc:
        raise ParseError(str(exc), path, lineno) from None


def serialize_instances(instances: Sequence[ProofInstance], path) -> None:
    """Write native lines; load_instances of the output reproduces the input."""
    with open(path, "w", encoding="utf-8") as fh:
        for instance in instances:
            record: dict = {
                "id": instance.instance_id,
                "goal": instance.goal.text,
                "goal_id": instance.goal.id,
                "premises": {p.id: p.text for p in instance.premises},
            }
            facts = [p.id for p in instance.premises if p.origin is Origin.INSTANCE]
            if facts:
                record["instance_facts"] = facts
            if instance.gold_tree is not None:
                record["steps"] = [
                    {"left": s.left_id, "right": s.right_id,
                     "id": s.conclusion.id, "text": s.conclusion.text}
                    for s in instance.gold_tree.steps]
                record["root"] = instance.gold_tree.root_id
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# entailment-tree lines adapter


def _text_of(value, path, lineno) -> str:
    # published layouts store node text either bare or under "text"
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and isinstance(value.get("text"), str):
        return value["text"]
    raise ParseError(f"expected a text node, got {value!r}", path, lineno)


def _parse_proof_steps(proof: str, path, lineno: int) -> list[tuple[list[str], str]]:
    """Split "a & b -> int1: text; int1 & c -> hypothesis; " into
    (child ids, conclusion token) pairs; conclusion text after ':' is
    dropped here and resolved against the record's node maps instead."""
    steps = []
    for clause in proof.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        if "->" not in clause:
            raise ParseError(f"proof clause without '->': {clause!r}", path, lineno)
        lhs, rhs = clause.split("->", 1)
        children = [tok.strip() for tok in lhs.split("&")]
        if not all(children):
            raise ParseError(f"empty child id in clause {clause!r}", path, lineno)
        conclusion = rhs.strip().split(":", 1)[0].strip()
        if not conclusion:
            raise ParseError(f"empty conclusion in clause {clause!r}", path, lineno)
        steps.append((children, conclusion))
    return steps


def _fresh_id(base: str, taken: set[str]) -> str:
    candidate = base
    n = 0
    while candidate in taken:
        n += 1
        candidate = f"{base}{n}"
    taken.add(candidate)
    return candidate


def _eb_instance(record: dict, path, lineno: int, *, strict_gold: bool) -> ProofInstance:
    meta = record.get("meta", {})
    if not isinstance(meta, dict):
        raise ParseError("meta must be an object", path, lineno)
    instance_id = str(record.get("id") or meta.get("id") or f"line{lineno}")
    triples = meta.get("triples", record.get("triples", {}))
    if not isinstance(triples, dict) or not triples:
        raise ParseError("no premises under meta.triples", path, lineno)
    conclusions_map = meta.get("intermediate_conclusions",
                               record.get("intermediate_conclusions", {}))
    if not isinstance(conclusions_map, dict):
        raise ParseError("intermediate_conclusions must be a map", path, lineno)
    hypothesis = record.get("hypothesis") or meta.get("hypothesis")
    if not isinstance(hypothesis, str) or not hypothesis.strip():
        raise ParseError("record has no hypothesis text", path, lineno)

    taken = set(triples) | set(conclusions_map)
    goal_id = _fresh_id("hypothesis", set(taken))
    premises = tuple(Statement(pid, _text_of(text, path, lineno))
                     for pid, text in triples.items())
    goal = Statement(goal_id, hypothesis, Origin.GOAL)

    proof = meta.get("step_proof") or record.get("proof") or ""
    gold_tree = None
    if proof.strip():
        try:
            gold_tree = _eb_gold_tree(proof, triples, conclusions_map, hypothesis,
                                      path, lineno)
        except ParseError:
            if strict_gold:
                raise
    try:
        return ProofInstance(instance_id, premises, goal, gold_tree)
    except ValueError as exc:
        raise ParseError(str(exc), path, lineno) from None


def _eb_gold_tree(proof: str, triples: Mapping, conclusions_map: Mapping,
                  hypothesis: str, path, lineno: int) -> GoldTree:
    taken = set(triples) | set(conclusions_map) | {"hypothesis"}
    known = set(triples)
    steps: list[GoldStep] = []
    last_id = None
    for children, conclusion_token in _parse_proof_steps(proof, path, lineno):
        if len(children) < 2:
            raise ParseError(
                f"single-child step '{' & '.join(children)} -> {conclusion_token}' "
                "cannot become a pair deduction", path, lineno)
        for child in children:
            if child not in known:
                raise DanglingReferenceError(
                    f"proof cites unknown id {child!r}", path, lineno)
        if conclusion_token == "hypothesis":
            conclusion_id = _fresh_id("root", taken)
            conclusion_text = hypothesis
        else:
            conclusion_id = conclusion_token
            raw = conclusions_map.get(conclusion_token)
            if raw is None:
                raise DanglingReferenceError(
                    f"proof concludes unknown node {conclusion_token!r}", path, lineno)
            conclusion_text = _text_of(raw, path, lineno)
        # left-binarize wider steps; invented inner nodes carry the final text
        left = children[0]
        for i, child in enumerate(children[1:], start=1):
            final = i == len(children) - 1
            step_id = conclusion_id if final else _fresh_id(f"{conclusion_id}.b{i}", taken)
            steps.append(GoldStep(left, child,
                                  Statement(step_id, conclusion_text,
                                            Origin.INTERMEDIATE)))
            known.add(step_id)
            left = step_id
        last_id = conclusion_id
    if not steps:
        raise ParseError("proof string holds no steps", path, lineno)
    return GoldTree(tuple(steps), last_id)


# ---------------------------------------------------------------------------
# loading entry points


def load_instances(source, *, format: DatasetFormat | None = None,
                   strict_gold: bool = True) -> list[ProofInstance]:
    """Load proving instances from a native or entailment-tree lines file.

    ``strict_gold=False`` keeps instances whose annotation cannot be
    represented (single-child proof steps) by dropping just the annotation.
    """
    if isinstance(source, DatasetDescriptor):
        path, format = source.path, format or source.format
    else:
        path = source
    fmt = format or detect_format(path)
    if fmt is DatasetFormat.SSRC:
        raise ParseError("contrast-set files load via load_ssrc", path)
    out = []
    for lineno, record in _json_lines(path):
        if fmt is DatasetFormat.NATIVE:
            out.append(_native_instance(record, path, lineno))
        else:
            out.append(_eb_instance(record, path, lineno, strict_gold=strict_gold))
    if not out:
        raise ParseError("file holds no records", path)
    return out


_PERTURBATION_ALIASES = {
    "negation": Perturbation.NEGATION,
    "negated": Perturbation.NEGATION,
    "false_premise": Perturbation.FALSE_PREMISE,
    "false": Perturbation.FALSE_PREMISE,
    "irrelevant_fact": Perturbation.IRRELEVANT_FACT,
    "irrelevant": Perturbation.IRRELEVANT_FACT,
    "incorrect_quantifier": Perturbation.INCORRECT_QUANTIFIER,
    "incorrect_quantification": Perturbation.INCORRECT_QUANTIFIER,
}


def _resolve_category(label: str, path, lineno: int) -> Category:
    key = " ".join(str(label).lower().split())
    if key in CATEGORY_ALIASES:
        return CATEGORY_ALIASES[key]
    for category in Category:
        if category.value.lower() == key:
            return category
    raise UnknownCategoryError(f"unknown reasoning category {label!r}", path, lineno)


def _resolve_perturbation(label: str, path, lineno: int) -> Perturbation:
    key = "_".join(str(label).lower().split())
    try:
        return _PERTURBATION_ALIASES[key]
    except KeyError:
        raise UnknownPerturbationError(
            f"unknown perturbation {label!r}", path, lineno) from None


def _string_list(value, what: str, path, lineno) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"{what} must be a list of strings", path, lineno)
    return tuple(value)


def load_ssrc(source) -> list[SsrcExample]:
    """Load contrast-set lines:

    {"id": ..., "category": ..., "premises": [p1, p2], "conclusion": ...,
     "perturbations": {"negation": {"first": [...], "second": [...]}, ...}}
    """
    path = source.path if isinstance(source, DatasetDescriptor) else source
    out = []
    for lineno, record in _json_lines(path):
        example_id = str(record.get("id") or f"line{lineno}")
        category = _resolve_category(_require(record, "category", path, lineno),
                                     path, lineno)
        premises = record.get("premises")
        if not isinstance(premises, list) or len(premises) != 2:
            raise ParseError("premises must list exactly two texts", path, lineno)
        conclusion = str(_require(record, "conclusion", path, lineno))
        raw_perturbations = record.get("perturbations", {})
        if not isinstance(raw_perturbations, dict):
            raise ParseError("perturbations must be a map", path, lineno)
        variants = {}
        for label, slots in raw_perturbations.items():
            perturbation = _resolve_perturbation(label, path, lineno)
            if not isinstance(slots, dict):
                raise ParseError(f"perturbation {label!r} must map slots", path, lineno)
            variants[perturbation] = SlotVariants(
                _string_list(slots.get("first"), "first", path, lineno),
                _string_list(slots.get("second"), "second", path, lineno))
        out.append(SsrcExample(example_id, category, str(premises[0]),
                               str(premises[1]), conclusion, variants))
    if not out:
        raise ParseError("file holds no records", path)
    return out


def load_corpus(source) -> list[Statement]:
    """One fact per line: {"id": ..., "text": ...}; ids must be unique."""
    path = source.path if isinstance(source, DatasetDescriptor) else source
    seen = set()
    out = []
    for lineno, record in _json_lines(path):
        fact_id = str(_require(record, "id", path, lineno))
        text = str(_require(record, "text", path, lineno))
        if fact_id in seen:
            raise ParseError(f"duplicate corpus id {fact_id!r}", path, lineno)
        seen.add(fact_id)
        out.append(Statement(fact_id, text))
    if not out:
        raise ParseError("corpus holds no facts", path)
    return out


# ---------------------------------------------------------------------------
# corpus reduction and triplet extraction


def t3_to_t2(goal_text: str, corpus: Sequence[Statement], k: int,
             instance_facts: Sequence[Statement] = (), *,
             index: Bm25Index | None = None) -> list[Statement]:
    """Reduce a full corpus to the BM25 top-k facts for one goal.

    Instance-specific facts always survive regardless of rank; duplicates
    (by normalized text) collapse onto the first occurrence. Pass a
    prebuilt ``index`` over exactly these corpus texts to amortize across
    goals. Result size is at most k + len(instance_facts).
    """
    if index is None:
        index = Bm25Index().build([fact.text for fact in corpus])
    out: list[Statement] = []
    seen: set[str] = set()
    for fact in instance_facts:
        if fact.key not in seen:
            seen.add(fact.key)
            out.append(fact)
    for doc_id, _score in index.top_k(tokenize(goal_text), k):
        fact = corpus[doc_id]
        if fact.key not in seen:
            seen.add(fact.key)
            out.append(fact)
    return out


def extract_triplets(instances: Sequence[ProofInstance], encoder: Encoder, *,
                     strict: bool = True) -> list[Triplet]:
    """One training triplet per annotated step, embedded with ``encoder``.

    The triplet's tree id is the instance id, which keeps a tree's triplets
    together for batch construction. ``strict=False`` skips instances
    without annotations instead of raising.
    """
    triplets = []
    for instance in instances:
        if instance.gold_tree is None:
            if strict:
                raise NoGoldTreeError(
                    f"instance {instance.instance_id!r} has no annotated tree")
            continue
        texts = {p.id: p.text for p in instance.premises}
        for step in instance.gold_tree.steps:
            try:
                left_text = texts[step.left_id]
                right_text = texts[step.right_id]
            except KeyError as missing:
                raise DanglingReferenceError(
                    f"instance {instance.instance_id!r} step cites {missing}") from None
            triplets.append(Triplet(
                encoder.encode(left_text),
                encoder.encode(right_text),
                encoder.encode(step.conclusion.text),
                tree_id=instance.instance_id,
            ))
            texts[step.conclusion.id] = step.conclusion.text
    return triplets


# ---------------------------------------------------------------------------
# run manifests


def config_digest(config: Mapping) -> str:
    """Stable digest of a run configuration (sorted-key JSON, sha256)."""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(run_dir, *, command: str, config: Mapping, seed: int,
                   dataset_paths: Sequence[str] = (),
                   outputs: Sequence[str] = ()) -> Path:
    """Record everything needed to replay a run; the only place a
    timestamp is allowed, so report files stay byte-stable."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": dict(config),
        "config_sha256": config_digest(config),
        "seed": seed,
        "dataset_paths": list(dataset_paths),
        "outputs": list(outputs),
        "created_unix": int(time.time()),
    }
    path = run_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return path


def write_trace(path, trace: Sequence[Mapping]) -> None:
    """Search trace as one JSON event per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for event in trace:
            fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")


def load_trace(path) -> list[dict]:
    return [record for _, record in _json_lines(path)]
