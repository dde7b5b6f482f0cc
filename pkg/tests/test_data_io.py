"""Dataset parsing, the entailment-tree and contrast-set adapters, corpus
reduction, triplet extraction, and run artifacts."""

import json

import pytest

from proofplan.core import Origin, Statement
from proofplan.data_io import (
    DatasetDescriptor,
    DatasetFormat,
    config_digest,
    detect_format,
    extract_triplets,
    load_corpus,
    load_instances,
    load_ssrc,
    load_trace,
    serialize_instances,
    t3_to_t2,
    write_manifest,
    write_trace,
)
from proofplan.encoders import ConceptLexicon, SyntheticAdditiveEncoder
from proofplan.errors import (
    DanglingReferenceError,
    NoGoldTreeError,
    ParseError,
    UnknownCategoryError,
    UnknownPerturbationError,
)
from proofplan.evaluation import Category, Perturbation

from conftest import NATIVE_RECORD, make_instance, write_jsonl


# -- native format -----------------------------------------------------------

def test_load_native_instance(native_file):
    (inst,) = load_instances(native_file)
    assert inst.instance_id == "ex1"
    assert [p.id for p in inst.premises] == ["p1", "p2", "p3", "p4", "p5"]
    assert inst.premises[0].origin is Origin.INSTANCE
    assert inst.premises[1].origin is Origin.GENERAL
    assert inst.goal.id == "goal"
    assert inst.goal.origin is Origin.GOAL
    tree = inst.gold_tree
    assert tree.root_id == "i2"
    assert [(s.left_id, s.right_id, s.conclusion.text) for s in tree.steps] == [
        ("p1", "p2", "c0 c1"), ("i1", "p3", "c0 c1 c2 c3")]
    assert all(s.conclusion.origin is Origin.INTERMEDIATE for s in tree.steps)


def test_native_round_trip(tmp_path, native_file):
    loaded = load_instances(native_file)
    out = tmp_path / "again.jsonl"
    serialize_instances(loaded, out)
    assert load_instances(out) == loaded


def test_native_round_trip_without_tree(tmp_path):
    record = {k: v for k, v in NATIVE_RECORD.items() if k not in ("steps", "root")}
    path = write_jsonl(tmp_path / "flat.jsonl", [record])
    (inst,) = load_instances(path)
    assert inst.gold_tree is None
    out = tmp_path / "again.jsonl"
    serialize_instances([inst], out)
    assert load_instances(out) == [inst]


def test_native_defaults(tmp_path):
    # goal_id, root, instance_facts all optional
    record = {"id": "d", "goal": "g",
              "premises": {"a": "x", "b": "y"},
              "steps": [{"left": "a", "right": "b", "id": "i1", "text": "g"}]}
    path = write_jsonl(tmp_path / "r.jsonl", [record])
    (inst,) = load_instances(path)
    assert inst.goal.id == "goal"
    assert inst.gold_tree.root_id == "i1"
    assert all(p.origin is Origin.GENERAL for p in inst.premises)


@pytest.mark.parametrize("breakage, error", [
    ({"id": "x", "premises": {"a": "t", "b": "u"}}, "missing 'goal'"),
    ({"id": "x", "goal": "g", "premises": {}}, "nonempty"),
    ({"id": "x", "goal": "g", "premises": {"a": "t", "b": "u"},
      "instance_facts": ["zz"]}, "unknown premises"),
    ({"id": "x", "goal": "g", "premises": {"a": "t", "b": "u"},
      "steps": [{"left": "a", "right": "qq", "id": "i1", "text": "g"}]},
     "unknown id 'qq'"),
])
def test_native_rejects_malformed_records(tmp_path, breakage, error):
    path = write_jsonl(tmp_path / "bad.jsonl", [breakage])
    with pytest.raises(ParseError, match=error):
        load_instances(path)


def test_parse_errors_carry_path_and_line(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text(json.dumps(NATIVE_RECORD) + "\n{oops\n")
    with pytest.raises(ParseError) as info:
        load_instances(path)
    assert info.value.line == 2
    assert str(path) in str(info.value)
    assert ":2" in str(info.value)


def test_non_object_record_rejected(tmp_path):
    path = tmp_path / "list.jsonl"
    path.write_text("[1, 2, 3]\n")
    with pytest.raises(ParseError, match="not an object"):
        load_instances(path, format=DatasetFormat.NATIVE)


# -- format sniffing ---------------------------------------------------------

def test_detect_format(tmp_path, native_file):
    assert detect_format(native_file) is DatasetFormat.NATIVE
    ssrc = write_jsonl(tmp_path / "c.jsonl", [
        {"category": "Comparison", "premises": ["a", "b"], "conclusion": "c"}])
    assert detect_format(ssrc) is DatasetFormat.SSRC
    eb = write_jsonl(tmp_path / "e.jsonl", [
        {"hypothesis": "h", "meta": {"triples": {"sent1": "t"}}}])
    assert detect_format(eb) is DatasetFormat.ENTAILMENT_TREE


def test_detect_format_rejects_unknown(tmp_path):
    path = write_jsonl(tmp_path / "u.jsonl", [{"mystery": 1}])
    with pytest.raises(ParseError, match="unrecognizable"):
        detect_format(path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ParseError, match="no records"):
        detect_format(empty)


def test_descriptor_carries_format(tmp_path, native_file):
    desc = DatasetDescriptor(str(native_file), DatasetFormat.NATIVE)
    assert len(load_instances(desc)) == 1
    ssrc = write_jsonl(tmp_path / "c.jsonl", [
        {"category": "Comparison", "premises": ["a", "b"], "conclusion": "c"}])
    with pytest.raises(ParseError, match="load_ssrc"):
        load_instances(ssrc)


# -- entailment-tree adapter -------------------------------------------------

def eb_record(proof="sent1 & sent2 -> int1: both; int1 & sent3 -> hypothesis; ",
              **overrides):
    record = {
        "id": "eb1",
        "hypothesis": "the goal holds",
        "meta": {
            "triples": {"sent1": "fact one", "sent2": {"text": "fact two"},
                        "sent3": "fact three"},
            "intermediate_conclusions": {"int1": "both facts"},
            "step_proof": proof,
        },
    }
    record.update(overrides)
    return record


def test_eb_adapter_basic(tmp_path):
    path = write_jsonl(tmp_path / "eb.jsonl", [eb_record()])
    (inst,) = load_instances(path)
    assert inst.instance_id == "eb1"
    # bare and {"text": ...} node forms both accepted
    assert [p.text for p in inst.premises] == ["fact one", "fact two", "fact three"]
    assert inst.goal.id == "hypothesis"
    assert inst.goal.text == "the goal holds"
    tree = inst.gold_tree
    assert [(s.left_id, s.right_id) for s in tree.steps] == [
        ("sent1", "sent2"), ("int1", "sent3")]
    assert tree.steps[0].conclusion.text == "both facts"
    # the hypothesis step mints a fresh root node carrying the goal text
    assert tree.root_id == "root"
    assert tree.steps[1].conclusion.text == "the goal holds"


def test_eb_adapter_binarizes_wide_steps(tmp_path):
    proof = ("sent1 & sent2 & sent3 -> int1: both; "
             "int1 & sent1 -> hypothesis; ")
    path = write_jsonl(tmp_path / "eb.jsonl", [eb_record(proof)])
    (inst,) = load_instances(path)
    steps = inst.gold_tree.steps
    assert [(s.left_id, s.right_id, s.conclusion.id) for s in steps] == [
        ("sent1", "sent2", "int1.b1"),
        ("int1.b1", "sent3", "int1"),
        ("int1", "sent1", "root"),
    ]
    # invented inner node reuses the annotated conclusion text
    assert steps[0].conclusion.text == "both facts"
    assert steps[1].conclusion.text == "both facts"


def test_eb_goal_id_avoids_collisions(tmp_path):
    record = eb_record(proof="")
    record["meta"]["triples"]["hypothesis"] = "a premise named awkwardly"
    path = write_jsonl(tmp_path / "eb.jsonl", [record])
    (inst,) = load_instances(path)
    assert inst.goal.id == "hypothesis1"
    assert inst.gold_tree is None


def test_eb_single_child_step_strict_vs_lenient(tmp_path):
    proof = "sent1 -> int1: both; int1 & sent2 -> hypothesis; "
    path = write_jsonl(tmp_path / "eb.jsonl", [eb_record(proof)])
    with pytest.raises(ParseError, match="single-child"):
        load_instances(path)
    (inst,) = load_instances(path, strict_gold=False)
    assert inst.gold_tree is None  # annotation dropped, instance kept
    assert len(inst.premises) == 3


def test_eb_dangling_proof_reference(tmp_path):
    proof = "sent1 & sent9 -> hypothesis; "
    path = write_jsonl(tmp_path / "eb.jsonl", [eb_record(proof)])
    with pytest.raises(DanglingReferenceError, match="sent9"):
        load_instances(path)
    (inst,) = load_instances(path, strict_gold=False)
    assert inst.gold_tree is None


def test_eb_unknown_conclusion_node(tmp_path):
    proof = "sent1 & sent2 -> int9: what; int9 & sent3 -> hypothesis; "
    path = write_jsonl(tmp_path / "eb.jsonl", [eb_record(proof)])
    with pytest.raises(DanglingReferenceError, match="int9"):
        load_instances(path)


@pytest.mark.parametrize("mutate, error", [
    (lambda r: r.pop("hypothesis"), "no hypothesis"),
    (lambda r: r["meta"].pop("triples"), "meta.triples"),
    (lambda r: r["meta"].update(step_proof="sent1 sent2 int1"), "without '->'"),
])
def test_eb_rejects_malformed(tmp_path, mutate, error):
    record = eb_record()
    mutate(record)
    path = write_jsonl(tmp_path / "eb.jsonl", [record])
    with pytest.raises(ParseError, match=error):
        load_instances(path)


def test_eb_top_level_field_fallbacks(tmp_path):
    record = {
        "hypothesis": "goal text",
        "triples": {"sent1": "one", "sent2": "two"},
        "intermediate_conclusions": {},
        "proof": "sent1 & sent2 -> hypothesis; ",
    }
    path = write_jsonl(tmp_path / "eb.jsonl", [record])
    (inst,) = load_instances(path, format=DatasetFormat.ENTAILMENT_TREE)
    assert inst.instance_id == "line1"
    assert inst.gold_tree.root_id == "root"


# -- contrast-set loader -----------------------------------------------------

def ssrc_record(category="Comparison", **overrides):
    record = {
        "id": "s1",
        "category": category,
        "premises": ["first premise", "second premise"],
        "conclusion": "their conclusion",
        "perturbations": {
            "negation": {"first": ["not first"], "second": []},
            "irrelevant_fact": {"first": [], "second": ["a stray fact"]},
        },
    }
    record.update(overrides)
    return record


def test_load_ssrc_basic(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", [ssrc_record()])
    (ex,) = load_ssrc(path)
    assert ex.example_id == "s1"
    assert ex.category is Category.COMPARISON
    assert (ex.premise_first, ex.premise_second) == ("first premise", "second premise")
    assert ex.conclusion == "their conclusion"
    assert ex.variants[Perturbation.NEGATION].first == ("not first",)
    assert ex.variants[Perturbation.NEGATION].second == ()
    assert ex.variants[Perturbation.IRRELEVANT_FACT].second == ("a stray fact",)


def test_load_ssrc_accepts_every_canonical_category(tmp_path):
    records = [ssrc_record(category=c.value, id=f"s{i}")
               for i, c in enumerate(Category)]
    path = write_jsonl(tmp_path / "c.jsonl", records)
    examples = load_ssrc(path)
    assert [e.category for e in examples] == list(Category)


@pytest.mark.parametrize("label, category", [
    ("Comparative Reasoning", Category.COMPARISON),
    ("divisions", Category.DIVISION),
    ("Quantification Logic", Category.QUANTIFICATIONAL_LOGIC),
    ("spatial reasoning", Category.SPATIAL_RELATIONSHIP),
    ("Temporal  Reasoning", Category.TEMPORAL_LOGIC),
])
def test_load_ssrc_category_aliases(tmp_path, label, category):
    path = write_jsonl(tmp_path / "c.jsonl", [ssrc_record(category=label)])
    assert load_ssrc(path)[0].category is category


def test_load_ssrc_perturbation_aliases(tmp_path):
    record = ssrc_record(perturbations={
        "negated": {"first": ["n"]},
        "false": {"first": ["f"]},
        "irrelevant": {"second": ["i"]},
        "incorrect_quantification": {"first": ["q"]},
    })
    path = write_jsonl(tmp_path / "c.jsonl", [record])
    (ex,) = load_ssrc(path)
    assert set(ex.variants) == {
        Perturbation.NEGATION, Perturbation.FALSE_PREMISE,
        Perturbation.IRRELEVANT_FACT, Perturbation.INCORRECT_QUANTIFIER}


def test_load_ssrc_rejects_unknown_labels(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", [ssrc_record(category="Telepathy")])
    with pytest.raises(UnknownCategoryError, match="Telepathy"):
        load_ssrc(path)
    bad = ssrc_record(perturbations={"paraphrase": {"first": ["x"]}})
    path2 = write_jsonl(tmp_path / "c2.jsonl", [bad])
    with pytest.raises(UnknownPerturbationError, match="paraphrase"):
        load_ssrc(path2)


@pytest.mark.parametrize("mutate, error", [
    (lambda r: r.update(premises=["only one"]), "exactly two"),
    (lambda r: r.pop("conclusion"), "missing 'conclusion'"),
    (lambda r: r.update(perturbations={"negation": {"first": [1, 2]}}),
     "list of strings"),
])
def test_load_ssrc_rejects_malformed(tmp_path, mutate, error):
    record = ssrc_record()
    mutate(record)
    path = write_jsonl(tmp_path / "c.jsonl", [record])
    with pytest.raises(ParseError, match=error):
        load_ssrc(path)


# -- corpus ------------------------------------------------------------------

def corpus_file(tmp_path, records=None):
    records = records or [
        {"id": "f1", "text": "the cat sat on the mat"},
        {"id": "f2", "text": "dogs chase cats in the yard"},
        {"id": "f3", "text": "rain falls on the meadow"},
    ]
    return write_jsonl(tmp_path / "corpus.jsonl", records)


def test_load_corpus(tmp_path):
    facts = load_corpus(corpus_file(tmp_path))
    assert [f.id for f in facts] == ["f1", "f2", "f3"]
    assert facts[0].text == "the cat sat on the mat"


def test_load_corpus_rejects_duplicates(tmp_path):
    path = corpus_file(tmp_path, [
        {"id": "f1", "text": "a"}, {"id": "f1", "text": "b"}])
    with pytest.raises(ParseError, match="duplicate corpus id"):
        load_corpus(path)


def test_load_corpus_rejects_empty(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("")
    with pytest.raises(ParseError, match="no facts"):
        load_corpus(path)


# -- corpus reduction --------------------------------------------------------

def test_t3_to_t2_ranks_by_goal_overlap(tmp_path):
    corpus = load_corpus(corpus_file(tmp_path))
    kept = t3_to_t2("where did the cat sit", corpus, k=1)
    assert [f.id for f in kept] == ["f1"]
    kept2 = t3_to_t2("where did the cat sit", corpus, k=2)
    assert kept2[0].id == "f1"
    assert len(kept2) == 2


def test_t3_to_t2_instance_facts_always_survive(tmp_path):
    corpus = load_corpus(corpus_file(tmp_path))
    mine = Statement("mine", "a private observation", Origin.INSTANCE)
    kept = t3_to_t2("cats and mats", corpus, k=0, instance_facts=[mine])
    assert kept == [mine]
    kept2 = t3_to_t2("cats and mats", corpus, k=2, instance_facts=[mine])
    assert kept2[0] is mine
    assert len(kept2) <= 3


def test_t3_to_t2_collapses_duplicate_texts(tmp_path):
    corpus = [Statement("f1", "same words"), Statement("f2", "Same  words"),
              Statement("f3", "different entirely")]
    kept = t3_to_t2("same words", corpus, k=3)
    assert [f.id for f in kept] == ["f1", "f3"]


def test_t3_to_t2_accepts_prebuilt_index(tmp_path):
    from proofplan.bm25 import Bm25Index
    corpus = load_corpus(corpus_file(tmp_path))
    index = Bm25Index().build([f.text for f in corpus])
    direct = t3_to_t2("cat on the mat", corpus, k=2)
    shared = t3_to_t2("cat on the mat", corpus, k=2, index=index)
    assert direct == shared


# -- triplet extraction ------------------------------------------------------

def test_extract_triplets_one_per_step():
    encoder = SyntheticAdditiveEncoder(
        ConceptLexicon([f"c{i}" for i in range(7)]))
    instances = [make_instance("a"), make_instance("b")]
    triplets = extract_triplets(instances, encoder)
    assert len(triplets) == 4
    assert [t.tree_id for t in triplets] == ["a", "a", "b", "b"]
    # second step's left premise is the first step's conclusion text
    assert triplets[1].e_a == encoder.encode("c0 c1")
    assert triplets[1].e_b == encoder.encode("c2 c3")
    assert triplets[0].e_d == encoder.encode("c0 c1")


def test_extract_triplets_strictness():
    encoder = SyntheticAdditiveEncoder(ConceptLexicon(["c0", "c1"]))
    bare = make_instance("bare", with_tree=False)
    with pytest.raises(NoGoldTreeError):
        extract_triplets([bare], encoder)
    assert extract_triplets([bare], encoder, strict=False) == []


# -- run artifacts -----------------------------------------------------------

def test_config_digest_ignores_key_order():
    a = config_digest({"x": 1, "y": [1, 2]})
    b = config_digest({"y": [1, 2], "x": 1})
    assert a == b
    assert a != config_digest({"x": 2, "y": [1, 2]})
    assert len(a) == 64


def test_write_manifest(tmp_path):
    run = tmp_path / "run"
    config = {"heuristic": "additive", "seed": 3}
    path = write_manifest(run, command="eval-mrr", config=config, seed=3,
                          dataset_paths=["d.jsonl"], outputs=["mrr.csv"])
    assert path == run / "manifest.json"
    manifest = json.loads(path.read_text())
    assert manifest["command"] == "eval-mrr"
    assert manifest["config"] == config
    assert manifest["config_sha256"] == config_digest(config)
    assert manifest["seed"] == 3
    assert manifest["dataset_paths"] == ["d.jsonl"]
    assert manifest["outputs"] == ["mrr.csv"]
    assert isinstance(manifest["created_unix"], int)


def test_trace_round_trip(tmp_path, instance):
    from proofplan.oracles import OracleEntailment, OraclePairRanker, OracleStepModel
    from proofplan.search import run_search
    result = run_search(instance, OraclePairRanker([instance]),
                        OracleStepModel([instance]), OracleEntailment())
    path = tmp_path / "run.trace.jsonl"
    write_trace(path, result.trace)
    assert load_trace(path) == result.trace
    # one event per line, keys sorted for stable diffs
    first = path.read_text().splitlines()[0]
    assert list(json.loads(first)) == sorted(json.loads(first))
