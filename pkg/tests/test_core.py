import numpy as np
import pytest

from proofplan.core import (
    CandidateStep,
    GoldStep,
    GoldTree,
    NodeKind,
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
from proofplan.errors import (
    DimensionMismatchError,
    SelfPairError,
    ZeroVectorError,
)


def test_normalize_text_variants_collapse():
    assert normalize_text("  The  CAT sat.  ") == "the cat sat"
    assert normalize_text("The cat sat") == "the cat sat"
    assert normalize_text("dots...") == "dots"


def test_normalize_text_preserves_internal_punctuation():
    assert normalize_text("3.5 is a number") == "3.5 is a number"


def test_statement_key_uses_normalized_text():
    a = Statement("s1", "The Cat Sat.")
    b = Statement("s2", "the cat sat")
    assert a.key == b.key


def test_statement_rejects_empty():
    with pytest.raises(ValueError):
        Statement("", "text")
    with pytest.raises(ValueError):
        Statement("s1", "   ")


def test_vector_is_readonly_float64():
    v = Vector.of([1, 2, 3])
    assert v.values.dtype == np.float64
    with pytest.raises(ValueError):
        v.values[0] = 9.0


def test_vector_rejects_nan_and_empty():
    with pytest.raises(ValueError):
        Vector.of([1.0, float("nan")])
    with pytest.raises(ValueError):
        Vector.of([])


def test_vector_equality_and_hash():
    assert Vector.of([1.0, 2.0]) == Vector.of([1, 2])
    assert hash(Vector.of([1.0, 2.0])) == hash(Vector.of([1, 2]))
    assert Vector.of([1.0, 2.0]) != Vector.of([2.0, 1.0])


def test_vec_sum_and_dim_mismatch():
    s = vec_sum(Vector.of([1.0, 2.0]), Vector.of([3.0, 4.0]))
    assert s.tolist() == [4.0, 6.0]
    with pytest.raises(DimensionMismatchError):
        vec_sum(Vector.of([1.0]), Vector.of([1.0, 2.0]))


def test_cosine_basics():
    assert cosine(Vector.of([1.0, 0.0]), Vector.of([1.0, 0.0])) == 1.0
    assert cosine(Vector.of([1.0, 0.0]), Vector.of([0.0, 1.0])) == 0.0
    assert cosine(Vector.of([1.0, 0.0]), Vector.of([-1.0, 0.0])) == -1.0


def test_cosine_clamps_rounding_overshoot():
    rng = np.random.default_rng(42)
    for _ in range(200):
        u = Vector(rng.normal(size=8))
        scale = float(rng.uniform(0.1, 10.0))
        value = cosine(u, Vector(u.values * scale))
        assert value <= 1.0


def test_cosine_zero_vector_raises():
    with pytest.raises(ZeroVectorError):
        cosine(Vector.of([0.0, 0.0]), Vector.of([1.0, 0.0]))


def test_canonical_pair_orders_premises_first():
    p, i = premise_ref(5), intermediate_ref(0)
    assert canonical_pair(i, p) == (p, i)
    assert canonical_pair(p, i) == (p, i)
    assert canonical_pair(premise_ref(3), premise_ref(1)) == (
        premise_ref(1), premise_ref(3))


def test_canonical_pair_rejects_self():
    with pytest.raises(SelfPairError):
        canonical_pair(premise_ref(2), premise_ref(2))


def test_candidate_step_make_canonicalizes():
    step = CandidateStep.make(intermediate_ref(1), premise_ref(0), 0.5, seq=7)
    assert step.left == premise_ref(0)
    assert step.right == intermediate_ref(1)
    assert step.key == (premise_ref(0), intermediate_ref(1))


def test_noderef_as_json():
    assert premise_ref(2).as_json() == ["premise", 2]
    assert intermediate_ref(0).as_json() == ["intermediate", 0]
    assert NodeKind.PREMISE.value == "premise"


def test_gold_tree_validation():
    with pytest.raises(ValueError):
        GoldTree((), root_id="i1")
    step = GoldStep("p1", "p2", Statement("i1", "a b"))
    with pytest.raises(ValueError):
        GoldTree((step,), root_id="nope")
    tree = GoldTree((step,), root_id="i1")
    assert tree.root.id == "i1"
    assert tree.conclusion_by_id("i1").text == "a b"


def test_gold_tree_duplicate_conclusions_rejected():
    steps = (
        GoldStep("p1", "p2", Statement("i1", "a")),
        GoldStep("p3", "p4", Statement("i1", "b")),
    )
    with pytest.raises(ValueError):
        GoldTree(steps, root_id="i1")


def test_proof_instance_validation():
    goal = Statement("goal", "g")
    with pytest.raises(ValueError):
        ProofInstance("x", (Statement("p1", "a"),), goal)
    premises = (Statement("p1", "a"), Statement("p1", "b"), Statement("p2", "c"))
    with pytest.raises(ValueError):
        ProofInstance("x", premises, goal)


def test_proof_instance_dangling_gold_reference():
    premises = (Statement("p1", "a"), Statement("p2", "b"))
    tree = GoldTree((GoldStep("p1", "p9", Statement("i1", "a b")),), root_id="i1")
    with pytest.raises(ValueError):
        ProofInstance("x", premises, Statement("goal", "a b"), tree)


def test_proof_instance_helpers(instance):
    assert instance.premise_by_id("p3").text == "c2 c3"
    facts = instance.instance_facts
    assert [f.id for f in facts] == ["p1"]
    assert facts[0].origin is Origin.INSTANCE


def test_gold_steps_must_come_in_dependency_order():
    premises = (Statement("p1", "a"), Statement("p2", "b"), Statement("p3", "c"))
    out_of_order = GoldTree((
        GoldStep("i2", "p3", Statement("i1", "a b c")),
        GoldStep("p1", "p2", Statement("i2", "a b")),
    ), root_id="i1")
    with pytest.raises(ValueError):
        ProofInstance("x", premises, Statement("goal", "a b c"), out_of_order)
