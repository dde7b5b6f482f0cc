"""Domain types and vector arithmetic shared by every other module.

Statements, embedding vectors, node references, candidate steps, and gold
annotations are immutable value objects. All arithmetic runs in float64;
report rounding happens only at the I/O boundary, never here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DimensionMismatchError, SelfPairError, ZeroVectorError


def normalize_text(text: str) -> str:
    """Canonical text form used for cache keys and duplicate checks.

    Lowercases, trims, collapses internal whitespace, and drops trailing
    periods, so cosmetic variants of one sentence share a single key.
    """
    collapsed = " ".join(text.lower().split())
    return collapsed.rstrip(".").rstrip()


class Origin(enum.Enum):
    """Where a statement came from."""

    GENERAL = "general"          # shared world knowledge
    INSTANCE = "instance"        # fact specific to one problem instance
    INTERMEDIATE = "intermediate"  # produced by a deduction step
    GOAL = "goal"


@dataclass(frozen=True)
class Statement:
    id: str
    text: str
    origin: Origin = Origin.GENERAL

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("statement id must be nonempty")
        if not normalize_text(self.text):
            raise ValueError(f"statement {self.id!r} has empty text")

    @property
    def key(self) -> str:
        return normalize_text(self.text)


@dataclass(frozen=True, eq=False)
class Vector:
    """A fixed-width real embedding; entries are finite float64, read-only."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("vector must be a nonempty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector entries must all be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @staticmethod
    def of(values: Iterable[float]) -> "Vector":
        return Vector(np.asarray(list(values) if not isinstance(values, np.ndarray) else values))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vector) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.dim, self.values.tobytes()))

    def __repr__(self) -> str:
        head = np.array2string(self.values[:4], precision=4, separator=", ")
        suffix = ", ..." if self.dim > 4 else ""
        return f"Vector(dim={self.dim}, {head[:-1]}{suffix}])"


def vec_sum(left: Vector, right: Vector) -> Vector:
    """Elementwise sum; both operands must share one dimension."""
    if left.dim != right.dim:
        raise DimensionMismatchError(f"cannot add dim {left.dim} to dim {right.dim}")
    return Vector(left.values + right.values)


def cosine(u: Vector, v: Vector) -> float:
    """Cosine similarity u.v / (|u| |v|), clamped into [-1, 1].

    Raises ZeroVectorError rather than silently returning 0 for a zero-norm
    operand: a zero embedding upstream is always a bug worth surfacing.
    """
    if u.dim != v.dim:
        raise DimensionMismatchError(f"cosine over dims {u.dim} and {v.dim}")
    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine undefined for a zero-norm vector")
    value = float(np.dot(u.values, v.values)) / (nu * nv)
    return max(-1.0, min(1.0, value))


class NodeKind(enum.Enum):
    PREMISE = "premise"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class NodeRef:
    """Reference to a pool member: an input premise or a kept deduction."""

    kind: NodeKind
    index: int

    def sort_key(self) -> tuple[int, int]:
        return (0 if self.kind is NodeKind.PREMISE else 1, self.index)

    def as_json(self) -> list:
        return [self.kind.value, self.index]


def premise_ref(index: int) -> NodeRef:
    return NodeRef(NodeKind.PREMISE, index)


def intermediate_ref(index: int) -> NodeRef:
    return NodeRef(NodeKind.INTERMEDIATE, index)


def canonical_pair(a: NodeRef, b: NodeRef) -> tuple[NodeRef, NodeRef]:
    """Order an unordered pair deterministically; a node never pairs with itself."""
    if a == b:
        raise SelfPairError(f"node {a} cannot pair with itself")
    return (a, b) if a.sort_key() < b.sort_key() else (b, a)


@dataclass(frozen=True)
class CandidateStep:
    """A scored unordered pair of pool nodes sitting in the search fringe.

    ``seq`` is the enqueue sequence number; it breaks score ties so a run
    is fully deterministic.
    """

    left: NodeRef
    right: NodeRef
    score: float
    seq: int

    @staticmethod
    def make(a: NodeRef, b: NodeRef, score: float, seq: int) -> "CandidateStep":
        left, right = canonical_pair(a, b)
        return CandidateStep(left, right, score, seq)

    @property
    def key(self) -> tuple[NodeRef, NodeRef]:
        return (self.left, self.right)


@dataclass(frozen=True)
class GoldStep:
    """One annotated deduction: two child ids produce a conclusion."""

    left_id: str
    right_id: str
    conclusion: Statement


@dataclass(frozen=True)
class GoldTree:
    """Binary-branching annotated proof: steps in dependency order plus a root id."""

    steps: tuple[GoldStep, ...]
    root_id: str

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("gold tree needs at least one step")
        conclusion_ids = [s.conclusion.id for s in self.steps]
        if len(set(conclusion_ids)) != len(conclusion_ids):
            raise ValueError("gold step conclusion ids must be unique")
        if self.root_id not in conclusion_ids:
            raise ValueError(f"root id {self.root_id!r} is not produced by any step")

    def conclusion_by_id(self, node_id: str) -> Statement:
        for step in self.steps:
            if step.conclusion.id == node_id:
                return step.conclusion
        raise KeyError(node_id)

    @property
    def root(self) -> Statement:
        return self.conclusion_by_id(self.root_id)


@dataclass(frozen=True)
class ProofInstance:
    """A proving problem: premises, a goal, and (optionally) gold annotations."""

    instance_id: str
    premises: tuple[Statement, ...]
    goal: Statement
    gold_tree: GoldTree | None = None

    def __post_init__(self) -> None:
        if len(self.premises) < 2:
            raise ValueError(f"instance {self.instance_id!r} needs at least 2 premises")
        ids = [p.id for p in self.premises] + [self.goal.id]
        if self.gold_tree is not None:
            ids += [s.conclusion.id for s in self.gold_tree.steps]
        if len(set(ids)) != len(ids):
            raise ValueError(f"instance {self.instance_id!r} reuses a statement id")
        if self.gold_tree is not None:
            known = {p.id for p in self.premises}
            for step in self.gold_tree.steps:
                for child in (step.left_id, step.right_id):
                    if child not in known:
                        raise ValueError(
                            f"instance {self.instance_id!r} gold step cites "
                            f"{child!r} before it exists")
                known.add(step.conclusion.id)

    def premise_by_id(self, premise_id: str) -> Statement:
        for p in self.premises:
            if p.id == premise_id:
                return p
        raise KeyError(premise_id)

    @property
    def instance_facts(self) -> tuple[Statement, ...]:
        return tuple(p for p in self.premises if p.origin is Origin.INSTANCE)


@dataclass(frozen=True)
class Intermediate:
    """A kept generated deduction inside a search run.

    ``agreement`` is cosine(sum of parent embeddings, own embedding) and
    ``branch_agreement_mean`` the running mean over the node's intermediate
    ancestor chain including itself; both are None when the agreement
    validator is disabled or no encoder is configured.
    """

    statement: Statement
    parents: tuple[NodeRef, NodeRef]
    embedding: Vector | None = None
    agreement: float | None = None
    branch_agreement_mean: float | None = None
