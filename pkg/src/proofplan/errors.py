"""Exception taxonomy.

Every library-raised error derives from ProofPlanError so callers (and the
CLI) can distinguish domain failures from programming bugs. Errors raised
while scoring or encoding a batch carry the offending item index in
``.index`` when it is known.
"""

from __future__ import annotations


class ProofPlanError(Exception):
    """Base class for all library errors."""

    index: int | None = None


class DimensionMismatchError(ProofPlanError):
    """Two vectors (or a vector and an expected width) disagree on dimension."""


class ZeroVectorError(ProofPlanError):
    """Cosine similarity was requested for a zero-norm vector."""


class SelfPairError(ProofPlanError):
    """A candidate pair was built from one node and itself."""


class MissingEmbeddingError(ProofPlanError):
    """A lookup encoder has no vector for the requested text (strict mode)."""


class RemoteFailureError(ProofPlanError):
    """A remote backend kept failing after the configured retries."""


class UnknownConceptError(ProofPlanError):
    """The synthetic encoder saw a token outside its lexicon."""


class IndexNotBuiltError(ProofPlanError):
    """A BM25 index was queried before build() ran."""


class UnknownDocError(ProofPlanError):
    """A BM25 score was requested for a doc id the index does not hold."""


class UnknownTripleError(ProofPlanError):
    """A strict mock pair scorer saw a (left, right, goal) triple it has no entry for."""


class EmptyBatchError(ProofPlanError):
    """A training loss was requested for an empty batch."""


class NoTripletsError(ProofPlanError):
    """Triplet extraction produced nothing to train on."""


class TooFewPremisesError(ProofPlanError):
    """A pair partition needs at least three pool statements."""


class SearchBackendError(ProofPlanError):
    """A search backend failed; ``partial`` holds the result so far when available."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class EncodingFailureError(SearchBackendError):
    pass


class StepModelFailureError(SearchBackendError):
    pass


class EntailmentFailureError(SearchBackendError):
    pass


class NodeNotFoundError(ProofPlanError):
    """A proof extraction referenced a node the search never produced."""


class ParseError(ProofPlanError):
    """A data file could not be parsed; carries path and line when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f" ({path}" + (f":{line}" if line is not None else "") + ")"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class DanglingReferenceError(ParseError):
    """A gold step referenced an id that no premise or earlier step defines."""


class NoGoldTreeError(ProofPlanError):
    """An operation that needs gold annotations got an instance without any."""


class UnknownCategoryError(ParseError):
    """A contrast-set record named a reasoning category outside the known list."""


class UnknownPerturbationError(ParseError):
    """A contrast-set record named a perturbation outside the known list."""


class MissingVariantsError(ProofPlanError):
    """A contrast-set perturbation entry supplies no distractor premises at all."""


class EmptyDatasetError(ProofPlanError):
    """An evaluation was asked to aggregate over zero examples."""
