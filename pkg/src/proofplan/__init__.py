"""Embedding-space planning for natural language proof search.

The library scores candidate premise pairs by how close the sum of their
embeddings lands to a target statement's embedding, drives a best-first
deduction search with that (or any other) pair heuristic, trains a small
residual projection head to sharpen the additive structure, and measures
all of it with ranking, distribution, extrinsic, and contrast-set
protocols. See README.md for the command-line surface.
"""

from .bm25 import Bm25Index, tokenize
from .core import (
    CandidateStep,
    GoldStep,
    GoldTree,
    Intermediate,
    NodeKind,
    NodeRef,
    Origin,
    ProofInstance,
    Statement,
    Vector,
    canonical_pair,
    cosine,
    normalize_text,
    vec_sum,
)
from .encoders import (
    ConceptLexicon,
    EncodeCache,
    Encoder,
    FileLookupEncoder,
    ProjectedEncoder,
    RemoteEncoder,
    SyntheticAdditiveEncoder,
    write_embedding_file,
)
from .errors import ProofPlanError
from .evaluation import (
    Category,
    Conditioning,
    DistributionReport,
    ExtrinsicReport,
    MrrReport,
    Perturbation,
    SsrcExample,
    SsrcReport,
    build_pair_sets,
    distribution_report,
    extrinsic,
    mrr,
    ranking_tasks,
    ssrc_breakdown,
)
from .heuristics import (
    AdditiveHeuristic,
    Bm25Heuristic,
    MockPairScorer,
    PairRanker,
    RemotePairScorer,
    additive_score,
    pessimistic_rank,
    rank_pairs,
)
from .projection import ProjectionHead, head_forward
from .search import (
    EntailmentScorer,
    RemoteEntailment,
    RemoteStepModel,
    SearchConfig,
    SearchResult,
    StepModel,
    Termination,
    run_search,
)
from .tuning import TrainConfig, Triplet, gradient_check, infonce_loss, train

__version__ = "0.1.0"

__all__ = [
    "AdditiveHeuristic",
    "Bm25Heuristic",
    "Bm25Index",
    "CandidateStep",
    "Category",
    "ConceptLexicon",
    "Conditioning",
    "DistributionReport",
    "EncodeCache",
    "Encoder",
    "EntailmentScorer",
    "ExtrinsicReport",
    "FileLookupEncoder",
    "GoldStep",
    "GoldTree",
    "Intermediate",
    "MockPairScorer",
    "MrrReport",
    "NodeKind",
    "NodeRef",
    "Origin",
    "PairRanker",
    "Perturbation",
    "ProjectionHead",
    "ProjectedEncoder",
    "ProofInstance",
    "ProofPlanError",
    "RemoteEncoder",
    "RemoteEntailment",
    "RemotePairScorer",
    "RemoteStepModel",
    "SearchConfig",
    "SearchResult",
    "SsrcExample",
    "SsrcReport",
    "Statement",
    "StepModel",
    "SyntheticAdditiveEncoder",
    "Termination",
    "TrainConfig",
    "Triplet",
    "Vector",
    "additive_score",
    "build_pair_sets",
    "canonical_pair",
    "cosine",
    "distribution_report",
    "extrinsic",
    "gradient_check",
    "head_forward",
    "infonce_loss",
    "mrr",
    "normalize_text",
    "pessimistic_rank",
    "rank_pairs",
    "ranking_tasks",
    "run_search",
    "ssrc_breakdown",
    "tokenize",
    "train",
    "vec_sum",
    "write_embedding_file",
]
