import math

import numpy as np
import pytest

from proofplan.bm25 import Bm25Index, tokenize
from proofplan.errors import IndexNotBuiltError, ParseError, UnknownDocError

DOCS = (
    "the cat sat on the mat",
    "the dog sat on the log",
    "cats and dogs play",
)

# frozen expected scores, computed once with a standalone direct-formula
# script (k1=1.2, b=0.75, plus-one idf); see also proofplan.selfcheck
EXPECTED = {
    "the cat sat": (2.0045585306470235, 1.0714452953493814, 0.0),
    "cat cat mat": (2.799339705892927, 0.0, 0.0),
    "dogs play chess": (0.0, 0.0, 2.1851385889881496),
    "the": (0.6243067075264112, 0.6243067075264112, 0.0),
}


def built():
    return Bm25Index().build(list(DOCS))


def test_tokenize():
    assert tokenize("Co-occur 2x!") == ["co", "occur", "2x"]
    assert tokenize("The CAT.") == ["the", "cat"]
    assert tokenize("...") == []


def test_fixture_scores_match_direct_formula():
    index = built()
    for query, wanted in EXPECTED.items():
        got = [index.score(tokenize(query), d) for d in range(3)]
        for g, w in zip(got, wanted):
            assert abs(g - w) < 1e-9, (query, got, wanted)
        assert got == pytest.approx(index.score_all(tokenize(query)), abs=1e-12)


def test_idf_plus_one_variant_pins():
    index = built()
    assert index.idf("cat") == pytest.approx(0.9808292530117263, abs=1e-12)   # df 1
    assert index.idf("sat") == pytest.approx(0.47000362924573563, abs=1e-12)  # df 2
    assert index.idf("the") == pytest.approx(0.47000362924573563, abs=1e-12)
    assert index.idf("unseen") == pytest.approx(
        math.log(1.0 + 3.5 / 0.5), abs=1e-12)
    # plus-one keeps idf positive even when every doc has the term
    everywhere = Bm25Index().build(["sat a", "sat b", "sat c"])
    assert everywhere.idf("sat") > 0.0


def test_duplicate_query_tokens_count_per_occurrence():
    index = built()
    single = index.score(["cat"], 0)
    double = index.score(["cat", "cat"], 0)
    assert double == pytest.approx(2 * single, abs=1e-12)


def test_counts_and_lengths():
    index = built()
    assert index.n_docs == 3
    assert index.avgdl == pytest.approx((6 + 6 + 4) / 3)
    assert index.doc_length(2) == 4
    assert index.term_frequency("the", 0) == 2
    assert index.term_frequency("the", 2) == 0
    assert index.doc_frequency("sat") == 2
    assert index.doc_frequency("unseen") == 0


def test_top_k_ordering_and_tie_break():
    index = built()
    ranked = index.top_k(tokenize("the cat sat"), 3)
    assert [d for d, _ in ranked] == [0, 1, 2]
    # all-zero scores: ties broken by ascending doc id
    zeros = index.top_k(["zzz"], 3)
    assert [d for d, _ in zeros] == [0, 1, 2]
    assert all(s == 0.0 for _, s in zeros)
    assert index.top_k(tokenize("cat"), 0) == []
    assert len(index.top_k(tokenize("cat"), 99)) == 3


def test_unbuilt_and_bad_ids():
    index = Bm25Index()
    with pytest.raises(IndexNotBuiltError):
        index.score(["a"], 0)
    with pytest.raises(IndexNotBuiltError):
        index.n_docs
    built_index = built()
    with pytest.raises(UnknownDocError):
        built_index.score(["a"], 3)
    with pytest.raises(ValueError):
        built_index.build(["again"])


def test_parameter_validation():
    with pytest.raises(ValueError):
        Bm25Index(k1=-0.1)
    with pytest.raises(ValueError):
        Bm25Index(b=1.5)


def test_insertion_order_invariance():
    # same corpus content, different insertion order: per-document scores
    # must be identical once ids are mapped back
    docs = ["alpha beta", "beta gamma gamma", "alpha alpha delta", "gamma"]
    forward = Bm25Index().build(docs)
    reordered = [docs[i] for i in (2, 0, 3, 1)]
    backward = Bm25Index().build(reordered)
    query = tokenize("alpha gamma")
    for new_id, old_id in enumerate((2, 0, 3, 1)):
        assert backward.score(query, new_id) == pytest.approx(
            forward.score(query, old_id), abs=1e-12)


def test_save_load_round_trip(tmp_path):
    index = Bm25Index(k1=1.4, b=0.6).build(list(DOCS))
    path = tmp_path / "snap.idx"
    index.save(path)
    again = Bm25Index.load(path)
    assert again.k1 == 1.4 and again.b == 0.6
    assert again.n_docs == 3
    for query in EXPECTED:
        for d in range(3):
            assert again.score(tokenize(query), d) == index.score(tokenize(query), d)
    ranked = again.top_k(tokenize("the cat"), 3)
    assert ranked == index.top_k(tokenize("the cat"), 3)


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_text("not a snapshot\n")
    with pytest.raises(ParseError):
        Bm25Index.load(bad)
    truncated = tmp_path / "trunc.idx"
    truncated.write_text("bm25-index 1\nparams 1.2 0.75\nndocs 2\nlengths 3 3\n")
    with pytest.raises(ParseError):
        Bm25Index.load(truncated)


def brute_force(docs, query, k1=1.2, b=0.75):
    token_lists = [tokenize(d) for d in docs]
    n = len(docs)
    avgdl = sum(len(t) for t in token_lists) / n if n else 0.0
    out = []
    for tokens in token_lists:
        dl = len(tokens)
        score = 0.0
        for term in query:
            tf = tokens.count(term)
            if not tf:
                continue
            df = sum(1 for other in token_lists if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
        out.append(score)
    return out


def test_property_matches_brute_force_on_random_corpora():
    vocab = ["ant", "bee", "cow", "dog", "eel", "fox", "gnu", "hen"]
    rng = np.random.default_rng(4207)
    for _ in range(150):
        n_docs = int(rng.integers(1, 12))
        docs = [" ".join(rng.choice(vocab, size=rng.integers(1, 9)))
                for _ in range(n_docs)]
        query = list(rng.choice(vocab, size=rng.integers(1, 4)))
        index = Bm25Index().build(docs)
        direct = brute_force(docs, query)
        assert index.score_all(query) == pytest.approx(direct, abs=1e-9)
        k = int(rng.integers(1, n_docs + 2))
        wanted = sorted(range(n_docs), key=lambda d: (-direct[d], d))[:k]
        assert [d for d, _ in index.top_k(query, k)] == wanted
