import threading

import numpy as np
import pytest

from proofplan.core import Vector, vec_sum
from proofplan.encoders import (
    ConceptLexicon,
    EncodeCache,
    Encoder,
    FileLookupEncoder,
    ProjectedEncoder,
    RemoteEncoder,
    SyntheticAdditiveEncoder,
    synthetic_encode,
    write_embedding_file,
)
from proofplan.errors import (
    DimensionMismatchError,
    MissingEmbeddingError,
    ParseError,
    RemoteFailureError,
    UnknownConceptError,
)
from proofplan.projection import ProjectionHead

from conftest import stub_vector


class CountingEncoder(Encoder):
    def __init__(self, dim=3, **kwargs):
        super().__init__(**kwargs)
        self.calls = 0
        self._width = dim

    def _encode_key(self, key):
        self.calls += 1
        return Vector.of([float(len(key))] * self._width)


def test_cache_hit_and_miss_counters():
    enc = CountingEncoder()
    enc.encode("The cat sat.")
    enc.encode("the cat sat")
    enc.encode("another one")
    assert enc.calls == 2
    assert enc.cache.hits == 1
    assert enc.cache.misses == 2
    assert len(enc.cache) == 2


def test_cache_disabled():
    enc = CountingEncoder(cache=False)
    enc.encode("a b")
    enc.encode("a b")
    assert enc.calls == 2
    assert enc.cache is None


def test_cache_race_first_store_wins():
    cache = EncodeCache()
    results = []
    barrier = threading.Barrier(4)

    def worker(value):
        def compute():
            barrier.wait()
            return Vector.of([value])
        results.append(cache.get_or_compute("k", compute))

    threads = [threading.Thread(target=worker, args=(float(i),)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({r.tolist()[0] for r in results}) == 1
    assert cache.peek("k") == results[0]


def test_encode_empty_text_rejected():
    with pytest.raises(ValueError):
        CountingEncoder().encode("   ")


def test_encode_batch_attaches_failing_index():
    enc = SyntheticAdditiveEncoder(ConceptLexicon(["a", "b"]))
    with pytest.raises(UnknownConceptError) as err:
        enc.encode_batch(["a", "b", "zzz"])
    assert err.value.index == 2


def test_dim_consistency_enforced():
    class Widening(Encoder):
        def _encode_key(self, key):
            return Vector.of([1.0] * len(key))

    enc = Widening()
    enc.encode("ab")
    with pytest.raises(DimensionMismatchError):
        enc.encode("abcd")


def test_file_lookup_round_trip(tmp_path):
    path = tmp_path / "emb.jsonl"
    n = write_embedding_file(path, [
        ("The cat sat.", Vector.of([1.0, 2.0])),
        ("the cat sat", Vector.of([1.0, 2.0])),   # duplicate key, dropped
        ("dogs bark", Vector.of([3.0, 4.0])),
    ])
    assert n == 2
    enc = FileLookupEncoder(path)
    assert enc.encode("THE CAT SAT").tolist() == [1.0, 2.0]
    assert "dogs bark" in enc
    assert enc.dim == 2


def test_file_lookup_strict_missing(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_embedding_file(path, [("known", Vector.of([1.0, 0.0]))])
    strict = FileLookupEncoder(path)
    with pytest.raises(MissingEmbeddingError):
        strict.encode("unknown text")


def test_file_lookup_lenient_fallback_is_deterministic(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_embedding_file(path, [("known", Vector.of([1.0, 0.0]))])
    lenient = FileLookupEncoder(path, strict=False)
    a = lenient.encode("unknown text")
    b = FileLookupEncoder(path, strict=False).encode("unknown  text.")
    assert a == b
    assert a.dim == 2


def test_file_lookup_parse_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"text": "a", "vector": [1.0]}\n{"text": "b"}\n')
    with pytest.raises(ParseError) as err:
        FileLookupEncoder(bad)
    assert err.value.line == 2

    mixed = tmp_path / "mixed.jsonl"
    mixed.write_text('{"text": "a", "vector": [1.0]}\n'
                     '{"text": "b", "vector": [1.0, 2.0]}\n')
    with pytest.raises(ParseError):
        FileLookupEncoder(mixed)

    conflict = tmp_path / "conflict.jsonl"
    conflict.write_text('{"text": "a", "vector": [1.0]}\n'
                        '{"text": "A ", "vector": [2.0]}\n')
    with pytest.raises(ParseError):
        FileLookupEncoder(conflict)


def test_lexicon_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        ConceptLexicon(["two words"])
    with pytest.raises(ValueError):
        ConceptLexicon(["dup", "dup"])
    lex = ConceptLexicon(["apple", "pear", "plum"])
    lex.save(tmp_path / "lex.txt")
    again = ConceptLexicon.load(tmp_path / "lex.txt")
    assert again.tokens == lex.tokens
    assert again.index_of("pear") == 1
    with pytest.raises(UnknownConceptError):
        again.index_of("mango")


def test_synthetic_additivity_exact():
    lex = ConceptLexicon([f"c{i}" for i in range(6)])
    enc = SyntheticAdditiveEncoder(lex)
    left = enc.encode("c0 c2")
    right = enc.encode("c1 c5")
    union = enc.encode("c0 c1 c2 c5")
    assert vec_sum(left, right) == union
    # duplicates inside one text collapse
    assert enc.encode("c0 c0 c2") == enc.encode("c0 c2")
    assert synthetic_encode(lex, ["c3"]).tolist() == [0, 0, 0, 1, 0, 0]


def test_projected_encoder_identity_at_init():
    lex = ConceptLexicon([f"c{i}" for i in range(5)])
    base = SyntheticAdditiveEncoder(lex)
    head = ProjectionHead.initialize(5, seed=11)
    projected = ProjectedEncoder(base, head)
    for text in ("c0", "c1 c3", "c0 c2 c4"):
        assert projected.encode(text) == base.encode(text)


def test_projected_encoder_dim_mismatch():
    lex = ConceptLexicon(["a", "b", "c"])
    base = SyntheticAdditiveEncoder(lex)
    with pytest.raises(DimensionMismatchError):
        ProjectedEncoder(base, ProjectionHead.initialize(4, seed=0))


def test_remote_encoder_round_trip(backend):
    enc = RemoteEncoder(f"{backend}/encode")
    vec = enc.encode("hello world")
    assert vec.tolist() == [float(x) for x in stub_vector("hello world")]
    assert enc.dim == 4


def test_remote_encoder_batch_posts_once(backend):
    enc = RemoteEncoder(f"{backend}/encode")
    texts = ["one", "two", "one", "THREE", "three"]
    out = enc.encode_batch(texts)
    assert len(out) == 5
    assert out[0] == out[2]
    assert out[3] == out[4]
    # second batch is fully cached: backend sees no new texts
    before = enc.cache.misses
    enc.encode_batch(texts)
    assert enc.cache.misses == before


def test_remote_encoder_bad_arity(backend):
    enc = RemoteEncoder(f"{backend}/bad-arity", retries=0)
    with pytest.raises(RemoteFailureError):
        enc.encode_batch(["a", "b", "c"])


def test_remote_encoder_non_json_body(backend):
    enc = RemoteEncoder(f"{backend}/not-json", retries=0, backoff=0.0)
    with pytest.raises(RemoteFailureError):
        enc.encode("a")


def test_remote_retries_eventually_succeed(backend):
    # /flaky fails twice then succeeds; 3 retries cover that
    from proofplan.search import RemoteEntailment
    scorer = RemoteEntailment(f"{backend}/flaky", retries=3, backoff=0.0)
    assert scorer.score("p", "h") == 0.5
