import json

import numpy as np
import pytest

from opsig.errors import (
    ChecksumMismatchError,
    DatabaseFormatError,
    UnsupportedVersionError,
)
from opsig.ingest import OpcodeSequence
from opsig.opgraph import build_graph, build_vocabulary, count_bigrams, merge_counts
from opsig.signatures import (
    SignatureDatabase,
    build_class_signatures,
    build_database,
    build_monolithic_signature,
    build_signature,
    load_database,
    save_database,
)
from opsig.synthcorpus import default_alphabet, make_family_model, sample_sequence


def toy_corpus():
    """Three tiny classes with distinct bigram structure."""
    samples = []
    for i in range(4):
        samples.append(OpcodeSequence(f"a{i}", ("MOV", "PUSH") * 10, "famA"))
        samples.append(OpcodeSequence(f"b{i}", ("CALL", "RET") * 10, "famB"))
        samples.append(OpcodeSequence(f"n{i}", ("XOR", "NOP", "ADD") * 8, "benign"))
    return samples


class TestBuildSignature:
    def test_singleton_equals_member_graph(self, seq1, table1_vocab):
        counts = count_bigrams(seq1)
        member_graph, _ = build_graph(counts, table1_vocab)
        sig = build_signature([counts], table1_vocab, "famA", "singleton", 0)
        np.testing.assert_array_equal(sig.graph.weights, member_graph.weights)
        assert sig.member_count == 1
        assert sig.signature_id == "famA/singleton/0"

    def test_merged_push_row(self, seq1, seq2, table1_vocab):
        sig = build_signature(
            [count_bigrams(seq1), count_bigrams(seq2)], table1_vocab, "fam"
        )
        idx = table1_vocab.index
        row = sig.graph.weights[idx["PUSH"]]
        # hand merge: PUSH outgoing {POP:1, PUSH:1, CALL:1} + {PUSH:1, POP:1, MOV:1}
        assert row[idx["POP"]] == 2 / 6
        assert row[idx["PUSH"]] == 2 / 6
        assert row[idx["CALL"]] == 1 / 6
        assert row[idx["MOV"]] == 1 / 6

    def test_identical_members_normalize_to_member_graph(self, seq1, table1_vocab):
        counts = count_bigrams(seq1)
        member_graph, _ = build_graph(counts, table1_vocab)
        for copies in (2, 5):
            sig = build_signature([counts] * copies, table1_vocab, "fam")
            np.testing.assert_array_equal(sig.graph.weights, member_graph.weights)

    def test_empty_member_list_rejected(self, table1_vocab):
        with pytest.raises(ValueError):
            build_signature([], table1_vocab, "fam")


class TestBuildClassSignatures:
    def test_single_sample_yields_singleton(self, table1_vocab, seq1):
        sigs = build_class_signatures([seq1], table1_vocab)
        assert len(sigs) == 1
        assert sigs[0].round_tag == "singleton"
        assert sigs[0].member_count == 1

    def test_identical_samples_yield_one_cluster_signature(self, table1_vocab):
        samples = [OpcodeSequence(f"s{i}", ("MOV", "POP", "CALL") * 5, "fam") for i in range(5)]
        sigs = build_class_signatures(samples, table1_vocab)
        assert len(sigs) == 1
        assert sigs[0].round_tag == "r1"
        assert sigs[0].member_count == 5

    def test_planted_subfamilies_recovered(self):
        alphabet = default_alphabet(40)
        samples = []
        truth = {}
        for j in range(3):
            model = make_family_model(alphabet, [100, j], family_label="fam")
            for k in range(6):
                sid = f"fam-{j}-{k}"
                samples.append(sample_sequence(model, 1000, [200, j, k], sample_id=sid))
                truth[sid] = j
        counts = {s.sample_id: count_bigrams(s) for s in samples}
        vocab = build_vocabulary(merge_counts(counts.values()), 1.0)
        sigs = build_class_signatures(samples, vocab, (0.01, 0.1), 3, counts=counts)
        assert len(sigs) == 3
        assert sorted(s.member_count for s in sigs) == [6, 6, 6]
        # each signature graph must equal the merge of exactly one planted source
        for j in range(3):
            member_counts = [counts[sid] for sid, src in truth.items() if src == j]
            expected = build_signature(member_counts, vocab, "fam").graph.weights
            assert any(np.array_equal(sig.graph.weights, expected) for sig in sigs)

    def test_mixed_labels_rejected(self, table1_vocab, seq1, seq2):
        with pytest.raises(ValueError):
            build_class_signatures([seq1, seq2], table1_vocab)


class TestMonolithicSignature:
    def test_equals_signature_over_all_members(self, table1_vocab):
        samples = [
            OpcodeSequence("x1", ("MOV", "POP", "MOV", "CALL"), "fam"),
            OpcodeSequence("x2", ("CALL", "PUSH", "CALL"), "fam"),
        ]
        mono = build_monolithic_signature(samples, table1_vocab)
        direct = build_signature(
            [count_bigrams(s) for s in samples], table1_vocab, "fam"
        )
        np.testing.assert_array_equal(mono.graph.weights, direct.graph.weights)
        assert mono.round_tag == "monolithic"
        assert mono.member_count == 2

    def test_single_sample_class(self, table1_vocab, seq1):
        mono = build_monolithic_signature([seq1], table1_vocab)
        member_graph, _ = build_graph(count_bigrams(seq1), table1_vocab)
        np.testing.assert_array_equal(mono.graph.weights, member_graph.weights)


class TestBuildDatabase:
    def test_classes_and_metadata(self):
        db = build_database(toy_corpus(), retain_fraction=1.0, seed=3)
        assert db.class_labels == ("benign", "famA", "famB")
        assert db.metadata["retain_fraction"] == 1.0
        assert db.metadata["eps_schedule"] == [0.01, 0.1]
        assert db.metadata["min_pts"] == 3
        assert db.metadata["seed"] == 3
        ids = [s.signature_id for s in db.signatures]
        assert ids == sorted(ids)
        assert len(ids) == len(set(ids))

    def test_parallelism_does_not_change_result(self):
        corpus = toy_corpus()
        a = build_database(corpus, retain_fraction=1.0)
        b = build_database(corpus, retain_fraction=1.0, parallelism=4)
        assert a == b

    def test_monolithic_mode(self):
        db = build_database(toy_corpus(), retain_fraction=1.0, monolithic=True)
        assert len(db.signatures) == 3
        assert all(s.round_tag == "monolithic" for s in db.signatures)


class TestSaveLoad:
    def test_round_trip_structural_equality(self, tmp_path):
        db = build_database(toy_corpus(), retain_fraction=1.0)
        path = tmp_path / "toy.sigdb.json"
        save_database(db, path)
        loaded = load_database(path)
        assert loaded == db

    def test_save_load_save_byte_identical(self, tmp_path):
        db = build_database(toy_corpus(), retain_fraction=0.9)
        first = tmp_path / "one.sigdb.json"
        second = tmp_path / "two.sigdb.json"
        save_database(db, first)
        save_database(load_database(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_save_is_deterministic(self, tmp_path):
        corpus = toy_corpus()
        a, b = tmp_path / "a.sigdb.json", tmp_path / "b.sigdb.json"
        save_database(build_database(corpus, retain_fraction=1.0), a)
        save_database(build_database(corpus, retain_fraction=1.0), b)
        assert a.read_bytes() == b.read_bytes()

    def test_version_bump_rejected(self, tmp_path):
        db = build_database(toy_corpus(), retain_fraction=1.0)
        path = tmp_path / "v.sigdb.json"
        save_database(db, path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(UnsupportedVersionError):
            load_database(path)

    def test_tampered_weights_fail_checksum(self, tmp_path):
        db = build_database(toy_corpus(), retain_fraction=1.0)
        path = tmp_path / "c.sigdb.json"
        save_database(db, path)
        doc = json.loads(path.read_text())
        entry = doc["signatures"][0]
        row = next(iter(entry["rows"].values()))
        col = next(iter(row))
        row[col] = 0.123456
        path.write_text(json.dumps(doc))
        with pytest.raises(ChecksumMismatchError):
            load_database(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "junk.sigdb.json"
        path.write_text("{not json")
        with pytest.raises(DatabaseFormatError):
            load_database(path)

    def test_missing_version_rejected(self, tmp_path):
        path = tmp_path / "nov.sigdb.json"
        path.write_text(json.dumps({"metadata": {}}))
        with pytest.raises(DatabaseFormatError):
            load_database(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_database(tmp_path / "gone.sigdb.json")


class TestDatabaseValidation:
    def test_duplicate_ids_rejected(self, table1_vocab, seq1):
        counts = count_bigrams(seq1)
        sig = build_signature([counts], table1_vocab, "fam", "r1", 0)
        with pytest.raises(ValueError):
            SignatureDatabase(table1_vocab, (sig, sig), {})
