import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from lgdml import datastore, synth
from lgdml.config import (TrainConfig, config_from_dict, dumps_config,
                          loads_config)
from lgdml.errors import (BadMagic, ConfigError, CountMismatch, DuplicateName,
                          NonFiniteValue, TruncatedPayload, ZeroRow)


class TestMatrixFile:
    def test_round_trip_identity(self, tmp_path):
        m = np.eye(3)
        datastore.write_matrix(tmp_path / "m.lgdm", m)
        out = datastore.read_matrix(tmp_path / "m.lgdm")
        assert out.dtype == np.float64
        np.testing.assert_array_equal(out, m)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.lgdm"
        blob = bytearray(datastore.matrix_bytes(np.eye(2)))
        blob[:4] = b"NOPE"
        p.write_bytes(bytes(blob))
        with pytest.raises(BadMagic):
            datastore.read_matrix(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.lgdm"
        blob = datastore.matrix_bytes(np.eye(2))
        p.write_bytes(blob[:-3])
        with pytest.raises(TruncatedPayload):
            datastore.read_matrix(p)

    def test_non_finite_rejected_on_write(self):
        m = np.eye(2)
        m[1, 0] = np.inf
        with pytest.raises(NonFiniteValue) as e:
            datastore.matrix_bytes(m)
        assert e.value.index == 2

    def test_f32_round_trip_hash(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(1000, 64)).astype(np.float32)
        p = tmp_path / "big.lgdm"
        datastore.write_matrix(p, m)
        out = datastore.read_matrix(p)
        assert out.dtype == np.float32
        assert hashlib.sha256(out.tobytes()).hexdigest() == hashlib.sha256(m.tobytes()).hexdigest()

    def test_no_temp_files_left(self, tmp_path):
        datastore.write_matrix(tmp_path / "a.lgdm", np.eye(2))
        assert sorted(os.listdir(tmp_path)) == ["a.lgdm"]


class TestNamesAndTables:
    def test_clean_class_name(self):
        assert datastore.clean_class_name("027.Shiny_Cowbird") == "Shiny Cowbird"
        assert datastore.clean_class_name("Blue Jay") == "Blue Jay"
        assert datastore.clean_class_name("12_Ford_Focus") == "Ford Focus"

    def test_table_round_trip_lookup(self, tmp_path):
        rng = np.random.default_rng(1)
        emb = rng.normal(size=(5, 8))
        names = [f"00{i}.Some_Bird_{i}" for i in range(5)]
        datastore.write_matrix(tmp_path / "t.lgdm", emb)
        datastore.write_names(tmp_path / "t.txt", names)
        table = datastore.load_language_table(tmp_path / "t.lgdm", tmp_path / "t.txt")
        assert table.names[2] == "Some Bird 2"
        want = emb[3] / np.linalg.norm(emb[3])
        np.testing.assert_allclose(table.row("Some Bird 3"), want, atol=1e-12)

    def test_duplicate_name(self, tmp_path):
        datastore.write_matrix(tmp_path / "t.lgdm", np.eye(2))
        datastore.write_names(tmp_path / "t.txt", ["a", "1.a"])  # cleans to same
        with pytest.raises(DuplicateName):
            datastore.load_language_table(tmp_path / "t.lgdm", tmp_path / "t.txt")

    def test_count_mismatch(self, tmp_path):
        datastore.write_matrix(tmp_path / "t.lgdm", np.eye(3))
        datastore.write_names(tmp_path / "t.txt", ["a", "b"])
        with pytest.raises(CountMismatch):
            datastore.load_language_table(tmp_path / "t.lgdm", tmp_path / "t.txt")

    def test_zero_row_rejected(self, tmp_path):
        datastore.write_matrix(tmp_path / "t.lgdm", np.array([[1.0, 0.0], [0.0, 0.0]]))
        datastore.write_names(tmp_path / "t.txt", ["a", "b"])
        with pytest.raises(ZeroRow):
            datastore.load_language_table(tmp_path / "t.lgdm", tmp_path / "t.txt")

    def test_external_rescale(self, tmp_path):
        m = np.array([[1.0, 0.25], [0.25, 1.0]])
        datastore.write_matrix(tmp_path / "e.lgdm", m)
        datastore.write_names(tmp_path / "e.txt", ["a", "b"])
        out, names = datastore.load_external_targets(tmp_path / "e.lgdm", tmp_path / "e.txt")
        np.testing.assert_allclose(out, 2 * m - 1, atol=1e-12)
        assert names == ["a", "b"]


class TestBundle:
    def test_round_trip(self, tmp_path):
        bundle = synth.synth_dataset(synth.SynthSpec(seed=5, samples_per_class=4))
        datastore.save_bundle(tmp_path / "b", bundle)
        out = datastore.load_bundle(tmp_path / "b")
        np.testing.assert_array_equal(out.features, bundle.features)
        np.testing.assert_array_equal(out.labels, bundle.labels)
        assert out.class_names == bundle.class_names
        assert out.train_classes == bundle.train_classes
        assert out.test_classes == bundle.test_classes
        np.testing.assert_array_equal(out.posteriors.data, bundle.posteriors.data)
        assert out.lang_class.names == bundle.lang_class.names
        np.testing.assert_allclose(out.lang_class.embeddings, bundle.lang_class.embeddings,
                                   atol=1e-7)
        np.testing.assert_allclose(out.external_targets, bundle.external_targets, atol=1e-7)
        assert out.meta == bundle.meta


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        arrays = {"w0": rng.normal(size=(6, 4)), "b0": rng.normal(size=(1, 4))}
        cfg_text = dumps_config(TrainConfig())
        p = tmp_path / "c.lgck"
        datastore.save_checkpoint(p, cfg_text, arrays)
        text, out = datastore.load_checkpoint(p)
        assert text == cfg_text
        for k in arrays:
            np.testing.assert_array_equal(out[k], arrays[k])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "c.lgck"
        p.write_bytes(b"WRONGSTUFF")
        with pytest.raises(BadMagic):
            datastore.load_checkpoint(p)


class TestConfig:
    def test_round_trip_identity(self):
        cfg = TrainConfig(base_loss="margin", base_params={"learn_beta": True},
                          lr=0.01, epochs=3)
        text = dumps_config(cfg)
        again = loads_config(text)
        assert dumps_config(again) == text

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict({"learning_rate": 0.1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict({"guidance": {"omega_weight": 2}})

    def test_invariants(self):
        with pytest.raises(ConfigError):
            config_from_dict({"batch_size": 30, "samples_per_class": 4})
        with pytest.raises(ConfigError):
            config_from_dict({"val_fraction": 1.0})
        with pytest.raises(ConfigError):
            config_from_dict({"base_loss": "softmax"})
