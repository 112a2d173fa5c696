import numpy as np
import pytest

from smoothfeed.checkpoint import (BadMagicError, Checkpoint, ChecksumError,
                                   KindError, VersionError,
                                   checkpoint_of_gate, checkpoint_of_ranker,
                                   decode_checkpoint, encode_checkpoint,
                                   gate_from_checkpoint, load_checkpoint,
                                   ranker_from_checkpoint, save_checkpoint)


def sample_checkpoint(kind="gate"):
    rng = np.random.default_rng(0)
    tensors = {
        "layer.w": rng.standard_normal((4, 3)).astype(np.float32),
        "layer.b": rng.standard_normal(3).astype(np.float32),
        "emb": rng.standard_normal((7, 2)).astype(np.float32),
    }
    return Checkpoint.build(kind, {"step": 42, "config": {"x": 1}}, tensors)


class TestCodec:
    def test_roundtrip_is_bit_exact(self):
        ck = sample_checkpoint()
        data = encode_checkpoint(ck)
        back = decode_checkpoint(data)
        assert back.kind == ck.kind
        assert back.step == 42
        assert list(back.tensors) == list(ck.tensors)
        for name in ck.tensors:
            assert back.tensors[name].tobytes() == ck.tensors[name].tobytes()
        # Re-encoding the decoded checkpoint reproduces identical bytes.
        assert encode_checkpoint(back) == data

    def test_file_roundtrip(self, tmp_path):
        ck = sample_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ck, path)
        assert encode_checkpoint(load_checkpoint(path)) == path.read_bytes()

    def test_flipped_payload_byte_fails_crc(self):
        data = bytearray(encode_checkpoint(sample_checkpoint()))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(ChecksumError):
            decode_checkpoint(bytes(data))

    def test_bad_magic(self):
        data = bytearray(encode_checkpoint(sample_checkpoint()))
        data[0:4] = b"NOPE"
        # Fix the CRC so the magic check itself is exercised.
        import struct
        import zlib
        body = bytes(data[:-4])
        data[-4:] = struct.pack("<I", zlib.crc32(body))
        with pytest.raises(BadMagicError):
            decode_checkpoint(bytes(data))

    def test_wrong_version(self):
        import struct
        import zlib
        data = bytearray(encode_checkpoint(sample_checkpoint()))
        data[4:8] = struct.pack("<I", 99)
        body = bytes(data[:-4])
        data[-4:] = struct.pack("<I", zlib.crc32(body))
        with pytest.raises(VersionError):
            decode_checkpoint(bytes(data))

    def test_unknown_kind_rejected_at_build(self):
        with pytest.raises(KindError):
            Checkpoint.build("whatever", {}, {})

    def test_truncated_file(self):
        data = encode_checkpoint(sample_checkpoint())
        with pytest.raises((ChecksumError, Exception)):
            decode_checkpoint(data[:10])


class TestModelAdapters:
    def test_gate_roundtrip_preserves_predictions(self):
        from test_gate import SCHEMA, random_fv, toy_config
        from smoothfeed.gate import GateClassifier
        rng = np.random.default_rng(3)
        X = [random_fv(rng, code_override=(i % 2) * 20) for i in range(32)]
        clf = GateClassifier(toy_config(epochs=2), SCHEMA, seed=1)
        clf.fit(X, [i % 2 for i in range(32)])
        ck = checkpoint_of_gate(clf)
        restored = gate_from_checkpoint(decode_checkpoint(encode_checkpoint(ck)))
        assert np.array_equal(restored.predict_proba(X), clf.predict_proba(X))
        assert restored.global_step_ == clf.global_step_
        assert restored.config == clf.config
        assert restored.schema == clf.schema

    def test_rank_roundtrip_preserves_predictions(self):
        from test_rank import random_bundle, toy_config
        from smoothfeed.rank import MultiTaskRanker
        rng = np.random.default_rng(4)
        X = [random_bundle(rng) for _ in range(12)]
        Y = rng.integers(0, 2, size=(12, 4))
        ranker = MultiTaskRanker(toy_config(batch_size=4), seed=2)
        ranker.fit(X, Y)
        ck = checkpoint_of_ranker(ranker)
        restored = ranker_from_checkpoint(decode_checkpoint(encode_checkpoint(ck)))
        assert np.array_equal(restored.predict_pxtrs(X), ranker.predict_pxtrs(X))
        assert restored.config == ranker.config

    def test_kind_tag_cross_load_rejected(self):
        from test_gate import SCHEMA, toy_config
        from smoothfeed.gate import GateClassifier
        clf = GateClassifier(toy_config(), SCHEMA, seed=0).build()
        ck = checkpoint_of_gate(clf)
        with pytest.raises(KindError, match="rank"):
            ranker_from_checkpoint(ck)

    def test_checkpoint_sequence_is_deterministic(self):
        from test_rank import random_bundle, toy_config
        from smoothfeed.rank import MultiTaskRanker, TASKS
        rng = np.random.default_rng(5)
        stream = [(random_bundle(rng), {t: int(rng.integers(0, 2)) for t in TASKS})
                  for _ in range(60)]

        def run():
            blobs = []
            r = MultiTaskRanker(toy_config(batch_size=1,
                                           checkpoint_interval_steps=20), seed=7)
            r.fit_stream(iter(stream),
                         on_checkpoint=lambda step, model: blobs.append(
                             encode_checkpoint(checkpoint_of_ranker(model))))
            return blobs

        a, b = run(), run()
        assert len(a) == 3
        assert all(x == y for x, y in zip(a, b))
