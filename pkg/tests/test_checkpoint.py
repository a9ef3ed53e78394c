import numpy as np
import pytest

from atxf.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from atxf.errors import CheckpointError
from atxf.model import init_parameters, parameter_shapes

from conftest import micro_config


@pytest.fixture
def ckpt():
    cfg = micro_config(vocab_size=13)
    params = init_parameters(cfg, seed=2)
    return Checkpoint.from_params(params, cfg, "f" * 64, domain="alpha",
                                  source_domain="beta")


def test_round_trip_bitwise(tmp_path, ckpt):
    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    assert loaded.config == ckpt.config
    assert loaded.vocab_fingerprint == ckpt.vocab_fingerprint
    assert loaded.domain == "alpha" and loaded.source_domain == "beta"
    for name in parameter_shapes(ckpt.config):
        assert np.array_equal(loaded.tensors[name], ckpt.tensors[name])
        assert loaded.tensors[name].dtype == np.float32


def test_magic_bytes(tmp_path, ckpt):
    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    assert path.read_bytes()[:4] == b"ATXF"


def test_flipped_payload_byte_detected(tmp_path, ckpt):
    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    blob = bytearray(path.read_bytes())
    blob[-100] ^= 0x40  # inside the payload (last 32 bytes are the digest)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_truncated_payload_detected(tmp_path, ckpt):
    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.atxf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path, ckpt):
    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_missing_fingerprint_rejected(tmp_path, ckpt):
    import json
    import struct

    path = tmp_path / "a.atxf"
    save_checkpoint(ckpt, path)
    blob = path.read_bytes()
    (hlen,) = struct.unpack("<I", blob[6:10])
    header = json.loads(blob[10:10 + hlen])
    header.pop("vocab_fingerprint")
    new_header = json.dumps(header).encode()
    path.write_bytes(blob[:6] + struct.pack("<I", len(new_header)) + new_header
                     + blob[10 + hlen:])
    with pytest.raises(CheckpointError, match="fingerprint"):
        load_checkpoint(path)


def test_tensor_set_must_match_config(ckpt):
    tensors = dict(ckpt.tensors)
    tensors.pop("token_embedding")
    with pytest.raises(CheckpointError, match="token_embedding"):
        Checkpoint(ckpt.config, ckpt.vocab_fingerprint, tensors, "alpha")


def test_to_params_is_bitwise_and_trainable(ckpt):
    params = ckpt.to_params()
    for name, t in params.items():
        assert t.requires_grad
        assert np.array_equal(t.data, ckpt.tensors[name])
