"""Checkpoint container: the unit of weight transfer between domains.

File layout: magic ``ATXF``, u16 format version, u32 header length,
UTF-8 JSON header (model config, provenance, vocabulary fingerprint,
ordered tensor directory of name/shape/byte-offset), raw little-endian
float32 payloads in directory order, SHA-256 of the payload.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError
from .model import ModelConfig, parameter_shapes

MAGIC = b"ATXF"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab_fingerprint: str
    tensors: dict[str, np.ndarray]
    domain: str
    source_domain: str | None = None

    def __post_init__(self):
        declared = parameter_shapes(self.config)
        if set(self.tensors) != set(declared):
            missing = sorted(set(declared) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(declared))
            raise CheckpointError(
                f"tensor set mismatch: missing={missing} unexpected={extra}"
            )
        for name, shape in declared.items():
            if tuple(self.tensors[name].shape) != tuple(shape):
                raise CheckpointError(
                    f"tensor '{name}' has shape {self.tensors[name].shape}, expected {shape}"
                )

    @classmethod
    def from_params(cls, params: dict[str, Tensor], config: ModelConfig,
                    vocab_fingerprint: str, domain: str,
                    source_domain: str | None = None) -> "Checkpoint":
        tensors = {name: np.array(t.data, dtype="<f4") for name, t in params.items()}
        return cls(config, vocab_fingerprint, tensors, domain, source_domain)

    def to_params(self) -> dict[str, Tensor]:
        """Trainable tensors initialized bitwise from the payload."""
        params = {}
        for name in parameter_shapes(self.config):
            t = Tensor(np.array(self.tensors[name], dtype=np.float32))
            t.requires_grad = True
            params[name] = t
        return params


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Atomic write (temp file + rename) of the binary checkpoint."""
    directory = []
    payload = bytearray()
    for name in parameter_shapes(ckpt.config):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = json.dumps({
        "config": ckpt.config.to_dict(),
        "provenance": {"domain": ckpt.domain, "source_domain": ckpt.source_domain},
        "vocab_fingerprint": ckpt.vocab_fingerprint,
        "directory": directory,
    }).encode("utf-8")
    blob = b"".join([
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<I", len(header)),
        header,
        bytes(payload),
        hashlib.sha256(bytes(payload)).digest(),
    ])
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    if len(blob) < 10:
        raise CheckpointError(f"{path}: truncated before header")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    (header_len,) = struct.unpack("<I", blob[6:10])
    header_end = 10 + header_len
    if len(blob) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[10:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    fingerprint = header.get("vocab_fingerprint")
    if not fingerprint:
        raise CheckpointError(f"{path}: vocabulary fingerprint absent")
    config = ModelConfig.from_dict(header["config"])
    directory = header["directory"]
    payload_len = 0
    for entry in directory:
        size = int(np.prod(entry["shape"], dtype=np.int64)) * 4
        payload_len = max(payload_len, entry["offset"] + size)
    payload_end = header_end + payload_len
    if len(blob) < payload_end + 32:
        raise CheckpointError(f"{path}: truncated payload")
    payload = blob[header_end:payload_end]
    digest = blob[payload_end:payload_end + 32]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    tensors = {}
    for entry in directory:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor '{name}'")
        tensors[name] = arr.reshape(shape).copy()
    provenance = header.get("provenance", {})
    return Checkpoint(
        config=config,
        vocab_fingerprint=fingerprint,
        tensors=tensors,
        domain=provenance.get("domain", ""),
        source_domain=provenance.get("source_domain"),
    )
