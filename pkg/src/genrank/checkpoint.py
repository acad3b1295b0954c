"""Checkpoint container.

Layout (all integers little-endian)::

    b"GENRANKCKPT"  magic (11 bytes)
    uint16          format version
    uint64          header length N
    N bytes         UTF-8 JSON header: {"config", "metadata", "vocab", "tensors": [
                    {"name", "shape", "offset", "nbytes"}, ...]}
    ...             raw float64 ('<f8') tensor data, C order, at the stated offsets
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import GenerativeRanker, ModelConfig, build_model
from .text import Vocabulary

MAGIC = b"GENRANKCKPT"
FORMAT_VERSION = 1


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    vocab: Vocabulary | None = None

    @classmethod
    def from_model(cls, model: GenerativeRanker, metadata: dict | None = None,
                   vocab: Vocabulary | None = None) -> "ModelCheckpoint":
        return cls(model.config, model.state_dict(), dict(metadata or {}), vocab)

    def build_model(self) -> GenerativeRanker:
        model = build_model(self.config)
        model.load_state_dict(self.params)
        return model

    def to_bytes(self) -> bytes:
        tensors, blobs, offset = [], [], 0
        for name, arr in self.params.items():
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
        header = {
            "config": self.config.to_dict(),
            "metadata": self.metadata,
            "vocab": None if self.vocab is None else self.vocab.dumps(),
            "tensors": tensors,
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        return MAGIC + struct.pack("<HQ", FORMAT_VERSION, len(head)) + head + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "ModelCheckpoint":
        if not data.startswith(MAGIC):
            raise DataError(f"{source}: not a genrank checkpoint (bad magic)")
        pos = len(MAGIC)
        version, n = struct.unpack_from("<HQ", data, pos)
        if version != FORMAT_VERSION:
            raise DataError(f"{source}: unsupported checkpoint version {version}")
        pos += struct.calcsize("<HQ")
        header = json.loads(data[pos:pos + n].decode("utf-8"))
        body = memoryview(data)[pos + n:]
        params = {}
        for t in header["tensors"]:
            chunk = body[t["offset"]:t["offset"] + t["nbytes"]]
            params[t["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(t["shape"]).astype(np.float64)
        vocab = Vocabulary.loads(header["vocab"], source) if header.get("vocab") else None
        return cls(ModelConfig.from_dict(header["config"]), params, header["metadata"], vocab)

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        return cls.from_bytes(Path(path).read_bytes(), str(path))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
