"""Binary checkpoints: parameters plus everything needed to trust them.

Layout, all integers little-endian u32 unless noted:

    magic        8 bytes  b"XQMCKPT\\0"
    version      u32      currently 1
    config_len   u32      followed by the config's canonical text, UTF-8
    vocab_hash   32 bytes sha256 of the vocabulary manifest text
    vocab_size, embed_dim, hidden   u32 each
    tensor_count u32
    per tensor:  name_len u32, name UTF-8, ndim u8, dims u32 each,
                 data as little-endian float32 in C order
    checksum     32 bytes sha256 of every preceding byte

Tensors appear in the network's declared layout order.  The checksum is
verified before anything is parsed, the vocabulary hash before anything
is trusted: a model keyed to a different move list must not load.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Optional

import numpy as np

from ..errors import ChecksumMismatch, ParseError, VocabularyMismatch
from ..movespace import MoveVocabulary, enumerate_vocabulary
from .config import StructureConfig
from .network import ModelParameters, tensor_layout

MAGIC = b"XQMCKPT\0"
VERSION = 1
_HASH_BYTES = 32


def vocabulary_digest(vocabulary: MoveVocabulary) -> bytes:
    return hashlib.sha256(vocabulary.manifest_text().encode()).digest()


def save(
    params: ModelParameters,
    config: StructureConfig,
    vocabulary: Optional[MoveVocabulary] = None,
) -> bytes:
    vocab = vocabulary if vocabulary is not None else enumerate_vocabulary()
    if params.vocab_size != len(vocab):
        # refuse to write a blob that could never load back
        raise VocabularyMismatch(
            f"parameters cover {params.vocab_size} classes, vocabulary has {len(vocab)}"
        )
    parts = [MAGIC, struct.pack("<I", VERSION)]
    text = config.canonical_text().encode()
    parts.append(struct.pack("<I", len(text)))
    parts.append(text)
    parts.append(vocabulary_digest(vocab))
    parts.append(struct.pack("<III", params.vocab_size, params.embed_dim, params.hidden))
    parts.append(struct.pack("<I", len(params.tensors)))
    for name, tensor in params.tensors.items():
        encoded = name.encode()
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"checkpoint truncated at byte {self.pos}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def load(
    data: bytes, vocabulary: Optional[MoveVocabulary] = None
) -> tuple[ModelParameters, StructureConfig]:
    """Parse checkpoint bytes back into parameters and their config.

    Order of defense: checksum, then magic/version, then vocabulary,
    then shapes against the layout the config implies.
    """
    if len(data) < len(MAGIC) + _HASH_BYTES:
        raise ParseError("checkpoint too short to contain a header")
    body, checksum = data[:-_HASH_BYTES], data[-_HASH_BYTES:]
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumMismatch("checkpoint checksum does not match its contents")

    reader = _Reader(body)
    if reader.take(len(MAGIC)) != MAGIC:
        raise ParseError("not a model checkpoint (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    config = StructureConfig.from_text(reader.take(reader.u32()).decode())

    vocab = vocabulary if vocabulary is not None else enumerate_vocabulary()
    stored_digest = reader.take(_HASH_BYTES)
    if stored_digest != vocabulary_digest(vocab):
        raise VocabularyMismatch("checkpoint was written against a different vocabulary")

    vocab_size, embed_dim, hidden = struct.unpack("<III", reader.take(12))
    if vocab_size != len(vocab):
        raise VocabularyMismatch(
            f"checkpoint vocabulary size {vocab_size} != {len(vocab)}"
        )
    expected = tensor_layout(config, vocab_size, embed_dim, hidden)
    count = reader.u32()
    if count != len(expected):
        raise ParseError(f"expected {len(expected)} tensors, found {count}")

    tensors: dict[str, np.ndarray] = {}
    for want_name, want_shape in expected:
        name = reader.take(reader.u32()).decode()
        ndim = reader.u8()
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        if name != want_name or shape != want_shape:
            raise ParseError(
                f"tensor {name} {shape} does not match declared layout "
                f"{want_name} {want_shape}"
            )
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = reader.take(4 * size)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if reader.pos != len(body):
        raise ParseError(f"{len(body) - reader.pos} trailing bytes after tensors")
    return ModelParameters(vocab_size, embed_dim, hidden, tensors), config
