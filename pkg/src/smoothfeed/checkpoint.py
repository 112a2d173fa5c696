"""Portable binary checkpoints.

Layout: magic "GRFC", format version (u32 LE), length-prefixed model kind,
length-prefixed hyperparameter JSON, tensor count, then per tensor a
length-prefixed UTF-8 name, rank, dims (u32 LE each) and the float32 LE
payload; a CRC-32 of everything preceding closes the file. Write-read is
bit-exact: the hyperparameter block is kept as raw text so re-encoding a
loaded checkpoint reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"GRFC"
FORMAT_VERSION = 1
KINDS = ("gate", "rank")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class KindError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    kind: str
    hyper_text: str  # JSON; kept verbatim for bit-exact round trips
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"unknown model kind {self.kind!r}")

    @property
    def hyper(self) -> dict:
        return json.loads(self.hyper_text)

    @property
    def step(self) -> int:
        return int(self.hyper.get("step", 0))

    @classmethod
    def build(cls, kind: str, hyper: dict, tensors: dict[str, np.ndarray]) -> "Checkpoint":
        return cls(kind=kind, hyper_text=json.dumps(hyper, sort_keys=True),
                   tensors={name: np.ascontiguousarray(t, dtype=np.float32)
                            for name, t in tensors.items()})


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def encode_checkpoint(ck: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(ck.kind),
             _pack_str(ck.hyper_text), struct.pack("<I", len(ck.tensors))]
    for name, tensor in ck.tensors.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.at:self.at + n]
        self.at += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < 12:
        raise CheckpointError("file too small to be a checkpoint")
    body, crc_raw = data[:-4], data[-4:]
    expected = struct.unpack("<I", crc_raw)[0]
    actual = zlib.crc32(body)
    if actual != expected:
        raise ChecksumError(f"CRC mismatch: stored {expected:#010x}, computed {actual:#010x}")
    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise BadMagicError("bad magic bytes")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"format version {version} unsupported (reader: {FORMAT_VERSION})")
    kind = r.string()
    if kind not in KINDS:
        raise KindError(f"unknown model kind {kind!r}")
    hyper_text = r.string()
    n_tensors = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank)) if rank else ()
        count = int(np.prod(dims)) if dims else 1
        payload = r.take(4 * count)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.at != len(body):
        raise CheckpointError(f"{len(body) - r.at} trailing bytes after tensor table")
    return Checkpoint(kind=kind, hyper_text=hyper_text, tensors=tensors)


def save_checkpoint(ck: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(ck))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


# -- model adapters -----------------------------------------------------------

def checkpoint_of_gate(clf) -> Checkpoint:
    from dataclasses import asdict
    from .features import schema_to_dict
    hyper = {"config": asdict(clf.config), "schema": schema_to_dict(clf.schema),
             "seed": clf.seed, "step": clf.global_step_}
    return Checkpoint.build("gate", hyper, clf.state_tensors())


def gate_from_checkpoint(ck: Checkpoint):
    from .features import schema_from_dict
    from .gate import GateClassifier, GateConfig
    if ck.kind != "gate":
        raise KindError(f"expected a gate checkpoint, got {ck.kind!r}")
    hyper = ck.hyper
    clf = GateClassifier(config=GateConfig(**hyper["config"]),
                         schema=schema_from_dict(hyper["schema"]),
                         seed=int(hyper.get("seed", 0)))
    clf.load_state_tensors(ck.tensors, step=ck.step)
    return clf


def checkpoint_of_ranker(ranker) -> Checkpoint:
    from dataclasses import asdict
    hyper = {"config": asdict(ranker.config), "seed": ranker.seed,
             "step": ranker.global_step_}
    return Checkpoint.build("rank", hyper, ranker.state_tensors())


def ranker_from_checkpoint(ck: Checkpoint):
    from .rank import MultiTaskRanker, RankConfig
    if ck.kind != "rank":
        raise KindError(f"expected a rank checkpoint, got {ck.kind!r}")
    hyper = ck.hyper
    cfg_dict = dict(hyper["config"])
    if "score_weights" in cfg_dict:
        cfg_dict["score_weights"] = tuple(cfg_dict["score_weights"])
    ranker = MultiTaskRanker(config=RankConfig(**cfg_dict),
                             seed=int(hyper.get("seed", 0)))
    ranker.load_state_tensors(ck.tensors, step=ck.step)
    return ranker
