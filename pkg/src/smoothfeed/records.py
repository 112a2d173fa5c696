"""Line-delimited sample logs and the train/valid/test split.

One JSON object per line; the first line is a schema header. Floats are
rounded to six significant digits on write, which makes a write-read-write
cycle byte-stable after the first pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .features import (CHOPPY_ROW_DIM, DYNAMIC_ROW_DIM, FeatureSchema,
                       GateFeatureVector, RankFeatureBundle)

SCHEMA_NAME = "smoothfeed-samples"
SCHEMA_VERSION = 1


class RecordFormatError(ValueError):
    pass


@dataclass
class GateSample:
    features: GateFeatureVector
    label: int
    oracle_logit: float  # simulator ground truth; never a model input
    user_id: int
    step: int


@dataclass
class RankSample:
    bundle: RankFeatureBundle
    labels: dict[str, int] | None
    server_pxtrs: tuple[float, float, float, float]
    user_id: int
    step: int


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    return obj


def _dump(obj) -> str:
    return json.dumps(_round_floats(obj), sort_keys=True, separators=(",", ":"))


def _header(kind: str) -> str:
    return _dump({"schema": SCHEMA_NAME, "version": SCHEMA_VERSION, "kind": kind})


def _check_header(line: str, kind: str) -> None:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"bad header line: {exc}") from exc
    if head.get("schema") != SCHEMA_NAME:
        raise RecordFormatError(f"unknown schema {head.get('schema')!r}")
    if head.get("version") != SCHEMA_VERSION:
        raise RecordFormatError(
            f"schema version {head.get('version')} != reader {SCHEMA_VERSION}")
    if head.get("kind") != kind:
        raise RecordFormatError(f"expected {kind!r} samples, file has {head.get('kind')!r}")


def write_gate_samples(path, samples: Iterable[GateSample]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header("gate") + "\n")
        for s in samples:
            fv = s.features
            fh.write(_dump({
                "label": int(s.label),
                "z": s.oracle_logit,
                "codes": fv.static_codes.tolist(),
                "prior": fv.prior_codes.tolist(),
                "dyn": fv.dynamic_seq.tolist(),
                "dyn_mask": fv.dynamic_mask.tolist(),
                "ch": fv.choppy_seq.tolist(),
                "ch_mask": fv.choppy_mask.tolist(),
                "user": s.user_id,
                "step": s.step,
            }) + "\n")
            n += 1
    return n


def read_gate_samples(path) -> list[GateSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RecordFormatError("empty sample file")
    _check_header(lines[0], "gate")
    for i, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"line {i}: {exc}") from exc
        fv = GateFeatureVector(
            static_codes=np.array(rec["codes"], dtype=np.int64),
            prior_codes=np.array(rec["prior"], dtype=np.int64),
            dynamic_seq=np.array(rec["dyn"], dtype=np.float32).reshape(-1, DYNAMIC_ROW_DIM),
            dynamic_mask=np.array(rec["dyn_mask"], dtype=np.float32),
            choppy_seq=np.array(rec["ch"], dtype=np.float32).reshape(-1, CHOPPY_ROW_DIM),
            choppy_mask=np.array(rec["ch_mask"], dtype=np.float32),
        )
        out.append(GateSample(features=fv, label=int(rec["label"]),
                              oracle_logit=float(rec["z"]),
                              user_id=int(rec["user"]), step=int(rec["step"])))
    return out


def write_rank_samples(path, samples: Iterable[RankSample]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header("rank") + "\n")
        for s in samples:
            b = s.bundle
            fh.write(_dump({
                "labels": s.labels,
                "pxtrs": list(s.server_pxtrs),
                "target": b.target.tolist(),
                "watched": b.watched_seq.tolist(),
                "watched_mask": b.watched_mask.tolist(),
                "upcoming": b.upcoming_seq.tolist(),
                "upcoming_mask": b.upcoming_mask.tolist(),
                "context": b.context.tolist(),
                "user": s.user_id,
                "step": s.step,
            }) + "\n")
            n += 1
    return n


def read_rank_samples(path) -> list[RankSample]:
    from .features import UPCOMING_ROW_DIM, WATCHED_ROW_DIM
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RecordFormatError("empty sample file")
    _check_header(lines[0], "rank")
    for i, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"line {i}: {exc}") from exc
        bundle = RankFeatureBundle(
            target=np.array(rec["target"], dtype=np.float32),
            watched_seq=np.array(rec["watched"], dtype=np.float32).reshape(-1, WATCHED_ROW_DIM),
            watched_mask=np.array(rec["watched_mask"], dtype=np.float32),
            upcoming_seq=np.array(rec["upcoming"], dtype=np.float32).reshape(-1, UPCOMING_ROW_DIM),
            upcoming_mask=np.array(rec["upcoming_mask"], dtype=np.float32),
            context=np.array(rec["context"], dtype=np.float32),
        )
        labels = rec["labels"]
        if labels is not None:
            labels = {k: int(v) for k, v in labels.items()}
        out.append(RankSample(bundle=bundle, labels=labels,
                              server_pxtrs=tuple(rec["pxtrs"]),
                              user_id=int(rec["user"]), step=int(rec["step"])))
    return out


def split_dataset(records: Sequence, ratios=(0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[list, list, list]:
    """Deterministic shuffled partition; sizes within one of exact shares."""
    if not records:
        raise ValueError("cannot split an empty dataset")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n = len(records)
    order = np.random.default_rng(np.random.SeedSequence((seed, 0x5917))).permutation(n)
    cut1 = round(n * ratios[0])
    cut2 = round(n * (ratios[0] + ratios[1]))
    idx_train, idx_valid, idx_test = order[:cut1], order[cut1:cut2], order[cut2:]
    return ([records[i] for i in idx_train],
            [records[i] for i in idx_valid],
            [records[i] for i in idx_test])
