"""Feature assembly: raw session/device/video state in, fixed-shape model
inputs out.

Numeric features are bucketized into equal-distance bins; inside the models
each bucket index is re-normalized to [0, 1] and soft-discretized against a
learned meta-embedding table (see `soft_discretize_embed` for the reference
math). Sequences are right-padded to fixed capacities with validity masks
marking the real prefix.

Everything here is a pure function of its inputs; the normalization bounds
come from config, never from data scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import CachedVideo, DeviceState, SessionState, VideoMeta


@dataclass(frozen=True)
class NumericField:
    name: str
    lo: float
    hi: float
    n_bins: int = 32

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"field {self.name}: lo must be < hi")
        if self.n_bins < 1:
            raise ValueError(f"field {self.name}: n_bins must be >= 1")


# Static numeric fields the gate model consumes, in schema order.
GATE_NUMERIC_FIELDS = (
    NumericField("duration_s", 0.0, 120.0),
    NumericField("device_score", 0.0, 1.0),
    NumericField("bitrate_kbps", 0.0, 6000.0),
    NumericField("network_speed_kbps", 0.0, 8000.0),
    NumericField("cpu_load", 0.0, 1.0),
    NumericField("cached_ratio", 0.0, 1.0),
    NumericField("cached_duration_s", 0.0, 120.0),
)

DYNAMIC_ROW_DIM = 3   # (network speed, cached ratio, cpu load), normalized
CHOPPY_ROW_DIM = 5    # duration, bitrate, tier, cached ratio, speed
WATCHED_ROW_DIM = 12  # 4 pxtrs, duration, bitrate, watch fraction, 5 flags
UPCOMING_ROW_DIM = 7  # 4 pxtrs, duration, bitrate, tier
TARGET_ROW_DIM = 9    # 4 pxtrs, duration, bitrate, tier, ratio, cached dur
CONTEXT_DIM = 4       # device score, cpu load, speed, online flag


@dataclass(frozen=True)
class FeatureSchema:
    """Bounds, bins, and sequence capacities for both models."""

    numeric_fields: tuple[NumericField, ...] = GATE_NUMERIC_FIELDS
    size_tier_vocab: int = 3
    watched_cap: int = 20      # L_R
    dynamic_cap: int = 20      # L_D
    choppy_cap: int = 10       # L_C
    upcoming_cap: int = 10     # L_U
    embed_dim: int = 16
    autodis_k: int = 16
    autodis_tau: float = 1.0
    # Prior-bias tier thresholds (lower, upper); values below lower -> 0,
    # below upper -> 1, else 2.
    bitrate_tier_bounds: tuple[float, float] = (800.0, 2500.0)
    duration_tier_bounds: tuple[float, float] = (15.0, 45.0)
    speed_norm_kbps: float = 8000.0
    bitrate_norm_kbps: float = 6000.0
    duration_norm_s: float = 120.0

    @property
    def n_prior_fields(self) -> int:
        return 3  # size tier, bitrate tier, duration tier

    def numeric_index(self, name: str) -> int:
        for i, f in enumerate(self.numeric_fields):
            if f.name == name:
                return i
        raise KeyError(name)


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "numeric_fields": [[f.name, f.lo, f.hi, f.n_bins]
                           for f in schema.numeric_fields],
        "size_tier_vocab": schema.size_tier_vocab,
        "watched_cap": schema.watched_cap,
        "dynamic_cap": schema.dynamic_cap,
        "choppy_cap": schema.choppy_cap,
        "upcoming_cap": schema.upcoming_cap,
        "embed_dim": schema.embed_dim,
        "autodis_k": schema.autodis_k,
        "autodis_tau": schema.autodis_tau,
        "bitrate_tier_bounds": list(schema.bitrate_tier_bounds),
        "duration_tier_bounds": list(schema.duration_tier_bounds),
        "speed_norm_kbps": schema.speed_norm_kbps,
        "bitrate_norm_kbps": schema.bitrate_norm_kbps,
        "duration_norm_s": schema.duration_norm_s,
    }


def schema_from_dict(d: dict) -> FeatureSchema:
    d = dict(d)
    d["numeric_fields"] = tuple(
        NumericField(name=f[0], lo=f[1], hi=f[2], n_bins=int(f[3]))
        for f in d["numeric_fields"])
    d["bitrate_tier_bounds"] = tuple(d["bitrate_tier_bounds"])
    d["duration_tier_bounds"] = tuple(d["duration_tier_bounds"])
    return FeatureSchema(**d)


def bucketize(value: float, lo: float, hi: float, n_bins: int) -> int:
    """Equal-distance binning with clamping to [0, n_bins)."""
    if not math.isfinite(value):
        raise ValueError(f"cannot bucketize non-finite value {value!r}")
    if not lo < hi:
        raise ValueError("lo must be < hi")
    width = (hi - lo) / n_bins
    b = int(math.floor((value - lo) / width))
    return min(max(b, 0), n_bins - 1)


def size_tier(size_bytes: int, thresholds: tuple[float, float]) -> int:
    """0 below t_small, 1 in [t_small, t_large), 2 at or above t_large."""
    t_small, t_large = thresholds
    if not t_small < t_large:
        raise ValueError("t_small must be < t_large")
    if size_bytes < t_small:
        return 0
    if size_bytes < t_large:
        return 1
    return 2


def value_tier(value: float, bounds: tuple[float, float]) -> int:
    """Same three-level mechanism used for the prior-bias fields."""
    lower, upper = bounds
    if value < lower:
        return 0
    if value < upper:
        return 1
    return 2


def soft_discretize_embed(value: float, meta: np.ndarray, score_w: np.ndarray,
                          score_b: np.ndarray, tau: float) -> np.ndarray:
    """Reference math for the soft-discretization embedding of one scalar.

    An affine map scores `value` against K meta-embeddings; the tempered
    softmax of those scores mixes the meta rows, so the result is a convex
    combination of them. The batched, differentiable twin of this lives in
    `nn.AutoDisEmbed`; this function pins the semantics.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    meta = np.asarray(meta, dtype=np.float64)
    logits = (value * np.asarray(score_w, dtype=np.float64)
              + np.asarray(score_b, dtype=np.float64)) / tau
    z = logits - logits.max()
    weights = np.exp(z)
    weights /= weights.sum()
    return weights @ meta


def normalize(value: float, lo: float, hi: float) -> float:
    return float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))


@dataclass
class GateFeatureVector:
    """Assembled gate-model input. `static_codes` follows the schema's
    numeric field order and ends with the size-tier category."""

    static_codes: np.ndarray        # (n_numeric + 1,) int64
    prior_codes: np.ndarray         # (3,) int64
    dynamic_seq: np.ndarray         # (L_D, 3) float32
    dynamic_mask: np.ndarray        # (L_D,) float32
    choppy_seq: np.ndarray          # (L_C, 5) float32
    choppy_mask: np.ndarray         # (L_C,) float32


@dataclass
class RankFeatureBundle:
    target: np.ndarray              # (TARGET_ROW_DIM,) float32
    watched_seq: np.ndarray         # (L_R, WATCHED_ROW_DIM) float32
    watched_mask: np.ndarray        # (L_R,) float32
    upcoming_seq: np.ndarray        # (L_U, UPCOMING_ROW_DIM) float32
    upcoming_mask: np.ndarray       # (L_U,) float32
    context: np.ndarray             # (CONTEXT_DIM,) float32


def _pad_rows(rows: list[list[float]], cap: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    seq = np.zeros((cap, dim), dtype=np.float32)
    mask = np.zeros(cap, dtype=np.float32)
    take = rows[-cap:]
    for i, row in enumerate(take):
        seq[i] = row
        mask[i] = 1.0
    return seq, mask


def build_gate_features(session: SessionState, device: DeviceState,
                        target: VideoMeta, cached_ratio: float,
                        cached_duration_s: float,
                        schema: FeatureSchema) -> GateFeatureVector:
    """Static codes + the two feature sequences for one upcoming video."""
    raw = {
        "duration_s": target.duration_s,
        "device_score": device.device_score,
        "bitrate_kbps": target.bitrate_kbps,
        "network_speed_kbps": device.network_speed_kbps,
        "cpu_load": device.cpu_load,
        "cached_ratio": cached_ratio,
        "cached_duration_s": cached_duration_s,
    }
    codes = []
    for f in schema.numeric_fields:
        codes.append(bucketize(raw[f.name], f.lo, f.hi, f.n_bins))
    codes.append(int(target.size_tier))
    prior = np.array([
        int(target.size_tier),
        value_tier(target.bitrate_kbps, schema.bitrate_tier_bounds),
        value_tier(target.duration_s, schema.duration_tier_bounds),
    ], dtype=np.int64)

    dyn_rows = [[normalize(s, 0.0, schema.speed_norm_kbps), r, l]
                for (s, r, l) in session.dynamic_trace]
    dyn, dyn_mask = _pad_rows(dyn_rows, schema.dynamic_cap, DYNAMIC_ROW_DIM)

    ch_rows = [[normalize(c.duration_s, 0.0, schema.duration_norm_s),
                normalize(c.bitrate_kbps, 0.0, schema.bitrate_norm_kbps),
                c.size_tier / 2.0,
                c.cached_ratio,
                normalize(c.network_speed_kbps, 0.0, schema.speed_norm_kbps)]
               for c in session.choppy_history]
    ch, ch_mask = _pad_rows(ch_rows, schema.choppy_cap, CHOPPY_ROW_DIM)

    return GateFeatureVector(
        static_codes=np.array(codes, dtype=np.int64),
        prior_codes=prior,
        dynamic_seq=dyn, dynamic_mask=dyn_mask,
        choppy_seq=ch, choppy_mask=ch_mask,
    )


def _video_target_row(meta: VideoMeta, cached_ratio: float,
                      cached_duration_s: float, schema: FeatureSchema) -> np.ndarray:
    return np.array(
        list(meta.server_pxtrs) + [
            normalize(meta.duration_s, 0.0, schema.duration_norm_s),
            normalize(meta.bitrate_kbps, 0.0, schema.bitrate_norm_kbps),
            meta.size_tier / 2.0,
            cached_ratio,
            normalize(cached_duration_s, 0.0, schema.duration_norm_s),
        ], dtype=np.float32)


def build_rank_features(session: SessionState, candidate: CachedVideo,
                        upcoming_rest: list[VideoMeta], device: DeviceState,
                        schema: FeatureSchema) -> RankFeatureBundle:
    """Target + watched-history + upcoming-context bundle for one cached
    candidate. The candidate itself never appears in the watched rows."""
    target = _video_target_row(candidate.meta, candidate.cached_ratio,
                               candidate.cached_duration_s, schema)

    watched_rows = []
    for rec in session.watched:
        if rec.video.id == candidate.meta.id:
            continue
        frac = rec.watch_time_s / rec.video.duration_s if rec.video.duration_s > 0 else 0.0
        watched_rows.append(
            list(rec.pxtrs) + [
                normalize(rec.video.duration_s, 0.0, schema.duration_norm_s),
                normalize(rec.video.bitrate_kbps, 0.0, schema.bitrate_norm_kbps),
                float(np.clip(frac, 0.0, 1.0)),
                float(rec.effective), float(rec.long), float(rec.short),
                float(rec.finished), float(rec.choppy),
            ])
    watched, watched_mask = _pad_rows(watched_rows, schema.watched_cap, WATCHED_ROW_DIM)

    up_rows = [list(v.server_pxtrs) + [
        normalize(v.duration_s, 0.0, schema.duration_norm_s),
        normalize(v.bitrate_kbps, 0.0, schema.bitrate_norm_kbps),
        v.size_tier / 2.0,
    ] for v in upcoming_rest[:schema.upcoming_cap]]
    upcoming, upcoming_mask = _pad_rows(up_rows, schema.upcoming_cap, UPCOMING_ROW_DIM)

    context = np.array([
        device.device_score,
        device.cpu_load,
        normalize(device.network_speed_kbps, 0.0, schema.speed_norm_kbps),
        1.0 if device.is_online else 0.0,
    ], dtype=np.float32)

    return RankFeatureBundle(target=target, watched_seq=watched,
                             watched_mask=watched_mask, upcoming_seq=upcoming,
                             upcoming_mask=upcoming_mask, context=context)
