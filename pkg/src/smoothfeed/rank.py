"""The stage-two multi-task ranker over cached candidates.

The target row embeds into a query vector; two multi-head target-attention
stacks summarize the watched history and the remaining upcoming list against
that query. The fused vector feeds a multi-gate mixture-of-experts with one
sigmoid tower per engagement rate, and candidates are ordered by a weighted
sum of the four predictions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import nn
from .features import (CONTEXT_DIM, FeatureSchema, RankFeatureBundle,
                       TARGET_ROW_DIM, UPCOMING_ROW_DIM, WATCHED_ROW_DIM)
from .metrics import auc
from .types import CachedVideo, DeviceState, PxtrVector, SessionState, VideoMeta
from .validation import ParamsMixin, check_is_fitted

TASKS = ("evr", "lvr", "svr", "fpr")


@dataclass(frozen=True)
class RankConfig:
    n_heads: int = 4
    d_head: int = 64
    n_experts: int = 8
    n_tasks: int = 4
    d_target: int = 64
    d_seq: int = 32
    d_attn_out: int = 64
    expert_hidden: int = 128
    tower_hidden: int = 64
    lr: float = 4e-5
    batch_size: int = 256  # production-scale runs use 4096
    # svr counts against a candidate: watching under three seconds is a
    # bounce, not engagement.
    score_weights: tuple[float, float, float, float] = (1.0, 1.0, -1.0, 1.0)
    checkpoint_interval_steps: int = 1000
    head_start_s: float = 5.0

    def __post_init__(self):
        if self.n_tasks != len(TASKS):
            raise ValueError(f"n_tasks must be {len(TASKS)}")
        if self.n_heads < 1 or self.d_head < 1:
            raise ValueError("attention dims must be positive")


@dataclass
class RankBatch:
    target: np.ndarray         # (B, TARGET_ROW_DIM)
    watched: np.ndarray        # (B, L_R, WATCHED_ROW_DIM)
    watched_mask: np.ndarray   # (B, L_R)
    upcoming: np.ndarray       # (B, L_U, UPCOMING_ROW_DIM)
    upcoming_mask: np.ndarray  # (B, L_U)
    context: np.ndarray        # (B, CONTEXT_DIM)

    def __len__(self):
        return self.target.shape[0]

    def take(self, idx: np.ndarray) -> "RankBatch":
        return RankBatch(self.target[idx], self.watched[idx],
                         self.watched_mask[idx], self.upcoming[idx],
                         self.upcoming_mask[idx], self.context[idx])


def pack_rank_batch(bundles: Sequence[RankFeatureBundle]) -> RankBatch:
    return RankBatch(
        target=np.stack([b.target for b in bundles]),
        watched=np.stack([b.watched_seq for b in bundles]),
        watched_mask=np.stack([b.watched_mask for b in bundles]),
        upcoming=np.stack([b.upcoming_seq for b in bundles]),
        upcoming_mask=np.stack([b.upcoming_mask for b in bundles]),
        context=np.stack([b.context for b in bundles]),
    )


class _RankNet:
    def __init__(self, cfg: RankConfig, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x4A4E)))
        self.cfg = cfg
        self.target_fc = nn.Dense("rank.target_fc", TARGET_ROW_DIM, cfg.d_target, rng)
        self.watched_fc = nn.Dense("rank.watched_fc", WATCHED_ROW_DIM, cfg.d_seq, rng)
        self.upcoming_fc = nn.Dense("rank.upcoming_fc", UPCOMING_ROW_DIM, cfg.d_seq, rng)
        self.watched_attn = nn.MultiHeadTargetAttention(
            "rank.watched_attn", cfg.d_target, cfg.d_seq, cfg.n_heads,
            cfg.d_head, cfg.d_attn_out, rng)
        self.upcoming_attn = nn.MultiHeadTargetAttention(
            "rank.upcoming_attn", cfg.d_target, cfg.d_seq, cfg.n_heads,
            cfg.d_head, cfg.d_attn_out, rng)
        fused = cfg.d_target + 2 * cfg.d_attn_out + CONTEXT_DIM
        self.moe = nn.MoeHead("rank.moe", fused, cfg.n_experts, cfg.n_tasks,
                              cfg.expert_hidden, cfg.tower_hidden, rng)
        self._relu = nn.Relu()

    def ops(self):
        out = [self.target_fc, self.watched_fc, self.upcoming_fc]
        out.extend(self.watched_attn.ops())
        out.extend(self.upcoming_attn.ops())
        out.extend(self.moe.ops())
        return out

    def parameters(self) -> list[nn.Parameter]:
        return nn.collect_params(self.ops())

    def logits(self, batch: RankBatch) -> list[nn.Node]:
        h = self._relu(self.target_fc(nn.constant(batch.target)))
        watched = self._relu(self.watched_fc(nn.constant(batch.watched)))
        upcoming = self._relu(self.upcoming_fc(nn.constant(batch.upcoming)))
        o_watched = self.watched_attn(h, watched, batch.watched_mask)
        o_upcoming = self.upcoming_attn(h, upcoming, batch.upcoming_mask)
        fused = nn.Concat()(h, o_watched, o_upcoming, nn.constant(batch.context))
        return self.moe(fused)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def rank_score(pxtrs, weights) -> float | np.ndarray:
    """Weighted sum of the four predicted rates."""
    if isinstance(pxtrs, PxtrVector):
        pxtrs = pxtrs.as_tuple()
    arr = np.asarray(pxtrs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return arr @ w if arr.ndim > 1 else float(arr @ w)


class MultiTaskRanker(ParamsMixin):
    """Four-headed engagement predictor with fit/partial_fit/predict."""

    _param_names = ("config", "seed")

    def __init__(self, config: RankConfig | None = None, seed: int = 0):
        self.config = config if config is not None else RankConfig()
        self.seed = seed
        self.net_: _RankNet | None = None
        self.params_: list[nn.Parameter] | None = None
        self.global_step_: int = 0
        self.skipped_samples_: int = 0

    def build(self) -> "MultiTaskRanker":
        self.net_ = _RankNet(self.config, self.seed)
        self.params_ = self.net_.parameters()
        self.global_step_ = 0
        self.skipped_samples_ = 0
        return self

    @property
    def param_count(self) -> int:
        check_is_fitted(self, "params_")
        return sum(p.size for p in self.params_)

    def state_tensors(self) -> dict[str, np.ndarray]:
        check_is_fitted(self, "params_")
        return {p.name: p.value for p in self.params_}

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step: int = 0) -> None:
        if self.net_ is None:
            self.build()
        own = {p.name: p for p in self.params_}
        if set(own) != set(tensors):
            missing = set(own) ^ set(tensors)
            raise ValueError(f"tensor names do not match model: {sorted(missing)[:5]}")
        for name, arr in tensors.items():
            p = own[name]
            if p.value.shape != arr.shape:
                raise ValueError(f"tensor {name} shape {arr.shape} != {p.value.shape}")
            p.value[...] = arr
            p.step = step
        self.global_step_ = step

    # -- training ------------------------------------------------------------

    def partial_fit(self, X: Sequence[RankFeatureBundle] | RankBatch, Y) -> "MultiTaskRanker":
        """One optimizer step on a batch; loss is the unweighted sum of the
        four per-task binary cross-entropies."""
        if self.net_ is None:
            self.build()
        batch = X if isinstance(X, RankBatch) else pack_rank_batch(X)
        Y = np.asarray(Y, dtype=np.float32)
        if Y.shape != (len(batch), len(TASKS)):
            raise ValueError(f"labels must be (n, {len(TASKS)}), got {Y.shape}")
        logits = self.net_.logits(batch)
        bce = nn.WeightedSigmoidBCE()
        loss = nn.AddN()(*[bce(logits[i], Y[:, i]) for i in range(len(TASKS))])
        nn.backward(loss)
        nn.adam_step(self.params_, self.config.lr)
        self.global_step_ += 1
        return self

    def fit_stream(self, samples: Iterable[tuple[RankFeatureBundle, Mapping[str, int] | None]],
                   on_checkpoint: Callable[[int, "MultiTaskRanker"], None] | None = None
                   ) -> "MultiTaskRanker":
        """Single pass over time-ordered samples.

        Samples missing any task label are skipped (counted in
        `skipped_samples_`). Every `checkpoint_interval_steps` optimizer
        steps, `on_checkpoint(step, self)` fires so the caller can snapshot.
        """
        if self.net_ is None:
            self.build()
        cfg = self.config
        buf_x: list[RankFeatureBundle] = []
        buf_y: list[list[float]] = []

        def flush():
            if not buf_x:
                return
            self.partial_fit(buf_x, np.array(buf_y, dtype=np.float32))
            buf_x.clear()
            buf_y.clear()
            if (on_checkpoint is not None
                    and self.global_step_ % cfg.checkpoint_interval_steps == 0):
                on_checkpoint(self.global_step_, self)

        for bundle, labels in samples:
            if labels is None or any(t not in labels for t in TASKS):
                self.skipped_samples_ += 1
                continue
            buf_x.append(bundle)
            buf_y.append([float(labels[t]) for t in TASKS])
            if len(buf_x) == cfg.batch_size:
                flush()
        flush()
        return self

    def fit(self, X: Sequence[RankFeatureBundle], Y) -> "MultiTaskRanker":
        """Stream-fit over X in the given order (the offline convenience)."""
        Y = np.asarray(Y)
        stream = ((x, dict(zip(TASKS, row))) for x, row in zip(X, Y))
        return self.fit_stream(stream)

    # -- inference -----------------------------------------------------------

    def predict_pxtrs(self, X: Sequence[RankFeatureBundle] | RankBatch) -> np.ndarray:
        check_is_fitted(self, "net_")
        batch = X if isinstance(X, RankBatch) else pack_rank_batch(X)
        logits = self.net_.logits(batch)
        out = np.stack([_sigmoid(l.value) for l in logits], axis=1)
        nn.assert_finite(out, "pxtrs")
        return out

    def predict_one(self, bundle: RankFeatureBundle) -> PxtrVector:
        row = self.predict_pxtrs([bundle])[0]
        return PxtrVector(*(float(v) for v in row))

    def score_candidates(self, X: Sequence[RankFeatureBundle]) -> np.ndarray:
        return rank_score(self.predict_pxtrs(X), self.config.score_weights)

    def task_aucs(self, X: Sequence[RankFeatureBundle] | RankBatch, Y) -> dict[str, float]:
        Y = np.asarray(Y)
        preds = self.predict_pxtrs(X)
        return {t: auc(preds[:, i], Y[:, i] > 0.5) for i, t in enumerate(TASKS)}


def is_playable(candidate: CachedVideo, cfg: RankConfig) -> bool:
    """Fully cached, or enough head start buffered to begin playing."""
    return (candidate.cached_ratio >= 1.0 - 1e-9
            or candidate.cached_duration_s >= cfg.head_start_s)


def order_candidates(scores: np.ndarray,
                     candidates: Sequence[CachedVideo]) -> CachedVideo:
    """Total-order argmax: score desc, then most-recent cached_at, then
    lowest video id, so the pick never depends on input ordering."""
    ranked = sorted(zip(np.asarray(scores, dtype=np.float64), candidates),
                    key=lambda t: (-t[0], -t[1].cached_at, t[1].meta.id))
    return ranked[0][1]


def select_best(candidates: Sequence[CachedVideo], session: SessionState,
                upcoming_rest: list[VideoMeta], device: DeviceState,
                ranker: MultiTaskRanker, schema: FeatureSchema) -> CachedVideo | None:
    """Argmax of the weighted model score over playable candidates.

    Returns None when nothing is playable (caller falls through to the
    original video).
    """
    from .features import build_rank_features

    eligible = [c for c in candidates if is_playable(c, ranker.config)]
    if not eligible:
        return None
    bundles = [build_rank_features(session, c, upcoming_rest, device, schema)
               for c in eligible]
    scores = ranker.score_candidates(bundles)
    return order_candidates(scores, eligible)
