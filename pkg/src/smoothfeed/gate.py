"""The stage-one choppiness classifier.

Per-field soft-discretized embeddings feed three parallel mask blocks and a
two-level target attention (first over the device/network trace, then over
the choppy-history list, conditioned on the first level's summary). The
concatenation of mask-block outputs, both attention contexts, and the
prior-bias embeddings goes through a single sigmoid head.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .features import (CHOPPY_ROW_DIM, DYNAMIC_ROW_DIM, FeatureSchema,
                       GateFeatureVector)
from .metrics import auc
from .validation import ParamsMixin, check_binary_labels, check_is_fitted


@dataclass(frozen=True)
class GateConfig:
    n_mask_blocks: int = 3
    mask_hidden: int = 64
    attn_dim: int = 32
    lr_initial: float = 7e-5
    lr_decay: float = 0.98
    lr_hold_steps: int = 50
    lr_decay_interval: int = 50
    class_weight_pos: float = 10.0
    class_weight_neg: float = 1.0
    batch_size: int = 256  # production-scale runs use 2048
    threshold: float = 0.75
    epochs: int = 8

    def __post_init__(self):
        if self.n_mask_blocks < 1:
            raise ValueError("n_mask_blocks must be >= 1")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must be in (0, 1)")
        if self.class_weight_pos <= 0 or self.class_weight_neg <= 0:
            raise ValueError("class weights must be positive")

    def schedule(self) -> nn.LrSchedule:
        return nn.LrSchedule(self.lr_initial, self.lr_hold_steps,
                             self.lr_decay, self.lr_decay_interval)


@dataclass
class GateBatch:
    """Column-packed feature vectors ready for a forward pass."""

    codes: np.ndarray         # (B, n_static+1) int64
    prior: np.ndarray         # (B, 3) int64
    dynamic: np.ndarray       # (B, L_D, 3) float32
    dynamic_mask: np.ndarray  # (B, L_D) float32
    choppy: np.ndarray        # (B, L_C, 5) float32
    choppy_mask: np.ndarray   # (B, L_C) float32

    def __len__(self):
        return self.codes.shape[0]

    def take(self, idx: np.ndarray) -> "GateBatch":
        return GateBatch(self.codes[idx], self.prior[idx], self.dynamic[idx],
                         self.dynamic_mask[idx], self.choppy[idx],
                         self.choppy_mask[idx])


def pack_gate_batch(feature_vectors: Sequence[GateFeatureVector]) -> GateBatch:
    return GateBatch(
        codes=np.stack([fv.static_codes for fv in feature_vectors]),
        prior=np.stack([fv.prior_codes for fv in feature_vectors]),
        dynamic=np.stack([fv.dynamic_seq for fv in feature_vectors]),
        dynamic_mask=np.stack([fv.dynamic_mask for fv in feature_vectors]),
        choppy=np.stack([fv.choppy_seq for fv in feature_vectors]),
        choppy_mask=np.stack([fv.choppy_mask for fv in feature_vectors]),
    )


class _GateNet:
    """Layer graph of the gate model; built once, applied per batch."""

    PRIOR_FIELDS = ("size_tier", "bitrate_tier", "duration_tier")

    def __init__(self, schema: FeatureSchema, cfg: GateConfig, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6A7E)))
        d = schema.embed_dim
        self.schema = schema
        self.cfg = cfg
        self.static_embeds = [
            nn.AutoDisEmbed(f"gate.static.{f.name}", schema.autodis_k, d, rng,
                            temperature=schema.autodis_tau)
            for f in schema.numeric_fields
        ]
        self.tier_embed = nn.Embedding("gate.static.size_tier",
                                       schema.size_tier_vocab, d, rng)
        self.prior_embeds = [nn.Embedding(f"gate.prior.{name}", 3, d, rng)
                             for name in self.PRIOR_FIELDS]
        d_emb = d * (len(schema.numeric_fields) + 1)
        self.blocks = [nn.MaskBlock(f"gate.block{i}", d_emb, cfg.mask_hidden, rng)
                       for i in range(cfg.n_mask_blocks)]
        self.trace_attn = nn.TargetAttention("gate.trace_attn", d_emb,
                                             DYNAMIC_ROW_DIM, cfg.attn_dim, rng)
        self.choppy_attn = nn.TargetAttention("gate.choppy_attn",
                                              d_emb + cfg.attn_dim,
                                              CHOPPY_ROW_DIM, cfg.attn_dim, rng)
        head_in = (cfg.n_mask_blocks * cfg.mask_hidden + 2 * cfg.attn_dim
                   + len(self.PRIOR_FIELDS) * d)
        # Zero head: an untrained model scores exactly 0.5.
        self.head = nn.Dense("gate.head", head_in, 1, rng, zero_init=True)

    def ops(self):
        out = list(self.static_embeds) + [self.tier_embed] + list(self.prior_embeds)
        for b in self.blocks:
            out.extend(b.ops())
        out.extend(self.trace_attn.ops())
        out.extend(self.choppy_attn.ops())
        out.append(self.head)
        return out

    def parameters(self) -> list[nn.Parameter]:
        return nn.collect_params(self.ops())

    def logits(self, batch: GateBatch) -> nn.Node:
        statics = []
        for i, (f, layer) in enumerate(zip(self.schema.numeric_fields,
                                           self.static_embeds)):
            denom = max(f.n_bins - 1, 1)
            values = (batch.codes[:, i] / denom).astype(np.float32)
            statics.append(layer(nn.constant(values)))
        statics.append(self.tier_embed(batch.codes[:, -1]))
        v_emb = nn.Concat()(*statics)

        mask_out = nn.Concat()(*[blk(v_emb) for blk in self.blocks])
        c1 = self.trace_attn(v_emb, nn.constant(batch.dynamic), batch.dynamic_mask)
        c2 = self.choppy_attn(nn.Concat()(v_emb, c1), nn.constant(batch.choppy),
                              batch.choppy_mask)
        prior = nn.Concat()(*[layer(batch.prior[:, i])
                              for i, layer in enumerate(self.prior_embeds)])
        logit = self.head(nn.Concat()(mask_out, c1, c2, prior))
        return nn.SqueezeAxis(1)(logit)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class GateClassifier(ParamsMixin):
    """Binary choppiness predictor with a fit/predict_proba surface.

    `predict_proba` returns the probability of the positive (choppy) class;
    `predict` applies the configured decision threshold.
    """

    _param_names = ("config", "schema", "seed")

    def __init__(self, config: GateConfig | None = None,
                 schema: FeatureSchema | None = None, seed: int = 0):
        self.config = config if config is not None else GateConfig()
        self.schema = schema if schema is not None else FeatureSchema()
        self.seed = seed
        self.net_: _GateNet | None = None
        self.params_: list[nn.Parameter] | None = None
        self.global_step_: int = 0
        self.training_log_: list[dict] = []

    # -- model lifecycle ---------------------------------------------------

    def build(self) -> "GateClassifier":
        """Initialize parameters without training (cold model scores 0.5)."""
        self.net_ = _GateNet(self.schema, self.config, self.seed)
        self.params_ = self.net_.parameters()
        self.global_step_ = 0
        self.training_log_ = []
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

    def fit(self, X: Sequence[GateFeatureVector], y,
            validation: tuple[Sequence[GateFeatureVector], np.ndarray] | None = None
            ) -> "GateClassifier":
        y = check_binary_labels(y)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} feature vectors vs {len(y)} labels")
        if y.all() or not y.any():
            raise ValueError("training data must contain both classes")
        self.build()
        batch = pack_gate_batch(X)
        val = None
        if validation is not None:
            val = (pack_gate_batch(validation[0]),
                   np.asarray(validation[1], dtype=np.float32))

        cfg = self.config
        schedule = cfg.schedule()
        loss_op = nn.WeightedSigmoidBCE(cfg.class_weight_pos, cfg.class_weight_neg)
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0x5EED)))
        n = len(batch)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                sub = batch.take(idx)
                loss = loss_op(self.net_.logits(sub), y[idx])
                nn.backward(loss)
                nn.adam_step(self.params_, schedule.at(self.global_step_))
                self.training_log_.append(
                    {"step": self.global_step_, "loss": float(loss.value)})
                self.global_step_ += 1
            if val is not None:
                scores = self._scores(val[0])
                self.training_log_.append(
                    {"epoch": epoch, "val_auc": auc(scores, val[1] > 0.5)})
        return self

    # -- inference -----------------------------------------------------------

    def _scores(self, batch: GateBatch) -> np.ndarray:
        logits = self.net_.logits(batch).value
        nn.assert_finite(logits, "gate logits")
        return _sigmoid(logits)

    def predict_proba(self, X: Sequence[GateFeatureVector]) -> np.ndarray:
        check_is_fitted(self, "net_")
        return self._scores(pack_gate_batch(X))

    def predict(self, X: Sequence[GateFeatureVector]) -> np.ndarray:
        return self.predict_proba(X) >= self.config.threshold

    def gate_score(self, fv: GateFeatureVector) -> float:
        """Single-impression score used on the scroll path."""
        return float(self.predict_proba([fv])[0])

    def score(self, X: Sequence[GateFeatureVector], y) -> float:
        return auc(self.predict_proba(X), np.asarray(y) > 0.5)
