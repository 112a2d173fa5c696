"""On-device choppy-playback gating and cached-video ranking, with a
deterministic session simulator for end-to-end training and evaluation."""

from .cache import CachePool, compute_capacity
from .config import AbConfig, ExperimentConfig, load_config, save_config
from .engine import ARMS, EngineConfig, SessionEngine, run_session
from .features import (FeatureSchema, GateFeatureVector, RankFeatureBundle,
                       bucketize, build_gate_features, build_rank_features,
                       size_tier, soft_discretize_embed)
from .gate import GateClassifier, GateConfig
from .metrics import auc, recall_at_precision
from .rank import MultiTaskRanker, RankConfig, TASKS, rank_score, select_best
from .simenv import (Catalog, SimConfig, gen_catalog, gen_network_trace,
                     gen_user, server_rs_stub)
from .types import (CachedVideo, DeviceState, DisplayDecision, PlaybackOutcome,
                    PxtrVector, SessionState, Verdict, VideoMeta)

__all__ = [
    "ARMS", "AbConfig", "CachePool", "CachedVideo", "Catalog", "DeviceState",
    "DisplayDecision", "EngineConfig", "ExperimentConfig", "FeatureSchema",
    "GateClassifier", "GateConfig", "GateFeatureVector", "MultiTaskRanker",
    "PlaybackOutcome", "PxtrVector", "RankConfig", "RankFeatureBundle",
    "SessionEngine", "SessionState", "SimConfig", "TASKS", "Verdict",
    "VideoMeta", "auc", "bucketize", "build_gate_features",
    "build_rank_features", "compute_capacity", "gen_catalog",
    "gen_network_trace", "gen_user", "load_config", "rank_score",
    "recall_at_precision", "run_session", "save_config", "select_best",
    "server_rs_stub", "size_tier", "soft_discretize_embed",
]

__version__ = "0.1.0"
