"""Deterministic ground-truth generators: catalog, users, network traces,
a server-side recommender stub, and the playback/engagement oracles.

Every generator is a pure function of (config, seed); per-user randomness
derives from tagged `SeedSequence` keys so that simulations with different
decision policies consume identical random draws (common random numbers,
which is what makes paired experiment arms comparable).
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass

import numpy as np

from .types import PlaybackOutcome, Verdict, VideoMeta

REGIME_GOOD, REGIME_WEAK, REGIME_OFFLINE = 0, 1, 2
REGIME_NAMES = ("good", "weak", "offline")

# SeedSequence tags: one independent stream per purpose.
_TAG_CATALOG = 101
_TAG_USER = 102
_TAG_TRACE = 103
_TAG_STUB = 104
_TAG_PLAYBACK = 105
_TAG_ENGAGE = 106


@dataclass(frozen=True)
class SimConfig:
    catalog_size: int = 400
    latent_dim: int = 4
    # Catalog shape.
    duration_range_s: tuple[float, float] = (5.0, 120.0)
    bitrate_low_kbps: float = 700.0
    bitrate_high_kbps: float = 2200.0
    bitrate_sigma: float = 0.35
    high_bitrate_share: float = 0.3
    size_thresholds: tuple[float, float] = (4e6, 12e6)
    # Regime-switching network model: rows are transition probabilities
    # from (good, weak, offline).
    regime_means_kbps: tuple[float, float, float] = (4500.0, 750.0, 0.0)
    regime_vols_kbps: tuple[float, float, float] = (1200.0, 300.0, 0.0)
    transitions: tuple[tuple[float, float, float], ...] = (
        (0.92, 0.07, 0.01),
        (0.18, 0.72, 0.10),
        (0.12, 0.28, 0.60),
    )
    # Playback oracle coefficients: intercept, bandwidth deficit, cpu load,
    # uncached fraction, size tier; plus event noise. The intercept keeps
    # clean-condition playback near-certainly smooth so the overall choppy
    # rate stays in the low single digits.
    beta: tuple[float, float, float, float, float] = (-6.2, 3.0, 1.0, 1.5, 0.5)
    playback_noise_sigma: float = 0.35
    deficit_cap: float = 8.0
    hard_floor_kbps: float = 100.0
    min_start_ratio: float = 0.25
    first_screen_s: float = 1.5
    # Player prefetch of the upcoming video while the current one plays.
    prefetch_share: float = 0.9
    prefetch_window_s: float = 30.0
    # Engagement oracle.
    affinity_scale: float = 2.6
    quality_weight: float = 0.5
    watch_noise_sigma: float = 0.5
    choppy_penalty: float = 0.35
    # Each choppy event durably scales later watch propensity in the
    # session; this is what makes session watch time collapse with the
    # choppy rate instead of dipping a few percent.
    choppy_carryover: float = 0.75
    t_eff_s: float = 7.0
    t_long_s: float = 18.0
    t_short_s: float = 3.0
    t_finish: float = 0.97
    # Server-side recommender stub. Besides the noisy shared affinity it
    # sees the video itself, so its per-task predictions carry a duration
    # term (the engagement thresholds are absolute seconds).
    stub_rank_noise: float = 0.3
    stub_pxtr_noise: float = 0.33
    # Per-task offset / affinity sign / log-duration coefficient; svr
    # predicts bounces, so affinity enters negatively there.
    stub_task_offsets: tuple[float, float, float, float] = (0.0, -0.6, -0.8, -0.4)
    stub_task_signs: tuple[float, float, float, float] = (1.0, 1.0, -1.0, 1.0)
    stub_task_dur_coefs: tuple[float, float, float, float] = (1.8, 1.8, -1.8, 0.0)
    # Session shape.
    session_steps: int = 40
    page_size: int = 10
    impression_dt_s: float = 20.0
    cpu_load_base: float = 0.2
    cpu_load_jitter: float = 0.15
    device_score_range: tuple[float, float] = (0.4, 1.0)
    consumption_low: int = 8
    consumption_high: int = 28


def _rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(master_seed),) + tuple(int(k) for k in key)))


@dataclass
class Catalog:
    videos: list[VideoMeta]
    latents: np.ndarray  # (n, latent_dim)

    def __len__(self):
        return len(self.videos)


def gen_catalog(cfg: SimConfig, seed: int) -> Catalog:
    """Log-uniform durations, two-component bitrate mixture with a
    high-bitrate tail, sizes derived from bitrate x duration."""
    rng = _rng(seed, _TAG_CATALOG)
    n = cfg.catalog_size
    lo, hi = cfg.duration_range_s
    durations = np.exp(rng.uniform(np.log(lo), np.log(hi), size=n))
    is_high = rng.random(n) < cfg.high_bitrate_share
    base = np.where(is_high, cfg.bitrate_high_kbps, cfg.bitrate_low_kbps)
    bitrates = base * np.exp(rng.normal(0.0, cfg.bitrate_sigma, size=n))
    qualities = rng.standard_normal(n)
    latents = rng.standard_normal((n, cfg.latent_dim))
    videos = []
    from .features import size_tier
    for i in range(n):
        size_bytes = int(bitrates[i] * durations[i] * 125.0)  # kbps * s -> bytes
        videos.append(VideoMeta(
            id=i, duration_s=float(durations[i]), bitrate_kbps=float(bitrates[i]),
            size_bytes=size_bytes,
            size_tier=size_tier(size_bytes, cfg.size_thresholds),
            latent_quality=float(qualities[i])))
    return Catalog(videos=videos, latents=latents)


@dataclass
class UserProfile:
    user_id: int
    latent: np.ndarray
    device_score: float
    consumption_history: list[int]


def gen_user(cfg: SimConfig, seed: int, user_id: int) -> UserProfile:
    rng = _rng(seed, _TAG_USER, user_id)
    lo, hi = cfg.device_score_range
    return UserProfile(
        user_id=user_id,
        latent=rng.standard_normal(cfg.latent_dim),
        device_score=float(rng.uniform(lo, hi)),
        consumption_history=[int(c) for c in rng.integers(
            cfg.consumption_low, cfg.consumption_high + 1, size=7)])


def affinity(user: UserProfile, catalog: Catalog, video_id: int,
             cfg: SimConfig) -> float:
    raw = float(user.latent @ catalog.latents[video_id]) / np.sqrt(cfg.latent_dim)
    return (cfg.affinity_scale * raw
            + cfg.quality_weight * catalog.videos[video_id].latent_quality)


def gen_network_trace(cfg: SimConfig, seed: int, user_id: int,
                      length: int) -> tuple[np.ndarray, np.ndarray]:
    """(speeds_kbps, regimes) for one user; offline steps emit exactly 0."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = _rng(seed, _TAG_TRACE, user_id)
    trans = np.asarray(cfg.transitions)
    means = np.asarray(cfg.regime_means_kbps)
    vols = np.asarray(cfg.regime_vols_kbps)
    regimes = np.empty(length, dtype=np.int64)
    speeds = np.empty(length, dtype=np.float64)
    state = REGIME_GOOD
    for t in range(length):
        state = int(rng.choice(3, p=trans[state]))
        regimes[t] = state
        if state == REGIME_OFFLINE:
            speeds[t] = 0.0
        else:
            speeds[t] = max(0.0, rng.normal(means[state], vols[state]))
    return speeds, regimes


def trace_checksum(speeds: np.ndarray, regimes: np.ndarray) -> int:
    return zlib.crc32(speeds.tobytes() + regimes.tobytes())


def stationary_distribution(transitions) -> np.ndarray:
    """Left eigenvector of the transition matrix for eigenvalue 1."""
    trans = np.asarray(transitions, dtype=np.float64)
    vals, vecs = np.linalg.eig(trans.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, idx])
    return pi / pi.sum()


@dataclass
class UserStreams:
    """Pre-drawn per-step randomness so every experiment arm consumes the
    same draws regardless of its decisions."""

    speeds: np.ndarray
    regimes: np.ndarray
    cpu_loads: np.ndarray
    playback_noise: np.ndarray
    playback_u: np.ndarray
    watch_noise: np.ndarray

    @property
    def checksum(self) -> int:
        return trace_checksum(self.speeds, self.regimes)


def gen_user_streams(cfg: SimConfig, seed: int, user_id: int,
                     n_steps: int) -> UserStreams:
    speeds, regimes = gen_network_trace(cfg, seed, user_id, n_steps)
    rng_play = _rng(seed, _TAG_PLAYBACK, user_id)
    rng_eng = _rng(seed, _TAG_ENGAGE, user_id)
    loads = np.clip(cfg.cpu_load_base
                    + cfg.cpu_load_jitter * rng_play.standard_normal(n_steps),
                    0.0, 1.0)
    return UserStreams(
        speeds=speeds, regimes=regimes, cpu_loads=loads,
        playback_noise=rng_play.normal(0.0, cfg.playback_noise_sigma, n_steps),
        playback_u=rng_play.random(n_steps),
        watch_noise=rng_eng.normal(0.0, cfg.watch_noise_sigma, n_steps))


def server_rs_stub(user: UserProfile, catalog: Catalog, k: int,
                   cfg: SimConfig, seed: int) -> list[VideoMeta]:
    """Top-k ranked list with per-task predicted rates attached.

    The stub shares the engagement oracle's latent affinity but adds its own
    noise, so its predictions are informative yet imperfect.
    """
    if k > len(catalog):
        raise ValueError(f"requested {k} of {len(catalog)} videos")
    rng = _rng(seed, _TAG_STUB, user.user_id)
    affs = np.array([affinity(user, catalog, v.id, cfg) for v in catalog.videos])
    ranking = affs + rng.normal(0.0, cfg.stub_rank_noise, len(affs))
    order = np.argsort(-ranking, kind="mergesort")[:k]
    lo, hi = cfg.duration_range_s
    mid = np.sqrt(lo * hi)
    half_span = 0.5 * np.log(hi / lo)
    out = []
    for vid in order:
        video = catalog.videos[vid]
        ld = np.log(video.duration_s / mid) / half_span  # roughly [-1, 1]
        noise = rng.normal(0.0, cfg.stub_pxtr_noise, 4)
        pxtrs = tuple(
            float(_sigmoid(cfg.stub_task_offsets[t]
                           + cfg.stub_task_signs[t] * affs[vid]
                           + cfg.stub_task_dur_coefs[t] * ld + noise[t]))
            for t in range(4))
        out.append(dataclasses.replace(video, server_pxtrs=pxtrs))
    return out


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def prefetch_state(video: VideoMeta, speed_kbps: float,
                   cfg: SimConfig) -> tuple[float, float]:
    """(cached_ratio, cached_duration_s) of an upcoming server-list video.

    While the current video plays, the client spends a share of bandwidth
    prefetching the next one; a fast link often buffers it fully, a weak one
    leaves a thin head start.
    """
    if video.bitrate_kbps <= 0:
        return 1.0, video.duration_s
    buffered_s = (speed_kbps * cfg.prefetch_share * cfg.prefetch_window_s
                  / video.bitrate_kbps)
    buffered_s = float(min(buffered_s, video.duration_s))
    return buffered_s / video.duration_s, buffered_s


@dataclass
class PlaybackDraw:
    verdict: Verdict
    logit: float  # generative logit, the ceiling any predictor can reach


def playback_draw(video: VideoMeta, speed_kbps: float, cpu_load: float,
                  cached_ratio: float, cached_duration_s: float,
                  cfg: SimConfig, noise: float, u: float) -> PlaybackDraw:
    """Choppiness is a logistic draw in bandwidth deficit, device load,
    uncached fraction, and size tier.

    Only the fraction of the video that is not already cached needs the
    network, so a fully prefetched video plays clean even offline.
    """
    b0, b1, b2, b3, b4 = cfg.beta
    required_kbps = video.bitrate_kbps * (1.0 - cached_ratio)
    deficit = min(max(required_kbps / max(speed_kbps, 1e-6) - 1.0, 0.0),
                  cfg.deficit_cap)
    z = (b0 + b1 * deficit + b2 * cpu_load + b3 * (1.0 - cached_ratio)
         + b4 * video.size_tier + noise)
    choppy = _sigmoid(z) > u
    if not choppy:
        return PlaybackDraw(Verdict.OK, z)
    if speed_kbps < cfg.hard_floor_kbps and cached_ratio < cfg.min_start_ratio:
        verdict = Verdict.FAILED_LOAD
    elif cached_duration_s < cfg.first_screen_s and deficit > 0:
        verdict = Verdict.SLOW_FIRST_SCREEN
    else:
        verdict = Verdict.STUTTER
    return PlaybackDraw(verdict, z)


def engagement_outcome(affinity_value: float, video: VideoMeta,
                       verdict: Verdict, mood: float, cfg: SimConfig,
                       watch_noise: float) -> PlaybackOutcome:
    """Watch time and the four engagement labels for one impression.

    `mood` is the session-level carryover multiplier maintained by the
    caller (1.0 at session start, scaled down after each choppy event).
    """
    if verdict is Verdict.FAILED_LOAD:
        watch = 0.0
    else:
        base = video.duration_s * _sigmoid(affinity_value + watch_noise)
        penalty = 1.0 if verdict is Verdict.OK else cfg.choppy_penalty
        watch = base * penalty * mood
    return PlaybackOutcome(
        verdict=verdict,
        watch_time_s=watch,
        effective=watch >= min(cfg.t_eff_s, video.duration_s),
        long=watch >= cfg.t_long_s,
        short=watch < cfg.t_short_s,
        finished=watch >= cfg.t_finish * video.duration_s,
    )
