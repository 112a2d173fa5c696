"""The on-scroll decision procedure and the session driver.

Per impression: the gate scores the next server-list video; at or above the
threshold the ranker picks a replacement from the cache pool (the original
is queued back into the pool), otherwise the original plays. With no
connectivity only the ranking stage runs, over the pool, until it is empty
or the network returns. Experiment arms differ only in the decision policy:

  base  - never replace (and nothing plays offline),
  gate  - replace, ranking cached candidates by their server-side scores,
  full  - replace, ranking with the on-device model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cache import CachePool, compute_capacity, DAY_S
from .features import FeatureSchema, build_gate_features, build_rank_features
from .gate import GateClassifier
from .rank import (MultiTaskRanker, RankConfig, is_playable, order_candidates,
                   rank_score, select_best)
from .records import GateSample, RankSample
from .simenv import (Catalog, REGIME_GOOD, REGIME_OFFLINE, SimConfig,
                     UserProfile, UserStreams, engagement_outcome, affinity,
                     gen_user_streams, playback_draw, prefetch_state,
                     server_rs_stub)
from .types import (CachedVideo, CacheOrigin, ChoppySnapshot, DecisionSource,
                    DeviceState, DisplayDecision, PlaybackOutcome,
                    SessionState, VideoMeta, WatchedRecord)

ARMS = ("base", "gate", "full")


@dataclass(frozen=True)
class EngineConfig:
    threshold: float = 0.75
    arm: str = "full"
    allow_reshow: bool = True

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must be in (0, 1)")
        if self.arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}, got {self.arm!r}")

    @property
    def replacement_enabled(self) -> bool:
        return self.arm != "base"


@dataclass
class ScrollResult:
    decision: DisplayDecision
    shown_cached_ratio: float
    shown_cached_duration_s: float
    gate_features: "object | None" = None  # GateFeatureVector when gated


class SessionEngine:
    """Drives decisions for one user session. Single-writer over its pool
    and session state; models are read-only here."""

    def __init__(self, schema: FeatureSchema, cfg: EngineConfig,
                 rank_cfg: RankConfig,
                 gate: GateClassifier | None = None,
                 ranker: MultiTaskRanker | None = None):
        if cfg.replacement_enabled and gate is None:
            raise ValueError(f"arm {cfg.arm!r} needs a gate model")
        if cfg.arm == "full" and ranker is None:
            raise ValueError("arm 'full' needs a ranking model")
        self.schema = schema
        self.cfg = cfg
        self.rank_cfg = rank_cfg
        self.gate = gate
        self.ranker = ranker
        self.shown_ids: set[int] = set()

    # -- candidate selection ---------------------------------------------------

    def _eligible(self, pool: CachePool) -> list[CachedVideo]:
        out = [c for c in pool.videos() if is_playable(c, self.rank_cfg)]
        if not self.cfg.allow_reshow:
            out = [c for c in out if c.meta.id not in self.shown_ids]
        return out

    def _pick_replacement(self, session: SessionState, pool: CachePool,
                          upcoming_rest: list[VideoMeta],
                          device: DeviceState) -> CachedVideo | None:
        eligible = self._eligible(pool)
        if not eligible:
            return None
        if self.cfg.arm == "gate":
            # Rank cached candidates by the server-side predictions alone.
            scores = np.array([rank_score(c.meta.server_pxtrs,
                                          self.rank_cfg.score_weights)
                               for c in eligible])
            return order_candidates(scores, eligible)
        return select_best(eligible, session, upcoming_rest, device,
                           self.ranker, self.schema)

    # -- decision steps ----------------------------------------------------------

    def on_scroll(self, session: SessionState, device: DeviceState,
                  pool: CachePool, now: float) -> ScrollResult | None:
        """Gate the next upcoming video; replace it from the pool when the
        score clears the threshold and a playable candidate exists.

        Returns None at the end of the server list (the caller should fetch
        the next page and retry)."""
        if not device.is_online:
            raise ValueError("on_scroll requires connectivity; use offline_step")
        if not session.upcoming:
            return None

        target = session.upcoming.pop(0)
        upcoming_rest = list(session.upcoming)
        t_ratio, t_dur = self._prefetch(target, device)

        # Features are assembled in every arm (they feed the sample logs);
        # the gate itself only runs where replacement is enabled.
        fv = build_gate_features(session, device, target, t_ratio, t_dur, self.schema)
        p = None
        if self.cfg.replacement_enabled:
            p = self.gate.gate_score(fv)
            if p >= self.cfg.threshold:
                chosen = self._pick_replacement(session, pool, upcoming_rest, device)
                if chosen is not None:
                    pool.remove_displayed(chosen.meta.id)
                    pool.record_consumption(now)
                    pool.insert_replaced(target, now, t_ratio, t_dur)
                    self.shown_ids.add(chosen.meta.id)
                    return ScrollResult(
                        decision=DisplayDecision(shown=chosen.meta, replaced=target,
                                                 gate_score=p,
                                                 source=DecisionSource.CACHE_REPLACEMENT),
                        shown_cached_ratio=chosen.cached_ratio,
                        shown_cached_duration_s=chosen.cached_duration_s,
                        gate_features=fv)
        self.shown_ids.add(target.id)
        return ScrollResult(
            decision=DisplayDecision(shown=target, gate_score=p,
                                     source=DecisionSource.SERVER_LIST),
            shown_cached_ratio=t_ratio, shown_cached_duration_s=t_dur,
            gate_features=fv)

    def offline_step(self, session: SessionState, device: DeviceState,
                     pool: CachePool, now: float) -> ScrollResult | None:
        """Ranking-only selection from the pool; None once nothing is left."""
        if len(pool) == 0:
            return None
        eligible = self._eligible(pool)
        if not eligible:
            return None
        if self.cfg.arm == "full":
            chosen = select_best(eligible, session, [], device, self.ranker,
                                 self.schema)
        else:
            scores = np.array([rank_score(c.meta.server_pxtrs,
                                          self.rank_cfg.score_weights)
                               for c in eligible])
            chosen = order_candidates(scores, eligible)
        if chosen is None:
            return None
        pool.remove_displayed(chosen.meta.id)
        pool.record_consumption(now)
        self.shown_ids.add(chosen.meta.id)
        return ScrollResult(
            decision=DisplayDecision(shown=chosen.meta,
                                     source=DecisionSource.OFFLINE_CACHE),
            shown_cached_ratio=chosen.cached_ratio,
            shown_cached_duration_s=chosen.cached_duration_s)

    def record_outcome(self, session: SessionState, result: ScrollResult,
                       outcome: PlaybackOutcome, device: DeviceState) -> None:
        """Session bookkeeping after playback: watch history, choppy history,
        and the rolling dynamic trace."""
        shown = result.decision.shown
        session.push_watched(WatchedRecord(
            video=shown, watch_time_s=outcome.watch_time_s,
            effective=outcome.effective, long=outcome.long, short=outcome.short,
            finished=outcome.finished, choppy=outcome.choppy,
            pxtrs=shown.server_pxtrs), self.schema.watched_cap)
        if outcome.choppy:
            session.push_choppy(ChoppySnapshot(
                duration_s=shown.duration_s, bitrate_kbps=shown.bitrate_kbps,
                size_tier=shown.size_tier, cached_ratio=result.shown_cached_ratio,
                network_speed_kbps=device.network_speed_kbps),
                self.schema.choppy_cap)
        session.push_trace((device.network_speed_kbps, result.shown_cached_ratio,
                            device.cpu_load), self.schema.dynamic_cap)
        session.position += 1

    # -- hooks ---------------------------------------------------------------

    def _prefetch(self, video: VideoMeta, device: DeviceState) -> tuple[float, float]:
        raise NotImplementedError("attach a prefetch model before use")


class SimulatedEngine(SessionEngine):
    """Engine wired to the simulator's prefetch model."""

    def __init__(self, sim_cfg: SimConfig, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.sim_cfg = sim_cfg

    def _prefetch(self, video: VideoMeta, device: DeviceState) -> tuple[float, float]:
        return prefetch_state(video, device.network_speed_kbps, self.sim_cfg)


@dataclass
class ImpressionRecord:
    step: int
    regime: int
    source: str
    shown_id: int
    replaced_id: int | None
    gate_score: float | None
    verdict: str
    watch_time_s: float
    choppy: bool


@dataclass
class SessionReport:
    user_id: int
    arm: str
    trace_checksum: int
    records: list[ImpressionRecord] = field(default_factory=list)
    replacement_count: int = 0
    idle_steps: int = 0

    @property
    def watch_time(self) -> float:
        return sum(r.watch_time_s for r in self.records)

    @property
    def poor_network_watch_time(self) -> float:
        return sum(r.watch_time_s for r in self.records if r.regime != REGIME_GOOD)

    @property
    def impressions(self) -> int:
        return len(self.records)

    @property
    def choppy_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.choppy for r in self.records) / len(self.records)


@dataclass
class SessionRun:
    report: SessionReport
    gate_samples: list[GateSample]
    rank_samples: list[RankSample]


def run_session(user: UserProfile, catalog: Catalog, sim_cfg: SimConfig,
                engine_cfg: EngineConfig, schema: FeatureSchema,
                rank_cfg: RankConfig, seed: int,
                gate: GateClassifier | None = None,
                ranker: MultiTaskRanker | None = None,
                streams: UserStreams | None = None) -> SessionRun:
    """One deterministic simulated session for one user under one arm."""
    steps = sim_cfg.session_steps
    if streams is None:
        streams = gen_user_streams(sim_cfg, seed, user.user_id, steps)
    engine = SimulatedEngine(sim_cfg, schema, engine_cfg, rank_cfg,
                             gate=gate, ranker=ranker)

    # The server list is fetched page by page from the front; cache
    # replenishment draws from the tail so supplies stay personalized but
    # disjoint from the scroll flow.
    k = min(len(catalog), steps + 4 * (max(user.consumption_history) + 1))
    ranked = server_rs_stub(user, catalog, k, sim_cfg, seed)
    front = ranked[:steps]
    reserve = ranked[steps:]

    now = 30 * DAY_S  # fixed epoch so expiry numbers stay readable
    pool = CachePool(capacity=compute_capacity(user.consumption_history))
    for i, count in enumerate(user.consumption_history):
        pool.record_consumption(now - (6 - i) * DAY_S, count)

    session = SessionState(user_id=user.user_id)
    report = SessionReport(user_id=user.user_id, arm=engine_cfg.arm,
                           trace_checksum=streams.checksum)
    run = SessionRun(report=report, gate_samples=[], rank_samples=[])
    mood = 1.0
    page_at = 0

    def maintain_cache(online: bool):
        pool.evict_expired(now)
        pool.refresh_capacity(now)
        # Replenishment needs the cloud; offline it simply waits.
        if online and pool.needs_replenish() and reserve:
            room = pool.capacity - len(pool)
            added = pool.replenish(reserve[:room], now)
            del reserve[:added]

    # The pool persists across sessions; model that by starting full.
    maintain_cache(online=True)
    for t in range(steps):
        now += sim_cfg.impression_dt_s
        regime = int(streams.regimes[t])
        device = DeviceState(
            device_score=user.device_score,
            cpu_load=float(streams.cpu_loads[t]),
            network_speed_kbps=float(streams.speeds[t]),
            is_online=regime != REGIME_OFFLINE)
        maintain_cache(device.is_online)

        if not device.is_online:
            if not engine_cfg.replacement_enabled:
                report.idle_steps += 1
                continue
            result = engine.offline_step(session, device, pool, now)
            if result is None:
                report.idle_steps += 1
                continue
        else:
            if not session.upcoming:
                session.upcoming.extend(front[page_at:page_at + sim_cfg.page_size])
                page_at += sim_cfg.page_size
            result = engine.on_scroll(session, device, pool, now)
            if result is None:
                report.idle_steps += 1
                continue

        shown = result.decision.shown
        draw = playback_draw(shown, device.network_speed_kbps, device.cpu_load,
                             result.shown_cached_ratio,
                             result.shown_cached_duration_s, sim_cfg,
                             float(streams.playback_noise[t]),
                             float(streams.playback_u[t]))
        outcome = engagement_outcome(affinity(user, catalog, shown.id, sim_cfg),
                                     shown, draw.verdict, mood, sim_cfg,
                                     float(streams.watch_noise[t]))

        if result.decision.source is DecisionSource.CACHE_REPLACEMENT:
            report.replacement_count += 1
        if (result.gate_features is not None
                and result.decision.source is DecisionSource.SERVER_LIST):
            run.gate_samples.append(GateSample(
                features=result.gate_features, label=int(outcome.choppy),
                oracle_logit=draw.logit, user_id=user.user_id, step=t))
        shown_cached = CachedVideo(
            meta=shown, cached_at=now, cached_ratio=result.shown_cached_ratio,
            cached_duration_s=min(result.shown_cached_duration_s, shown.duration_s),
            origin=CacheOrigin.REPLENISHED)
        bundle = build_rank_features(session, shown_cached,
                                     list(session.upcoming), device, schema)
        run.rank_samples.append(RankSample(
            bundle=bundle,
            labels={"evr": int(outcome.effective), "lvr": int(outcome.long),
                    "svr": int(outcome.short), "fpr": int(outcome.finished)},
            server_pxtrs=shown.server_pxtrs, user_id=user.user_id, step=t))

        engine.record_outcome(session, result, outcome, device)
        if outcome.choppy:
            mood *= sim_cfg.choppy_carryover
        report.records.append(ImpressionRecord(
            step=t, regime=regime, source=result.decision.source.value,
            shown_id=shown.id,
            replaced_id=(result.decision.replaced.id
                         if result.decision.replaced else None),
            gate_score=result.decision.gate_score,
            verdict=draw.verdict.value, watch_time_s=outcome.watch_time_s,
            choppy=outcome.choppy))
    return run
