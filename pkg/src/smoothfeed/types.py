"""Domain objects shared across the feed pipeline.

Everything here is plain data: catalog entries, per-session client state,
cached-pool entries, and playback outcomes. Behaviour lives in the modules
that consume these.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


@dataclass
class VideoMeta:
    """A catalog item as the server describes it."""

    id: int
    duration_s: float
    bitrate_kbps: float
    size_bytes: int
    size_tier: int
    # Server-side predicted engagement rates, order (evr, lvr, svr, fpr).
    server_pxtrs: tuple[float, float, float, float] = (0.5, 0.5, 0.5, 0.5)
    # Simulator ground truth; never exposed to models.
    latent_quality: float = 0.0


@dataclass
class DeviceState:
    device_score: float = 0.8
    cpu_load: float = 0.2
    network_speed_kbps: float = 4000.0
    is_online: bool = True


@dataclass
class WatchedRecord:
    video: VideoMeta
    watch_time_s: float
    effective: bool
    long: bool
    short: bool
    finished: bool
    choppy: bool
    pxtrs: tuple[float, float, float, float]


@dataclass
class SessionState:
    """Client-side state the models read: watch history, choppy history,
    the upcoming server list, and the rolling device/network trace."""

    user_id: int
    watched: list[WatchedRecord] = field(default_factory=list)
    choppy_history: list["ChoppySnapshot"] = field(default_factory=list)
    upcoming: list[VideoMeta] = field(default_factory=list)
    # Per-impression (network_speed_kbps, cached_ratio, cpu_load) samples.
    dynamic_trace: list[tuple[float, float, float]] = field(default_factory=list)
    position: int = 0

    def push_watched(self, rec: WatchedRecord, cap: int) -> None:
        self.watched.append(rec)
        if len(self.watched) > cap:
            del self.watched[0]

    def push_choppy(self, snap: "ChoppySnapshot", cap: int) -> None:
        self.choppy_history.append(snap)
        if len(self.choppy_history) > cap:
            del self.choppy_history[0]

    def push_trace(self, sample: tuple[float, float, float], cap: int) -> None:
        self.dynamic_trace.append(sample)
        if len(self.dynamic_trace) > cap:
            del self.dynamic_trace[0]


@dataclass
class ChoppySnapshot:
    """Feature snapshot of a video at the moment it played choppy."""

    duration_s: float
    bitrate_kbps: float
    size_tier: int
    cached_ratio: float
    network_speed_kbps: float


class CacheOrigin(str, Enum):
    REPLENISHED = "replenished"
    REPLACED = "replaced"


@dataclass
class CachedVideo:
    meta: VideoMeta
    cached_at: float
    cached_ratio: float
    cached_duration_s: float
    origin: CacheOrigin

    def __post_init__(self) -> None:
        if self.cached_duration_s > self.meta.duration_s + 1e-6:
            raise ValueError(
                f"cached_duration {self.cached_duration_s} exceeds video "
                f"duration {self.meta.duration_s}"
            )


class Verdict(str, Enum):
    OK = "ok"
    STUTTER = "stutter"
    SLOW_FIRST_SCREEN = "slow_first_screen"
    FAILED_LOAD = "failed_load"


@dataclass
class PlaybackOutcome:
    verdict: Verdict
    watch_time_s: float
    effective: bool
    long: bool
    short: bool
    finished: bool

    @property
    def choppy(self) -> bool:
        return self.verdict is not Verdict.OK


@dataclass(frozen=True)
class PxtrVector:
    """Predicted engagement rates, each in [0, 1]."""

    evr: float
    lvr: float
    svr: float
    fpr: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.evr, self.lvr, self.svr, self.fpr)


class DecisionSource(str, Enum):
    SERVER_LIST = "server_list"
    CACHE_REPLACEMENT = "cache_replacement"
    OFFLINE_CACHE = "offline_cache"


@dataclass
class DisplayDecision:
    shown: VideoMeta
    source: DecisionSource
    replaced: VideoMeta | None = None
    gate_score: float | None = None

    def __post_init__(self) -> None:
        if (self.replaced is not None) != (self.source is DecisionSource.CACHE_REPLACEMENT):
            raise ValueError("replaced must be set exactly for cache_replacement decisions")
        if self.source is DecisionSource.OFFLINE_CACHE and self.gate_score is not None:
            raise ValueError("offline decisions carry no gate score")
