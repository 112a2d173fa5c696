"""The locally-cached video pool.

Update rules: replaced videos re-enter the pool, entries older than the
expiry horizon are dropped, capacity is the peak daily consumption over the
last seven days (floor 1), and a replenishment request fires while the pool
sits strictly below three quarters of capacity.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

from .types import CachedVideo, CacheOrigin, VideoMeta

DAY_S = 86_400.0
DEFAULT_EXPIRY_HORIZON_S = 14 * DAY_S
REPLENISH_FRACTION = 0.75
CONSUMPTION_WINDOW_DAYS = 7


def compute_capacity(consumption_history: Sequence[int]) -> int:
    """Peak daily cache consumption over the window, never below 1."""
    if not consumption_history:
        return 1
    return max(1, max(int(c) for c in consumption_history))


class CachePool:
    """Single-writer pool of prefetched videos keyed by video id."""

    def __init__(self, capacity: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.entries: dict[int, CachedVideo] = {}
        self._daily_consumption: dict[int, int] = {}
        self.duplicate_inserts = 0
        self.missing_removals = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, video_id: int) -> bool:
        return video_id in self.entries

    def videos(self) -> list[CachedVideo]:
        return list(self.entries.values())

    # -- capacity & consumption ---------------------------------------------

    def record_consumption(self, now: float, units: int = 1) -> None:
        day = int(now // DAY_S)
        self._daily_consumption[day] = self._daily_consumption.get(day, 0) + units

    def consumption_window(self, now: float) -> list[int]:
        today = int(now // DAY_S)
        return [self._daily_consumption.get(d, 0)
                for d in range(today - CONSUMPTION_WINDOW_DAYS + 1, today + 1)]

    def refresh_capacity(self, now: float) -> int:
        self.capacity = compute_capacity(self.consumption_window(now))
        # A shrinking window can drop the quota below the current size;
        # trim oldest-first so the capacity bound always holds.
        while len(self.entries) > self.capacity:
            oldest = min(self.entries.values(), key=lambda e: (e.cached_at, e.meta.id))
            del self.entries[oldest.meta.id]
        return self.capacity

    def needs_replenish(self) -> bool:
        return len(self.entries) < REPLENISH_FRACTION * self.capacity

    # -- mutations ------------------------------------------------------------

    def evict_expired(self, now: float,
                      horizon_s: float = DEFAULT_EXPIRY_HORIZON_S) -> list[int]:
        """Drop entries strictly older than the horizon; an entry aged
        exactly `horizon_s` survives."""
        expired = [vid for vid, e in self.entries.items()
                   if now - e.cached_at > horizon_s]
        for vid in expired:
            del self.entries[vid]
        return expired

    def insert_replaced(self, video: VideoMeta, now: float,
                        cached_ratio: float, cached_duration_s: float) -> bool:
        """Queue a just-replaced video with its current download state.

        Duplicate ids are an idempotent no-op. At capacity, the oldest entry
        makes room first.
        """
        if video.id in self.entries:
            self.duplicate_inserts += 1
            return False
        while len(self.entries) >= self.capacity:
            oldest = min(self.entries.values(), key=lambda e: (e.cached_at, e.meta.id))
            del self.entries[oldest.meta.id]
        self.entries[video.id] = CachedVideo(
            meta=video, cached_at=now, cached_ratio=cached_ratio,
            cached_duration_s=cached_duration_s, origin=CacheOrigin.REPLACED)
        return True

    def replenish(self, supplied: Iterable[VideoMeta], now: float) -> int:
        """Add server-supplied videos (fully prefetched) up to capacity,
        skipping ids already present. Returns the number added."""
        added = 0
        room = self.capacity - len(self.entries)
        for video in supplied:
            if room <= 0:
                break
            if video.id in self.entries:
                continue
            self.entries[video.id] = CachedVideo(
                meta=video, cached_at=now, cached_ratio=1.0,
                cached_duration_s=video.duration_s, origin=CacheOrigin.REPLENISHED)
            added += 1
            room -= 1
        return added

    def remove_displayed(self, video_id: int) -> bool:
        if video_id not in self.entries:
            self.missing_removals += 1
            return False
        del self.entries[video_id]
        return True

    # -- serialization ---------------------------------------------------------

    def to_lines(self) -> list[str]:
        header = {"kind": "cache_pool", "capacity": self.capacity,
                  "consumption": self._daily_consumption}
        lines = [json.dumps(header, sort_keys=True)]
        for e in self.entries.values():
            lines.append(json.dumps({
                "id": e.meta.id, "duration_s": e.meta.duration_s,
                "bitrate_kbps": e.meta.bitrate_kbps, "size_bytes": e.meta.size_bytes,
                "size_tier": e.meta.size_tier,
                "server_pxtrs": list(e.meta.server_pxtrs),
                "latent_quality": e.meta.latent_quality,
                "cached_at": e.cached_at, "cached_ratio": e.cached_ratio,
                "cached_duration_s": e.cached_duration_s,
                "origin": e.origin.value,
            }, sort_keys=True))
        return lines

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "CachePool":
        header = json.loads(lines[0])
        if header.get("kind") != "cache_pool":
            raise ValueError("not a cache pool dump")
        pool = cls(capacity=header["capacity"])
        pool._daily_consumption = {int(k): v for k, v in header["consumption"].items()}
        for line in lines[1:]:
            rec = json.loads(line)
            meta = VideoMeta(
                id=rec["id"], duration_s=rec["duration_s"],
                bitrate_kbps=rec["bitrate_kbps"], size_bytes=rec["size_bytes"],
                size_tier=rec["size_tier"],
                server_pxtrs=tuple(rec["server_pxtrs"]),
                latent_quality=rec["latent_quality"])
            pool.entries[meta.id] = CachedVideo(
                meta=meta, cached_at=rec["cached_at"],
                cached_ratio=rec["cached_ratio"],
                cached_duration_s=rec["cached_duration_s"],
                origin=CacheOrigin(rec["origin"]))
        return pool

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path) -> "CachePool":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh.read().splitlines())
