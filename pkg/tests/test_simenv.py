import dataclasses

import numpy as np
import pytest

from smoothfeed.features import size_tier
from smoothfeed.metrics import auc
from smoothfeed.simenv import (REGIME_GOOD, REGIME_OFFLINE, REGIME_WEAK,
                               SimConfig, engagement_outcome, gen_catalog,
                               gen_network_trace, gen_user, gen_user_streams,
                               playback_draw, prefetch_state, server_rs_stub,
                               stationary_distribution, trace_checksum)
from smoothfeed.types import Verdict, VideoMeta

CFG = SimConfig()


class TestCatalog:
    def test_same_seed_identical(self):
        a, b = gen_catalog(CFG, 4), gen_catalog(CFG, 4)
        assert [v.id for v in a.videos] == [v.id for v in b.videos]
        assert all(x.duration_s == y.duration_s and x.bitrate_kbps == y.bitrate_kbps
                   for x, y in zip(a.videos, b.videos))
        assert a.latents.tobytes() == b.latents.tobytes()

    def test_singleton_catalog(self):
        cat = gen_catalog(dataclasses.replace(CFG, catalog_size=1), 0)
        v = cat.videos[0]
        lo, hi = CFG.duration_range_s
        assert lo <= v.duration_s <= hi
        assert v.size_bytes > 0

    def test_size_tier_consistency(self):
        cat = gen_catalog(CFG, 9)
        for v in cat.videos:
            assert v.size_tier == size_tier(v.size_bytes, CFG.size_thresholds)

    def test_durations_log_uniform_range(self):
        cat = gen_catalog(CFG, 2)
        durs = np.array([v.duration_s for v in cat.videos])
        lo, hi = CFG.duration_range_s
        assert durs.min() >= lo and durs.max() <= hi
        # Log-uniform: the geometric midpoint splits mass roughly in half.
        assert 0.35 < (durs < np.sqrt(lo * hi)).mean() < 0.65


class TestNetworkTrace:
    def test_absorbing_regime(self):
        cfg = dataclasses.replace(CFG, transitions=((1.0, 0.0, 0.0),) * 3)
        speeds, regimes = gen_network_trace(cfg, 0, 1, 500)
        assert (regimes == REGIME_GOOD).all()
        assert (speeds > 0).all()

    def test_offline_emits_zero(self):
        speeds, regimes = gen_network_trace(CFG, 3, 7, 4000)
        off = regimes == REGIME_OFFLINE
        assert off.any()
        assert (speeds[off] == 0.0).all()
        assert (speeds[~off] >= 0.0).all()

    def test_occupancy_matches_stationary_distribution(self):
        pi = stationary_distribution(CFG.transitions)
        _, regimes = gen_network_trace(CFG, 1, 0, 10_000)
        for r in (REGIME_GOOD, REGIME_WEAK, REGIME_OFFLINE):
            occ = float((regimes == r).mean())
            assert abs(occ - pi[r]) < 0.03, (r, occ, pi[r])

    def test_deterministic_and_checksummable(self):
        a = gen_network_trace(CFG, 5, 2, 64)
        b = gen_network_trace(CFG, 5, 2, 64)
        assert trace_checksum(*a) == trace_checksum(*b)
        c = gen_network_trace(CFG, 6, 2, 64)
        assert trace_checksum(*a) != trace_checksum(*c)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            gen_network_trace(CFG, 0, 0, 0)


class TestServerStub:
    def test_noiseless_ranking_matches_affinity_order(self):
        cfg = dataclasses.replace(CFG, stub_rank_noise=0.0)
        cat = gen_catalog(cfg, 1)
        user = gen_user(cfg, 1, 0)
        ranked = server_rs_stub(user, cat, 50, cfg, 1)
        from smoothfeed.simenv import affinity
        affs = [affinity(user, cat, v.id, cfg) for v in ranked]
        assert all(a >= b - 1e-9 for a, b in zip(affs, affs[1:]))

    def test_deterministic(self):
        cat = gen_catalog(CFG, 2)
        user = gen_user(CFG, 2, 5)
        a = server_rs_stub(user, cat, 30, CFG, 2)
        b = server_rs_stub(user, cat, 30, CFG, 2)
        assert [v.id for v in a] == [v.id for v in b]
        assert all(x.server_pxtrs == y.server_pxtrs for x, y in zip(a, b))

    def test_pxtrs_in_unit_interval(self):
        cat = gen_catalog(CFG, 3)
        user = gen_user(CFG, 3, 1)
        for v in server_rs_stub(user, cat, 100, CFG, 3):
            assert all(0.0 < p < 1.0 for p in v.server_pxtrs)

    def test_rejects_oversized_request(self):
        cat = gen_catalog(dataclasses.replace(CFG, catalog_size=10), 0)
        with pytest.raises(ValueError):
            server_rs_stub(gen_user(CFG, 0, 0), cat, 11, CFG, 0)


def _video(bitrate=800.0, duration=30.0, tier=0):
    return VideoMeta(id=1, duration_s=duration, bitrate_kbps=bitrate,
                     size_bytes=int(bitrate * duration * 125), size_tier=tier)


class TestPlaybackOracle:
    def test_clean_conditions_probability_is_sigmoid_intercept(self):
        # Huge speed, fully cached, idle device, smallest tier, no noise:
        # only the intercept remains.
        video = _video()
        b0 = CFG.beta[0]
        expected = 1.0 / (1.0 + np.exp(-b0))
        hits = sum(
            playback_draw(video, 1e9, 0.0, 1.0, video.duration_s, CFG,
                          noise=0.0, u=u).verdict is not Verdict.OK
            for u in np.linspace(1e-6, 1 - 1e-6, 4001))
        assert hits / 4001 == pytest.approx(expected, abs=2e-3)

    def test_dead_network_uncached_fails_to_load(self):
        video = _video()
        draw = playback_draw(video, 0.0, 0.2, 0.0, 0.0, CFG, noise=0.0, u=0.01)
        assert draw.verdict is Verdict.FAILED_LOAD

    def test_thin_buffer_is_slow_first_screen(self):
        video = _video(bitrate=2500.0)
        # Some connectivity (above the hard floor), nearly nothing buffered.
        draw = playback_draw(video, 500.0, 0.2, 0.01, 0.3, CFG, noise=0.0, u=0.01)
        assert draw.verdict is Verdict.SLOW_FIRST_SCREEN

    def test_buffered_stutter(self):
        video = _video(bitrate=2500.0)
        draw = playback_draw(video, 500.0, 0.2, 0.5, 15.0, CFG, noise=0.0, u=0.001)
        assert draw.verdict is Verdict.STUTTER

    def test_fully_cached_ignores_network(self):
        video = _video(bitrate=5000.0)
        draw_offline = playback_draw(video, 0.0, 0.1, 1.0, video.duration_s,
                                     CFG, noise=0.0, u=0.5)
        assert draw_offline.verdict is Verdict.OK

    def test_choppy_probability_monotone_in_each_driver(self):
        video = _video(bitrate=1500.0)

        def logit(speed, load, ratio, tier):
            v = dataclasses.replace(video, size_tier=tier)
            return playback_draw(v, speed, load, ratio, ratio * v.duration_s,
                                 CFG, noise=0.0, u=0.5).logit

        for speed_hi, speed_lo in [(4000.0, 800.0), (800.0, 300.0)]:
            assert logit(speed_lo, 0.2, 0.3, 1) >= logit(speed_hi, 0.2, 0.3, 1)
        assert logit(1000.0, 0.9, 0.3, 1) >= logit(1000.0, 0.1, 0.3, 1)
        assert logit(1000.0, 0.2, 0.1, 1) >= logit(1000.0, 0.2, 0.8, 1)
        assert logit(1000.0, 0.2, 0.3, 2) >= logit(1000.0, 0.2, 0.3, 0)


class TestEngagementOracle:
    def test_failed_load_gives_zero_watch(self):
        out = engagement_outcome(2.0, _video(), Verdict.FAILED_LOAD, 1.0, CFG, 0.0)
        assert out.watch_time_s == 0.0
        assert out.short and not out.effective and not out.long and not out.finished

    def test_high_affinity_limit_finishes(self):
        out = engagement_outcome(50.0, _video(duration=20.0), Verdict.OK, 1.0, CFG, 0.0)
        assert out.watch_time_s == pytest.approx(20.0, rel=1e-6)
        assert out.finished and out.effective and out.long

    def test_choppy_penalty_scales_watch(self):
        ok = engagement_outcome(0.5, _video(duration=60.0), Verdict.OK, 1.0, CFG, 0.0)
        bad = engagement_outcome(0.5, _video(duration=60.0), Verdict.STUTTER, 1.0, CFG, 0.0)
        assert bad.watch_time_s == pytest.approx(ok.watch_time_s * CFG.choppy_penalty)

    def test_mood_scales_watch(self):
        full = engagement_outcome(0.5, _video(duration=60.0), Verdict.OK, 1.0, CFG, 0.0)
        worn = engagement_outcome(0.5, _video(duration=60.0), Verdict.OK, 0.5, CFG, 0.0)
        assert worn.watch_time_s == pytest.approx(full.watch_time_s * 0.5)

    def test_label_consistency_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            video = _video(duration=float(rng.uniform(5, 120)))
            verdict = rng.choice(list(Verdict))
            out = engagement_outcome(float(rng.normal(0, 2)), video, verdict,
                                     float(rng.uniform(0.2, 1.0)), CFG,
                                     float(rng.normal(0, 0.5)))
            if out.finished and CFG.t_eff_s <= CFG.t_finish * video.duration_s:
                assert out.effective
            if out.short:
                assert not out.long


class TestPrefetch:
    def test_fast_link_buffers_fully(self):
        ratio, dur = prefetch_state(_video(bitrate=700.0, duration=20.0), 5000.0, CFG)
        assert ratio == 1.0 and dur == 20.0

    def test_weak_link_buffers_head(self):
        video = _video(bitrate=2200.0, duration=60.0)
        ratio, dur = prefetch_state(video, 700.0, CFG)
        assert 0.0 < ratio < 0.5
        assert dur == pytest.approx(ratio * 60.0, rel=1e-6)

    def test_offline_buffers_nothing(self):
        ratio, dur = prefetch_state(_video(), 0.0, CFG)
        assert ratio == 0.0 and dur == 0.0


class TestUserStreams:
    def test_deterministic(self):
        a = gen_user_streams(CFG, 8, 3, 50)
        b = gen_user_streams(CFG, 8, 3, 50)
        assert a.checksum == b.checksum
        assert a.playback_u.tobytes() == b.playback_u.tobytes()
        assert a.watch_noise.tobytes() == b.watch_noise.tobytes()

    def test_users_get_independent_streams(self):
        a = gen_user_streams(CFG, 8, 3, 50)
        b = gen_user_streams(CFG, 8, 4, 50)
        assert a.checksum != b.checksum
