"""The three-arm experiment runner and its report.

Each seed simulates the same users, catalog, and network traces under all
arms (only the decision policy differs), so per-seed metric deltas pair up
and a paired t-test across seeds measures significance. The report carries
overall watch time, watch time on poor-network steps, choppy rate, the
replacement count, and a retention proxy that decays with session
choppiness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import AbConfig, ExperimentConfig
from .engine import ARMS, EngineConfig, SessionReport, run_session
from .gate import GateClassifier
from .rank import MultiTaskRanker
from .simenv import gen_catalog, gen_user, gen_user_streams

METRICS = ("watch_time", "poor_watch_time", "choppy_rate", "replacements",
           "retention")
HIGHER_IS_BETTER = {"watch_time": True, "poor_watch_time": True,
                    "choppy_rate": False, "replacements": True,
                    "retention": True}


def retention_proxy(choppy_rate: float, ab: AbConfig) -> float:
    """Monotone-decreasing stand-in for a return probability."""
    z = ab.retention_a - ab.retention_b * choppy_rate
    return float(1.0 / (1.0 + np.exp(-z)))


@dataclass
class ArmSeedResult:
    seed: int
    arm: str
    watch_time: float
    poor_watch_time: float
    choppy_rate: float
    replacements: float
    retention: float
    trace_checksums: tuple[int, ...]
    # (session choppy rate, session watch time) pairs for curve building.
    session_points: list[tuple[float, float]] = field(default_factory=list)


def simulate_arm(exp: ExperimentConfig, seed: int, arm: str,
                 gate: GateClassifier | None,
                 ranker: MultiTaskRanker | None) -> ArmSeedResult:
    sim, ab = exp.sim, exp.ab
    catalog = gen_catalog(sim, seed)
    engine_cfg = EngineConfig(threshold=exp.engine.threshold, arm=arm,
                              allow_reshow=exp.engine.allow_reshow)
    total_wt = total_wtp = 0.0
    choppy = impressions = 0
    replacements = 0
    retentions = []
    checksums = []
    points = []
    for uid in range(ab.users_per_seed):
        user = gen_user(sim, seed, uid)
        streams = gen_user_streams(sim, seed, uid, sim.session_steps)
        run = run_session(user, catalog, sim, engine_cfg, exp.features,
                          exp.rank, seed=seed,
                          gate=gate if arm != "base" else None,
                          ranker=ranker if arm == "full" else None,
                          streams=streams)
        rep: SessionReport = run.report
        total_wt += rep.watch_time
        total_wtp += rep.poor_network_watch_time
        choppy += sum(r.choppy for r in rep.records)
        impressions += rep.impressions
        replacements += rep.replacement_count
        retentions.append(retention_proxy(rep.choppy_rate, ab))
        checksums.append(rep.trace_checksum)
        points.append((rep.choppy_rate, rep.watch_time))
    return ArmSeedResult(
        seed=seed, arm=arm, watch_time=total_wt, poor_watch_time=total_wtp,
        choppy_rate=choppy / max(impressions, 1),
        replacements=float(replacements),
        retention=float(np.mean(retentions)),
        trace_checksums=tuple(checksums), session_points=points)


@dataclass
class MetricSummary:
    arm: str
    metric: str
    mean: float
    delta_vs_base: float
    delta_pct: float | None
    p_value: float | None


@dataclass
class AbReport:
    n_seeds: int
    per_seed: dict[str, list[ArmSeedResult]]
    summaries: list[MetricSummary]

    def summary(self, arm: str, metric: str) -> MetricSummary:
        for s in self.summaries:
            if s.arm == arm and s.metric == metric:
                return s
        raise KeyError((arm, metric))

    def render_text(self) -> str:
        lines = [f"three-arm experiment over {self.n_seeds} paired seeds",
                 "", f"{'metric':<18}{'arm':<7}{'mean':>14}{'delta':>14}"
                 f"{'delta%':>10}{'p':>12}"]
        for metric in METRICS:
            for arm in ARMS:
                s = self.summary(arm, metric)
                pct = "" if s.delta_pct is None else f"{s.delta_pct:+.2f}%"
                p = "" if s.p_value is None else f"{s.p_value:.3g}"
                lines.append(f"{metric:<18}{arm:<7}{s.mean:>14.3f}"
                             f"{s.delta_vs_base:>+14.3f}{pct:>10}{p:>12}")
        return "\n".join(lines) + "\n"

    def to_record_lines(self) -> list[str]:
        lines = [json.dumps({"kind": "ab_report", "n_seeds": self.n_seeds},
                            sort_keys=True)]
        for s in self.summaries:
            lines.append(json.dumps({
                "arm": s.arm, "metric": s.metric, "mean": s.mean,
                "delta_vs_base": s.delta_vs_base, "delta_pct": s.delta_pct,
                "p_value": s.p_value}, sort_keys=True))
        for arm, rows in self.per_seed.items():
            for r in rows:
                lines.append(json.dumps({
                    "arm": arm, "seed": r.seed, "watch_time": r.watch_time,
                    "poor_watch_time": r.poor_watch_time,
                    "choppy_rate": r.choppy_rate,
                    "replacements": r.replacements, "retention": r.retention},
                    sort_keys=True))
        return lines


def run_ab(exp: ExperimentConfig, gate: GateClassifier,
           ranker: MultiTaskRanker, n_seeds: int | None = None) -> AbReport:
    ab = exp.ab
    n = n_seeds if n_seeds is not None else ab.n_seeds
    per_seed: dict[str, list[ArmSeedResult]] = {arm: [] for arm in ARMS}
    for i in range(n):
        seed = ab.base_seed + i
        for arm in ARMS:
            per_seed[arm].append(simulate_arm(exp, seed, arm, gate, ranker))
        base_sums = per_seed["base"][-1].trace_checksums
        for arm in ("gate", "full"):
            if per_seed[arm][-1].trace_checksums != base_sums:
                raise RuntimeError(
                    f"paired design broken: arm {arm} consumed different "
                    f"traces than base at seed {seed}")

    summaries = []
    for metric in METRICS:
        base_vals = np.array([getattr(r, metric) for r in per_seed["base"]])
        for arm in ARMS:
            vals = np.array([getattr(r, metric) for r in per_seed[arm]])
            delta = vals - base_vals
            if arm == "base":
                p = None
                pct = None
            else:
                if np.allclose(delta, 0.0):
                    p = 1.0
                else:
                    p = float(stats.ttest_rel(vals, base_vals).pvalue)
                base_mean = float(base_vals.mean())
                pct = (float(delta.mean()) / base_mean * 100.0
                       if abs(base_mean) > 1e-12 else None)
            summaries.append(MetricSummary(
                arm=arm, metric=metric, mean=float(vals.mean()),
                delta_vs_base=float(delta.mean()), delta_pct=pct, p_value=p))
    return AbReport(n_seeds=n, per_seed=per_seed, summaries=summaries)


def watch_time_curve(points: list[tuple[float, float]],
                     bucket_width: float = 0.025,
                     min_sessions: int = 20) -> list[tuple[float, float, int]]:
    """Mean session watch time bucketed by session choppy rate.

    Buckets are centered on multiples of `bucket_width`; sparse buckets are
    dropped so the curve reflects population behaviour, not stragglers.
    """
    buckets: dict[int, list[float]] = {}
    for rate, watch in points:
        buckets.setdefault(round(rate / bucket_width), []).append(watch)
    out = []
    for key in sorted(buckets):
        vals = buckets[key]
        if len(vals) >= min_sessions:
            out.append((key * bucket_width, float(np.mean(vals)), len(vals)))
    return out


def curve_csv_lines(curve: list[tuple[float, float, int]]) -> list[str]:
    lines = ["choppy_rate,mean_watch_time_s,sessions"]
    for rate, watch, n in curve:
        lines.append(f"{rate:.4f},{watch:.3f},{n}")
    return lines
