"""Monte Carlo hitting and exit times, and recurrence classification.

Hits are detected at step boundaries only.  Verdicts are Monte Carlo
evidence; null recurrence is never claimed.
"""

from dataclasses import dataclass, field
import io
import math

import numpy as np

from .model import _check_a2, sample_ball
from .simulate import Lanes, SimConfig

PR_HIT = 0.999
PR_STABILITY = 0.05


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def distance(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(self.center), axis=-1)

    def contains(self, x):
        """Closed ball."""
        return self.distance(x) <= self.radius

    def interior(self, x):
        return self.distance(x) < self.radius

    def label(self):
        return f"B({', '.join(f'{c:g}' for c in self.center)}; {self.radius:g})"


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(c) for c in np.atleast_1d(self.lower))
        hi = tuple(float(c) for c in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box needs lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def center(self):
        return tuple(0.5 * (a + b) for a, b in zip(self.lower, self.upper))

    def distance(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(self.center), axis=-1)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x > self.lower) & (x < self.upper), axis=-1)

    def label(self):
        return f"Box({list(self.lower)}, {list(self.upper)})"


@dataclass(frozen=True)
class TargetSet:
    """``cylinder`` is D x M; ``slice`` is D x {regime}."""

    domain: object
    kind: str = "cylinder"
    regime: int = None

    def __post_init__(self):
        if self.kind not in ("cylinder", "slice"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "slice" and self.regime is None:
            raise ValueError("a slice target needs a regime")

    def contains(self, x, i):
        inside = self.domain.contains(x)
        if self.kind == "slice":
            inside &= np.asarray(i) == self.regime
        return inside

    def label(self):
        if self.kind == "slice":
            return f"{self.domain.label()} x {{{self.regime}}}"
        return f"{self.domain.label()} x M"


@dataclass
class HittingStats:
    n_paths: int
    horizons: list
    hit_fraction: list
    censored_mean: list
    censored_se: list
    survival_t: np.ndarray
    survival_p: np.ndarray
    unhit_distance: list
    mean: float = math.nan
    se: float = math.nan
    complete: bool = False
    notes: list = field(default_factory=list)
    hit_times: np.ndarray = None
    increment_se: list = field(default_factory=list)

    def to_dict(self):
        def f(v):
            return v if math.isfinite(v) else str(v)
        return {
            "n_paths": self.n_paths, "horizons": list(self.horizons),
            "hit_fraction": list(self.hit_fraction),
            "censored_mean": list(self.censored_mean), "censored_se": list(self.censored_se),
            "increment_se": list(self.increment_se),
            "unhit_mean_distance": [f(v) for v in self.unhit_distance],
            "mean": f(self.mean), "se": f(self.se), "complete": self.complete,
            "notes": list(self.notes), "survival_csv": self.survival_csv(),
        }

    def survival_csv(self):
        out = io.StringIO()
        out.write("t,survival\n")
        for t, p in zip(self.survival_t, self.survival_p):
            out.write(f"{t!r},{p!r}\n")
        return out.getvalue()


def _summarize(times, horizons, distances, n_survival=64):
    """Censored statistics of first-passage times (inf = not hit)."""
    n = len(times)
    hit_fraction, cmean, cse = [], [], []
    for h in horizons:
        capped = np.minimum(times, h)
        hit_fraction.append(float(np.mean(times <= h)))
        cmean.append(float(capped.mean()))
        cse.append(float(capped.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
    grid = np.linspace(0.0, float(horizons[-1]), n_survival + 1)
    surv = np.array([np.mean(times > t) for t in grid])
    # paired SE of the censored-mean increment between consecutive horizons
    inc_se = []
    for a, b in zip(horizons[:-1], horizons[1:]):
        diff = np.minimum(times, b) - np.minimum(times, a)
        inc_se.append(float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
    return hit_fraction, cmean, cse, grid, surv, inc_se


def first_passage(spec, start, predicates, n_paths, horizons, cfg, distance_fns=None,
                  path_offset=0):
    """First step-boundary times at which each predicate(x, i) holds.

    Returns (times (T, n_paths) with inf when not reached, distances at each
    horizon of the still-unhit lanes (T, H) as means, terminal reasons).
    """
    x0, i0 = start
    horizons = [float(h) for h in horizons]
    if any(b <= a for a, b in zip(horizons[:-1], horizons[1:])) or horizons[0] <= 0:
        raise ValueError("horizons must be positive and increasing")
    dt = cfg.dt
    marks = [int(round(h / dt)) for h in horizons]
    total = marks[-1]
    if total > cfg.max_steps:
        raise ValueError(f"final horizon needs {total} steps, above max_steps {cfg.max_steps}")
    lanes = Lanes(spec, cfg, x0, i0, np.arange(path_offset, path_offset + n_paths))
    T = len(predicates)
    times = np.full((T, n_paths), np.inf)
    for k, pred in enumerate(predicates):
        times[k, pred(lanes.x, lanes.i)] = 0.0
    dist = np.full((T, len(horizons)), np.nan)
    mark_idx = 0
    step = 0
    while step < total:
        open_ = np.isinf(times).any(axis=0)
        lanes.alive &= open_
        if not lanes.alive.any():
            break
        lanes.step(dt)
        step += 1
        live = np.nonzero(lanes.alive)[0]
        xl, il = lanes.x[live], lanes.i[live]
        t = step * dt
        for k, pred in enumerate(predicates):
            fresh = live[np.isinf(times[k, live]) & pred(xl, il)]
            times[k, fresh] = t
        while mark_idx < len(marks) and step >= marks[mark_idx]:
            if distance_fns is not None:
                for k in range(T):
                    unhit = np.isinf(times[k])
                    if unhit.any():
                        dist[k, mark_idx] = float(np.mean(distance_fns[k](lanes.x[unhit])))
            mark_idx += 1
    # remaining marks when every lane finished early
    while mark_idx < len(marks):
        for k in range(T):
            if distance_fns is not None and np.isinf(times[k]).any():
                dist[k, mark_idx] = float(np.mean(distance_fns[k](lanes.x[np.isinf(times[k])])))
        mark_idx += 1
    return times, dist, lanes.reason.copy()


def estimate_hitting(spec, start, target, n_paths, horizons, cfg=None):
    """Censored hitting-time statistics of ``target`` from ``start = (x, i)``."""
    cfg = cfg or SimConfig()
    return estimate_hitting_many(spec, start, [target], n_paths, horizons, cfg)[0]


def estimate_hitting_many(spec, start, targets, n_paths, horizons, cfg):
    """One simulation shared by several targets."""
    x0, i0 = np.asarray(start[0], dtype=float), int(start[1])
    preds = [t.contains for t in targets]
    dists = [t.domain.distance for t in targets]
    times, dist, reasons = first_passage(spec, (x0, i0), preds, n_paths, horizons, cfg, dists)
    out = []
    for k, tgt in enumerate(targets):
        hf, cm, cse, grid, surv, inc = _summarize(times[k], horizons, None)
        notes = []
        if np.any(reasons == "left-envelope-ball"):
            notes.append(f"{int(np.sum(reasons == 'left-envelope-ball'))} paths left the envelope cap")
        out.append(HittingStats(n_paths, list(horizons), hf, cm, cse, grid, surv,
                                dist[k].tolist(), notes=notes, hit_times=times[k],
                                increment_se=inc))
    return out


def estimate_exit(spec, start, domain, n_paths, cfg=None, chunk_time=None):
    """E tau_D from ``start`` in D, with tau_D = inf{t >= 0: X(t) not in D}.

    Paths run until every one has exited or ``cfg.max_steps`` is reached;
    unexited paths are reported as anomalous.
    """
    cfg = cfg or SimConfig()
    x0, i0 = np.asarray(start[0], dtype=float), int(start[1])
    outside = ~domain.interior(x0[None])[0]
    if outside:
        return HittingStats(n_paths, [0.0], [1.0], [0.0], [0.0], np.array([0.0]),
                            np.array([0.0]), [math.nan], 0.0, 0.0, True,
                            ["start outside the open domain: tau = 0"], np.zeros(n_paths))
    lanes = Lanes(spec, cfg, x0, i0, np.arange(n_paths))
    times = np.full(n_paths, np.inf)
    step = 0
    while step < cfg.max_steps:
        lanes.alive &= np.isinf(times)
        if not lanes.alive.any():
            break
        lanes.step(cfg.dt)
        step += 1
        live = np.nonzero(lanes.alive)[0]
        out = live[~domain.interior(lanes.x[live])]
        times[out] = step * cfg.dt
    exited = np.isfinite(times)
    horizon = step * cfg.dt
    hf, cm, cse, grid, surv, _ = _summarize(times, [max(horizon, cfg.dt)], None)
    notes = []
    complete = bool(exited.all())
    if not complete:
        notes.append(f"{int((~exited).sum())} paths did not exit within max_steps; "
                     "numerically anomalous since exit times have finite mean")
    mean = float(times[exited].mean()) if complete else float(cm[0])
    se = float(times[exited].std(ddof=1) / math.sqrt(n_paths)) if complete and n_paths > 1 else float(cse[0])
    return HittingStats(n_paths, [horizon], hf, cm, cse, grid, surv, [math.nan], mean, se,
                        complete, notes, times)


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    verdict: str
    stats: dict
    pair_verdicts: dict
    cross_checks: dict
    conflict: tuple = None

    def to_dict(self):
        return {"verdict": self.verdict,
                "pair_verdicts": {k: v for k, v in self.pair_verdicts.items()},
                "cross_checks": self.cross_checks,
                "conflict": list(self.conflict) if self.conflict else None,
                "stats": {k: s.to_dict() for k, s in self.stats.items()}}


def pair_verdict(stats, hit=PR_HIT, stability=PR_STABILITY):
    """Verdict for one (start, target) pair from its horizon ladder."""
    hf = np.asarray(stats.hit_fraction)
    cm = np.asarray(stats.censored_mean)
    if len(hf) < 3:
        raise ValueError("classification needs at least three horizons")
    # a doubling is stable when the censored mean moves by at most 5%, or by
    # less than 3 SE of the paired increment (a lone heavy-tail straggler)
    delta = np.abs(np.diff(cm[-3:]))
    inc_se = np.asarray(stats.increment_se[-2:]) if len(stats.increment_se) >= 2 else np.zeros(2)
    stable = bool(np.all((delta <= stability * cm[-3:-1]) | (delta <= 3 * inc_se)))
    if hf[-1] >= hit:
        return "positive-recurrent-evidence" if stable else "recurrent-evidence"
    # plateau below one: the miss fraction shrinks by under 10% over the
    # last two doublings while the unhit paths drift away
    miss = 1.0 - hf[-3:]
    plateau = bool(miss[-1] > 0 and miss[0] - miss[-1] <= 0.1 * miss[0])
    dist = np.asarray(stats.unhit_distance[-3:], dtype=float)
    growing = bool(np.all(np.isfinite(dist)) and np.all(np.diff(dist) > 0))
    if plateau and growing:
        return "transience-suspected"
    return "inconclusive"


def default_horizons(spec, starts, domains, levels=4):
    """Doubling ladder from 8 diameter^2 / kappa_0, diameter of the target domains."""
    diam = max(2.0 * d.radius if isinstance(d, Ball)
               else float(np.linalg.norm(np.subtract(d.upper, d.lower))) for d in domains)
    span = max(float(np.linalg.norm(np.asarray(s[0], dtype=float))) for s in starts)
    rng = np.random.default_rng(0)
    pts = sample_ball(rng, 200, spec.dim, max(span, 1.0))
    x = np.repeat(pts, spec.num_regimes, axis=0)
    i = np.tile(np.arange(1, spec.num_regimes + 1), len(pts))
    kappa0 = max(_check_a2(spec, x, i).margin, 1e-6)
    h0 = 8.0 * diam ** 2 / kappa0
    return [h0 * 2 ** k for k in range(levels)]


def classify(spec, probe_starts, target_domains, n_paths, cfg=None, horizons=None):
    """Hitting evidence for every (start, cylinder or slice target) pair.

    Domain and regime independence of recurrence make all pairs agree in
    theory; disagreement is reported as inconclusive with the first
    conflicting pair, never resolved.
    """
    cfg = cfg or SimConfig()
    if len(target_domains) < 2:
        raise ValueError("classification needs at least two target domains")
    if len(probe_starts) < 2:
        raise ValueError("classification needs at least two probe starts")
    if spec.num_regimes >= 2 and len({int(s[1]) for s in probe_starts}) < 2:
        raise ValueError("probe at least two regimes when m >= 2")
    horizons = horizons or default_horizons(spec, probe_starts, target_domains)
    targets = []
    for dom in target_domains:
        targets.append(TargetSet(dom, "cylinder"))
        for l in spec.regimes:
            targets.append(TargetSet(dom, "slice", l))
    stats, verdicts = {}, {}
    for s_idx, start in enumerate(probe_starts):
        results = estimate_hitting_many(spec, start, targets, n_paths, horizons,
                                        _offset_cfg(cfg, s_idx))
        for tgt, st in zip(targets, results):
            key = f"start{s_idx}:{tgt.label()}"
            stats[key] = st
            verdicts[key] = pair_verdict(st)

    cross = {"slice_dominated_by_cylinder": _slice_dominated(stats, probe_starts, target_domains, spec)}
    keys = list(verdicts)
    first = verdicts[keys[0]]
    for k in keys[1:]:
        if verdicts[k] != first:
            return Classification("inconclusive", stats, verdicts, cross, (keys[0], k))
    return Classification(first, stats, verdicts, cross, None)


def _offset_cfg(cfg, k):
    # different probe starts use disjoint streams
    return SimConfig(cfg.dt, cfg.small_jump_cutoff, cfg.small_jump_mode, cfg.envelope_index,
                     cfg.envelope_cap, cfg.max_steps, (cfg.seed + 0x9E3779B97F4A7C15 * (k + 1)) % 2 ** 64)


def _slice_dominated(stats, starts, domains, spec):
    ok = True
    for s_idx in range(len(starts)):
        for dom in domains:
            cyl = stats[f"start{s_idx}:{TargetSet(dom).label()}"]
            for l in spec.regimes:
                sl = stats[f"start{s_idx}:{TargetSet(dom, 'slice', l).label()}"]
                ok &= all(a <= b + 1e-15 for a, b in zip(sl.hit_fraction, cyl.hit_fraction))
    return bool(ok)


__all__ = [
    "Ball", "Box", "TargetSet", "HittingStats", "Classification", "estimate_hitting",
    "estimate_hitting_many", "estimate_exit", "classify", "pair_verdict", "default_horizons",
    "first_passage",
]
