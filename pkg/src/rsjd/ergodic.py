"""Cycle decomposition of trajectories and the invariant-measure estimate.

A cycle starts at an entry into closure(E) x {l}, runs until the first
exit from D and ends at the next entry into closure(E) x {l}.  The
invariant measure is the ratio of summed per-cycle occupation to summed
cycle length.
"""

from dataclasses import dataclass, field
import io
import math
import warnings

import numpy as np

from .model import sample_ball
from .simulate import Lanes, SimConfig
from .stopping import Ball

BOOTSTRAP_REPLICATES = 200
OVERFLOW_WARN = 0.01


@dataclass(frozen=True)
class BinGrid:
    """Uniform grid on the box [lower, upper]^d plus one overflow bin per regime."""

    lower: float
    upper: float
    bins: int
    dim: int
    num_regimes: int

    @property
    def width(self):
        return (self.upper - self.lower) / self.bins

    @property
    def cells(self):
        return self.bins ** self.dim

    @property
    def size(self):
        return self.num_regimes * (self.cells + 1)

    def index(self, x, i):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        k = np.floor((x - self.lower) / self.width).astype(np.int64)
        inside = np.all((k >= 0) & (k < self.bins), axis=-1)
        cell = np.zeros(len(x), dtype=np.int64)
        for a in range(self.dim):
            cell = cell * self.bins + np.clip(k[:, a], 0, self.bins - 1)
        reg = np.asarray(i, dtype=np.int64) - 1
        return np.where(inside, reg * self.cells + cell, self.num_regimes * self.cells + reg)

    def centers(self):
        """Cell centers, shape (cells, d), in flattened cell order."""
        c = self.lower + self.width * (np.arange(self.bins) + 0.5)
        mesh = np.meshgrid(*([c] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def subpoints(self, sub):
        """sub^d points per cell at the midpoints of a regular subgrid; (cells, sub^d, d)."""
        off = self.width * ((np.arange(sub) + 0.5) / sub - 0.5)
        mesh = np.meshgrid(*([off] * self.dim), indexing="ij")
        offs = np.stack([m.ravel() for m in mesh], axis=-1)
        return self.centers()[:, None, :] + offs[None, :, :]

    def covers(self, ball):
        c = np.asarray(ball.center, dtype=float)
        return bool(np.all(c - ball.radius >= self.lower) and np.all(c + ball.radius <= self.upper))


def default_grid(spec, D):
    """B(0, 4 radius(D)) covered with 64 bins per axis (32 in 3-d)."""
    half = 4.0 * D.radius + float(np.max(np.abs(D.center)))
    bins = 32 if spec.dim == 3 else 64
    return BinGrid(-half, half, bins, spec.dim, spec.num_regimes)


@dataclass(frozen=True)
class CycleConfig:
    E: Ball
    D: Ball
    l: int
    n_cycles: int
    warmup_cycles: int = 10
    cfg: SimConfig = field(default_factory=SimConfig)
    chains: int = 16
    grid: BinGrid = None

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("E must lie strictly inside D (margin > 0)")
        if self.n_cycles < 1 or self.warmup_cycles < 0 or self.chains < 1:
            raise ValueError("need n_cycles >= 1, warmup_cycles >= 0, chains >= 1")

    @property
    def margin(self):
        gap = float(np.linalg.norm(np.subtract(self.E.center, self.D.center)))
        return self.D.radius - gap - self.E.radius


@dataclass
class CycleEnsemble:
    grid: BinGrid
    starts: np.ndarray
    lengths: np.ndarray
    occupation: np.ndarray
    anchor_occupation: np.ndarray
    chain: np.ndarray
    index: np.ndarray
    dt: float
    seed: int
    aborted: bool = False
    notes: list = field(default_factory=list)

    @property
    def n_cycles(self):
        return len(self.lengths)

    def chain_order(self):
        """Cycle positions sorted by chain, then by time within the chain."""
        return np.lexsort((self.index, self.chain))


def _max_trace(spec, D, samples=256):
    rng = np.random.default_rng(0)
    pts = np.asarray(D.center) + sample_ball(rng, samples, spec.dim, D.radius)
    best = 0.0
    for reg in spec.regimes:
        cov = spec.covariance(pts, np.full(samples, reg))
        best = max(best, float(np.max(np.trace(cov, axis1=-2, axis2=-1))))
    return best


def run_cycles(spec, cc):
    """Cycles of ``cc.chains`` independent trajectories, pooled in round-robin order."""
    cfg = cc.cfg
    guard = 2.0 * math.sqrt(cfg.dt * _max_trace(spec, cc.D))
    if cc.margin <= guard:
        raise ValueError(f"margin between E and D ({cc.margin:.4g}) must exceed "
                         f"2 sqrt(dt tr a) = {guard:.4g}")
    if not 1 <= cc.l <= spec.num_regimes:
        raise ValueError(f"anchor regime {cc.l} outside 1..{spec.num_regimes}")
    grid = cc.grid or default_grid(spec, cc.D)
    L = cc.chains
    quota = cc.warmup_cycles + math.ceil(cc.n_cycles / L)
    lanes = Lanes(spec, cfg, np.asarray(cc.E.center, dtype=float), cc.l, np.arange(L))
    E_c, E_r = np.asarray(cc.E.center), cc.E.radius
    D_c, D_r = np.asarray(cc.D.center), cc.D.radius

    hist = np.zeros((L, grid.size))
    anchor = np.zeros(L)
    exited = np.zeros(L, dtype=bool)
    begin = np.zeros(L, dtype=np.int64)
    start_pt = lanes.x.copy()
    done = np.zeros(L, dtype=np.int64)
    cycles = [[] for _ in range(L)]
    aborted, notes = False, []
    dt = cfg.dt
    step = 0
    while True:
        active = lanes.alive & (done < quota)
        if not active.any():
            break
        lanes.alive &= active
        idx = np.nonzero(lanes.alive)[0]
        x, i = lanes.x[idx], lanes.i[idx]
        # left-point occupation of the current step
        np.add.at(hist, (idx, grid.index(x, i)), dt)
        in_anchor = (np.linalg.norm(x - E_c, axis=-1) <= E_r) & (i == cc.l)
        anchor[idx[in_anchor]] += dt
        lanes.step(dt)
        step += 1
        xn, inew = lanes.x[idx], lanes.i[idx]
        out = np.linalg.norm(xn - D_c, axis=-1) >= D_r
        exited[idx[out]] = True
        back = exited[idx] & (np.linalg.norm(xn - E_c, axis=-1) <= E_r) & (inew == cc.l)
        for k in idx[back]:
            cycles[k].append((start_pt[k].copy(), (step - begin[k]) * dt, hist[k].copy(), anchor[k]))
            done[k] += 1
            hist[k] = 0.0
            anchor[k] = 0.0
            exited[k] = False
            begin[k] = step
            start_pt[k] = lanes.x[k]
        too_long = idx[(step - begin[idx]) > cfg.max_steps]
        if too_long.size:
            aborted = True
            notes.append(f"a cycle exceeded max_steps={cfg.max_steps} on chain {int(too_long[0])}; "
                         "positive recurrence in doubt or max_steps too small")
            break
    left = np.nonzero(lanes.reason == "left-envelope-ball")[0]
    if left.size:
        aborted = True
        notes.append(f"{left.size} chains left the envelope cap")

    # drop warmup per chain, then interleave chains: cycle j of chain c sorts by (j, c)
    kept = []
    for c in range(L):
        for j, cyc in enumerate(cycles[c][cc.warmup_cycles:]):
            kept.append((j, c, cyc))
    kept.sort(key=lambda t: (t[0], t[1]))
    kept = kept[:cc.n_cycles]
    if kept:
        starts = np.array([k[2][0] for k in kept])
        lengths = np.array([k[2][1] for k in kept])
        occ = np.array([k[2][2] for k in kept])
        anc = np.array([k[2][3] for k in kept])
        chain = np.array([k[1] for k in kept])
        index = np.array([k[0] for k in kept])
    else:
        starts = np.zeros((0, spec.dim))
        lengths = np.zeros(0)
        occ = np.zeros((0, grid.size))
        anc = np.zeros(0)
        chain = np.zeros(0, dtype=np.int64)
        index = np.zeros(0, dtype=np.int64)
    if len(kept) < cc.n_cycles and not aborted:
        aborted = True
        notes.append(f"only {len(kept)} of {cc.n_cycles} cycles completed")
    return CycleEnsemble(grid, starts, lengths, occ, anc, chain, index, dt, cfg.seed, aborted, notes)


@dataclass
class InvariantEstimate:
    grid: BinGrid
    weights: np.ndarray
    se: np.ndarray
    replicates: np.ndarray
    n_cycles: int
    notes: list = field(default_factory=list)

    @property
    def total_mass(self):
        return float(self.weights.sum())

    @property
    def overflow(self):
        g = self.grid
        return self.weights[g.num_regimes * g.cells:]

    def cell_weights(self):
        """Weights on the grid cells, shape (m, cells)."""
        g = self.grid
        return self.weights[:g.num_regimes * g.cells].reshape(g.num_regimes, g.cells)

    def regime_marginal(self):
        g = self.grid
        def marg(w):
            cells = w[..., :g.num_regimes * g.cells].reshape(w.shape[:-1] + (g.num_regimes, g.cells))
            return cells.sum(axis=-1) + w[..., g.num_regimes * g.cells:]
        return marg(self.weights), marg(self.replicates).std(axis=0, ddof=1)

    def _bin_means(self, g, sub):
        """Average of g(x, i) over each cell (uniform within the cell); shape (size,)."""
        grid = self.grid
        pts = grid.subpoints(sub)
        flat = pts.reshape(-1, grid.dim)
        out = np.zeros(grid.size)
        for reg in range(1, grid.num_regimes + 1):
            vals = np.asarray(_evaluate(g, flat, reg), dtype=float).reshape(pts.shape[:2])
            out[(reg - 1) * grid.cells:reg * grid.cells] = vals.mean(axis=1)
        return out

    def integrate(self, g, sub=4):
        """(sum_i int g dnu, bootstrap SE); overflow mass contributes nothing."""
        means = self._bin_means(g, sub)
        val = float(self.weights @ means)
        return val, float((self.replicates @ means).std(ddof=1))

    def to_csv(self):
        g = self.grid
        centers = g.centers()
        out = io.StringIO()
        out.write(",".join([f"bin_center_{a + 1}" for a in range(g.dim)] + ["regime", "weight", "se"]) + "\n")
        w = self.cell_weights()
        s = self.se[:g.num_regimes * g.cells].reshape(g.num_regimes, g.cells)
        for reg in range(g.num_regimes):
            for k in range(g.cells):
                coords = ",".join(repr(float(c)) for c in centers[k])
                out.write(f"{coords},{reg + 1},{w[reg, k]!r},{s[reg, k]!r}\n")
        return out.getvalue()

    def to_dict(self):
        marg, marg_se = self.regime_marginal()
        return {"n_cycles": self.n_cycles, "total_mass": self.total_mass,
                "grid": {"lower": self.grid.lower, "upper": self.grid.upper,
                         "bins_per_axis": self.grid.bins, "dim": self.grid.dim},
                "overflow": self.overflow.tolist(),
                "regime_marginal": marg.tolist(), "regime_marginal_se": marg_se.tolist(),
                "notes": list(self.notes)}


def _evaluate(g, x, reg):
    if hasattr(g, "value"):
        return g.value(x, np.full(len(x), reg))
    return g(x, np.full(len(x), reg))


def estimate_invariant(cycles, replicates=BOOTSTRAP_REPLICATES, seed=None):
    """Ratio estimator with a seeded cycle-level bootstrap."""
    n = cycles.n_cycles
    if n < 2:
        raise ValueError(f"need at least 2 completed cycles, got {n}")
    occ, lengths = cycles.occupation, cycles.lengths
    weights = occ.sum(axis=0) / lengths.sum()
    weights = np.maximum(weights, 0.0)
    weights /= weights.sum()
    rng = np.random.default_rng(cycles.seed if seed is None else seed)
    draws = rng.integers(0, n, size=(replicates, n))
    counts = np.zeros((replicates, n))
    np.add.at(counts, (np.repeat(np.arange(replicates), n), draws.ravel()), 1.0)
    reps = (counts @ occ) / (counts @ lengths)[:, None]
    se = reps.std(axis=0, ddof=1)
    notes = list(cycles.notes)
    over = float(weights[cycles.grid.num_regimes * cycles.grid.cells:].sum())
    if over > OVERFLOW_WARN:
        msg = f"overflow mass {over:.3%} outside the bin grid exceeds 1%"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return InvariantEstimate(cycles.grid, weights, se, reps, n, notes)


def time_average(spec, g, start, T, n_paths, cfg=None, path_offset=0):
    """(1/T) int_0^T g(X, Lambda) dt per path (left-point rule); returns (mean, SE)."""
    cfg = cfg or SimConfig()
    growth = getattr(g, "growth", None)
    if growth is not None and not growth.is_bounded:
        raise ValueError("time_average needs a bounded test function")
    x0, i0 = np.asarray(start[0], dtype=float), int(start[1])
    lanes = Lanes(spec, cfg, x0, i0, np.arange(path_offset, path_offset + n_paths))
    n_steps = int(round(T / cfg.dt))
    if n_steps > cfg.max_steps:
        raise ValueError(f"T needs {n_steps} steps, above max_steps {cfg.max_steps}")
    acc = np.zeros(n_paths)
    for _ in range(n_steps):
        acc += np.asarray(_evaluate_lanes(g, lanes.x, lanes.i), dtype=float)
        lanes.step(cfg.dt)
    if not lanes.alive.all():
        raise RuntimeError("paths left the envelope cap during time averaging")
    avg = acc / n_steps
    se = float(avg.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    return float(avg.mean()), se


def _evaluate_lanes(g, x, i):
    return g.value(x, i) if hasattr(g, "value") else g(x, i)


def positivity_check(est, domains, regimes, sub=8):
    """Estimated mass of each ball x {regime}; passes when mass - 3 SE > 0."""
    grid = est.grid
    pts = grid.subpoints(sub)
    report = []
    for ball in domains:
        if not grid.covers(ball):
            for reg in regimes:
                report.append({"domain": ball.label(), "regime": int(reg), "status": "not-covered"})
            continue
        frac = np.mean(ball.contains(pts), axis=1)
        for reg in regimes:
            vec = np.zeros(grid.size)
            vec[(reg - 1) * grid.cells:reg * grid.cells] = frac
            mass = float(est.weights @ vec)
            se = float((est.replicates @ vec).std(ddof=1))
            report.append({"domain": ball.label(), "regime": int(reg), "mass": mass, "se": se,
                           "status": "positive" if mass - 3 * se > 0 else "not-established"})
    return report


def lag1_autocorrelation(values):
    v = np.asarray(values, dtype=float) - np.mean(values)
    return float((v[:-1] @ v[1:]) / (v @ v))


__all__ = [
    "BinGrid", "default_grid", "CycleConfig", "CycleEnsemble", "InvariantEstimate",
    "run_cycles", "estimate_invariant", "time_average", "positivity_check",
    "lag1_autocorrelation",
]
