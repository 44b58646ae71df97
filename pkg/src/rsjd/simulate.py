"""Euler-Maruyama simulation with thinned jumps and uniformized switching.

One step of length h at (x, i), all rates evaluated at the pre-step state:

1. diffusion:  b h + sigma sqrt(h) xi
2. jumps:      compensator drift -h int_{eps<=|z|<1} z pi_i(x, z) dz, an optional
               Gaussian for the jumps below eps, and a Poisson number of
               envelope proposals with |z| >= eps accepted with pi / envelope
3. switching:  with probability qbar h propose, move to j != i with
               probability q_ij(x) / qbar

Every random number is a pure function of (seed, path, step, slot) so a
path does not depend on how many others are simulated alongside it.
"""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np
from scipy.special import ndtri

from .jumps import RadialEnvelope
from .quadrature import shell_integral
from .rng import CounterStream, poisson_inverse


class SimulationError(RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EnvelopeViolation(SimulationError):
    """A thinning ratio above one: the envelope does not dominate the kernel."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    small_jump_cutoff: float = 0.05
    small_jump_mode: str = "gaussian-correct"
    envelope_index: int = 1
    envelope_cap: int = 2 ** 20
    max_steps: int = 10 ** 8
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("SimConfig invariant violated: dt > 0")
        if not 0 < self.small_jump_cutoff <= 1:
            raise ValueError("SimConfig invariant violated: 0 < ε ≤ 1 (small_jump_cutoff must lie in (0, 1])")
        if self.small_jump_mode not in ("truncate", "gaussian-correct"):
            raise ValueError(f"unknown small_jump_mode {self.small_jump_mode!r}")
        if self.envelope_index < 1 or self.envelope_cap < self.envelope_index:
            raise ValueError("need 1 <= envelope_index <= envelope_cap")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    regimes: np.ndarray
    switch_events: list = field(default_factory=list)
    jump_events: list = field(default_factory=list)
    terminal_reason: str = "horizon"
    seed: int = 0
    path_index: int = 0

    def event_flags(self):
        """0 none, 1 jump, 2 switch, 3 both, per recorded time (event at the step's end)."""
        flags = np.zeros(len(self.times), dtype=int)
        for t, _ in self.jump_events:
            flags[np.searchsorted(self.times, t)] |= 1
        for t, _, _ in self.switch_events:
            flags[np.searchsorted(self.times, t)] |= 2
        return flags

    def to_csv(self, handle=None):
        own = handle is None
        handle = io.StringIO() if own else handle
        d = self.states.shape[1]
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["t"] + [f"x_{k + 1}" for k in range(d)] + ["regime", "event_flag"])
        flags = self.event_flags()
        for k in range(len(self.times)):
            w.writerow([repr(float(self.times[k]))] + [repr(float(v)) for v in self.states[k]]
                       + [int(self.regimes[k]), int(flags[k])])
        return handle.getvalue() if own else None


def _chol(cov):
    # small-jump covariances are PSD; tiny jitter keeps Cholesky happy at 0
    d = cov.shape[-1]
    scale = np.maximum(np.trace(cov, axis1=-2, axis2=-1), 1e-300)[..., None, None]
    return np.linalg.cholesky(cov + 1e-15 * scale * np.eye(d))


class Lanes:
    """A batch of independent paths advanced in lockstep.

    ``paths`` are the global path indices used by the random streams, so a
    lane evolves identically whatever batch it is in.
    """

    def __init__(self, spec, cfg, x0, i0, paths):
        self.spec = spec
        self.cfg = cfg
        self.stream = CounterStream(cfg.seed)
        paths = np.asarray(paths, dtype=np.int64)
        L = len(paths)
        self.paths = paths
        self._lane_key = self.stream.lane_key(paths)
        self._pos = np.zeros(len(paths), dtype=np.int64)
        self.x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (L, spec.dim)))
        self.i = np.array(np.broadcast_to(np.asarray(i0, dtype=int), (L,)))
        if np.any((self.i < 1) | (self.i > spec.num_regimes)):
            raise ValueError("initial regime outside 1..m")
        self.n = np.full(L, cfg.envelope_index, dtype=np.int64)
        self._grow_envelope(np.arange(L))
        self.alive = np.ones(L, dtype=bool)
        self.reason = np.array(["horizon"] * L, dtype=object)
        self.t = 0.0
        self.step_index = 0
        d = spec.dim
        self._slot_diff = np.arange(d)
        self._slot_small = d + np.arange(d)
        self._slot_count = 2 * d
        self._slot_switch = 2 * d + 1
        self._slot_target = 2 * d + 2
        self._slot_prop0 = 2 * d + 3
        self._prop_width = d + 2
        if spec.has_jumps and not isinstance(spec.jump_envelope, RadialEnvelope):
            raise NotImplementedError("simulation needs a RadialEnvelope to draw proposals")
        if spec.q_bound * cfg.dt > 1:
            raise ValueError(f"uniformization needs qbar * dt <= 1, got {spec.q_bound * cfg.dt}")

    # -- helpers -----------------------------------------------------------

    def _grow_envelope(self, idx):
        r = np.linalg.norm(self.x[idx], axis=-1)
        n = self.n[idx]
        while np.any(r >= n):
            n = np.where(r >= n, 2 * n, n)
        self.n[idx] = n

    # variates for lanes stepped in the current step; same values as
    # stream.uniform(paths, step_index, slot), with the key chain cached
    def _uniform(self, lanes, slot):
        return CounterStream.to_uniform(CounterStream.slot_bits(self._step_key[self._pos[lanes]], slot))

    def _normals(self, lanes, slots):
        keys = self._step_key[self._pos[lanes]][:, None]
        return ndtri(CounterStream.to_uniform(CounterStream.slot_bits(keys, slots[None, :])))

    def _jump_moments(self, x, i):
        """Compensator over [eps, 1) and covariance below eps for each lane."""
        kern = self.spec.jump_density
        eps = self.cfg.small_jump_cutoff
        if hasattr(kern, "compensator") and hasattr(kern, "small_cov"):
            comp = kern.compensator(x, i, eps, 1.0)
            cov = kern.small_cov(x, i, eps) if self.cfg.small_jump_mode == "gaussian-correct" else None
            return np.asarray(comp, dtype=float), cov
        d = self.spec.dim
        comp = np.zeros_like(x)
        cov = np.zeros(x.shape + (d,)) if self.cfg.small_jump_mode == "gaussian-correct" else None
        for k in range(len(x)):
            xk, ik = x[k], int(i[k])

            def dens(z):
                return self.spec.jump_density(np.broadcast_to(xk, z.shape), ik, z)
            for c in range(d):
                comp[k, c] = shell_integral(lambda z: z[..., c] * dens(z), d, eps, 1.0,
                                            1e-12, 1e-8).value
            if cov is not None:
                for a in range(d):
                    for b in range(a, d):
                        v = shell_integral(lambda z: z[..., a] * z[..., b] * dens(z), d, 1e-30,
                                           eps, 1e-14, 1e-8).value
                        cov[k, a, b] = cov[k, b, a] = v
        return comp, cov

    # -- stepping ----------------------------------------------------------

    def step(self, h, record=False):
        """Advance every live lane by h.  Returns (jumps, switches) when recording."""
        spec, cfg = self.spec, self.cfg
        lanes = np.nonzero(self.alive)[0]
        jumps, switches = [], []
        if lanes.size == 0:
            self.t += h
            self.step_index += 1
            return jumps, switches
        x = self.x[lanes]
        i = self.i[lanes]
        d = spec.dim
        sq = math.sqrt(h)
        self._pos[lanes] = np.arange(lanes.size)
        self._step_key = CounterStream.step_key(self._lane_key[lanes], self.step_index)

        b = np.asarray(spec.drift(x, i), dtype=float)
        sig = np.asarray(spec.diffusion(x, i), dtype=float)
        xi = self._normals(lanes, self._slot_diff)
        dx = b * h + sq * np.sum(sig * xi[:, None, :], axis=-1)

        if spec.has_jumps:
            dx += self._jump_increment(lanes, x, i, h, sq, jumps if record else None)

        # switching from the pre-step state
        new_i = i.copy()
        if spec.num_regimes > 1:
            propose = self._uniform(lanes, self._slot_switch) < spec.q_bound * h
        else:
            propose = np.zeros(lanes.size, dtype=bool)
        if np.any(propose):
            pl = np.nonzero(propose)[0]
            q = np.asarray(spec.q_matrix(x[pl]), dtype=float)
            rows = q[np.arange(len(pl)), i[pl] - 1].copy()
            rows[np.arange(len(pl)), i[pl] - 1] = 0.0
            cum = np.cumsum(rows / spec.q_bound, axis=-1)
            if np.any(cum[:, -1] > 1.0 + 1e-12):
                k = int(np.argmax(cum[:, -1]))
                raise SimulationError(
                    f"q_bound {spec.q_bound} below exit rate {cum[k, -1] * spec.q_bound} "
                    f"at x={x[pl[k]].tolist()}, regime {int(i[pl[k]])}",
                    witness={"x": x[pl[k]].tolist(), "regime": int(i[pl[k]])})
            v = self._uniform(lanes[pl], self._slot_target)
            target = np.sum(v[:, None] >= cum, axis=-1)  # index of first cum > v
            moved = target < spec.num_regimes
            new_i[pl[moved]] = target[moved] + 1
            if record:
                for k in np.nonzero(moved)[0]:
                    switches.append((lanes[pl[k]], int(i[pl[k]]), int(target[k] + 1)))

        x_new = x + dx
        if not np.isfinite(x_new).all():
            k = int(np.argmax(~np.isfinite(x_new).all(axis=-1)))
            raise SimulationError(f"non-finite state after step from x={x[k].tolist()}, "
                                  f"regime {int(i[k])}", witness={"x": x[k].tolist()})
        self.x[lanes] = x_new
        self.i[lanes] = new_i
        self.t += h
        self.step_index += 1
        if spec.has_jumps:
            self._grow_envelope(lanes)
            over = lanes[self.n[lanes] > cfg.envelope_cap]
            if over.size:
                self.alive[over] = False
                self.reason[over] = "left-envelope-ball"
        return jumps, switches

    def _jump_increment(self, lanes, x, i, h, sq, record):
        spec, cfg = self.spec, self.cfg
        env = spec.jump_envelope
        eps = cfg.small_jump_cutoff
        d = spec.dim
        comp, cov = self._jump_moments(x, i)
        inc = -comp * h
        if cov is not None:
            eta = self._normals(lanes, self._slot_small)
            inc += sq * np.sum(_chol(cov) * eta[:, None, :], axis=-1)

        n = self.n[lanes]
        rate = np.asarray(env.mass_beyond(eps, n), dtype=float)
        counts = poisson_inverse(self._uniform(lanes, self._slot_count), rate * h)
        total = int(counts.sum())
        if total == 0:
            return inc
        # every proposal of this step at once: lane index and proposal number j
        owner = np.repeat(np.arange(lanes.size), counts)
        j = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        base = (self._slot_prop0 + j * self._prop_width).astype(np.uint64)
        keys = self._step_key[owner]
        ur = CounterStream.to_uniform(CounterStream.slot_bits(keys, base))
        ua = CounterStream.to_uniform(CounterStream.slot_bits(keys, base + np.uint64(1)))
        if d == 1:
            noise = CounterStream.to_uniform(CounterStream.slot_bits(keys, base + np.uint64(2)))[:, None]
        else:
            slots = base[:, None] + np.uint64(2) + np.arange(d, dtype=np.uint64)
            noise = ndtri(CounterStream.to_uniform(CounterStream.slot_bits(keys[:, None], slots)))
        z = env.sample(ur, noise, eps)
        xa, ia, na = x[owner], i[owner], n[owner]
        dens = np.asarray(spec.jump_density(xa, ia, z), dtype=float)
        envv = np.asarray(env(z, na), dtype=float)
        ratio = np.where(envv > 0, dens / np.where(envv > 0, envv, 1.0),
                         np.where(dens > 0, np.inf, 0.0))
        if np.any(ratio > 1.0 + 1e-12):
            k = int(np.argmax(ratio))
            raise EnvelopeViolation(
                f"thinning ratio {ratio[k]:.6g} > 1 at x={xa[k].tolist()}, regime {int(ia[k])}, "
                f"z={z[k].tolist()}, envelope index {int(na[k])}",
                witness={"x": xa[k].tolist(), "regime": int(ia[k]), "z": z[k].tolist(),
                         "n": int(na[k]), "ratio": float(ratio[k])})
        acc = ua < ratio
        np.add.at(inc, owner[acc], z[acc])
        if record is not None:
            for k in np.nonzero(acc)[0]:
                record.append((lanes[owner[k]], z[k].copy()))
        return inc


def _grid(horizon, dt, max_steps):
    """Step sizes covering [0, horizon], the last one possibly shorter."""
    n = int(math.ceil(horizon / dt - 1e-9))
    steps = np.full(n, dt)
    steps[-1] = horizon - dt * (n - 1)
    if steps[-1] <= 1e-12 * dt:
        steps = steps[:-1]
    truncated = len(steps) > max_steps
    return steps[:max_steps], truncated


def _run_batch(spec, x0, i0, horizon, cfg, paths):
    steps, truncated = _grid(horizon, cfg.dt, cfg.max_steps)
    lanes = Lanes(spec, cfg, x0, i0, paths)
    L = len(paths)
    N = len(steps)
    states = np.empty((N + 1, L, spec.dim))
    regimes = np.empty((N + 1, L), dtype=int)
    times = np.concatenate([[0.0], np.cumsum(steps)])
    states[0] = lanes.x
    regimes[0] = lanes.i
    alive_until = np.full(L, N, dtype=int)
    jumps = [[] for _ in range(L)]
    switches = [[] for _ in range(L)]
    for k, h in enumerate(steps):
        was_alive = lanes.alive.copy()
        jev, sev = lanes.step(h, record=True)
        for lane, z in jev:
            jumps[lane].append((times[k + 1], z))
        for lane, a, b in sev:
            switches[lane].append((times[k + 1], a, b))
        states[k + 1] = lanes.x
        regimes[k + 1] = lanes.i
        died = was_alive & ~lanes.alive
        alive_until[died] = k + 1
    records = []
    for lane in range(L):
        end = alive_until[lane] + 1
        reason = lanes.reason[lane]
        if reason == "horizon" and truncated:
            reason = "max_steps"
        records.append(PathRecord(times[:end].copy(), states[:end, lane].copy(),
                                  regimes[:end, lane].copy(), switches[lane], jumps[lane],
                                  reason, cfg.seed, int(paths[lane])))
    return records


def simulate_path(spec, x0, i0, horizon, cfg=None, path_index=0):
    """One trajectory on [0, horizon]; replaying with the same inputs is bit-exact."""
    cfg = cfg or SimConfig()
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return _run_batch(spec, x0, i0, horizon, cfg, [path_index])[0]


@dataclass
class EnsembleResult:
    values: list
    n_paths: int
    seed: int

    def mean(self):
        return np.mean(np.asarray(self.values, dtype=float), axis=0)

    def standard_error(self):
        v = np.asarray(self.values, dtype=float)
        return np.std(v, axis=0, ddof=1) / math.sqrt(len(v)) if len(v) > 1 else np.zeros_like(v[0])


def simulate_ensemble(spec, x0, i0, horizon, cfg, n_paths, summarizer, batch_size=None):
    """Apply ``summarizer(PathRecord)`` to ``n_paths`` independent paths.

    Path k uses the stream (seed, k); batching only trades memory for speed
    and never changes results.  Values are returned in path-index order.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    steps = int(math.ceil(horizon / cfg.dt))
    if batch_size is None:
        batch_size = max(1, min(n_paths, int(2e7 // (max(steps, 1) * (spec.dim + 1)))))
    values = []
    for start in range(0, n_paths, batch_size):
        paths = np.arange(start, min(n_paths, start + batch_size))
        try:
            records = _run_batch(spec, x0, i0, horizon, cfg, paths)
        except SimulationError as exc:
            raise SimulationError(f"ensemble aborted in batch starting at path {start} "
                                  f"(seed {cfg.seed}): {exc}", witness=exc.witness) from exc
        values.extend(summarizer(r) for r in records)
    return EnsembleResult(values, n_paths, cfg.seed)


def terminal_values(spec, x0, i0, horizon, cfg, n_paths, paths=None):
    """States and regimes at ``horizon`` for many paths, without storing paths."""
    steps, truncated = _grid(horizon, cfg.dt, cfg.max_steps)
    if truncated:
        raise ValueError("horizon needs more than max_steps steps")
    paths = np.arange(n_paths) if paths is None else np.asarray(paths)
    lanes = Lanes(spec, cfg, x0, i0, paths)
    for h in steps:
        lanes.step(h)
    return lanes.x.copy(), lanes.i.copy(), lanes.alive.copy()


__all__ = [
    "SimConfig", "PathRecord", "Lanes", "SimulationError", "EnvelopeViolation",
    "simulate_path", "simulate_ensemble", "terminal_values", "EnsembleResult",
]
