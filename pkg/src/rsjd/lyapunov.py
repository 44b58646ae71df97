"""Grid checks of Lyapunov drift criteria.

All checks are evidence on a finite grid, never proofs; reports say
``holds-on-grid`` rather than ``holds``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .generator import QuadratureConfig, IntegrabilityError, apply_generator_grid
from .jumps import RadialEnvelope
from .model import jump_mass_outside, sample_ball, _check_a2
from .quadrature import fibonacci_sphere, shell_integral
from .testfunctions import builtin_lyapunov, shifted_power_first_coordinate

DEFAULT_DIRECTIONS = {1: 2, 2: 16, 3: 64}
GRID_CFG = QuadratureConfig(rel_tol=1e-6)
# the exit check only needs the sign of G V - gamma, which has a wide margin
EXIT_CFG = QuadratureConfig(rel_tol=1e-2, angular_order=64)


@dataclass
class CriterionReport:
    criterion: str
    status: str
    witness_radius: float
    margin: float
    grid: dict
    failures: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.status == "holds-on-grid"

    def to_dict(self):
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, dict):
                return {k: clean(u) for k, u in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(u) for u in v]
            return v
        return clean({"criterion": self.criterion, "status": self.status,
                      "witness_radius": self.witness_radius, "margin": self.margin,
                      "grid": self.grid, "failures": self.failures, "details": self.details})


def radial_grid(dim, r_min, r_max, radii=32, directions=None):
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    n_dir = DEFAULT_DIRECTIONS[dim] if directions is None else int(directions)
    rs = np.geomspace(r_min, r_max, int(radii))
    dirs = fibonacci_sphere(n_dir, dim)
    return rs, dirs


def _generator_on_grid(spec, V, rs, dirs, cfg):
    pts = (rs[:, None, None] * dirs[None]).reshape(-1, spec.dim)
    regimes = np.arange(1, spec.num_regimes + 1)
    vals = apply_generator_grid(spec, V, pts, regimes, cfg)
    vvals = np.asarray(V.value(pts[:, None, :], regimes), dtype=float)
    shape = (len(rs), len(dirs), len(regimes))
    return pts.reshape(len(rs), len(dirs), -1), vals.reshape(shape), vvals.reshape(shape)


def _witness_radius(ok_shell):
    """Index of the first shell from which every later shell is fine, or None."""
    if not ok_shell[-1]:
        return None
    bad = np.nonzero(~ok_shell)[0]
    return 0 if bad.size == 0 else int(bad[-1]) + 1


def _classify(ok_shell):
    k = _witness_radius(ok_shell)
    if k is None:
        return "fails", None
    if k == len(ok_shell) - 1 and len(ok_shell) > 1:
        return "inconclusive", k
    return "holds-on-grid", k


def _failures(pts, vals, bad, limit=50):
    out = []
    for idx in zip(*np.nonzero(bad)):
        r, dj, ij = idx
        out.append({"x": pts[r, dj].tolist(), "regime": int(ij + 1), "value": float(vals[idx])})
        if len(out) >= limit:
            break
    return out


def _drift_check(name, spec, V, r_min, r_max, radii, directions, cfg, threshold, tolerance):
    cfg = cfg or GRID_CFG
    rs, dirs = radial_grid(spec.dim, r_min, r_max, radii, directions)
    pts, vals, vvals = _generator_on_grid(spec, V, rs, dirs, cfg)
    if np.any(vvals < 0):
        k = np.argwhere(vvals < 0)[0]
        raise ValueError(f"Lyapunov candidate negative at x={pts[k[0], k[1]].tolist()}, "
                         f"regime {k[2] + 1}")
    bad = vals > threshold + tolerance
    ok_shell = ~bad.reshape(len(rs), -1).any(axis=1)
    status, k = _classify(ok_shell)
    grid = {"r_min": r_min, "r_max": r_max, "radii": rs.tolist(), "directions": len(dirs),
            "regimes": spec.num_regimes, "spacing": "log"}
    shell_max = vals.reshape(len(rs), -1).max(axis=1)
    details = {"shell_max": shell_max.tolist(), "threshold": threshold, "tolerance": tolerance}
    if k is None:
        rstar = math.nan
        margin = float(shell_max[-1])
        failures = _failures(pts, vals, bad)
    else:
        rstar = float(rs[k])
        margin = float(shell_max[k:].max())
        failures = _failures(pts[:k], vals[:k], bad[:k]) if status != "holds-on-grid" else []
        details["violations_inside_r_star"] = int(bad[:k].sum())
    return CriterionReport(name, status, rstar, margin, grid, failures, details), vvals


def check_c1(spec, V, r_min, r_max, radii=32, directions=None, cfg=None, tolerance=0.0):
    """G V <= -1 on every grid point beyond r*.

    ``details['required_scale']`` is the factor c for which cV would meet the
    -1 threshold when the worst tail value of G V is negative.
    """
    report, _ = _drift_check("C1", spec, V, r_min, r_max, radii, directions, cfg, -1.0, tolerance)
    shell_max = np.asarray(report.details["shell_max"])
    # smallest tail where G V < 0 everywhere, used for the scaling remark
    neg = _witness_radius(shell_max < 0)
    if neg is not None:
        worst = float(shell_max[neg:].max())
        report.details["required_scale"] = max(1.0, -1.0 / worst)
        report.details["negative_from_radius"] = float(report.grid["radii"][neg])
    else:
        report.details["required_scale"] = math.inf
    return report


def check_c2(spec, V, r_min, r_max, radii=32, directions=None, cfg=None, tolerance=1e-9):
    """G V <= 0 beyond r* and growth evidence for V along the tested shells.

    Growth evidence: the per-shell infimum of V over directions and regimes
    increases strictly from shell to shell and at r_max is at least twice its
    value at r_min.  Stronger lower bounds are not attempted.
    """
    report, vvals = _drift_check("C2", spec, V, r_min, r_max, radii, directions, cfg, 0.0, tolerance)
    inf_v = vvals.reshape(vvals.shape[0], -1).min(axis=1)
    increasing = bool(np.all(np.diff(inf_v) > 0))
    factor = float(inf_v[-1] / inf_v[0]) if inf_v[0] > 0 else math.inf
    growth_ok = increasing and factor >= 2.0
    report.details.update({"shell_inf_V": inf_v.tolist(), "growth_increasing": increasing,
                           "growth_factor": factor, "growth_evidence": growth_ok,
                           "growth_note": "checked along tested shells only"})
    if not growth_ok:
        report.status = "fails"
    return report


# ---------------------------------------------------------------------------
# one-dimensional drift-jump criterion and the power-type criterion


def drift_jump_terms(spec, x, i, rel_tol=1e-10):
    """A(x, i) = b + int_{1<|z|<=|x|} z pi dz and B(x, i) = int_{|z|>|x|} |z| pi dz (d = 1)."""
    x = float(x)
    b = float(np.asarray(spec.drift(np.array([x]), i)).reshape(-1)[0])
    if not spec.has_jumps:
        return b, 0.0
    xv = np.array([x])
    r = abs(x)

    def first(z):
        return z[..., 0] * spec.jump_density(np.broadcast_to(xv, z.shape), i, z)

    def absolute(z):
        return np.abs(z[..., 0]) * spec.jump_density(np.broadcast_to(xv, z.shape), i, z)

    a_part = shell_integral(first, 1, 1.0, r, 1e-14, rel_tol).value if r > 1.0 else 0.0
    b_part = shell_integral(absolute, 1, max(r, 1e-300), 1e30, 1e-14, rel_tol).value
    return b + a_part, b_part


def _first_moment_finite(spec):
    env = spec.jump_envelope
    if isinstance(env, RadialEnvelope):
        if env.profile.tail_decay() <= 1.0:
            raise IntegrabilityError("integrability violation: envelope has no first moment")


def drift_jump_criterion_1d(spec, radii, cfg=None, tolerance=1e-12):
    """A(x,i) sgn(x) + B(x,i) at x = +-r for each tested radius and regime.

    Holds on the grid beyond r* when the worst value per radius is negative
    and non-increasing in |x| from r* on.
    """
    if spec.dim != 1:
        raise ValueError("the drift-jump criterion is one-dimensional")
    if spec.has_jumps:
        _first_moment_finite(spec)
    rs = np.sort(np.asarray(radii, dtype=float))
    regimes = list(spec.regimes)
    vals = np.empty((len(rs), 2, len(regimes)))
    a_vals = np.empty_like(vals)
    b_vals = np.empty_like(vals)
    for k, r in enumerate(rs):
        for s_idx, sgn in enumerate((1.0, -1.0)):
            for j, reg in enumerate(regimes):
                a, b = drift_jump_terms(spec, sgn * r, reg)
                a_vals[k, s_idx, j] = a
                b_vals[k, s_idx, j] = b
                vals[k, s_idx, j] = a * sgn + b
    worst = vals.reshape(len(rs), -1).max(axis=1)
    ok = worst < 0
    # the accepted tail must be non-increasing as well as negative
    k = _witness_radius(ok)
    if k is not None:
        while k < len(rs) - 1 and np.any(np.diff(worst[k:]) > tolerance * (1 + np.abs(worst[k:-1]))):
            k += 1
    grid = {"radii": rs.tolist(), "signs": [1, -1], "regimes": len(regimes)}
    details = {"worst_per_radius": worst.tolist(), "A": a_vals.tolist(), "B": b_vals.tolist()}
    if k is None:
        failures = [{"x": float(s * rs[-1]), "regime": int(reg), "value": float(vals[-1, si, j])}
                    for si, s in enumerate((1, -1)) for j, reg in enumerate(regimes)
                    if vals[-1, si, j] >= 0]
        return CriterionReport("E52", "fails", math.nan, float(worst[-1]), grid, failures, details)
    status = "holds-on-grid" if k < len(rs) - 1 or len(rs) == 1 else "inconclusive"
    return CriterionReport("E52", status, float(rs[k]), float(worst[k:].max()), grid, [], details)


def power_criterion(spec, delta, r_min=2.0, r_max=1e3, radii=32, directions=None,
                    n_values=(1.0, 10.0, 100.0)):
    """b(x,i).x / |x|^(2-delta) + N int_{|z|>1} |z|^delta pi_i(x,z) dz on a radial grid.

    The criterion asks for divergence to -inf; on a grid this is read as the
    shell maximum decreasing over the outer half of the shells and ending
    negative, for each N.
    """
    if not 0 < delta < 2:
        raise ValueError("delta must lie in (0, 2)")
    rs, dirs = radial_grid(spec.dim, r_min, r_max, radii, directions)
    regimes = np.arange(1, spec.num_regimes + 1)
    pts = rs[:, None, None] * dirs[None]
    xx = np.broadcast_to(pts[:, :, None, :], pts.shape[:2] + (len(regimes), spec.dim))
    ii = np.broadcast_to(regimes, xx.shape[:-1])
    b = np.asarray(spec.drift(xx, ii), dtype=float)
    norm = np.linalg.norm(xx, axis=-1)
    drift_part = np.sum(b * xx, axis=-1) / norm ** (2.0 - delta)
    jump_part = np.zeros_like(drift_part)
    if spec.has_jumps:
        for idx in np.ndindex(*drift_part.shape):
            jump_part[idx] = jump_mass_outside(spec, xx[idx], int(ii[idx]), 1.0, delta, rel_tol=1e-8)
    per_n = {}
    statuses = []
    half = len(rs) // 2
    for n in n_values:
        vals = drift_part + n * jump_part
        shell_max = vals.reshape(len(rs), -1).max(axis=1)
        tail = shell_max[half:]
        decreasing = bool(np.all(np.diff(tail) < 0))
        st = "holds-on-grid" if decreasing and tail[-1] < 0 else (
            "fails" if tail[-1] >= 0 and not decreasing else "inconclusive")
        statuses.append(st)
        per_n[str(n)] = {"shell_max": shell_max.tolist(), "status": st}
    if all(s == "holds-on-grid" for s in statuses):
        status = "holds-on-grid"
    elif any(s == "fails" for s in statuses):
        status = "fails"
    else:
        status = "inconclusive"
    grid = {"r_min": r_min, "r_max": r_max, "radii": rs.tolist(), "directions": len(dirs),
            "regimes": spec.num_regimes, "spacing": "log"}
    last = max(v["shell_max"][-1] for v in per_n.values())
    rstar = float(rs[half]) if status == "holds-on-grid" else math.nan
    return CriterionReport("E51", status, rstar, float(last), grid, [],
                           {"delta": delta, "per_N": per_n})


# ---------------------------------------------------------------------------
# exit-time witness


@dataclass
class ExitWitness:
    function: object
    beta: float
    gamma: float
    kappa0: float
    kappa1: float
    check: CriterionReport


def _ball_grid(dim, radius, radii=32, directions=16):
    if dim == 1:
        return np.linspace(-radius, radius, radii * directions)[:, None]
    rs = np.linspace(radius / radii, radius, radii)
    dirs = fibonacci_sphere(directions if dim == 2 else max(directions, 64), dim)
    pts = (rs[:, None, None] * dirs[None]).reshape(-1, dim)
    return np.concatenate([np.zeros((1, dim)), pts])


def exit_witness(spec, D_radius=1.0, sample_count=400, seed=0, cfg=None, radii=32,
                 directions=16):
    """Bounded C^2 function V with G V >= gamma on B(0, D_radius) x M.

    V = (x_1 + beta)^gamma near the ball with beta = D_radius + 1 and gamma
    from the sampled kappa_0 (ellipticity), kappa_1 (jump mass outside the
    unit ball) and the sup of |b_1|(x_1 + beta).  The returned check
    evaluates G V on a grid over the ball.
    """
    if not D_radius > 0:
        raise ValueError("D_radius must be positive")
    rng = np.random.default_rng(seed)
    d, m = spec.dim, spec.num_regimes
    pts = np.concatenate([_ball_grid(d, D_radius, radii, directions),
                          sample_ball(rng, sample_count, d, D_radius)])
    x = np.repeat(pts, m, axis=0)
    i = np.tile(np.arange(1, m + 1), len(pts))
    a2 = _check_a2(spec, x, i)
    if a2.status == "fail" or not a2.margin > 0:
        raise ValueError(f"ellipticity failure: sampled kappa_0 = {a2.margin}")
    kappa0 = float(a2.margin)
    kappa1 = 0.0
    if spec.has_jumps:
        sub = rng.choice(len(x), size=min(len(x), 24), replace=False)
        kappa1 = max(jump_mass_outside(spec, x[k], int(i[k]), 1.0, rel_tol=1e-8) for k in sub)
        kappa1 *= 1.01  # sampled sup, padded
    beta = D_radius + 1.0
    shift = x[:, 0] + beta
    b1 = np.abs(np.asarray(spec.drift(x, i), dtype=float)[:, 0])
    sup = float(np.max(b1 * shift + kappa1 * shift ** 2))
    gamma = (2.0 / kappa0) * (sup + 1.0) + 2.0
    # the power form is needed within distance 1 of the ball only
    cap = D_radius + 1.0 + beta
    V = shifted_power_first_coordinate(beta, gamma, cap=cap, width=1.0)

    cfg = cfg or EXIT_CFG
    grid_pts = _ball_grid(d, D_radius, radii, directions)
    regimes = np.arange(1, m + 1)
    vals = apply_generator_grid(spec, V, grid_pts, regimes, cfg)
    # quadrature error is at most rel_tol |G V| on the jump part
    bad = vals - cfg.rel_tol * np.abs(vals) < gamma
    failures = [{"x": grid_pts[k].tolist(), "regime": int(j + 1), "value": float(vals[k, j])}
                for k, j in zip(*np.nonzero(bad))][:50]
    status = "holds-on-grid" if not bad.any() else "fails"
    grid = {"radius": D_radius, "points": len(grid_pts), "regimes": m,
            "layout": "linspace" if d == 1 else f"{radii} radii x {directions} directions"}
    check = CriterionReport("exit", status, D_radius, float(vals.min()), grid, failures,
                            {"gamma": gamma, "beta": beta, "min_GV": float(vals.min())})
    return ExitWitness(V, beta, gamma, kappa0, kappa1, check)


__all__ = [
    "CriterionReport", "ExitWitness", "builtin_lyapunov", "check_c1", "check_c2",
    "drift_jump_criterion_1d", "drift_jump_terms", "power_criterion", "exit_witness",
    "radial_grid",
]
