"""Regime-switching jump diffusion models and their assumption checks.

Regimes are labelled 1..m everywhere in the public API.  Coefficient
callables broadcast over leading axes:

* ``drift(x, i)``      x: (..., d), i: (...)  ->  (..., d)
* ``diffusion(x, i)``                          ->  (..., d, d)
* ``q_matrix(x)``      x: (..., d)             ->  (..., m, m)
* ``jump_density(x, i, z)``                    ->  (...)
* ``jump_envelope(z, n)``                      ->  (...)
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .jumps import PowerLawProfile, RadialEnvelope, TiltedRadialKernel
from .quadrature import fibonacci_sphere, shell_integral, gauss_kronrod

ROW_SUM_TOL = 1e-12


class ModelError(ValueError):
    """A model evaluates to something unusable (non-finite, bad Q rows)."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class ModelSpec:
    dim: int
    num_regimes: int
    drift: object
    diffusion: object
    q_matrix: object
    q_bound: float
    jump_density: object = None
    jump_envelope: object = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1 or self.num_regimes < 1:
            raise ValueError("dim and num_regimes must be positive")
        if not self.q_bound > 0:
            raise ValueError("q_bound must be positive")
        if self.jump_density is not None and self.jump_envelope is None:
            raise ValueError("a jump density needs a dominating envelope")

    @property
    def has_jumps(self):
        return self.jump_density is not None

    @property
    def regimes(self):
        return range(1, self.num_regimes + 1)

    def covariance(self, x, i):
        """a(x, i) = sigma sigma'."""
        s = np.asarray(self.diffusion(x, i), dtype=float)
        return s @ np.swapaxes(s, -1, -2)


@dataclass
class AssumptionCheck:
    id: str
    status: str
    witness: object = None
    margin: float = math.nan
    details: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    entries: list

    def __getitem__(self, key):
        for e in self.entries:
            if e.id == key:
                return e
        raise KeyError(key)

    @property
    def passed(self):
        return all(e.status != "fail" for e in self.entries)

    def to_dict(self):
        out = []
        for e in self.entries:
            w = e.witness
            if w is not None:
                w = {k: (np.asarray(v).tolist() if not isinstance(v, (int, float)) else v)
                     for k, v in w.items()}
            out.append({"id": e.id, "status": e.status, "witness": w,
                        "margin": _num(e.margin), "details": {k: _num(v) for k, v in e.details.items()}})
        return {"passed": self.passed, "entries": out}


def _num(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def sample_ball(rng, n, dim, radius, center=None):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / dim)
    pts = g * r
    return pts if center is None else pts + np.asarray(center, dtype=float)


def _require_finite(arr, x, i, what):
    arr = np.asarray(arr, dtype=float)
    bad = ~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        raise ModelError(f"non-finite {what} at x={x[k].tolist()}, regime {int(i[k])}",
                         point=(x[k], int(i[k])))
    return arr


def validate_spec(spec, box_radius, sample_count, seed, tolerance=0.0,
                  truncation_radius=1e6):
    """Check (A1)-(A3) by sampling on B(0, box_radius) and spot-check (A4).

    Results are sampled evidence with measured margins, not proofs.
    ``tolerance`` is a relative slack on the envelope domination test.
    """
    if not box_radius > 0:
        raise ValueError("box_radius must be positive")
    rng = np.random.default_rng(seed)
    d, m = spec.dim, spec.num_regimes
    pts = np.concatenate([np.zeros((1, d)), sample_ball(rng, sample_count, d, box_radius)])
    x = np.repeat(pts, m, axis=0)
    i = np.tile(np.arange(1, m + 1), len(pts))

    entries = [_check_a1(spec, x, i, pts), _check_a2(spec, x, i)]
    entries.append(_check_a3(spec, x, i, box_radius, tolerance, truncation_radius, rng))
    entries.append(_check_a4(spec, rng, box_radius, sample_count))
    return ValidationReport(entries)


def _check_a1(spec, x, i, pts):
    b = _require_finite(spec.drift(x, i), x, i, "drift")
    s = _require_finite(spec.diffusion(x, i), x, i, "diffusion")
    size = np.abs(s).sum(axis=(-1, -2)) + np.abs(b).sum(axis=-1)
    growth = float(np.max(size / (1.0 + np.linalg.norm(x, axis=-1))))

    q = np.asarray(spec.q_matrix(pts), dtype=float)
    m = spec.num_regimes
    if not np.isfinite(q).all():
        k = int(np.argmax(~np.isfinite(q.reshape(len(pts), -1)).all(axis=1)))
        raise ModelError(f"non-finite Q at x={pts[k].tolist()}", point=pts[k])
    rows = np.abs(q.sum(axis=-1))
    if rows.max() > ROW_SUM_TOL:
        k, r = np.unravel_index(int(np.argmax(rows)), rows.shape)
        raise ModelError(f"Q row {r + 1} sums to {q[k, r].sum():.3e} at x={pts[k].tolist()}",
                         point=pts[k])
    off = np.where(np.eye(m, dtype=bool), np.inf, q)
    min_off = float(off.min()) if m > 1 else 0.0
    exit_rate = -np.diagonal(q, axis1=-2, axis2=-1)
    max_exit = float(exit_rate.max())
    details = {"growth_constant": growth, "min_offdiagonal": min_off,
               "max_exit_rate": max_exit, "q_bound": spec.q_bound}
    if m > 1 and min_off < 0:
        k, r, c = np.unravel_index(int(np.argmin(off)), off.shape)
        return AssumptionCheck("A1", "fail", {"x": pts[k], "row": int(r + 1), "col": int(c + 1)},
                               min_off, details)
    slack = spec.q_bound - max_exit
    if slack < 0:
        k = int(np.argmax(exit_rate.max(axis=-1)))
        return AssumptionCheck("A1", "fail", {"x": pts[k]}, slack, details)
    return AssumptionCheck("A1", "pass", None, min(slack, min_off) if m > 1 else slack, details)


def _check_a2(spec, x, i):
    a = spec.covariance(x, i)
    eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))
    lo = eig[:, 0]
    hi = eig[:, -1]
    k = int(np.argmin(lo))
    if lo[k] <= 0:
        return AssumptionCheck("A2", "fail", {"x": x[k], "regime": int(i[k])}, float(lo[k]),
                               {"min_eigenvalue": float(lo[k])})
    kappa0 = float(min(1.0, lo.min(), 1.0 / hi.max()))
    return AssumptionCheck("A2", "pass", None, kappa0,
                           {"min_eigenvalue": float(lo.min()), "max_eigenvalue": float(hi.max())})


def jump_mass_outside(spec, x, i, radius=1.0, power=0.0, rel_tol=1e-8, angular_order=32):
    """Integral of |z|**power * pi_i(x, z) over |z| > radius, by quadrature."""
    x = np.asarray(x, dtype=float)
    if not spec.has_jumps:
        return 0.0

    def g(z):
        return spec.jump_density(x, i, z) * np.linalg.norm(z, axis=-1) ** power

    res = shell_integral(g, spec.dim, radius, 1e12, 1e-13, rel_tol, angular_order)
    return res.value


def _check_a3(spec, x, i, box_radius, tolerance, truncation_radius, rng):
    if not spec.has_jumps:
        return AssumptionCheck("A3", "pass", None, math.inf,
                               {"envelope_integral": 0.0, "kappa1": 0.0})
    d = spec.dim
    n = max(1, math.ceil(box_radius))
    radii = np.logspace(-4, 4, 49)
    dirs = fibonacci_sphere(16 if d == 2 else 64, d)
    z = (radii[:, None, None] * dirs[None]).reshape(-1, d)
    worst = -np.inf
    witness = None
    for k in range(len(x)):
        dens = np.asarray(spec.jump_density(x[k], i[k], z), dtype=float)
        if not np.isfinite(dens).all():
            raise ModelError(f"non-finite jump density at x={x[k].tolist()}", point=x[k])
        env = np.asarray(spec.jump_envelope(z, n), dtype=float)
        ratio = np.where(env > 0, dens / np.where(env > 0, env, 1.0), np.where(dens > 0, np.inf, 0.0))
        j = int(np.argmax(ratio))
        if ratio[j] > worst:
            worst = float(ratio[j])
            witness = {"x": x[k], "regime": int(i[k]), "z": z[j]}
    # envelope integrability: (1 ^ |z|^2) Pi_n(dz) up to the truncation radius
    near = shell_integral(lambda zz: np.sum(zz * zz, -1) * spec.jump_envelope(zz, n),
                          d, 1e-12, 1.0, 1e-14, 1e-10)
    far = shell_integral(lambda zz: spec.jump_envelope(zz, n), d, 1.0, truncation_radius,
                         1e-14, 1e-10)
    integral = near.value + far.value
    details = {"envelope_integral": integral, "truncation_radius": truncation_radius,
               "max_density_ratio": worst, "envelope_index": n}
    if isinstance(spec.jump_envelope, RadialEnvelope):
        full = spec.jump_envelope.truncated_second_moment(n)
        details["envelope_integral_untruncated"] = full
        if not math.isfinite(full):
            return AssumptionCheck("A3", "fail", {"envelope_index": n}, -math.inf, details)
    # kappa1 = sup pi(x, B(0,1)^c) on a subsample
    sub = rng.choice(len(x), size=min(len(x), 16), replace=False)
    k1 = max(jump_mass_outside(spec, x[k], i[k], 1.0, rel_tol=1e-6) for k in sub)
    details["kappa1"] = k1
    margin = 1.0 + tolerance - worst
    status = "pass" if margin >= 0 else "fail"
    return AssumptionCheck("A3", status, witness if status == "fail" else None, margin, details)


def _check_a4(spec, rng, box_radius, sample_count):
    if not spec.has_jumps:
        return AssumptionCheck("A4-spot", "not-checkable", None, math.nan,
                               {"reason": "no jump density"})
    d, m = spec.dim, spec.num_regimes
    n = max(sample_count, 1)
    x0 = sample_ball(rng, n, d, box_radius)
    r = rng.uniform(0.05, 1.0, size=(n, 1))
    xa = x0 + sample_ball(rng, n, d, 1.0) * (r / 2)
    ya = x0 + sample_ball(rng, n, d, 1.0) * (r / 2)
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    za = x0 + u * r * (1.0 + rng.exponential(2.0, size=(n, 1)))
    i = rng.integers(1, m + 1, size=n)
    px = np.asarray(spec.jump_density(xa, i, za - xa), dtype=float)
    py = np.asarray(spec.jump_density(ya, i, za - ya), dtype=float)
    both_zero = (px == 0) & (py == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(both_zero, 1.0, np.maximum(px / py, py / px))
    k = int(np.argmax(ratio))
    details = {"alpha_r_max": float(ratio[k]), "samples": n}
    if not np.isfinite(ratio[k]):
        return AssumptionCheck("A4-spot", "fail",
                               {"x": xa[k], "y": ya[k], "z": za[k], "regime": int(i[k])},
                               math.inf, details)
    return AssumptionCheck("A4-spot", "pass", None, float(ratio[k]), details)


# ---------------------------------------------------------------------------
# model construction helpers


def relabel(spec, perm):
    """Model with regimes renamed: old label k becomes ``perm[k - 1]``."""
    perm = np.asarray(perm, dtype=int)
    m = spec.num_regimes
    if sorted(perm.tolist()) != list(range(1, m + 1)):
        raise ValueError("perm must be a permutation of 1..m")
    inv = np.empty(m, dtype=int)
    inv[perm - 1] = np.arange(1, m + 1)

    def back(i):
        return inv[np.asarray(i) - 1]

    def q_matrix(x):
        q = np.asarray(spec.q_matrix(x), dtype=float)
        order = inv - 1
        return q[..., order[:, None], order[None, :]]

    jump = _RelabelledKernel(spec.jump_density, back) if spec.has_jumps else None
    return replace(spec,
                   drift=lambda x, i: spec.drift(x, back(i)),
                   diffusion=lambda x, i: spec.diffusion(x, back(i)),
                   q_matrix=q_matrix,
                   jump_density=jump,
                   name=f"{spec.name}[relabelled]")


class _RelabelledKernel:
    def __init__(self, base, back):
        self.base = base
        self.back = back
        if hasattr(base, "compensator"):
            self.compensator = lambda x, i, eps, radius=1.0: base.compensator(x, back(i), eps, radius)
        if hasattr(base, "small_cov"):
            self.small_cov = lambda x, i, eps: base.small_cov(x, back(i), eps)

    def __call__(self, x, i, z):
        return self.base(x, self.back(i), z)


def linear_switching_model(rates, sigmas, q, centers=None, name="linear-switching"):
    """b(x, i) = -rates[i] (x - centers[i]), sigma(x, i) = sigmas[i], constant Q.

    ``sigmas`` may hold scalars (times identity) or d x d matrices.
    """
    rates = np.asarray(rates, dtype=float)
    q = np.asarray(q, dtype=float)
    m = len(rates)
    sig = np.asarray(sigmas, dtype=float)
    if sig.ndim == 1:
        d = 1 if centers is None else np.asarray(centers).shape[-1]
        sig = sig[:, None, None] * np.eye(d)
    d = sig.shape[-1]
    centers = np.zeros((m, d)) if centers is None else np.asarray(centers, dtype=float)

    def drift(x, i):
        k = np.asarray(i) - 1
        return -rates[k][..., None] * (np.asarray(x, dtype=float) - centers[k])

    def diffusion(x, i):
        k = np.asarray(i) - 1
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(k))
        return np.broadcast_to(sig[k], shape + (d, d))

    def q_matrix(x):
        return np.broadcast_to(q, np.shape(x)[:-1] + (m, m))

    bound = max(float(np.max(-np.diag(q))), 1e-12)
    return ModelSpec(d, m, drift, diffusion, q_matrix, bound, name=name,
                     params={"rates": rates.tolist(), "q": q.tolist()})


# ---------------------------------------------------------------------------
# builtin families

BUILTIN_FAMILIES = ("example-5.1", "example-5.2", "example-5.3-diffusion",
                    "example-5.3-stabilized", "ou-benchmark")

_DEFAULTS = {
    "ou-benchmark": {"theta": 1.0, "sigma": math.sqrt(2.0)},
    "example-5.1": {"drift_rates": [1.0, 2.0], "sigmas": [1.0, 0.7],
                    "jump_rates": [0.5, 1.0], "alpha_inner": 0.5, "alpha_outer": 1.5,
                    "delta": 1.0},
    "example-5.2": {"drifts": [-0.5, 0.5], "sigmas": [1.0, 0.8], "jump_scales": [1.0, 1.0],
                    "tilts": [0.8, 0.8], "alpha_inner": 0.5, "alpha_outer": 1.5},
    "example-5.3-diffusion": {"speed": 1.0, "sigmas": [1.0, 0.5]},
    "example-5.3-stabilized": {"speed": 1.0, "sigmas": [1.0, 0.5], "jump_scales": [2.0, 2.0],
                               "tilts": [0.9, 0.9], "alpha_inner": 0.5, "alpha_outer": 1.5},
}


def smooth_sign(x):
    """sgn(x) outside [-1, 1], the C^1 cubic x(3 - x^2)/2 inside."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) >= 1.0, np.sign(x), 0.5 * x * (3.0 - x * x))


def _params(family, params):
    if family not in _DEFAULTS:
        raise ValueError(f"unknown model family {family!r}; expected one of {BUILTIN_FAMILIES}")
    merged = dict(_DEFAULTS[family])
    unknown = set(params or {}) - set(merged)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {family}: {sorted(unknown)}")
    merged.update(params or {})
    return merged


def _check_index(name, value, lo, hi):
    if not lo < value < hi:
        raise ValueError(f"{name}={value} outside ({lo}, {hi})")


def _pair(p, key, positive=True):
    arr = np.asarray(p[key], dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{key} must hold one value per regime (2)")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{key} must be positive")
    return arr


def _scalar_sigma(sig, d):
    def diffusion(x, i):
        k = np.asarray(i) - 1
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(k))
        return np.broadcast_to(sig[k][..., None, None] * np.eye(d), shape + (d, d))
    return diffusion


def _tilted_1d(p):
    """Asymmetric 1-d kernel: inward large jumps dominate for |x| large."""
    _check_index("alpha_inner", p["alpha_inner"], 0, 2)
    _check_index("alpha_outer", p["alpha_outer"], 1, 2)
    c = _pair(p, "jump_scales")
    theta = _pair(p, "tilts")
    if np.any(theta >= 1):
        raise ValueError("tilts must lie in (0, 1) so the density stays positive")
    profile = PowerLawProfile(1, 1.0, p["alpha_inner"], p["alpha_outer"])

    def level(x, i):
        k = np.asarray(i) - 1
        return np.broadcast_to(c[k], np.broadcast_shapes(np.shape(x)[:-1], np.shape(k)))

    def tilt(x, i):
        k = np.asarray(i) - 1
        t = -c[k] * theta[k] * np.tanh(np.asarray(x, dtype=float)[..., 0])
        return t[..., None]

    kernel = TiltedRadialKernel(profile, level, tilt)
    envelope = RadialEnvelope(profile, float(np.max(c * (1 + theta))))
    return kernel, envelope


def builtin_model(family, params=None):
    """Construct one of the built-in model families.

    ``ou-benchmark`` is the 1-d Ornstein-Uhlenbeck process b = -theta x with
    constant sigma.  ``example-5.1`` is a 2-d, two-regime model with linear
    inward drift and an isotropic two-index power-law kernel.  ``example-5.2``
    and ``example-5.3-stabilized`` are 1-d models whose asymmetric large
    jumps pull the state back toward the origin; ``example-5.3-diffusion`` is
    the transient switching diffusion with outward drift +-1 beyond |x| = 1.
    """
    p = _params(family, params)
    if family == "ou-benchmark":
        theta, sigma = float(p["theta"]), float(p["sigma"])
        if theta <= 0 or sigma <= 0:
            raise ValueError("theta and sigma must be positive")
        return ModelSpec(
            1, 1,
            drift=lambda x, i: -theta * np.asarray(x, dtype=float) + 0.0 * np.asarray(i)[..., None],
            diffusion=lambda x, i: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(i)) + (1, 1), sigma),
            q_matrix=lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)),
            q_bound=1.0, name=family, params=p)

    if family == "example-5.1":
        rates = _pair(p, "drift_rates")
        sig = _pair(p, "sigmas")
        lam = _pair(p, "jump_rates")
        _check_index("alpha_inner", p["alpha_inner"], 0, 2)
        _check_index("alpha_outer", p["alpha_outer"], 0, 2)
        _check_index("delta", p["delta"], 0, p["alpha_outer"])
        profile = PowerLawProfile(2, 1.0, p["alpha_inner"], p["alpha_outer"])

        def drift(x, i):
            return -rates[np.asarray(i) - 1][..., None] * np.asarray(x, dtype=float)

        def q_matrix(x):
            x = np.asarray(x, dtype=float)
            s = np.sum(x * x, axis=-1)
            q12 = 1.0 + 0.5 * x[..., 0] ** 2 / (1.0 + s)
            q21 = 0.5 + 0.5 / (1.0 + s)
            return np.stack([np.stack([-q12, q12], -1), np.stack([q21, -q21], -1)], -2)

        def level(x, i):
            x = np.asarray(x, dtype=float)
            s = np.sum(x * x, axis=-1)
            return lam[np.asarray(i) - 1] * (1.0 + 0.5 * x[..., 1] ** 2 / (1.0 + s))

        kernel = TiltedRadialKernel(profile, level)
        envelope = RadialEnvelope(profile, 1.5 * float(lam.max()))
        return ModelSpec(2, 2, drift, _scalar_sigma(sig, 2), q_matrix, 1.5, kernel, envelope,
                         name=family, params=p)

    if family == "example-5.2":
        b = np.asarray(p["drifts"], dtype=float)
        sig = _pair(p, "sigmas")
        kernel, envelope = _tilted_1d(p)

        def drift(x, i):
            return (b[np.asarray(i) - 1] * np.tanh(np.asarray(x, dtype=float)[..., 0]))[..., None]

        def q_matrix(x):
            t2 = np.tanh(np.asarray(x, dtype=float)[..., 0]) ** 2
            q12 = 1.0 + 0.5 * t2
            q21 = 2.0 - t2
            return np.stack([np.stack([-q12, q12], -1), np.stack([q21, -q21], -1)], -2)

        return ModelSpec(1, 2, drift, _scalar_sigma(sig, 1), q_matrix, 2.0, kernel, envelope,
                         name=family, params=p)

    # example-5.3 variants share drift, diffusion and switching
    speed = float(p["speed"])
    if speed <= 0:
        raise ValueError("speed must be positive")
    sig = _pair(p, "sigmas")

    def drift(x, i):
        x = np.asarray(x, dtype=float)
        return speed * smooth_sign(x) + 0.0 * np.asarray(i)[..., None]

    def q_matrix(x):
        t2 = np.tanh(np.asarray(x, dtype=float)[..., 0]) ** 2
        q12 = 1.0 + 0.5 * t2
        q21 = np.ones_like(t2)
        return np.stack([np.stack([-q12, q12], -1), np.stack([q21, -q21], -1)], -2)

    if family == "example-5.3-diffusion":
        return ModelSpec(1, 2, drift, _scalar_sigma(sig, 1), q_matrix, 1.5, name=family, params=p)
    kernel, envelope = _tilted_1d(p)
    return ModelSpec(1, 2, drift, _scalar_sigma(sig, 1), q_matrix, 1.5, kernel, envelope,
                     name=family, params=p)


__all__ = [
    "ModelSpec", "ModelError", "AssumptionCheck", "ValidationReport", "validate_spec",
    "builtin_model", "relabel", "linear_switching_model", "smooth_sign", "BUILTIN_FAMILIES",
    "jump_mass_outside", "sample_ball", "gauss_kronrod",
]
