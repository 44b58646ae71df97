"""Evaluation of the switching jump-diffusion generator.

G f(x, i) = 1/2 tr(a D^2 f) + b . grad f                       (local part)
          + int [f(x+z, i) - f(x, i) - grad f . z 1{|z|<s}] pi_i(x, z) dz
          + sum_j q_ij(x) f(x, j)

with a = sigma sigma' and s the small-jump radius (1 unless reconfigured).
The jump integral is computed by radial-angular quadrature (d <= 3).
"""

from dataclasses import dataclass
import math

import numpy as np

from .jumps import RadialEnvelope
from .quadrature import QuadratureError, shell_integral, sphere_area


class GeneratorError(ValueError):
    """Non-finite coefficients or derivatives at an evaluation point."""


class IntegrabilityError(ValueError):
    """The large-jump integral diverges for the declared growth."""


@dataclass(frozen=True)
class QuadratureConfig:
    small_jump_radius: float = 1.0
    inner_subdivisions: int = 60
    truncation_radius: float = 1e20
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    angular_order: int = 32
    max_angular_order: int = 512
    taylor_radius: float = 1e-4
    floor_radius: float = 1e-40

    def __post_init__(self):
        if not 0 < self.small_jump_radius <= 1:
            raise ValueError("small_jump_radius must lie in (0, 1]")
        if not self.truncation_radius > self.small_jump_radius:
            raise ValueError("truncation_radius must exceed small_jump_radius")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.floor_radius < self.taylor_radius < self.small_jump_radius:
            raise ValueError("need floor_radius < taylor_radius < small_jump_radius")


@dataclass
class NonlocalResult:
    value: float
    error: float
    tail_bound: float
    inner: float
    outer: float


def _point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        x = x.reshape(x.shape + (1,)) if dim == 1 else x
    if x.shape[-1] != dim:
        raise ValueError(f"state must have trailing dimension {dim}, got shape {x.shape}")
    return x


def _finite(arr, x, i, what):
    arr = np.asarray(arr, dtype=float)
    if not np.isfinite(arr).all():
        raise GeneratorError(f"non-finite {what} at x={np.asarray(x).tolist()}, regime {np.asarray(i).tolist()}")
    return arr


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def local_term(spec, f, x, i):
    """1/2 tr(a D^2 f) + b . grad f; broadcasts over leading axes of x and i."""
    x = _point(x, spec.dim)
    i = np.asarray(i)
    b = _finite(spec.drift(x, i), x, i, "drift")
    a = _finite(spec.covariance(x, i), x, i, "diffusion")
    g = _finite(f.gradient(x, i), x, i, "gradient")
    h = _finite(f.hessian(x, i), x, i, "hessian")
    val = 0.5 * np.einsum("...kl,...kl->...", a, h) + np.sum(b * g, axis=-1)
    return _out(val)


def switching_term(spec, f, x, i):
    """sum_j q_ij(x) f(x, j)."""
    x = _point(x, spec.dim)
    i = np.asarray(i)
    m = spec.num_regimes
    q = _finite(spec.q_matrix(x), x, i, "Q matrix")
    regimes = np.arange(1, m + 1)
    fv = _finite(f.value(x[..., None, :], regimes), x, i, "test function")
    ib = np.broadcast_to(i, q.shape[:-2])
    row = np.take_along_axis(q, (ib - 1)[..., None, None], axis=-2)[..., 0, :]
    val = np.sum(row * fv, axis=-1)
    return _out(val)


def _envelope_index(x):
    return max(1, math.ceil(float(np.linalg.norm(x)) + 1e-12))


def _tail_bound(spec, f, x, i, n, radius):
    """Bound on int_{|z|>radius} |f(x+z) - f(x)| pi(dz) via the envelope."""
    growth = f.growth
    env = spec.jump_envelope
    p = 0.0 if growth.is_bounded else growth.power
    rx = float(np.linalg.norm(x))
    d = spec.dim
    if isinstance(env, RadialEnvelope):
        decay = env.profile.tail_decay()
        if p >= decay:
            raise IntegrabilityError(
                f"integrability violation: growth power {p} >= envelope tail exponent {decay}")
        level = float(env.level(n))
        area = sphere_area(d)
        mass = level * area * env.profile.moment(d - 1, radius, math.inf)
        if growth.is_bounded:
            return 2.0 * growth.constant * mass
        c = growth.constant
        fx = abs(float(f.value(x, i)))
        k = 2.0 ** max(p - 1.0, 0.0)
        const = c * (1.0 + k * rx ** p) + max(fx, c * (1.0 + rx ** p))
        return const * mass + c * k * level * area * env.profile.moment(d - 1 + p, radius, math.inf)

    # generic envelope: power-law extrapolation of the radial profile
    dirs = np.eye(d)[:1]
    r1, r2 = radius, radius * 1e3
    e1 = float(np.asarray(env(dirs * r1, n))[0])
    e2 = float(np.asarray(env(dirs * r2, n))[0])
    bnd = growth.constant if growth.is_bounded else growth.constant * (1.0 + (rx + 1.0) ** p)
    if e1 == 0.0 and e2 == 0.0:
        return 0.0
    if e2 == 0.0:
        return 0.0
    slope = math.log(e2 / e1) / math.log(r2 / r1) + d + p
    if slope >= 0:
        raise IntegrabilityError(
            f"integrability violation: envelope times growth decays like r^{slope - 1:.3g}")
    return 2.0 * sphere_area(d) * e1 * bnd * (1 + radius ** p) * r1 ** d / (-slope)


def _third_derivative(f, x, i, u, h=1e-4):
    """T[u, u, u] from central differences of the Hessian along each u."""
    hp = f.hessian(x + h * u, i)
    hm = f.hessian(x - h * u, i)
    qp = np.einsum("...k,...kl,...l->...", u, hp, u)
    qm = np.einsum("...k,...kl,...l->...", u, hm, u)
    return (qp - qm) / (2 * h)


def nonlocal_result(spec, f, x, i, cfg=None):
    """Compensated jump integral at one point, with error and tail bounds."""
    cfg = cfg or QuadratureConfig()
    if spec.dim > 3:
        raise NotImplementedError(f"jump quadrature supports d <= 3, got d = {spec.dim}")
    x = _point(x, spec.dim).reshape(spec.dim)
    i = int(i)
    if not spec.has_jumps:
        return NonlocalResult(0.0, 0.0, 0.0, 0.0, 0.0)
    d = spec.dim
    s = cfg.small_jump_radius
    fx = float(_finite(f.value(x, i), x, i, "test function"))
    gx = _finite(f.gradient(x, i), x, i, "gradient")
    hx = _finite(f.hessian(x, i), x, i, "hessian")
    n = _envelope_index(x)

    def density(z):
        return np.asarray(spec.jump_density(np.broadcast_to(x, z.shape), i, z), dtype=float)

    def direct_inner(z):
        val = f.value(x + z, i) - fx - z @ gx
        return val * density(z)

    cubic_cache = {}

    def taylor_inner(z):
        # z holds radial multiples of one direction set (axis -2), and the
        # third derivative depends on the direction only
        r = np.linalg.norm(z, axis=-1)
        u = z.reshape(-1, z.shape[-2], d)[0]
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        key = u.tobytes()
        if key not in cubic_cache:
            cubic_cache[key] = _third_derivative(f, np.broadcast_to(x, u.shape), i, u)
        quad = 0.5 * np.einsum("...k,kl,...l->...", z, hx, z)
        return (quad + cubic_cache[key] * r ** 3 / 6.0) * density(z)

    def outer(z):
        return (f.value(x + z, i) - fx) * density(z)

    tail = _tail_bound(spec, f, x, i, n, cfg.truncation_radius)

    rx = float(np.linalg.norm(x))
    # geometric rings around |z| = |x|, where shells pass close to z = -x and
    # the integrand varies on an angular scale of (distance + 1) / |x|
    gaps = [0.0] + [3.0 ** k for k in range(0, 40) if 3.0 ** k < rx]
    cuts = {rx + sgn * g for g in gaps for sgn in (-1, 1)} | {2 * rx}
    cuts = sorted(c for c in cuts if s < c < cfg.truncation_radius)
    outer_edges = [s] + cuts + [cfg.truncation_radius]
    inner = [(taylor_inner, cfg.floor_radius, cfg.taylor_radius, (), None, None),
             (direct_inner, cfg.taylor_radius, s, (), None, None)]

    def angular(a, b):
        if d != 2 or rx <= 1.5:
            return None, None
        far = max(abs(a - rx), abs(b - rx))
        cone = 1.5 * (far + 1.0) / rx
        return (-x, cone) if cone < 1.0 else (None, None)

    # consecutive rings sharing an angular rule become one adaptive call
    outer_pieces = []
    for a, b in zip(outer_edges[:-1], outer_edges[1:]):
        foc, cone = angular(a, b)
        if outer_pieces and outer_pieces[-1][4] is None and foc is None:
            prev = outer_pieces[-1]
            outer_pieces[-1] = (outer, prev[1], b, prev[3] + (a,), None, None)
        else:
            outer_pieces.append((outer, a, b, (), foc, cone))
    pieces = inner + outer_pieces

    order = cfg.angular_order
    while True:
        results = [shell_integral(g, d, a, b, cfg.abs_tol / len(pieces), cfg.rel_tol / 4,
                                  order, cfg.inner_subdivisions, foc, cone, brk)
                   for g, a, b, brk, foc, cone in pieces]
        value = sum(r.value for r in results)
        error = sum(r.error for r in results)
        target = max(cfg.rel_tol * abs(value), cfg.abs_tol)
        if error + tail <= target or d == 1 or order >= cfg.max_angular_order:
            break
        order *= 2

    # remainder below the floor radius: 1/2 |H| int_{|z|<floor} |z|^2 Pi_n(dz)
    env = spec.jump_envelope
    if isinstance(env, RadialEnvelope):
        floor = 0.5 * float(np.linalg.norm(hx, 2)) * float(env.level(n)) * sphere_area(d) \
            * env.profile.moment(d + 1, 0.0, cfg.floor_radius)
    else:
        floor = 0.0
    total_err = error + tail + floor
    if not all(r.converged for r in results) or total_err > target:
        raise QuadratureError(
            f"jump integral at x={x.tolist()}, regime {i}: achieved error {total_err:.3e} "
            f"exceeds target {target:.3e}", achieved=total_err)
    inner = results[0].value + results[1].value
    return NonlocalResult(float(value), float(total_err), float(tail), float(inner),
                          float(value - inner))


def nonlocal_term(spec, f, x, i, cfg=None):
    return nonlocal_result(spec, f, x, i, cfg).value


def apply_generator(spec, f, x, i, cfg=None):
    """G f(x, i) at a single point."""
    x = _point(x, spec.dim).reshape(spec.dim)
    val = local_term(spec, f, x, i) + switching_term(spec, f, x, i)
    if spec.has_jumps:
        val += nonlocal_term(spec, f, x, i, cfg)
    return float(val)


def apply_generator_grid(spec, f, xs, regimes, cfg=None):
    """G f on every (x, i) pair of ``xs`` (N, d) x ``regimes``; shape (N, len(regimes))."""
    xs = np.asarray(xs, dtype=float).reshape(-1, spec.dim)
    regimes = np.asarray(regimes, dtype=int)
    xx = np.repeat(xs[:, None, :], len(regimes), axis=1)
    ii = np.broadcast_to(regimes, xx.shape[:-1])
    out = np.asarray(local_term(spec, f, xx, ii), dtype=float) \
        + np.asarray(switching_term(spec, f, xx, ii), dtype=float)
    if spec.has_jumps:
        for k in range(len(xs)):
            for j, reg in enumerate(regimes):
                out[k, j] += nonlocal_term(spec, f, xs[k], int(reg), cfg)
    return out


__all__ = [
    "QuadratureConfig", "NonlocalResult", "GeneratorError", "IntegrabilityError",
    "QuadratureError", "local_term", "switching_term", "nonlocal_term", "nonlocal_result",
    "apply_generator", "apply_generator_grid",
]
