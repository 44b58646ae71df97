"""Radial jump profiles, dominating envelopes and jump kernels.

A jump kernel is any callable ``density(x, i, z)`` broadcasting over leading
axes (``x`` and ``z`` carry the spatial axis last, ``i`` is the 1-based
regime).  Kernels built from a radial profile additionally expose the closed
form moments the simulator needs every step.
"""

import math

import numpy as np

from .quadrature import sphere_area


def _power_integral(p, a, b):
    """Integral of r**p over [a, b] (b may be inf, a may be 0)."""
    if b <= a:
        return 0.0
    if p == -1.0:
        if a == 0.0 or math.isinf(b):
            return math.inf
        return math.log(b / a)
    q = p + 1.0
    if math.isinf(b):
        if q >= 0:
            return math.inf
        return -(a ** q) / q
    if a == 0.0 and q <= 0:
        return math.inf
    return (b ** q - a ** q) / q


class PowerLawProfile:
    """rho(r) = scale * r**(-d - alpha_inner) for r < 1, r**(-d - alpha_outer) beyond.

    With ``alpha_inner == alpha_outer`` this is the stable-like profile.
    A finite ``r_max`` cuts the profile off beyond that radius.
    """

    def __init__(self, dim, scale, alpha_inner, alpha_outer=None, r_max=math.inf):
        alpha_outer = alpha_inner if alpha_outer is None else alpha_outer
        if not 0 < alpha_inner < 2:
            raise ValueError(f"alpha_inner must lie in (0, 2), got {alpha_inner}")
        if alpha_outer <= 0:
            raise ValueError(f"alpha_outer must be positive, got {alpha_outer}")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.dim = int(dim)
        self.scale = float(scale)
        self.alpha_inner = float(alpha_inner)
        self.alpha_outer = float(alpha_outer)
        if not r_max > 0:
            raise ValueError("r_max must be positive")
        self.r_max = float(r_max)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        alpha = np.where(r < 1.0, self.alpha_inner, self.alpha_outer)
        with np.errstate(divide="ignore"):
            return np.where(r <= self.r_max, self.scale * r ** (-self.dim - alpha), 0.0)

    def moment(self, k, a=0.0, b=math.inf):
        """Integral of r**k * rho(r) over [a, b]."""
        d = self.dim
        b = min(b, self.r_max)
        if b <= a:
            return 0.0
        inner = _power_integral(k - d - self.alpha_inner, a, min(b, 1.0)) if a < 1.0 else 0.0
        outer = _power_integral(k - d - self.alpha_outer, max(a, 1.0), b) if b > 1.0 else 0.0
        return self.scale * (inner + outer)

    def tail_decay(self):
        """Exponent q with rho(r) r**(d-1) ~ r**(-1-q) at infinity."""
        return self.alpha_outer if math.isinf(self.r_max) else math.inf

    def sample_radius(self, u, eps):
        """Radii from r**(d-1) rho(r) restricted to [eps, r_max], by inversion."""
        u = np.asarray(u, dtype=float)
        ai, ao = self.alpha_inner, self.alpha_outer
        top = self.r_max
        if eps >= 1.0:
            # r**-ao uniform on [top**-ao, eps**-ao]
            lo = top ** -ao if math.isfinite(top) else 0.0
            return (eps ** -ao - u * (eps ** -ao - lo)) ** (-1.0 / ao)
        cut = min(top, 1.0)
        m_in = (eps ** -ai - cut ** -ai) / ai
        m_out = (1.0 - (top ** -ao if math.isfinite(top) else 0.0)) / ao if top > 1.0 else 0.0
        v = u * (m_in + m_out)
        r = np.empty_like(u)
        inner = v < m_in
        # inner piece: r**-ai uniform on [cut**-ai, eps**-ai]
        r[inner] = (eps ** -ai - v[inner] * ai) ** (-1.0 / ai)
        if m_out > 0:
            w = (v[~inner] - m_in) * ao
            r[~inner] = (1.0 - w) ** (-1.0 / ao)
        return r


class ShellProfile:
    """Constant density on the shell r_min <= |z| <= r_max."""

    def __init__(self, dim, density, r_min, r_max):
        if not 0 <= r_min < r_max < math.inf:
            raise ValueError("need 0 <= r_min < r_max < inf")
        self.dim = int(dim)
        self.density = float(density)
        self.r_min = float(r_min)
        self.r_max = float(r_max)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where((r >= self.r_min) & (r <= self.r_max), self.density, 0.0)

    def moment(self, k, a=0.0, b=math.inf):
        lo = max(a, self.r_min)
        hi = min(b, self.r_max)
        return self.density * _power_integral(k, lo, hi)

    def tail_decay(self):
        return math.inf

    def sample_radius(self, u, eps):
        d = self.dim
        lo = max(eps, self.r_min) ** d
        hi = self.r_max ** d
        return (lo + np.asarray(u, dtype=float) * (hi - lo)) ** (1.0 / d)


class RadialEnvelope:
    """Dominating measure Pi_n(dz) = level(n) * rho(|z|) dz.

    ``level`` is a constant or a callable of the localization index n.
    Directions are isotropic, so sampling is radius times a uniform direction.
    """

    def __init__(self, profile, level=1.0):
        self.profile = profile
        self.dim = profile.dim
        self._level = level

    def level(self, n):
        if callable(self._level):
            return np.asarray(self._level(n), dtype=float)
        return np.broadcast_to(float(self._level), np.shape(n)).astype(float)

    def __call__(self, z, n=1):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        return self.level(n) * self.profile(r)

    def mass_beyond(self, eps, n=1):
        """Pi_n(|z| >= eps)."""
        area = sphere_area(self.dim)
        return self.level(n) * area * self.profile.moment(self.dim - 1, eps, math.inf)

    def truncated_second_moment(self, n=1, radius=math.inf):
        """Integral of (1 ^ |z|^2) Pi_n(dz) over |z| < radius, closed form."""
        d = self.dim
        area = sphere_area(d)
        near = self.profile.moment(d + 1, 0.0, min(1.0, radius))
        far = self.profile.moment(d - 1, 1.0, radius) if radius > 1.0 else 0.0
        return float(self.level(n) * area * (near + far))

    def sample(self, u_radius, direction_noise, eps):
        """Jump proposals with |z| >= eps.

        ``direction_noise`` has shape (..., d): uniforms (d = 1, sign only)
        or standard normals (d >= 2) that are normalized to the sphere.
        """
        r = self.profile.sample_radius(u_radius, eps)
        if self.dim == 1:
            sign = np.where(direction_noise[..., 0] < 0.5, 1.0, -1.0)
            return (r * sign)[..., None]
        g = direction_noise
        g = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return r[..., None] * g


class TiltedRadialKernel:
    """pi_i(x, z) = rho(|z|) * (level(x, i) + tilt(x, i) . z/|z|).

    ``level`` returns shape (...,) and ``tilt`` shape (..., d); the kernel is
    nonnegative when ``|tilt| <= level``.  Odd (tilted) and even parts give
    the simulator's compensator drift and small-jump covariance in closed
    form.
    """

    def __init__(self, profile, level, tilt=None):
        self.profile = profile
        self.dim = profile.dim
        self.level = level
        self.tilt = tilt

    def __call__(self, x, i, z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        val = np.asarray(self.level(x, i), dtype=float)
        if self.tilt is not None:
            with np.errstate(invalid="ignore", divide="ignore"):
                zhat = z / r[..., None]
            zhat = np.nan_to_num(zhat)
            val = val + np.sum(np.asarray(self.tilt(x, i), dtype=float) * zhat, axis=-1)
        return self.profile(r) * val

    def compensator(self, x, i, eps, radius=1.0):
        """Integral of z * pi_i(x, z) over eps <= |z| < radius."""
        x = np.asarray(x, dtype=float)
        if self.tilt is None or eps >= radius:
            return np.zeros(x.shape)
        d = self.dim
        c = sphere_area(d) / d * self.profile.moment(d, eps, radius)
        return c * np.broadcast_to(self.tilt(x, i), x.shape)

    def small_cov(self, x, i, eps):
        """Integral of z z' pi_i(x, z) over |z| < eps."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        c = sphere_area(d) / d * self.profile.moment(d + 1, 0.0, eps)
        lev = np.broadcast_to(self.level(x, i), x.shape[:-1])
        return c * lev[..., None, None] * np.eye(d)

    def moment_outside(self, x, i, power, radius):
        """Integral of |z|**power * pi_i(x, z) over |z| > radius (even part only
        contributes)."""
        d = self.dim
        lev = np.asarray(self.level(x, i), dtype=float)
        return sphere_area(d) * self.profile.moment(d - 1 + power, radius, math.inf) * lev
