"""Twice-differentiable test functions f(x, i) and Lyapunov families.

All callables broadcast: ``x`` has shape (..., d), ``i`` is an integer or an
array broadcastable to ``x.shape[:-1]``.  ``value`` returns (...),
``gradient`` (..., d) and ``hessian`` (..., d, d).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Growth:
    """Asserted growth: |f(y, i)| <= constant * (1 + |y|**power).

    ``power == 0`` means bounded by ``constant``.
    """

    power: float = 0.0
    constant: float = 1.0

    @classmethod
    def bounded(cls, bound):
        return cls(0.0, float(bound))

    @classmethod
    def polynomial(cls, power, constant=1.0):
        return cls(float(power), float(constant))

    @property
    def is_bounded(self):
        return self.power == 0.0

    def bound(self, r):
        """Upper bound for |f| at distance r from the origin."""
        if self.is_bounded:
            return self.constant
        return self.constant * (1.0 + np.asarray(r, dtype=float) ** self.power)


@dataclass(frozen=True)
class TestFunction:
    value: object
    gradient: object
    hessian: object
    growth: Growth = field(default_factory=lambda: Growth.polynomial(2.0))
    name: str = "f"

    __test__ = False  # not a pytest class

    def scaled(self, c):
        return linear_combination([(c, self)])


def linear_combination(terms, name=None):
    """Sum of c_k * f_k for ``terms = [(c_k, f_k), ...]``."""
    terms = [(float(c), f) for c, f in terms]

    def value(x, i):
        return sum(c * f.value(x, i) for c, f in terms)

    def gradient(x, i):
        return sum(c * f.gradient(x, i) for c, f in terms)

    def hessian(x, i):
        return sum(c * f.hessian(x, i) for c, f in terms)

    if all(f.growth.is_bounded for _, f in terms):
        growth = Growth.bounded(sum(abs(c) * f.growth.constant for c, f in terms))
    else:
        power = max(f.growth.power for _, f in terms)
        growth = Growth.polynomial(power, sum(abs(c) * f.growth.constant for c, f in terms))
    label = name or " + ".join(f"{c:g}*{f.name}" for c, f in terms)
    return TestFunction(value, gradient, hessian, growth, label)


def _x(x):
    return np.asarray(x, dtype=float)


def constant(c=1.0):
    def value(x, i):
        x = _x(x)
        return np.full(np.broadcast_shapes(x.shape[:-1], np.shape(i)), float(c))

    def gradient(x, i):
        x = _x(x)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(i)) + x.shape[-1:])

    def hessian(x, i):
        x = _x(x)
        d = x.shape[-1]
        return np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(i)) + (d, d))

    return TestFunction(value, gradient, hessian, Growth.bounded(abs(c)), f"const({c:g})")


def quadratic(scale=1.0):
    """scale * |x|^2."""
    def value(x, i):
        x = _x(x)
        return scale * np.sum(x * x, axis=-1) + 0.0 * np.asarray(i)

    def gradient(x, i):
        x = _x(x)
        return 2.0 * scale * x + 0.0 * np.asarray(i)[..., None]

    def hessian(x, i):
        x = _x(x)
        d = x.shape[-1]
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(i))
        return np.broadcast_to(2.0 * scale * np.eye(d), shape + (d, d)).copy()

    return TestFunction(value, gradient, hessian, Growth.polynomial(2.0, abs(scale)), "quadratic")


def power_radial(delta):
    """|x|**delta outside the unit ball, an even polynomial blend inside.

    Inside, f = p(|x|^2) with p quadratic, matching value, gradient and
    Hessian on |x| = 1; being a polynomial in |x|^2 it is smooth at 0.
    """
    if not 0 < delta < 2:
        raise ValueError(f"delta must lie in (0, 2), got {delta}")
    c1 = delta / 2.0
    c2 = delta * (delta - 2.0) / 8.0

    def _parts(x):
        x = _x(x)
        s = np.sum(x * x, axis=-1)
        inside = s < 1.0
        s_safe = np.where(inside, 1.0, s)
        return x, s, inside, s_safe

    def value(x, i):
        x, s, inside, s_safe = _parts(x)
        t = s - 1.0
        out = np.where(inside, 1.0 + c1 * t + c2 * t * t, s_safe ** (delta / 2.0))
        return out + 0.0 * np.asarray(i)

    def gradient(x, i):
        x, s, inside, s_safe = _parts(x)
        t = s - 1.0
        # f = g(s): grad = 2 g'(s) x
        g1 = np.where(inside, c1 + 2 * c2 * t, (delta / 2.0) * s_safe ** (delta / 2.0 - 1.0))
        return 2.0 * g1[..., None] * x + 0.0 * np.asarray(i)[..., None]

    def hessian(x, i):
        x, s, inside, s_safe = _parts(x)
        t = s - 1.0
        h = delta / 2.0
        g1 = np.where(inside, c1 + 2 * c2 * t, h * s_safe ** (h - 1.0))
        g2 = np.where(inside, 2 * c2, h * (h - 1.0) * s_safe ** (h - 2.0))
        d = x.shape[-1]
        hess = 2.0 * g1[..., None, None] * np.eye(d) + 4.0 * g2[..., None, None] * (
            x[..., :, None] * x[..., None, :])
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(i))
        return np.broadcast_to(hess, shape + (d, d)).copy()

    return TestFunction(value, gradient, hessian, Growth.polynomial(delta, 1.0),
                        f"power-radial({delta:g})")


def radial_linear():
    f = power_radial(1.0)
    return TestFunction(f.value, f.gradient, f.hessian, f.growth, "radial-linear")


def shifted_power_first_coordinate(beta, gamma, cap=None, width=1.0):
    """(x_1 + beta)**gamma where 0 <= x_1 + beta <= cap.

    Below zero the function is 0 (C^2 because gamma > 2).  Above ``cap`` the
    shifted coordinate saturates smoothly, s -> cap + width*tanh((s-cap)/width),
    which keeps the function bounded and C^2.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if gamma <= 2:
        raise ValueError(f"gamma must exceed 2, got {gamma}")
    cap = 2.0 * beta + 8.0 if cap is None else float(cap)
    if cap <= 0 or width <= 0:
        raise ValueError("cap and width must be positive")

    def _psi(x):
        s = _x(x)[..., 0] + beta
        above = s > cap
        th = np.tanh((s - cap) / width)
        psi = np.where(above, cap + width * th, np.maximum(s, 0.0))
        dpsi = np.where(above, 1.0 - th * th, np.where(s > 0, 1.0, 0.0))
        d2psi = np.where(above, -2.0 * th * (1.0 - th * th) / width, 0.0)
        return psi, dpsi, d2psi

    def value(x, i):
        psi, _, _ = _psi(x)
        return psi ** gamma + 0.0 * np.asarray(i)

    def gradient(x, i):
        x = _x(x)
        psi, dpsi, _ = _psi(x)
        g = np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(i)) + x.shape[-1:])
        g[..., 0] = gamma * psi ** (gamma - 1.0) * dpsi
        return g

    def hessian(x, i):
        x = _x(x)
        psi, dpsi, d2psi = _psi(x)
        d = x.shape[-1]
        h = np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(i)) + (d, d))
        h[..., 0, 0] = (gamma * (gamma - 1.0) * psi ** (gamma - 2.0) * dpsi ** 2
                        + gamma * psi ** (gamma - 1.0) * d2psi)
        return h

    bound = (cap + width) ** gamma
    return TestFunction(value, gradient, hessian, Growth.bounded(bound),
                        f"shifted-power-first-coordinate({beta:g},{gamma:g})")


def gaussian_bump(scale=1.0, weights=None):
    """w_i * exp(-|x|^2 / (2 scale^2)), bounded and smooth."""
    weights = None if weights is None else np.asarray(weights, dtype=float)

    def _w(i):
        if weights is None:
            return 1.0
        return weights[np.asarray(i) - 1]

    def value(x, i):
        x = _x(x)
        return _w(i) * np.exp(-np.sum(x * x, axis=-1) / (2 * scale ** 2))

    def gradient(x, i):
        x = _x(x)
        v = value(x, i)
        return (-v / scale ** 2)[..., None] * x

    def hessian(x, i):
        x = _x(x)
        v = value(x, i)
        d = x.shape[-1]
        return (v / scale ** 2)[..., None, None] * (
            x[..., :, None] * x[..., None, :] / scale ** 2 - np.eye(d))

    bound = 1.0 if weights is None else float(np.max(np.abs(weights)))
    return TestFunction(value, gradient, hessian, Growth.bounded(bound), "gaussian-bump")


def check_consistency(f, dim, regimes, rng, n_probe=20, radius=3.0, h=1e-5):
    """Largest Hessian asymmetry and largest relative gradient/FD mismatch."""
    x = rng.uniform(-radius, radius, size=(n_probe, dim))
    i = rng.integers(1, regimes + 1, size=n_probe)
    hess = f.hessian(x, i)
    asym = float(np.max(np.abs(hess - np.swapaxes(hess, -1, -2))))
    grad = f.gradient(x, i)
    fd = np.empty_like(grad)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        fd[:, k] = (f.value(x + e, i) - f.value(x - e, i)) / (2 * h)
    scale = np.maximum(1.0, np.abs(grad))
    mismatch = float(np.max(np.abs(grad - fd) / scale))
    return asym, mismatch


_LYAPUNOV_PARAMS = {
    "power-radial": {"delta"},
    "radial-linear": set(),
    "shifted-power-first-coordinate": {"beta", "gamma", "cap", "width"},
    "quadratic": {"scale"},
}


def builtin_lyapunov(family, params=None):
    """Named Lyapunov candidates.

    ``power-radial`` (delta in (0, 2)), ``radial-linear``,
    ``shifted-power-first-coordinate`` (beta > 0, gamma > 2) and ``quadratic``.
    """
    params = dict(params or {})
    if family not in _LYAPUNOV_PARAMS:
        raise ValueError(f"unknown Lyapunov family {family!r}")
    unknown = set(params) - _LYAPUNOV_PARAMS[family]
    if unknown:
        raise ValueError(f"unknown parameter(s) for {family}: {sorted(unknown)}")
    if family == "power-radial":
        return power_radial(float(params.get("delta", 1.0)))
    if family == "radial-linear":
        return radial_linear()
    if family == "shifted-power-first-coordinate":
        if "beta" not in params or "gamma" not in params:
            raise ValueError("shifted-power-first-coordinate needs beta and gamma")
        return shifted_power_first_coordinate(float(params["beta"]), float(params["gamma"]),
                                              params.get("cap"), float(params.get("width", 1.0)))
    return quadratic(float(params.get("scale", 1.0)))


__all__ = [
    "Growth", "TestFunction", "linear_combination", "constant", "quadratic",
    "power_radial", "radial_linear", "shifted_power_first_coordinate",
    "gaussian_bump", "check_consistency", "builtin_lyapunov",
]
