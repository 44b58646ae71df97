"""Vectorized adaptive Gauss-Kronrod quadrature and sphere rules."""

from dataclasses import dataclass

import numpy as np

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes sit at the odd positions of the Kronrod node list.
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


class QuadratureError(RuntimeError):
    """Requested accuracy was not reached."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class AdaptiveResult:
    value: float
    error: float
    n_intervals: int
    converged: bool


def gauss_kronrod(func, a, b, abs_tol, rel_tol=0.0, max_levels=60, max_intervals=20000,
                  points=()):
    """Integrate ``func`` over [a, b] by vectorized adaptive bisection.

    ``func`` maps an array of nodes (any shape) to values of the same shape.
    Every level evaluates all unconverged intervals in one call.  An interval
    is accepted once its Kronrod-Gauss discrepancy is below its share of the
    tolerance (proportional to its length).  Interior ``points`` start the
    bisection from the corresponding subintervals.
    """
    a = float(a)
    b = float(b)
    if b <= a:
        return AdaptiveResult(0.0, 0.0, 0, True)
    edges = np.unique(np.concatenate([[a, b], [p for p in points if a < p < b]]))
    lo = edges[:-1]
    hi = edges[1:]
    total = 0.0
    err = 0.0
    n_done = 0
    length = b - a
    budget = abs_tol
    converged = True
    for level in range(max_levels):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        x = mid[:, None] + half[:, None] * NODES[None, :]
        fx = np.asarray(func(x), dtype=float)
        k = half * (fx @ KRONROD_WEIGHTS)
        g = half * (fx @ GAUSS_WEIGHTS)
        e = np.abs(k - g)
        if rel_tol > 0:
            budget = max(abs_tol, rel_tol * abs(total + k.sum()))
        share = budget * (hi - lo) / length
        ok = (e <= share) | (half <= 1e-15 * max(1.0, abs(a), abs(b)))
        total += k[ok].sum()
        err += e[ok].sum()
        n_done += int(ok.sum())
        if ok.all():
            break
        lo_bad = lo[~ok]
        hi_bad = hi[~ok]
        mid_bad = mid[~ok]
        if 2 * lo_bad.size > max_intervals or level == max_levels - 1:
            total += k[~ok].sum()
            err += e[~ok].sum()
            n_done += int((~ok).sum())
            converged = False
            break
        lo = np.concatenate([lo_bad, mid_bad])
        hi = np.concatenate([mid_bad, hi_bad])
    return AdaptiveResult(float(total), float(err), n_done, converged)


def _panel_rule(edges):
    """Composite Gauss-Kronrod nodes on consecutive panels [edges[k], edges[k+1]]."""
    lo = np.asarray(edges[:-1])[:, None]
    hi = np.asarray(edges[1:])[:, None]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * NODES).ravel()
    return nodes, (half * KRONROD_WEIGHTS).ravel(), (half * GAUSS_WEIGHTS).ravel()


def sphere_rule(dim, order, focus=None, cone=None):
    """Quadrature nodes and weights on the unit sphere S^{dim-1}.

    Weights sum to the sphere's surface area.  Returns ``(dirs, w, w_coarse)``
    where ``w_coarse`` is a lower-order rule on the same nodes (zero weight
    on the unused nodes) used for an angular error estimate.

    In two dimensions a ``focus`` direction and ``cone`` half-angle switch to
    composite Gauss-Kronrod panels, half of them packed inside the cone,
    for integrands with localized angular structure.
    """
    if dim == 2 and focus is not None and cone is not None and cone < 2.0:
        theta_c = float(np.arctan2(focus[1], focus[0]))
        panels = max(1, int(order) // 16)
        inside = np.linspace(theta_c - cone, theta_c + cone, panels + 1)
        outside = np.linspace(theta_c + cone, theta_c + 2 * np.pi - cone, panels + 1)[1:]
        theta, w, wc = _panel_rule(np.concatenate([inside, outside]))
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return dirs, w, wc
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
        return dirs, w, w.copy()
    if dim == 2:
        n = max(4, 2 * (int(order) // 2))
        theta = 2 * np.pi * np.arange(n) / n
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        w = np.full(n, 2 * np.pi / n)
        w_coarse = np.zeros(n)
        w_coarse[::2] = 4 * np.pi / n
        return dirs, w, w_coarse
    if dim == 3:
        n_polar = max(2, int(order) // 2)
        n_az = 2 * (max(4, int(order)) // 2)
        t, wt = np.polynomial.legendre.leggauss(n_polar)
        phi = 2 * np.pi * np.arange(n_az) / n_az
        ct = np.repeat(t, n_az)
        st = np.sqrt(1 - ct ** 2)
        ph = np.tile(phi, n_polar)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
        w = np.repeat(wt, n_az) * (2 * np.pi / n_az)
        # coarse: every other azimuth, same polar rule
        wc_az = np.zeros(n_az)
        wc_az[::2] = 4 * np.pi / n_az
        w_coarse = np.repeat(wt, n_az) * np.tile(wc_az, n_polar)
        return dirs, w, w_coarse
    raise NotImplementedError(f"quadrature supports dimensions 1-3, got {dim}")


def sphere_area(dim):
    return {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi}[dim]


def fibonacci_sphere(n, dim):
    """Quasi-uniform directions on S^{dim-1} (exact axes in 1-d)."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        theta = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dim == 3:
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        r = np.sqrt(1 - z ** 2)
        phi = np.pi * (1 + 5 ** 0.5) * k
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    raise NotImplementedError(f"directions supported for dimensions 1-3, got {dim}")


def shell_integral(g, dim, r_lo, r_hi, abs_tol, rel_tol=0.0, angular_order=32,
                   max_levels=60, focus=None, cone=None, breaks=()):
    """Integrate g(z) over the shell r_lo <= |z| <= r_hi (0 < r_lo).

    Radial direction is adaptive in log r; angles use ``sphere_rule``.
    ``g`` receives z with shape (..., n_dirs, dim) and returns (..., n_dirs).
    Returns the adaptive result with the angular discrepancy (fine rule
    minus coarse rule) added to the error.
    """
    if r_hi <= r_lo:
        return AdaptiveResult(0.0, 0.0, 0, True)
    dirs, w, wc = sphere_rule(dim, angular_order, focus, cone)

    def radial(t):
        r = np.exp(t)
        z = r[..., None, None] * dirs
        vals = np.asarray(g(z), dtype=float)
        jac = r ** dim
        return (vals @ w) * jac, (vals @ wc) * jac

    def fine(t):
        return radial(t)[0]

    res = gauss_kronrod(fine, np.log(r_lo), np.log(r_hi), abs_tol, rel_tol, max_levels,
                        points=[np.log(p) for p in breaks if r_lo < p < r_hi])
    if dim > 1:
        # angular error from the coarse rule on a fixed radial grid
        t = np.linspace(np.log(r_lo), np.log(r_hi), 257)
        f1, f0 = radial(t)
        ang = float(np.trapezoid(np.abs(f1 - f0), t))
        res = AdaptiveResult(res.value, res.error + ang, res.n_intervals, res.converged)
    return res
