"""Exact geometry of the Poincare ball model of hyperbolic space.

Points of H^d are arrays of Euclidean coordinates strictly inside the unit
ball. A hyperbolic line is stored as an :class:`OrientedLine`: the oriented
normal ``u_H`` of the totally geodesic hypersurface ``H`` through the origin
that the line crosses orthogonally, together with the crossing point (the
*foot*) ``x = L & H``.

The radial functions ``gamma``, ``a_func``, ``beta`` are written in forms that
avoid catastrophic cancellation, both near the origin and near the ideal
boundary, and accept scalars or arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

COSH1 = float(np.cosh(1.0))
SINH1 = float(np.sinh(1.0))
BETA0 = float(np.arccos(1.0 / COSH1))
# Euclidean radius of a point at hyperbolic distance 1 from o.
R0 = float(np.tanh(0.5))
# Below this Euclidean norm a foot is treated as the origin.
ORIGIN_EPS = 1e-9
UNIT_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a geometric function."""


def _as_float(x):
    return np.asarray(x, dtype=float)


def _check_inside(p, name="point"):
    p = _as_float(p)
    sq = np.sum(p * p, axis=-1)
    if np.any(sq >= 1.0) or not np.all(np.isfinite(sq)):
        raise DomainError(f"{name} must lie strictly inside the unit ball")
    return p


def check_ball_point(p):
    """Validate and return ``p`` as a float array inside the open unit ball."""
    return _check_inside(p)


@dataclass(frozen=True)
class SphericalCap:
    """Open cap ``{v : d_s(center, v) < radius}`` on the unit sphere."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _as_float(self.center)
        if c.ndim != 1 or abs(np.linalg.norm(c) - 1.0) > UNIT_TOL:
            raise DomainError("cap center must be a unit vector")
        if not 0.0 < self.radius <= np.pi:
            raise DomainError("cap radius must lie in (0, pi]")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def contains(self, v):
        return sphere_dist(self.center, v) < self.radius


@dataclass(frozen=True)
class OrientedLine:
    """Hyperbolic line ``L(H, x)`` with a chosen orientation of ``H``."""

    normal: np.ndarray
    foot: np.ndarray

    def __post_init__(self):
        u = _as_float(self.normal)
        x = _check_inside(self.foot, "foot")
        if u.ndim != 1 or u.shape != x.shape or u.shape[0] < 2:
            raise DomainError("normal and foot must be vectors of equal dimension >= 2")
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise DomainError("normal must be a unit vector")
        if abs(np.dot(u, x)) > UNIT_TOL:
            raise DomainError("foot must lie in the hypersurface orthogonal to normal")
        object.__setattr__(self, "normal", u)
        object.__setattr__(self, "foot", x)

    @property
    def dim(self):
        return self.normal.shape[0]

    @property
    def foot_norm(self):
        return float(np.linalg.norm(self.foot))


# ---------------------------------------------------------------------------
# metric and charts


def hyp_dist(x, y):
    """Hyperbolic distance in the Poincare ball.

    Uses ``d = 2 asinh(|x - y| / sqrt((1 - |x|^2)(1 - |y|^2)))``, which equals
    ``acosh(1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2)))`` but keeps full relative
    precision for nearby points.
    """
    x = _check_inside(x)
    y = _check_inside(y)
    diff = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    denom = np.sqrt((1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1)))
    return 2.0 * np.arcsinh(diff / denom)


def sphere_dist(u, v):
    """Spherical (angular) distance between unit vectors."""
    u = _as_float(u)
    v = _as_float(v)
    # 2 atan2(|u - v|, |u + v|) stays accurate near 0 and near pi
    diff = np.sqrt(np.sum((u - v) ** 2, axis=-1))
    summ = np.sqrt(np.sum((u + v) ** 2, axis=-1))
    return 2.0 * np.arctan2(diff, summ)


def to_hyperboloid(p):
    """Lift a ball point to the hyperboloid ``-X0^2 + |X|^2 = -1, X0 > 0``."""
    p = _check_inside(p)
    sq = np.sum(p * p, axis=-1, keepdims=True)
    denom = 1.0 - sq
    return np.concatenate([(1.0 + sq) / denom, 2.0 * p / denom], axis=-1)


def from_hyperboloid(q):
    q = _as_float(q)
    return q[..., 1:] / (1.0 + q[..., :1])


def minkowski_dot(a, b):
    """Bilinear form of signature (-, +, ..., +)."""
    a = _as_float(a)
    b = _as_float(b)
    return -a[..., 0] * b[..., 0] + np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def mobius_add(x, y):
    """Mobius addition; ``z -> x (+) z`` is an isometry sending ``o`` to ``x``."""
    x = _as_float(x)
    y = _as_float(y)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    xx = np.sum(x * x, axis=-1, keepdims=True)
    yy = np.sum(y * y, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * xy + yy) * x + (1.0 - xx) * y
    return num / (1.0 + 2.0 * xy + xx * yy)


def geodesic_step(x, direction, dist):
    """Point at hyperbolic distance ``dist`` from ``x`` along the geodesic
    leaving ``x`` in the Euclidean direction ``direction`` (unit vector)."""
    direction = _as_float(direction)
    dist = _as_float(dist)
    return mobius_add(x, np.tanh(dist / 2.0)[..., None] * direction)


def radial_projection(x):
    """``x / |x|``, with the convention ``Pi_rad(o) = (1, 0, ..., 0)``."""
    x = _as_float(x)
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    e1 = np.zeros_like(x)
    e1[..., 0] = 1.0
    small = nrm < ORIGIN_EPS
    safe = np.where(small, 1.0, nrm)
    return np.where(small, e1, x / safe)


# ---------------------------------------------------------------------------
# radial functions


def _check_unit_interval(t, lo_open, name):
    t = _as_float(t)
    bad = (t <= 0.0) if lo_open else (t < 0.0)
    if np.any(bad | (t >= 1.0)) or not np.all(np.isfinite(t)):
        interval = "(0, 1)" if lo_open else "[0, 1)"
        raise DomainError(f"{name} requires arguments in {interval}")
    return t


def gamma(t):
    """Half the angular length of the radial shadow of a line at Euclidean
    distance ``t`` from the origin: ``arctan((1 - t^2) / (2t))``, ``pi/2`` at 0."""
    t = _check_unit_interval(t, False, "gamma")
    return np.arctan2((1.0 - t) * (1.0 + t), 2.0 * t)


def gamma_of_h(h):
    """``gamma`` expressed in hyperbolic distance: ``arccot(sinh h)``."""
    h = _as_float(h)
    return np.arctan2(1.0, np.sinh(h))


def _a_parts(t):
    # returns a(t) and 1 - a(t), both without cancellation
    e = (1.0 - t) * (1.0 + t)
    root = np.sqrt(COSH1**2 * e**2 + 4.0 * t**2)
    denom = root + COSH1 * e
    a = 2.0 / denom
    one_minus_a = e * (COSH1 + (COSH1**2 * e - 4.0) / (root + 2.0)) / denom
    return a, one_minus_a


def a_func(t):
    """Positive root of ``t^2 a^2 + cosh(1)(1 - t^2) a - 1 = 0``.

    Evaluated as ``2 / (sqrt(cosh^2(1)(1-t^2)^2 + 4t^2) + cosh(1)(1-t^2))``,
    the rationalised form of the textbook quotient, so the limit
    ``1/cosh(1)`` at ``t -> 0`` is reached smoothly.
    """
    t = _check_unit_interval(t, True, "a_func")
    return _a_parts(t)[0]


def a_func_quotient(t):
    """Unrationalised closed form of :func:`a_func`; loses digits near 0."""
    t = _check_unit_interval(t, True, "a_func_quotient")
    e = 1.0 - t * t
    return (np.sqrt(COSH1**2 * e**2 + 4.0 * t**2) - COSH1 * e) / (2.0 * t**2)


def endcap_c1_c2(a, t):
    """The two coefficients whose equality defines ``a(t)``."""
    c = (COSH1 - 1.0) / 2.0
    e = 1.0 - t * t
    c1 = 2.0 * a * (1.0 + c * e) - 1.0 + a * a * t * t
    c2 = (2.0 * t * t - 2.0 * c * e) * a + 1.0 - a * a * t * t
    return c1, c2


def beta(t):
    """Angular radius of the endcap of a cylinder whose foot has norm ``t``.

    ``cos beta = a(1 + t^2) / (1 + a^2 t^2)``; evaluated through
    ``tan^2(beta/2) = (1 - a)(1 - a t^2) / ((1 + a)(1 + a t^2))`` so that tiny
    radii near the ideal boundary keep full relative precision.
    """
    t = _check_unit_interval(t, False, "beta")
    a, one_minus_a = _a_parts(t)
    e = (1.0 - t) * (1.0 + t)
    num = one_minus_a * (e + t * t * one_minus_a)
    den = (1.0 + a) * (1.0 + a * t * t)
    return 2.0 * np.arctan(np.sqrt(num / den))


def beta_via_h(h):
    """Endcap radius as a function of the hyperbolic distance ``h = d_h(o, x)``.

    ``(gt(h-1) - gt(h+1)) / 2`` for ``h > 1`` and
    ``(pi - gt(h+1) - gt(1-h)) / 2`` for ``0 <= h <= 1`` with
    ``gt = arccot(sinh(.))``.
    """
    h = _as_float(h)
    if np.any(h < 0.0) or not np.all(np.isfinite(h)):
        raise DomainError("beta_via_h requires h >= 0")
    far = 0.5 * (gamma_of_h(h - 1.0) - gamma_of_h(h + 1.0))
    near = 0.5 * (np.pi - gamma_of_h(h + 1.0) - gamma_of_h(1.0 - h))
    return np.where(h > 1.0, far, near)


def h_of_t(t):
    """Hyperbolic distance from ``o`` of a point with Euclidean norm ``t``."""
    t = _as_float(t)
    return np.arcsinh(2.0 * t / ((1.0 - t) * (1.0 + t)))


def t_of_h(h):
    """Inverse of :func:`h_of_t`, i.e. ``sqrt((cosh h - 1)/(cosh h + 1))``."""
    return np.tanh(_as_float(h) / 2.0)


# ---------------------------------------------------------------------------
# lines, endpoints, endcaps


def _line_arrays(normals, feet):
    u = _as_float(normals)
    x = _as_float(feet)
    t = np.linalg.norm(x, axis=-1)
    return u, x, t


def endpoint_arrays(normals, feet):
    """Vectorised :func:`endpoints` for stacked normals and feet."""
    u, x, t = _line_arrays(normals, feet)
    origin = t < ORIGIN_EPS
    g = gamma(np.where(origin, 0.5, t))
    # exact +-u_H at the origin
    cos_g = np.where(origin, 0.0, np.cos(g))
    sin_g = np.where(origin, 1.0, np.sin(g))
    base = cos_g[..., None] * radial_projection(x)
    up = sin_g[..., None] * u
    return base + up, base - up


def endpoints(line):
    """Ideal endpoints ``(s1, s2)`` of ``line``; ``s1`` lies on the ``+u_H`` side."""
    s1, s2 = endpoint_arrays(line.normal, line.foot)
    return s1, s2


def endcap_arrays(normals, feet):
    """Centers and radii of the endcaps of stacked lines."""
    u, x, t = _line_arrays(normals, feet)
    origin = t < ORIGIN_EPS
    ts = np.where(origin, 0.5, t)
    shifted = np.where(origin, 0.0, a_func(ts) * ts)
    g = gamma(shifted)
    cos_g = np.where(origin, 0.0, np.cos(g))
    sin_g = np.where(origin, 1.0, np.sin(g))
    centers = cos_g[..., None] * radial_projection(x) + sin_g[..., None] * u
    radii = np.where(origin, BETA0, beta(np.where(origin, 0.0, t)))
    return centers, radii


def endcap(line):
    """The open cap formed by the ``s1`` endpoints of all lines of the cylinder."""
    centers, radii = endcap_arrays(line.normal, line.foot)
    return SphericalCap(centers / np.linalg.norm(centers), float(radii))


def line_from_s1(normal, v):
    """Foot ``y`` in ``H = normal^perp`` of the H-orthogonal line whose ``s1``
    endpoint is the ideal point ``v`` (requires ``<v, normal> > 0``)."""
    u = _as_float(normal)
    v = _as_float(v)
    s = np.sum(v * u, axis=-1, keepdims=True)
    if np.any(s <= 0.0):
        raise DomainError("v must lie on the +normal side of H")
    w = v - s * u
    # v = cos(g) w/|w| + sin(g) u  ->  y = (1 - sin g)/cos g * w/|w| = w / (1 + s)
    return w / (1.0 + s)


def geodesic_point(foot, normal, s):
    """Point at signed hyperbolic distance ``s`` from ``foot`` along the line
    through ``foot`` orthogonal to ``H = normal^perp``."""
    y = to_hyperboloid(foot)
    u = _as_float(normal)
    s = _as_float(s)[..., None]
    un = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u], axis=-1)
    return from_hyperboloid(np.cosh(s) * y + np.sinh(s) * un)


def project_to_H(p, normal):
    """Hyperbolic nearest point of ``p`` on ``H = normal^perp``.

    In the hyperboloid chart ``q = (P - <P,U> U) / sqrt(1 + <P,U>^2)`` with
    ``U = (0, normal)`` spacelike; the distance from ``p`` to ``H`` is
    ``asinh(|<P,U>|)``.
    """
    big_p = to_hyperboloid(p)
    u = _as_float(normal)
    un = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u], axis=-1)
    s = minkowski_dot(big_p, un)[..., None]
    q = (big_p - s * un) / np.sqrt(1.0 + s * s)
    return from_hyperboloid(q)


def dist_to_H(p, normal):
    big_p = to_hyperboloid(p)
    u = _as_float(normal)
    un = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u], axis=-1)
    return np.arcsinh(np.abs(minkowski_dot(big_p, un)))


def cylinder_contains(line, p):
    """Whether ``p`` (one point or a stack) lies in the open fat cylinder of ``line``."""
    foot = project_to_H(p, line.normal)
    return hyp_dist(foot, line.foot) < 1.0


def caps_overlap(c1, r1, c2, r2):
    return (r1 + r2 > np.pi) | (sphere_dist(c1, c2) < r1 + r2)


@dataclass
class IntersectionResult:
    found: bool
    witness: np.ndarray | None
    method: str
    exhausted: bool = False

    def __bool__(self):
        return self.found


def _slerp(u, v, theta):
    # point at angle theta from u on the great circle through u and v
    w = v - np.dot(u, v) * u
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return u.copy()
    return np.cos(theta) * u + np.sin(theta) * (w / nw)


def _common_cap_point(c1, r1, c2, r2):
    """A point inside both caps, chosen with a large inscribed margin."""
    dist = float(sphere_dist(c1, c2))
    if dist < r2 and r1 >= r2 - dist:
        return c1.copy()
    if dist < r1 and r2 >= r1 - dist:
        return c2.copy()
    lo = max(dist - r2, -r1)
    hi = min(r1, dist + r2)
    return _slerp(c1, c2, 0.5 * (lo + hi))


def _constructive_witness(l1, l2, u, max_halvings=60):
    for k in range(1, max_halvings + 1):
        q = (1.0 - 2.0**-k) * u
        if cylinder_contains(l1, q) and cylinder_contains(l2, q):
            return q
    return None


def cylinders_intersect(l1, l2, budget=10_000, refine_steps=50, seed=0):
    """Decide whether the fat cylinders of two lines meet, with a witness.

    When the endcaps overlap, a common point is built constructively: pick
    ``u`` inside both endcaps and move radially toward it until the point
    lies in both cylinders. Otherwise a budgeted random search over points of
    the first cylinder, followed by Nelder-Mead refinement of the best
    candidates, looks for a point of the second. ``exhausted`` flags a
    negative answer that only means "not found within budget".
    """
    if np.array_equal(l1.normal, l2.normal) and np.array_equal(l1.foot, l2.foot):
        return IntersectionResult(True, l1.foot.copy(), "identical")
    cap1, cap2 = endcap(l1), endcap(l2)
    if caps_overlap(cap1.center, cap1.radius, cap2.center, cap2.radius):
        u = _common_cap_point(cap1.center, cap1.radius, cap2.center, cap2.radius)
        u = u / np.linalg.norm(u)
        q = _constructive_witness(l1, l2, u)
        if q is not None:
            return IntersectionResult(True, q, "endcap")
    return _search_intersection(l1, l2, budget, refine_steps, seed)


def _cylinder_param_point(line, basis, params):
    # params: (..., d) = (d-1 coordinates of a tangent offset in H, signed height)
    k = basis.shape[0]
    offs = params[..., :k]
    r = np.linalg.norm(offs, axis=-1)
    # squash the offset radius into [0, 1) hyperbolic distance
    rho = np.tanh(r)
    direction = np.where(r[..., None] > 0, offs / np.where(r > 0, r, 1.0)[..., None], 0.0) @ basis
    # direction must be tangent to H at the foot; Mobius steps from x keep H
    y = geodesic_step(np.broadcast_to(line.foot, direction.shape), direction, rho)
    return geodesic_point(y, line.normal, params[..., k])


def _h_basis(normal):
    d = normal.shape[0]
    q, _ = np.linalg.qr(np.column_stack([normal, np.eye(d)]))
    return q[:, 1:d].T


def _search_intersection(l1, l2, budget, refine_steps, seed):
    rng = np.random.default_rng(seed)
    d = l1.dim
    basis = _h_basis(l1.normal)

    def score(params):
        pts = _cylinder_param_point(l1, basis, params)
        pts = np.clip(pts, -1.0, 1.0)
        nrm = np.linalg.norm(pts, axis=-1)
        pts = np.where((nrm >= 1.0 - 1e-15)[..., None], pts * ((1.0 - 1e-15) / np.maximum(nrm, 1e-300))[..., None], pts)
        return hyp_dist(project_to_H(pts, l2.normal), np.broadcast_to(l2.foot, pts.shape)) - 1.0, pts

    cand = np.empty((budget, d))
    cand[:, : d - 1] = rng.normal(size=(budget, d - 1)) * 0.8
    cand[:, d - 1] = rng.uniform(-12.0, 12.0, size=budget)
    vals, pts = score(cand)
    best = int(np.argmin(vals))
    if vals[best] < 0.0 and cylinder_contains(l1, pts[best]):
        return IntersectionResult(True, pts[best], "search")
    for idx in np.argsort(vals)[:5]:
        res = minimize(
            lambda z: float(score(z)[0]),
            cand[idx],
            method="Nelder-Mead",
            options={"maxiter": refine_steps * d, "xatol": 1e-10, "fatol": 1e-12},
        )
        val, pt = score(res.x)
        if val < 0.0 and cylinder_contains(l1, pt) and cylinder_contains(l2, pt):
            return IntersectionResult(True, pt, "search")
    return IntersectionResult(False, None, "search", exhausted=True)
