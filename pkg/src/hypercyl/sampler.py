"""Seeded Poisson process generators.

* hyperbolic lines in a radius window, sampled through the exact inverse CDF
  of the radial density ``cosh(h) sinh(h)^{d-2}``;
* the induced cap processes (endcaps, radial shadows and the rescaled family
  with radii ``c gamma``);
* caps sampled directly from the radius density ``g_c``;
* the Euclidean fractal ball process with a truncated power-law radius law.

Each process is truncated to a window of finite mass, and the Poisson count
is drawn with the closed-form mass returned by the matching ``*_mass``
function. Radii are drawn before centres and the output is sorted by a
canonical key, so a given ``(inputs, seed)`` reproduces bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from . import hypgeo as hg
from .rng import Seed, as_seed, stream, uniform_sphere


def sphere_area(d):
    """``omega_d = 2 pi^{d/2} / Gamma(d/2)``, the area of ``S^{d-1}``."""
    return 2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0)


# ---------------------------------------------------------------------------
# line process


@dataclass(frozen=True)
class LineWindow:
    """Lines whose hyperbolic distance from the origin is at most ``h_max``."""

    h_max: float
    dim: int

    def __post_init__(self):
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        if int(self.dim) < 2:
            raise ValueError("dimension must be at least 2")


@dataclass
class LineSet:
    """A finite line configuration stored as stacked normals and feet."""

    normals: np.ndarray
    feet: np.ndarray

    def __len__(self):
        return self.normals.shape[0]

    def __iter__(self):
        for u, x in zip(self.normals, self.feet):
            yield hg.OrientedLine(u, x)

    def __getitem__(self, k):
        return hg.OrientedLine(self.normals[k], self.feet[k])

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def foot_norms(self):
        return np.linalg.norm(self.feet, axis=1)

    def subset(self, mask):
        return LineSet(self.normals[mask], self.feet[mask])

    @classmethod
    def from_lines(cls, lines, dim=None):
        lines = list(lines)
        if not lines:
            if dim is None:
                raise ValueError("dimension needed for an empty line list")
            return cls(np.empty((0, dim)), np.empty((0, dim)))
        return cls(np.array([l.normal for l in lines]), np.array([l.foot for l in lines]))


def line_window_mass(window):
    """Expected line count per unit intensity inside ``window``.

    ``omega_{d-2}/(d-1) sinh^{d-1}(h_max)`` for ``d >= 3``; for ``d = 2``
    the degenerate ``omega_0`` is replaced by the direct count
    ``2 sinh(h_max)``.
    """
    d = window.dim
    if d == 2:
        return 2.0 * np.sinh(window.h_max)
    return sphere_area(d - 2) / (d - 1) * np.sinh(window.h_max) ** (d - 1)


def _unit_in_complement(rng, normals):
    # uniform unit vectors orthogonal to each normal
    v = rng.standard_normal(normals.shape)
    v -= np.sum(v * normals, axis=1, keepdims=True) * normals
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # second pass removes rounding residue of order 1e-16
    v -= np.sum(v * normals, axis=1, keepdims=True) * normals
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _canonical_order(*cols):
    keys = np.column_stack(cols)
    return np.lexsort(keys.T[::-1]) if keys.size else np.arange(keys.shape[0])


def sample_line_radii(rng, n, window):
    """Hyperbolic distances from ``o`` with density ``cosh h sinh^{d-2} h`` on ``[0, h_max]``."""
    k = window.dim - 1
    u = rng.random(n)
    return np.arcsinh((u * np.sinh(window.h_max) ** k) ** (1.0 / k))


def sample_lines(lam, window, seed):
    """Poisson line process of intensity ``lam`` restricted to ``window``."""
    if not lam > 0:
        raise ValueError("intensity must be positive")
    rng = stream(as_seed(seed), "lines")
    d = window.dim
    n = int(rng.poisson(lam * line_window_mass(window)))
    h = sample_line_radii(rng, n, window)
    normals = uniform_sphere(rng, n, d)
    dirs = _unit_in_complement(rng, normals)
    feet = np.tanh(h / 2.0)[:, None] * dirs
    order = _canonical_order(h, normals, feet)
    return LineSet(normals[order], feet[order])


# ---------------------------------------------------------------------------
# cap processes


@dataclass
class CapSet:
    """A finite cap configuration stored as stacked centres and radii."""

    centers: np.ndarray
    radii: np.ndarray

    def __len__(self):
        return self.radii.shape[0]

    def __iter__(self):
        for c, r in zip(self.centers, self.radii):
            yield hg.SphericalCap(c, float(r))

    def __getitem__(self, k):
        return hg.SphericalCap(self.centers[k], float(self.radii[k]))

    @property
    def dim(self):
        return self.centers.shape[1]

    def subset(self, mask):
        return CapSet(self.centers[mask], self.radii[mask])

    @classmethod
    def from_caps(cls, caps, dim=None):
        caps = list(caps)
        if not caps:
            if dim is None:
                raise ValueError("dimension needed for an empty cap list")
            return cls(np.empty((0, dim)), np.empty(0))
        return cls(np.array([c.center for c in caps]), np.array([c.radius for c in caps]))


def _normalise(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def map_caps_minus(lines):
    """Endcap of every line, in order."""
    if len(lines) == 0:
        return CapSet(np.empty((0, lines.dim)), np.empty(0))
    centers, radii = hg.endcap_arrays(lines.normals, lines.feet)
    return CapSet(_normalise(centers), np.asarray(radii, dtype=float))


def map_caps_plus(lines, r):
    """Radial shadow caps ``cap(Pi_rad(x), gamma + 2 beta)`` of lines with ``|x| > r``."""
    if r < hg.R0 - 1e-15:
        raise hg.DomainError(f"cut radius must be at least tanh(1/2) = {hg.R0:.6f}")
    t = lines.foot_norms
    keep = t > r
    t = t[keep]
    centers = lines.feet[keep] / t[:, None]
    radii = hg.gamma(t) + 2.0 * hg.beta(t)
    return CapSet(centers, radii)


def f_endcap_angle(t):
    """Tilt angle ``gamma(a(t) t)`` that puts the centre at the endcap centre."""
    t = np.asarray(t, dtype=float)
    small = t < hg.ORIGIN_EPS
    ts = np.where(small, 0.5, t)
    return np.where(small, np.pi / 2.0, hg.gamma(hg.a_func(ts) * ts))


C_ENDCAP = 0.5 * hg.BETA0
C_SHADOW = 2.0 * hg.SINH1 + 1.0
# for |x| > R1 every line has gamma(|x|) < pi / C_SHADOW, since
# (1 - t^2)/(2t) < 1/(2t) <= tan(pi / C_SHADOW)
R1 = 0.5 / np.tan(np.pi / C_SHADOW)
# the same bound with e^2 - e + 1 in place of e^2 + e - 1 = e C_SHADOW; too small
R1_MISPRINTED = 0.5 / np.tan(np.e * np.pi / (np.e**2 - np.e + 1.0))


def map_caps_tilde(lines, c, f=None):
    """Caps ``(cos f Pi_rad(x) + sin f u_H, c gamma(|x|))`` of lines with
    ``gamma(|x|) < pi / max(c, 2)``.

    ``f`` maps foot norms to tilt angles in ``[0, pi/2]``; ``None`` means 0.
    Returns the caps and the boolean mask of retained lines.
    """
    t = lines.foot_norms
    g = hg.gamma(np.minimum(t, np.nextafter(1.0, 0.0)))
    g = np.where(t < hg.ORIGIN_EPS, np.pi / 2.0, g)
    keep = g < np.pi / max(c, 2.0)
    ang = np.zeros_like(t) if f is None else np.asarray(f(t), dtype=float)
    base = hg.radial_projection(lines.feet)
    centers = np.cos(ang)[:, None] * base + np.sin(ang)[:, None] * lines.normals
    return CapSet(_normalise(centers[keep]), c * g[keep]), keep


@dataclass(frozen=True)
class CapProcessSpec:
    """Cap process with radius density ``g_c`` restricted to ``[alpha_min, alpha_max]``."""

    c: float
    alpha_min: float
    alpha_max: float
    dim: int

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if int(self.dim) < 2:
            raise ValueError("dimension must be at least 2")
        top = self.c * np.pi / max(2.0, self.c)
        if not 0 < self.alpha_min < self.alpha_max <= top * (1 + 1e-15):
            raise ValueError(f"need 0 < alpha_min < alpha_max <= {top}")


def g_c(alpha, c, d):
    """Radius density ``c^{-1} cos^{d-2}(alpha/c) / sin^d(alpha/c)``."""
    x = np.asarray(alpha, dtype=float) / c
    return np.cos(x) ** (d - 2) / np.sin(x) ** d / c


def _cot_pow(alpha, c, d):
    x = np.asarray(alpha, dtype=float) / c
    return (np.cos(x) / np.sin(x)) ** (d - 1)


def cap_radius_cdf(alpha, spec):
    """CDF of the radius law of ``spec`` (normalised ``g_c`` on the band)."""
    kmin = _cot_pow(spec.alpha_min, spec.c, spec.dim)
    kmax = _cot_pow(spec.alpha_max, spec.c, spec.dim)
    a = np.clip(alpha, spec.alpha_min, spec.alpha_max)
    return (kmin - _cot_pow(a, spec.c, spec.dim)) / (kmin - kmax)


def cap_band_mass(spec):
    """``int g_c`` over the band: ``(cot^{d-1}(a_min/c) - cot^{d-1}(a_max/c)) / (d-1)``."""
    d = spec.dim
    return float(_cot_pow(spec.alpha_min, spec.c, d) - _cot_pow(spec.alpha_max, spec.c, d)) / (d - 1)


def cap_process_mass(spec):
    """Expected cap count per unit intensity: ``omega_d`` times the band mass."""
    return sphere_area(spec.dim) * cap_band_mass(spec)


def sample_cap_radii(rng, n, spec):
    d, c = spec.dim, spec.c
    kmin = _cot_pow(spec.alpha_min, c, d)
    kmax = _cot_pow(spec.alpha_max, c, d)
    k = kmin - rng.random(n) * (kmin - kmax)
    return c * np.arctan2(1.0, np.maximum(k, 0.0) ** (1.0 / (d - 1)))


def sample_caps_direct(lam, spec, seed):
    """Caps with uniform centres and ``g_c`` radii on the band of ``spec``."""
    if not lam >= 0:
        raise ValueError("intensity must be nonnegative")
    rng = stream(as_seed(seed), "caps")
    n = int(rng.poisson(lam * cap_process_mass(spec)))
    radii = sample_cap_radii(rng, n, spec)
    centers = uniform_sphere(rng, n, spec.dim)
    order = _canonical_order(radii, centers)
    return CapSet(centers[order], radii[order])


# ---------------------------------------------------------------------------
# Euclidean ball process


@dataclass(frozen=True)
class BallProcessSpec:
    """Balls with uniform centres in a box and radius density ``r^{-exponent}``."""

    lo: tuple
    hi: tuple
    r_min: float
    r_max: float = 1.0
    exponent: float | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("window must be a nonempty box")
        if not 0 < self.r_min < self.r_max <= 1.0:
            raise ValueError("need 0 < r_min < r_max <= 1")
        if self.exponent is None:
            object.__setattr__(self, "exponent", float(len(lo) + 1))

    @property
    def dim(self):
        return len(self.lo)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @classmethod
    def cube(cls, half_width, r_min, r_max=1.0, dim=2, exponent=None):
        return cls((-half_width,) * dim, (half_width,) * dim, r_min, r_max, exponent)


def power_band_integral(r_min, r_max, k):
    """``int_{r_min}^{r_max} r^{-k} dr``."""
    if k == 1:
        return float(np.log(r_max / r_min))
    return float((r_min ** (1 - k) - r_max ** (1 - k)) / (k - 1))


def ball_process_mass(spec):
    return spec.volume * power_band_integral(spec.r_min, spec.r_max, spec.exponent)


def sample_ball_radii(rng, n, r_min, r_max, k):
    u = rng.random(n)
    if k == 1:
        return r_min * (r_max / r_min) ** u
    a, b = r_min ** (1 - k), r_max ** (1 - k)
    return (a - u * (a - b)) ** (1.0 / (1 - k))


@dataclass
class BallConfig:
    """A sampled ball configuration with its window metadata."""

    centers: np.ndarray
    radii: np.ndarray
    spec: BallProcessSpec
    lam: float = 0.0
    seed: Seed | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.radii.shape[0]

    @property
    def dim(self):
        return self.spec.dim

    def subset(self, mask):
        return BallConfig(self.centers[mask], self.radii[mask], self.spec, self.lam, self.seed, dict(self.meta))

    def covers(self, pts):
        """Whether each point lies in some (open) ball of the configuration."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(self) == 0:
            return np.zeros(pts.shape[0], dtype=bool)
        from scipy.spatial import cKDTree

        tree = cKDTree(self.centers)
        rmax = float(self.radii.max())
        hits = tree.query_ball_point(pts, rmax)
        out = np.zeros(pts.shape[0], dtype=bool)
        for k, idx in enumerate(hits):
            if idx:
                idx = np.asarray(idx)
                dd = np.linalg.norm(self.centers[idx] - pts[k], axis=1)
                out[k] = bool(np.any(dd < self.radii[idx]))
        return out

    @classmethod
    def empty(cls, spec):
        return cls(np.empty((0, spec.dim)), np.empty(0), spec)


def sample_balls(lam, spec, seed, tag="balls"):
    """Poisson ball process of intensity ``lam`` on the box and band of ``spec``."""
    if not lam >= 0:
        raise ValueError("intensity must be nonnegative")
    seed = as_seed(seed)
    rng = stream(seed, tag)
    n = int(rng.poisson(lam * ball_process_mass(spec)))
    radii = sample_ball_radii(rng, n, spec.r_min, spec.r_max, spec.exponent)
    lo, hi = np.array(spec.lo), np.array(spec.hi)
    centers = lo + rng.random((n, spec.dim)) * (hi - lo)
    order = _canonical_order(radii, centers)
    return BallConfig(centers[order], radii[order], spec, lam, seed)


def band_edges(M, n):
    """``(M^{-n}, M^{-n+1}]`` as floats; the same expression is used everywhere."""
    return float(M) ** -n, float(M) ** (-n + 1)


def band_index(radii, M):
    """Band ``n >= 1`` with ``M^{-n} < r <= M^{-n+1}``, for ``0 < r <= 1``."""
    radii = np.asarray(radii, dtype=float)
    n = np.floor(-np.log(radii) / np.log(M)).astype(int) + 1
    # repair rounding at the band edges against the canonical edge values
    lo = float(M) ** -n.astype(float)
    hi = float(M) ** (-n.astype(float) + 1)
    n = np.where(radii <= lo, n + 1, n)
    n = np.where(radii > hi, n - 1, n)
    return n


def band_filter(cfg, M, n):
    """Sub-configuration with radii in ``(M^{-n}, M^{-n+1}]``."""
    lo, hi = band_edges(M, n)
    return cfg.subset((cfg.radii > lo) & (cfg.radii <= hi))
