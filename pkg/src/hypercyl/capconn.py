"""Finite spherical-cap configurations: intersection graph and connectivity,
separated nets, the single-cap coverage certificate, and the vertical
projection of upper-hemisphere caps to balls in ``R^{d-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_legendre

from . import hypgeo as hg
from .rng import as_seed, stream, uniform_sphere
from .sampler import CapSet, _canonical_order, sphere_area
from .unionfind import components, label_components


def chord(angle):
    """Euclidean chord length of a spherical distance, clipped to ``[0, pi]``."""
    return 2.0 * np.sin(np.clip(angle, 0.0, np.pi) / 2.0)


def caps_intersect(a, b):
    """Whether two open caps share a point."""
    return bool(hg.caps_overlap(a.center, a.radius, b.center, b.radius))


def intersection_edges(caps):
    """All pairs ``(i, j), i < j`` of overlapping caps."""
    n = len(caps)
    if n < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    c, r = caps.centers, caps.radii
    rmax = float(r.max())
    if 2.0 * rmax >= np.pi:
        # large caps: brute force in row blocks
        ii, jj = [], []
        step = max(1, 2_000_000 // n)
        for s in range(0, n, step):
            blk = np.arange(s, min(n, s + step))
            dist = hg.sphere_dist(c[blk, None, :], c[None, :, :])
            ok = (r[blk, None] + r[None, :] > np.pi) | (dist < r[blk, None] + r[None, :])
            a, b = np.nonzero(ok)
            a = blk[a]
            keep = a < b
            ii.append(a[keep])
            jj.append(b[keep])
        return np.concatenate(ii), np.concatenate(jj)
    pairs = cKDTree(c).query_pairs(chord(2.0 * rmax) * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    i, j = pairs[:, 0], pairs[:, 1]
    ok = hg.sphere_dist(c[i], c[j]) < r[i] + r[j]
    return i[ok], j[ok]


def connected_components(caps):
    """Partition of cap indices into classes of the overlap graph.

    For open caps the union is a connected set exactly when there is at most
    one class.
    """
    i, j = intersection_edges(caps)
    return components(len(caps), i, j)


def is_connected(caps):
    return len(connected_components(caps)) <= 1


# ---------------------------------------------------------------------------
# separated nets


@dataclass
class SphereNet:
    """A ``2^{-n}``-separated point set on ``S^{d-1}``."""

    points: np.ndarray
    level: int
    saturated: bool
    candidates: int = 0

    @property
    def min_separation(self):
        return 2.0**-self.level

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def net_cardinality_bounds(n, d):
    """Packing bounds ``d 2^{-2(d-1)} 2^{(d-1)n}`` and ``d 2^{2d-1} 2^{(d-1)n}``."""
    base = 2.0 ** ((d - 1) * n)
    return d / 2.0 ** (2 * (d - 1)) * base, d * 2.0 ** (2 * d - 1) * base


def build_net(n, dim, seed, max_rejections=100_000, max_candidates=None):
    """Random sequential packing of ``S^{dim-1}`` at separation ``2^{-n}``.

    Uniform candidates are accepted when their spherical distance to every
    accepted point is at least ``2^{-n}``; the builder stops after
    ``max_rejections`` consecutive rejections (``saturated = True``) or when
    ``max_candidates`` is reached (``saturated = False``).
    """
    if n < 1:
        raise ValueError("net level must be at least 1")
    eps = 2.0**-n
    thr = chord(eps)
    rng = stream(as_seed(seed), f"net-{n}-{dim}")
    pts = np.empty((0, dim))
    tree = None
    run = 0
    used = 0
    batch = 512
    while True:
        if max_candidates is not None:
            batch = min(batch, max_candidates - used)
            if batch <= 0:
                return SphereNet(pts, n, False, used)
        cand = uniform_sphere(rng, batch, dim)
        if tree is not None:
            dd, idx = tree.query(cand, k=1, distance_upper_bound=thr * (1 + 1e-9) + 1e-12)
            near = np.isfinite(dd)
            free = np.ones(batch, dtype=bool)
            free[near] = hg.sphere_dist(cand[near], pts[idx[near]]) >= eps
        else:
            free = np.ones(batch, dtype=bool)
        accepted = []
        stop_at = None
        prev = -1
        # walk the free candidates in order; everything between them is rejected
        for k in np.append(np.flatnonzero(free), batch):
            gap = k - prev - 1
            if run + gap >= max_rejections:
                stop_at = prev + (max_rejections - run)
                break
            run += gap
            if k == batch:
                break
            if not accepted or np.all(hg.sphere_dist(cand[accepted], cand[k]) >= eps):
                accepted.append(k)
                run = 0
            else:
                run += 1
                if run >= max_rejections:
                    stop_at = k
                    break
            prev = k
        used += batch if stop_at is None else stop_at + 1
        if accepted:
            pts = np.vstack([pts, cand[accepted]])
            tree = cKDTree(pts)
        if stop_at is not None:
            return SphereNet(pts, n, True, used)
        rate = len(accepted) / batch
        batch = int(np.clip(8.0 / max(rate, 1e-6), 512, 262_144))


# ---------------------------------------------------------------------------
# coverage


@dataclass
class CoverageResult:
    covered: bool
    witnesses: np.ndarray

    def __bool__(self):
        return self.covered


def _mark_inside(points, centers, radii, strict=True):
    """Boolean mask of points lying in some cap ``d_s < radius`` (or ``<=``)."""
    out = np.zeros(points.shape[0], dtype=bool)
    if len(radii) == 0 or points.shape[0] == 0:
        return out
    keep = radii > 0 if strict else radii >= 0
    centers, radii = centers[keep], radii[keep]
    if len(radii) == 0:
        return out
    # largest caps first; the tree only holds points not yet covered and is
    # rebuilt whenever half of them have been removed
    order = np.argsort(-radii, kind="stable")
    live = np.arange(points.shape[0])
    tree = cKDTree(points)
    removed = 0
    for k in order:
        if removed * 2 > live.size:
            live = live[~out[live]]
            if live.size == 0:
                break
            tree = cKDTree(points[live])
            removed = 0
        idx = tree.query_ball_point(centers[k], chord(radii[k]) * (1 + 1e-9) + 1e-12)
        if not idx:
            continue
        idx = live[np.asarray(idx)]
        idx = idx[~out[idx]]
        if idx.size == 0:
            continue
        dist = hg.sphere_dist(points[idx], centers[k])
        inside = dist < radii[k] if strict else dist <= radii[k]
        out[idx[inside]] = True
        removed += int(inside.sum())
    return out


def coverage_certificate(caps, net):
    """Net points whose ``2^{-n}``-cap lies in no single sampled cap.

    ``covered`` is true when no such point exists, which certifies that the
    caps cover the whole sphere.
    """
    pts = net.points
    if len(caps) == 0:
        return CoverageResult(len(pts) == 0, pts.copy())
    eps = net.min_separation
    full = caps.radii >= np.pi
    if np.any(full):
        return CoverageResult(True, np.empty((0, pts.shape[1])))
    shrunk = caps.radii - eps
    ok = shrunk >= 0
    inside = _mark_inside(pts, caps.centers[ok], shrunk[ok], strict=False)
    return CoverageResult(bool(inside.all()), pts[~inside])


def fibonacci_sphere(n):
    """``n`` nearly equally spaced points on ``S^2``."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def probe_points(dim, spacing, seed=0):
    """Probe set with typical spacing ``spacing`` on ``S^{dim-1}``."""
    if dim == 3:
        n = int(np.ceil(4.0 * np.pi / spacing**2))
        return fibonacci_sphere(n)
    if dim == 2:
        n = int(np.ceil(2.0 * np.pi / spacing))
        a = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(a), np.sin(a)])
    area = sphere_area(dim)
    n = int(min(2_000_000, np.ceil(area / spacing ** (dim - 1))))
    return uniform_sphere(stream(as_seed(seed), "probe"), n, dim)


def pointwise_uncovered(caps, probes):
    """Probe points lying in no cap."""
    inside = _mark_inside(probes, caps.centers, caps.radii, strict=True)
    return probes[~inside]


# ---------------------------------------------------------------------------
# vertical projection


@dataclass(frozen=True)
class EuclideanBall:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def contains(self, p):
        return np.linalg.norm(np.asarray(p) - self.center, axis=-1) < self.radius


def window_half_width(d):
    """``C_d = (2 sqrt(2(d-1)))^{-1}``."""
    return 1.0 / (2.0 * np.sqrt(2.0 * (d - 1)))


def project_cap_vert(cap):
    """Ball ``B(Pi_vert(center), radius)`` in ``R^{d-1}`` containing the
    vertical projection of an upper-hemisphere cap."""
    if cap.center[-1] <= 0:
        raise hg.DomainError("cap centre must lie in the open upper hemisphere")
    return EuclideanBall(cap.center[:-1].copy(), cap.radius)


def lift_to_hemisphere(y):
    y = np.asarray(y, dtype=float)
    sq = np.sum(y * y, axis=-1, keepdims=True)
    if np.any(sq >= 1.0):
        raise hg.DomainError("points must lie in the open unit ball")
    return np.concatenate([y, np.sqrt(1.0 - sq)], axis=-1)


def spherical_area_factor(lo, hi, order=48):
    """Area of the upper-hemisphere preimage of the box ``[lo, hi]`` under
    the vertical projection: ``int (1 - |x|^2)^{-1/2} dx`` by tensor
    Gauss-Legendre quadrature."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    corner = np.maximum(np.abs(lo), np.abs(hi))
    if np.sum(corner**2) >= 1.0:
        raise hg.DomainError("box must lie inside the open unit ball")
    x, w = roots_legendre(order)
    k = lo.size
    axes = [0.5 * (hi[i] - lo[i]) * x + 0.5 * (hi[i] + lo[i]) for i in range(k)]
    wts = [0.5 * (hi[i] - lo[i]) * w for i in range(k)]
    grids = np.meshgrid(*axes, indexing="ij")
    wgrid = np.ones_like(grids[0])
    for i, wi in enumerate(wts):
        shape = [1] * k
        shape[i] = order
        wgrid = wgrid * wi.reshape(shape)
    sq = sum(g * g for g in grids)
    return float(np.sum(wgrid / np.sqrt(1.0 - sq)))


@dataclass
class VerticalCoupling:
    """One realisation of a cap process together with a dominating ball
    process in the flat window ``[-2C_d, 2C_d]^{d-1}``."""

    caps: CapSet
    ball_centers: np.ndarray
    ball_radii: np.ndarray
    mapped: np.ndarray  # caps whose centre projects into the window
    half_width: float


def vertical_coupling(lam, spec, seed):
    """Couple caps of intensity ``lam`` with a ball process of intensity
    ``2 lam`` in the window.

    The caps centred over the window project to balls whose centre intensity
    is ``lam (1 - |y|^2)^{-1/2} <= 2 lam``; an independent thinned process of
    intensity ``lam (2 - (1 - |y|^2)^{-1/2})`` tops it up to the homogeneous
    ``2 lam``. Radii of both parts follow the radius law of ``spec``.
    """
    from .sampler import sample_cap_radii, sample_caps_direct, cap_band_mass

    d = spec.dim
    cd = window_half_width(d)
    if spec.alpha_max > cd * (1 + 1e-12):
        raise ValueError("cap radii must not exceed the window constant C_d")
    seed = as_seed(seed)
    caps = sample_caps_direct(lam, spec, seed)
    w = 2.0 * cd
    c = caps.centers
    mapped = (c[:, -1] > 0) & np.all(np.abs(c[:, :-1]) <= w, axis=1)
    rng = stream(seed, "vertical-extra")
    vol = (2.0 * w) ** (d - 1)
    n_extra = int(rng.poisson(2.0 * lam * vol * cap_band_mass(spec)))
    r_extra = sample_cap_radii(rng, n_extra, spec)
    y_extra = rng.uniform(-w, w, size=(n_extra, d - 1))
    dens = 1.0 / np.sqrt(1.0 - np.sum(y_extra**2, axis=1))
    keep = rng.random(n_extra) < (2.0 - dens) / 2.0
    y_extra, r_extra = y_extra[keep], r_extra[keep]
    centers = np.vstack([c[mapped, :-1], y_extra])
    radii = np.concatenate([caps.radii[mapped], r_extra])
    order = _canonical_order(radii, centers)
    return VerticalCoupling(caps, centers[order], radii[order], mapped, w)


def points_in_balls(points, centers, radii):
    """Mask of points lying in some open Euclidean ball."""
    out = np.zeros(points.shape[0], dtype=bool)
    if radii.size == 0 or points.shape[0] == 0:
        return out
    tree = cKDTree(points)
    for c, r, idx in zip(centers, radii, tree.query_ball_point(centers, radii)):
        if idx:
            idx = np.asarray(idx)
            idx = idx[~out[idx]]
            out[idx[np.linalg.norm(points[idx] - c, axis=1) < r]] = True
    return out


@dataclass
class VerticalAudit:
    probes: int
    violations: int
    edge_leaks: int
    covered_probes: int


def audit_vertical(coupling, probes):
    """Check that window points whose hemisphere lift is covered by a cap
    centred over the window lie in some ball of the dominating process.

    ``edge_leaks`` counts window points covered only by caps centred outside
    the window; those fall outside the inclusion being tested.
    """
    probes = np.asarray(probes, dtype=float)
    lifted = lift_to_hemisphere(probes)
    caps = coupling.caps
    by_mapped = _mark_inside(lifted, caps.centers[coupling.mapped], caps.radii[coupling.mapped])
    by_other = _mark_inside(lifted, caps.centers[~coupling.mapped], caps.radii[~coupling.mapped])
    in_ball = points_in_balls(probes, coupling.ball_centers, coupling.ball_radii)
    violations = int(np.sum(by_mapped & ~in_ball))
    leaks = int(np.sum(by_other & ~by_mapped & ~in_ball))
    return VerticalAudit(probes.shape[0], violations, leaks, int(np.sum(by_mapped | by_other)))
