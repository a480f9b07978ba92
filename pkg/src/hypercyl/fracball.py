"""The Euclidean semi-scale-invariant fractal ball model.

Balls ``B(x, r)`` with centres from Lebesgue measure and radii with density
``r^{-(d+1)}`` on ``(0, 1]``, truncated below at ``r_min``. This module
decides annulus crossings through union-find over the overlap graph,
assembles the independent-annuli bound for the origin cluster, and runs the
scale-invariance and crossing-frequency experiments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .capconn import EuclideanBall
from .rng import Seed, as_seed, stream
from .sampler import BallConfig, BallProcessSpec, ball_process_mass, sample_balls
from .stats import wilson_ci
from .unionfind import label_components

__all__ = [
    "Annulus",
    "EuclideanBall",
    "WindowError",
    "crossing",
    "crossing_scan",
    "origin_cluster_bounded",
    "scale_invariance_test",
]


class WindowError(ValueError):
    """Sampling window too small for the requested event."""


@dataclass(frozen=True)
class Annulus:
    """``[-b, b]^d \\ [-a, a]^d``."""

    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("annulus needs 0 < a < b")

    def scaled(self, s):
        return Annulus(self.a * s, self.b * s)


# ---------------------------------------------------------------------------
# geometry of boxes


def dist_to_box_boundary(c, h):
    """Euclidean distance from points ``c`` to the boundary of ``[-h, h]^d``."""
    c = np.abs(np.asarray(c, dtype=float))
    m = c.max(axis=-1)
    outside = np.linalg.norm(np.maximum(c - h, 0.0), axis=-1)
    return np.where(m <= h, h - m, outside)


def dist_to_annulus(c, ann):
    """Distance from points ``c`` to the closed annulus."""
    c = np.abs(np.asarray(c, dtype=float))
    m = c.max(axis=-1)
    outer = np.linalg.norm(np.maximum(c - ann.b, 0.0), axis=-1)
    return np.where(m < ann.a, ann.a - m, np.where(m <= ann.b, 0.0, outer))


def overlap_pairs(centers, radii):
    """Pairs of open balls with ``|x_i - x_j| < r_i + r_j``.

    Balls are grouped by dyadic radius class so that each neighbour query
    uses a search radius matched to the larger class.
    """
    n = radii.size
    if n < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    cls = np.floor(np.log2(radii)).astype(int)
    groups = [np.flatnonzero(cls == k) for k in np.unique(cls)]
    trees = [cKDTree(centers[g]) for g in groups]
    rmax = [float(radii[g].max()) for g in groups]
    ii, jj = [], []
    for a, ga in enumerate(groups):
        for b in range(a, len(groups)):
            gb = groups[b]
            if a == b:
                pairs = trees[a].query_pairs(2.0 * rmax[a], output_type="ndarray")
                if pairs.size == 0:
                    continue
                i, j = ga[pairs[:, 0]], ga[pairs[:, 1]]
            else:
                hits = trees[b].query_ball_point(centers[ga], radii[ga] + rmax[b])
                lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
                if lens.sum() == 0:
                    continue
                i = np.repeat(ga, lens)
                j = gb[np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if h])]
            ok = np.linalg.norm(centers[i] - centers[j], axis=1) < radii[i] + radii[j]
            ii.append(i[ok])
            jj.append(j[ok])
    if not ii:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(ii), np.concatenate(jj)


def _check_window(cfg, ann):
    pad = ann.b + 2.0 * cfg.spec.r_max
    if np.any(np.array(cfg.spec.lo) > -pad) or np.any(np.array(cfg.spec.hi) < pad):
        raise WindowError(f"window must contain [-{pad}, {pad}]^d")


def crossing(cfg, ann, check_window=True):
    """Whether a chain of overlapping balls meets both ``d[-a,a]^d`` and ``d[-b,b]^d``.

    Only balls meeting the closed annulus can take part in a minimal chain,
    so the overlap graph is built on those alone.
    """
    if check_window:
        _check_window(cfg, ann)
    if len(cfg) == 0:
        return False
    c, r = cfg.centers, cfg.radii
    keep = dist_to_annulus(c, ann) < r
    c, r = c[keep], r[keep]
    inner = dist_to_box_boundary(c, ann.a) < r
    outer = dist_to_box_boundary(c, ann.b) < r
    if not inner.any() or not outer.any():
        return False
    i, j = overlap_pairs(c, r)
    lab = label_components(r.size, i, j)
    return bool(np.intersect1d(lab[inner], lab[outer]).size)


def covered(cfg, pts):
    """Whether each point lies in the union of the configuration's balls."""
    return cfg.covers(pts)


# ---------------------------------------------------------------------------
# experiments


def crossing_window(ann, d, r_min, r_max=1.0, exponent=None):
    pad = ann.b + 2.0 * r_max
    return BallProcessSpec.cube(pad, r_min, r_max, dim=d, exponent=exponent)


def crossing_frequency(lam, ann, d, r_min, replicates, seed, r_max=1.0):
    """Crossing indicator per replicate at intensity ``lam``."""
    seed = as_seed(seed)
    if lam == 0:
        return np.zeros(replicates, dtype=bool)
    spec = crossing_window(ann, d, r_min, r_max)
    return np.array(
        [crossing(sample_balls(lam, spec, seed.with_replicate(k)), ann) for k in range(replicates)]
    )


@dataclass
class ScanRow:
    lam: float
    estimate: float
    ci_low: float
    ci_high: float
    replicates: int

    @property
    def stderr(self):
        p = self.estimate
        return float(np.sqrt(p * (1 - p) / self.replicates)) if self.replicates else float("nan")


def _check_grid(lams):
    lams = [float(v) for v in lams]
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("intensity grid must be ascending")
    if any(v < 0 for v in lams):
        raise ValueError("intensities must be nonnegative")
    return lams


def crossing_indicators(lams, ann, replicates, seed, d=2, r_min=0.05, r_max=1.0):
    """Crossing indicators, shape ``(len(replicates), len(lams))``.

    ``replicates`` is an iterable of replicate indices. All grid points share
    one realisation per replicate: balls are sampled at the top intensity and
    each carries a uniform mark; the process at ``lam`` keeps marks below
    ``lam / lam_top``. Indicators are therefore monotone along the grid.
    """
    lams = _check_grid(lams)
    seed = as_seed(seed)
    reps = list(replicates)
    out = np.zeros((len(reps), len(lams)), dtype=bool)
    top = max(lams) if lams else 0.0
    if top == 0:
        return out
    spec = crossing_window(ann, d, r_min, r_max)
    for row, k in enumerate(reps):
        s = seed.with_replicate(k)
        cfg = sample_balls(top, spec, s)
        marks = stream(s, "marks").random(len(cfg))
        for m, lam in enumerate(lams):
            if lam > 0:
                out[row, m] = crossing(cfg.subset(marks < lam / top), ann)
    return out


def scan_rows(lams, hits, replicates):
    rows = []
    for lam, h in zip(lams, hits):
        lo, hi = wilson_ci(int(h), replicates)
        rows.append(ScanRow(float(lam), h / replicates if replicates else float("nan"), lo, hi, replicates))
    return rows


def crossing_scan(lams, ann, replicates, seed, d=2, r_min=0.05, r_max=1.0):
    """Crossing frequency with Wilson intervals over an ascending ``lam`` grid,
    using the monotone coupling of :func:`crossing_indicators`."""
    lams = _check_grid(lams)
    ind = crossing_indicators(lams, ann, range(replicates), seed, d, r_min, r_max)
    return scan_rows(lams, ind.sum(axis=0), replicates)


def frame_boxes(inner, outer, d):
    """Boxes partitioning ``[-outer, outer]^d \\ (-inner, inner)^d``."""
    if inner <= 0:
        return [((-outer,) * d, (outer,) * d)]
    boxes = []
    for k in range(d):
        for side in (-1, 1):
            lo, hi = [], []
            for j in range(d):
                if j < k:
                    lo.append(-inner)
                    hi.append(inner)
                elif j == k:
                    lo.append(-outer if side < 0 else inner)
                    hi.append(-inner if side < 0 else outer)
                else:
                    lo.append(-outer)
                    hi.append(outer)
            boxes.append((tuple(lo), tuple(hi)))
    return boxes


def sample_frame(lam, ann, d, r_min, seed, r_max=1.0, tag="frame"):
    """Balls whose centres lie in ``[-b-2r_max, b+2r_max]^d`` minus the
    open box ``(-(a - r_max), a - r_max)^d``.

    Balls centred in the removed box cannot meet the closed annulus, so the
    crossing event is a function of this frame alone. Frames of the annuli
    ``A(9^n, 3 * 9^n)`` are pairwise disjoint, giving independent events.
    """
    outer = ann.b + 2.0 * r_max
    inner = ann.a - r_max
    cs, rs = [], []
    for k, (lo, hi) in enumerate(frame_boxes(inner, outer, d)):
        spec = BallProcessSpec(lo, hi, r_min, r_max, d + 1)
        cfg = sample_balls(lam, spec, seed, tag=f"{tag}-{k}")
        cs.append(cfg.centers)
        rs.append(cfg.radii)
    spec = BallProcessSpec.cube(outer, r_min, r_max, dim=d)
    return BallConfig(np.vstack(cs), np.concatenate(rs), spec, lam, as_seed(seed), {"frame_inner": inner})


def annulus_sequence(K):
    return [Annulus(3.0 ** (2 * n), 3.0 ** (2 * n + 1)) for n in range(K)]


def origin_cluster_events(lam, K, d, r_min, seed, r_max=1.0):
    """Crossing indicators of ``A(3^{2n}, 3^{2n+1})``, ``n < K``, from
    independent frame samples."""
    seed = as_seed(seed)
    out = []
    for n, ann in enumerate(annulus_sequence(K)):
        cfg = sample_frame(lam, ann, d, r_min, seed, r_max, tag=f"annulus-{n}")
        out.append(crossing(cfg, ann))
    return np.array(out, dtype=bool)


def origin_cluster_bounded(events):
    """Evidence that the origin cluster is bounded: some listed annulus is
    not crossed. With no annuli there is no evidence."""
    events = np.asarray(events, dtype=bool)
    return bool(events.size) and not bool(events.all())


@dataclass
class ScaleReport:
    count_p: float
    ks_p: float
    n_rescaled: int
    n_fresh: int

    @property
    def passed(self):
        return self.count_p > 0.01 and self.ks_p > 0.01


def scale_invariance_test(lam, a, spec, replicates, seed):
    """Compare rescaled-and-pruned samples against fresh samples.

    Each replicate samples ``spec``, divides every ball by ``a`` and removes
    balls with radius above 1; the fresh process lives on the window divided
    by ``a`` with radii in ``[r_min / a, 1]``. Counts are compared by a
    binomial test conditional on the pooled total, radii by a two-sample KS
    test.
    """
    if not 0 < a <= 1:
        raise ValueError("scale must lie in (0, 1]")
    seed = as_seed(seed)
    if spec.r_min / a >= 1.0:
        raise ValueError("r_min / a must stay below 1")
    fresh_spec = BallProcessSpec(
        tuple(v / a for v in spec.lo), tuple(v / a for v in spec.hi), spec.r_min / a, 1.0, spec.exponent
    )
    r1, r2 = [], []
    n1 = n2 = 0
    for k in range(replicates):
        s = seed.with_replicate(k)
        cfg = sample_balls(lam, spec, s, tag="scale-orig")
        rad = cfg.radii / a
        rad = rad[rad <= 1.0]
        fresh = sample_balls(lam, fresh_spec, s, tag="scale-fresh")
        n1 += rad.size
        n2 += len(fresh)
        r1.append(rad)
        r2.append(fresh.radii)
    r1 = np.concatenate(r1) if r1 else np.empty(0)
    r2 = np.concatenate(r2) if r2 else np.empty(0)
    count_p = stats.binomtest(n1, n1 + n2, 0.5).pvalue if n1 + n2 else 1.0
    ks_p = stats.ks_2samp(r1, r2).pvalue if r1.size and r2.size else 1.0
    return ScaleReport(float(count_p), float(ks_p), int(n1), int(n2))


def point_vacant_frequency(lam, r_min, d, replicates, seed, point=None):
    """Fraction of replicates in which ``point`` lies in no ball."""
    seed = as_seed(seed)
    point = np.zeros(d) if point is None else np.asarray(point, dtype=float)
    spec = BallProcessSpec(tuple(point - 1.0), tuple(point + 1.0), r_min, 1.0, d + 1)
    vac = 0
    for k in range(replicates):
        cfg = sample_balls(lam, spec, seed.with_replicate(k), tag="vacancy")
        vac += not bool(cfg.covers(point[None])[0])
    return vac / replicates


def point_vacant_probability(lam, r_min, d):
    """``exp(-lam kappa_d log(1/r_min))``: no ball of the band covers a point."""
    from scipy.special import gamma as gamma_fn

    kappa = np.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)
    return float(np.exp(-lam * kappa * np.log(1.0 / r_min)))
