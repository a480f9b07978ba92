"""Mandelbrot fractal percolation to finite depth and its coupling with the
fractal ball model.

Level-``k`` boxes are the ``M^{kd}`` closed cubes of side ``M^{-k}`` tiling
``[0, 1]^d``. Every level-``k`` box carries its own independent discard
decision, and ``CD^{M,n}`` is the intersection over ``k <= n`` of the unions
of retained level-``k`` boxes.

Connectivity of the open complement is computed exactly on the doubled
lattice of the level-``n`` grid: every node stands for one relatively open
face of the cell complex (cell interiors, facets, ..., vertices). A face lies
in the complement iff at some single level ``k`` every level-``k`` box whose
closure contains it is discarded. Two faces are joined when one is a facet
of the other and both lie in the complement; this is nearest-neighbour
adjacency on the doubled lattice.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb, gamma, pi

import numpy as np
from scipy import ndimage

from .rng import as_seed, stream
from .sampler import BallProcessSpec, band_edges, band_filter, power_band_integral

DEFAULT_CELL_BUDGET = 2**24


class CellBudgetError(MemoryError):
    """The requested grid exceeds the configured cell budget."""


class PaddingError(ValueError):
    """The ball window or radius band does not cover what the coupling needs."""


@dataclass(frozen=True)
class FPState:
    """Discard decisions per level.

    Attributes
    ----------
    M : int
        Subdivision base.
    d : int
        Dimension.
    discarded : tuple of ndarray
        ``discarded[k - 1]`` is a boolean array of shape ``(M^k,) * d``.
    p : float or None
        Retention probability when the decisions are i.i.d.
    """

    M: int
    d: int
    discarded: tuple
    p: float | None = None

    def __post_init__(self):
        if self.M < 2 or self.d < 1:
            raise ValueError("need M >= 2 and d >= 1")
        levels = tuple(np.asarray(a, dtype=bool) for a in self.discarded)
        for k, a in enumerate(levels, start=1):
            if a.shape != (self.M**k,) * self.d:
                raise ValueError(f"level {k} must have shape {(self.M**k,) * self.d}")
        object.__setattr__(self, "discarded", levels)

    @property
    def depth(self):
        return len(self.discarded)

    def level(self, k):
        return self.discarded[k - 1]

    def with_discard(self, k, index):
        """Copy with one more level-``k`` box discarded."""
        levels = [a.copy() for a in self.discarded]
        levels[k - 1][tuple(index)] = True
        return FPState(self.M, self.d, tuple(levels), self.p)


@dataclass(frozen=True)
class TouchProbabilities:
    """Touching measure of one level-``n`` box and the two derived probabilities.

    ``touched`` is the probability that some ball of the band meets the box;
    ``untouched = 1 - touched`` is the retention probability of the coupled
    model. Both are kept because the two naming conventions disagree.
    """

    measure: float
    touched: float
    untouched: float


@dataclass(frozen=True)
class CoupledFPState(FPState):
    """Discard decisions derived from a ball configuration (touched boxes)."""

    lam: float = 0.0
    touch: TouchProbabilities | None = None


def _check_budget(M, d, n, budget):
    if n < 1:
        raise ValueError("need n >= 1")
    if float(M) ** (d * n) > budget:
        raise CellBudgetError(f"M^(dn) = {M}^{d * n} exceeds the cell budget {budget}")


def generate_fp(M, p, n, d, seed, cell_budget=DEFAULT_CELL_BUDGET):
    """Independent retain/discard decision for every box of levels ``1..n``.

    Parameters
    ----------
    M : int
        Subdivision base, at least 2.
    p : float
        Retention probability in ``(0, 1)``.
    n : int
        Depth.
    d : int
        Dimension.
    seed : Seed or int
    cell_budget : int
        Maximum number of level-``n`` cells.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if M < 2:
        raise ValueError("M must be at least 2")
    _check_budget(M, d, n, cell_budget)
    rng = stream(as_seed(seed), "fp")
    levels = tuple(rng.random((M**k,) * d) >= p for k in range(1, n + 1))
    return FPState(M, d, levels, float(p))


def vacant_cells(fp, n=None):
    """Level-``n`` cells with some discarded ancestor (including themselves)."""
    n = fp.depth if n is None else n
    out = np.zeros((fp.M**n,) * fp.d, dtype=bool)
    for k in range(1, n + 1):
        out |= _upsample(fp.level(k), fp.M ** (n - k))
    return out


def surviving_count(fp, k):
    """Number of level-``k`` boxes all of whose ancestors are retained."""
    return int(np.count_nonzero(~vacant_cells(fp, k)))


def retained_count(fp, k):
    """Number of level-``k`` boxes whose own decision is 'retain'."""
    return int(np.count_nonzero(~fp.level(k)))


def surviving_count_moments(M, p, d, k):
    """Mean and variance of the surviving count (a Galton-Watson generation)."""
    m = p * M**d
    s2 = M**d * p * (1 - p)
    mean = m**k
    var = s2 * k if m == 1 else s2 * m ** (k - 1) * (m**k - 1) / (m - 1)
    return mean, var


def _upsample(a, f):
    for ax in range(a.ndim):
        a = np.repeat(a, f, axis=ax)
    return a


def _containing_indices(N, step, nk):
    """Per doubled coordinate, the low/high level-``k`` box indices whose
    closure contains that face of the level-``n`` grid."""
    j = np.arange(2 * N + 1)
    cell = (j - 1) // 2
    h = j // 2
    odd = j % 2 == 1
    on_k = (h % step) == 0
    lo = np.where(odd, cell // step, np.where(on_k, h // step - 1, h // step))
    hi = np.where(odd, cell // step, h // step)
    return np.clip(lo, 0, nk - 1), np.clip(hi, 0, nk - 1)


def complement_faces(fp, n=None):
    """Boolean array on the doubled lattice: face lies in the open complement."""
    n = fp.depth if n is None else n
    if n > fp.depth:
        raise ValueError("state not populated to the requested level")
    M, d = fp.M, fp.d
    N = M**n
    out = np.zeros((2 * N + 1,) * d, dtype=bool)
    for k in range(1, n + 1):
        lo, hi = _containing_indices(N, M ** (n - k), M**k)
        disc = fp.level(k)
        allk = np.ones_like(out)
        for choice in itertools.product((lo, hi), repeat=d):
            allk &= disc[np.ix_(*choice)]
        out |= allk
    return out


_CROSS = {}


def _label(mask):
    d = mask.ndim
    if d not in _CROSS:
        _CROSS[d] = ndimage.generate_binary_structure(d, 1)
    lab, _ = ndimage.label(mask, structure=_CROSS[d])
    return lab


@dataclass
class ComplementPartition:
    """Connected components of the open complement at resolution ``n``.

    ``cell_labels`` has one entry per level-``n`` cell: 0 for cells in
    ``CD^{M,n}``, otherwise a positive component id.
    """

    n: int
    cell_labels: np.ndarray
    face_labels: np.ndarray = field(repr=False)

    @property
    def n_components(self):
        return int(np.unique(self.cell_labels[self.cell_labels > 0]).size)

    def cells(self):
        """Components as sorted arrays of flat level-``n`` cell indices."""
        flat = self.cell_labels.ravel()
        idx = np.flatnonzero(flat)
        order = np.argsort(flat[idx], kind="stable")
        idx = idx[order]
        cuts = np.flatnonzero(np.diff(flat[idx])) + 1
        return [np.sort(c) for c in np.split(idx, cuts)] if idx.size else []


def complement_components(fp, n=None):
    """Partition of the vacant level-``n`` cells into complement components."""
    n = fp.depth if n is None else n
    lab = _label(complement_faces(fp, n))
    cells = lab[(slice(1, None, 2),) * fp.d]
    return ComplementPartition(n, cells, lab)


# ---------------------------------------------------------------------------
# Separation events


@dataclass(frozen=True)
class Rectangle:
    """``{x_axis <= 1/3}`` (side 0) or ``{x_axis >= 2/3}`` (side 1) in the unit cube."""

    axis: int
    side: int

    def __post_init__(self):
        if self.side not in (0, 1) or self.axis < 0:
            raise ValueError("side must be 0 or 1 and axis nonnegative")


@dataclass(frozen=True)
class CubeAnnulus:
    """``[0, 1]^d`` minus the open middle cube ``(1/3, 2/3)^d``."""


def canonical_rectangles(d):
    """The ``2d`` rectangles covering the annulus, ordered ``R_1, ..., R_2d``."""
    return [Rectangle(a, s) for a in range(d) for s in (0, 1)]


def third_marks(N):
    """Grid indices of the 1/3 and 2/3 marks, snapped towards the centre.

    Exact when ``3 | N``. Otherwise the middle cube grows by under one cell
    per side, which makes every region thinner and separation harder.
    """
    lo, hi = N // 3, -(-2 * N // 3)
    if not 1 <= lo < hi <= N - 1:
        raise ValueError(f"level-n grid with {N} cells per side cannot resolve the regions")
    return lo, hi


def _region(region, N, d):
    """Region mask and the two target face sets on the doubled lattice."""
    lo, hi = third_marks(N)
    grids = np.ogrid[tuple(slice(0, 2 * N + 1) for _ in range(d))]
    full = np.ones((2 * N + 1,) * d, dtype=bool)
    if isinstance(region, Rectangle):
        if region.axis >= d:
            raise ValueError("rectangle axis out of range")
        x = grids[region.axis]
        a, b = (0, 2 * lo) if region.side == 0 else (2 * hi, 2 * N)
        mask = full & (x >= a) & (x <= b)
        return mask, mask & (x == a), mask & (x == b)
    if isinstance(region, CubeAnnulus):
        strict = full.copy()
        closed = full.copy()
        outer = ~full
        for x in grids:
            strict &= (x > 2 * lo) & (x < 2 * hi)
            closed &= (x >= 2 * lo) & (x <= 2 * hi)
            outer |= (x == 0) | (x == 2 * N)
        mask = ~strict
        return mask, mask & closed, mask & outer
    raise TypeError("region must be a Rectangle or a CubeAnnulus")


def _separated(faces, region, N, d):
    mask, ta, tb = _region(region, N, d)
    lab = _label(faces & mask)
    a = np.unique(lab[ta])
    b = np.unique(lab[tb])
    return not np.intersect1d(a[a > 0], b[b > 0]).size


def separation_event(fp, region, n=None):
    """True iff no complement path inside ``region`` joins its two targets.

    The targets are the two long faces of a rectangle, or the inner and outer
    boundary of the annulus.
    """
    n = fp.depth if n is None else n
    return _separated(complement_faces(fp, n), region, fp.M**n, fp.d)


def separation_profile(fp, n=None):
    """Separation of all ``2d`` canonical rectangles and of the annulus."""
    n = fp.depth if n is None else n
    faces = complement_faces(fp, n)
    N = fp.M**n
    rects = np.array([_separated(faces, r, N, fp.d) for r in canonical_rectangles(fp.d)])
    return rects, _separated(faces, CubeAnnulus(), N, fp.d)


# ---------------------------------------------------------------------------
# Coupling with the ball model


def unit_ball_volume(k):
    return pi ** (k / 2) / gamma(k / 2 + 1)


def minkowski_volume(s, r, d):
    """Volume of a cube of side ``s`` thickened by ``r`` (Steiner formula)."""
    return sum(comb(d, k) * s ** (d - k) * unit_ball_volume(k) * r**k for k in range(d + 1))


def touching_measure(M, n, lam, d):
    """Mean number of band-``n`` balls meeting a fixed level-``n`` box.

    ``lam * int vol(X + B(0, r)) r^{-(d+1)} dr`` over ``(M^{-n}, M^{-n+1}]``.
    By translation invariance the box position does not matter.
    """
    lo, hi = band_edges(M, n)
    s = lo
    tot = 0.0
    for k in range(d + 1):
        tot += comb(d, k) * s ** (d - k) * unit_ball_volume(k) * power_band_integral(lo, hi, d + 1 - k)
    return lam * tot


def touching_measure_closed_form(M, lam, d):
    """Level-free value of :func:`touching_measure`."""
    tot = unit_ball_volume(d) * np.log(M)
    for k in range(d):
        tot += comb(d, k) * unit_ball_volume(k) * (1 - float(M) ** (k - d)) / (d - k)
    return lam * float(tot)


def touch_probabilities(M, lam, d, n=1):
    m = touching_measure(M, n, lam, d)
    return TouchProbabilities(m, float(-np.expm1(-m)), float(np.exp(-m)))


def coupling_window(M, n, d):
    """Ball window and radius band sufficient for :func:`couple_from_balls`.

    Band-1 balls have radius up to 1, so centres within distance 1 of the
    unit cube must be present.
    """
    return BallProcessSpec((-1.0,) * d, (2.0,) * d, float(M) ** -n, 1.0)


def _check_padding(spec, M, n):
    d = spec.dim
    if any(v > -1.0 for v in spec.lo) or any(v < 2.0 for v in spec.hi):
        raise PaddingError("ball centres must cover [-1, 2]^d")
    if spec.r_min > float(M) ** -n or spec.r_max < 1.0:
        raise PaddingError(f"radius band must contain (M^-{n}, 1]")
    if spec.exponent != d + 1:
        raise PaddingError("coupling needs the exponent d + 1")


def touched_boxes(centers, radii, M, k, d, chunk=4096):
    """Boolean array over level-``k`` boxes: some ball meets the closed box."""
    N = M**k
    out = np.zeros((N,) * d, dtype=bool)
    if radii.size == 0:
        return out
    width = int(np.ceil(2 * radii.max() * N)) + 2
    offsets = np.array(list(itertools.product(range(width), repeat=d)))
    for s in range(0, radii.size, chunk):
        c, r = centers[s : s + chunk], radii[s : s + chunk]
        first = np.floor((c - r[:, None]) * N).astype(np.int64)
        last = np.floor((c + r[:, None]) * N).astype(np.int64)
        first = np.clip(first, 0, N - 1)
        last = np.clip(last, 0, N - 1)
        idx = first[:, None, :] + offsets[None]
        ok = np.all(idx <= last[:, None, :], axis=2)
        gap = np.maximum(np.maximum(idx / N - c[:, None, :], 0.0), c[:, None, :] - (idx + 1) / N)
        ok &= np.einsum("ijk,ijk->ij", gap, gap) < (r * r)[:, None]
        hit = idx[ok]
        out[tuple(hit.T)] = True
    return out


def couple_from_balls(cfg, M, n):
    """Level-``k`` box discarded iff some ball of band ``k`` touches it."""
    _check_padding(cfg.spec, M, n)
    d = cfg.dim
    _check_budget(M, d, n, DEFAULT_CELL_BUDGET)
    levels = []
    for k in range(1, n + 1):
        band = band_filter(cfg, M, k)
        levels.append(touched_boxes(band.centers, band.radii, M, k, d))
    touch = touch_probabilities(M, cfg.lam, d)
    return CoupledFPState(M, d, tuple(levels), touch.untouched, lam=float(cfg.lam), touch=touch)


def in_fp_set(fp, pts, n=None):
    """Whether each point lies in ``CD^{M,n}`` (closed boxes, so grid
    boundaries count for every adjacent box)."""
    n = fp.depth if n is None else n
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    ok = np.ones(pts.shape[0], dtype=bool)
    for k in range(1, n + 1):
        N = fp.M**k
        x = pts * N
        lo = np.clip(np.ceil(x).astype(np.int64) - 1, 0, N - 1)
        hi = np.clip(np.floor(x).astype(np.int64), 0, N - 1)
        keep = fp.level(k) == False  # noqa: E712
        anyk = np.zeros_like(ok)
        for choice in itertools.product((0, 1), repeat=fp.d):
            idx = np.where(np.array(choice, bool), hi, lo)
            anyk |= keep[tuple(idx.T)]
        ok &= anyk
    return ok


def sample_fp_points(fp, n, count, rng, boundary_fraction=0.25):
    """Points of ``CD^{M,n}``: uniform in surviving cells, with a share
    placed on their boundaries."""
    alive = np.argwhere(~vacant_cells(fp, n))
    if alive.size == 0:
        return np.empty((0, fp.d))
    N = fp.M**n
    cells = alive[rng.integers(0, alive.shape[0], count)]
    u = rng.random((count, fp.d))
    nb = int(boundary_fraction * count)
    # snap one or more coordinates to a cell face
    snap = rng.random((nb, fp.d)) < 0.5
    snap[np.arange(nb), rng.integers(0, fp.d, nb)] = True
    u[:nb] = np.where(snap, rng.integers(0, 2, (nb, fp.d)).astype(float), u[:nb])
    return (cells + u) / N


# ---------------------------------------------------------------------------
# Export


def export_pgm(fp, n, path):
    """Write the level-``n`` grid of a planar state as a binary PGM.

    Cells of ``CD^{M,n}`` are 255; vacant cells get a grey level in ``1..254``
    hashed from their complement component.
    """
    if fp.d != 2:
        raise ValueError("PGM export needs d = 2")
    part = complement_components(fp, n)
    lab = part.cell_labels.astype(np.int64)
    img = np.where(lab > 0, 1 + (lab * 2654435761 % 254), 255).astype(np.uint8)
    # rows from the top (high second coordinate) down
    img = img.T[::-1]
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path
