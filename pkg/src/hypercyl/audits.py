"""Per-realisation audits of the inclusions that couple the processes.

Each audit draws a fixed number of trials and counts violations of an
inclusion that must hold for every realisation; any nonzero count is a bug.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import capconn as cc
from . import hypgeo as hg
from . import mandelfp as mf
from . import sampler as sp
from .rng import as_seed, stream


@dataclass
class AuditResult:
    name: str
    trials: int
    violations: int
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.violations == 0

    def as_row(self):
        row = {"audit": self.name, "trials": self.trials, "violations": self.violations}
        row.update(self.extra)
        return row


def _tangent_directions(rng, normals):
    """Unit vectors orthogonal to each row of ``normals``."""
    w = rng.standard_normal(normals.shape)
    w -= np.sum(w * normals, axis=1, keepdims=True) * normals
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def cylinder_points(rng, lines, idx, heights_scale=4.0):
    """Random points of the open fat cylinders of ``lines[idx]``."""
    u = lines.normals[idx]
    x = lines.feet[idx]
    w = _tangent_directions(rng, u)
    y = hg.geodesic_step(x, w, rng.uniform(0.0, 1.0, idx.size) * (1 - 1e-12))
    s = rng.normal(0.0, heights_scale, idx.size)
    return hg.geodesic_point(y, u, s)


def audit_endcap_pairs(pairs=10_000, d=3, h_max=2.0, seed=0, lam=4.0):
    """Line pairs with overlapping endcaps must have meeting cylinders."""
    seed = as_seed(seed)
    rng = stream(seed, "audit-endcap")
    trials = violations = rep = 0
    methods = {}
    while trials < pairs:
        lines = sp.sample_lines(lam, sp.LineWindow(h_max, d), seed.with_replicate(rep))
        rep += 1
        n = len(lines)
        if n < 2:
            continue
        c, r = hg.endcap_arrays(lines.normals, lines.feet)
        c = c / np.linalg.norm(c, axis=1, keepdims=True)
        i, j = np.triu_indices(n, 1)
        ov = hg.caps_overlap(c[i], r[i], c[j], r[j])
        i, j = i[ov], j[ov]
        take = rng.permutation(i.size)[: pairs - trials]
        for a, b in zip(i[take], j[take]):
            l1, l2 = lines[a], lines[b]
            res = hg.cylinders_intersect(l1, l2)
            methods[res.method] = methods.get(res.method, 0) + 1
            ok = res.found and bool(hg.cylinder_contains(l1, res.witness)) and bool(
                hg.cylinder_contains(l2, res.witness)
            )
            violations += not ok
            trials += 1
    return AuditResult("endcap-coupling", trials, violations, {"methods": methods})


def audit_endcap_inclusion(min_caps=10_000, d=3, h_max=4.0, seed=0, lam=1.0):
    """Each ``c gamma`` cap of a line sits inside the endcap of the same line."""
    seed = as_seed(seed)
    trials = violations = rep = 0
    worst = -np.inf
    while trials < min_caps:
        lines = sp.sample_lines(lam, sp.LineWindow(h_max, d), seed.with_replicate(rep))
        rep += 1
        tilde, keep = sp.map_caps_tilde(lines, sp.C_ENDCAP, sp.f_endcap_angle)
        minus = sp.map_caps_minus(lines).subset(keep)
        slack = hg.sphere_dist(tilde.centers, minus.centers) + tilde.radii - minus.radii
        if slack.size:
            worst = max(worst, float(slack.max()))
        violations += int(np.sum(slack > 1e-12))
        trials += len(tilde)
    return AuditResult("endcap-inclusion", trials, violations, {"max_slack": worst})


def audit_shadow_inclusion(points=100_000, d=3, h_max=2.5, seed=0, lam=1.0, r=hg.R0):
    """Radial projections of cylinder points lie in the shadow cap of their line."""
    seed = as_seed(seed)
    rng = stream(seed, "audit-shadow")
    trials = violations = rep = 0
    while trials < points:
        lines = sp.sample_lines(lam, sp.LineWindow(h_max, d), seed.with_replicate(rep))
        rep += 1
        far = np.flatnonzero(lines.foot_norms > r)
        if far.size == 0:
            continue
        caps = sp.map_caps_plus(lines, r)
        m = min(points - trials, 20_000)
        pick = rng.integers(0, far.size, m)
        p = cylinder_points(rng, lines, far[pick])
        dist = hg.sphere_dist(hg.radial_projection(p), caps.centers[pick])
        violations += int(np.sum(dist >= caps.radii[pick]))
        trials += m
    return AuditResult("shadow-inclusion", trials, violations)


def _points_in_caps(rng, centers, radii):
    """Points spread over each cap, a tenth of them within 1e-9 of the rim."""
    n = radii.size
    theta = radii * np.sqrt(rng.random(n))
    rim = rng.random(n) < 0.1
    theta = np.where(rim, radii * (1 - 1e-9), theta)
    w = _tangent_directions(rng, centers)
    return np.cos(theta)[:, None] * centers + np.sin(theta)[:, None] * w


def audit_vertical_projection(probes=1_000_000, d=3, lam=2.0, alpha_min=0.02, seed=0):
    """Vertical projections of cap points stay in the projected balls, and
    window points covered by mapped caps are covered by the dominating balls."""
    seed = as_seed(seed)
    rng = stream(seed, "audit-vertical")
    cd = cc.window_half_width(d)
    spec = sp.CapProcessSpec(1.0, alpha_min, cd, d)
    trials = violations = leaks = rep = 0
    while trials < probes:
        cp = cc.vertical_coupling(lam, spec, seed.with_replicate(rep))
        rep += 1
        caps = cp.caps.subset(cp.mapped)
        m = min(probes - trials, 200_000)
        if len(caps):
            k = rng.integers(0, len(caps), m)
            pts = _points_in_caps(rng, caps.centers[k], caps.radii[k])
            flat = pts[:, :-1]
            dist = np.linalg.norm(flat - caps.centers[k, :-1], axis=1)
            violations += int(np.sum(dist >= caps.radii[k]))
        window = rng.uniform(-cp.half_width, cp.half_width, (m, d - 1))
        audit = cc.audit_vertical(cp, window)
        violations += audit.violations
        leaks += audit.edge_leaks
        trials += m
    return AuditResult("vertical-projection", trials, violations, {"edge_leaks": leaks})


def audit_coupled_fp(probes=100_000, M=3, n=3, d=2, lam=0.1, seed=0):
    """Points of the coupled fractal set avoid every ball of bands ``1..n``."""
    seed = as_seed(seed)
    rng = stream(seed, "audit-fp")
    spec = mf.coupling_window(M, n, d)
    trials = violations = rep = 0
    while trials < probes:
        cfg = sp.sample_balls(lam, spec, seed.with_replicate(rep))
        rep += 1
        state = mf.couple_from_balls(cfg, M, n)
        pts = mf.sample_fp_points(state, n, min(probes - trials, 20_000), rng)
        if pts.shape[0] == 0:
            continue
        violations += int(np.sum(~mf.in_fp_set(state, pts, n)))
        bands = cfg.subset(cfg.radii > float(M) ** -n)
        violations += int(np.sum(cc.points_in_balls(pts, bands.centers, bands.radii)))
        trials += pts.shape[0]
    return AuditResult("coupled-fractal-inclusion", trials, violations)


def run_all(seed=0, scale=1.0):
    """All audits; ``scale`` multiplies every trial count."""
    def n(x):
        return max(1, int(round(x * scale)))

    return [
        audit_endcap_pairs(n(10_000), seed=seed),
        audit_endcap_inclusion(n(10_000), seed=seed),
        audit_shadow_inclusion(n(100_000), seed=seed),
        audit_vertical_projection(n(1_000_000), seed=seed),
        audit_coupled_fp(n(100_000), seed=seed),
    ]
