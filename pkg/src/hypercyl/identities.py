"""Closed-form identities checked numerically on fixed grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hypgeo as hg
from . import mandelfp as mf
from . import sampler as sp

GRID = np.linspace(0.0, 1.0, 1002)[1:-1]


@dataclass
class IdentityCheck:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.error <= self.tolerance)

    def as_row(self):
        return {"check": self.name, "error": self.error, "tolerance": self.tolerance, "passed": self.passed}


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def cot_gamma_vs_distance():
    pts = np.column_stack([GRID, np.zeros_like(GRID)])
    lhs = 1.0 / np.tan(hg.gamma(GRID))
    rhs = np.sinh(hg.hyp_dist(np.zeros_like(pts), pts))
    return IdentityCheck("cot gamma(t) = sinh d_h(o, t e1)", _rel(lhs, rhs), 1e-10)


def beta_two_routes():
    err = float(np.max(np.abs(hg.beta(GRID) - hg.beta_via_h(hg.h_of_t(GRID)))))
    return IdentityCheck("beta(t) = beta via h", err, 1e-10)


def a_solves_endcap_equation():
    c1, c2 = hg.endcap_c1_c2(hg.a_func(GRID), GRID)
    return IdentityCheck("a(t) solves c1 = c2", float(np.max(np.abs(c1 - c2))), 1e-10)


def beta_at_origin():
    return IdentityCheck("beta(0) = arccos(1/cosh 1)", abs(float(hg.beta(0.0)) - np.arccos(1 / np.cosh(1.0))), 1e-12)


def ratio_bounds():
    """``beta/gamma`` stays in ``[(2/pi) arccos(1/cosh 1), sinh 1]``."""
    lo, hi = 2 / np.pi * np.arccos(1 / np.cosh(1.0)), np.sinh(1.0)
    t = np.concatenate([[0.0], GRID])
    r = hg.beta(t) / hg.gamma(t)
    excess = max(0.0, float(lo - r.min()), float(r.max() - hi))
    return IdentityCheck("beta/gamma within the two-sided bound", excess, 1e-12)


def ratio_endpoint_attainment():
    lo, hi = 2 / np.pi * np.arccos(1 / np.cosh(1.0)), np.sinh(1.0)
    t0, t1 = 0.0, 1 - 1e-7
    err = max(abs(float(hg.beta(t0) / hg.gamma(t0)) - lo), abs(float(hg.beta(t1) / hg.gamma(t1)) - hi))
    return IdentityCheck("beta/gamma attains both bounds in the limits", err, 1e-6)


def line_mass_d3():
    m = sp.line_window_mass(sp.LineWindow(2.0, 3))
    return IdentityCheck("line window mass d=3 h=2 is sinh^2 2", abs(m - np.sinh(2.0) ** 2), 1e-12)


def cap_line_consistency():
    h = np.linspace(0.1, 3.0, 30)
    err = 0.0
    for d in (2, 3, 5):
        for c in (0.4, 1.0):
            lhs = sp._cot_pow(c * hg.gamma_of_h(h), c, d) / (d - 1)
            err = max(err, _rel(lhs, np.sinh(h) ** (d - 1) / (d - 1)))
    return IdentityCheck("cap band mass at c gamma(h) equals line mass", err, 1e-10)


def steiner_example():
    v = mf.minkowski_volume(0.5, 0.25, 2)
    return IdentityCheck("Steiner area s=0.5 r=0.25", abs(v - (0.25 + 0.5 + np.pi / 16)), 1e-14)


def touching_level_free():
    err = 0.0
    for M, d in ((3, 2), (2, 3), (5, 2)):
        vals = [mf.touching_measure(M, n, 0.7, d) for n in range(1, 7)]
        err = max(err, float(np.ptp(vals)), abs(vals[0] - mf.touching_measure_closed_form(M, 0.7, d)))
    return IdentityCheck("touching measure independent of level", err, 1e-10)


def rescaled_radius_law():
    a, rmin, k = 1 / 3, 0.05, 3
    s = np.linspace(rmin / a, 1, 200)
    resc = (rmin ** (1 - k) - (a * s) ** (1 - k)) / (rmin ** (1 - k) - a ** (1 - k))
    fresh = ((rmin / a) ** (1 - k) - s ** (1 - k)) / ((rmin / a) ** (1 - k) - 1)
    return IdentityCheck("rescaled power-law radii keep their law", float(np.max(np.abs(resc - fresh))), 1e-12)


def shadow_cut_radius():
    t = np.linspace(sp.R1 + 1e-9, 1 - 1e-9, 1000)
    excess = max(0.0, float(np.max(hg.gamma(t) - np.pi / sp.C_SHADOW)))
    return IdentityCheck("gamma below pi/(2 sinh 1 + 1) beyond r1", excess, 0.0)


ALL = (
    cot_gamma_vs_distance,
    beta_two_routes,
    a_solves_endcap_equation,
    beta_at_origin,
    ratio_bounds,
    ratio_endpoint_attainment,
    line_mass_d3,
    cap_line_consistency,
    steiner_example,
    touching_level_free,
    rescaled_radius_law,
    shadow_cut_radius,
)


def run_all():
    return [f() for f in ALL]
