import numpy as np
import pytest
from scipy import integrate, stats

from hypercyl import hypgeo as hg
from hypercyl import sampler as sp
from hypercyl.rng import Seed


def test_sphere_area():
    assert sp.sphere_area(1) == pytest.approx(2.0)
    assert sp.sphere_area(2) == pytest.approx(2 * np.pi)
    assert sp.sphere_area(3) == pytest.approx(4 * np.pi)


def test_line_window_mass_values():
    assert sp.line_window_mass(sp.LineWindow(2.0, 3)) == pytest.approx(np.sinh(2.0) ** 2)
    assert np.sinh(2.0) ** 2 == pytest.approx(13.154, abs=1e-3)
    assert sp.line_window_mass(sp.LineWindow(1.5, 2)) == pytest.approx(2 * np.sinh(1.5))
    with pytest.raises(ValueError):
        sp.LineWindow(1.0, 1)
    with pytest.raises(ValueError):
        sp.LineWindow(0.0, 3)


def test_line_radius_law_matches_density():
    w = sp.LineWindow(2.0, 4)
    rng = np.random.default_rng(0)
    h = sp.sample_line_radii(rng, 50_000, w)
    dens = lambda x: np.cosh(x) * np.sinh(x) ** 2
    norm = integrate.quad(dens, 0, 2.0)[0]
    cdf = lambda x: np.array([integrate.quad(dens, 0, v)[0] for v in np.atleast_1d(x)]) / norm
    grid = np.linspace(0, 2, 41)
    emp = np.searchsorted(np.sort(h), grid) / h.size
    assert np.max(np.abs(emp - cdf(grid))) < 0.01


def test_sample_lines_window_and_invariants():
    lines = sp.sample_lines(1.0, sp.LineWindow(2.0, 3), Seed(7))
    assert len(lines) > 0
    hd = hg.hyp_dist(np.zeros_like(lines.feet), lines.feet)
    assert np.all(hd <= 2.0 + 1e-12)
    assert np.all(np.abs(np.sum(lines.normals * lines.feet, 1)) < 1e-12)
    for line in lines:
        assert isinstance(line, hg.OrientedLine)


def test_sample_lines_deterministic_and_replicate_independent():
    w = sp.LineWindow(1.5, 3)
    a = sp.sample_lines(2.0, w, Seed(5, 1))
    b = sp.sample_lines(2.0, w, Seed(5, 1))
    c = sp.sample_lines(2.0, w, Seed(5, 2))
    assert np.array_equal(a.feet, b.feet) and np.array_equal(a.normals, b.normals)
    assert len(a) != len(c) or not np.array_equal(a.feet, c.feet)


def test_sample_lines_tiny_window_empty():
    counts = [len(sp.sample_lines(1.0, sp.LineWindow(1e-9, 3), Seed(1, r))) for r in range(200)]
    assert sum(counts) == 0


def test_sample_lines_d2():
    lines = sp.sample_lines(3.0, sp.LineWindow(2.0, 2), Seed(3))
    assert lines.dim == 2
    assert np.all(np.abs(np.sum(lines.normals * lines.feet, 1)) < 1e-12)


def test_sample_lines_count_mean_d3():
    w = sp.LineWindow(2.0, 3)
    counts = np.array([len(sp.sample_lines(1.0, w, Seed(11, r))) for r in range(2000)])
    mean = np.sinh(2.0) ** 2
    assert abs(counts.mean() - mean) < 4 * np.sqrt(mean / counts.size)


def test_map_caps_minus_examples():
    empty = sp.LineSet(np.empty((0, 3)), np.empty((0, 3)))
    assert len(sp.map_caps_minus(empty)) == 0
    u = np.array([0.0, 0.0, 1.0])
    caps = sp.map_caps_minus(sp.LineSet(u[None], np.zeros((1, 3))))
    np.testing.assert_allclose(caps.centers[0], u)
    assert caps.radii[0] == pytest.approx(hg.BETA0, abs=1e-14)
    lines = sp.sample_lines(1.0, sp.LineWindow(3.0, 3), Seed(2))
    caps = sp.map_caps_minus(lines)
    assert len(caps) == len(lines)
    assert np.all(caps.radii <= hg.BETA0 + 1e-15)
    # order preserved: each cap equals the endcap of the matching line
    k = len(lines) // 2
    one = hg.endcap(lines[k])
    np.testing.assert_allclose(caps.centers[k], one.center, atol=1e-14)


def test_map_caps_plus():
    lines = sp.sample_lines(1.0, sp.LineWindow(3.0, 3), Seed(4))
    r = 0.6
    caps = sp.map_caps_plus(lines, r)
    assert len(caps) == int(np.sum(lines.foot_norms > r))
    assert np.all(caps.radii < np.pi)
    with pytest.raises(hg.DomainError):
        sp.map_caps_plus(lines, 0.3)


def test_map_caps_plus_contains_radial_shadow():
    rng = np.random.default_rng(9)
    lines = sp.sample_lines(1.0, sp.LineWindow(2.5, 3), Seed(9))
    keep = lines.foot_norms > hg.R0
    lines = lines.subset(keep)
    caps = sp.map_caps_plus(lines, hg.R0)
    n_per = 100_000 // max(len(lines), 1) + 1
    bad = 0
    for k, line in enumerate(lines):
        w = rng.standard_normal((n_per, 3))
        w -= np.outer(w @ line.normal, line.normal)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        y = hg.geodesic_step(np.broadcast_to(line.foot, w.shape), w, rng.uniform(0, 1, n_per))
        p = hg.geodesic_point(y, np.broadcast_to(line.normal, y.shape), rng.normal(0, 4, n_per))
        ok = hg.sphere_dist(hg.radial_projection(p), caps.centers[k]) < caps.radii[k]
        bad += int(np.sum(~ok))
    assert bad == 0


def test_map_caps_tilde_inclusion_in_endcaps():
    # the c gamma caps sit inside the endcaps of the same lines
    lines = sp.sample_lines(1.0, sp.LineWindow(4.0, 3), Seed(12))
    tilde, keep = sp.map_caps_tilde(lines, sp.C_ENDCAP, sp.f_endcap_angle)
    minus = sp.map_caps_minus(lines).subset(keep)
    np.testing.assert_allclose(tilde.centers, minus.centers, atol=1e-12)
    assert np.all(tilde.radii <= minus.radii + 1e-12)


def test_map_caps_tilde_shadow_domination():
    lines = sp.sample_lines(1.0, sp.LineWindow(4.0, 3), Seed(13))
    lines = lines.subset(lines.foot_norms > sp.R1)
    tilde, keep = sp.map_caps_tilde(lines, sp.C_SHADOW)
    assert keep.all()
    plus = sp.map_caps_plus(lines, max(sp.R1, hg.R0))
    np.testing.assert_allclose(tilde.centers, plus.centers, atol=1e-14)
    assert np.all(plus.radii <= tilde.radii + 1e-12)


def test_shadow_cut_radius():
    assert sp.R1 < hg.R0
    assert hg.gamma(sp.R1) < np.pi / sp.C_SHADOW
    t = np.linspace(sp.R1, 0.999, 500)
    assert np.all(hg.gamma(t) < np.pi / sp.C_SHADOW)
    # the variant with e^2 - e + 1 admits lines outside the domain of the map
    assert hg.gamma(2 * sp.R1_MISPRINTED) > np.pi / sp.C_SHADOW
    assert sp.C_ENDCAP == pytest.approx(0.5 * np.arccos(1 / np.cosh(1)))


def test_g_c_values_and_band_mass():
    assert sp.g_c(np.pi / 4, 1.0, 3) == pytest.approx(2.0)
    spec = sp.CapProcessSpec(1.0, np.pi / 4, np.pi / 2, 3)
    assert sp.cap_band_mass(spec) == pytest.approx(0.5, abs=1e-14)
    num = integrate.quad(lambda a: sp.g_c(a, 1.0, 3), np.pi / 4, np.pi / 2)[0]
    assert num == pytest.approx(0.5, abs=1e-10)
    assert sp.cap_process_mass(spec) == pytest.approx(0.5 * 4 * np.pi)


@pytest.mark.parametrize("c,d", [(0.4327, 3), (1.0, 2), (3.35, 4)])
def test_band_mass_matches_quadrature(c, d):
    top = c * np.pi / max(2, c)
    spec = sp.CapProcessSpec(c, 0.1 * top, 0.9 * top, d)
    num = integrate.quad(lambda a: sp.g_c(a, c, d), spec.alpha_min, spec.alpha_max)[0]
    assert sp.cap_band_mass(spec) == pytest.approx(num, rel=1e-9)


def test_cap_spec_validation():
    with pytest.raises(ValueError):
        sp.CapProcessSpec(1.0, 0.5, 2.0, 3)
    with pytest.raises(ValueError):
        sp.CapProcessSpec(1.0, 0.5, 0.4, 3)


def test_direct_cap_radii_ks():
    spec = sp.CapProcessSpec(0.5, 0.05, 0.5 * np.pi / 2, 3)
    caps = sp.sample_caps_direct(20.0, spec, Seed(21))
    assert len(caps) > 10_000
    res = stats.kstest(caps.radii, lambda a: sp.cap_radius_cdf(a, spec))
    assert res.pvalue > 0.01
    assert np.all((caps.radii >= spec.alpha_min) & (caps.radii <= spec.alpha_max))


def test_consistency_identity():
    h = np.linspace(0.1, 3.0, 30)
    for d in (2, 3, 5):
        for c in (0.4, 1.0):
            lhs = sp._cot_pow(c * hg.gamma_of_h(h), c, d) / (d - 1)
            np.testing.assert_allclose(lhs, np.sinh(h) ** (d - 1) / (d - 1), rtol=1e-10)


def test_ball_mass_example():
    spec = sp.BallProcessSpec((0, 0), (1, 1), 0.5, 1.0, 3)
    assert sp.ball_process_mass(spec) == pytest.approx(1.5)
    assert sp.power_band_integral(0.5, 1.0, 1) == pytest.approx(np.log(2))


def test_ball_spec_validation():
    with pytest.raises(ValueError):
        sp.BallProcessSpec((0, 0), (1, 1), 0.5, 1.5)
    with pytest.raises(ValueError):
        sp.BallProcessSpec((0, 0), (1, 0), 0.1)
    assert sp.BallProcessSpec((0, 0, 0), (1, 1, 1), 0.1).exponent == 4


def test_ball_radii_ks_and_window():
    spec = sp.BallProcessSpec.cube(1.0, 0.05, 1.0, dim=2)
    cfg = sp.sample_balls(20.0, spec, Seed(31))
    assert np.all((cfg.centers >= -1) & (cfg.centers <= 1))
    a, b = 0.05 ** -2, 1.0
    cdf = lambda r: (a - np.clip(r, 0.05, 1.0) ** -2) / (a - b)
    assert stats.kstest(cfg.radii, cdf).pvalue > 0.01


def test_thin_band_counts_near_mean():
    spec = sp.BallProcessSpec((0, 0), (1, 1), 0.5 - 1e-3, 0.5, 3)
    mean = 1000 * sp.ball_process_mass(spec)
    counts = [len(sp.sample_balls(1000.0, spec, Seed(2, r))) for r in range(300)]
    assert abs(np.mean(counts) - mean) < 4 * np.sqrt(mean / 300)


def test_band_filter_partition_and_boundary():
    spec = sp.BallProcessSpec.cube(1.0, 3.0**-4, 1.0, dim=2)
    cfg = sp.sample_balls(5.0, spec, Seed(8))
    parts = [sp.band_filter(cfg, 3, n) for n in range(1, 5)]
    assert sum(len(p) for p in parts) == int(np.sum(cfg.radii > 3.0**-4))
    # r = M^-n lands in band n+1
    edge = sp.BallConfig(np.zeros((1, 2)), np.array([3.0**-2]), spec)
    assert len(sp.band_filter(edge, 3, 3)) == 1
    assert len(sp.band_filter(edge, 3, 2)) == 0
    np.testing.assert_array_equal(sp.band_index(np.array([3.0**-2, 1.0, 0.5]), 3), [3, 1, 1])


def test_band_counts_match_masses():
    spec = sp.BallProcessSpec.cube(0.5, 2.0**-3, 1.0, dim=2)
    lam = 0.3
    reps = 1000
    counts = np.zeros((reps, 3))
    for r in range(reps):
        cfg = sp.sample_balls(lam, spec, Seed(17, r))
        counts[r] = [len(sp.band_filter(cfg, 2, n)) for n in (1, 2, 3)]
    for n in (1, 2, 3):
        lo, hi = sp.band_edges(2, n)
        mean = lam * spec.volume * sp.power_band_integral(lo, hi, 3)
        assert abs(counts[:, n - 1].mean() - mean) < 3 * np.sqrt(mean / reps) + 1e-12


def test_ball_config_covers():
    spec = sp.BallProcessSpec.cube(1.0, 0.1)
    cfg = sp.BallConfig(np.array([[0.0, 0.0]]), np.array([0.5]), spec)
    np.testing.assert_array_equal(cfg.covers([[0.2, 0.0], [0.5, 0.0], [0.7, 0]]), [True, False, False])
