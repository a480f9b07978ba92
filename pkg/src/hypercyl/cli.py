"""Command line runner: ``hypercyl <suite> --config PATH [--seed N] [--workers K] [--out DIR]``.

Exit codes: 0 on success, 2 on invalid configuration or arguments, 3 when
an audit or identity check fails.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import audits
from . import capconn as cc
from . import fracball as fb
from . import hypgeo as hg
from . import identities
from . import mandelfp as mf
from . import report
from . import sampler as sp
from .report import ConfigError, Key
from .rng import Seed
from .stats import wilson_ci

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _ascending_nonneg(v):
    return len(v) > 0 and all(x >= 0 for x in v) and all(b >= a for a, b in zip(v, v[1:]))


def _ascending_pos(v):
    return _ascending_nonneg(v) and min(v) > 0


def _probs(v):
    return len(v) > 0 and all(0 < x < 1 for x in v) and all(b >= a for a, b in zip(v, v[1:]))


COMMON = {
    "seed": Key(int, 0, lambda v: 0 <= v < 2**64, "64-bit unsigned"),
    "workers": Key(int, 0, _nonneg, "0 means all cores"),
    "out": Key(str, "."),
    "svg": Key(bool, True),
}

SCHEMAS = {
    "coverage-scan": {
        "d": Key(int, 3, lambda v: v >= 2, "d >= 2"),
        "lams": Key(list, [2.0, 2.5, 3.0, 4.0, 5.0, 7.0], _ascending_nonneg, "ascending, nonnegative"),
        "replicates": Key(int, 400, _pos, "positive"),
        "level": Key(int, 4, lambda v: 1 <= v <= 7, "1..7"),
        "max_rejections": Key(int, 20_000, _pos, "positive"),
        "c": Key(float, 1.0, _pos, "positive"),
        "alpha_min": Key(float, 0.15, _pos, "positive"),
        "alpha_max": Key(float, 0.6, _pos, "positive"),
        "probe_spacing": Key(float, 0.05, _pos, "positive"),
    },
    "cap-connectivity-scan": {
        "d": Key(int, 3, lambda v: v >= 2, "d >= 2"),
        "lams": Key(list, [0.05, 0.1, 0.2, 0.5, 1.0, 2.0], _ascending_pos, "ascending, positive"),
        "replicates": Key(int, 50, _pos, "positive"),
        "h_max": Key(float, 3.0, _pos, "positive"),
        "r": Key(float, float(hg.R0), lambda v: hg.R0 - 1e-15 <= v < 1, "tanh(1/2) <= r < 1"),
        "c": Key(float, 1.0, _pos, "positive"),
        "alpha_min": Key(float, 0.05, _pos, "positive"),
        "alpha_max": Key(float, 0.6, _pos, "positive"),
    },
    "crossing-scan": {
        "d": Key(int, 2, lambda v: v >= 2, "d >= 2"),
        "lams": Key(list, [0.0, 0.02, 0.05, 0.1, 0.2], _ascending_nonneg, "ascending, nonnegative"),
        "replicates": Key(int, 1000, _pos, "positive"),
        "a": Key(float, 1.0, _pos, "positive"),
        "b": Key(float, 3.0, _pos, "b > a"),
        "r_min": Key(float, 0.05, lambda v: 0 < v < 1, "0 < r_min < 1"),
        "svg_config": Key(bool, False),
    },
    "fp-separation": {
        "M": Key(int, 3, lambda v: v >= 2, "M >= 2"),
        "d": Key(int, 2, lambda v: v >= 2, "d >= 2"),
        "n": Key(int, 3, lambda v: v >= 1, "n >= 1"),
        "ps": Key(list, [0.7, 0.8, 0.85, 0.9, 0.95], _probs, "ascending, in (0, 1)"),
        "replicates": Key(int, 1000, _pos, "positive"),
        "pgm": Key(bool, False),
    },
    "coupling-audit": {
        "scale": Key(float, 1.0, _pos, "positive; multiplies every trial count"),
    },
    "identity-suite": {},
}
SUITES = tuple(SCHEMAS)


def load_config(suite, path=None, **overrides):
    raw = report.parse_text(Path(path).read_text(encoding="utf-8")) if path else {}
    schema = dict(COMMON)
    schema.update(SCHEMAS[suite])
    cfg = report.build_config(suite, schema, raw, overrides)
    if suite == "crossing-scan" and not cfg["b"] > cfg["a"]:
        raise ConfigError("need b > a")
    if "alpha_max" in cfg.values:
        try:
            sp.CapProcessSpec(cfg["c"], cfg["alpha_min"], cfg["alpha_max"], cfg["d"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if suite == "fp-separation":
        try:
            mf.third_marks(cfg["M"] ** cfg["n"])
            mf._check_budget(cfg["M"], cfg["d"], cfg["n"], mf.DEFAULT_CELL_BUDGET)
        except (ValueError, mf.CellBudgetError) as exc:
            raise ConfigError(str(exc)) from None
    return cfg


# ---------------------------------------------------------------------------
# replicate orchestration


def _chunks(n, parts):
    parts = max(1, min(n, parts))
    edges = np.linspace(0, n, parts + 1).astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_replicates(fn, args, replicates, workers):
    """``fn(*args, reps)`` over contiguous replicate chunks, concatenated in
    replicate order. Each replicate owns its RNG streams, so the result does
    not depend on ``workers``."""
    chunks = _chunks(replicates, 4 * workers if workers > 1 else 1)
    if workers <= 1 or len(chunks) == 1:
        return np.concatenate([fn(*args, c) for c in chunks])
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *args, c) for c in chunks]
        return np.concatenate([f.result() for f in futs])


def _coverage_chunk(values, net, reps):
    spec = sp.CapProcessSpec(values["c"], values["alpha_min"], values["alpha_max"], values["d"])
    probes = cc.probe_points(values["d"], values["probe_spacing"], seed=values["seed"])
    out = np.zeros((len(reps), len(values["lams"]), 2), dtype=bool)
    for i, k in enumerate(reps):
        for m, lam in enumerate(values["lams"]):
            caps = sp.sample_caps_direct(lam, spec, Seed(values["seed"], k))
            out[i, m, 0] = cc.coverage_certificate(caps, net).covered
            out[i, m, 1] = len(cc.pointwise_uncovered(caps, probes)) == 0
    return out


def _capconn_chunk(values, reps):
    d = values["d"]
    window = sp.LineWindow(values["h_max"], d)
    spec = sp.CapProcessSpec(values["c"], values["alpha_min"], values["alpha_max"], d)
    out = np.zeros((len(reps), len(values["lams"]), 3), dtype=bool)
    for i, k in enumerate(reps):
        s = Seed(values["seed"], k)
        for m, lam in enumerate(values["lams"]):
            lines = sp.sample_lines(lam, window, s)
            out[i, m, 0] = cc.is_connected(sp.map_caps_minus(lines))
            out[i, m, 1] = cc.is_connected(sp.map_caps_plus(lines, values["r"]))
            out[i, m, 2] = cc.is_connected(sp.sample_caps_direct(lam, spec, s))
    return out


def _crossing_chunk(values, reps):
    ann = fb.Annulus(values["a"], values["b"])
    return fb.crossing_indicators(values["lams"], ann, reps, Seed(values["seed"]), values["d"], values["r_min"])


def _fp_chunk(values, reps):
    d = values["d"]
    out = np.zeros((len(reps), len(values["ps"]), 2 * d + 1), dtype=bool)
    for i, k in enumerate(reps):
        for m, p in enumerate(values["ps"]):
            fp = mf.generate_fp(values["M"], p, values["n"], d, Seed(values["seed"], k))
            rects, ann = mf.separation_profile(fp)
            out[i, m, : 2 * d] = rects
            out[i, m, 2 * d] = ann
    return out


def _prop_row(hits, n, **point):
    est = hits / n if n else float("nan")
    lo, hi = wilson_ci(int(hits), int(n))
    row = dict(point)
    row.update(
        estimate=float(est),
        se=float(np.sqrt(est * (1 - est) / n)) if n else float("nan"),
        ci_low=lo,
        ci_high=hi,
        replicates=int(n),
    )
    return row


# ---------------------------------------------------------------------------
# suites; each returns (rows, ok, svg text or None, extra files)


def suite_coverage(cfg, workers):
    v = cfg.values
    net = cc.build_net(v["level"], v["d"], Seed(v["seed"]), max_rejections=v["max_rejections"])
    res = map_replicates(_coverage_chunk, (v, net), v["replicates"], workers)
    rows = []
    for m, lam in enumerate(v["lams"]):
        row = _prop_row(int(res[:, m, 0].sum()), v["replicates"], lam=lam)
        row["probe_estimate"] = float(res[:, m, 1].mean())
        row["net_size"] = len(net)
        rows.append(row)
    return rows, True


def suite_capconn(cfg, workers):
    v = cfg.values
    res = map_replicates(_capconn_chunk, (v,), v["replicates"], workers)
    rows = []
    for m, lam in enumerate(v["lams"]):
        for j, name in enumerate(("endcap", "shadow", "direct")):
            rows.append(_prop_row(int(res[:, m, j].sum()), v["replicates"], lam=lam, process=name))
    return rows, True


def suite_crossing(cfg, workers):
    v = cfg.values
    res = map_replicates(_crossing_chunk, (v,), v["replicates"], workers)
    rows = [_prop_row(int(res[:, m].sum()), v["replicates"], lam=lam) for m, lam in enumerate(v["lams"])]
    return rows, True


def suite_fp(cfg, workers):
    v = cfg.values
    d, n = v["d"], v["replicates"]
    res = map_replicates(_fp_chunk, (v,), n, workers)
    names = [f"R{k + 1}" for k in range(2 * d)] + ["annulus"]
    rows = []
    for m, p in enumerate(v["ps"]):
        est = res[:, m].mean(axis=0)
        se = np.sqrt(est * (1 - est) / n)
        for j, name in enumerate(names):
            rows.append(_prop_row(int(res[:, m, j].sum()), n, p=p, region=name))
        prod = float(np.prod(est[: 2 * d]))
        terms = np.divide(se[: 2 * d], est[: 2 * d], out=np.zeros(2 * d), where=est[: 2 * d] > 0)
        se_prod = prod * float(np.sqrt(np.sum(terms**2)))
        pooled = float(np.hypot(se[2 * d], se_prod))
        rows.append(
            {
                "p": p,
                "region": "rectangle-product",
                "estimate": prod,
                "se": se_prod,
                "replicates": n,
                "fkg_margin": float(est[2 * d] - prod + 2 * pooled),
            }
        )
    return rows, True


def suite_audit(cfg, workers):
    v = cfg.values
    jobs = [
        (audits.audit_endcap_pairs, 10_000),
        (audits.audit_endcap_inclusion, 10_000),
        (audits.audit_shadow_inclusion, 100_000),
        (audits.audit_vertical_projection, 1_000_000),
        (audits.audit_coupled_fp, 100_000),
    ]
    args = [(fn, max(1, int(round(n * v["scale"]))), v["seed"]) for fn, n in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_audit, args))
    else:
        results = [_run_audit(a) for a in args]
    rows = []
    for r in results:
        row = r.as_row()
        row.pop("methods", None)
        row["passed"] = r.passed
        rows.append(row)
    return rows, all(r.passed for r in results)


def _run_audit(arg):
    fn, n, seed = arg
    return fn(n, seed=seed)


def suite_identities(cfg, workers):
    checks = identities.run_all()
    return [c.as_row() for c in checks], all(c.passed for c in checks)


RUNNERS = {
    "coverage-scan": suite_coverage,
    "cap-connectivity-scan": suite_capconn,
    "crossing-scan": suite_crossing,
    "fp-separation": suite_fp,
    "coupling-audit": suite_audit,
    "identity-suite": suite_identities,
}

CURVES = {
    "coverage-scan": ("lam", None),
    "cap-connectivity-scan": ("lam", ("process", "endcap")),
    "crossing-scan": ("lam", None),
    "fp-separation": ("p", ("region", "annulus")),
}


def _curve_svg(suite, rows):
    x, sel = CURVES[suite]
    if sel is not None:
        rows = [r for r in rows if r.get(sel[0]) == sel[1]]
    return report.svg_curve(
        [r[x] for r in rows],
        [r["estimate"] for r in rows],
        [r["ci_low"] for r in rows],
        [r["ci_high"] for r in rows],
        title=suite,
        xlabel=x,
    )


def run(suite, cfg, workers=None):
    """Run a suite and write its report files; returns ``(exit code, paths)``."""
    if workers is None:
        workers = cfg["workers"] or os.cpu_count() or 1
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".hypercyl-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    t0 = time.perf_counter()
    rows, ok = RUNNERS[suite](cfg, workers)
    elapsed = time.perf_counter() - t0
    for r in rows:
        r["elapsed_s"] = round(elapsed, 6)
    paths = []
    csv_path = out / f"{suite}.csv"
    csv_path.write_text(report.render_csv(cfg, rows), encoding="utf-8", newline="\n")
    paths.append(csv_path)
    if cfg["svg"] and suite in CURVES:
        svg_path = out / f"{suite}.svg"
        svg_path.write_text(_curve_svg(suite, rows), encoding="utf-8", newline="\n")
        paths.append(svg_path)
    if suite == "crossing-scan" and cfg["svg_config"] and cfg["d"] == 2:
        v = cfg.values
        ann = fb.Annulus(v["a"], v["b"])
        top = max(v["lams"])
        if top > 0:
            spec = fb.crossing_window(ann, 2, v["r_min"])
            bc = sp.sample_balls(top, spec, Seed(v["seed"], 0))
            p = out / "crossing-config.svg"
            p.write_text(
                report.svg_balls(bc.centers, bc.radii, spec.hi[0], boxes=(ann.a, ann.b), title="replicate 0"),
                encoding="utf-8",
                newline="\n",
            )
            paths.append(p)
    if suite == "fp-separation" and cfg["pgm"] and cfg["d"] == 2:
        v = cfg.values
        fp = mf.generate_fp(v["M"], v["ps"][0], v["n"], 2, Seed(v["seed"], 0))
        paths.append(mf.export_pgm(fp, v["n"], out / "fp-grid.pgm"))
    return (EXIT_OK if ok else EXIT_VIOLATION), paths


def build_parser():
    ap = argparse.ArgumentParser(prog="hypercyl", description="Hyperbolic cylinder and fractal percolation experiments.")
    ap.add_argument("suite", choices=SUITES)
    ap.add_argument("--config", help="key = value config file (defaults when omitted)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        cfg = load_config(args.suite, args.config, seed=args.seed, workers=args.workers, out=args.out)
        code, paths = run(args.suite, cfg)
    except (ConfigError, OSError) as exc:
        print(f"hypercyl: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in paths:
        print(p)
    if code == EXIT_VIOLATION:
        print("hypercyl: checks failed, see the report", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
