"""Experiment configuration, CSV reports and SVG plots.

Configs are flat ``key = value`` text files, one experiment per file, with
``#`` comments. Lists are comma separated. Reports are UTF-8 CSV with LF line
endings and a ``#``-prefixed provenance header.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

from . import __version__

SCHEMA_VERSION = 1
TIMING_COLUMNS = ("elapsed_s",)
# keys that do not change results and stay out of the config hash
RUNTIME_KEYS = ("seed", "workers", "out")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floats(s):
    s = s.strip()
    if not s:
        return []
    return [float(v) for v in s.split(",")]


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(float(x)) for x in v)
    return str(v)


PARSERS = {
    int: int,
    float: float,
    bool: _parse_bool,
    list: _parse_floats,
    str: str,
}


@dataclass(frozen=True)
class Key:
    """One typed config key with its default and an optional range check."""

    type: type
    default: object
    check: object = None
    help: str = ""


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return self.values[k]

    def to_text(self, include_runtime=True):
        lines = [f"experiment = {self.experiment}"]
        for k in sorted(self.values):
            if include_runtime or k not in RUNTIME_KEYS:
                lines.append(f"{k} = {_fmt_value(self.values[k])}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self):
        return hashlib.sha256(self.to_text(include_runtime=False).encode("utf-8")).hexdigest()[:16]


def parse_text(text):
    """Raw ``key -> string`` mapping from config text."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {n}: empty key")
        if k in out:
            raise ConfigError(f"line {n}: duplicate key {k!r}")
        out[k] = v
    return out


def build_config(experiment, schema, raw, overrides=None):
    """Typed, validated config from raw strings plus typed overrides."""
    raw = dict(raw)
    named = raw.pop("experiment", experiment)
    if named != experiment:
        raise ConfigError(f"config is for {named!r}, not {experiment!r}")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    values = {}
    for k, spec in schema.items():
        if k in raw:
            try:
                values[k] = PARSERS[spec.type](raw[k])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{k}: {exc}") from None
        else:
            values[k] = list(spec.default) if isinstance(spec.default, list) else spec.default
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    for k, spec in schema.items():
        if spec.check is not None and not spec.check(values[k]):
            raise ConfigError(f"{k} = {_fmt_value(values[k])} is out of range ({spec.help})")
    return ExperimentConfig(experiment, values)


# ---------------------------------------------------------------------------
# CSV


def _fmt_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def render_csv(config, rows, columns=None):
    """CSV text with a provenance header; rows keep their given order."""
    if columns is None:
        columns = []
        for r in rows:
            columns += [c for c in r if c not in columns]
        columns = [c for c in columns if c not in TIMING_COLUMNS] + [c for c in TIMING_COLUMNS if c in columns]
    buf = io.StringIO()
    buf.write("# hypercyl report\n")
    buf.write(f"# schema_version = {SCHEMA_VERSION}\n")
    buf.write(f"# experiment = {config.experiment}\n")
    buf.write(f"# config_hash = {config.hash}\n")
    buf.write(f"# seed = {config.values.get('seed', 0)}\n")
    buf.write(f"# version = {__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv(text):
    """Header dict and list of row dicts from a report."""
    head, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                head[k.strip()] = v.strip()
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return head, rows


def strip_timing(text):
    """Report text with timing columns removed, for determinism checks."""
    head = [l for l in text.splitlines() if l.startswith("#")]
    body = [l for l in text.splitlines() if not l.startswith("#")]
    rows = list(csv.reader(body))
    if not rows:
        return text
    keep = [i for i, c in enumerate(rows[0]) if c not in TIMING_COLUMNS]
    out = head + [",".join(r[i] for i in keep) for r in rows]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# SVG

W, H = 480, 320
MARGIN = 48


def _f(x):
    return f"{x:.3f}"


def _svg(parts, title):
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">\n'
        f"<title>{_escape(title)}</title>\n"
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n'
    )
    return head + "".join(p + "\n" for p in parts) + "</svg>\n"


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_curve(xs, ys, lo=None, hi=None, title="", xlabel="lambda", ylabel="estimate", ylim=(0.0, 1.0)):
    """Points with optional CI whiskers on fixed axes."""
    x0, x1 = MARGIN, W - MARGIN / 2
    y0, y1 = H - MARGIN, MARGIN / 2
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{_escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2})">{_escape(ylabel)}</text>',
    ]
    if len(xs):
        xmin, xmax = min(xs), max(xs)
        if xmax == xmin:
            xmin, xmax = xmin - 0.5, xmax + 0.5
        ymin, ymax = ylim

        def px(x):
            return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0 - 10) + 5

        def py(y):
            return y0 - (y - ymin) / (ymax - ymin) * (y0 - y1)

        for k, (x, y) in enumerate(zip(xs, ys)):
            if lo is not None and hi is not None:
                parts.append(
                    f'<line x1="{_f(px(x))}" y1="{_f(py(lo[k]))}" x2="{_f(px(x))}" y2="{_f(py(hi[k]))}" '
                    'stroke="steelblue"/>'
                )
            parts.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3" fill="black"/>')
        for v in (xmin, xmax):
            parts.append(f'<text x="{_f(px(v))}" y="{y0 + 16}" text-anchor="middle" font-size="10">{v:g}</text>')
        for v in (ymin, ymax):
            parts.append(f'<text x="{x0 - 6}" y="{_f(py(v) + 4)}" text-anchor="end" font-size="10">{v:g}</text>')
    return _svg(parts, title)


def svg_balls(centers, radii, half_width, boxes=(), title=""):
    """Planar ball configuration in ``[-half_width, half_width]^2`` with
    optional square outlines given by their half widths."""
    import numpy as np

    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or (centers.size and centers.shape[1] != 2):
        raise ValueError("configuration drawing needs d = 2")
    side = min(W, H) - 2 * 10
    s = side / (2 * half_width)
    ox, oy = W / 2, H / 2
    parts = []
    for c, r in zip(centers, radii):
        parts.append(
            f'<circle cx="{_f(ox + s * c[0])}" cy="{_f(oy - s * c[1])}" r="{_f(s * r)}" '
            'fill="steelblue" fill-opacity="0.35" stroke="none"/>'
        )
    for h in boxes:
        parts.append(
            f'<rect x="{_f(ox - s * h)}" y="{_f(oy - s * h)}" width="{_f(2 * s * h)}" height="{_f(2 * s * h)}" '
            'fill="none" stroke="crimson"/>'
        )
    return _svg(parts, title)
