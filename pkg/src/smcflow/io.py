"""Shared I/O plumbing: unit-suffixed config files, CSV tables and SVG line plots.

Config keys carry their unit as a suffix (``initial_gap_mm``, ``F_max_kN``);
values are converted to SI on read so the solvers never see mixed units.
"""

from __future__ import annotations

import configparser
import os

import numpy as np

# Multiplicative factor to SI for every recognized key suffix. Temperatures
# stay in degC throughout the package, so _C maps to 1.
UNIT_FACTORS = {
    "m": 1.0,
    "mm": 1e-3,
    "um": 1e-6,
    "mm2": 1e-6,
    "m2": 1.0,
    "s": 1.0,
    "per_s": 1.0,
    "m_s": 1.0,
    "mm_s": 1e-3,
    "C": 1.0,
    "Pa": 1.0,
    "kPa": 1e3,
    "MPa": 1e6,
    "bar": 1e5,
    "Pa_s": 1.0,
    "kPa_s": 1e3,
    "N": 1.0,
    "kN": 1e3,
    "MN_s_m3": 1e6,
    "N_s_m3": 1.0,
    "GPa": 1e9,
    "W_m_C": 1.0,
    "W_m2_C": 1.0,
    "J_kg_C": 1.0,
    "kg_m3": 1.0,
}


class ConfigError(ValueError):
    """Raised for missing/invalid config content; message names file and key."""


def _split_unit(key):
    """Return (base_name, factor); longest recognized suffix wins."""
    parts = key.split("_")
    for i in range(1, len(parts)):
        suffix = "_".join(parts[i:])
        if suffix in UNIT_FACTORS:
            return "_".join(parts[:i]), UNIT_FACTORS[suffix]
    return key, None


class Section:
    """One config section with unit-aware getters and provenance in errors."""

    def __init__(self, name, items, path):
        self.name = name
        self.path = path
        self._items = dict(items)
        self._bases = {}
        for key in self._items:
            base, factor = _split_unit(key)
            self._bases[base] = (key, factor)

    def __contains__(self, base):
        return base in self._bases

    def keys(self):
        return list(self._items)

    def _raw(self, base):
        if base not in self._bases:
            raise ConfigError(
                f"{self.path}: section [{self.name}] is missing key '{base}'"
            )
        key, factor = self._bases[base]
        return key, factor, self._items[key]

    def get_float(self, base, default=None):
        if base not in self._bases:
            if default is not None:
                return default
        key, factor, raw = self._raw(base)
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{self.path}: key '{key}' is not a number: {raw!r}")
        return value * (factor if factor is not None else 1.0)

    def get_int(self, base, default=None):
        if base not in self._bases and default is not None:
            return default
        key, _, raw = self._raw(base)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{self.path}: key '{key}' is not an integer: {raw!r}")

    def get_str(self, base, default=None):
        if base not in self._bases and default is not None:
            return default
        _, _, raw = self._raw(base)
        return raw.strip()

    def get_floats(self, base, default=None):
        """Whitespace-separated list of numbers, unit suffix applied to each."""
        if base not in self._bases and default is not None:
            return default
        key, factor, raw = self._raw(base)
        factor = factor if factor is not None else 1.0
        try:
            return [float(tok) * factor for tok in raw.split()]
        except ValueError:
            raise ConfigError(f"{self.path}: key '{key}' is not a number list: {raw!r}")

    def get_pairs(self, base, default=None):
        """Comma-separated 'a:b' pairs, e.g. a press profile."""
        if base not in self._bases and default is not None:
            return default
        key, factor, raw = self._raw(base)
        factor = factor if factor is not None else 1.0
        pairs = []
        for chunk in raw.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                a, b = chunk.split(":")
                pairs.append((float(a) * factor, float(b) * factor))
            except ValueError:
                raise ConfigError(
                    f"{self.path}: key '{key}' expects 'a:b' pairs, got {chunk!r}"
                )
        return pairs


def read_config(path):
    """Parse an INI-style file into {section name: Section}."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str   # keep case, unit suffixes are case sensitive
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    return {name: Section(name, parser.items(name), path) for name in parser.sections()}


# ---------------------------------------------------------------------------
# CSV tables (comma separated, header row, 9 significant digits)

def format_value(x):
    return f"{x:.9g}"


def write_csv(path, header, columns):
    """Write columns (equal-length 1D arrays) under the given header names."""
    columns = [np.asarray(c, dtype=float) for c in columns]
    n = columns[0].size if columns else 0
    for c in columns:
        if c.size != n:
            raise ValueError("csv columns must have equal length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(format_value(c[i]) for c in columns) + "\n")


def read_csv(path):
    """Read a CSV written by write_csv; returns (header, 2D float array)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty csv file: {path}")
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for ln in lines[1:]:
        rows.append([float(tok) for tok in ln.split(",")])
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(header)))
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    return header, data


# ---------------------------------------------------------------------------
# Minimal deterministic SVG line plots (no external renderer)

_PALETTE = ["#1b6ca8", "#c23b22", "#2e8540", "#8e44ad", "#e67e22", "#16a085",
            "#7f8c8d", "#c0392b"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 34, 50


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** np.floor(np.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = np.ceil(lo / step) * step
    vals = []
    v = first
    while v <= hi + 1e-12 * span:
        vals.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return vals


def svg_line_plot(path, x, series, title, xlabel, ylabel):
    """Write one SVG with a polyline per (label -> y array) entry in series."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    xlo, xhi = float(x.min()), float(x.max())
    ylo = min(float(v.min()) for v in ys.values())
    yhi = max(float(v.max()) for v in ys.values())
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">'
    )
    out.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
    out.append(
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
        f"{title}</text>"
    )
    # axes box
    out.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>'
    )
    for tv in _ticks(xlo, xhi):
        xp = px(tv)
        out.append(
            f'<line x1="{xp:.2f}" y1="{_H - _MB}" x2="{xp:.2f}" '
            f'y2="{_H - _MB + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{xp:.2f}" y="{_H - _MB + 18}" text-anchor="middle">'
            f"{tv:.6g}</text>"
        )
    for tv in _ticks(ylo, yhi):
        yp = py(tv)
        out.append(
            f'<line x1="{_ML - 5}" y1="{yp:.2f}" x2="{_ML}" y2="{yp:.2f}" '
            f'stroke="black"/>'
        )
        out.append(
            f'<text x="{_ML - 8}" y="{yp + 4:.2f}" text-anchor="end">{tv:.6g}</text>'
        )
    out.append(
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 12}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>'
    )
    for idx, (label, y) in enumerate(ys.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{px(xv):.2f},{py(yv):.2f}" for xv, yv in zip(x, y))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 16 + 14 * idx}" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
