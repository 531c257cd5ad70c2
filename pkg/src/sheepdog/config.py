"""TOML scenario and batch files.

Layout (every key optional, defaults as in the dataclasses)::

    [scenario]      dt, horizon, n, m, seed, collision_constraints,
                    agent_model, offset, max_substeps, breach_tolerance,
                    stop_on_failure, relax_penalty, speed_limit
    [flock]         k_S, k_G, k_D, R_S, x_G
    [gains]         p1, p2, gamma, ladder   (p1/p2 absent: tuned per run)
    [[zones]]       center, radius, mode
    [initial]       sheep, dogs, headings
    [sampler]       cluster_radius, annulus, dog_region
    [certificate]   M1, M2, M3
    [batch]         grid | sheep + dogs, trials, base_seed, workers,
                    max_substeps, stop_on_failure

Errors carry the offending dotted key and, when it can be found, the line.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

import numpy as np

from .barriers import DEFAULT_GAMMA, GAIN_LADDER, BarrierGains, ProtectedZone, ZoneMode
from .certificate import CertificateBounds
from .errors import ConfigError
from .flock import FlockParams
from .montecarlo import TABLE_SIZES, BatchSpec
from .sampling import SamplerSpec
from .sim import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA = {
    "scenario": {
        "dt": float,
        "horizon": float,
        "n": int,
        "m": int,
        "seed": int,
        "collision_constraints": bool,
        "agent_model": str,
        "offset": float,
        "max_substeps": int,
        "breach_tolerance": float,
        "stop_on_failure": bool,
        "relax_penalty": float,
        "speed_limit": float,
    },
    "flock": {"k_S": float, "k_G": float, "k_D": float, "R_S": float, "x_G": "vec2"},
    "gains": {"p1": float, "p2": float, "gamma": float, "ladder": "floats"},
    "zones": {"center": "vec2", "radius": float, "mode": str},
    "initial": {"sheep": "points", "dogs": "points", "headings": "floats"},
    "sampler": {"cluster_radius": float, "annulus": "pair", "dog_region": "pair"},
    "certificate": {"M1": float, "M2": float, "M3": float},
    "batch": {
        "grid": "cells",
        "sheep": "ints",
        "dogs": "ints",
        "trials": int,
        "base_seed": int,
        "workers": int,
        "max_substeps": int,
        "stop_on_failure": bool,
    },
}


@dataclass
class Document:
    """Parsed file: raw table plus the source text for line lookups."""

    data: dict
    text: str = ""
    path: str = "<string>"

    def section(self, name) -> dict:
        return self.data.get(name, {})

    def locate(self, dotted: str) -> int | None:
        return _locate(self.text, dotted)


def _locate(text: str, dotted: str) -> int | None:
    """1-based line of ``key =`` inside ``[section]``, or of the header."""
    section, _, key = dotted.partition(".")
    key = key.split("[")[0]
    header = re.compile(r"^\s*\[\[?\s*" + re.escape(section) + r"\s*\]\]?\s*(#.*)?$")
    any_header = re.compile(r"^\s*\[")
    assign = re.compile(r"^\s*" + re.escape(key) + r"\s*=") if key else None
    inside, header_line = False, None
    for no, line in enumerate(text.splitlines(), 1):
        if header.match(line):
            inside = True
            header_line = header_line or no
            continue
        if any_header.match(line):
            inside = False
            continue
        if inside and assign and assign.match(line):
            return no
    return header_line


def _error(doc: Document, dotted: str, msg: str) -> ConfigError:
    return ConfigError(f"{doc.path}: {dotted}: {msg}", key=dotted, line=doc.locate(dotted))


def parse_text(text: str, path: str = "<string>") -> Document:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"{path}: {exc}", line=line) from None
    doc = Document(data, text, path)
    _check_keys(doc)
    return doc


def load(path) -> Document:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def _check_keys(doc: Document):
    for name, value in doc.data.items():
        if name not in SCHEMA:
            raise _error(doc, name, "unknown section")
        tables = value if name == "zones" else [value]
        if name == "zones" and not isinstance(value, list):
            raise _error(doc, name, "use [[zones]] array-of-tables")
        for table in tables:
            if not isinstance(table, dict):
                raise _error(doc, name, "expected a table")
            for key in table:
                if key not in SCHEMA[name]:
                    raise _error(doc, f"{name}.{key}", "unknown key")


# ---------------------------------------------------------------- overrides


def apply_overrides(doc: Document, overrides) -> Document:
    """Apply ``section.key=value`` strings; values use TOML syntax.

    A bare word that is not valid TOML is taken as a string, so
    ``scenario.agent_model=unicycle`` works without quotes.
    """
    for item in overrides or ():
        dotted, sep, raw = item.partition("=")
        dotted = dotted.strip()
        if not sep or "." not in dotted:
            raise ConfigError(f"override {item!r} must look like section.key=value", key=dotted or None)
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or section == "zones":
            raise ConfigError(f"override {dotted}: unknown section", key=dotted)
        if key not in SCHEMA[section]:
            raise ConfigError(f"override {dotted}: unknown key", key=dotted)
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        doc.data.setdefault(section, {})[key] = value
    return doc


# ---------------------------------------------------------------- coercion


def _coerce(doc: Document, dotted: str, value, kind):
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError("expected an integer")
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError("expected a number")
            if not np.isfinite(value):
                raise ValueError("must be finite")
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("must be finite")
        if kind == "vec2" and arr.shape != (2,):
            raise ValueError("expected [x, y]")
        if kind == "pair" and arr.shape != (2,):
            raise ValueError("expected [low, high]")
        if kind == "points" and (arr.ndim != 2 or arr.shape[1] != 2) and arr.size:
            raise ValueError("expected a list of [x, y] points")
        if kind == "points":
            return arr.reshape(-1, 2)
        if kind in ("floats", "ints") and arr.ndim != 1:
            raise ValueError("expected a flat list")
        if kind == "ints":
            if not np.all(arr == np.round(arr)):
                raise ValueError("expected integers")
            return tuple(int(v) for v in arr)
        if kind == "cells":
            if arr.ndim != 2 or arr.shape[1] != 2 or not np.all(arr == np.round(arr)):
                raise ValueError("expected a list of [n, m] integer pairs")
            return tuple((int(a), int(b)) for a, b in arr)
        if kind == "floats":
            return tuple(float(v) for v in arr)
        return tuple(float(v) for v in arr) if kind == "pair" else arr
    except (TypeError, ValueError) as exc:
        raise _error(doc, dotted, str(exc)) from None


def _values(doc: Document, section: str, table=None) -> dict:
    table = doc.section(section) if table is None else table
    kinds = SCHEMA[section]
    return {k: _coerce(doc, f"{section}.{k}", v, kinds[k]) for k, v in table.items()}


def _build(doc: Document, dotted: str, factory, **kwargs):
    """Call a constructor, mapping its ValueError onto the config key."""
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        key = _guess_key(msg, kwargs)
        where = f"{dotted}.{key}" if key else dotted
        raise _error(doc, where, msg) from None


def _guess_key(msg: str, kwargs) -> str | None:
    for k in sorted(kwargs, key=len, reverse=True):
        if re.search(r"\b" + re.escape(k) + r"\b", msg):
            return k
    return None


# ---------------------------------------------------------------- builders


def flock_params(doc: Document) -> FlockParams:
    return _build(doc, "flock", FlockParams, **_values(doc, "flock"))


def zones(doc: Document) -> tuple:
    raw = doc.data.get("zones")
    if raw is None:
        return (ProtectedZone((0.0, 0.0), 1.0),)
    out = []
    for idx, table in enumerate(raw):
        vals = {k: _coerce(doc, f"zones.{k}", v, SCHEMA["zones"][k]) for k, v in table.items()}
        if "radius" not in vals:
            raise _error(doc, "zones", f"zone {idx} needs a radius")
        mode = vals.get("mode", "keep_out")
        if mode not in {z.value for z in ZoneMode}:
            raise _error(doc, "zones.mode", f"mode must be 'keep_out' or 'keep_in', got {mode!r}")
        out.append(_build(doc, "zones", ProtectedZone, center=vals.get("center", (0.0, 0.0)), radius=vals["radius"], mode=mode))
    if not out:
        raise _error(doc, "zones", "at least one zone is required")
    return tuple(out)


def gains(doc: Document):
    """(fixed gains or None, gamma, ladder)."""
    vals = _values(doc, "gains")
    gamma = vals.get("gamma", DEFAULT_GAMMA)
    ladder = vals.get("ladder", GAIN_LADDER)
    if not ladder or min(ladder) <= 0:
        raise _error(doc, "gains.ladder", "ladder must be a nonempty list of positive numbers")
    if not gamma > 0:
        raise _error(doc, "gains.gamma", "gamma must be positive")
    if ("p1" in vals) != ("p2" in vals):
        raise _error(doc, "gains", "give both p1 and p2, or neither to auto-tune")
    fixed = BarrierGains(vals["p1"], vals["p2"], gamma) if "p1" in vals else None
    return fixed, gamma, tuple(sorted(ladder))


def sampler(doc: Document) -> SamplerSpec:
    return _build(doc, "sampler", SamplerSpec, **_values(doc, "sampler"))


def certificate_bounds(doc: Document) -> CertificateBounds:
    vals = _values(doc, "certificate")
    missing = [k for k in ("M1", "M2", "M3") if k not in vals]
    if missing:
        raise _error(doc, f"certificate.{missing[0]}", "missing (M1, M2 and M3 are required)")
    return _build(doc, "certificate", CertificateBounds, **vals)


def scenario(doc: Document) -> ScenarioConfig:
    vals = _values(doc, "scenario")
    init = _values(doc, "initial")
    fixed, gamma, ladder = gains(doc)
    kwargs = dict(vals)
    kwargs.update(
        params=flock_params(doc),
        zones=zones(doc),
        gains=fixed,
        gamma=gamma,
        gain_ladder=ladder,
        sampler=sampler(doc),
    )
    if "sheep" in init:
        kwargs["sheep"] = init["sheep"]
        kwargs["dogs"] = init.get("dogs", np.zeros((0, 2)))
        for key, arr in (("n", init["sheep"]), ("m", kwargs["dogs"])):
            if key in vals and vals[key] != len(arr):
                raise _error(doc, f"scenario.{key}", f"{key} = {vals[key]} disagrees with [initial] ({len(arr)} points)")
        kwargs.pop("n", None)
        kwargs.pop("m", None)
    elif "dogs" in init:
        raise _error(doc, "initial.dogs", "explicit dogs need explicit sheep")
    else:
        kwargs.setdefault("n", 1)
        kwargs.setdefault("m", 1)
        if kwargs["n"] < 1:
            raise _error(doc, "scenario.n", "n must be at least 1")
        if kwargs["m"] < 0:
            raise _error(doc, "scenario.m", "m must be nonnegative")
    if "headings" in init:
        kwargs["headings"] = np.asarray(init["headings"])
    if "horizon" in vals and "dt" in vals and vals["dt"] > 0 and vals["horizon"] < vals["dt"] and vals["horizon"] != 0:
        raise _error(doc, "scenario.horizon", "horizon must be at least dt (or zero)")
    return _build(doc, "scenario", ScenarioConfig, **kwargs)


def batch(doc: Document) -> BatchSpec:
    vals = _values(doc, "batch")
    sc = _values(doc, "scenario")
    fixed, gamma, ladder = gains(doc)
    if "grid" in vals and ("sheep" in vals or "dogs" in vals):
        raise _error(doc, "batch.grid", "give either grid or sheep/dogs lists, not both")
    if "grid" in vals:
        grid = vals.pop("grid")
    else:
        ns = vals.pop("sheep", TABLE_SIZES)
        ms = vals.pop("dogs", TABLE_SIZES)
        grid = tuple((n, m) for n in ns for m in ms)
    kwargs = dict(
        grid=grid,
        params=flock_params(doc),
        zones=zones(doc),
        gains=fixed,
        gamma=gamma,
        gain_ladder=ladder,
        sampler=sampler(doc),
        **vals,
    )
    for key in ("dt", "horizon", "breach_tolerance", "collision_constraints"):
        if key in sc:
            kwargs[key] = sc[key]
    if "seed" in sc and "base_seed" not in kwargs:
        kwargs["base_seed"] = sc["seed"]
    return _build(doc, "batch", BatchSpec, **kwargs)


@dataclass
class Loaded:
    """Convenience bundle used by the command line."""

    doc: Document
    overrides: list = field(default_factory=list)

    @classmethod
    def from_path(cls, path, overrides=()):
        doc = apply_overrides(load(path), overrides)
        _check_keys(doc)
        return cls(doc, list(overrides))
