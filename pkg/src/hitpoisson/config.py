"""Flat ``key = value`` experiment configs.

One assignment per line; ``#`` starts a comment.  Lists are comma
separated.  Coordinates and radii accept fractions such as ``1/3``.
Every key is validated before any computation starts; errors name the
offending key.

Keys (defaults in brackets)::

    experiment     poisson-test | recurrence | dimension | kac | corona | dichotomy | bound
    system         doubling | lsv | solenoid | stadium
    gamma, theta   LSV exponent, solenoid contraction
    ell            stadium flat length
    center         sampled | explicit [sampled]
    center_coords  x | x, z_re, z_im | r, phi  (explicit centers)
    center_index   first sampled center stream [0]
    centers        number of sampled centers [1]
    radii          explicit list, or r0, ratio, count for r0 * ratio^i
    t              time scale of the horizon floor(t / mu(B)) [1]
    ensemble_size  [10000]
    horizon_cap    cap on return times [1000000]
    budget         Monte Carlo sample budget for ball measures [1000000]
    burn_in        [1000]
    exact_measure  use closed-form ball measures when known [true]
    p, m           bound parameters; p defaults to floor(r^-1/2) [auto, 3]
    j_grid, q_grid R1 probe grid [0 ; 0,1,2]
    delta          corona exponent [1.5]
    lambda, depth  dichotomy ratio and levels [0.25, 8]
    n, scale_theta dichotomy shell (scale_theta^(n+1), scale_theta^n) [3, 0.5]
    c0, s_powers   corona verifier constant and schedule s = r^k [8 ; 2,3]
    seed, threads  [0, 1]
    output_path    report base path; .json and .csv are written [report]
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .core import Billiard, Circle, SystemSpec, TorusDisk, check_point
from .errors import HitPoissonError

EXPERIMENTS = ("poisson-test", "recurrence", "dimension", "kac", "corona", "dichotomy", "bound")
NEEDS_RADII = ("poisson-test", "recurrence", "dimension", "kac", "corona", "bound")
DECREASING = ("recurrence", "dimension")
U64 = (1 << 64) - 1


class ConfigError(HitPoissonError):
    """Invalid config; ``key`` names the offending entry."""

    def __init__(self, key: str, detail: str):
        self.key = key
        super().__init__(f"config error: {key}: {detail}")


def _real(v: str) -> float:
    try:
        return float(v)
    except ValueError:
        return float(Fraction(v.strip()))


def _int(v: str) -> int:
    f = _real(v)
    if not math.isfinite(f) or f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    # accept 1e6 but keep large integers exact
    return int(v) if v.strip().lstrip("+-").isdigit() else int(f)


def _reals(v: str) -> list[float]:
    return [_real(s) for s in v.split(",") if s.strip()]


def _ints(v: str) -> list[int]:
    return [_int(s) for s in v.split(",") if s.strip()]


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


PARSERS = {
    "experiment": str.strip, "system": str.strip, "gamma": _real, "theta": _real, "ell": _real,
    "center": str.strip, "center_coords": _reals, "center_index": _int, "centers": _int,
    "radii": _reals, "r0": _real, "ratio": _real, "count": _int,
    "t": _real, "ensemble_size": _int, "horizon_cap": _int, "budget": _int, "burn_in": _int,
    "exact_measure": _bool, "p": _int, "m": _int, "j_grid": _ints, "q_grid": _ints,
    "delta": _real, "lambda": _real, "depth": _int, "n": _int, "scale_theta": _real,
    "c0": _real, "s_powers": _reals, "seed": _int, "threads": _int, "output_path": str.strip,
}

DEFAULTS = {
    "center": "sampled", "center_index": 0, "centers": 1, "t": 1.0, "ensemble_size": 10000,
    "horizon_cap": 10**6, "budget": 10**6, "burn_in": 1000, "exact_measure": True, "p": None, "m": 3,
    "j_grid": [0], "q_grid": [0, 1, 2], "delta": 1.5, "lambda": 0.25, "depth": 8, "n": 3,
    "scale_theta": 0.5, "c0": 8.0, "s_powers": [2.0, 3.0], "seed": 0, "threads": 1,
    "output_path": "report", "gamma": None, "theta": None, "ell": None, "center_coords": None,
}


def parse_text(text: str) -> dict:
    """Raw key/value pairs, typed but not cross-validated."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        try:
            raw[key] = PARSERS[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None
    return raw


def load(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    return parse_text(text)


@dataclass
class Resolved:
    """Validated config plus the objects built from it."""

    values: dict
    spec: SystemSpec
    radii: list[float]
    explicit_center: object | None


def _need(cond: bool, key: str, detail: str):
    if not cond:
        raise ConfigError(key, detail)


def _build_spec(v: dict) -> SystemSpec:
    kind = v.get("system")
    _need(kind in ("doubling", "lsv", "solenoid", "stadium"), "system",
          "must be one of doubling, lsv, solenoid, stadium")
    for key, used in (("gamma", ("lsv", "solenoid")), ("theta", ("solenoid",)), ("ell", ("stadium",))):
        if kind in used:
            _need(v.get(key) is not None, key, f"required for {kind}")
        else:
            _need(v.get(key) is None, key, f"not a parameter of {kind}")
    try:
        return SystemSpec(kind, gamma=v["gamma"], theta=v["theta"], ell=v["ell"])
    except HitPoissonError as exc:
        key = "theta" if kind == "solenoid" and "theta" in str(exc) else ("ell" if kind == "stadium" else "gamma")
        raise ConfigError(key, str(exc)) from None


def _build_center(spec: SystemSpec, coords: list[float]):
    try:
        if spec.kind in ("doubling", "lsv"):
            _need(len(coords) == 1, "center_coords", "expected one coordinate x")
            x = coords[0]
            if spec.kind == "doubling":
                _need(0.0 <= x < 1.0, "center_coords", "x must lie in [0, 1)")
            else:
                _need(0.0 <= x <= 1.0, "center_coords", "x must lie in [0, 1]")
            point = Circle(x)
        elif spec.kind == "solenoid":
            _need(len(coords) == 3, "center_coords", "expected x, z_re, z_im")
            _need(0.0 <= coords[0] <= 1.0, "center_coords", "x must lie in [0, 1]")
            point = TorusDisk(*coords)
        else:
            _need(len(coords) == 2, "center_coords", "expected r, phi")
            _need(0.0 <= coords[0] < spec.perimeter, "center_coords", "r must lie in [0, perimeter)")
            point = Billiard(*coords)
        check_point(spec, point)
        return point
    except ConfigError:
        raise
    except HitPoissonError as exc:
        raise ConfigError("center_coords", str(exc)) from None


def _radii(v: dict) -> list[float]:
    if v.get("radii") is not None:
        _need(not any(v.get(k) is not None for k in ("r0", "ratio", "count")), "radii",
              "give either radii or r0, ratio, count")
        radii = list(v["radii"])
    elif any(v.get(k) is not None for k in ("r0", "ratio", "count")):
        for k in ("r0", "ratio", "count"):
            _need(v.get(k) is not None, k, "r0, ratio and count must be given together")
        _need(v["count"] >= 1, "count", "must be >= 1")
        _need(0 < v["ratio"] < 1, "ratio", "must lie in (0, 1)")
        radii = [v["r0"] * v["ratio"] ** i for i in range(v["count"])]
    else:
        return []
    _need(len(radii) > 0, "radii", "empty list")
    _need(all(math.isfinite(r) and r > 0 for r in radii), "radii", "every radius must be positive")
    return radii


def resolve(raw: dict, overrides: dict | None = None) -> Resolved:
    """Fill defaults, apply overrides, and check every precondition."""
    v = dict(DEFAULTS)
    v.update(raw)
    for k, val in (overrides or {}).items():
        if val is not None:
            v[k] = val
    _need("experiment" in v, "experiment", "required")
    _need(v["experiment"] in EXPERIMENTS, "experiment", "must be one of " + ", ".join(EXPERIMENTS))
    exp = v["experiment"]
    spec = _build_spec(v)
    for k in ("r0", "ratio", "count", "radii"):
        v.setdefault(k, None)
    radii = _radii(v)
    if exp in NEEDS_RADII:
        _need(bool(radii), "radii", f"required for {exp}")
    if exp in DECREASING:
        _need(len(radii) >= 3, "radii", "need at least 3 radii for a slope")
        _need(all(a > b for a, b in zip(radii, radii[1:])), "radii", "must be strictly decreasing")
    _need(v["center"] in ("sampled", "explicit"), "center", "must be sampled or explicit")
    center = None
    if v["center"] == "explicit":
        _need(v["center_coords"] is not None, "center_coords", "required for an explicit center")
        _need(v["centers"] == 1, "centers", "an explicit center means centers = 1")
        center = _build_center(spec, v["center_coords"])
    else:
        _need(v["center_coords"] is None, "center_coords", "only used with center = explicit")
    _need(v["centers"] >= 1, "centers", "must be >= 1")
    _need(0 <= v["center_index"] <= U64, "center_index", "must be a 64-bit unsigned integer")
    _need(0 <= v["seed"] <= U64, "seed", "must be a 64-bit unsigned integer")
    _need(v["threads"] >= 1, "threads", "must be >= 1")
    _need(math.isfinite(v["t"]) and v["t"] > 0, "t", "must be positive")
    _need(v["ensemble_size"] >= 1, "ensemble_size", "must be >= 1")
    _need(v["horizon_cap"] >= 1, "horizon_cap", "must be >= 1")
    _need(v["budget"] >= 1000, "budget", "must be >= 1000")
    _need(v["burn_in"] >= 0, "burn_in", "must be >= 0")
    if exp == "dimension" and not (v["exact_measure"] and spec.kind in ("doubling", "stadium")):
        _need(v["budget"] >= 10**4, "budget", "local dimension needs >= 10^4 samples per radius")
    if exp == "corona":
        _need(v["delta"] > 1, "delta", "must exceed 1")
        _need(all(r < 1 for r in radii), "radii", "corona radii must lie in (0, 1)")
    if exp == "bound":
        _need(v["m"] >= 1, "m", "must be >= 1")
        _need(v["p"] is None or v["p"] >= 2, "p", "must be >= 2")
        _need(len(v["j_grid"]) > 0 and min(v["j_grid"]) >= 0, "j_grid", "nonempty, entries >= 0")
        _need(len(v["q_grid"]) > 0 and min(v["q_grid"]) >= 0, "q_grid", "nonempty, entries >= 0")
    if exp == "dichotomy":
        _need(0 < v["lambda"] < 0.5, "lambda", "must lie in (0, 1/2)")
        _need(v["depth"] >= 1, "depth", "must be >= 1")
        _need(v["n"] >= 0, "n", "must be >= 0")
        _need(0 < v["scale_theta"] < 1, "scale_theta", "must lie in (0, 1)")
        _need(v["c0"] > 0, "c0", "must be positive")
        _need(len(v["s_powers"]) > 0 and all(k > 1 for k in v["s_powers"]), "s_powers",
              "entries must exceed 1 so that s < r")
    _need(bool(v["output_path"]), "output_path", "must be nonempty")
    out_dir = Path(v["output_path"]).parent
    probe = out_dir if out_dir.exists() else _existing_parent(out_dir)
    _need(probe.is_dir() and os.access(probe, os.W_OK), "output_path", f"{out_dir} is not writable")
    values = {k: v[k] for k in sorted(v)}
    values["radii"] = radii
    return Resolved(values, spec, radii, center)


def _existing_parent(p: Path) -> Path:
    p = p.absolute()
    while not p.exists():
        p = p.parent
    return p
