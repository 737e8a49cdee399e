"""Run configuration: TOML in, validated nested dict out.

Every key has a default below; unknown keys, wrong types and out-of-range
values are rejected with the offending key path and, when it can be found,
its line in the file.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from pathlib import Path

import tomlkit
from tomlkit.exceptions import KeyAlreadyPresent, ParseError

__all__ = ["ConfigError", "DEFAULTS", "PULSE_DEFAULTS", "parse_config", "loads_config",
           "dumps_config", "config_hash", "SHIPPED", "shipped_config"]

SHIPPED = ("fig1", "fig2a", "fig2b", "fig3", "fig4", "fig5", "table1")


class ConfigError(ValueError):
    def __init__(self, msg, key=None, line=None):
        where = "".join([f" [{key}]" if key else "", f" (line {line})" if line else ""])
        super().__init__(msg + where)
        self.key, self.line = key, line


DEFAULTS = {
    "run": {"seed": 0, "out": "out", "threads": 0, "format": "csv"},
    "trap": {"dimension": 3, "eta": 2.0, "n_shells": 21, "omega": 6283.185307179586},
    "emission": {"kind": "isotropic", "axis": [0.0, 0.0, 1.0], "n_theta": 16, "n_phi": 16},
    "cycle": {"repeats": 1},
    "collisions": {"enabled": True, "strength": 4e-5},
    "initial": {"kind": "thermal", "N": 133, "mean_energy": 6.0, "seed": 0,
                "relax_time": 0.0},
    "simulate": {"mode": "kmc", "cycles_max": 100, "record_every": 1, "rate_refresh": "per-cycle",
                 "width_rtol": 0.0, "n_seeds": 1, "collisions_concurrent": True,
                 "dark_ground": False, "compare_ideal": False, "stop_fraction": 0.0},
    "thermalize": {"duration": 1.0, "n_traj": 100},
    "thermo": {"N": [100.0, 1000.0, 10000.0], "n_grid": 12, "dark_ground": False,
               "T0_frac": 0.5, "horizon": 1e5, "flow_N": 1000.0, "energy": "continuum"},
    "fc": {"kappa": 2.0, "n_max": 20},
    "bdg": {"N0": 100.0, "a": [0.0005, 0.005, 0.05], "n_basis": 40, "n_modes": 8,
            "gamma_L": 0.0, "s": -4.0, "rabi": 0.03, "gamma": 0.04},
    "estimate": {"species": "Mg", "mass_u": 24.305, "lambda_L": 6e-7, "a_sc": 5e-9,
                 "cap_density": 5e20, "p_tot": 0.1, "gamma_over_omega": 0.25,
                 "etas": [2.0, 4.0, 6.0, 8.0]},
}

PULSE_DEFAULTS = {"s": 0.0, "rabi": 0.03, "gamma": 0.04, "duration": 0.0,
                  "amplitudes": [0.0, 0.0, 1.0]}

_CHOICES = {
    ("run", "format"): ("csv", "json"),
    ("trap", "dimension"): (1, 3),
    ("emission", "kind"): ("isotropic", "dipole"),
    ("initial", "kind"): ("thermal", "ground", "bed"),
    ("simulate", "mode"): ("kmc", "meanfield"),
    ("simulate", "rate_refresh"): ("per-pulse", "per-cycle"),
    ("thermo", "energy"): ("continuum", "shell"),
}
_POSITIVE = {("trap", "eta"), ("trap", "n_shells"), ("trap", "omega"), ("simulate", "cycles_max"),
             ("simulate", "record_every"), ("simulate", "n_seeds"), ("thermalize", "n_traj"),
             ("bdg", "N0"), ("bdg", "n_basis"), ("bdg", "n_modes"), ("estimate", "cap_density"),
             ("estimate", "mass_u"), ("estimate", "lambda_L"), ("fc", "n_max")}
_NONNEG = {("collisions", "strength"), ("initial", "N"), ("initial", "relax_time"),
           ("simulate", "width_rtol"), ("thermalize", "duration"), ("bdg", "gamma_L"),
           ("estimate", "a_sc"), ("run", "threads"), ("run", "seed")}


def _line_of(text, key):
    """Line of ``key`` (a dotted path like trap.eta or pulse[1].s) in ``text``."""
    if text is None:
        return None
    *secs, leaf = key.split(".")
    start = 0
    for sec in secs:
        m = re.fullmatch(r"(\w+)\[(\d+)\]", sec)
        if m:
            hits = list(re.finditer(rf"^[ \t]*\[\[[ \t]*{m[1]}[ \t]*\]\]", text[start:], re.M))
            if len(hits) <= int(m[2]):
                return None
            start += hits[int(m[2])].end()
        else:
            h = re.search(rf"^[ \t]*\[[ \t]*{re.escape(sec)}[ \t]*\]", text[start:], re.M)
            if h is None:
                return None
            start += h.end()
    m = re.search(rf"^[ \t]*{re.escape(leaf)}[ \t]*=", text[start:], re.M)
    return text.count("\n", 0, start + m.start()) + 1 if m else None


def _dup_line(text, key):
    if not key:
        return None
    hits = [m.start() for m in re.finditer(rf"^[ \t]*{re.escape(key)}[ \t]*=", text, re.M)]
    return text.count("\n", 0, hits[1]) + 1 if len(hits) > 1 else None


def _coerce(value, default, path, text):
    key = path
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path, _line_of(text, key))
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path, _line_of(text, key))
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path, _line_of(text, key))
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path, _line_of(text, key))
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", path, _line_of(text, key))
        return [_coerce(v, default[0] if default else 0.0, path, text) for v in value]
    raise ConfigError(f"unsupported value {value!r}", path)


def _merge(user, defaults, prefix, text):
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        path = f"{prefix}.{k}" if prefix else k
        if k not in defaults:
            raise ConfigError("unknown key", path, _line_of(text, path))
        if isinstance(defaults[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a table", path, _line_of(text, path))
            out[k] = _merge(v, defaults[k], path, text)
        else:
            out[k] = _coerce(v, defaults[k], path, text)
    return out


def _check(cfg, text):
    for (sec, key), ok in _CHOICES.items():
        if cfg[sec][key] not in ok:
            raise ConfigError(f"must be one of {list(ok)}, got {cfg[sec][key]!r}",
                              f"{sec}.{key}", _line_of(text, f"{sec}.{key}"))
    for sec, key in _POSITIVE:
        if not cfg[sec][key] > 0:
            raise ConfigError(f"must be positive, got {cfg[sec][key]!r}", f"{sec}.{key}",
                              _line_of(text, f"{sec}.{key}"))
    for sec, key in _NONNEG:
        if cfg[sec][key] < 0:
            raise ConfigError(f"must be non-negative, got {cfg[sec][key]!r}", f"{sec}.{key}",
                              _line_of(text, f"{sec}.{key}"))
    for sec, key in (("thermo", "N"), ("estimate", "etas"), ("bdg", "a")):
        vals = cfg[sec][key]
        bad = [v for v in vals if (v < 0 if key == "a" else v <= 0)]
        if not vals or bad:
            raise ConfigError(f"needs a non-empty list of {'non-negative' if key == 'a' else 'positive'}"
                              f" values, got {vals!r}", f"{sec}.{key}", _line_of(text, f"{sec}.{key}"))
    if len(cfg["emission"]["axis"]) != 3:
        raise ConfigError("axis needs three components", "emission.axis")
    for i, p in enumerate(cfg["pulse"]):
        if len(p["amplitudes"]) != 3:
            raise ConfigError("amplitudes needs three components (x, y, z)", f"pulse[{i}].amplitudes",
                              _line_of(text, f"pulse[{i}].amplitudes"))
        if not (p["gamma"] > 0 and p["rabi"] >= 0 and p["duration"] >= 0):
            raise ConfigError("need gamma > 0, rabi >= 0, duration >= 0", f"pulse[{i}]")
        if p["rabi"] == 0 and p["duration"] == 0:
            raise ConfigError("a pulse with rabi = 0 needs an explicit duration", f"pulse[{i}]")


def loads_config(text: str | None = None, data: dict | None = None) -> dict:
    """Validate TOML text (or an already parsed mapping) against the defaults."""
    if data is None:
        try:
            data = tomlkit.parse(text or "").unwrap()
        except ParseError as e:
            raise ConfigError(f"TOML syntax: {e}", line=getattr(e, "line", None)) from None
        except KeyAlreadyPresent as e:
            key = re.search(r'"(.+?)"', str(e))
            key = key.group(1) if key else None
            raise ConfigError(f"duplicate key: {e}", key, _dup_line(text, key)) from None
    data = dict(data)
    pulses = data.pop("pulse", [])
    if not isinstance(pulses, list):
        raise ConfigError("pulse must be an array of tables ([[pulse]])", "pulse",
                          _line_of(text, "pulse"))
    cfg = _merge(data, DEFAULTS, "", text)
    cfg["pulse"] = [_merge(p, PULSE_DEFAULTS, f"pulse[{i}]", text) for i, p in enumerate(pulses)]
    _check(cfg, text)
    return cfg


def parse_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return loads_config(text)


def dumps_config(cfg: dict) -> str:
    doc = tomlkit.document()
    for k, v in cfg.items():
        if k == "pulse":
            aot = tomlkit.aot()
            for p in v:
                aot.append(tomlkit.item(p))
            doc.add("pulse", aot)
        else:
            doc.add(k, tomlkit.item(v))
    return tomlkit.dumps(doc)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def shipped_config(name: str) -> Path:
    if name not in SHIPPED:
        raise ConfigError(f"no shipped config {name!r}; choose from {list(SHIPPED)}")
    return Path(__file__).with_name("configs") / f"{name}.toml"
