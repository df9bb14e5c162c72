"""Run configuration: TOML loading, schema validation, canonical hashing.

The schema is a nested table of (type, default) pairs; unknown keys are
rejected anywhere in the tree so typos fail fast instead of silently using
defaults.  The config hash is the sha256 of the canonical JSON form of the
fully defaulted config and is embedded in every artifact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_NUMBER = (int, float)

# leaf spec: (expected type(s), default); table spec: nested dict
_SCHEMA = {
    "beta": (_NUMBER, 1.5),
    "potential": (list, [0.5]),
    "out_dir": (str, "out"),
    "grid": {
        "w_max": (_NUMBER, None),  # default derived from beta
        "m": (int, 2000),
    },
    "solver": {
        "damping": (_NUMBER, 0.5),
        "tol": (_NUMBER, 1e-10),
        "max_iter": (int, 10_000),
    },
    "ghd": {
        "n_max": (int, 3),
        "pairs": (list, [[0, 0], [0, 1], [1, 1]]),
    },
    "md": {
        "n_pairs": (int, 256),
        "trials": (int, 1000),
        "times": (list, [100.0, 200.0]),
        "tol": (_NUMBER, 1e-9),
        "seed": (int, 0),
        "fields": (list, [[0, 0]]),
        "convention": (str, "paper"),
        "batch": (int, 200),
        "fft": (bool, True),
    },
    "ensemble_check": {
        "n_pairs": (int, 200),
        "samples": (int, 2000),
        "bins": (int, 60),
        "seed": (int, 0),
    },
    "compare": {
        "xi_min": (_NUMBER, -4.0),
        "window": (_NUMBER, 0.3),
    },
}


def _validate(raw: dict, schema: dict, path: str = "") -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {path or '<root>'} must be a table")
    out = {}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}{key}")
    for key, spec in schema.items():
        here = f"{path}{key}"
        if isinstance(spec, dict):
            out[key] = _validate(raw.get(key, {}), spec, here + ".")
            continue
        types, default = spec
        if key in raw:
            value = raw[key]
            if isinstance(value, bool) and types is not bool:
                raise ConfigError(f"config key {here} has wrong type")
            if not isinstance(value, types):
                raise ConfigError(f"config key {here} has wrong type")
        elif default is None and key != "w_max":
            raise ConfigError(f"missing config key: {here}")
        else:
            value = default
        out[key] = value
    return out


class RunConfig:
    """Validated, fully defaulted configuration with a stable hash."""

    def __init__(self, data: dict):
        cfg = _validate(data, _SCHEMA)
        if cfg["beta"] <= 0:
            raise ConfigError("beta must be positive")
        if not cfg["potential"] or not all(isinstance(c, _NUMBER) for c in cfg["potential"]):
            raise ConfigError("potential must be a nonempty list of numbers")
        if cfg["grid"]["w_max"] is None:
            cfg["grid"]["w_max"] = max(6.0, 4.0 * float(cfg["beta"]) ** 0.5)
        for name in ("pairs", "fields"):
            section = cfg["ghd"] if name == "pairs" else cfg["md"]
            for p in section[name]:
                if (not isinstance(p, list) or len(p) != 2
                        or not all(isinstance(k, int) and k >= 0 for k in p)):
                    raise ConfigError(f"{name} entries must be pairs of nonnegative ints")
        if cfg["md"]["convention"] not in ("paper", "continuity"):
            raise ConfigError("md.convention must be 'paper' or 'continuity'")
        if cfg["md"]["batch"] < 1:
            raise ConfigError("md.batch must be >= 1")
        self.data = cfg

    def __getitem__(self, key):
        return self.data[key]

    def with_seed(self, seed: int) -> "RunConfig":
        clone = json.loads(json.dumps(self.data))
        clone["md"]["seed"] = int(seed)
        clone["ensemble_check"]["seed"] = int(seed)
        return RunConfig(clone)

    def with_out_dir(self, out_dir: str) -> "RunConfig":
        clone = json.loads(json.dumps(self.data))
        clone["out_dir"] = str(out_dir)
        return RunConfig(clone)

    @property
    def out_dir(self) -> Path:
        return Path(self.data["out_dir"])

    def canonical(self) -> str:
        # out_dir is plumbing, not physics: relocating output must not
        # invalidate checkpoints or cross-artifact hash checks
        doc = {k: v for k, v in self.data.items() if k != "out_dir"}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return RunConfig(raw)
