"""Run configuration: a versioned JSON document with defaults and validation.

Schema (version 1); every key is optional::

    {
      "schema_version": 1,
      "seed": 0,                       # RNG seed for start vectors and probes
      "model": {
        "name": "burgers",             # burgers | heat | scalar_ode |
                                       # gross_pitaevskii | cahn_hilliard
        "params": {}                   # keyword arguments of the model factory
      },
      "gst": {
        "nev": 3,                      # singular triplets requested
        "ncv": null,                   # Lanczos subspace size (default max(2 nev + 2, 12))
        "tol": 1e-8,                   # relative residual tolerance
        "max_restarts": 200
      },
      "verify": {
        "h0": null,                    # largest Taylor step (null: model default)
        "n_levels": 5,                 # number of halvings
        "modes": ["tlm", "adjoint"],
        "dot_pairs": 100,              # random pairs for the dot-product test
        "oracle_probes": 100,          # random probes for the dense oracle
        "oracle_eps": 1e-7,
        "oracle_max_dofs": 200         # skip the dense oracle above this size
      },
      "growth": {
        "vector": null,                # CSV written by `gst`; null = leading triplet
        "n_steps": null,               # default: 4 x the model's n_steps
        "amplitude": null              # default: 1e-7 ||m0|| / ||v||
      },
      "bench": {"repeats": 3}
    }

Times are in the model's nondimensional units.
"""

import copy
import json
from pathlib import Path

from .exceptions import ConfigError

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "model": {"name": "burgers", "params": {}},
    "gst": {"nev": 3, "ncv": None, "tol": 1e-8, "max_restarts": 200},
    "verify": {
        "h0": None, "n_levels": 5, "modes": ["tlm", "adjoint"], "dot_pairs": 100,
        "oracle_probes": 100, "oracle_eps": 1e-7, "oracle_max_dofs": 200,
    },
    "growth": {"vector": None, "n_steps": None, "amplitude": None},
    "bench": {"repeats": 3},
}

# key path -> (accepted types, predicate, description)
_INT = (int,)
_NUM = (int, float)
_CHECKS = {
    "schema_version": (_INT, lambda v: v == SCHEMA_VERSION, f"must be {SCHEMA_VERSION}"),
    "seed": (_INT, lambda v: v >= 0, "must be a non-negative integer"),
    "model.name": ((str,), lambda v: True, "must be a string"),
    "model.params": ((dict,), lambda v: True, "must be an object"),
    "gst.nev": (_INT, lambda v: v >= 1, "must be a positive integer"),
    "gst.ncv": (_INT + (type(None),), lambda v: v is None or v >= 2, "must be null or an integer >= 2"),
    "gst.tol": (_NUM, lambda v: v > 0, "must be positive"),
    "gst.max_restarts": (_INT, lambda v: v >= 0, "must be a non-negative integer"),
    "verify.h0": (_NUM + (type(None),), lambda v: v is None or v > 0, "must be null or positive"),
    "verify.n_levels": (_INT, lambda v: v >= 2, "must be an integer >= 2"),
    "verify.modes": ((list,), lambda v: len(v) > 0 and set(v) <= {"tlm", "adjoint"},
                     "must be a non-empty list of 'tlm' and 'adjoint'"),
    "verify.dot_pairs": (_INT, lambda v: v >= 1, "must be a positive integer"),
    "verify.oracle_probes": (_INT, lambda v: v >= 1, "must be a positive integer"),
    "verify.oracle_eps": (_NUM, lambda v: v > 0, "must be positive"),
    "verify.oracle_max_dofs": (_INT, lambda v: v >= 1, "must be a positive integer"),
    "growth.vector": ((str, type(None)), lambda v: True, "must be null or a path"),
    "growth.n_steps": (_INT + (type(None),), lambda v: v is None or v >= 1,
                       "must be null or a positive integer"),
    "growth.amplitude": (_NUM + (type(None),), lambda v: v is None or v > 0,
                         "must be null or positive"),
    "bench.repeats": (_INT, lambda v: v >= 1, "must be a positive integer"),
}


def _merge(base, override, prefix=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError("unknown key", key=path)
        if isinstance(base[key], dict) and path != "model.params":
            if not isinstance(value, dict):
                raise ConfigError("must be an object", key=path)
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _lookup(config, path):
    node = config
    for part in path.split("."):
        node = node[part]
    return node


def validate(config):
    """Check types and ranges of every known key; raise ConfigError naming the key."""
    for path, (types, ok, what) in _CHECKS.items():
        value = _lookup(config, path)
        if isinstance(value, bool) or not isinstance(value, types) or not ok(value):
            raise ConfigError(f"{what}, got {value!r}", key=path)
    return config


def resolve(overrides=None):
    """Defaults merged with ``overrides`` and validated."""
    if overrides is None:
        overrides = {}
    if not isinstance(overrides, dict):
        raise ConfigError("the configuration must be a JSON object", key="<root>")
    return validate(_merge(DEFAULTS, overrides))


def load(path):
    """Read and resolve a JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", key="--config") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", key="<root>") from None
    return resolve(data)
