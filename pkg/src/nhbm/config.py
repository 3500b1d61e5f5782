"""Run configuration files (YAML key-value documents).

Top-level keys::

    n: 32                     # matrix size
    t_end: 1.0
    dt: 0.01
    seed: 1
    n_traj: 100
    m0: null                  # "null", "two_sources:<c>", or a matrix file path
    gap_tol: 1.0e-10
    decimate: 1
    allow_degenerate_start: true   # default true for builtin starts

Optional sections ``verify``, ``field``, ``pde`` and ``compare`` hold
per-command settings (see README).
"""
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .linalg import DEFAULT_GAP_TOL, read_matrix
from .process import ProcessConfig, builtin_matrix


class ConfigError(ValueError):
    """Unreadable or schema-invalid configuration (CLI exit code 2)."""


def _num(section, key, default, kind=float):
    value = section.get(key, default)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def parse_complex(value):
    """Accept a number, ``[re, im]`` pair, or a string like ``"1+2j"``."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"complex pair must have two entries: {value!r}")
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(str(value).replace(" ", "")) if isinstance(value, str) else complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"not a complex number: {value!r}") from None


@dataclass
class RunConfig:
    raw: dict
    base_dir: str

    def section(self, name):
        sec = self.raw.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        return sec

    @property
    def n(self):
        n = _num(self.raw, "n", None, int)
        if n < 1:
            raise ConfigError("n must be positive")
        return n

    @property
    def m0_spec(self):
        value = self.raw.get("m0", "null")
        return "null" if value is None else str(value)

    @property
    def m0_is_builtin(self):
        return builtin_matrix(self.m0_spec, 2) is not None

    def m0(self):
        spec = self.m0_spec
        try:
            m = builtin_matrix(spec, self.n)
        except ValueError as exc:
            raise ConfigError(f"m0: {exc}") from None
        if m is not None:
            return m
        path = spec if os.path.isabs(spec) else os.path.join(self.base_dir, spec)
        try:
            m = read_matrix(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"m0: cannot read matrix file {path!r}: {exc}") from None
        if m.shape[0] != self.n:
            raise ConfigError(f"m0 file has n={m.shape[0]}, config says n={self.n}")
        return m

    def seed(self, override=None):
        seed = override if override is not None else self.raw.get("seed", 0)
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        return seed

    def process(self, seed_override=None):
        allow = self.raw.get("allow_degenerate_start", self.m0_is_builtin)
        try:
            return ProcessConfig(
                n=self.n,
                t_end=_num(self.raw, "t_end", None),
                dt=_num(self.raw, "dt", None),
                m0=self.m0(),
                seed=self.seed(seed_override),
                n_traj=_num(self.raw, "n_traj", 1, int),
                gap_tol=_num(self.raw, "gap_tol", DEFAULT_GAP_TOL),
                decimate=_num(self.raw, "decimate", 1, int),
                store_matrices=bool(self.raw.get("store_matrices", False)),
                allow_degenerate_start=bool(allow),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path):
    """Read and minimally validate a configuration file.

    Raises
    ------
    ConfigError
        If the file is missing, unparsable, or lacks ``n``.
    """
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path!r}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "n" not in raw:
        raise ConfigError("config needs key 'n'")
    cfg = RunConfig(raw, os.path.dirname(os.path.abspath(path)))
    cfg.n
    return cfg


def echo(cfg):
    """JSON-safe copy of the raw config for manifests."""
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.generic,)):
            return v.item()
        return v
    return clean(cfg.raw)
