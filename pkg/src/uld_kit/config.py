"""Flat ``key = value`` experiment configs.

Grammar (one entry per line)::

    # comment
    key = value

Values are Python literals (``1``, ``2.5e-3``, ``[0.1, 0.2]``, ``True``,
``"text"``); ``true``/``false``/``none`` are accepted in lower case and any
other unparsable value is kept as a bare string.  Keys starting with
``potential.`` form the potential spec.  Keys are unique and ``#``
always starts a comment.
"""

from __future__ import annotations

import ast
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import ContractViolation

EXPERIMENTS = (
    "local-error",
    "kl-scaling",
    "dimension-sweep",
    "concentration",
    "chain-run",
    "midpoint-selftest",
    "noise-selftest",
)
_LOWER = {"true": True, "false": False, "none": None, "null": None}


def parse_value(text):
    text = text.strip()
    if text.lower() in _LOWER:
        return _LOWER[text.lower()]
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ContractViolation(f"line {lineno}: empty key")
        if key in out:
            raise ContractViolation(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    potential: dict = field(default_factory=dict)
    scheme: str = "ULMC"
    gamma: Optional[float] = None
    h: Optional[float] = None
    h_grid: Optional[list] = None
    n_steps: Optional[int] = None
    epsilon: Optional[float] = None
    n_reps: Optional[int] = None
    out: Optional[str] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ContractViolation(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be an integer in [0, 2^64)")

    @classmethod
    def from_mapping(cls, mapping):
        mapping = dict(mapping)
        if "seed" not in mapping:
            raise ContractViolation("config must set 'seed' (no entropy is taken from the environment)")
        if "experiment" not in mapping:
            raise ContractViolation("config must set 'experiment'")
        potential = {k.split(".", 1)[1]: mapping.pop(k) for k in list(mapping) if k.startswith("potential.")}
        known = {k: mapping.pop(k) for k in list(mapping) if k in cls.__dataclass_fields__ and k != "options"}
        return cls(potential=potential, options=mapping, **known)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(parse_config_text(fh.read()))

    def opt(self, key, default=None):
        return self.options.get(key, default)

    def as_dict(self):
        return asdict(self)

    def canonical_json(self):
        d = self.as_dict()
        d.pop("out", None)  # output location does not influence results
        return json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
