"""Experiment configuration: strict schema, basis construction, stable hashing."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .averaging import Region, config_hash, parse_number
from .errors import ConfigError
from .models import (EigenBasis, aspect_torus, circle_eigenbasis, flat_torus, restricted_subbasis,
                     sphere2_eigenbasis, torus_eigenbasis)
from .zeros import ZeroOptions

EXPERIMENTS = ("zeros", "nodal", "local", "degenerate", "crofton")

MODEL_KEYS = {"kind", "periods", "a"}
BASIS_KEYS = {"l", "frequency", "indices", "merge"}
NODAL_KEYS = {"mesh_start", "refine_limit", "rel_tol"}
CROFTON_KEYS = {"mesh", "resolution", "allow_covering"}
OUTPUT_KEYS = {"report", "csv"}
ZERO_KEYS = set(ZeroOptions.__dataclass_fields__)
TOP_KEYS = {"experiment", "model", "basis", "trials", "seed", "threads", "k", "region",
            "zeros", "nodal", "crofton", "output"}
# keys that do not change the numbers in a report
UNHASHED = {"threads", "output"}

MODEL_ALIASES = {"circle": "circle", "sphere": "sphere2", "sphere2": "sphere2", "s2": "sphere2",
                 "torus": "torus", "flattorus2": "torus"}


def _check_keys(section: str, d, allowed: set):
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


@dataclass
class ExperimentConfig:
    experiment: str = "zeros"
    model: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)
    trials: int = 1000
    seed: int = 0
    threads: int = 1
    k: int | None = None
    region: str | None = None
    zeros: dict = field(default_factory=dict)
    nodal: dict = field(default_factory=dict)
    crofton: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        _check_keys("config", d, TOP_KEYS)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data or {})

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        _check_keys("model", self.model, MODEL_KEYS)
        _check_keys("basis", self.basis, BASIS_KEYS)
        _check_keys("zeros", self.zeros, ZERO_KEYS)
        _check_keys("nodal", self.nodal, NODAL_KEYS)
        _check_keys("crofton", self.crofton, CROFTON_KEYS)
        _check_keys("output", self.output, OUTPUT_KEYS)
        for name in ("trials", "seed", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.experiment == "local" and not self.region:
            raise ConfigError("local averages need a region")
        if self.experiment != "crofton" or "mesh" not in self.crofton:
            if not self.model:
                raise ConfigError("model.kind is required")
            self.model_kind()

    def model_kind(self) -> str:
        kind = str(self.model.get("kind", "")).lower()
        if kind not in MODEL_ALIASES:
            raise ConfigError(f"unknown model.kind {self.model.get('kind')!r}")
        return MODEL_ALIASES[kind]

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash({k: v for k, v in self.to_dict().items() if k not in UNHASHED})

    def zero_options(self) -> ZeroOptions:
        return ZeroOptions(**self.zeros)

    def region_obj(self) -> Region | None:
        if self.region is None:
            return None
        if isinstance(self.region, dict):
            r = dict(self.region)
            kind = r.pop("kind", None)
            if kind == "cap":
                return Region.cap(r["axis"], r["radius"])
            if kind == "rect":
                return Region.rectangle(*r["bounds"])
            raise ConfigError(f"bad region {self.region!r}")
        return Region.parse(str(self.region))

    def build_basis(self) -> EigenBasis:
        return build_basis(self.model, self.basis, self.model_kind())


def build_basis(model: dict, basis: dict, kind: str | None = None) -> EigenBasis:
    kind = kind or MODEL_ALIASES.get(str(model.get("kind", "")).lower())
    try:
        if kind == "circle":
            b = circle_eigenbasis(int(basis.get("l", 1)))
        elif kind == "sphere2":
            b = sphere2_eigenbasis(int(basis.get("l", 1)))
        elif kind == "torus":
            if "periods" in model and "a" in model:
                raise ConfigError("give model.periods or model.a, not both")
            if "periods" in model:
                m = flat_torus([parse_number(p) for p in model["periods"]])
            else:
                m = aspect_torus(parse_number(model.get("a", 1.0)))
            freq = basis.get("frequency", [1, 1])
            if len(freq) != 2:
                raise ConfigError("basis.frequency needs two integers")
            b = torus_eigenbasis(m, [int(f) for f in freq], merge=bool(basis.get("merge", False)))
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if basis.get("indices") is not None:
        b = restricted_subbasis(b, [int(i) for i in basis["indices"]])
    return b


def dump(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
