"""Experiment configuration shared by the CLI and the scripts.

Precedence, lowest first: dataclass defaults, the JSON config file, CLI flags.
Unknown keys are rejected so that a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

from .constellation import GaussianInput, from_name
from .errors import ValidationError
from .fading import FadingSpec
from .short_term import SCHEMES

LONG_TERM_SCHEMES = ("lt-opt", "lt-tw", "lt-ref")
ALL_SCHEMES = SCHEMES + LONG_TERM_SCHEMES


@dataclass(frozen=True)
class SchemeConfig:
    name: str
    beta: float | None = None
    rho0: float = 3.0
    use_fit: bool = False

    def __post_init__(self):
        if self.name not in ALL_SCHEMES:
            raise ValidationError(f"unknown scheme {self.name!r}; choose from {ALL_SCHEMES}")
        if self.name in ("tw", "ref", "lt-tw", "lt-ref"):
            if self.beta is None:
                raise ValidationError(f"scheme {self.name} needs beta")
            if not self.beta > 0:
                raise ValidationError(f"beta must be > 0 for {self.name}")
        if not self.rho0 > 0:
            raise ValidationError("rho0 must be > 0")
        if self.use_fit and self.name not in ("lt-tw", "lt-ref"):
            raise ValidationError("use_fit applies to lt-tw and lt-ref only")

    @property
    def key(self) -> str:
        """Output file stem, unique per parameter set."""
        s = self.name
        if self.beta is not None:
            s += f"_b{self.beta:g}"
        if self.use_fit:
            s += "_fit"
        return s


def _scheme(obj) -> SchemeConfig:
    if isinstance(obj, SchemeConfig):
        return obj
    if isinstance(obj, str):
        return SchemeConfig(obj)
    if not isinstance(obj, dict):
        raise ValidationError(f"bad scheme entry {obj!r}")
    extra = set(obj) - {f.name for f in dataclasses.fields(SchemeConfig)}
    if extra:
        raise ValidationError(f"unknown scheme fields {sorted(extra)}")
    return SchemeConfig(**obj)


def parse_grid(spec) -> list[float]:
    """A list of dB values, or ``"start:stop:step"`` (stop included when hit)."""
    if isinstance(spec, str):
        try:
            a, b, s = (float(x) for x in spec.split(":"))
        except ValueError as e:
            raise ValidationError(f"bad grid {spec!r}; expected start:stop:step") from e
        if s <= 0 or b < a:
            raise ValidationError(f"bad grid {spec!r}")
        k = int(math.floor((b - a) / s + 1e-9))
        return [round(a + i * s, 10) for i in range(k + 1)]
    return [float(x) for x in spec]


@dataclass(frozen=True)
class ExperimentConfig:
    constellation: str = "qpsk"
    m: float = 1.0
    B: int = 4
    R: float = 1.0
    schemes: tuple = ("opt",)
    P_dB: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    n: int = 100_000
    n_calibration: int | None = None
    seed: int = 1
    output: str = "out"
    # long-term calibration budget and beta search
    P_budget_dB: float | None = None
    beta_grid: tuple = ()
    reference_P_dB: float | None = None
    # "dual": count opt/tw/ref outages from per-draw minimum costs; "direct": allocate per point
    sweep_method: str = "dual"
    quadrature_order: int = 32

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(_scheme(s) for s in self.schemes))
        object.__setattr__(self, "P_dB", tuple(parse_grid(self.P_dB)))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        if not self.schemes:
            raise ValidationError("scheme list is empty")
        if len({s.key for s in self.schemes}) != len(self.schemes):
            raise ValidationError("duplicate scheme entries")
        self.input  # validates the name
        FadingSpec(self.m, self.B)
        if not self.R > 0 or math.isinf(self.R):
            raise ValidationError("R must be finite and > 0")
        if any(b <= a for a, b in zip(self.P_dB, self.P_dB[1:])):
            raise ValidationError("P_dB grid must be strictly increasing")
        if int(self.n) != self.n or self.n < 1000:
            raise ValidationError("n must be an integer >= 1000")
        if self.n_calibration is not None and self.n_calibration < 1000:
            raise ValidationError("n_calibration must be >= 1000")
        if self.sweep_method not in ("dual", "direct"):
            raise ValidationError("sweep_method must be 'dual' or 'direct'")
        if any(not b > 0 for b in self.beta_grid):
            raise ValidationError("beta grid entries must be > 0")
        if self.quadrature_order < 4:
            raise ValidationError("quadrature_order must be >= 4")
        if isinstance(self.input, GaussianInput):
            bad = [s.name for s in self.schemes if s.name in ("ref", "lt-ref") or s.use_fit]
            if bad:
                raise ValidationError(f"schemes {bad} need a discrete constellation")

    @property
    def input(self):
        return from_name(self.constellation)

    @property
    def spec(self) -> FadingSpec:
        return FadingSpec(self.m, self.B)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["schemes"] = [dataclasses.asdict(s) for s in self.schemes]
        d["P_dB"] = list(self.P_dB)
        d["beta_grid"] = list(self.beta_grid)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValidationError(f"unknown config fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        d = {}
        if path is not None:
            try:
                with open(path) as f:
                    d = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ValidationError(f"cannot read config {path}: {e}") from e
            if not isinstance(d, dict):
                raise ValidationError("config must be a JSON object")
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d)
