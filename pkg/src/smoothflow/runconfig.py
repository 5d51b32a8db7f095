"""Run configuration: one TOML file, validated with unknown keys rejected.

Every section is optional; omitted values take the defaults below, which are
also listed by ``smoothflow --help``.
"""

from __future__ import annotations

import hashlib
import json
import sys
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SetConfig(_Strict):
    kind: Literal["simplex", "box", "lpball", "vertices", "moment"] = "simplex"
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    p: Optional[float] = None
    vertices: Optional[List[List[float]]] = None
    A: Optional[List[List[float]]] = None
    b: Optional[List[float]] = None


class PenaltyConfig(_Strict):
    kind: Literal["kl", "quadratic", "kl-pushforward"] = "kl"
    prior: Optional[List[float]] = None
    center: Optional[List[float]] = None


class ProblemConfig(_Strict):
    """Problem for run-inertial / run-gradflow / reference-solve.

    ``kind = "moo"`` and ``kind = "dro"`` select the built-in benchmarks;
    ``kind = "quadratic"`` builds g_i(x) = 0.5 (x - c_i)^T M_i (x - c_i) + e_i
    from ``diagonals`` or full ``matrices``.
    """

    kind: Literal["moo", "dro", "quadratic"] = "moo"
    matrices: Optional[List[List[List[float]]]] = None
    diagonals: Optional[List[List[float]]] = None
    centers: Optional[List[List[float]]] = None
    offsets: Optional[List[float]] = None
    set: SetConfig = SetConfig()
    penalty: PenaltyConfig = PenaltyConfig()

    @model_validator(mode="after")
    def _quadratic_data(self):
        if self.kind == "quadratic":
            if self.centers is None or (self.matrices is None) == (self.diagonals is None):
                raise ValueError("quadratic problems need centers and exactly one of matrices / diagonals")
        return self


class MooConfig(_Strict):
    alpha: float = Field(3.1, gt=0)
    c: float = Field(1.0, gt=0)
    r_values: List[float] = [2.1, 3.0, 5.0]
    t0: float = Field(1.0, gt=0)
    T: float = 50.0
    x0: List[float] = [0.0, 0.0]
    v0: List[float] = [0.0, 0.0]
    samples: int = Field(400, ge=10)
    penalty: Literal["entropic", "quadratic"] = "entropic"


class DroConfig(_Strict):
    alpha: float = Field(3.1, gt=0)
    c: float = Field(1.0, gt=0)
    r_values: List[float] = [2.1, 3.0, 5.0]
    t0: float = Field(1.0, gt=0)
    T: float = 20.0
    n: int = Field(5, ge=1)
    m: int = 6
    samples: int = Field(400, ge=10)


class ProfileConfig(_Strict):
    mus: List[float] = [1.0, 0.5, 0.1]
    x_min: float = -2.0
    x_max: float = 2.0
    box_x_min: float = -1.0
    box_x_max: float = 3.0
    points: int = Field(401, ge=3)

    @field_validator("mus")
    @classmethod
    def _positive(cls, v):
        if not v or any(m <= 0 for m in v):
            raise ValueError("mus must be a non-empty list of positive numbers")
        return v


class RunConfig(_Strict):
    problem: ProblemConfig = ProblemConfig()
    alpha: float = Field(3.1, gt=0)
    c: float = Field(1.0, gt=0)
    r: float = Field(3.0, gt=0)
    t0: float = Field(1.0, gt=0)
    T: float = 50.0
    x0: Optional[List[float]] = None
    v0: Optional[List[float]] = None
    samples: int = Field(400, ge=10)


class ScheduleConfig(_Strict):
    c: float = Field(1.0, gt=0)
    r: float = Field(2.1, gt=0)
    t0: float = Field(1.0, gt=0)
    require: Literal["inertial", "gradflow", "none"] = "inertial"


class Config(_Strict):
    seed: int = Field(2, ge=0, lt=2 ** 64)
    out: Optional[str] = None
    moo: MooConfig = MooConfig()
    dro: DroConfig = DroConfig()
    profile: ProfileConfig = ProfileConfig()
    run: RunConfig = RunConfig()
    schedule: ScheduleConfig = ScheduleConfig()


class ConfigError(ValueError):
    pass


def load_config(path=None, **overrides):
    """Parse and validate a TOML config; ``overrides`` replace top-level keys."""
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Config.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(section):
    """Stable hash of a config section, used to key reference caches."""
    payload = json.dumps(section.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
