"""Experiment configuration: pydantic models, file loading, overrides and seeds."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import tomli
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .drifts import DRIFT_LIBRARY

# diagnostics runnable by the experiment runner, with the sections they need
DIAGNOSTIC_NEEDS = {
    "spectral_identities": (),
    "helmholtz_identity": (),
    "skew_identity": (),
    "besov_identities": (),
    "kbe_oracles": (),
    "resolvent_sweep": (),
    "structural_conditions": (),
    "structural_drift": (),
    "cutoff": (),
    "mollified_convergence": (),
    "determinism": (),
    "ito_trick": ("sim",),
    "incompressibility": ("sim",),
    "energy_estimate": ("sim",),
    "martingale": ("sim",),
    "novikov": ("sim",),
    "variance_growth": ("sim",),
    "duality": ("sim", "kbe"),
    "apriori": ("kbe",),
    "energy_balance": ("kbe",),
    "resolvent": ("kbe",),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModeTerm(_Strict):
    """``amp * cos(2 pi k . x + phase)``."""

    k: list[int]
    amp: float = 1.0
    phase: float = 0.0


class GridConfig(_Strict):
    dim: int = Field(2, ge=1, le=3)
    N: int = Field(32, ge=4)

    @field_validator("N")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("N must be even")
        return v


class DriftConfig(_Strict):
    name: str = "zero"
    params: dict = Field(default_factory=dict)
    mollify_n: float | None | Literal["inherit"] = "inherit"

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in DRIFT_LIBRARY:
            raise ValueError(f"unknown drift {v!r}; choose from {', '.join(DRIFT_LIBRARY)}")
        return v


class InitConfig(_Strict):
    law: Literal["uniform", "density"] = "uniform"
    terms: list[ModeTerm] = Field(default_factory=list)  # density = 1 + sum of terms


class SimSection(_Strict):
    dt: float | list[float] = 1e-3
    T: float = 0.5
    n_paths: int = Field(10_000, ge=1)
    save_stride: int | None = Field(None, ge=1)
    save_every: float | None = Field(None, gt=0)  # save interval in time units (overrides stride)
    eval_mode: Literal["grid_interp", "direct_sum"] = "grid_interp"
    init: InitConfig = Field(default_factory=InitConfig)
    export: Literal["none", "binary", "csv", "both"] = "binary"

    @field_validator("dt")
    @classmethod
    def _nonempty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("dt sweep list is empty")
        return v

    @property
    def dt_list(self) -> list[float]:
        return list(self.dt) if isinstance(self.dt, list) else [self.dt]


class KbeSection(_Strict):
    dt: float = 1e-3
    T: float = 0.5
    scheme: Literal["ifrk4", "lawson_euler"] = "ifrk4"
    form: Literal["divergence_out", "gradient_out"] = "divergence_out"
    terminal: list[ModeTerm] = Field(default_factory=lambda: [ModeTerm(k=[1])])
    lambdas: list[float] = Field(default_factory=list)
    tol: float = 1e-10
    sigma_min: bool = False


class DiagnosticConfig(_Strict):
    name: str
    params: dict = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in DIAGNOSTIC_NEEDS:
            raise ValueError(f"unknown diagnostic {v!r}")
        return v


class ExperimentConfig(_Strict):
    experiment: str
    grid: GridConfig = Field(default_factory=GridConfig)
    drift: DriftConfig | list[DriftConfig] = Field(default_factory=DriftConfig)
    mollify_n: float | None | list[float | None] = None
    sim: SimSection | None = None
    kbe: KbeSection | None = None
    diagnostics: list[DiagnosticConfig] = Field(default_factory=list)
    output_dir: str | None = None
    master_seed: int = 0

    @field_validator("drift", "mollify_n")
    @classmethod
    def _nonempty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("sweep list is empty")
        return v

    @model_validator(mode="after")
    def _sections_present(self):
        for i, d in enumerate(self.diagnostics):
            for need in DIAGNOSTIC_NEEDS[d.name]:
                if getattr(self, need) is None:
                    raise ValueError(f"diagnostics.{i} ({d.name}) needs a [{need}] section")
        return self

    @property
    def drift_list(self) -> list[DriftConfig]:
        return list(self.drift) if isinstance(self.drift, list) else [self.drift]

    @property
    def mollify_list(self) -> list:
        return list(self.mollify_n) if isinstance(self.mollify_n, list) else [self.mollify_n]

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or f"runs/{self.experiment}")


def derive_seed(master_seed: int, experiment: str, component: str) -> int:
    """``int.from_bytes(sha256(f"{master}:{experiment}:{component}")[:8], "little")``."""
    digest = hashlib.sha256(f"{master_seed}:{experiment}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def load_config_dict(path) -> dict:
    """Read a TOML or JSON document (JSON when the suffix is ``.json``)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return tomli.loads(text)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(data: dict, spec: str) -> dict:
    """Set ``a.b.c=value`` in a nested config dict; list items are addressed by index."""
    if "=" not in spec:
        raise ValueError(f"override {spec!r} is not of the form key=value")
    key, raw = spec.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(node, list):
            node = node[int(part)]
            continue
        if part not in node or node[part] is None:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    value = _parse_value(raw)
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return data


def parse_mollify(spec: str):
    """``"16"`` -> 16.0, ``"4,8,16"`` -> list, ``"none"`` -> None."""
    items = [s.strip() for s in spec.split(",") if s.strip()]
    if not items:
        raise ValueError("empty --mollify-n")
    vals = [None if s.lower() == "none" else float(s) for s in items]
    return vals if len(vals) > 1 else vals[0]


def format_validation_error(exc) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)
