"""Experiment configuration: presets, JSON documents and command-line overrides."""

import json
import os
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from utils.common import ConfigError, logger

PRESETS_PATH = os.path.join(os.path.dirname(__file__), "presets.yaml")
SCHEMA_VERSION = 1


class CurveSpec(BaseModel):
    """Curve selection."""

    family: str = Field("moment", description="Curve family: 'power', 'moment' or 'custom'")
    a: float = Field(3.0, description="Exponent of phi3 for power curves")
    b: float = Field(4.0, description="Exponent of phi4 for power curves")
    center: float = Field(0.75, description="Expansion point of custom power series")
    coefficients: Optional[List[List[float]]] = Field(
        None,
        description="Custom series coefficients [[phi3...], [phi4...]], lowest order first",
    )

    @field_validator("family")
    @classmethod
    def known_family(cls, value: str) -> str:
        if value not in ("power", "moment", "custom"):
            raise ValueError(f"Unsupported curve family: {value}")
        return value


class SampleBudget(BaseModel):
    """Quadrature and sampling budgets."""

    refinements: int = Field(2, description="Step halvings allowed on the x3/x4 axes", ge=0)
    tolerance: float = Field(1e-3, description="Relative halved-step tolerance", gt=0)
    qmc_samples: int = Field(1 << 16, description="Quasi-random moment samples", ge=1 << 16)
    ball_samples: int = Field(1 << 22, description="Ball samples for four-dimensional norms", ge=1 << 12)
    grid_max_N: int = Field(16, description="Largest N the grid method accepts at p=12", ge=2)


class ExperimentConfig(BaseModel):
    """Validated, fully merged experiment configuration."""

    schema_version: int = Field(SCHEMA_VERSION, description="Report schema version")
    preset: Optional[str] = Field(None, description="Preset the configuration started from")
    conjecture: bool = Field(False, description="Enforce the conjecture exponent convention")
    curve: CurveSpec = Field(default_factory=CurveSpec, description="Curve under study")
    curves: Optional[List[CurveSpec]] = Field(None, description="Curves for multi-curve commands")
    N: List[int] = Field(default_factory=lambda: [4, 6, 8], description="Scales N")
    M: List[int] = Field(default_factory=lambda: [64], description="Weyl-sum lengths M")
    p: float = Field(12, description="Moment order")
    alpha: float = Field(1.5, description="omega3 = [0, N^alpha]")
    beta: float = Field(1.5, description="omega4 = [0, N^beta]")
    alphas: Optional[List[float]] = Field(None, description="alpha grid for sweep-alpha")
    delta: Optional[float] = Field(None, description="Domain-split exponent")
    rho: float = Field(4.0, description="Oversample factor on non-periodic axes")
    c: float = Field(1.0, description="Window half-width of local moments")
    c_values: Optional[List[float]] = Field(None, description="Window half-widths for local-moment checks")
    k: int = Field(6, description="Half the number of variables in tuple counting", ge=1)
    interval: Optional[List[int]] = Field(None, description="Frequency interval [lo, hi]; default [N/2, N]")
    interval2: Optional[List[int]] = Field(None, description="Second interval for bilinear moments")
    method: str = Field("grid", description="Moment method: 'grid' or 'quasi-random'")
    trials: int = Field(100, description="Random trials", ge=1)
    jmax: int = Field(10, description="Largest dyadic scale of (l1, l2)", ge=0, le=14)
    theorem: str = Field("parabola", description="Decoupling ratio to measure")
    families: List[str] = Field(default_factory=lambda: ["one-hot", "random-signs"], description="Coefficient families")
    budget: SampleBudget = Field(default_factory=SampleBudget, description="Sampling budgets")
    thresholds: Dict[str, float] = Field(default_factory=dict, description="Overrides of assertion thresholds")
    seed: int = Field(0, description="Master seed")
    workers: int = Field(1, description="Worker threads", ge=1)
    out: str = Field("runs", description="Output directory")
    record_timings: bool = Field(False, description="Keep wall_ms in rows.csv (breaks byte-identical replay)")
    plan: Optional[Dict[str, int]] = Field(None, description="Explicit sampling plan {L1, L2, n3, n4} for the grid method")

    @field_validator("N", "M")
    @classmethod
    def positive_scales(cls, value: List[int]) -> List[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError("scales must be a non-empty list of positive integers")
        return value

    @field_validator("p")
    @classmethod
    def order_range(cls, value: float) -> float:
        if not 2 <= value <= 12:
            raise ValueError(f"p must lie in [2, 12], got {value}")
        return value

    @field_validator("rho")
    @classmethod
    def oversample(cls, value: float) -> float:
        if value < 1:
            raise ValueError(f"rho must be >= 1, got {value}")
        return value

    @field_validator("method")
    @classmethod
    def known_method(cls, value: str) -> str:
        if value not in ("grid", "quasi-random"):
            raise ValueError(f"Unsupported method: {value}")
        return value

    @model_validator(mode="after")
    def exponent_conventions(self) -> "ExperimentConfig":
        if self.conjecture:
            if not self.alpha >= self.beta >= 0:
                raise ValueError(f"conjecture convention needs alpha >= beta >= 0, got {self.alpha}, {self.beta}")
            target = self.p / 2 - 3
            if abs(self.alpha + self.beta - target) > 1e-9:
                raise ValueError(f"conjecture convention needs alpha + beta = p/2 - 3 = {target:g}")
        if self.delta is not None:
            lo, hi = 2 - 1.5 * self.beta, 1.8 - self.beta
            if not lo <= self.delta <= hi:
                raise ValueError(f"delta {self.delta} outside [{lo:g}, {hi:g}]")
        return self


def load_presets(path: str = PRESETS_PATH) -> Dict[str, Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)["presets"]


def deep_merge(base: Dict, override: Dict) -> Dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(item: str) -> Dict:
    """'budget.tolerance=1e-4' -> {'budget': {'tolerance': 1e-4}}; values parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested: Dict = {}
    cursor = nested
    parts = key.strip().split(".")
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[parts[-1]] = value
    return nested


def build_config(
    preset: Optional[str] = None,
    config_path: Optional[str] = None,
    overrides: Optional[List[str]] = None,
    flags: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """Merge presets < JSON document < --set overrides < flags < environment, then validate."""
    presets = load_presets()
    document: Dict = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                document = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {config_path}: {str(e)}")
    name = preset or document.get("preset")
    if name and name not in presets:
        raise ConfigError(f"Unknown preset: {name} (available: {', '.join(sorted(presets))})")

    merged = dict(presets.get("default", {}))
    if name:
        merged = deep_merge(merged, presets[name])
        merged["preset"] = name
    merged = deep_merge(merged, document)
    for item in overrides or []:
        merged = deep_merge(merged, parse_override(item))
    for key, value in (flags or {}).items():
        if value is not None:
            merged[key] = value
    if (flags or {}).get("workers") is None and os.getenv("EXPSUMLAB_WORKERS"):
        merged["workers"] = int(os.getenv("EXPSUMLAB_WORKERS"))
    if (flags or {}).get("out") is None and os.getenv("EXPSUMLAB_OUT"):
        merged["out"] = os.getenv("EXPSUMLAB_OUT")

    try:
        config = ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}")
    logger.info(f"⚙️ Configuration ready (preset={config.preset or 'default'}, seed={config.seed}, workers={config.workers})")
    return config
