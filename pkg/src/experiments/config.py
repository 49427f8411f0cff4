"""
Experiment configuration: settings.ini defaults, key=value files and CLI flags.
"""

import configparser
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from ..core.damping import DampingStrategy
from ..core.linsolve import SolveConfig, SolverMethod
from ..core.mesh import MAX_LEVEL
from ..models.diffusion import MODEL_FACTORIES, AnalysisConstants
from ..utils.errors import ConfigurationError

DEFAULT_SETTINGS = Path(__file__).resolve().parents[2] / "config" / "settings.ini"

STRATEGIES = ("undamped", "fixed", "taylor", "prediction_correction")
REFERENCE_STARTS = ("auto", "zero", "descent")
SETTINGS_SECTIONS = ("experiment", "solver", "damping", "reference")

# flag-style spellings accepted in key=value files
KEY_ALIASES = {
    "model": "model_id",
    "tol": "tol_error",
    "out": "output_dir",
    "strategy": "strategies",
}


class ExperimentConfig(BaseModel):
    """One experiment: a model on one mesh level, run with several strategies."""

    model_config = ConfigDict(extra="forbid", frozen=True, protected_namespaces=())

    model_id: str = "mu1"
    level: int = 5
    strategies: List[str] = ["undamped", "taylor", "prediction_correction"]
    max_iters: int = 50
    tol_error: float = 1e-10
    sigma: float = 0.9
    theta: float = 0.1
    fixed_delta: Optional[float] = None
    solver: str = "cg"
    solver_tol: float = 1e-12
    output_dir: Path = Path("results")
    seed: int = 0
    ref_steps: int = 1000
    reference_start: str = "auto"
    use_cache: bool = True
    cache_dir: Optional[Path] = None
    workers: int = 1
    plots: bool = True

    @field_validator("model_id")
    @classmethod
    def _known_model(cls, value: str) -> str:
        if value not in MODEL_FACTORIES:
            raise ValueError(f"unknown model '{value}', expected one of {sorted(MODEL_FACTORIES)}")
        return value

    @field_validator("level")
    @classmethod
    def _level_range(cls, value: int) -> int:
        if not 0 <= value <= MAX_LEVEL:
            raise ValueError(f"level must lie in [0, {MAX_LEVEL}]")
        return value

    @field_validator("strategies", mode="before")
    @classmethod
    def _split_strategies(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [item for item in value.replace(",", " ").split() if item]
        return value

    @field_validator("strategies")
    @classmethod
    def _known_strategies(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one strategy is required")
        unknown = [name for name in value if name not in STRATEGIES]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}, expected a subset of {list(STRATEGIES)}")
        return list(dict.fromkeys(value))

    @field_validator("fixed_delta", "cache_dir", mode="before")
    @classmethod
    def _blank_is_none(cls, value: Any) -> Any:
        return None if isinstance(value, str) and not value.strip() else value

    @field_validator("reference_start")
    @classmethod
    def _known_start(cls, value: str) -> str:
        if value not in REFERENCE_STARTS:
            raise ValueError(f"reference_start must be one of {list(REFERENCE_STARTS)}")
        return value

    @field_validator("solver")
    @classmethod
    def _known_solver(cls, value: str) -> str:
        allowed = [method.value for method in SolverMethod]
        if value not in allowed:
            raise ValueError(f"solver must be one of {allowed}")
        return value

    @model_validator(mode="after")
    def _ranges(self) -> "ExperimentConfig":
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not self.tol_error > 0:
            raise ValueError("tol must be positive")
        if not 0.5 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (1/2, 1)")
        if not 0.0 < self.theta <= 0.5:
            raise ValueError("theta must lie in (0, 1/2]")
        if self.fixed_delta is not None and not self.fixed_delta > 0:
            raise ValueError("fixed_delta must be positive")
        if not 0.0 < self.solver_tol < 1.0:
            raise ValueError("solver_tol must lie in (0, 1)")
        if self.ref_steps < 0:
            raise ValueError("ref_steps must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        return self

    def solve_config(self) -> SolveConfig:
        return SolveConfig(method=self.solver, rel_tolerance=self.solver_tol)

    def build_strategies(self, constants: AnalysisConstants) -> List[DampingStrategy]:
        common = {"sigma": self.sigma, "theta": self.theta}
        built = []
        for name in self.strategies:
            if name == "undamped":
                built.append(DampingStrategy.undamped(**common))
            elif name == "fixed":
                delta = self.fixed_delta if self.fixed_delta is not None else constants.alpha / constants.lipschitz
                built.append(DampingStrategy.fixed(delta, label="fixed", **common))
            elif name == "taylor":
                built.append(DampingStrategy.taylor(**common))
            else:
                built.append(DampingStrategy.prediction_correction(**common))
        return built


def _normalise(entries: Mapping[str, Any]) -> Dict[str, Any]:
    return {KEY_ALIASES.get(key, key): value for key, value in entries.items()}


def load_settings(path: Optional[Union[str, Path]] = None) -> Tuple[Dict[str, str], Dict[str, str]]:
    """
    Read project defaults.

    Returns:
        (experiment defaults, logging section)
    """
    path = Path(path) if path is not None else DEFAULT_SETTINGS
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path.exists():
        parser.read(path)
    defaults: Dict[str, str] = {}
    for section in SETTINGS_SECTIONS:
        if parser.has_section(section):
            defaults.update(parser[section])
    logging_section = dict(parser["logging"]) if parser.has_section("logging") else {}
    return _normalise(defaults), logging_section


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a plain key=value file (``#`` comments allowed)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[experiment]\n" + text, source=str(path))
    except configparser.Error as e:
        raise ConfigurationError(f"malformed config file {path}: {e}") from e
    return _normalise(dict(parser["experiment"]))


def build_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    settings_path: Optional[Union[str, Path]] = None,
) -> ExperimentConfig:
    """settings.ini defaults < config file < explicit overrides (None values are ignored)."""
    merged: Dict[str, Any] = dict(load_settings(settings_path)[0])
    if config_file is not None:
        merged.update(read_config_file(config_file))
    if overrides:
        merged.update({key: value for key, value in _normalise(overrides).items() if value is not None})
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment configuration: {e}") from e
