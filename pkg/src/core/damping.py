"""
Step-size (damping) strategies for the modified Kacanov iteration.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..models.diffusion import AnalysisConstants
from ..utils.errors import ConfigurationError


class DampingKind(Enum):
    """How the damping parameter delta^n is chosen."""
    FIXED = "fixed"
    TAYLOR = "taylor"
    PREDICTION_CORRECTION = "prediction_correction"


@dataclass(frozen=True)
class DampingStrategy:
    """
    Damping strategy and its parameters.

    Attributes:
        kind: FIXED, TAYLOR or PREDICTION_CORRECTION
        delta: fixed delta (FIXED) or initial delta (PREDICTION_CORRECTION)
        sigma: correction factor in (1/2, 1)
        theta: decay parameter in (0, 1/2]
        delta_min: lower step bound; None resolves to alpha / (4 L_H)
        initial_p: initial exponent of the prediction-correction strategy
        energy_tolerance: absolute slack in the energy-decay tests
        max_retries: hard cap on shrink steps per outer iteration
        require_guarantee: reject FIXED deltas outside (0, 2 alpha / L_H)
        label: name used in traces and output files
    """
    kind: DampingKind
    delta: Optional[float] = None
    sigma: float = 0.9
    theta: float = 0.1
    delta_min: Optional[float] = None
    initial_p: int = -1
    energy_tolerance: float = 1e-12
    max_retries: int = 200
    require_guarantee: bool = False
    label: str = ""

    def __post_init__(self):
        if not 0.5 < self.sigma < 1.0:
            raise ConfigurationError(f"sigma must lie in (1/2, 1), got {self.sigma}")
        if not 0.0 < self.theta <= 0.5:
            raise ConfigurationError(f"theta must lie in (0, 1/2], got {self.theta}")
        if self.delta_min is not None and not self.delta_min > 0:
            raise ConfigurationError(f"delta_min must be positive, got {self.delta_min}")
        if self.kind is DampingKind.FIXED and (self.delta is None or not self.delta > 0):
            raise ConfigurationError(f"fixed damping needs a positive delta, got {self.delta}")
        if self.kind is DampingKind.PREDICTION_CORRECTION and self.delta is not None and not self.delta > 0:
            raise ConfigurationError(f"initial delta must be positive, got {self.delta}")
        if self.initial_p not in (-1, 1):
            raise ConfigurationError(f"initial_p must be -1 or +1, got {self.initial_p}")
        if self.energy_tolerance < 0:
            raise ConfigurationError("energy_tolerance must be non-negative")
        if self.max_retries < 1:
            raise ConfigurationError("max_retries must be at least 1")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self) -> str:
        if self.kind is DampingKind.FIXED:
            return "undamped" if self.delta == 1.0 else "fixed"
        return self.kind.value

    @classmethod
    def fixed(cls, delta: float, **kwargs) -> "DampingStrategy":
        return cls(kind=DampingKind.FIXED, delta=delta, **kwargs)

    @classmethod
    def undamped(cls, **kwargs) -> "DampingStrategy":
        """The classical Kacanov scheme, delta = 1."""
        return cls(kind=DampingKind.FIXED, delta=1.0, **kwargs)

    @classmethod
    def taylor(cls, **kwargs) -> "DampingStrategy":
        return cls(kind=DampingKind.TAYLOR, **kwargs)

    @classmethod
    def prediction_correction(cls, delta: float = 1.0, initial_p: int = -1, **kwargs) -> "DampingStrategy":
        return cls(kind=DampingKind.PREDICTION_CORRECTION, delta=delta, initial_p=initial_p, **kwargs)

    @property
    def is_adaptive(self) -> bool:
        return self.kind is not DampingKind.FIXED

    def resolve_delta_min(self, constants: AnalysisConstants) -> float:
        return self.delta_min if self.delta_min is not None else constants.delta_min

    def decay_constant(self, constants: AnalysisConstants) -> float:
        """C = theta * min{alpha, L_H}."""
        return self.theta * constants.decay_constant_base

    def validate_for(self, constants: AnalysisConstants) -> None:
        """Check parameters that depend on the model constants."""
        if (self.kind is DampingKind.FIXED and self.require_guarantee
                and not self.delta < constants.delta_max_admissible):
            raise ConfigurationError(
                f"fixed delta {self.delta} outside the guaranteed range "
                f"(0, {constants.delta_max_admissible:.6g})"
            )
        if self.kind is DampingKind.PREDICTION_CORRECTION:
            initial = self.delta if self.delta is not None else 1.0
            if initial < self.resolve_delta_min(constants):
                raise ConfigurationError(
                    f"initial delta {initial} below delta_min {self.resolve_delta_min(constants):.6g}"
                )


@dataclass(frozen=True)
class PredictionCorrectionState:
    """Carried between prediction-correction steps of one run."""
    delta: float = 1.0
    p: int = -1

    @classmethod
    def initial(cls, strategy: DampingStrategy) -> "PredictionCorrectionState":
        return cls(delta=strategy.delta if strategy.delta is not None else 1.0, p=strategy.initial_p)
