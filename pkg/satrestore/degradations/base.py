from abc import ABC, abstractmethod

import numpy as np

from satrestore.errors import DegradationError
from satrestore.models import DegradationSpec


class BaseDegradation(ABC):
    # Subclasses must set these class attributes
    kind: str = ""
    defaults: dict = {}

    def __init__(self, spec: DegradationSpec):
        """
        Args:
            spec: The parsed degradation spec. Parameters missing from spec.params
                  fall back to `defaults`, which are the neutral (identity) values.
        """
        unknown = sorted(set(spec.params) - set(self.defaults))
        if unknown:
            raise DegradationError(f"{self.kind}: unknown parameter(s) {', '.join(unknown)}")
        self.spec = spec
        self.params = {**self.defaults, **spec.params}
        self.validate()

    def validate(self) -> None:
        """Raise DegradationError when a parameter is outside its domain."""

    @abstractmethod
    def apply(self, img: np.ndarray) -> np.ndarray:
        """Degrade a float64 (3, H, W) array with values in [0, 1]."""
        ...
