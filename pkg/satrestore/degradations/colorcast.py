import numpy as np

from satrestore.degradations.base import BaseDegradation
from satrestore.errors import DegradationError


class ColorCast(BaseDegradation):
    kind = "color_cast"
    defaults = {"gains": (1.0, 1.0, 1.0)}

    def validate(self) -> None:
        gains = self.params["gains"]
        if not isinstance(gains, tuple) or len(gains) != 3:
            raise DegradationError("color_cast: gains needs exactly three values")
        if any(g < 0 for g in gains):
            raise DegradationError("color_cast: gains must be ≥ 0")

    def apply(self, img: np.ndarray) -> np.ndarray:
        gains = np.asarray(self.params["gains"], dtype=np.float64).reshape(3, 1, 1)
        return np.clip(img * gains, 0.0, 1.0)
