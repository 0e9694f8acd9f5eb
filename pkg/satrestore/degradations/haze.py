import numpy as np

from satrestore.degradations.base import BaseDegradation
from satrestore.errors import DegradationError


class Haze(BaseDegradation):
    """Uniform atmospheric scattering: t * img + (1 - t) * airlight."""

    kind = "haze"
    defaults = {"t": 1.0, "airlight": 1.0}

    def validate(self) -> None:
        if not 0 < self.params["t"] <= 1:
            raise DegradationError("haze: t must lie in (0, 1]")
        if not 0 <= self.params["airlight"] <= 1:
            raise DegradationError("haze: airlight must lie in [0, 1]")

    def apply(self, img: np.ndarray) -> np.ndarray:
        t = self.params["t"]
        # Convex combination of values in [0, 1]; no clamp needed
        return t * img + (1.0 - t) * self.params["airlight"]
